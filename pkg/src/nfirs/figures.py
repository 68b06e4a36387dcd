"""Pre-baked scenarios behind ``nfirs reproduce figN`` and their pass/fail checks.

Each figure is one or more configs (overrides on the built-in defaults)
plus a check function that inspects the resulting :class:`RunResult` list
and returns ``(label, passed, detail)`` tuples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ScenarioConfig, from_dict
from .harness import RunResult


@dataclass(frozen=True)
class Figure:
    description: str
    runs: tuple[tuple[str, dict], ...]
    checks: Callable[[list[RunResult], list[ScenarioConfig]], list[tuple[str, bool, str]]]

    def configs(self, extra_overrides=()) -> list[ScenarioConfig]:
        return [from_dict(data, extra_overrides) for _, data in self.runs]


def _geom(**kw):
    return {"geometry": kw}


def _merge(*parts):
    out: dict = {}
    for part in parts:
        for section, body in part.items():
            out.setdefault(section, {}).update(body)
    return out


def _idx(values, target):
    return int(np.argmin(np.abs(np.asarray(values, dtype=float) - target)))


def _fig2_checks(results, configs):
    r = results[0]
    dense, sparse = r.series["edof_zb1_zi1"], r.series["edof_zb3_zi6"]
    i = _idx(r.sweep_axis, configs[0].geometry.distance)
    return [
        ("sparse E[EDoF] >= 3.0 at the reference placement", sparse[i] >= 3.0, f"{sparse[i]:.3f}"),
        (
            "sparse above dense at every distance",
            all(s > d for s, d in zip(sparse, dense)),
            f"min gap {min(s - d for s, d in zip(sparse, dense)):.3f}",
        ),
        ("sparse gain shrinks with distance", sparse[-1] < sparse[i], f"{sparse[-1]:.3f} < {sparse[i]:.3f}"),
    ]


def _fig3_checks(results, configs):
    out = []
    for r, c in zip(results, configs):
        tag = f"zeta=({c.geometry.zeta_bs:g},{c.geometry.zeta_irs:g})"
        ex, th = np.array(r.series["g_jk_exact"]), np.array(r.series["g_jk_theorem1"])
        rel = float(np.max(np.abs(th - ex) / ex))
        out.append((f"{tag}: closed form vs exact within 5%", rel <= 0.05, f"max rel {rel:.4f}"))
        if c.geometry.zeta_bs == 1 and c.geometry.zeta_irs == 1:
            out.append(("dense: min g_jk > 0.75", float(ex.min()) > 0.75, f"{ex.min():.4f}"))
    return out


def _fig4_checks(results, configs):
    r = results[0]
    approx, mc = np.array(r.series["approx_sum_rate"]), np.array(r.series["mc_ergodic_rate"])
    rel = float(np.max(np.abs(approx - mc) / mc))
    return [
        ("approx within 10% of Monte Carlo", rel <= 0.10, f"max rel {rel:.4f}"),
        ("rate non-decreasing in P_max", bool(np.all(np.diff(mc) >= -3 * np.max(r.stderr["mc_ergodic_rate"]))), ""),
    ]


def _kappa_checks(results, configs, labels):
    out = []
    for r, label in zip(results, labels):
        opt, rnd, free = (np.array(r.series[n]) for n in ("optimized", "random_phase", "interference_free"))
        se = {n: np.array(r.stderr[n]) for n in r.stderr}
        gap_rnd = opt - rnd - 3 * np.hypot(se["optimized"], se["random_phase"])
        rel_free = float(np.max((free - opt) / opt))
        out += [
            (f"{label}: optimized beats random by > 3 stderr", bool(np.all(gap_rnd > 0)), ""),
            (f"{label}: interference-free above optimized", bool(np.all(free >= opt)), ""),
            (f"{label}: interference-free gap below 15%", rel_free < 0.15, f"{rel_free:.4f}"),
            (
                f"{label}: optimized non-decreasing in kappa",
                bool(np.all(np.diff(opt) >= -3 * np.max(se["optimized"]))),
                "",
            ),
        ]
    return out


def _fig7_checks(results, configs):
    r = results[0]
    small, large = r.series["objective_N200"], r.series["objective_N600"]
    mono = all(np.all(np.diff(r.series[k]) >= -1e-6) for k in r.series)
    return [
        ("objective monotone per outer iteration", mono, ""),
        ("larger N converges higher", large[-1] > small[-1], f"{large[-1]:.3f} > {small[-1]:.3f}"),
    ]


def _fig8_checks(results, configs):
    r = results[0]
    dense, sparse = r.series["edof_zb1_zi1"], r.series["edof_zb3_zi6"]
    return [
        ("sparse E[EDoF] increases with IRS size", bool(np.all(np.diff(sparse) > 0)), ""),
        (f"sparse E[EDoF] >= 3.0 at N_u={r.sweep_axis[-1]}", sparse[-1] >= 3.0, f"{sparse[-1]:.3f}"),
        ("dense below sparse", all(d < s for d, s in zip(dense, sparse)), ""),
    ]


_SPARSE = {"zeta_bs": 3.0, "zeta_irs": 6.0}
_N1600 = _geom(N_u=40, N_v=40, **_SPARSE)

FIGURES: dict[str, Figure] = {
    "fig2": Figure(
        "E[EDoF] versus IRS distance for several sparsity pairs (N=1600)",
        (("edof", _merge(_N1600, {"run": {
            "experiment": "EdofSweep", "sparsity_pairs": [[1.0, 1.0], [3.0, 3.0], [3.0, 6.0]],
        }})),),
        _fig2_checks,
    ),
    "fig3": Figure(
        "g_jk versus l_y with the IRS at (-3, l_y, 3) m (N=1600)",
        tuple(
            (f"zeta_{zb:g}_{zi:g}", _merge(_geom(N_u=40, N_v=40, zeta_bs=zb, zeta_irs=zi), {"run": {
                "experiment": "GjkSweep", "phase_samples": 500,
            }}))
            for zb, zi in ((1.0, 1.0), (3.0, 6.0))
        ),
        _fig3_checks,
    ),
    "fig4": Figure(
        "approximate and Monte Carlo sum-rate versus P_max (K=4, N=400)",
        (("rate_vs_power", {"run": {"experiment": "RateVsPower", "sweep": [0.0, 10.0, 20.0, 30.0]}}),),
        _fig4_checks,
    ),
    "fig5": Figure(
        "sum-rate versus kappa for P_max in {10, 20} dBm (N=600)",
        tuple(
            (f"pmax_{p:g}", _merge(_geom(N_u=20, N_v=30), {"run": {
                "experiment": "RateVsKappa", "p_max_dbm": p, "sweep": [-10.0, 0.0, 10.0, 20.0],
            }}))
            for p in (10.0, 20.0)
        ),
        lambda res, cfg: _kappa_checks(res, cfg, ["P_max=10 dBm", "P_max=20 dBm"]),
    ),
    "fig6": Figure(
        "sum-rate versus kappa for N in {200, 600} (P_max=15 dBm)",
        tuple(
            (f"N_{n_u * n_v}", _merge(_geom(N_u=n_u, N_v=n_v), {"run": {
                "experiment": "RateVsKappa", "sweep": [-10.0, 0.0, 10.0, 20.0],
            }}))
            for n_u, n_v in ((10, 20), (20, 30))
        ),
        lambda res, cfg: _kappa_checks(res, cfg, ["N=200", "N=600"]),
    ),
    "fig7": Figure(
        "optimizer objective per outer iteration for N in {200, 600}",
        (("convergence", {"run": {"experiment": "Convergence", "sweep": [200.0, 600.0]}}),),
        _fig7_checks,
    ),
    "fig8": Figure(
        "E[EDoF] versus IRS size N_u=N_v at the reference placement",
        (("edof_size", {"run": {
            "experiment": "EdofVsIrsSize", "irs_sizes": [10, 20, 30, 40],
            "sparsity_pairs": [[1.0, 1.0], [3.0, 6.0]],
        }}),),
        _fig8_checks,
    ),
}
