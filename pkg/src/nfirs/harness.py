"""Monte Carlo rate evaluation, benchmark schemes and scripted experiments.

Rates use MRT precoders ``w_k = sqrt(p_k) h_k``. Every estimator draws
its Rician fading from the ``fading`` child of the seed and its random
phases from the ``phases`` child, so schemes evaluated with the same seed
see identical fading realisations (common random numbers) and
per-sample dominance relations hold exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import platform
import subprocess
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .channel import complex_normal, exact_bs_irs, user_links
from .config import Experiment, ScenarioConfig, dbm_to_watts, db_to_linear
from .geometry import SystemGeometry, direction_cosines
from .io import write_json, write_series_csv
from .metrics import (
    McEstimate,
    edof_samples,
    g_jk_exact,
    g_jk_monte_carlo,
    g_jk_theorem1,
    random_phases,
)
from .moments import build_moment_set, statistics
from .optimizer import run_algorithm1

MC_BATCH = 500

# (N_u, N_v) used when an experiment asks for a total element count N
IRS_FACTORIZATION = {200: (10, 20), 400: (20, 20), 600: (20, 30), 1600: (40, 40)}

# extra users beyond the four reference users sit on this arc (z = 0)
ARC_RADIUS_M = 60.0
ARC_DEGREES = (40.0, 85.0)

NOTES = {
    "even_counts": "even M / N_u / N_v use a centred half-integer index grid",
    "irs_factorization": "N -> (N_u, N_v): " + ", ".join(
        f"{n}=({u},{v})" for n, (u, v) in IRS_FACTORIZATION.items()
    ),
    "kappa_default_db": 10.0,
    "extra_users": f"users beyond K=4 on a {ARC_RADIUS_M:g} m arc, azimuth "
    f"{ARC_DEGREES[0]:g}-{ARC_DEGREES[1]:g} deg, z=0",
    "path_gain": "free-space amplitude lambda/(4 pi d) on both hops",
}


# -- sampling ---------------------------------------------------------------


def _as_F(geom_or_F) -> np.ndarray:
    if isinstance(geom_or_F, SystemGeometry):
        return exact_bs_irs(geom_or_F).F
    return np.asarray(geom_or_F, dtype=complex)


def _streams(seed):
    # children built from (entropy, key) directly: spawn() would mutate a shared SeedSequence
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    fading, phases = (
        np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + (i,)) for i in (0, 1)
    )
    return np.random.default_rng(fading), np.random.default_rng(phases)


def _fading_batches(links, samples: int, rng, batch: int = MC_BATCH):
    """Yield Rician IRS-user channels of shape ``(S, K, N)``."""
    los = np.array([link.los_steering for link in links])
    alpha = np.array([link.alpha for link in links])
    beta = np.array([link.beta for link in links])
    los_amp = np.sqrt(alpha * beta)[:, None] * los
    nlos_amp = np.sqrt(alpha * (1.0 - beta))
    K, N = los.shape
    for start in range(0, samples, batch):
        size = min(batch, samples - start)
        G = np.broadcast_to(los_amp, (size, K, N)).copy()
        for k in range(K):
            if nlos_amp[k] > 0:
                G[:, k, :] += nlos_amp[k] * complex_normal(rng, (size, N))
        yield G


def _batch_rates(H: np.ndarray, p: np.ndarray, sigmas: np.ndarray, interference: bool) -> np.ndarray:
    """Sum-rate per sample for MRT; ``H`` is ``(S, K, M)``, ``p`` is ``(K,)`` or ``(S, K)``."""
    gram = np.einsum("skm,sjm->skj", H.conj(), H)
    X = np.abs(gram) ** 2 * np.broadcast_to(p, (H.shape[0], H.shape[1]))[:, None, :]
    K = H.shape[1]
    signal = X[:, np.arange(K), np.arange(K)]
    if interference:
        interf = np.where(np.eye(K, dtype=bool)[None], 0.0, X).sum(axis=2)
    else:
        interf = 0.0
    sinr = signal / (interf + sigmas)
    return np.log2(1.0 + sinr).sum(axis=1)


def _check(samples, sigmas, K):
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (K,))
    if np.any(sigmas <= 0):
        raise ValueError("noise powers must be positive")
    return sigmas


def rate_samples(geom_or_F, links, theta, p, sigmas, samples: int, seed=None, interference: bool = True):
    """Per-sample instantaneous sum-rates at fixed ``(theta, p)``."""
    F = _as_F(geom_or_F)
    sigmas = _check(samples, sigmas, len(links))
    p = np.asarray(p, dtype=float)
    theta = np.asarray(theta)
    fading, _ = _streams(seed)
    out = [
        _batch_rates((theta * G) @ F.T, p, sigmas, interference)
        for G in _fading_batches(links, samples, fading)
    ]
    return np.concatenate(out)


def _estimate(values: np.ndarray) -> McEstimate:
    n = values.size
    stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return McEstimate(float(values.mean()), stderr, n)


def mc_ergodic_rate(geom_or_F, links, theta, p, sigmas, samples: int, seed=None) -> McEstimate:
    """Monte Carlo ergodic sum-rate (bits/s/Hz) under MRT; unpacks as ``(mean, stderr)``."""
    return _estimate(rate_samples(geom_or_F, links, theta, p, sigmas, samples, seed))


def interference_free_rate(geom_or_F, links, theta, p, sigmas, samples: int, seed=None) -> McEstimate:
    """Same draws as :func:`mc_ergodic_rate` with the interference sum removed."""
    return _estimate(
        rate_samples(geom_or_F, links, theta, p, sigmas, samples, seed, interference=False)
    )


@dataclass(frozen=True)
class UniformPower:
    """Each user gets an equal share of the average transmit budget.

    ``p_k = p_max / (K E[h_k^H h_k])`` so that ``sum_k p_k E_k = p_max``.
    """

    p_max: float

    def allocate(self, first: np.ndarray) -> np.ndarray:
        return self.p_max / (first.shape[-1] * first)


def random_phase_samples(geom_or_F, links, p_rule, sigmas, samples: int, seed=None) -> np.ndarray:
    F = _as_F(geom_or_F)
    sigmas = _check(samples, sigmas, len(links))
    fading, phase_rng = _streams(seed)
    los = np.array([link.los_steering for link in links])
    alpha = np.array([link.alpha for link in links])
    beta = np.array([link.beta for link in links])
    frob = float(np.sum(np.abs(F) ** 2))
    out = []
    for G in _fading_batches(links, samples, fading):
        theta = random_phases(phase_rng, (G.shape[0], F.shape[1]))
        los_img = (theta[:, None, :] * los[None]) @ F.T
        first = alpha * (1 - beta) * frob + alpha * beta * np.sum(np.abs(los_img) ** 2, axis=2)
        p = p_rule.allocate(first)
        H = (theta[:, None, :] * G) @ F.T
        out.append(_batch_rates(H, p, sigmas, True))
    return np.concatenate(out)


def random_phase_baseline(geom_or_F, links, p_rule, sigmas, samples: int, seed=None) -> McEstimate:
    """Ergodic rate averaged over random phases and fading draws.

    ``p_rule`` maps the per-draw average channel powers ``(S, K)`` to
    powers, e.g. :class:`UniformPower`.
    """
    return _estimate(random_phase_samples(geom_or_F, links, p_rule, sigmas, samples, seed))


# -- scenario helpers ---------------------------------------------------------


def factor_irs(N: int) -> tuple[int, int]:
    if N in IRS_FACTORIZATION:
        return IRS_FACTORIZATION[N]
    n_u = max(d for d in range(1, math.isqrt(N) + 1) if N % d == 0)
    return n_u, N // n_u


def arc_users(K: int, base: Sequence[Sequence[float]]) -> tuple[tuple[float, ...], ...]:
    """First ``len(base)`` users, then extra users spread on a fixed arc."""
    users = [tuple(map(float, u)) for u in base[:K]]
    extra = K - len(users)
    if extra > 0:
        angles = np.deg2rad(np.linspace(*ARC_DEGREES, extra))
        users += [
            (ARC_RADIUS_M * math.cos(a), ARC_RADIUS_M * math.sin(a), 0.0) for a in angles
        ]
    return tuple(users)


def scenario_links(geom: SystemGeometry, kappas_db: Sequence[float]):
    return user_links(geom, kappas=[db_to_linear(k) for k in kappas_db])


@dataclass
class RunResult:
    sweep_var: str
    sweep_axis: list
    series: dict
    stderr: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sweep_axis)
        for name, values in {**self.series, **self.stderr}.items():
            if len(values) != n:
                raise ValueError(f"series {name!r} has {len(values)} points, axis has {n}")
        unknown = set(self.stderr) - set(self.series)
        if unknown:
            raise ValueError(f"stderr for unknown series {sorted(unknown)}")

    def header(self) -> list[str]:
        cols = ["sweep_var", "value"]
        for name in self.series:
            cols.append(name)
            if name in self.stderr:
                cols.append(f"{name}_stderr")
        return cols

    def columns(self) -> list[list]:
        cols = [[self.sweep_var] * len(self.sweep_axis), list(self.sweep_axis)]
        for name, values in self.series.items():
            cols.append(list(values))
            if name in self.stderr:
                cols.append(list(self.stderr[name]))
        return cols


# -- experiments --------------------------------------------------------------


def _optimize_point(config: ScenarioConfig, geom, kappas_db, p_max_dbm, seed, warnings):
    F = exact_bs_irs(geom).F
    links = scenario_links(geom, kappas_db)
    ms = build_moment_set(F, links)
    sigmas = np.array(config.noise_watts)
    state = run_algorithm1(
        ms, sigmas, dbm_to_watts(p_max_dbm), epsilon=config.epsilon,
        max_outer=config.max_outer, seed=seed,
    )
    if state.warning:
        warnings.append(f"{geom.N_u}x{geom.N_v}, P={p_max_dbm} dBm: {state.warning}")
    return F, links, ms, sigmas, state


def _sparsity_pairs(config):
    return config.sparsity_pairs or ((1.0, 1.0), (config.geometry.zeta_bs, config.geometry.zeta_irs))


def _pair_name(prefix, pair):
    return f"{prefix}_zb{pair[0]:g}_zi{pair[1]:g}"


def _edof_point(geom, config, seed):
    F = exact_bs_irs(geom).F
    G = np.column_stack([link.los_channel() for link in user_links(geom)])
    vals = edof_samples(F, G, config.phase_samples, seed)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def _gjk_sweep(config, seeds, warnings):
    axis = list(config.sweep) or [float(v) for v in np.arange(-3.0, 6.01, 0.5)]
    exact, theory, mc, mc_err = [], [], [], []
    for i, ly in enumerate(axis):
        geom = config.geometry.with_center((-3.0, ly, 3.0))
        F = exact_bs_irs(geom).F
        ones = np.ones(geom.N, dtype=complex)
        exact.append(g_jk_exact(F, ones, ones).g_jk)
        theory.append(g_jk_theorem1(geom).g_jk)
        res = g_jk_monte_carlo(F, ones, ones, config.phase_samples, seeds(i))
        mc.append(res.g_jk)
        mc_err.append(res.stderr)
    series = {"g_jk_exact": exact, "g_jk_theorem1": theory, "g_jk_monte_carlo": mc}
    return RunResult("l_y_m", axis, series, {"g_jk_monte_carlo": mc_err})


def _edof_sweep(config, seeds, warnings):
    base = config.geometry
    mu = np.array(direction_cosines(base))
    axis = list(config.sweep) or [0.5, 0.75, base.distance, 1.5, 2.0, 3.0, 5.0]
    series, errs = {}, {}
    for pair in _sparsity_pairs(config):
        name = _pair_name("edof", pair)
        series[name], errs[name] = [], []
        for i, dist in enumerate(axis):
            geom = dataclasses.replace(
                base, zeta_bs=pair[0], zeta_irs=pair[1], irs_center=tuple(dist * mu)
            )
            mean, se = _edof_point(geom, config, seeds(i))
            series[name].append(mean)
            errs[name].append(se)
    return RunResult("irs_distance_m", axis, series, errs)


def _edof_vs_irs_size(config, seeds, warnings):
    axis = list(config.irs_sizes or config.sweep) or [10, 20, 30, 40]
    series, errs = {}, {}
    for pair in _sparsity_pairs(config):
        name = _pair_name("edof", pair)
        series[name], errs[name] = [], []
        for i, n in enumerate(axis):
            geom = dataclasses.replace(
                config.geometry, zeta_bs=pair[0], zeta_irs=pair[1], N_u=int(n), N_v=int(n)
            )
            mean, se = _edof_point(geom, config, seeds(i))
            series[name].append(mean)
            errs[name].append(se)
    return RunResult("N_u", [int(n) for n in axis], series, errs)


def _floor_sweep(config, seeds, warnings):
    sizes = list(config.irs_sizes or config.sweep) or [5, 10, 20, 40, 80, 160]
    values = []
    for n in sizes:
        geom = dataclasses.replace(config.geometry, N_u=int(n), N_v=int(n))
        values.append(g_jk_theorem1(geom).g_jk)
    axis = [int(n) ** 2 for n in sizes]
    return RunResult("N", axis, {"g_jk_theorem1": values})


def _rate_vs_power(config, seeds, warnings):
    axis = list(config.sweep) or [0.0, 5.0, 10.0, 15.0, 20.0, 25.0]
    approx, mc, mc_err = [], [], []
    for i, p_dbm in enumerate(axis):
        F, links, ms, sigmas, state = _optimize_point(
            config, config.geometry, config.rician_kappas_db, p_dbm, config.seed, warnings
        )
        approx.append(statistics(ms, state.phases, state.p, sigmas).sum_rate)
        est = mc_ergodic_rate(F, links, state.phases, state.p, sigmas, config.mc_samples, seeds(i))
        mc.append(est.mean)
        mc_err.append(est.stderr)
    series = {"approx_sum_rate": approx, "mc_ergodic_rate": mc}
    return RunResult("p_max_dbm", axis, series, {"mc_ergodic_rate": mc_err})


def scheme_rates(config: ScenarioConfig, kappa_db=None, p_max_dbm=None, warnings=None, mc_seed=None):
    """Optimised, interference-free and random-phase rates at one operating point.

    All three Monte Carlo estimates share ``mc_seed`` (common random numbers).
    """
    warnings = [] if warnings is None else warnings
    kappas = config.rician_kappas_db if kappa_db is None else [kappa_db] * config.geometry.K
    p_dbm = config.p_max_dbm if p_max_dbm is None else p_max_dbm
    mc_seed = config.seed if mc_seed is None else mc_seed
    F, links, ms, sigmas, state = _optimize_point(
        config, config.geometry, kappas, p_dbm, config.seed, warnings
    )
    n = config.mc_samples
    return {
        "approx_sum_rate": McEstimate(statistics(ms, state.phases, state.p, sigmas).sum_rate, 0.0, 0),
        "optimized": mc_ergodic_rate(F, links, state.phases, state.p, sigmas, n, mc_seed),
        "interference_free": interference_free_rate(F, links, state.phases, state.p, sigmas, n, mc_seed),
        "random_phase": random_phase_baseline(
            F, links, UniformPower(dbm_to_watts(p_dbm)), sigmas, n, mc_seed
        ),
        "state": state,
    }


def _rate_vs_kappa(config, seeds, warnings):
    axis = list(config.sweep) or [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0]
    names = ("optimized", "interference_free", "random_phase")
    series = {"approx_sum_rate": []} | {n: [] for n in names}
    errs = {n: [] for n in names}
    for kappa_db in axis:
        # same fading seed at every kappa keeps the curves comparable point to point
        res = scheme_rates(config, kappa_db, warnings=warnings, mc_seed=seeds(0))
        series["approx_sum_rate"].append(res["approx_sum_rate"].mean)
        for n in names:
            series[n].append(res[n].mean)
            errs[n].append(res[n].stderr)
    return RunResult("kappa_db", axis, series, errs)


def _convergence(config, seeds, warnings):
    sizes = [int(v) for v in (config.sweep or (200, 600))]
    traces = {}
    for N in sizes:
        n_u, n_v = factor_irs(N)
        geom = dataclasses.replace(config.geometry, N_u=n_u, N_v=n_v)
        *_, state = _optimize_point(
            config, geom, config.rician_kappas_db, config.p_max_dbm, config.seed, warnings
        )
        traces[f"objective_N{N}"] = list(state.objective_trace)
    length = max(len(t) for t in traces.values())
    # converged traces are held at their final value
    series = {k: t + [t[-1]] * (length - len(t)) for k, t in traces.items()}
    result = RunResult("outer_iteration", list(range(length)), series)
    result.metadata["trace_lengths"] = {k: len(t) for k, t in traces.items()}
    return result


EXPERIMENTS: dict[Experiment, Callable] = {
    Experiment.GJK_SWEEP: _gjk_sweep,
    Experiment.EDOF_SWEEP: _edof_sweep,
    Experiment.RATE_VS_POWER: _rate_vs_power,
    Experiment.RATE_VS_KAPPA: _rate_vs_kappa,
    Experiment.CONVERGENCE: _convergence,
    Experiment.EDOF_VS_IRS_SIZE: _edof_vs_irs_size,
    Experiment.FLOOR_SWEEP: _floor_sweep,
}


def point_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Independent substream for sweep point ``index``."""
    return np.random.SeedSequence(seed, spawn_key=(index,))


def run_experiment(config: ScenarioConfig) -> RunResult:
    try:
        runner = EXPERIMENTS[Experiment(config.experiment)]
    except (KeyError, ValueError):
        raise ValueError(f"unknown experiment {config.experiment!r}") from None
    warnings: list[str] = []
    start = time.perf_counter()
    result = runner(config, lambda i: point_seed(config.seed, i), warnings)
    result.metadata.update(
        {
            "experiment": Experiment(config.experiment).value,
            "seed": config.seed,
            "config": config.raw,
            "defaults_filled": list(config.defaults_used),
            "notes": NOTES,
            "warnings": warnings,
            "version": version_string(),
            "wall_time_s": time.perf_counter() - start,
        }
    )
    return result


# -- persistence --------------------------------------------------------------


def version_string() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5, check=True,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+g{rev}" if rev else __version__


def seed_hash(seed: int) -> str:
    return hashlib.sha256(str(seed).encode()).hexdigest()[:8]


def save_result(result: RunResult, out_dir, timestamp: datetime | None = None) -> tuple[Path, Path]:
    """Write ``<experiment>_<timestamp>_<seedhash>.{csv,json}`` into ``out_dir``.

    Timestamps and host details go only into the JSON manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timestamp = timestamp or datetime.now(timezone.utc)
    stem = (
        f"{result.metadata.get('experiment', 'run')}_"
        f"{timestamp.strftime('%Y%m%dT%H%M%SZ')}_{seed_hash(result.metadata.get('seed', 0))}"
    )
    csv_path = out_dir / f"{stem}.csv"
    json_path = out_dir / f"{stem}.json"
    write_series_csv(csv_path, result.header(), result.columns())
    manifest = dict(result.metadata)
    manifest.update(
        {
            "timestamp": timestamp.isoformat(),
            "host": platform.node(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "csv": csv_path.name,
            "series": list(result.series),
        }
    )
    write_json(json_path, manifest)
    return csv_path, json_path
