"""Inter-user correlation, effective degrees of freedom and favorable propagation.

Closed forms are paired with Monte Carlo estimators over i.i.d. uniform
IRS phases so each can be checked against brute-force sampling. Monte
Carlo estimators report standard errors; reduction order is fixed by the
batch layout, so results are reproducible under a seed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geometry import SystemGeometry, lag_phase

KERNEL_SINGULAR_TOL = 1e-9


class Method(enum.Enum):
    EXACT_LEMMA1 = "exact_lemma1"
    THEOREM1 = "theorem1"
    PROP2 = "prop2"
    COROLLARY_SQUARE = "corollary_square"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class FavorablePropagationResult:
    g_jk: float
    method: Method
    variance: float | None = None
    denom: float | None = None
    stderr: float | None = None


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    samples: int

    def __iter__(self):
        # unpacks as (mean, stderr)
        return iter((self.mean, self.stderr))


def random_phases(rng: np.random.Generator, shape) -> np.ndarray:
    return np.exp(2j * np.pi * rng.random(shape))


def correlation_coeff(h_j: np.ndarray, h_k: np.ndarray) -> float:
    nj, nk = np.linalg.norm(h_j), np.linalg.norm(h_k)
    if nj == 0 or nk == 0:
        raise ValueError("correlation undefined for a zero vector")
    return float(min(1.0, abs(np.vdot(h_j, h_k)) / (nj * nk)))


def edof(H: np.ndarray) -> float:
    """``(tr(H H^H) / ||H H^H||_F)^2`` for ``H`` of shape ``(M, K)``.

    Evaluated through the ``K x K`` Gram matrix, which has the same trace
    and Frobenius norm as ``H H^H``.
    """
    gram = H.conj().T @ H
    fro = np.linalg.norm(gram)
    if fro == 0:
        raise ValueError("EDoF undefined for a zero channel matrix")
    return float((np.trace(gram).real / fro) ** 2)


def _edof_batch(H: np.ndarray) -> np.ndarray:
    # H: (S, M, K)
    gram = np.einsum("smk,smj->skj", H.conj(), H)
    tr = np.einsum("skk->s", gram).real
    fro = np.sqrt(np.einsum("skj,skj->s", gram.conj(), gram).real)
    return (tr / fro) ** 2


def edof_samples(F: np.ndarray, G: np.ndarray, samples: int, seed=None, batch: int = 64) -> np.ndarray:
    """EDoF of ``H = F diag(theta) G`` over i.i.d. uniform random phases.

    ``G`` has shape ``(N, K)``: column ``k`` is the IRS-user channel.
    """
    rng = np.random.default_rng(seed)
    N = F.shape[1]
    out = np.empty(samples)
    for start in range(0, samples, batch):
        stop = min(samples, start + batch)
        theta = random_phases(rng, (stop - start, N))
        H = np.einsum("mn,snk->smk", F, theta[:, :, None] * G[None, :, :])
        out[start:stop] = _edof_batch(H)
    return out


def expected_edof(geom_or_F, links, samples: int, seed=None) -> McEstimate:
    """Mean EDoF over random IRS phases with LoS IRS-user channels.

    ``geom_or_F`` is either a :class:`SystemGeometry` (exact BS-IRS channel
    is built) or a precomputed ``F``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if isinstance(geom_or_F, SystemGeometry):
        from .channel import exact_bs_irs

        F = exact_bs_irs(geom_or_F).F
    else:
        F = np.asarray(geom_or_F)
    G = np.column_stack([link.los_channel() for link in links])
    vals = edof_samples(F, G, samples, seed)
    stderr = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return McEstimate(float(vals.mean()), stderr, samples)


def _gram_column_power(F: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(F) ** 2, axis=0)


def variance_lemma1(F: np.ndarray, g_j: np.ndarray, g_k: np.ndarray, block: int = 512) -> float:
    """Closed-form variance of ``h_j^H h_k`` under i.i.d. uniform phases.

    Sums ``|g_j[n1]|^2 |g_k[n2]|^2 |[F^H F]_{n1,n2}|^2`` over ``n1 != n2``,
    building the Gram matrix a row block at a time.
    """
    F = np.asarray(F)
    wj = np.abs(g_j) ** 2
    wk = np.abs(g_k) ** 2
    N = F.shape[1]
    total = 0.0
    for start in range(0, N, block):
        stop = min(N, start + block)
        gram = np.abs(F[:, start:stop].conj().T @ F) ** 2
        rows = np.arange(stop - start)
        gram[rows, rows + start] = 0.0
        total += float(wj[start:stop] @ gram @ wk)
    return total


def expected_power(F: np.ndarray, g: np.ndarray) -> float:
    """``E[||F diag(theta) g||^2]`` over uniform phases."""
    return float(np.sum(np.abs(g) ** 2 * _gram_column_power(F)))


def expected_inner_product(F: np.ndarray, g_j: np.ndarray, g_k: np.ndarray) -> complex:
    return complex(np.sum(g_j.conj() * g_k * _gram_column_power(F)))


def g_jk_exact(F: np.ndarray, g_j: np.ndarray, g_k: np.ndarray) -> FavorablePropagationResult:
    var = variance_lemma1(F, g_j, g_k)
    denom = expected_power(F, g_j) * expected_power(F, g_k)
    return FavorablePropagationResult(var / denom, Method.EXACT_LEMMA1, var, denom)


def dirichlet_kernel(M: int, x):
    """Squared Dirichlet kernel ``(sin(Mx/2) / sin(x/2))^2``.

    Where ``|sin(x/2)| < 1e-9`` the removable singularity is replaced by its
    limit ``M^2``.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    x = np.asarray(x, dtype=float)
    half = np.sin(x / 2.0)
    singular = np.abs(half) < KERNEL_SINGULAR_TOL
    safe = np.where(singular, 1.0, half)
    val = np.where(singular, float(M * M), (np.sin(M * x / 2.0) / safe) ** 2)
    return val if val.ndim else float(val)


def lag_weights(N_u: int, N_v: int):
    """Lag grids ``s, t`` and multiplicities ``(N_u-|s|)(N_v-|t|)``."""
    s = np.arange(-(N_u - 1), N_u)
    t = np.arange(-(N_v - 1), N_v)
    S, T = np.meshgrid(s, t, indexing="ij")
    W = (N_u - np.abs(S)) * (N_v - np.abs(T))
    return S, T, W.astype(float)


def g_jk_theorem1(geom: SystemGeometry) -> FavorablePropagationResult:
    S, T, W = lag_weights(geom.N_u, geom.N_v)
    kern = dirichlet_kernel(geom.M, lag_phase(geom, S, T))
    value = float(np.sum(W * kern)) / (geom.M**2 * geom.N**2)
    return FavorablePropagationResult(value, Method.THEOREM1)


def g_jk_prop2(N_u: int, N_v: int) -> float:
    n_min = min(N_u, N_v)
    s = np.arange(-(n_min - 1), n_min)
    total = int(np.sum((N_u - np.abs(s)) * (N_v - np.abs(s))))
    return total / float(N_u * N_v) ** 2


def g_jk_corollary_square(N: int) -> float:
    root = math.isqrt(N)
    if N < 1 or root * root != N:
        raise ValueError("N must be a perfect square")
    return (2 * N + 1) / (3.0 * N**1.5)


def corollary_bound(M: int, N: int) -> tuple[float, float, bool]:
    """``(g_jk, 2/M, g_jk < 2/M)`` for a square IRS under the null placement."""
    value = g_jk_corollary_square(N)
    bound = 2.0 / M
    return value, bound, value < bound


def _phase_batches(rng, samples, N, batch):
    for start in range(0, samples, batch):
        yield random_phases(rng, (min(batch, samples - start), N))


def mc_inner_products(
    F: np.ndarray, g_j: np.ndarray, g_k: np.ndarray, samples: int, seed=None, batch: int = 20000
):
    """Samples of ``h_j^H h_k``, ``||h_j||^2`` and ``||h_k||^2`` under random phases."""
    rng = np.random.default_rng(seed)
    N = F.shape[1]
    ys, pj, pk = [], [], []
    for theta in _phase_batches(rng, samples, N, batch):
        hj = (theta * g_j) @ F.T
        hk = (theta * g_k) @ F.T
        ys.append(np.einsum("sm,sm->s", hj.conj(), hk))
        pj.append(np.einsum("sm,sm->s", hj.conj(), hj).real)
        pk.append(np.einsum("sm,sm->s", hk.conj(), hk).real)
    return np.concatenate(ys), np.concatenate(pj), np.concatenate(pk)


def mc_variance(F, g_j, g_k, samples: int, seed=None) -> McEstimate:
    """Sample variance of ``h_j^H h_k`` with a delta-method standard error."""
    y, _, _ = mc_inner_products(F, g_j, g_k, samples, seed)
    dev = np.abs(y - y.mean()) ** 2
    var = float(dev.sum() / (samples - 1))
    return McEstimate(var, float(dev.std(ddof=1) / math.sqrt(samples)), samples)


def mc_inner_product_mean(F, g_j, g_k, samples: int, seed=None) -> tuple[complex, float]:
    """Sample mean of ``h_j^H h_k`` and its standard error (complex modulus)."""
    y, _, _ = mc_inner_products(F, g_j, g_k, samples, seed)
    return complex(y.mean()), float(math.sqrt(np.var(y, ddof=1) / samples))


def g_jk_monte_carlo(F, g_j, g_k, samples: int, seed=None) -> FavorablePropagationResult:
    y, pj, pk = mc_inner_products(F, g_j, g_k, samples, seed)
    dev = np.abs(y - y.mean()) ** 2
    var = float(dev.sum() / (samples - 1))
    denom = float(pj.mean() * pk.mean())
    stderr = float(dev.std(ddof=1) / math.sqrt(samples)) / denom
    return FavorablePropagationResult(var / denom, Method.MONTE_CARLO, var, denom, stderr)
