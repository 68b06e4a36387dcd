"""Statistical-CSI moments of the Rician cascaded channel under MRT.

With ``g_k = sqrt(a_k b_k) gbar_k + sqrt(a_k (1-b_k)) gtilde_k`` and
``gtilde_k ~ CN(0, I)``, the approximate SINR only needs

* ``E[h_k^H h_k]   = C_k + a_k b_k theta^H A_kk theta``
* ``E[|h_k^H h_j|^2] = a_k a_j b_k b_j |theta^H A_kj theta|^2
  + a_k a_j b_k (1-b_j) theta^H D_k theta
  + a_k a_j b_j (1-b_k) theta^H D_j theta + C_kj``

where ``A_kj = diag(gbar_k)^H F^H F diag(gbar_j)`` and
``D_k = diag(gbar_k)^H F^H F F^H F diag(gbar_k)``.

The ``N x N`` matrices are never stored: every form is evaluated through
``F`` (``M x N`` with ``M << N`` in practice), e.g.
``theta^H A_kj theta = (F (gbar_k * theta))^H (F (gbar_j * theta))``.
Dense copies are available on demand for small instances.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .io import read_complex_binary, write_complex_binary

# imaginary residue allowed on a Hermitian form, relative to its magnitude
HERMITIAN_RESIDUE = 1e-10


def _hdot(a: np.ndarray, b: np.ndarray) -> complex:
    """Compensated ``a^H b``."""
    prod = np.conj(a) * b
    return complex(math.fsum(prod.real), math.fsum(prod.imag))


def _real_form(value: complex) -> float:
    scale = max(abs(value), 1e-300)
    if abs(value.imag) > HERMITIAN_RESIDUE * scale:
        raise ArithmeticError(f"Hermitian form has imaginary residue {value.imag:.3e}")
    return value.real


@dataclass(frozen=True)
class MomentSet:
    """Precomputed statistics of the cascaded channels.

    Attributes
    ----------
    F : (M, N) complex
    los : (K, N) complex
        Unit-modulus LoS steering vectors ``gbar_k``.
    alpha, beta : (K,) float
    """

    F: np.ndarray
    los: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    FFH: np.ndarray = field(repr=False)
    F_frob_sq: float
    FFH_sq_trace: float
    C: np.ndarray
    C_cross: np.ndarray

    @property
    def K(self) -> int:
        return self.los.shape[0]

    @property
    def N(self) -> int:
        return self.F.shape[1]

    @property
    def M(self) -> int:
        return self.F.shape[0]

    # dense views, for small instances and tests
    def A(self, k: int, j: int) -> np.ndarray:
        gram = self.F.conj().T @ self.F
        return self.los[k].conj()[:, None] * gram * self.los[j][None, :]

    def D(self, k: int) -> np.ndarray:
        FhF = self.F.conj().T @ self.F
        return self.los[k].conj()[:, None] * (FhF @ FhF) * self.los[k][None, :]

    # operator forms
    def los_images(self, x: np.ndarray) -> np.ndarray:
        """Rows ``F (gbar_k * x)`` for every user, shape ``(K, M)``."""
        return (self.los * x[None, :]) @ self.F.T

    def apply_A(self, k: int, j: int, x: np.ndarray) -> np.ndarray:
        return self.los[k].conj() * (self.F.conj().T @ (self.F @ (self.los[j] * x)))

    def apply_D(self, k: int, x: np.ndarray) -> np.ndarray:
        u = self.F @ (self.los[k] * x)
        return self.los[k].conj() * (self.F.conj().T @ (self.FFH @ u))

    def quad_A(self, theta: np.ndarray, k: int, j: int) -> complex:
        U = self.los_images(theta)
        return _hdot(U[k], U[j])

    def quad_D(self, theta: np.ndarray, k: int) -> float:
        u = self.F @ (self.los[k] * theta)
        return _real_form(_hdot(u, self.FFH @ u))

    def forms(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """All ``theta^H A_kj theta`` (K x K) and ``theta^H D_k theta`` (K,)."""
        U = self.los_images(theta)
        K = self.K
        a = np.empty((K, K), dtype=complex)
        for k in range(K):
            for j in range(K):
                a[k, j] = _hdot(U[k], U[j])
        d = np.array([_real_form(_hdot(U[k], self.FFH @ U[k])) for k in range(K)])
        return a, d

    def save(self, directory) -> None:
        """Write ``F.bin`` and ``los.bin`` (interleaved float64) plus ``meta.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_complex_binary(directory / "F.bin", self.F)
        write_complex_binary(directory / "los.bin", self.los)
        meta = {
            "F_shape": list(self.F.shape),
            "los_shape": list(self.los.shape),
            "alpha": [float(a) for a in self.alpha],
            "beta": [float(b) for b in self.beta],
        }
        (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, directory) -> "MomentSet":
        directory = Path(directory)
        meta = json.loads((directory / "meta.json").read_text())
        F = read_complex_binary(directory / "F.bin", meta["F_shape"])
        los = read_complex_binary(directory / "los.bin", meta["los_shape"])
        return _assemble(F, los, np.array(meta["alpha"]), np.array(meta["beta"]))


def _assemble(F, los, alpha, beta) -> MomentSet:
    F = np.asarray(F, dtype=complex)
    los = np.atleast_2d(np.asarray(los, dtype=complex))
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if los.shape[1] != F.shape[1]:
        raise ValueError("LoS vectors must have length N")
    if alpha.shape != (los.shape[0],) or beta.shape != alpha.shape:
        raise ValueError("alpha and beta need one entry per user")
    FFH = F @ F.conj().T
    frob = float(np.sum(np.abs(F) ** 2))
    tr2 = float(np.sum(np.abs(FFH) ** 2))  # tr((FF^H)^2) for Hermitian FF^H
    nlos = alpha * (1.0 - beta)
    return MomentSet(
        F=F,
        los=los,
        alpha=alpha,
        beta=beta,
        FFH=FFH,
        F_frob_sq=frob,
        FFH_sq_trace=tr2,
        C=nlos * frob,
        C_cross=np.outer(nlos, nlos) * tr2,
    )


def build_moment_set(F: np.ndarray, links: Sequence) -> MomentSet:
    los = np.array([link.los_steering for link in links])
    alpha = np.array([link.alpha for link in links], dtype=float)
    beta = np.array([link.beta for link in links], dtype=float)
    return _assemble(F, los, alpha, beta)


def first_moment(ms: MomentSet, theta: np.ndarray, k: int) -> float:
    """``E[h_k^H h_k]``: average channel power of user ``k``."""
    quad = _real_form(ms.quad_A(theta, k, k))
    return float(ms.C[k] + ms.alpha[k] * ms.beta[k] * quad)


def second_moment(ms: MomentSet, theta: np.ndarray, k: int, j: int) -> float:
    if k == j:
        raise ValueError("second_moment needs distinct users")
    a, b = ms.alpha, ms.beta
    cross = abs(ms.quad_A(theta, k, j)) ** 2
    return float(
        a[k] * a[j] * b[k] * b[j] * cross
        + a[k] * a[j] * b[k] * (1 - b[j]) * ms.quad_D(theta, k)
        + a[k] * a[j] * b[j] * (1 - b[k]) * ms.quad_D(theta, j)
        + ms.C_cross[k, j]
    )


@dataclass(frozen=True)
class Statistics:
    """Moments at one ``(theta, p)`` point.

    ``first[k] = E[h_k^H h_k]``; ``second[k, j] = E[|h_k^H h_j|^2]`` for
    ``k != j`` (diagonal unused, set to zero); ``signal`` and
    ``interference`` are ``S_k`` and ``J_k``.
    """

    first: np.ndarray
    second: np.ndarray
    signal: np.ndarray
    interference: np.ndarray

    @property
    def sinr(self) -> np.ndarray:
        return self.signal / self.interference

    @property
    def sum_rate(self) -> float:
        return float(np.sum(np.log2(1.0 + self.sinr)))


def moment_arrays(ms: MomentSet, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised first and second moments for all users."""
    a_forms, d_forms = ms.forms(theta)
    a, b = ms.alpha, ms.beta
    first = ms.C + a * b * np.diag(a_forms).real
    ab = a * b
    second = (
        np.outer(ab, ab) * np.abs(a_forms) ** 2
        + np.outer(ab * d_forms, a * (1 - b))
        + np.outer(a * (1 - b), ab * d_forms)
        + ms.C_cross
    )
    np.fill_diagonal(second, 0.0)
    return first, second


def statistics(ms: MomentSet, theta: np.ndarray, p: np.ndarray, sigmas) -> Statistics:
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (ms.K,))
    if np.any(sigmas <= 0):
        raise ValueError("noise powers must be positive")
    p = np.asarray(p, dtype=float)
    first, second = moment_arrays(ms, theta)
    signal = p * first**2
    interference = second @ p + sigmas
    return Statistics(first, second, signal, interference)


def approx_sinr(ms: MomentSet, theta: np.ndarray, p, k: int, sigma_sq: float) -> float:
    if sigma_sq <= 0:
        raise ValueError("noise power must be positive")
    p = np.asarray(p, dtype=float)
    e_k = first_moment(ms, theta, k)
    interference = sum(
        p[j] * second_moment(ms, theta, k, j) for j in range(ms.K) if j != k
    )
    return float(p[k] * e_k**2 / (interference + sigma_sq))


def approx_sum_rate(ms: MomentSet, theta: np.ndarray, p, sigmas) -> float:
    return statistics(ms, theta, p, sigmas).sum_rate


@dataclass(frozen=True)
class SampledMoments:
    """Monte Carlo moments: means and standard errors, same layout as :func:`moment_arrays`."""

    first: np.ndarray
    first_stderr: np.ndarray
    second: np.ndarray
    second_stderr: np.ndarray
    samples: int


def sample_moments(ms: MomentSet, theta: np.ndarray, samples: int, seed=None, batch: int = 2000) -> SampledMoments:
    """Estimate ``E[h_k^H h_k]`` and ``E[|h_k^H h_j|^2]`` from Rician draws."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    rng = np.random.default_rng(seed)
    K, N = ms.K, ms.N
    los_amp = (np.sqrt(ms.alpha * ms.beta)[:, None] * ms.los) * theta[None, :]
    nlos_amp = np.sqrt(ms.alpha * (1.0 - ms.beta))
    s1 = np.zeros(K)
    q1 = np.zeros(K)
    s2 = np.zeros((K, K))
    q2 = np.zeros((K, K))
    for start in range(0, samples, batch):
        size = min(batch, samples - start)
        noise = (rng.standard_normal((size, K, N)) + 1j * rng.standard_normal((size, K, N))) / math.sqrt(2.0)
        G = los_amp[None] + nlos_amp[None, :, None] * noise * theta[None, None, :]
        H = G @ ms.F.T
        gram = np.einsum("skm,sjm->skj", H.conj(), H)
        power = gram[:, np.arange(K), np.arange(K)].real
        cross = np.abs(gram) ** 2
        s1 += power.sum(axis=0)
        q1 += (power**2).sum(axis=0)
        s2 += cross.sum(axis=0)
        q2 += (cross**2).sum(axis=0)

    def mean_se(s, q):
        mean = s / samples
        var = np.maximum(q / samples - mean**2, 0.0) * samples / (samples - 1)
        return mean, np.sqrt(var / samples)

    m1, e1 = mean_se(s1, q1)
    m2, e2 = mean_se(s2, q2)
    np.fill_diagonal(m2, 0.0)
    np.fill_diagonal(e2, 0.0)
    return SampledMoments(m1, e1, m2, e2, samples)
