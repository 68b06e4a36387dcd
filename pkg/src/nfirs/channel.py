"""BS-IRS and IRS-user channels, cascaded channels and instantaneous rates.

Path-gain defaults follow a free-space amplitude model,
``rho = wavelength / (4 pi d)``, since no absolute gains are prescribed;
every gain can be overridden.

IRS-user departure angles are taken from the unit vector ``u`` pointing
from the IRS centre to the user:

* horizontal AoD ``theta`` is the polar angle from the +y axis,
  ``cos(theta) = u_y``;
* vertical AoD ``phi`` is the azimuth in the x-z plane measured from +x,
  ``phi = atan2(u_z, u_x)``, so that ``sin(phi) sin(theta) = u_z``.

With this convention the steering phases ``pi*zeta_irs*cos(theta)`` and
``pi*zeta_irs*sin(phi)*sin(theta)`` are exactly the far-field phase slopes
along the panel's y and z axes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    SystemGeometry,
    bs_positions,
    direction_cosines,
    irs_positions,
)


class Variant(enum.Enum):
    EXACT = "exact"
    FAR_FIELD = "farfield"
    TAYLOR2 = "taylor2"


@dataclass(frozen=True)
class BsIrsChannel:
    F: np.ndarray
    rho_t: complex
    variant: Variant

    @property
    def shape(self) -> tuple[int, int]:
        return self.F.shape


@dataclass(frozen=True)
class IrsUserLink:
    """Far-field IRS-to-user link with a Rician split.

    ``los_steering`` holds unit-modulus entries referenced to the IRS
    centre; ``alpha`` is the linear large-scale power gain.
    """

    los_steering: np.ndarray
    rho_r: complex
    alpha: float
    kappa: float
    aod_azimuth: float
    aod_elevation: float

    @property
    def beta(self) -> float:
        if math.isinf(self.kappa):
            return 1.0
        return self.kappa / (self.kappa + 1.0)

    @property
    def N(self) -> int:
        return self.los_steering.shape[0]

    def los_channel(self) -> np.ndarray:
        """Deterministic LoS channel ``rho_r * a_S``."""
        return self.rho_r * self.los_steering

    def with_kappa(self, kappa: float) -> "IrsUserLink":
        return IrsUserLink(
            self.los_steering, self.rho_r, self.alpha, kappa, self.aod_azimuth, self.aod_elevation
        )


def free_space_gain(wavelength: float, distance: float) -> float:
    return wavelength / (4.0 * math.pi * distance)


def default_rho_t(geom: SystemGeometry) -> float:
    return free_space_gain(geom.wavelength, geom.distance)


def ula_response(L: int, X: float) -> np.ndarray:
    """``[1, e^{jX}, ..., e^{jX(L-1)}]``."""
    if L < 1:
        raise ValueError("L must be >= 1")
    return np.exp(1j * X * np.arange(L))


def upa_response(X: float, Y: float, N_u: int, N_v: int) -> np.ndarray:
    return np.kron(ula_response(N_u, X), ula_response(N_v, Y))


def _phase_channel(rho_t: complex, distances: np.ndarray, wavelength: float) -> np.ndarray:
    return rho_t * np.exp(-2j * np.pi / wavelength * distances)


def exact_distances(geom: SystemGeometry) -> np.ndarray:
    """``(M, N)`` Euclidean BS-antenna to IRS-element distances."""
    diff = irs_positions(geom)[None, :, :] - bs_positions(geom)[:, None, :]
    return np.sqrt(np.einsum("mnc,mnc->mn", diff, diff))


def taylor2_distances(geom: SystemGeometry) -> np.ndarray:
    """Second-order expansion of the BS-IRS distances around ``l``."""
    lam, l = geom.wavelength, geom.distance
    mx, my, mz = direction_cosines(geom)
    i = geom.bs_indices()[:, None] * geom.zeta_bs
    u, v = geom.irs_indices()
    u = u[None, :] * geom.zeta_irs
    v = v[None, :] * geom.zeta_irs
    linear = lam / 2.0 * (-i * mx + u * my + v * mz)
    quad = lam**2 / (8.0 * l) * (i**2 * (1 - mx**2) + u**2 * (1 - my**2) + v**2 * (1 - mz**2))
    cross = lam**2 / (4.0 * l) * (i * u * mx * my + i * v * mx * mz - u * v * my * mz)
    return l + linear + quad + cross


def exact_bs_irs(geom: SystemGeometry, rho_t: complex | None = None) -> BsIrsChannel:
    rho_t = default_rho_t(geom) if rho_t is None else rho_t
    F = _phase_channel(rho_t, exact_distances(geom), geom.wavelength)
    return BsIrsChannel(F, rho_t, Variant.EXACT)


def taylor2_bs_irs(geom: SystemGeometry, rho_t: complex | None = None) -> BsIrsChannel:
    rho_t = default_rho_t(geom) if rho_t is None else rho_t
    F = _phase_channel(rho_t, taylor2_distances(geom), geom.wavelength)
    return BsIrsChannel(F, rho_t, Variant.TAYLOR2)


def _centering(n: int, X: float) -> complex:
    # shifts a_n(X) from indices 0..n-1 onto the centred grid
    return np.exp(-1j * X * (n - 1) / 2.0)


def farfield_angles(geom: SystemGeometry) -> tuple[float, float, float]:
    """``(Theta_T^AOD, Phi_T^AOA, Theta_T^AOA)`` of the planar-wave BS-IRS link.

    The BS departure phase is fixed as ``pi * zeta_bs * mu_x``.
    """
    mx, my, mz = direction_cosines(geom)
    return (
        math.pi * geom.zeta_bs * mx,
        math.pi * geom.zeta_irs * my,
        math.pi * geom.zeta_irs * mz,
    )


def farfield_bs_irs(geom: SystemGeometry, rho_t: complex | None = None) -> BsIrsChannel:
    """Rank-one planar-wave approximation ``rho_T a_M a_S^H``.

    Both response vectors are referenced to the array centres and the
    common ``exp(-j 2 pi l / lambda)`` term is kept, so the entries are
    directly comparable with :func:`exact_bs_irs`.
    """
    rho_t = default_rho_t(geom) if rho_t is None else rho_t
    t_aod, p_aoa, t_aoa = farfield_angles(geom)
    a_bs = ula_response(geom.M, t_aod) * _centering(geom.M, t_aod)
    a_irs = (
        upa_response(p_aoa, t_aoa, geom.N_u, geom.N_v)
        * _centering(geom.N_u, p_aoa)
        * _centering(geom.N_v, t_aoa)
    )
    common = rho_t * np.exp(-2j * np.pi * geom.distance / geom.wavelength)
    F = common * np.outer(a_bs, a_irs.conj())
    return BsIrsChannel(F, rho_t, Variant.FAR_FIELD)


def bs_irs_channel(geom: SystemGeometry, variant: Variant | str = Variant.EXACT, rho_t=None):
    variant = Variant(variant)
    builder = {
        Variant.EXACT: exact_bs_irs,
        Variant.TAYLOR2: taylor2_bs_irs,
        Variant.FAR_FIELD: farfield_bs_irs,
    }[variant]
    return builder(geom, rho_t)


def user_departure_angles(geom: SystemGeometry, user_index: int) -> tuple[float, float, float]:
    """``(theta_aod, phi_aod, distance)`` from the IRS centre to a user."""
    d = np.asarray(geom.user_positions[user_index]) - np.asarray(geom.irs_center)
    dist = float(np.linalg.norm(d))
    if dist == 0:
        raise ValueError(f"user {user_index} coincides with the IRS centre")
    ux, uy, uz = d / dist
    theta = math.acos(max(-1.0, min(1.0, uy)))
    phi = math.atan2(uz, ux)
    return theta, phi, dist


def irs_user_los(
    geom: SystemGeometry,
    user_index: int,
    rho_r: complex | None = None,
    kappa: float = math.inf,
    alpha: float | None = None,
) -> IrsUserLink:
    theta, phi, dist = user_departure_angles(geom, user_index)
    big_phi = math.pi * geom.zeta_irs * math.cos(theta)
    big_theta = math.pi * geom.zeta_irs * math.sin(phi) * math.sin(theta)
    steering = (
        upa_response(big_phi, big_theta, geom.N_u, geom.N_v)
        * _centering(geom.N_u, big_phi)
        * _centering(geom.N_v, big_theta)
    )
    if rho_r is None:
        rho_r = free_space_gain(geom.wavelength, dist)
    if alpha is None:
        alpha = abs(rho_r) ** 2
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    return IrsUserLink(steering, rho_r, float(alpha), float(kappa), theta, phi)


def user_links(geom: SystemGeometry, kappas=None, alphas=None) -> list[IrsUserLink]:
    K = geom.K
    kappas = [math.inf] * K if kappas is None else list(kappas)
    alphas = [None] * K if alphas is None else list(alphas)
    return [irs_user_los(geom, k, kappa=kappas[k], alpha=alphas[k]) for k in range(K)]


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def sample_rician(link: IrsUserLink, rng_seed=None, size: int | None = None) -> np.ndarray:
    """Draw ``g = sqrt(a b) g_los + sqrt(a (1-b)) g_nlos``.

    Returns shape ``(N,)`` or ``(size, N)``.
    """
    rng = _rng(rng_seed)
    shape = (link.N,) if size is None else (size, link.N)
    los = math.sqrt(link.alpha * link.beta) * link.los_steering
    if link.beta == 1.0:
        return np.broadcast_to(los, shape).copy()
    nlos = complex_normal(rng, shape)
    return los + math.sqrt(link.alpha * (1.0 - link.beta)) * nlos


def cascaded(F: np.ndarray, theta: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``F diag(theta) g``; ``g`` may carry leading batch axes."""
    F = np.asarray(F)
    theta = np.asarray(theta)
    g = np.asarray(g)
    if F.ndim != 2 or theta.shape != (F.shape[1],) or g.shape[-1] != F.shape[1]:
        raise ValueError(
            f"dimension mismatch: F {F.shape}, theta {theta.shape}, g {g.shape}"
        )
    return (theta * g) @ F.T


def instantaneous_rate(channels, precoders, noise_powers):
    """Per-user SINR and sum-rate (bits/s/Hz) for linear precoding.

    Parameters
    ----------
    channels, precoders : array_like, shape (K, M)
        Row ``k`` is ``h_k`` (resp. ``w_k``).
    noise_powers : array_like, shape (K,) or scalar

    Returns
    -------
    sinr : numpy.ndarray, shape (K,)
    rate : float
    """
    H = np.atleast_2d(np.asarray(channels))
    W = np.atleast_2d(np.asarray(precoders))
    if H.shape != W.shape:
        raise ValueError("channels and precoders must have matching shapes")
    K = H.shape[0]
    sigma = np.broadcast_to(np.asarray(noise_powers, dtype=float), (K,))
    if np.any(sigma <= 0):
        raise ValueError("noise powers must be positive")
    X = np.abs(H.conj() @ W.T) ** 2  # X[k, j] = |h_k^H w_j|^2
    signal = np.diag(X).copy()
    interference = np.where(np.eye(K, dtype=bool), 0.0, X).sum(axis=1)
    sinr = signal / (interference + sigma)
    return sinr, float(np.sum(np.log2(1.0 + sinr)))
