"""Array geometry and the IRS deployment criterion.

Coordinate conventions: the BS array lies on the x-axis centred at the
origin, the IRS panel is parallel to the y-z plane and centred at
``irs_center``. Element ``n`` of the IRS (row-major, ``N_v`` fastest)
sits at ``irs_center + (0, u_n d_irs, v_n d_irs)``.

Odd element counts give integer index grids ``{0, +-1, ...}``. With
``allow_even=True`` an even count uses the centred half-integer grid
``{+-1/2, +-3/2, ...}``; every lag-based closed form only depends on index
differences, which stay integral, so the analysis carries over unchanged.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# |mu_y - mu_z| tolerances: strict for the solver, loose for reporting on
# placements that were typed in by hand.
SOLVER_SYMMETRY_TOL = 1e-9
REPORT_SYMMETRY_TOL = 1e-3


def centered_indices(n: int) -> np.ndarray:
    """Element indices ``0, +-1, ...`` (odd n) or ``+-1/2, +-3/2, ...`` (even n)."""
    return np.arange(n, dtype=float) - (n - 1) / 2.0


@dataclass(frozen=True)
class SystemGeometry:
    """Placement and array parameters of the BS-IRS-users system.

    Parameters
    ----------
    carrier_frequency : float
        Carrier frequency in Hz.
    M : int
        Number of BS antennas.
    zeta_bs : float
        BS sparsity factor, ``d_bs = zeta_bs * wavelength / 2``.
    N_u, N_v : int
        IRS elements along y and z.
    zeta_irs : float
        IRS sparsity factor.
    irs_center : sequence of 3 floats
        IRS centre in metres.
    user_positions : sequence of 3-vectors
        User locations in metres.
    allow_even : bool
        Accept even ``M``, ``N_u``, ``N_v`` on the half-integer grid.
    """

    carrier_frequency: float
    M: int
    zeta_bs: float
    N_u: int
    N_v: int
    zeta_irs: float
    irs_center: tuple[float, float, float]
    user_positions: tuple[tuple[float, float, float], ...] = field(default_factory=tuple)
    allow_even: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "irs_center", tuple(float(c) for c in self.irs_center))
        object.__setattr__(
            self,
            "user_positions",
            tuple(tuple(float(c) for c in p) for p in self.user_positions),
        )
        if len(self.irs_center) != 3:
            raise ValueError("irs_center must have 3 coordinates")
        if any(len(p) != 3 for p in self.user_positions):
            raise ValueError("user positions must have 3 coordinates")
        if not self.carrier_frequency > 0:
            raise ValueError("carrier_frequency must be positive")
        for name in ("M", "N_u", "N_v"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, int(value))
            if value % 2 == 0 and not self.allow_even:
                raise ValueError(f"{name} must be odd (set allow_even for the half-integer grid)")
        if self.zeta_bs < 1 or self.zeta_irs < 1:
            raise ValueError("sparsity factors must be >= 1")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def d_bs(self) -> float:
        return self.zeta_bs * self.wavelength / 2.0

    @property
    def d_irs(self) -> float:
        return self.zeta_irs * self.wavelength / 2.0

    @property
    def N(self) -> int:
        return self.N_u * self.N_v

    @property
    def K(self) -> int:
        return len(self.user_positions)

    @property
    def distance(self) -> float:
        """Distance ``l`` from the BS origin to the IRS centre."""
        return float(np.linalg.norm(self.irs_center))

    def bs_indices(self) -> np.ndarray:
        return centered_indices(self.M)

    def irs_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-element ``(u_n, v_n)`` in row-major order."""
        u = np.repeat(centered_indices(self.N_u), self.N_v)
        v = np.tile(centered_indices(self.N_v), self.N_u)
        return u, v

    def with_center(self, irs_center: Sequence[float]) -> "SystemGeometry":
        return replace(self, irs_center=tuple(irs_center))


@dataclass(frozen=True)
class DeploymentReport:
    """Outcome of checking a placement against the kernel-null criterion."""

    delta: float
    q: int
    q_nearest: int
    q_error: float
    symmetric: bool
    q_even: bool
    q_not_multiple: bool
    q_coprime: bool
    aperture_ok: bool
    q_tolerance: float = 0.01

    @property
    def satisfied(self) -> bool:
        return (
            self.q_error < self.q_tolerance
            and self.symmetric
            and self.q_even
            and self.q_not_multiple
            and self.q_coprime
            and self.aperture_ok
        )


def bs_positions(geom: SystemGeometry) -> np.ndarray:
    """BS antenna positions, shape ``(M, 3)``, ascending index order."""
    x = geom.bs_indices() * geom.d_bs
    return np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])


def irs_positions(geom: SystemGeometry) -> np.ndarray:
    """IRS element positions, shape ``(N, 3)``, row-major in ``(u, v)``."""
    u, v = geom.irs_indices()
    offsets = np.column_stack([np.zeros_like(u), u * geom.d_irs, v * geom.d_irs])
    return np.asarray(geom.irs_center)[None, :] + offsets


def direction_cosines(geom: SystemGeometry) -> tuple[float, float, float]:
    l = geom.distance
    if l == 0:
        raise ValueError("IRS centre coincides with the BS origin")
    mx, my, mz = (c / l for c in geom.irs_center)
    return float(mx), float(my), float(mz)


def apertures(geom: SystemGeometry) -> tuple[float, float]:
    """``(D_bs, D_irs)``; the IRS aperture is the panel diagonal."""
    d_bs = (geom.M - 1) * geom.d_bs
    d_irs = math.hypot(geom.N_u - 1, geom.N_v - 1) * geom.d_irs
    return d_bs, d_irs


def fraunhofer_distance(geom: SystemGeometry) -> float:
    d_bs, d_irs = apertures(geom)
    return 2.0 * (d_bs + d_irs) ** 2 / geom.wavelength


def phase_increments(geom: SystemGeometry) -> tuple[float, float]:
    """Coefficients ``(delta_y, delta_z)`` with ``delta_{s,t} = s*delta_y + t*delta_z``."""
    mx, my, mz = direction_cosines(geom)
    scale = math.pi * geom.wavelength / (2.0 * geom.distance) * geom.zeta_bs * geom.zeta_irs * mx
    return scale * my, scale * mz


def phase_increment(geom: SystemGeometry) -> float:
    """Fundamental (signed) phase increment between adjacent IRS lags."""
    return phase_increments(geom)[0]


def lag_phase(geom: SystemGeometry, s, t):
    dy, dz = phase_increments(geom)
    return np.asarray(s) * dy + np.asarray(t) * dz


def _check_q(q: int, M: int) -> None:
    if int(q) != q:
        raise ValueError("q must be an integer")
    q = int(q)
    if q == 0 or q % 2:
        raise ValueError("q must be even and nonzero")
    if q % M == 0:
        raise ValueError("q must not be a multiple of M")
    if math.gcd(abs(q) // 2, M) != 1:
        raise ValueError("gcd(q/2, M) must be 1")


def solve_deployment(
    q: int,
    M: int,
    zeta_bs: float,
    zeta_irs: float,
    direction: Sequence[float],
    wavelength: float,
) -> np.ndarray:
    """IRS centre on the ray ``direction`` with ``|delta| = q*pi/M``.

    Parameters
    ----------
    q : int
        Even, not a multiple of ``M`` and with ``gcd(q/2, M) = 1``.
    direction : 3-vector
        Pointing direction from the BS origin; normalised internally and
        required to have equal y and z components.

    Returns
    -------
    numpy.ndarray
        The IRS centre ``l * direction`` in metres.
    """
    _check_q(q, M)
    mu = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(mu)
    if norm == 0:
        raise ValueError("direction must be nonzero")
    mu = mu / norm
    if abs(mu[1] - mu[2]) > SOLVER_SYMMETRY_TOL:
        raise ValueError("direction must satisfy mu_y == mu_z")
    cross = abs(mu[0] * mu[1])
    if cross == 0:
        raise ValueError("mu_x * mu_y must be nonzero")
    l = M * wavelength * zeta_bs * zeta_irs * cross / (2.0 * abs(q))
    return l * mu


def validate_criterion(
    geom: SystemGeometry, q: int, q_tolerance: float = 0.01
) -> DeploymentReport:
    delta = phase_increment(geom)
    unit = math.pi / geom.M
    _, my, mz = direction_cosines(geom)
    q = int(q)
    return DeploymentReport(
        delta=delta,
        q=q,
        q_nearest=int(round(abs(delta) / unit)),
        q_error=abs(abs(delta) - abs(q) * unit) / unit,
        symmetric=abs(my - mz) < REPORT_SYMMETRY_TOL,
        q_even=q != 0 and q % 2 == 0,
        q_not_multiple=q % geom.M != 0,
        q_coprime=q % 2 == 0 and math.gcd(abs(q) // 2, geom.M) == 1,
        aperture_ok=geom.M > geom.N_u + geom.N_v - 2,
        q_tolerance=q_tolerance,
    )


def write_positions_csv(path, positions: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "x_m", "y_m", "z_m"])
        for idx, (x, y, z) in enumerate(np.asarray(positions)):
            writer.writerow([idx, repr(float(x)), repr(float(y)), repr(float(z))])
