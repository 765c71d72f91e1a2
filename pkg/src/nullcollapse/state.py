"""Grid, physical parameters, and per-point state for double-null collapse runs.

Conventions (geometric units, G = c = 1):

* metric ansatz  -Omega^2(u,v) du dv + r^2(u,v) dsigma^2, with u the incoming
  and v the outgoing null coordinate;
* Hawking mass   m = (r/2)(1 + 4 Omega^-2 dr/du dr/dv);
* charge         Q = 2 r^2 Omega^-2 F_uv  (gauge A_v = 0, so F_uv = -dA_u/dv).

The fundamental radial variables are r, nu = dr/du and w = r dr/dv; dr/dv is
the derived ratio w/r, which stays well conditioned near a marginally outer
trapped surface where dr/dv crosses zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "PhysicalParams",
    "GridSpec",
    "FieldPoint",
    "FieldSlice",
    "PointClass",
    "hawking_mass",
    "classify_point",
    "f_uv_from_charge",
    "InitialDataError",
]

OMEGA_MAX = 2.0 / 3.0


class InitialDataError(RuntimeError):
    """Characteristic data cannot be built (trapped on a cone, sup Q^2/r^2 >= 1, ...)."""


@dataclass(frozen=True)
class PhysicalParams:
    """Physical and numerical control parameters.

    coupling            scalar-Maxwell coupling constant (>= 0; 0 decouples to the
                        real-scalar system)
    omega               margin parameter of the charged criterion, in (0, 2/3)
    r_floor             evolution stops once any evolved radius drops below this
    residual_warn_scale multiplier C in the monitor tolerance C * h^2 * scale
    """

    coupling: float = 0.0
    omega: float = 0.5
    r_floor: float = 1e-3
    residual_warn_scale: float = 10.0

    def __post_init__(self):
        if self.coupling < 0.0 or not math.isfinite(self.coupling):
            raise ValueError(f"coupling must be finite and >= 0, got {self.coupling}")
        if not (0.0 < self.omega < OMEGA_MAX):
            raise ValueError(f"omega must lie in (0, 2/3), got {self.omega}")
        if not (self.r_floor > 0.0):
            raise ValueError(f"r_floor must be > 0, got {self.r_floor}")
        if not (self.residual_warn_scale > 0.0):
            raise ValueError("residual_warn_scale must be > 0")

    def with_r_floor(self, r_floor: float) -> "PhysicalParams":
        return replace(self, r_floor=r_floor)


@dataclass(frozen=True)
class GridSpec:
    """Uniform double-null grid on the strip [u0, u_end] x [v1, v2]."""

    u0: float
    u_end: float
    v1: float
    v2: float
    n_u: int
    n_v: int

    def __post_init__(self):
        if not (self.u_end > self.u0):
            raise ValueError("u_end must exceed u0")
        if not (0.0 < self.v1 < self.v2):
            raise ValueError("need 0 < v1 < v2")
        if self.n_u < 2 or self.n_v < 2:
            raise ValueError("n_u and n_v must be >= 2")

    @property
    def h_u(self) -> float:
        return (self.u_end - self.u0) / (self.n_u - 1)

    @property
    def h_v(self) -> float:
        return (self.v2 - self.v1) / (self.n_v - 1)

    def u_coords(self) -> np.ndarray:
        return np.linspace(self.u0, self.u_end, self.n_u)

    def v_coords(self) -> np.ndarray:
        return np.linspace(self.v1, self.v2, self.n_v)

    def refined(self, factor: int = 2) -> "GridSpec":
        """Nested refinement: same strip, spacing divided by `factor`."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        return replace(
            self,
            n_u=factor * (self.n_u - 1) + 1,
            n_v=factor * (self.n_v - 1) + 1,
        )


@dataclass(frozen=True)
class FieldPoint:
    """Full dynamical state at one grid point.

    r         areal radius
    dur       dr/du
    w         r * dr/dv  (dr/dv = w / r)
    ln_lapse  ln Omega
    phi       complex scalar field
    du_phi    gauge-covariant derivative D_u phi = (d_u + i e A_u) phi
    a_u       electromagnetic potential component A_u  (gauge A_v = 0)
    q         charge Q
    mass      cached Hawking mass
    """

    r: float
    dur: float
    w: float
    ln_lapse: float
    phi: complex
    du_phi: complex
    a_u: float
    q: float
    mass: float

    @property
    def dvr(self) -> float:
        return self.w / self.r

    @property
    def omega_sq(self) -> float:
        return math.exp(2.0 * self.ln_lapse)


class PointClass(enum.Enum):
    REGULAR = "regular"
    MOTS = "mots"
    TRAPPED = "trapped"


@dataclass(frozen=True)
class FieldSlice:
    """State on one null slice: struct-of-arrays counterpart of FieldPoint.

    `coord` holds the running null coordinate (v on outgoing slices, u on the
    incoming cone).  Arrays are made read-only so slices can be shared freely.
    """

    coord: np.ndarray
    r: np.ndarray
    dur: np.ndarray
    w: np.ndarray
    ln_lapse: np.ndarray
    phi: np.ndarray
    du_phi: np.ndarray
    a_u: np.ndarray
    q: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        n = self.coord.shape[0]
        for name in ("r", "dur", "w", "ln_lapse", "phi", "du_phi", "a_u", "q", "mass"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"field {name!r} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
        self.coord.setflags(write=False)

    def __len__(self) -> int:
        return self.coord.shape[0]

    @property
    def dvr(self) -> np.ndarray:
        return self.w / self.r

    @property
    def omega_sq(self) -> np.ndarray:
        return np.exp(2.0 * self.ln_lapse)

    def point(self, i: int) -> FieldPoint:
        return FieldPoint(
            r=float(self.r[i]),
            dur=float(self.dur[i]),
            w=float(self.w[i]),
            ln_lapse=float(self.ln_lapse[i]),
            phi=complex(self.phi[i]),
            du_phi=complex(self.du_phi[i]),
            a_u=float(self.a_u[i]),
            q=float(self.q[i]),
            mass=float(self.mass[i]),
        )


def hawking_mass(r, dur, dvr, omega_sq):
    """Hawking mass (r/2)(1 + 4 Omega^-2 dr/du dr/dv) of a symmetry sphere.

    Accepts scalars or arrays; r and omega_sq must be positive.
    """
    r = np.asarray(r, dtype=float)
    omega_sq = np.asarray(omega_sq, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("hawking_mass requires r > 0")
    if np.any(omega_sq <= 0.0):
        raise ValueError("hawking_mass requires omega_sq > 0")
    out = 0.5 * r * (1.0 + 4.0 * np.asarray(dur, dtype=float) * np.asarray(dvr, dtype=float) / omega_sq)
    return float(out) if out.ndim == 0 else out


def classify_point(p: FieldPoint, tol: float = 0.0) -> PointClass:
    """Trapped/MOTS/regular classification from the null expansions.

    Trapped: dr/dv < -tol and dr/du < 0.  MOTS: |dr/dv| <= tol and dr/du < 0.
    """
    if p.r <= 0.0:
        raise ValueError("classify_point requires r > 0")
    if tol < 0.0:
        raise ValueError("tol must be >= 0")
    dvr = p.w / p.r
    if p.dur < 0.0:
        if dvr < -tol:
            return PointClass.TRAPPED
        if abs(dvr) <= tol:
            return PointClass.MOTS
    return PointClass.REGULAR


def f_uv_from_charge(q, r, omega_sq):
    """Field strength F_uv from the charge definition Q = 2 r^2 Omega^-2 F_uv."""
    r = np.asarray(r, dtype=float)
    omega_sq = np.asarray(omega_sq, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("f_uv_from_charge requires r > 0")
    if np.any(omega_sq <= 0.0):
        raise ValueError("f_uv_from_charge requires omega_sq > 0")
    out = np.asarray(q, dtype=float) * omega_sq / (2.0 * r * r)
    return float(out) if out.ndim == 0 else out
