"""Characteristic initial data on the two null cones.

The outgoing cone C = {u0} x [0, v2] is seeded at the axis (r = 0,
dr/dv = 1/2, dr/du = -1/2, Q = 0, m = 0) and built by integrating the
constraint ODEs in v with Omega = 1:

    d(dr/dv)/dv   = -4 pi r |dphi/dv|^2
    d(r dr/du)/dv = -(1/4)(1 - Q^2/r^2)
    dQ/dv         = 4 pi e r^2 Im(phi* dphi/dv)
    dA_u/dv       = -Q / (2 r^2)            (gauge: A_u = 0 at the corner)
    d(r D_u phi)/dv = -dphi/dv dr/du - i e Q phi / (4 r)

The incoming cone Cbar = [u0, u_end] x {v1} starts from the corner state of C
and integrates the u-direction constraints with the residual gauge A_u = 0
along Cbar (so D_u phi = d_u phi there).  Scalar profiles are prescribed
freely per cone; the integrator is classical RK4 with the profile sampled
analytically at half steps, so cone data converge at 4th order and never
limit the 2nd-order evolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, TextIO, Union

import numpy as np

from .state import (
    FieldPoint,
    FieldSlice,
    GridSpec,
    InitialDataError,
    PhysicalParams,
)

__all__ = [
    "ProfileSpec",
    "CharacteristicData",
    "build_outgoing_cone",
    "build_incoming_cone",
    "derive_scalars",
    "build_characteristic_data",
    "load_profile_csv",
    "write_cone_csv",
]

FOUR_PI = 4.0 * math.pi

# Relative mismatch allowed between the two cones' scalar field at the corner.
CORNER_PHI_TOL = 1e-8


@dataclass(frozen=True)
class ProfileSpec:
    """Freely prescribed scalar-field profile along one null cone.

    kinds:
      zero      phi identically 0
      gaussian  amplitude * exp(-((x-center)/width)^2) * exp(i phase_rate x)
      custom    cubic spline through uniformly spaced samples
    """

    kind: str = "zero"
    amplitude: complex = 0.0
    center: float = 0.0
    width: float = 1.0
    phase_rate: float = 0.0
    samples: Optional[tuple] = None  # (coords, complex values) for kind="custom"

    def __post_init__(self):
        if self.kind not in ("zero", "gaussian", "custom"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "gaussian" and not (self.width > 0.0):
            raise ValueError("gaussian profile needs width > 0")
        if self.kind == "custom":
            if self.samples is None:
                raise ValueError("custom profile needs samples")
            x, y = self.samples
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=complex)
            if x.ndim != 1 or x.shape != y.shape or x.size < 4:
                raise ValueError("custom profile needs >= 4 matched samples")
            dx = np.diff(x)
            if np.any(dx <= 0.0) or np.max(np.abs(dx - dx[0])) > 1e-9 * dx[0]:
                raise ValueError("custom profile samples must be uniformly spaced")
            from scipy.interpolate import CubicSpline

            spline = CubicSpline(x, y)
            object.__setattr__(self, "samples", (x, y))
            object.__setattr__(self, "_spline", spline)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "gaussian" and self.amplitude == 0.0)

    def covers(self, lo: float, hi: float) -> bool:
        if self.kind != "custom":
            return True
        x, _ = self.samples
        return x[0] <= lo and x[-1] >= hi

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            out = np.zeros(x.shape, dtype=complex)
        elif self.kind == "gaussian":
            s = (x - self.center) / self.width
            out = self.amplitude * np.exp(-s * s) * np.exp(1j * self.phase_rate * x)
        else:
            out = np.asarray(self._spline(x), dtype=complex)
        return complex(out) if out.ndim == 0 else out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            out = np.zeros(x.shape, dtype=complex)
        elif self.kind == "gaussian":
            s = (x - self.center) / self.width
            out = self.value(x) * (-2.0 * s / self.width + 1j * self.phase_rate)
        else:
            out = np.asarray(self._spline(x, 1), dtype=complex)
        return complex(out) if out.ndim == 0 else out


def load_profile_csv(path) -> ProfileSpec:
    """Load a custom-sampled profile from CSV columns (v, Re phi[, Im phi])."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    if raw.shape[1] < 2:
        raise ValueError("profile CSV needs columns (v, Re phi[, Im phi])")
    coords = raw[:, 0]
    values = raw[:, 1].astype(complex)
    if raw.shape[1] >= 3:
        values = values + 1j * raw[:, 2]
    return ProfileSpec(kind="custom", samples=(coords, values))


# ---------------------------------------------------------------------------
# Cone ODE integration
# ---------------------------------------------------------------------------


def _rk4_march(rhs, coords: np.ndarray, y0: np.ndarray) -> np.ndarray:
    """Classical fixed-step RK4 along `coords`; returns states at every node."""
    out = np.empty((coords.size, y0.size), dtype=complex)
    out[0] = y0
    y = y0
    for k in range(coords.size - 1):
        x, h = coords[k], coords[k + 1] - coords[k]
        k1 = rhs(x, y)
        k2 = rhs(x + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(x + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = y
    return out


def _cone_c_rhs(profile: ProfileSpec, coupling: float):
    # state: (r, lam=dr/dv, z=r dr/du, Q, A_u, P=r D_u phi); complex storage
    def rhs(v: float, y: np.ndarray) -> np.ndarray:
        r = y[0].real
        lam = y[1].real
        z = y[2].real
        q = y[3].real
        p = y[5]
        phi = profile.value(v)
        dphi = profile.derivative(v)
        if r > 0.0:
            nu = z / r
            q_over_r = q / r
            q_over_r2 = q / (r * r)
        else:
            # axis limits: dr/du = -dr/dv, Q/r -> 0, Q/r^2 -> 0
            nu = -lam
            q_over_r = 0.0
            q_over_r2 = 0.0
        dr = lam
        dlam = -FOUR_PI * r * abs(dphi) ** 2
        dz = -0.25 * (1.0 - q_over_r * q_over_r)
        dq = FOUR_PI * coupling * r * r * (np.conj(phi) * dphi).imag
        da = -0.5 * q_over_r2
        dp = -dphi * nu - 0.25j * coupling * q_over_r * phi
        return np.array([dr, dlam, dz, dq, da, dp], dtype=complex)

    return rhs


def build_outgoing_cone(
    profile: ProfileSpec, grid: GridSpec, params: PhysicalParams
) -> tuple[FieldSlice, int]:
    """Build data on C = {u0} x [0, v2], seeded at the axis.

    Returns the cone slice (coord = v, extended below v1 to the axis) together
    with the array index of the corner v = v1.  The segment [v1, v2] lands
    exactly on the strip's v grid; below v1 the spacing is v1/round(v1/h_v).
    """
    if not profile.covers(0.0, grid.v2):
        raise InitialDataError("custom profile does not cover [0, v2] on C")
    n_pre = max(1, round(grid.v1 / grid.h_v))
    v_pre = np.linspace(0.0, grid.v1, n_pre + 1)
    v_strip = grid.v_coords()
    coords = np.concatenate([v_pre[:-1], v_strip])
    index_v1 = n_pre

    y0 = np.array([0.0, 0.5, 0.0, 0.0, 0.0, 0.0], dtype=complex)
    states = _rk4_march(_cone_c_rhs(profile, params.coupling), coords, y0)

    r = states[:, 0].real.copy()
    lam = states[:, 1].real.copy()
    z = states[:, 2].real.copy()
    q = states[:, 3].real.copy()
    a_u = states[:, 4].real.copy()
    p = states[:, 5].copy()

    if np.any(~np.isfinite(r)) or np.any(~np.isfinite(lam)):
        raise InitialDataError("integration failure on C: non-finite state")
    if np.any(lam <= 0.0):
        j = int(np.argmax(lam <= 0.0))
        raise InitialDataError(
            f"data already trapped on C: dr/dv <= 0 at v = {coords[j]:.6g}"
        )
    if np.any(np.diff(r) <= 0.0):
        raise InitialDataError("integration failure on C: r not strictly increasing")

    a_u -= a_u[index_v1]  # gauge: A_u(u0, v1) = 0

    dur = np.empty_like(r)
    du_phi = np.empty(r.shape, dtype=complex)
    dur[0] = -lam[0]
    du_phi[0] = profile.derivative(0.0)
    dur[1:] = z[1:] / r[1:]
    du_phi[1:] = p[1:] / r[1:]

    w = r * lam
    mass = 0.5 * r + 2.0 * z * lam
    phi = np.asarray(profile.value(coords), dtype=complex)

    cone = FieldSlice(
        coord=coords,
        r=r,
        dur=dur,
        w=w,
        ln_lapse=np.zeros_like(r),
        phi=phi,
        du_phi=du_phi,
        a_u=a_u,
        q=q,
        mass=mass,
    )
    return cone, index_v1


def _cone_cbar_rhs(profile: ProfileSpec, coupling: float):
    # state: (r, nu=dr/du, w=r dr/dv, Q).  The u-transport of Q carries the
    # opposite sign to the v-transport: current conservation in double-null
    # form reads d_u(r^2 J_v) + d_v(r^2 J_u) = 0 with J_mu = 4 pi e Im(phi* D_mu phi).
    def rhs(u: float, y: np.ndarray) -> np.ndarray:
        r = y[0].real
        nu = y[1].real
        q = y[3].real
        phi = profile.value(u)
        dphi = profile.derivative(u)
        q_over_r = q / r if r > 0.0 else 0.0
        dr = nu
        dnu = -FOUR_PI * r * abs(dphi) ** 2
        dw = -0.25 * (1.0 - q_over_r * q_over_r)
        dq = -FOUR_PI * coupling * r * r * (np.conj(phi) * dphi).imag
        return np.array([dr, dnu, dw, dq], dtype=complex)

    return rhs


def build_incoming_cone(
    profile: ProfileSpec,
    corner: FieldPoint,
    grid: GridSpec,
    params: PhysicalParams,
) -> FieldSlice:
    """Build data on Cbar = [u0, u_end] x {v1} from the corner state of C.

    Truncates (with the shortened u-range recorded in the returned coord
    array) if r reaches params.r_floor before u_end.
    """
    if not profile.covers(grid.u0, grid.u_end):
        raise InitialDataError("custom profile does not cover [u0, u_end] on Cbar")
    phi0 = profile.value(grid.u0)
    scale = max(1.0, abs(corner.phi))
    if abs(phi0 - corner.phi) > CORNER_PHI_TOL * scale:
        raise InitialDataError(
            "corner mismatch: Cbar profile at u0 differs from C data at v1 "
            f"({phi0} vs {corner.phi})"
        )

    u = grid.u_coords()
    rhs = _cone_cbar_rhs(profile, params.coupling)
    y = np.array([corner.r, corner.dur, corner.w, corner.q], dtype=complex)
    states = [y]
    for k in range(grid.n_u - 1):
        x, h = u[k], u[k + 1] - u[k]
        k1 = rhs(x, y)
        k2 = rhs(x + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(x + h, y + h * k3)
        y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if y_next[0].real <= params.r_floor:
            break  # truncated cone; shortened u-range recorded via coords
        states.append(y_next)
        y = y_next

    arr = np.array(states)
    n = arr.shape[0]
    coords = u[:n]
    r = arr[:, 0].real.copy()
    nu = arr[:, 1].real.copy()
    w = arr[:, 2].real.copy()
    q = arr[:, 3].real.copy()

    lam = w / r
    if np.any(lam <= 0.0):
        k = int(np.argmax(lam <= 0.0))
        raise InitialDataError(
            f"data already trapped on Cbar: dr/dv <= 0 at u = {coords[k]:.6g}"
        )

    phi = np.asarray(profile.value(coords), dtype=complex)
    du_phi = np.asarray(profile.derivative(coords), dtype=complex)
    mass = 0.5 * r + 2.0 * nu * w

    return FieldSlice(
        coord=coords,
        r=r,
        dur=nu,
        w=w,
        ln_lapse=np.zeros_like(r),
        phi=phi,
        du_phi=du_phi,
        a_u=np.zeros_like(r),
        q=q,
        mass=mass,
    )


# ---------------------------------------------------------------------------
# Derived scalars
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CharacteristicData:
    """Cone data together with the derived scalars of the criteria.

    eta0 = 2(m2 - m1)/r2 and delta0 = r2/r1 - 1 at u0; epsilon = sup Q^2/r^2
    over both cones; big_l = sup_{Cbar} r |phi|^2; phi1_sq_sup = sup_{Cbar}
    |phi|^2; x_star = 3 delta0/(1 + delta0); supercharged is the negation of
    the pointwise condition m >= |Q| on Cbar.  The building profiles are kept
    so refined-grid data can be rebuilt (convergence studies).
    """

    cone_c: FieldSlice
    cone_cbar: FieldSlice
    index_v1: int
    grid: GridSpec
    eta0: float
    delta0: float
    epsilon: float
    big_l: float
    phi1_sq_sup: float
    supercharged: bool
    cbar_minkowskian: bool
    x_star: float
    r2_u0: float
    profile_c: ProfileSpec = field(default_factory=ProfileSpec)
    profile_cbar: ProfileSpec = field(default_factory=ProfileSpec)

    def initial_strip_slice(self) -> FieldSlice:
        """Restriction of the C cone to the strip v grid [v1, v2]."""
        i0 = self.index_v1
        c = self.cone_c
        return FieldSlice(
            coord=c.coord[i0:].copy(),
            r=c.r[i0:].copy(),
            dur=c.dur[i0:].copy(),
            w=c.w[i0:].copy(),
            ln_lapse=c.ln_lapse[i0:].copy(),
            phi=c.phi[i0:].copy(),
            du_phi=c.du_phi[i0:].copy(),
            a_u=c.a_u[i0:].copy(),
            q=c.q[i0:].copy(),
            mass=c.mass[i0:].copy(),
        )


def _sup_q2_over_r2(cone: FieldSlice) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cone.r > 0.0, (cone.q / np.where(cone.r > 0.0, cone.r, 1.0)) ** 2, 0.0)
    return float(np.max(ratio))


def derive_scalars(
    cone_c: FieldSlice,
    index_v1: int,
    cone_cbar: FieldSlice,
    grid: GridSpec,
    profile_c: ProfileSpec,
    profile_cbar: ProfileSpec,
) -> CharacteristicData:
    """Assemble CharacteristicData; rejects data with epsilon >= 1."""
    m1 = float(cone_c.mass[index_v1])
    m2 = float(cone_c.mass[-1])
    r1 = float(cone_c.r[index_v1])
    r2 = float(cone_c.r[-1])
    eta0 = 2.0 * (m2 - m1) / r2
    delta0 = r2 / r1 - 1.0

    epsilon = max(_sup_q2_over_r2(cone_c), _sup_q2_over_r2(cone_cbar))
    if epsilon >= 1.0:
        raise InitialDataError(f"sup Q^2/r^2 = {epsilon:.6g} >= 1; data rejected")

    big_l = float(np.max(cone_cbar.r * np.abs(cone_cbar.phi) ** 2))
    phi1_sq_sup = float(np.max(np.abs(cone_cbar.phi) ** 2))

    m_tol = 1e-12 * max(1.0, float(np.max(np.abs(cone_cbar.mass))))
    supercharged = bool(np.any(cone_cbar.mass < np.abs(cone_cbar.q) - m_tol))

    tiny = 1e-13
    cbar_minkowskian = (
        float(np.max(np.abs(cone_cbar.phi))) <= tiny
        and float(np.max(np.abs(cone_cbar.mass))) <= tiny * max(1.0, r2)
        and float(np.max(np.abs(cone_cbar.q))) <= tiny
    )

    return CharacteristicData(
        cone_c=cone_c,
        cone_cbar=cone_cbar,
        index_v1=index_v1,
        grid=grid,
        eta0=eta0,
        delta0=delta0,
        epsilon=epsilon,
        big_l=big_l,
        phi1_sq_sup=phi1_sq_sup,
        supercharged=supercharged,
        cbar_minkowskian=cbar_minkowskian,
        x_star=3.0 * delta0 / (1.0 + delta0),
        r2_u0=r2,
        profile_c=profile_c,
        profile_cbar=profile_cbar,
    )


def build_characteristic_data(
    profile_c: ProfileSpec,
    profile_cbar: ProfileSpec,
    grid: GridSpec,
    params: PhysicalParams,
    auto_r_floor: bool = False,
) -> tuple[CharacteristicData, PhysicalParams]:
    """Build both cones and the derived scalars.

    With auto_r_floor=True the floor is re-anchored to 1e-3 * r(u0, v2) before
    the incoming cone is integrated; the resolved params are returned.
    """
    cone_c, index_v1 = build_outgoing_cone(profile_c, grid, params)
    if auto_r_floor:
        params = params.with_r_floor(1e-3 * float(cone_c.r[-1]))
    corner = cone_c.point(index_v1)
    cone_cbar = build_incoming_cone(profile_cbar, corner, grid, params)
    data = derive_scalars(cone_c, index_v1, cone_cbar, grid, profile_c, profile_cbar)
    return data, params


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def write_cone_csv(cone: FieldSlice, dest: Union[str, TextIO]) -> None:
    """One row per grid point: coord,r,dur,dvr,q,a_u,m,re_phi,im_phi."""

    def emit(fh: TextIO) -> None:
        fh.write("coord,r,dur,dvr,q,a_u,m,re_phi,im_phi\n")
        dvr = np.where(cone.r > 0.0, cone.w / np.where(cone.r > 0.0, cone.r, 1.0), -cone.dur)
        for i in range(len(cone)):
            row = (
                cone.coord[i],
                cone.r[i],
                cone.dur[i],
                dvr[i],
                cone.q[i],
                cone.a_u[i],
                cone.mass[i],
                cone.phi[i].real,
                cone.phi[i].imag,
            )
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")

    if isinstance(dest, str):
        with open(dest, "w") as fh:
            emit(fh)
    else:
        emit(dest)
