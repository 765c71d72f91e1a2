"""Second-order two-pass predictor-corrector march across the null strip.

Free evolution variables per slice: r, w = r dr/dv, nu = dr/du, ln Omega,
phi, D_u phi, A_u, Q.  One u-step:

  (i)   Euler u-predictor for r, phi (via d_u phi = D_u phi - i e A_u phi) and
        ln Omega (via d_u ln Omega integrated on the previous slice);
  (ii)  v-integration of the transport forms on the new slice, with midpoint
        averages: d_v(r dr/du) = -(Omega^2/4)(1 - Q^2/r^2),
        d_v(r D_u phi) = -d_v phi dr/du - i e Q phi Omega^2/(4r),
        d_v A_u = -Q Omega^2/(2 r^2),  d_v Q = 4 pi e r^2 Im(phi* d_v phi);
  (iii) u-trapezoid for w:  d_u w = -(Omega^2/4)(1 - Q^2/r^2);
  (iv)  ln Omega diamond update  ln_NE = ln_NW + ln_SE - ln_SW + h_u h_v RHS
        with RHS the lapse wave equation at the cell center:
        d_u d_v ln Omega = -4 pi Re(D_u phi (d_v phi)*)
                           + (Omega^2/4 + dr/du dr/dv)/r^2 - Omega^2 Q^2/(2 r^4);
  (v)   corrector pass repeating (ii)-(iv) with trapezoidal u-averages for
        r and phi.

Everything in the v-direction reduces to prefix sums, so a slice update is a
fixed set of vector operations; a single evolution is sequential in u.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Optional, TextIO, Union

import numpy as np

from . import diagnostics as _diag
from .initial_data import CharacteristicData, build_characteristic_data
from .state import FieldPoint, FieldSlice, GridSpec, PhysicalParams

__all__ = [
    "StopPolicy",
    "SolutionStatus",
    "Series",
    "Solution",
    "step_slice",
    "evolve",
    "convergence_order",
    "ConvergenceResult",
    "default_mots_tol",
    "save_checkpoint",
    "load_checkpoint",
    "Checkpoint",
    "resume_evolution",
]

FOUR_PI = 4.0 * math.pi
LN_LAPSE_FLOOR = -345.0  # Omega^2 = exp(2 ln) underflows below ~1e-300


class StopPolicy(enum.Enum):
    STOP_AT_FIRST_MOTS = "stop_at_first_mots"
    RUN_TO_U_STAR = "run_to_u_star"
    RUN_TO_END = "run_to_end"


class SolutionStatus(enum.Enum):
    COMPLETED = "completed"
    MOTS_FOUND = "mots_found"
    TRAPPED_FOUND = "trapped_found"
    R_FLOOR = "r_floor"
    ABORTED = "aborted"


def _mid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x[:-1] + x[1:])


def _lapse_wave_rhs(r, nu, lam, om2, du_phi, dvphi, q):
    """d_u d_v ln Omega with the mixed r-derivative eliminated."""
    return (
        -FOUR_PI * (du_phi * np.conj(dvphi)).real
        + (0.25 * om2 + nu * lam) / (r * r)
        - 0.5 * om2 * q * q / (r * r * r * r)
    )


def du_ln_lapse(sl: FieldSlice, h_v: float) -> np.ndarray:
    """d_u ln Omega along a slice, integrated in v from 0 at v1.

    The gauge ln Omega = 0 on Cbar anchors the integration constant.
    """
    lam = sl.w / sl.r
    om2 = np.exp(2.0 * sl.ln_lapse)
    dvphi = np.diff(sl.phi) / h_v
    rhs = _lapse_wave_rhs(
        _mid(sl.r), _mid(sl.dur), _mid(lam), _mid(om2), _mid(sl.du_phi), dvphi, _mid(sl.q)
    )
    out = np.empty(len(sl))
    out[0] = 0.0
    np.cumsum(rhs * h_v, out=out[1:])
    return out


def step_slice(
    prev: FieldSlice,
    cbar_point: FieldPoint,
    h_u: float,
    h_v: float,
    params: PhysicalParams,
) -> FieldSlice:
    """Advance one u-slice; `cbar_point` supplies all fields at v1 on the new slice."""
    e = params.coupling
    s_r, s_nu, s_w = prev.r, prev.dur, prev.w
    s_ln, s_phi, s_xi = prev.ln_lapse, prev.phi, prev.du_phi
    s_au, s_q = prev.a_u, prev.q
    s_lam = s_w / s_r
    s_om2 = np.exp(2.0 * s_ln)
    s_k = -0.25 * s_om2 * (1.0 - (s_q / s_r) ** 2)
    s_duphi = s_xi - 1j * e * s_au * s_phi
    b = cbar_point

    # (i) predictor
    r_n = s_r + h_u * s_nu
    phi_n = s_phi + h_u * s_duphi
    ln_n = s_ln + h_u * du_ln_lapse(prev, h_v)
    r_n[0], phi_n[0], ln_n[0] = b.r, b.phi, b.ln_lapse

    nu_n = xi_n = au_n = q_n = w_n = None
    for corrector in (False, True):
        if corrector:
            duphi_n = xi_n - 1j * e * au_n * phi_n
            r_n = s_r + 0.5 * h_u * (s_nu + nu_n)
            phi_n = s_phi + 0.5 * h_u * (s_duphi + duphi_n)
            r_n[0], phi_n[0] = b.r, b.phi
        om2_n = np.exp(2.0 * ln_n)

        # (ii) v-transport on the new slice
        rm = _mid(r_n)
        om2m = _mid(om2_n)
        phim = _mid(phi_n)
        dvphi = np.diff(phi_n) / h_v

        q_n = np.empty_like(s_q)
        q_n[0] = b.q
        np.cumsum(h_v * (FOUR_PI * e * rm * rm * (np.conj(phim) * dvphi).imag), out=q_n[1:])
        q_n[1:] += b.q
        qm = _mid(q_n)

        au_n = np.empty_like(s_au)
        au_n[0] = b.a_u
        np.cumsum(h_v * (-0.5 * qm * om2m / (rm * rm)), out=au_n[1:])
        au_n[1:] += b.a_u

        z_n = np.empty_like(s_r)
        z_n[0] = b.r * b.dur
        np.cumsum(h_v * (-0.25 * om2m * (1.0 - (qm / rm) ** 2)), out=z_n[1:])
        z_n[1:] += z_n[0]
        nu_n = z_n / r_n

        p_n = np.empty(len(prev), dtype=complex)
        p_n[0] = b.r * b.du_phi
        np.cumsum(
            h_v * (-dvphi * _mid(nu_n) - 0.25j * e * qm * phim * om2m / rm), out=p_n[1:]
        )
        p_n[1:] += p_n[0]
        xi_n = p_n / r_n

        # (iii) u-trapezoid for w = r dr/dv
        k_n = -0.25 * om2_n * (1.0 - (q_n / r_n) ** 2)
        w_n = s_w + 0.5 * h_u * (s_k + k_n)
        w_n[0] = b.w
        lam_n = w_n / r_n

        # (iv) ln Omega diamond update with cell-centered RHS
        def c4(a_s, a_n):
            return 0.25 * (a_s[:-1] + a_s[1:] + a_n[:-1] + a_n[1:])

        rhs_c = _lapse_wave_rhs(
            c4(s_r, r_n),
            c4(s_nu, nu_n),
            c4(s_lam, lam_n),
            c4(s_om2, om2_n),
            c4(s_xi, xi_n),
            (np.diff(s_phi) + np.diff(phi_n)) / (2.0 * h_v),
            c4(s_q, q_n),
        )
        ln_n = np.empty_like(s_ln)
        ln_n[0] = b.ln_lapse
        np.cumsum(np.diff(s_ln) + h_u * h_v * rhs_c, out=ln_n[1:])
        ln_n[1:] += b.ln_lapse

    om2_n = np.exp(2.0 * ln_n)
    mass_n = 0.5 * r_n * (1.0 + 4.0 * nu_n * (w_n / r_n) / om2_n)
    return FieldSlice(
        coord=prev.coord,
        r=r_n,
        dur=nu_n,
        w=w_n,
        ln_lapse=ln_n,
        phi=phi_n,
        du_phi=xi_n,
        a_u=au_n,
        q=q_n,
        mass=mass_n,
    )


# ---------------------------------------------------------------------------
# Solution container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Series:
    """Per-slice diagnostics: eta, delta, x, end masses and sup Q^2/r^2."""

    eta: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    sup_q2_over_r2: np.ndarray

    def __post_init__(self):
        for name in ("eta", "delta", "x", "m1", "m2", "sup_q2_over_r2"):
            getattr(self, name).setflags(write=False)


@dataclass(frozen=True)
class Solution:
    """Immutable evolved field grid plus per-slice series and residuals.

    Fields are (n_slices, n_v) arrays; `u` holds the evolved slice
    coordinates (possibly fewer than grid.n_u when a stop fired).
    """

    grid: GridSpec
    params: PhysicalParams
    stop: StopPolicy
    status: SolutionStatus
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    dur: np.ndarray
    w: np.ndarray
    ln_lapse: np.ndarray
    phi: np.ndarray
    du_phi: np.ndarray
    a_u: np.ndarray
    q: np.ndarray
    mass: np.ndarray
    series: Series
    residuals: dict
    first_mots: Optional[tuple]
    first_trapped: Optional[tuple]
    mots_tol: float
    x_star: float
    r2_ref: float
    start_index: int = 0
    fail_index: Optional[int] = None

    def __post_init__(self):
        for name in ("u", "v", "r", "dur", "w", "ln_lapse", "phi", "du_phi", "a_u", "q", "mass"):
            getattr(self, name).setflags(write=False)
        for arr in self.residuals.values():
            arr.setflags(write=False)

    @property
    def n_slices(self) -> int:
        return self.u.shape[0]

    def slice_view(self, i: int) -> FieldSlice:
        return FieldSlice(
            coord=self.v.copy(),
            r=self.r[i].copy(),
            dur=self.dur[i].copy(),
            w=self.w[i].copy(),
            ln_lapse=self.ln_lapse[i].copy(),
            phi=self.phi[i].copy(),
            du_phi=self.du_phi[i].copy(),
            a_u=self.a_u[i].copy(),
            q=self.q[i].copy(),
            mass=self.mass[i].copy(),
        )

    def x_at(self, u: float) -> float:
        """x(u) by linear interpolation of the stored series."""
        return float(np.interp(u, self.u, self.series.x))


def default_mots_tol(grid: GridSpec, dvr_ref: float) -> float:
    """MOTS detection tolerance: 10 h^2 in units of dr/dv(u0, v2)."""
    h = max(grid.h_u, grid.h_v)
    return 10.0 * h * h * abs(dvr_ref)


def _series_row(sl: FieldSlice, r2_ref: float) -> tuple:
    r1 = float(sl.r[0])
    r2 = float(sl.r[-1])
    m1 = float(sl.mass[0])
    m2 = float(sl.mass[-1])
    eta = 2.0 * (m2 - m1) / r2
    delta = r2 / r1 - 1.0
    x = r2 / r2_ref
    sup_q2r2 = float(np.max((sl.q / sl.r) ** 2))
    return eta, delta, x, m1, m2, sup_q2r2


def _slice_ok(sl: FieldSlice) -> bool:
    for arr in (sl.r, sl.dur, sl.w, sl.ln_lapse, sl.phi, sl.du_phi, sl.a_u, sl.q):
        if not np.all(np.isfinite(arr)):
            return False
    return True


def _march(
    first: FieldSlice,
    start_index: int,
    data: CharacteristicData,
    grid: GridSpec,
    params: PhysicalParams,
    stop: StopPolicy,
    mots_tol: float,
    r2_ref: float,
    stream: Optional[TextIO] = None,
) -> Solution:
    h_u, h_v = grid.h_u, grid.h_v
    u_all = grid.u_coords()
    cbar = data.cone_cbar
    x_star = data.x_star

    slices = [first]
    rows = [_series_row(first, r2_ref)]
    first_mots: Optional[tuple] = None
    first_trapped: Optional[tuple] = None
    status = SolutionStatus.COMPLETED
    fail_index: Optional[int] = None

    if stream is not None:
        _stream_slice(stream, u_all[start_index], first, header=True)

    i = start_index
    while i + 1 < grid.n_u:
        i += 1
        if i >= len(cbar):
            status = SolutionStatus.R_FLOOR  # incoming cone truncated at the floor
            fail_index = i
            break
        new = step_slice(slices[-1], cbar.point(i), h_u, h_v, params)
        if not _slice_ok(new) or float(np.min(new.ln_lapse)) < LN_LAPSE_FLOOR:
            status = SolutionStatus.ABORTED
            fail_index = i
            break
        if float(np.min(new.r)) < params.r_floor:
            status = SolutionStatus.R_FLOOR
            fail_index = i
            break

        slices.append(new)
        rows.append(_series_row(new, r2_ref))
        if stream is not None:
            _stream_slice(stream, u_all[i], new)

        lam = new.w / new.r
        event = (new.dur < 0.0) & (lam <= mots_tol)
        if np.any(event) and first_mots is None:
            prev = slices[-2]
            first_mots, first_trapped = _locate_mots(
                prev, new, u_all[i] - h_u, h_u, mots_tol
            )
        if np.any(event) and stop is StopPolicy.STOP_AT_FIRST_MOTS:
            trapped_now = np.any((new.dur < 0.0) & (lam < -mots_tol))
            status = (
                SolutionStatus.TRAPPED_FOUND if trapped_now else SolutionStatus.MOTS_FOUND
            )
            break
        if stop is StopPolicy.RUN_TO_U_STAR and rows[-1][2] <= x_star:
            break

    n = len(slices)
    u = u_all[start_index : start_index + n].copy()
    rows_arr = np.array(rows, dtype=float)
    series = Series(
        eta=rows_arr[:, 0].copy(),
        delta=rows_arr[:, 1].copy(),
        x=rows_arr[:, 2].copy(),
        m1=rows_arr[:, 3].copy(),
        m2=rows_arr[:, 4].copy(),
        sup_q2_over_r2=rows_arr[:, 5].copy(),
    )

    fields = {}
    for name in ("r", "dur", "w", "ln_lapse", "a_u", "q", "mass"):
        fields[name] = np.array([getattr(s, name) for s in slices])
    for name in ("phi", "du_phi"):
        fields[name] = np.array([getattr(s, name) for s in slices], dtype=complex)

    residuals = _diag.residual_supnorms(
        fields["r"],
        fields["dur"],
        fields["w"],
        fields["ln_lapse"],
        fields["phi"],
        fields["du_phi"],
        fields["q"],
        h_u,
        h_v,
        params.coupling,
    )

    return Solution(
        grid=grid,
        params=params,
        stop=stop,
        status=status,
        u=u,
        v=first.coord.copy(),
        series=series,
        residuals=residuals,
        first_mots=first_mots,
        first_trapped=first_trapped,
        mots_tol=mots_tol,
        x_star=x_star,
        r2_ref=r2_ref,
        start_index=start_index,
        fail_index=fail_index,
        **fields,
    )


def _locate_mots(
    prev: FieldSlice, new: FieldSlice, u_prev: float, h_u: float, tol: float
) -> tuple[tuple, Optional[tuple]]:
    """Sub-grid MOTS location: linear interpolation of w in u at fixed v."""
    lam = new.w / new.r
    event = (new.dur < 0.0) & (lam <= tol)
    dw = prev.w - new.w
    cross = np.where(
        event & (dw > 0.0),
        np.clip(prev.w / np.where(dw > 0.0, dw, 1.0), 0.0, 1.0),
        1.0,
    )
    u_cross = np.where(event, u_prev + h_u * cross, np.inf)
    j = int(np.argmin(u_cross))
    first_mots = (float(u_cross[j]), float(new.coord[j]))

    trapped = (new.dur < 0.0) & (lam < -tol)
    first_trapped = None
    if np.any(trapped):
        jt = int(np.argmin(np.where(trapped, u_cross, np.inf)))
        first_trapped = (float(u_prev + h_u), float(new.coord[jt]))
    return first_mots, first_trapped


def evolve(
    data: CharacteristicData,
    grid: GridSpec,
    params: PhysicalParams,
    stop: StopPolicy = StopPolicy.STOP_AT_FIRST_MOTS,
    mots_tol: Optional[float] = None,
    stream: Optional[TextIO] = None,
) -> Solution:
    """March u-slices from u0 and return an immutable Solution."""
    first = data.initial_strip_slice()
    if mots_tol is None:
        mots_tol = default_mots_tol(grid, float(first.w[-1] / first.r[-1]))
    return _march(
        first,
        0,
        data,
        grid,
        params,
        stop,
        mots_tol,
        r2_ref=float(first.r[-1]),
        stream=stream,
    )


def _stream_slice(fh: TextIO, u: float, sl: FieldSlice, header: bool = False) -> None:
    if header:
        fh.write("u,v,r,dur,dvr,ln_lapse,q,a_u,m,re_phi,im_phi\n")
    lam = sl.w / sl.r
    for j in range(len(sl)):
        row = (
            u,
            sl.coord[j],
            sl.r[j],
            sl.dur[j],
            lam[j],
            sl.ln_lapse[j],
            sl.q[j],
            sl.a_u[j],
            sl.mass[j],
            sl.phi[j].real,
            sl.phi[j].imag,
        )
        fh.write(",".join(format(x, ".17g") for x in row) + "\n")


# ---------------------------------------------------------------------------
# Self-convergence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceResult:
    orders: dict
    p: float
    exact: bool
    diffs: dict


def convergence_order(
    data: CharacteristicData,
    grid: GridSpec,
    params: PhysicalParams,
    levels: int = 3,
    fields: tuple = ("r", "phi"),
) -> ConvergenceResult:
    """Observed self-convergence order on nested grids h, h/2, h/4, ...

    Rebuilds the characteristic data at every refinement from the stored
    profiles and compares solutions on the common coarse grid; the order is
    p = log2(|S_h - S_h/2| / |S_h/2 - S_h/4|) from the finest three levels.
    """
    if levels < 3:
        raise ValueError("need at least 3 levels")
    sols = []
    for k in range(levels):
        g = grid.refined(2**k)
        d, p_res = build_characteristic_data(
            data.profile_c, data.profile_cbar, g, params
        )
        sol = evolve(d, g, p_res, stop=StopPolicy.RUN_TO_END)
        if sol.status is not SolutionStatus.COMPLETED or sol.n_slices != g.n_u:
            raise RuntimeError(
                f"level {k} did not complete (status {sol.status.value}); "
                "convergence studies need data that stay regular on the strip"
            )
        sols.append(sol)

    diffs: dict = {name: [] for name in fields}
    for k in range(levels - 1):
        a, b = sols[k], sols[k + 1]
        sa, sb = 2**k, 2 ** (k + 1)
        for name in fields:
            fa = getattr(a, name)[::sa, ::sa]
            fb = getattr(b, name)[::sb, ::sb]
            d = float(np.max(np.abs(fa - fb)))
            if not math.isfinite(d):
                raise RuntimeError(f"non-finite norm for field {name!r} at level {k}")
            diffs[name].append(d)

    scale = max(float(np.max(np.abs(getattr(sols[0], name)))) for name in fields)
    exact = all(d <= 1e-13 * max(1.0, scale) for ds in diffs.values() for d in ds)
    orders = {}
    for name in fields:
        e1, e2 = diffs[name][-2], diffs[name][-1]
        orders[name] = math.nan if exact or e2 == 0.0 else math.log2(e1 / e2)
    p = math.nan if exact else min(orders.values())
    return ConvergenceResult(orders=orders, p=p, exact=exact, diffs=diffs)


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

_CKPT_FIELDS = [
    "v",
    "r",
    "dur",
    "w",
    "ln_lapse",
    "re_phi",
    "im_phi",
    "re_du_phi",
    "im_du_phi",
    "a_u",
    "q",
    "mass",
]


@dataclass(frozen=True)
class Checkpoint:
    grid: GridSpec
    params: PhysicalParams
    slice_index: int
    u: float
    mots_tol: float
    r2_ref: float
    slice: FieldSlice


def save_checkpoint(path: str, sol: Solution, index: int = -1) -> None:
    """Header (grid spec, params, slice index) + raw field table; restartable."""
    if index < 0:
        index = sol.n_slices + index
    sl = sol.slice_view(index)
    header = {
        "schema_version": 1,
        "grid": {
            "u0": sol.grid.u0,
            "u_end": sol.grid.u_end,
            "v1": sol.grid.v1,
            "v2": sol.grid.v2,
            "n_u": sol.grid.n_u,
            "n_v": sol.grid.n_v,
        },
        "params": {
            "coupling": sol.params.coupling,
            "omega": sol.params.omega,
            "r_floor": sol.params.r_floor,
            "residual_warn_scale": sol.params.residual_warn_scale,
        },
        "slice_index": sol.start_index + index,
        "u": float(sol.u[index]),
        "mots_tol": sol.mots_tol,
        "r2_ref": sol.r2_ref,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(_CKPT_FIELDS) + "\n")
        for j in range(len(sl)):
            row = (
                sl.coord[j],
                sl.r[j],
                sl.dur[j],
                sl.w[j],
                sl.ln_lapse[j],
                sl.phi[j].real,
                sl.phi[j].imag,
                sl.du_phi[j].real,
                sl.du_phi[j].imag,
                sl.a_u[j],
                sl.q[j],
                sl.mass[j],
            )
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")


def load_checkpoint(path: str) -> Checkpoint:
    with open(path) as fh:
        header = json.loads(fh.readline())
        cols = fh.readline().strip().split(",")
        if cols != _CKPT_FIELDS:
            raise ValueError(f"unexpected checkpoint columns {cols}")
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    g = header["grid"]
    grid = GridSpec(g["u0"], g["u_end"], g["v1"], g["v2"], g["n_u"], g["n_v"])
    params = PhysicalParams(**header["params"])
    col = {name: table[:, k] for k, name in enumerate(_CKPT_FIELDS)}
    sl = FieldSlice(
        coord=col["v"],
        r=col["r"],
        dur=col["dur"],
        w=col["w"],
        ln_lapse=col["ln_lapse"],
        phi=col["re_phi"] + 1j * col["im_phi"],
        du_phi=col["re_du_phi"] + 1j * col["im_du_phi"],
        a_u=col["a_u"],
        q=col["q"],
        mass=col["mass"],
    )
    return Checkpoint(
        grid=grid,
        params=params,
        slice_index=int(header["slice_index"]),
        u=float(header["u"]),
        mots_tol=float(header["mots_tol"]),
        r2_ref=float(header["r2_ref"]),
        slice=sl,
    )


def resume_evolution(
    ckpt: Checkpoint,
    data: CharacteristicData,
    stop: StopPolicy = StopPolicy.RUN_TO_END,
    stream: Optional[TextIO] = None,
) -> Solution:
    """Continue a checkpointed run; bit-identical to the uninterrupted march."""
    if ckpt.grid != data.grid:
        raise ValueError("checkpoint grid does not match the characteristic data")
    return _march(
        ckpt.slice,
        ckpt.slice_index,
        data,
        ckpt.grid,
        ckpt.params,
        stop,
        ckpt.mots_tol,
        ckpt.r2_ref,
        stream=stream,
    )
