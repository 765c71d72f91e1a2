"""Slice diagnostics, constraint residuals, and inequality monitors.

Monitors evaluate the a-priori bounds that hold for the evolved system while
its premises do (typically: strictly before the first marginally outer
trapped surface, at radii above x_star, with non-supercharged incoming data
and the smallness conditions satisfied).  A monitor never aborts a run; it
reports the worst signed margin (positive = satisfied with slack) over the
region where its premise holds, with a discretization tolerance
residual_warn_scale * h^2 * scale subtracted before a violation is declared.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import criteria as _criteria

__all__ = [
    "MonitorResult",
    "MonitorReport",
    "ResidualReport",
    "slice_diagnostics",
    "monitor_all",
    "constraint_residuals",
    "residual_supnorms",
]

FOUR_PI = 4.0 * math.pi
_EPS = float(np.finfo(float).eps)


# ---------------------------------------------------------------------------
# Per-slice diagnostics
# ---------------------------------------------------------------------------


def slice_diagnostics(sol, i_u: int) -> dict:
    """eta, delta, x, end masses and sup Q^2/r^2 for one stored slice."""
    r1 = float(sol.r[i_u, 0])
    r2 = float(sol.r[i_u, -1])
    m1 = float(sol.mass[i_u, 0])
    m2 = float(sol.mass[i_u, -1])
    return {
        "eta": 2.0 * (m2 - m1) / r2,
        "delta": r2 / r1 - 1.0,
        "x": r2 / sol.r2_ref,
        "m1": m1,
        "m2": m2,
        "sup_q2_over_r2": float(np.max((sol.q[i_u] / sol.r[i_u]) ** 2)),
    }


# ---------------------------------------------------------------------------
# Constraint residuals
# ---------------------------------------------------------------------------


def residual_supnorms(r, dur, w, ln_lapse, phi, du_phi, q, h_u, h_v, coupling) -> dict:
    """Per-slice sup-norms of the monitored constraints, centered differences.

    Keys: incoming Raychaudhuri ("ems3"), outgoing Raychaudhuri ("ems4") and
    the charge-transport cross-consistency ("charge").  Entries where the
    centered stencil does not fit are NaN.
    """
    ns = r.shape[0]
    ominv2 = np.exp(-2.0 * ln_lapse)
    lam = w / r

    ems4 = np.full(ns, np.nan)
    if r.shape[1] >= 3:
        y = ominv2 * lam
        dy = (y[:, 2:] - y[:, :-2]) / (2.0 * h_v)
        dvphi = (phi[:, 2:] - phi[:, :-2]) / (2.0 * h_v)
        res4 = dy + FOUR_PI * r[:, 1:-1] * ominv2[:, 1:-1] * np.abs(dvphi) ** 2
        ems4[:] = np.max(np.abs(res4), axis=1)

    # u-centered stencils only where both neighbours are evolved slices: the
    # initial slice carries 4th-order cone data whose quadrature rule differs
    # from the march's, so stencils straddling it see a spurious O(h) layer.
    ems3 = np.full(ns, np.nan)
    charge = np.full(ns, np.nan)
    if ns >= 4:
        xfield = ominv2 * dur
        dx = (xfield[3:] - xfield[1:-2]) / (2.0 * h_u)
        res3 = dx + FOUR_PI * r[2:-1] * ominv2[2:-1] * np.abs(du_phi[2:-1]) ** 2
        ems3[2:-1] = np.max(np.abs(res3), axis=1)

        # u-transport of Q has the sign opposite to the v-transport (current
        # conservation: d_u(r^2 J_v) + d_v(r^2 J_u) = 0)
        dq = (q[3:] - q[1:-2]) / (2.0 * h_u)
        rhs = -FOUR_PI * coupling * r[2:-1] ** 2 * (np.conj(phi[2:-1]) * du_phi[2:-1]).imag
        charge[2:-1] = np.max(np.abs(dq - rhs), axis=1)

    return {"ems3": ems3, "ems4": ems4, "charge": charge}


@dataclass(frozen=True)
class ResidualReport:
    per_slice: dict
    global_sup: dict

    def to_dict(self) -> dict:
        return {
            "global_sup": self.global_sup,
            "per_slice": {k: v.tolist() for k, v in self.per_slice.items()},
        }


def constraint_residuals(sol) -> ResidualReport:
    """Residuals of the demoted constraints plus the mass-transport cross-checks."""
    h_u, h_v = sol.grid.h_u, sol.grid.h_v
    per = dict(
        residual_supnorms(
            sol.r, sol.dur, sol.w, sol.ln_lapse, sol.phi, sol.du_phi, sol.q,
            h_u, h_v, sol.params.coupling,
        )
    )

    ns = sol.n_slices
    ominv2 = np.exp(-2.0 * sol.ln_lapse)
    lam = sol.w / sol.r
    mid = slice(1, -1)

    mass_v = np.full(ns, np.nan)
    if sol.r.shape[1] >= 3:
        dm = (sol.mass[:, 2:] - sol.mass[:, :-2]) / (2.0 * h_v)
        dvphi = (sol.phi[:, 2:] - sol.phi[:, :-2]) / (2.0 * h_v)
        rhs_v = (
            -8.0 * math.pi * sol.r[:, mid] ** 2 * ominv2[:, mid] * sol.dur[:, mid] * np.abs(dvphi) ** 2
            + sol.q[:, mid] ** 2 * lam[:, mid] / (2.0 * sol.r[:, mid] ** 2)
        )
        mass_v[:] = np.max(np.abs(dm - rhs_v), axis=1)
    per["mass_v"] = mass_v

    mass_u = np.full(ns, np.nan)
    if ns >= 4:
        mid_u = slice(2, -1)
        dmu = (sol.mass[3:] - sol.mass[1:-2]) / (2.0 * h_u)
        rhs_u = (
            -8.0 * math.pi * sol.r[mid_u] ** 2 * ominv2[mid_u] * lam[mid_u] * np.abs(sol.du_phi[mid_u]) ** 2
            + sol.q[mid_u] ** 2 * sol.dur[mid_u] / (2.0 * sol.r[mid_u] ** 2)
        )
        mass_u[2:-1] = np.max(np.abs(dmu - rhs_u), axis=1)
    per["mass_u"] = mass_u

    global_sup = {}
    for k, v in per.items():
        finite = v[np.isfinite(v)]
        global_sup[k] = float(np.max(finite)) if finite.size else 0.0
    return ResidualReport(per_slice=per, global_sup=global_sup)


# ---------------------------------------------------------------------------
# Monitors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonitorResult:
    name: str
    worst_margin: Optional[float]
    location: Optional[tuple]
    tolerance_used: float
    premise_held: bool
    premise: str
    violated: bool
    n_points: int


@dataclass(frozen=True)
class MonitorReport:
    monitors: dict
    no_mots_up_to_u: Optional[float]
    x_star: float

    def to_dict(self) -> dict:
        return {
            "no_mots_up_to_u": self.no_mots_up_to_u,
            "x_star": self.x_star,
            "monitors": {k: asdict(v) for k, v in self.monitors.items()},
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def violations(self) -> list:
        return [r.name for r in self.monitors.values() if r.violated]


def _result_from_margins(
    name: str,
    margins: np.ndarray,
    u_loc: np.ndarray,
    v_loc: np.ndarray,
    tol: float,
    premise: str,
) -> MonitorResult:
    if margins.size == 0:
        return MonitorResult(
            name=name,
            worst_margin=None,
            location=None,
            tolerance_used=tol,
            premise_held=False,
            premise=premise,
            violated=False,
            n_points=0,
        )
    k = int(np.argmin(margins))
    worst = float(margins[k])
    return MonitorResult(
        name=name,
        worst_margin=worst,
        location=(float(u_loc[k]), float(v_loc[k])),
        tolerance_used=tol,
        premise_held=True,
        premise=premise,
        violated=worst < -tol,
        n_points=int(margins.size),
    )


def _skipped(name: str, premise: str, tol: float = 0.0) -> MonitorResult:
    return MonitorResult(
        name=name,
        worst_margin=None,
        location=None,
        tolerance_used=tol,
        premise_held=False,
        premise=premise,
        violated=False,
        n_points=0,
    )


def monitor_all(sol, data, params) -> MonitorReport:
    """Run every monitored inequality over a Solution; violations are data."""
    h_u, h_v = sol.grid.h_u, sol.grid.h_v
    h2 = max(h_u, h_v) ** 2
    warn = params.residual_warn_scale
    omega = params.omega
    eps_sup = data.epsilon
    delta0 = data.delta0
    eta0 = data.eta0
    x_star = data.x_star

    u, v = sol.u, sol.v
    ns, m = sol.r.shape
    lam = sol.w / sol.r
    ominv2 = np.exp(-2.0 * sol.ln_lapse)
    eta = sol.series.eta
    delta = sol.series.delta
    x = sol.series.x

    # premise: strictly before the first MOTS band
    band = np.min(lam, axis=1) <= sol.mots_tol
    premise_n = int(np.argmax(band)) if np.any(band) else ns
    no_mots_u = float(u[premise_n - 1]) if premise_n > 0 else None

    def tol_for(scale: float, extra: float = 0.0) -> float:
        return warn * h2 * scale + 1e3 * _EPS * scale + extra

    results: dict[str, MonitorResult] = {}

    def add_pointwise(
        name, quantity, bound, rows, premise,
        u_axis=None, v_axis=None, extra_noise=0.0, scale_floor=1e-9,
    ):
        u_axis = u if u_axis is None else u_axis
        v_axis = v if v_axis is None else v_axis
        bound = np.broadcast_to(bound, quantity.shape)
        margins = (bound - quantity)[rows]
        uu = np.broadcast_to(u_axis[:, None], quantity.shape)[rows]
        vv = np.broadcast_to(v_axis[None, :], quantity.shape)[rows]
        scale = scale_floor
        if margins.size:
            scale = max(
                scale,
                float(np.max(np.abs(quantity[rows]))),
                float(np.max(np.abs(bound[rows]))),
            )
        tol = tol_for(scale, extra_noise)
        results[name] = _result_from_margins(
            name, margins.ravel(), uu.ravel(), vv.ravel(), tol, premise
        )

    def add_slicewise(name, quantity, bound, rows, premise, scale_floor=1e-9):
        q_arr = np.asarray(quantity, dtype=float)[rows]
        b_arr = np.broadcast_to(np.asarray(bound, dtype=float), (ns,))[rows]
        margins = b_arr - q_arr
        scale = scale_floor
        if margins.size:
            scale = max(scale, float(np.max(np.abs(q_arr))), float(np.max(np.abs(b_arr))))
        tol = tol_for(scale)
        results[name] = _result_from_margins(
            name, margins, u[rows], np.full(margins.shape, v[-1]), tol, premise
        )

    all_rows = np.ones(ns, dtype=bool)
    pre_rows = np.zeros(ns, dtype=bool)
    pre_rows[:premise_n] = True
    star_rows = x >= x_star - 1e-12
    ps_rows = pre_rows & star_rows

    # incoming contraction: Omega^-2 dr/du <= -(1-eps)/2 everywhere
    add_pointwise(
        "incoming_contraction_bound",
        ominv2 * sol.dur,
        np.full((ns, m), -(1.0 - eps_sup) / 2.0),
        all_rows,
        premise="holds everywhere evolved (needs sup Q^2/r^2 < 1 on the data)",
        scale_floor=0.5,
    )

    # m >= 0 wherever no MOTS has yet occurred
    add_pointwise(
        "mass_nonnegative",
        -sol.mass,
        np.zeros((ns, m)),
        pre_rows,
        premise="no MOTS or trapped surface up to this u",
        scale_floor=1e-6 * max(1.0, sol.r2_ref),
    )

    # d_u d_v r <= 0 on [u0, u*] (mixed finite difference of r)
    dd = (sol.r[1:, 1:] - sol.r[1:, :-1] - sol.r[:-1, 1:] + sol.r[:-1, :-1]) / (h_u * h_v)
    cell_rows = ps_rows[:-1] & ps_rows[1:]
    mixed_noise = 16.0 * _EPS * float(np.max(sol.r)) / (h_u * h_v)
    add_pointwise(
        "mixed_radius_concavity",
        dd,
        np.zeros_like(dd),
        cell_rows,
        premise="no MOTS yet, x >= x_star, non-supercharged incoming data",
        u_axis=u[:-1],
        v_axis=v[:-1],
        extra_noise=mixed_noise,
    )

    # delta(u) <= 1/2 and the ratio bound, up to u*
    add_slicewise(
        "delta_half_bound",
        delta,
        np.full(ns, 0.5),
        ps_rows,
        premise="no MOTS yet and x >= x_star",
        scale_floor=0.5,
    )
    big_x = x * (1.0 + delta0) - delta0
    with np.errstate(divide="ignore"):
        ratio_bound = np.where(big_x > 0.0, delta0 / np.where(big_x > 0.0, big_x, 1.0), np.inf)
    add_slicewise(
        "delta_ratio_bound",
        delta,
        ratio_bound,
        ps_rows & (big_x > 0.0),
        premise="no MOTS yet and x >= x_star",
        scale_floor=0.5,
    )

    # charge-density bounds
    cond3, _c3p, cond4, _c4p = _criteria.thm13_conditions(
        params.coupling,
        omega,
        eps_sup,
        data.big_l,
        data.grid.v2 - data.grid.v1,
        data.r2_u0,
        data.phi1_sq_sup,
    )
    charged_premise_ok = cond3.ok and cond4.ok and not data.supercharged
    charge_premise = (
        "no MOTS yet, x >= x_star, delta <= 1/2, smallness conditions on v2-v1, "
        "non-supercharged incoming data"
    )
    q2r2 = (sol.q / sol.r) ** 2
    eta_a = 2.0 * (sol.mass - sol.mass[:, :1]) / sol.r
    if charged_premise_ok:
        rows = ps_rows & (delta <= 0.5 + 1e-9)
        add_pointwise(
            "charge_density_bound_pointwise",
            q2r2,
            0.25 * omega * eta_a + 2.0 * q2r2[:, :1],
            rows,
            premise=charge_premise,
        )
        add_pointwise(
            "charge_density_bound_sup",
            q2r2,
            0.25 * omega * eta_a + 2.0 * eps_sup,
            rows,
            premise=charge_premise,
        )
    else:
        results["charge_density_bound_pointwise"] = _skipped(
            "charge_density_bound_pointwise", charge_premise
        )
        results["charge_density_bound_sup"] = _skipped(
            "charge_density_bound_sup", charge_premise
        )

    # Theta and lapse-ratio bounds at the strip ends
    r1c, r2c = sol.r[:, 0], sol.r[:, -1]
    m1c, m2c = sol.mass[:, 0], sol.mass[:, -1]
    nu2 = sol.dur[:, -1]
    lam1, lam2 = lam[:, 0], lam[:, -1]
    oi1, oi2 = ominv2[:, 0], ominv2[:, -1]
    xi1, xi2 = sol.du_phi[:, 0], sol.du_phi[:, -1]

    eta_rows = eta >= 8.0 * eps_sup / omega
    theta_c = r2c * np.abs(xi2) - r1c * np.abs(xi1)
    inv_r_gap = 1.0 / r1c - 1.0 / r2c
    with np.errstate(divide="ignore", invalid="ignore"):
        theta_bound_core = np.where(
            lam2 > 0.0, (-nu2) / (8.0 * math.pi * oi2 * np.where(lam2 > 0.0, lam2, 1.0)), np.inf
        ) * (m2c - m1c) * inv_r_gap
    theta_premise = "no MOTS yet, x >= x_star, eta >= 8 eps/omega, " + charge_premise
    if charged_premise_ok:
        rows = ps_rows & eta_rows
        add_slicewise(
            "theta_difference_bound",
            theta_c**2,
            (1.0 + 0.5 * omega) * theta_bound_core,
            rows,
            premise=theta_premise,
            scale_floor=1e-12,
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            ln_ratio = np.where(
                (lam1 > 0.0) & (lam2 > 0.0),
                np.log(np.where(lam2 > 0.0, oi2 * lam2, 1.0))
                - np.log(np.where(lam1 > 0.0, oi1 * lam1, 1.0)),
                np.inf,
            )
        add_slicewise(
            "lapse_ratio_decay",
            ln_ratio,
            -(1.0 - 0.5 * omega) * eta,
            rows,
            premise=theta_premise,
            scale_floor=1.0,
        )
    else:
        results["theta_difference_bound"] = _skipped("theta_difference_bound", theta_premise)
        results["lapse_ratio_decay"] = _skipped("lapse_ratio_decay", theta_premise)

    # eta floor and Gronwall-type lower bound
    gw = _criteria.g_omega(omega, delta0)
    eta0_hypothesis = eta0 >= 13.0 * eps_sup / omega + gw
    floor_premise = (
        "eta0 >= 13 eps/omega + g_omega(delta0), no MOTS yet, x >= x_star, "
        "non-supercharged incoming data"
    )
    if eta0_hypothesis and charged_premise_ok:
        add_slicewise(
            "eta_charge_floor",
            -eta,
            np.full(ns, -12.0 * eps_sup / omega),
            ps_rows,
            premise=floor_premise,
            scale_floor=1.0,
        )
        gron_bound = np.where(big_x > 0.0, big_x, 0.0) ** (1.0 + 0.5 * omega) * (eta0 - gw)
        add_slicewise(
            "eta_gronwall_lower",
            -eta * x * x,
            -gron_bound,
            ps_rows,
            premise=floor_premise,
            scale_floor=max(0.1, eta0),
        )
    else:
        results["eta_charge_floor"] = _skipped("eta_charge_floor", floor_premise)
        results["eta_gronwall_lower"] = _skipped("eta_gronwall_lower", floor_premise)

    # specializations for uncoupled (real scalar) runs
    if params.coupling == 0.0:
        add_pointwise(
            "incoming_contraction_bound_uncharged",
            ominv2 * sol.dur,
            np.full((ns, m), -0.5),
            all_rows,
            premise="holds everywhere evolved",
            scale_floor=0.5,
        )
        theta_r = r2c * xi2.real - r1c * xi1.real
        add_slicewise(
            "theta_difference_bound_uncharged",
            theta_r**2,
            theta_bound_core,
            ps_rows,
            premise="no MOTS yet and x >= x_star",
            scale_floor=1e-12,
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            ln_ratio_u = np.where(
                (lam1 > 0.0) & (lam2 > 0.0),
                np.log(np.where(lam2 > 0.0, oi2 * lam2, 1.0))
                - np.log(np.where(lam1 > 0.0, oi1 * lam1, 1.0)),
                np.inf,
            )
        add_slicewise(
            "lapse_ratio_decay_uncharged",
            ln_ratio_u,
            -eta,
            ps_rows,
            premise="no MOTS yet and x >= x_star",
            scale_floor=1.0,
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            safe_x = np.where(big_x > 0.0, big_x, 1.0)
            g_unc = np.log(safe_x / (x * x))
            f_unc = (
                delta0
                / (1.0 + delta0) ** 2
                * (np.log(1.0 / safe_x) + delta0 * (1.0 / safe_x - 1.0))
            )
        rows = ps_rows & (big_x > 0.0)
        add_slicewise(
            "eta_gronwall_lower_uncharged",
            -eta,
            -np.exp(g_unc) * (eta0 - f_unc),
            rows,
            premise="no MOTS yet and x >= x_star",
            scale_floor=max(0.1, eta0),
        )
        mink_premise = "incoming cone Minkowskian with vanishing scalar field, no MOTS yet"
        if data.cbar_minkowskian:
            add_slicewise(
                "minkowskian_incoming_eta0_bound",
                np.full(ns, eta0),
                np.where(big_x > 0.0, x * x / safe_x, np.inf),
                rows,
                premise=mink_premise,
                scale_floor=max(0.1, eta0),
            )
        else:
            results["minkowskian_incoming_eta0_bound"] = _skipped(
                "minkowskian_incoming_eta0_bound", mink_premise
            )

    return MonitorReport(monitors=results, no_mots_up_to_u=no_mots_u, x_star=x_star)
