"""Closed-form trapped-surface criterion functions and theorem-hypothesis checks.

Notation: delta0 = r2/r1 - 1 and eta0 = 2(m2 - m1)/r2 on the initial outgoing
cone, x = r2(u)/r2(u0), and x_star = 3 delta0 / (1 + delta0).  The uncharged
criterion threshold is

    E(x) = x/(1+x)^2 * (ln(1/(2x)) + 5 - x),

which coincides with exp(-G(x_star)) + F(x_star) built from the uncharged
integrating-factor pair

    g(x) = 1 - d0/(x(1+d0) - d0),    f(x) = d0/(x(1+d0) - d0),
    G(x) = ln((x(1+d0) - d0)/x^2),   F(x) = int_x^1 exp(-G) f/s ds  (closed form).

The charged versions carry the margin parameter omega in (0, 2/3):

    g(x) = 1 - w/2 - (1+w/2) d0/(x(1+d0) - d0),
    f(x) = (1+w/2)/(1-w/2) * d0/(x(1+d0) - d0),
    G(x) = ln((x(1+d0) - d0)^(1+w/2) / x^2),

and g_omega(d0) = F(x_star).  All quadrature helpers here integrate the
*defining* integrals (adaptive Gauss-Kronrod via scipy) and exist as
independent oracles for the closed forms; they are not used by the solvers.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from scipy.integrate import quad

from .state import OMEGA_MAX

__all__ = [
    "big_e",
    "g_omega",
    "big_g",
    "big_f",
    "big_g_quadrature",
    "big_f_quadrature",
    "g_omega_quadrature",
    "thm13_threshold",
    "thm13_conditions",
    "ConditionCheck",
    "TheoremCheck",
    "Thm13Check",
    "CriteriaReport",
    "evaluate_criteria",
    "evaluate_criteria_scalars",
    "e_table_csv",
    "threshold_table_csv",
]


def _check_omega(omega: float) -> None:
    if not (0.0 < omega < OMEGA_MAX):
        raise ValueError(f"omega must lie in (0, 2/3), got {omega}")


def big_e(x: float) -> float:
    """Uncharged criterion threshold E(x) = x/(1+x)^2 (ln(1/(2x)) + 5 - x)."""
    if x <= 0.0:
        raise ValueError(f"big_e requires x > 0, got {x}")
    return x / (1.0 + x) ** 2 * (math.log(1.0 / (2.0 * x)) + 5.0 - x)


def g_omega(omega: float, x: float) -> float:
    """Charged threshold offset g_omega(x); equals F_charged(x_star) with delta0 = x."""
    _check_omega(omega)
    if x < 0.0:
        raise ValueError(f"g_omega requires x >= 0, got {x}")
    hw = 0.5 * omega
    pref = (1.0 + hw) / (1.0 - hw) / (1.0 + x) ** 2
    coeff = 2.0 ** (1.0 - hw) / omega + 1.0 / (2.0 ** (1.0 + hw) * (1.0 + hw))
    return pref * (coeff * x ** (1.0 - hw) - (2.0 / omega) * x - x * x / (1.0 + hw))


def _check_x_domain(x: float, delta0: float) -> float:
    """Return X = x(1+delta0) - delta0, rejecting the singular point and beyond."""
    if delta0 <= 0.0:
        raise ValueError(f"delta0 must be > 0, got {delta0}")
    big_x = x * (1.0 + delta0) - delta0
    if big_x <= 0.0:
        raise ValueError(
            f"x = {x} is at or below the singular point delta0/(1+delta0) = "
            f"{delta0 / (1.0 + delta0)}"
        )
    return big_x


def big_g(x: float, delta0: float, omega: Optional[float] = None) -> float:
    """Integrating-factor exponent G(x); uncharged form when omega is None."""
    big_x = _check_x_domain(x, delta0)
    if omega is None:
        return math.log(big_x / (x * x))
    _check_omega(omega)
    return math.log(big_x ** (1.0 + 0.5 * omega) / (x * x))


def big_f(x: float, delta0: float, omega: Optional[float] = None) -> float:
    """Source integral F(x) in closed form; uncharged form when omega is None."""
    big_x = _check_x_domain(x, delta0)
    if omega is None:
        return (
            delta0
            / (1.0 + delta0) ** 2
            * (math.log(1.0 / big_x) + delta0 * (1.0 / big_x - 1.0))
        )
    _check_omega(omega)
    hw = 0.5 * omega
    pref = (1.0 + hw) / (1.0 - hw) * delta0 / (1.0 + delta0) ** 2
    return pref * (
        (2.0 / omega) * (big_x ** (-hw) - 1.0)
        + delta0 / (1.0 + hw) * (big_x ** (-1.0 - hw) - 1.0)
    )


# ---------------------------------------------------------------------------
# Quadrature oracles (defining integrals, independent of the closed forms)
# ---------------------------------------------------------------------------

_QUAD_TOL = 1e-10


def _fg_integrands(delta0: float, omega: Optional[float]):
    if omega is None:
        def g_small(s: float) -> float:
            return 1.0 - delta0 / (s * (1.0 + delta0) - delta0)

        def f_small(s: float) -> float:
            return delta0 / (s * (1.0 + delta0) - delta0)
    else:
        hw = 0.5 * omega

        def g_small(s: float) -> float:
            return 1.0 - hw - (1.0 + hw) * delta0 / (s * (1.0 + delta0) - delta0)

        def f_small(s: float) -> float:
            return (1.0 + hw) / (1.0 - hw) * delta0 / (s * (1.0 + delta0) - delta0)

    return g_small, f_small


def big_g_quadrature(x: float, delta0: float, omega: Optional[float] = None) -> float:
    """G(x) = int_x^1 g(s)/s ds by adaptive quadrature."""
    _check_x_domain(x, delta0)
    g_small, _ = _fg_integrands(delta0, omega)
    val, _err = quad(lambda s: g_small(s) / s, x, 1.0, epsabs=_QUAD_TOL, epsrel=0.0, limit=200)
    return val


def big_f_quadrature(x: float, delta0: float, omega: Optional[float] = None) -> float:
    """F(x) = int_x^1 exp(-G(s)) f(s)/s ds with G itself integrated numerically."""
    _check_x_domain(x, delta0)
    g_small, f_small = _fg_integrands(delta0, omega)

    def integrand(s: float) -> float:
        gval, _ = quad(lambda t: g_small(t) / t, s, 1.0, epsabs=_QUAD_TOL, epsrel=0.0, limit=200)
        return math.exp(-gval) * f_small(s) / s

    val, _err = quad(integrand, x, 1.0, epsabs=_QUAD_TOL, epsrel=0.0, limit=200)
    return val


def g_omega_quadrature(omega: float, delta0: float) -> float:
    """g_omega(delta0) as the defining integral F(x_star), x_star = 3 d0/(1+d0)."""
    _check_omega(omega)
    x_star = 3.0 * delta0 / (1.0 + delta0)
    return big_f_quadrature(x_star, delta0, omega)


# ---------------------------------------------------------------------------
# Theorem predicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionCheck:
    lhs: float
    rhs: float
    ok: bool

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class TheoremCheck:
    threshold: float
    margin: float
    verdict: bool
    applicable: bool = True


@dataclass(frozen=True)
class Thm13Check:
    threshold: float
    margin: float
    verdict: bool
    cond3: ConditionCheck
    cond3_proof_variant: ConditionCheck
    cond4_printed: ConditionCheck
    cond4_proof_variant: ConditionCheck
    supercharged_ok: bool
    epsilon_ok: bool
    threshold_charge_branch: float
    threshold_mass_branch: float


@dataclass(frozen=True)
class CriteriaReport:
    thm11: TheoremCheck
    thm12: TheoremCheck
    thm13: Thm13Check
    eta0: float
    delta0: float
    epsilon: float
    big_l: float
    omega: float
    coupling: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def thm13_threshold(omega: float, delta0: float, epsilon: float) -> tuple[float, float, float]:
    """Charged lower-bound threshold and its two branches.

    Returns (threshold, charge_branch, mass_branch) with
    charge_branch = 13 eps/omega + g_omega(d0) and
    mass_branch   = 9 d0^(1-w/2) / (2^(1+w/2) (1+d0)^2) + g_omega(d0).
    """
    _check_omega(omega)
    gw = g_omega(omega, delta0)
    hw = 0.5 * omega
    charge_branch = 13.0 * epsilon / omega + gw
    mass_branch = 9.0 * delta0 ** (1.0 - hw) / (2.0 ** (1.0 + hw) * (1.0 + delta0) ** 2) + gw
    return max(charge_branch, mass_branch), charge_branch, mass_branch


def thm13_conditions(
    coupling: float,
    omega: float,
    epsilon: float,
    big_l: float,
    dv: float,
    r2_u0: float,
    phi1_sq_sup: float,
) -> tuple[ConditionCheck, ConditionCheck, ConditionCheck, ConditionCheck]:
    """Smallness conditions on v2 - v1 for the charged theorem.

    Returns (cond3, cond3_proof_variant, cond4_printed, cond4_proof_variant).
    The printed theorem forms gate the verdict; the proof-level variants
    (coupling^2 in the L term; the int r|phi|^2 bound) are reported alongside.
    Non-strict inequalities throughout.
    """
    if epsilon >= 1.0:
        raise ValueError("conditions require epsilon < 1")
    if dv <= 0.0:
        raise ValueError("dv = v2 - v1 must be > 0")
    e = coupling
    one_m_eps = 1.0 - epsilon

    lhs3 = 9.0 * e * e / (4.0 * one_m_eps**2) * dv * dv + 12.0 * math.pi * big_l * e / one_m_eps * dv
    cond3 = ConditionCheck(lhs=lhs3, rhs=omega / 4.0, ok=lhs3 <= omega / 4.0)

    lhs3p = 9.0 * e * e / (4.0 * one_m_eps**2) * dv * dv + 12.0 * math.pi * big_l * e * e / one_m_eps * dv
    cond3_proof = ConditionCheck(lhs=lhs3p, rhs=omega / 4.0, ok=lhs3p <= omega / 4.0)

    lhs4 = (
        45.0 * math.pi * e * e * dv * dv / (math.pi * one_m_eps**2)
        + 160.0 * math.pi * e * e * r2_u0 * dv / one_m_eps * phi1_sq_sup
    )
    cond4 = ConditionCheck(lhs=lhs4, rhs=4.0 * omega, ok=lhs4 <= 4.0 * omega)

    lhs4p = 9.0 * dv * dv / (16.0 * math.pi * one_m_eps) + 2.0 * r2_u0 * dv * phi1_sq_sup
    rhs4p = math.inf if e == 0.0 else omega * one_m_eps / (320.0 * e * e * math.pi)
    cond4_proof = ConditionCheck(lhs=lhs4p, rhs=rhs4p, ok=lhs4p <= rhs4p)

    return cond3, cond3_proof, cond4, cond4_proof


def evaluate_criteria_scalars(
    eta0: float,
    delta0: float,
    epsilon: float,
    big_l: float,
    omega: float,
    coupling: float,
    dv: float,
    r2_u0: float,
    phi1_sq_sup: float,
    supercharged: bool,
    cbar_minkowskian: Optional[bool] = None,
) -> CriteriaReport:
    """Theorem verdicts with signed margins, from scalar data summaries.

    Strict inequalities gate the eta0 thresholds; the smallness conditions are
    non-strict.  When `cbar_minkowskian` is None the flag defaults to "the
    incoming cone carries no scalar field" (phi1_sq_sup == 0 and big_l == 0).
    """
    if cbar_minkowskian is None:
        cbar_minkowskian = phi1_sq_sup == 0.0 and big_l == 0.0

    thr11 = big_e(delta0)
    thm11 = TheoremCheck(threshold=thr11, margin=eta0 - thr11, verdict=eta0 > thr11)

    thr12 = 4.5 * delta0
    thm12 = TheoremCheck(
        threshold=thr12,
        margin=eta0 - thr12,
        verdict=bool(cbar_minkowskian) and eta0 > thr12,
        applicable=bool(cbar_minkowskian),
    )

    cond3, cond3p, cond4, cond4p = thm13_conditions(
        coupling, omega, epsilon, big_l, dv, r2_u0, phi1_sq_sup
    )
    thr13, charge_branch, mass_branch = thm13_threshold(omega, delta0, epsilon)
    epsilon_ok = epsilon < 1.0
    verdict13 = (
        eta0 > thr13
        and cond3.ok
        and cond4.ok
        and not supercharged
        and epsilon_ok
    )
    thm13 = Thm13Check(
        threshold=thr13,
        margin=eta0 - thr13,
        verdict=verdict13,
        cond3=cond3,
        cond3_proof_variant=cond3p,
        cond4_printed=cond4,
        cond4_proof_variant=cond4p,
        supercharged_ok=not supercharged,
        epsilon_ok=epsilon_ok,
        threshold_charge_branch=charge_branch,
        threshold_mass_branch=mass_branch,
    )
    return CriteriaReport(
        thm11=thm11,
        thm12=thm12,
        thm13=thm13,
        eta0=eta0,
        delta0=delta0,
        epsilon=epsilon,
        big_l=big_l,
        omega=omega,
        coupling=coupling,
    )


def evaluate_criteria(data, params) -> CriteriaReport:
    """Theorem verdicts for built characteristic data."""
    return evaluate_criteria_scalars(
        eta0=data.eta0,
        delta0=data.delta0,
        epsilon=data.epsilon,
        big_l=data.big_l,
        omega=params.omega,
        coupling=params.coupling,
        dv=data.grid.v2 - data.grid.v1,
        r2_u0=data.r2_u0,
        phi1_sq_sup=data.phi1_sq_sup,
        supercharged=data.supercharged,
        cbar_minkowskian=data.cbar_minkowskian,
    )


# ---------------------------------------------------------------------------
# Table emitters
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".17g")


def e_table_csv(delta0s: Sequence[float]) -> str:
    lines = ["delta0,E"]
    for d in delta0s:
        lines.append(f"{_fmt(d)},{_fmt(big_e(d))}")
    return "\n".join(lines) + "\n"


def threshold_table_csv(
    delta0s: Sequence[float], omegas: Sequence[float], epsilon: float = 0.0
) -> str:
    lines = ["delta0,omega,g_omega,thm13_threshold,thm12_threshold,E"]
    for d in delta0s:
        for om in omegas:
            thr, _, _ = thm13_threshold(om, d, epsilon)
            lines.append(
                ",".join(
                    _fmt(x) for x in (d, om, g_omega(om, d), thr, 4.5 * d, big_e(d))
                )
            )
    return "\n".join(lines) + "\n"
