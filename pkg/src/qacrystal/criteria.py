"""Lattice dispersion constant, critical inverse temperature, and phase verdicts.

Three ingredients from the phase-transition and stabilization criteria:

* ``theta_of_d`` -- the dimension constant
  theta(d) = d (2 pi)^{-d} integral over (-pi, pi]^d of dp / sum_j (1 - cos p_j),
  computed by a shifted midpoint tensor rule with Richardson extrapolation
  for d = 3, 4 and by the equivalent one-dimensional representation
  theta(d) = d * integral_0^inf [e^{-t} I0(t)]^d dt  for d >= 5.
* ``t_of_u`` / ``u_of_t`` -- the increasing function
  t(u) = (sqrt(u)/2) [log(1 + sqrt(u)) - log(1 - sqrt(u))]  and its inverse.
* ``solve_beta_star`` / ``classify_phase`` -- the unique solution beta_* of
  4 m upsilon^2 Jhat * u(beta / 4 m upsilon) = theta(d)  and the resulting
  verdict: a transition regime above beta_*, stabilization at all beta when
  Jhat < R_m, or undetermined when neither hypothesis holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .bessel import i0e
from .errors import ConvergenceError, DomainError, PreconditionError
from .spectral import OscillatorParams, Spectrum, single_site_spectrum

__all__ = [
    "LatticeDispersion",
    "PhaseClassification",
    "theta_of_d",
    "theta_bessel",
    "t_of_u",
    "u_of_t",
    "solve_beta_star",
    "beta_star_by_bisection",
    "classify_phase",
]

# Default midpoint grid pair (coarse, fine) for the tensor quadrature.
GRID_SIZES = {3: (64, 128), 4: (64, 128), 5: (16, 32), 6: (12, 24)}
# Measured convergence order of the shifted midpoint rule: the integrable
# 1/|p|^2 singularity degrades it to first order in d = 3 only.
GRID_ORDER = {3: 1}
GRID_NODE_BUDGET = 5 * 10**8

BETA_STAR_RTOL = 1e-9
INVERSION_ATOL = 1e-12


@dataclass(frozen=True)
class LatticeDispersion:
    """Computed theta(d) with a conservative accuracy estimate."""

    d: int
    theta: float
    quadrature_error: float
    method: str


@dataclass(frozen=True)
class PhaseClassification:
    """Verdict for one parameter set plus the numbers that produced it."""

    verdict: str  # stabilized_all_beta | transition_regime | undetermined
    beta_star: float | None
    params: OscillatorParams
    criteria_values: dict


def _theta_grid_raw(d: int, size: int) -> float:
    """Shifted midpoint tensor rule; nodes never hit the p = 0 singularity."""
    if size % 2 != 0:
        raise DomainError("grid size must be even so that no node lands on p = 0")
    if size**d > GRID_NODE_BUDGET:
        raise ConvergenceError(
            f"tensor grid {size}^{d} exceeds the node budget {GRID_NODE_BUDGET:.0e}"
        )
    step = 2.0 * math.pi / size
    nodes = -math.pi + (np.arange(size) + 0.5) * step
    one_minus_cos = 1.0 - np.cos(nodes)
    rest = np.zeros((size,) * (d - 1))
    for axis in np.meshgrid(*([one_minus_cos] * (d - 1)), indexing="ij", sparse=True):
        rest = rest + axis
    total = 0.0
    for x0 in one_minus_cos:  # chunk over the first axis to bound memory
        total += float(np.sum(1.0 / (x0 + rest)))
    return d * total / size**d


def _theta_grid_extrapolated(d: int, sizes: tuple[int, int]) -> tuple[float, float]:
    coarse, fine = sizes
    if not (coarse < fine and fine % coarse == 0):
        raise DomainError("grid sizes must be an increasing pair with fine a multiple of coarse")
    order = GRID_ORDER.get(d, 2)
    ratio = fine / coarse
    v_coarse = _theta_grid_raw(d, coarse)
    v_fine = _theta_grid_raw(d, fine)
    value = v_fine + (v_fine - v_coarse) / (ratio**order - 1.0)
    return value, abs(value - v_fine)


def _tail_coefficients(d: int) -> tuple[float, float, float, float]:
    # [e^{-t} I0(t)]^d ~ (2 pi t)^{-d/2} (1 + c1/t + c2/t^2 + ...) composed
    # from e^{-t} I0(t) ~ (2 pi t)^{-1/2} (1 + 1/(8t) + 9/(128 t^2) + ...).
    b1, b2, b3, b4 = 1.0 / 8, 9.0 / 128, 75.0 / 1024, 3675.0 / 32768
    c1 = d * b1
    c2 = d * b2 + d * (d - 1) / 2 * b1**2
    c3 = d * b3 + d * (d - 1) * b1 * b2 + d * (d - 1) * (d - 2) / 6 * b1**3
    c4 = (
        d * b4
        + d * (d - 1) / 2 * (2 * b1 * b3 + b2**2)
        + d * (d - 1) * (d - 2) / 2 * b1**2 * b2
        + d * (d - 1) * (d - 2) * (d - 3) / 24 * b1**4
    )
    return c1, c2, c3, c4


def theta_bessel(d: int, cutoff: float = 200.0) -> tuple[float, float]:
    """One-dimensional representation theta(d) = d * int_0^inf [e^{-t} I0(t)]^d dt.

    Adaptive quadrature up to `cutoff` plus an analytic power-law tail.
    Returns (value, error_estimate).
    """
    if d < 3:
        raise DomainError(f"theta(d) diverges for d = {d}; the integrand is non-integrable")
    value, quad_err = quad(
        lambda t: d * i0e(t) ** d, 0.0, cutoff, epsabs=1e-12, epsrel=1e-12, limit=400
    )
    s = 0.5 * d
    prefactor = d * (2.0 * math.pi) ** -s
    c1, c2, c3, c4 = _tail_coefficients(d)
    tail = prefactor * (
        cutoff ** (1 - s) / (s - 1)
        + c1 * cutoff**-s / s
        + c2 * cutoff ** (-1 - s) / (s + 1)
        + c3 * cutoff ** (-2 - s) / (s + 2)
    )
    tail_bound = 2.0 * prefactor * abs(c4) * cutoff ** (-3 - s) / (s + 3)
    return value + tail, quad_err + tail_bound


def theta_of_d(d: int, grid_sizes: tuple[int, int] | None = None, cross_check: bool = True) -> LatticeDispersion:
    """Dimension constant theta(d) for d >= 3.

    For d = 3, 4 the extrapolated midpoint tensor rule is the primary value
    and the one-dimensional Bessel representation is available as an oracle;
    for d >= 5 the roles swap (tensor grids become cost-prohibitive) and a
    coarse grid cross-check guards the primary value when affordable.
    """
    if not (isinstance(d, int) and d >= 3):
        raise DomainError(f"theta(d) requires integer d >= 3, got {d!r}")
    if d <= 4:
        sizes = grid_sizes or GRID_SIZES[d]
        value, ext_diff = _theta_grid_extrapolated(d, sizes)
        dispersion = LatticeDispersion(
            d=d, theta=value, quadrature_error=ext_diff, method="midpoint-grid+richardson"
        )
    else:
        value, err = theta_bessel(d)
        if cross_check and (grid_sizes or d in GRID_SIZES):
            sizes = grid_sizes or GRID_SIZES[d]
            grid_value, grid_err = _theta_grid_extrapolated(d, sizes)
            if abs(grid_value - value) > grid_err + err + 1e-6:
                raise ConvergenceError(
                    f"theta({d}) cross-check failed: grid {grid_value!r} vs "
                    f"one-dimensional representation {value!r}"
                )
        dispersion = LatticeDispersion(d=d, theta=value, quadrature_error=err, method="bessel-1d")
    if not dispersion.theta > 1.0:
        raise ConvergenceError(f"computed theta({d}) = {dispersion.theta!r} <= 1; quadrature failure")
    return dispersion


@lru_cache(maxsize=32)
def _theta_cached(d: int) -> LatticeDispersion:
    return theta_of_d(d)


def t_of_u(u: float) -> float:
    """t(u) = sqrt(u) * atanh(sqrt(u)) on [0, 1); increasing, divergent at 1."""
    if not (isinstance(u, (int, float)) and 0.0 <= u < 1.0):
        raise DomainError(f"t_of_u requires 0 <= u < 1, got {u!r}")
    if u == 0.0:
        return 0.0
    root = math.sqrt(u)
    return root * math.atanh(root)


def _t_derivative(u: float) -> float:
    root = math.sqrt(u)
    return math.atanh(root) / (2.0 * root) + 1.0 / (2.0 * (1.0 - u))


def u_of_t(t: float) -> float:
    """Inverse of `t_of_u`, by bisection plus Newton polishing.

    Total on t >= 0; the residual |t(u) - t| is certified <= 1e-12 (absolute)
    whenever the answer is representable below 1.
    """
    if not (isinstance(t, (int, float)) and t >= 0.0 and math.isfinite(t)):
        raise DomainError(f"u_of_t requires finite t >= 0, got {t!r}")
    if t == 0.0:
        return 0.0
    hi = 1.0 - 1e-16
    if t >= t_of_u(hi):
        return hi  # saturated: u(t) -> 1 as t -> inf faster than doubles resolve
    lo = 0.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if t_of_u(mid) < t:
            lo = mid
        else:
            hi = mid
    u = 0.5 * (lo + hi)
    for _ in range(4):
        residual = t_of_u(u) - t
        u -= residual / _t_derivative(u)
        u = min(max(u, 0.0), 1.0 - 1e-16)
    if abs(t_of_u(u) - t) > INVERSION_ATOL:
        raise ConvergenceError(f"u_of_t failed to reach residual {INVERSION_ATOL} at t = {t}")
    return u


def _transition_lhs(params: OscillatorParams) -> float:
    return 4.0 * params.m * params.upsilon**2 * params.j_hat


def solve_beta_star(params: OscillatorParams, dispersion: LatticeDispersion) -> float:
    """Unique beta_* with 4 m upsilon^2 Jhat * u(beta_*/(4 m upsilon)) = theta(d).

    Closed form beta_* = 4 m upsilon * t(theta / (4 m upsilon^2 Jhat)); the
    residual of the defining equation is verified below 1e-9 relative.
    """
    if params.upsilon <= 0.0:
        raise PreconditionError(
            "beta_* requires the double-well regime (b1 > a/2 so that upsilon > 0)",
            lhs=params.b1,
            rhs=0.5 * params.a,
        )
    lhs = _transition_lhs(params)
    if not lhs > dispersion.theta:
        raise PreconditionError(
            f"transition hypothesis violated: 4 m upsilon^2 Jhat = {lhs:.6g} "
            f"must exceed theta({dispersion.d}) = {dispersion.theta:.6g}",
            lhs=lhs,
            rhs=dispersion.theta,
        )
    scale = 4.0 * params.m * params.upsilon
    beta_star = scale * t_of_u(dispersion.theta / lhs)
    residual = abs(lhs * u_of_t(beta_star / scale) - dispersion.theta) / dispersion.theta
    if residual > BETA_STAR_RTOL:
        raise ConvergenceError(f"beta_* residual {residual:.3e} exceeds {BETA_STAR_RTOL}")
    return beta_star


def beta_star_by_bisection(
    params: OscillatorParams, dispersion: LatticeDispersion, rtol: float = 1e-12
) -> float:
    """Self-check root finder for the beta_* equation, independent of `t_of_u`'s inverse role."""
    if params.upsilon <= 0.0:
        raise PreconditionError("double-well regime required", lhs=params.b1, rhs=0.5 * params.a)
    lhs = _transition_lhs(params)
    if not lhs > dispersion.theta:
        raise PreconditionError("transition hypothesis violated", lhs=lhs, rhs=dispersion.theta)
    scale = 4.0 * params.m * params.upsilon

    def f(beta: float) -> float:
        return lhs * u_of_t(beta / scale) - dispersion.theta

    lo, hi = 0.0, scale
    while f(hi) < 0.0:
        hi *= 2.0
        if hi > 1e12 * scale:
            raise ConvergenceError("beta_* bracket expansion failed")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def classify_phase(
    params: OscillatorParams,
    levels: int = 8,
    spectrum: Spectrum | None = None,
    dispersion: LatticeDispersion | None = None,
) -> PhaseClassification:
    """Verdict per the stabilization and transition criteria.

    stabilized_all_beta  when Jhat < R_m (uniqueness at every temperature);
    transition_regime    when d >= 3, upsilon > 0 and 4 m upsilon^2 Jhat > theta(d),
                         with the critical beta_* attached;
    undetermined         when neither hypothesis holds.

    The two hypotheses are mutually exclusive (R_m <= 1/(4 m upsilon^2));
    a simultaneous numerical satisfaction is raised as an inconsistency.
    """
    if spectrum is None:
        spectrum = single_site_spectrum(params, levels=levels)
    rigidity = spectrum.rigidity
    j_hat = params.j_hat
    stabilized = j_hat < rigidity

    transition = False
    theta = None
    beta_star = None
    lhs = _transition_lhs(params)
    if params.d >= 3 and params.upsilon > 0.0:
        if dispersion is None:
            dispersion = _theta_cached(params.d)
        theta = dispersion.theta
        transition = lhs > theta

    if stabilized and transition:
        raise ConvergenceError(
            "both hypotheses satisfied numerically; the rigidity bound "
            f"R_m <= 1/(4 m upsilon^2) rules this out (R_m = {rigidity:.6g}, "
            f"1/(4 m upsilon^2) = {1.0 / (4.0 * params.m * params.upsilon**2):.6g})"
        )
    if stabilized and not params.harmonic and lhs >= 1.0 + BETA_STAR_RTOL:
        raise ConvergenceError(
            f"stabilized verdict with 4 m upsilon^2 Jhat = {lhs:.9g} >= 1; "
            "inconsistent with the rigidity bound, spectral solve suspect"
        )

    if stabilized:
        verdict = "stabilized_all_beta"
    elif transition:
        assert dispersion is not None
        beta_star = solve_beta_star(params, dispersion)
        verdict = "transition_regime"
    else:
        verdict = "undetermined"

    return PhaseClassification(
        verdict=verdict,
        beta_star=beta_star,
        params=params,
        criteria_values={
            "rigidity": rigidity,
            "gap": spectrum.gap,
            "j_hat": j_hat,
            "four_m_upsilon_sq_jhat": lhs,
            "theta": theta,
            "beta_star": beta_star,
        },
    )
