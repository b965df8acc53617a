"""Self-contained acceptance suite behind the `verify` subcommand.

Each criterion builds its own fixtures (no external data, no network),
checks its stated tolerance, and reports one pass/fail line.  The
symmetry-breaking trend is a diagnostic: it is reported but never gates
verification, since the underlying multiplicity statement concerns the
infinite volume.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .criteria import theta_bessel, theta_of_d, solve_beta_star, t_of_u, u_of_t, classify_phase, _theta_cached
from .loops import BoundaryCondition, LoopConfiguration, build_factory, default_slices
from .sampler import (
    ChainSettings,
    batch_means,
    clipped_identity,
    gks_audit,
    matsubara_estimate,
    metropolis_chain,
    order_parameter,
)
from .spectral import GridSpec, OscillatorParams, rigidity_mass_scan, single_site_spectrum

__all__ = ["CriterionResult", "CRITERIA", "run_all", "quadrature_moments"]


@dataclass(frozen=True)
class CriterionResult:
    name: str
    passed: bool
    runtime: float
    detail: str
    gated: bool = True


def quadrature_moments(
    params: OscillatorParams,
    factory,
    powers=(2, 4),
    half_width: float = 7.0,
    nodes: int = 160,
) -> tuple[float, ...]:
    """Deterministic tensor Gauss-Legendre moments of the discretized single-site law.

    Integrates x_0^p against exp(-w C^{-1} w / 2 - dt sum_k V(w_k)) over
    R^P; only feasible for small P (the acceptance case uses P = 3).
    """
    P = factory.slices
    dt = params.beta / P
    cov_inverse = (factory.basis.T / factory.spectral_weights) @ factory.basis
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = x * half_width
    w = w * half_width
    grid = np.stack(np.meshgrid(*([x] * P), indexing="ij"), axis=-1).reshape(-1, P)
    weight = np.ones(grid.shape[0])
    for i in range(P):
        weight = weight * np.tile(np.repeat(w, nodes ** (P - 1 - i)), nodes**i)
    quad = np.einsum("ni,ij,nj->n", grid, cov_inverse, grid)
    site_action = (-params.b1 * grid**2 + params.b2 * grid**4).sum(axis=1)
    density = weight * np.exp(-0.5 * quad - dt * site_action)
    normalization = density.sum()
    return tuple(float((density * grid[:, 0] ** p).sum() / normalization) for p in powers)


def _harmonic_grid(m: float, a: float, points: int) -> GridSpec:
    return GridSpec(half_width=10.0 * (m * a) ** -0.25, points=points)


def _criterion_harmonic_spectrum() -> tuple[bool, str]:
    params = OscillatorParams(m=1.0, a=4.0, b1=1.0, b2=1.0, J=0.1, d=3, beta=1.0, harmonic=True)
    spectrum = single_site_spectrum(params, levels=10, grid=_harmonic_grid(1.0, 4.0, 16000))
    exact = (np.arange(10) + 0.5) * 2.0
    err = float(np.max(np.abs(spectrum.eigenvalues - exact)))
    return err <= 1e-4, f"max |E_n - (n+1/2)*2| = {err:.2e} (tol 1e-4)"


def _criterion_rigidity_identities() -> tuple[bool, str]:
    worst_harmonic = 0.0
    for m in (0.1, 1.0, 10.0):
        params = OscillatorParams(m=m, a=4.0, b1=1.0, b2=1.0, J=0.1, d=3, beta=1.0, harmonic=True)
        spectrum = single_site_spectrum(params, levels=8, grid=_harmonic_grid(m, 4.0, 8000))
        worst_harmonic = max(worst_harmonic, abs(spectrum.rigidity - 4.0))
    violations = 0
    worst_ratio = 0.0
    n_sets = 0
    for m, a, b1, b2 in itertools.product((0.5, 1.0, 2.0), (0.5, 1.0), (1.0, 2.0, 3.0), (0.5, 1.0)):
        params = OscillatorParams(m=m, a=a, b1=b1, b2=b2, J=0.1, d=3, beta=1.0)
        spectrum = single_site_spectrum(params, levels=8)
        bound = 1.0 / (4.0 * m * params.upsilon**2)
        worst_ratio = max(worst_ratio, spectrum.rigidity / bound)
        if spectrum.rigidity > bound:
            violations += 1
        n_sets += 1
    passed = worst_harmonic <= 4e-4 and violations == 0
    return passed, (
        f"harmonic max |R_m - a| = {worst_harmonic:.2e} (tol 4e-4); "
        f"{n_sets} double-well sets, bound violations = {violations} "
        f"(max R_m * 4 m upsilon^2 = {worst_ratio:.3f})"
    )


def _criterion_small_mass_law() -> tuple[bool, str]:
    base = OscillatorParams(m=1.0, a=1.0, b1=1.0, b2=1.0, J=0.1, d=3, beta=1.0)
    masses = np.geomspace(1e-2, 1e-3, 8)
    result = rigidity_mass_scan(base, masses)
    slope = result.slope
    passed = slope is not None and -0.38 <= slope <= -0.28
    return passed, f"log-log slope of R_m vs m = {slope:.4f} (band [-0.38, -0.28], asymptote -1/3)"


def _criterion_theta_dispersion() -> tuple[bool, str]:
    grid3 = theta_of_d(3)
    oracle3, oracle_err = theta_bessel(3)
    diff = abs(grid3.theta - oracle3)
    t4 = theta_of_d(4).theta
    t6 = theta_of_d(6).theta
    ordered = grid3.theta > t4 > t6 > 1.0
    return diff <= 1e-4 and ordered, (
        f"|theta_grid(3) - theta_bessel(3)| = {diff:.2e} (tol 1e-4); "
        f"theta(3)={grid3.theta:.6f} > theta(4)={t4:.6f} > theta(6)={t6:.6f} > 1: {ordered}"
    )


def _criterion_inversion_beta_star() -> tuple[bool, str]:
    rng = np.random.default_rng(2026)
    worst_round = 0.0
    for u in rng.uniform(0.0, 0.999, size=100):
        worst_round = max(worst_round, abs(u_of_t(t_of_u(float(u))) - u))
    dispersions = {d: _theta_cached(d) for d in (3, 4, 5)}
    worst_residual = 0.0
    for _ in range(20):
        m = float(rng.uniform(0.3, 3.0))
        a = float(rng.uniform(0.5, 2.0))
        b1 = float(a / 2 * rng.uniform(1.5, 4.0))
        b2 = float(rng.uniform(0.3, 2.0))
        d = int(rng.choice([3, 4, 5]))
        dispersion = dispersions[d]
        upsilon = (2 * b1 - a) / (12 * b2)
        ratio = float(rng.uniform(1.1, 8.0))
        J = ratio * dispersion.theta / (4 * m * upsilon**2 * 2 * d)
        params = OscillatorParams(m=m, a=a, b1=b1, b2=b2, J=J, d=d, beta=1.0)
        beta_star = solve_beta_star(params, dispersion)
        lhs = 4 * m * upsilon**2 * params.j_hat
        residual = abs(lhs * u_of_t(beta_star / (4 * m * upsilon)) - dispersion.theta) / dispersion.theta
        worst_residual = max(worst_residual, residual)
    previous = math.inf
    monotone = True
    for factor in (1.0, 1.4, 2.0, 3.0, 5.0):
        params = OscillatorParams(m=1.0, a=1.0, b1=2.0, b2=1.0, J=1.3 * factor, d=3, beta=1.0)
        value = solve_beta_star(params, dispersions[3])
        monotone = monotone and value < previous
        previous = value
    passed = worst_round <= 1e-10 and worst_residual < 1e-9 and monotone
    return passed, (
        f"max round-trip |u(t(u)) - u| = {worst_round:.2e} (tol 1e-10); "
        f"max beta_* residual = {worst_residual:.2e} (tol 1e-9); "
        f"beta_* strictly decreasing in Jhat: {monotone}"
    )


def _criterion_classification_exclusivity() -> tuple[bool, str]:
    rng = np.random.default_rng(40)
    counts = {"stabilized_all_beta": 0, "transition_regime": 0, "undetermined": 0}
    both = 0
    consistency_failures = 0
    for _ in range(200):
        m = float(np.exp(rng.uniform(math.log(0.2), math.log(2.0))))
        a = float(rng.uniform(0.5, 2.0))
        b1 = float(rng.uniform(0.3, 2.5))
        b2 = float(rng.uniform(0.3, 2.0))
        J = float(np.exp(rng.uniform(math.log(0.01), math.log(3.0))))
        d = int(rng.choice([3, 4, 5]))
        params = OscillatorParams(m=m, a=a, b1=b1, b2=b2, J=J, d=d, beta=1.0)
        spectrum = single_site_spectrum(params, levels=8)
        dispersion = _theta_cached(d)
        stabilized = params.j_hat < spectrum.rigidity
        lhs = 4 * m * params.upsilon**2 * params.j_hat
        transition = params.upsilon > 0 and lhs > dispersion.theta
        if stabilized and transition:
            both += 1
        if stabilized and lhs >= 1.0 + 1e-9:
            consistency_failures += 1
        verdict = classify_phase(params, spectrum=spectrum, dispersion=dispersion).verdict
        counts[verdict] += 1
    passed = both == 0 and consistency_failures == 0
    return passed, (
        f"200 sets -> {counts}; simultaneous hypotheses: {both}; "
        f"stabilized sets with 4 m upsilon^2 Jhat >= 1 + 1e-9: {consistency_failures}"
    )


def _lag_covariances(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    P = samples.shape[1]
    lags = np.arange(P // 2 + 1)
    means = np.empty(lags.shape[0])
    errors = np.empty(lags.shape[0])
    for i, lag in enumerate(lags):
        series = (samples * np.roll(samples, -int(lag), axis=1)).mean(axis=1)
        means[i], errors[i] = batch_means(series)
    return lags, means, errors


def _criterion_exact_gaussian_sampler() -> tuple[bool, str]:
    factory = build_factory(beta=2.0, m=1.0, a=1.0, slices=32)
    rng = np.random.default_rng(314)
    samples = factory.sample_batch(rng, 10_000)
    lags, means, errors = _lag_covariances(samples)
    exact = factory.first_row[lags]
    deviations = np.abs(means - exact) / errors
    worst = float(np.max(deviations))
    return worst <= 4.0, f"max |cov_hat - S_beta| over {len(lags)} lags = {worst:.2f} standard errors (tol 4)"


def _criterion_sampler_vs_quadrature() -> tuple[bool, str]:
    # frozen oracle values for m=a=1, b1=2, b2=0.5, beta=1, P=3,
    # computed by the tensor Gauss-Legendre rule below (converged to 1e-12)
    frozen_m2 = 1.1704574057087
    frozen_m4 = 2.3675626572947
    params = OscillatorParams(m=1.0, a=1.0, b1=2.0, b2=0.5, J=0.0, d=1, beta=1.0)
    factory = build_factory(1.0, 1.0, 1.0, 3)
    oracle_m2, oracle_m4 = quadrature_moments(params, factory)
    if abs(oracle_m2 - frozen_m2) > 1e-9 or abs(oracle_m4 - frozen_m4) > 1e-9:
        return False, "quadrature oracle drifted from its frozen values"
    initial = LoopConfiguration.zeros((1,), 1.0, 3)
    settings = ChainSettings(sweeps=200_000, burn_in=1000, thinning=5, seed=11)
    result = metropolis_chain(initial, params, factory, settings)
    site = result.trace[:, 0, 0]
    m2, se2 = batch_means(site**2)
    m4, se4 = batch_means(site**4)
    dev2 = abs(m2 - frozen_m2) / se2
    dev4 = abs(m4 - frozen_m4) / se4
    return dev2 <= 4.0 and dev4 <= 4.0, (
        f"<w^2> = {m2:.5f}+-{se2:.5f} vs {frozen_m2:.5f} ({dev2:.2f} se); "
        f"<w^4> = {m4:.5f}+-{se4:.5f} vs {frozen_m4:.5f} ({dev4:.2f} se)"
    )


def _criterion_pimc_harmonic() -> tuple[bool, str]:
    params = OscillatorParams(m=1.0, a=1.0, b1=1.0, b2=1.0, J=0.0, d=1, beta=2.0, harmonic=True)
    factory = build_factory(2.0, 1.0, 1.0, 32)
    initial = LoopConfiguration.zeros((1,), 2.0, 32)
    settings = ChainSettings(sweeps=30_000, burn_in=500, thinning=1, seed=424)
    result = metropolis_chain(initial, params, factory, settings)
    lags, means, errors = _lag_covariances(result.trace[:, 0, :])
    exact = factory.first_row[lags]
    worst = float(np.max(np.abs(means - exact) / errors))
    redraw_rate = result.acceptance_rates["redraw"]
    exact_one = redraw_rate == 1.0
    return worst <= 4.0 and exact_one, (
        f"max lag deviation = {worst:.2f} standard errors (tol 4); "
        f"whole-loop redraw acceptance = {redraw_rate} (must be exactly 1)"
    )


def _criterion_symmetry_suite() -> tuple[bool, str]:
    # free boundary: order parameter vanishes
    params = OscillatorParams(m=1.0, a=1.0, b1=1.5, b2=1.0, J=0.2, d=3, beta=2.0)
    factory = build_factory(2.0, 1.0, 1.0, 16)
    initial = LoopConfiguration.zeros((2, 2, 2), 2.0, 16)
    settings = ChainSettings(sweeps=8000, burn_in=500, thinning=1, seed=5)
    free_run = metropolis_chain(initial, params, factory, settings)
    free_m = order_parameter(free_run, 0)
    free_ok = abs(free_m.value) <= 4.0 * free_m.std_error

    # mirrored clamped runs: exact pathwise antisymmetry
    deep = OscillatorParams(m=1.0, a=1.0, b1=3.0, b2=1.0, J=0.15, d=3, beta=2.0)
    clamp = math.sqrt(deep.upsilon)
    plus_initial = LoopConfiguration.constant(
        (2, 2, 2), 2.0, 16, clamp, BoundaryCondition.plus_clamped(clamp)
    )
    minus_initial = plus_initial.mirrored()
    mirror_settings = ChainSettings(sweeps=2000, burn_in=200, thinning=1, seed=7)
    plus_run = metropolis_chain(plus_initial, deep, factory, mirror_settings)
    minus_run = metropolis_chain(minus_initial, deep, factory, mirror_settings)
    mirror_ok = np.array_equal(minus_run.trace, -plus_run.trace)
    plus_m = order_parameter(plus_run, 0)
    minus_m = order_parameter(minus_run, 0)
    coupling_ok = minus_m.value == -plus_m.value

    # imaginary-time shift invariance of a two-point estimate
    clip = clipped_identity(5.0)
    tau = 2.0 * 4 / 16
    base = matsubara_estimate(free_run, [(0, clip), (0, clip)], [0.0, tau])
    shift = 3 * 2.0 / 16
    shifted = matsubara_estimate(
        free_run, [(0, clip), (0, clip)], [shift % 2.0, (tau + shift) % 2.0]
    )
    combined = math.hypot(base.std_error, shifted.std_error)
    shift_ok = abs(base.value - shifted.value) <= 2.0 * combined

    passed = free_ok and mirror_ok and coupling_ok and shift_ok
    return passed, (
        f"free M_hat = {free_m.value:.4f}+-{free_m.std_error:.4f} "
        f"({abs(free_m.value) / free_m.std_error:.2f} se, tol 4); "
        f"exact mirror: {mirror_ok}; M-hat coupling M- == -M+: {coupling_ok}; "
        f"tau-shift |dGamma| = {abs(base.value - shifted.value):.4f} "
        f"<= 2 x {combined:.4f}: {shift_ok}"
    )


def _criterion_gks_sign_audit() -> tuple[bool, str]:
    params = OscillatorParams(m=1.0, a=1.0, b1=3.0, b2=1.0, J=0.15, d=3, beta=4.0)
    clamp = math.sqrt(params.upsilon)
    slices = default_slices(4.0, 1.0, 1.0)
    factory = build_factory(4.0, 1.0, 1.0, slices)
    initial = LoopConfiguration.constant(
        (3, 3, 3), 4.0, slices, clamp, BoundaryCondition.plus_clamped(clamp)
    )
    settings = ChainSettings(sweeps=12_000, burn_in=1500, thinning=2, seed=17)
    result = metropolis_chain(initial, params, factory, settings)
    clip = clipped_identity(5.0 * math.sqrt(params.upsilon))
    sites = ((0, 0, 0), (1, 1, 1), (2, 2, 0))
    times = (0.0, 4.0 * (slices // 3) / slices, 4.0 * (2 * slices // 3) / slices)
    audit = gks_audit(result, sites, times, (clip, clip, clip))
    return audit.passed, (
        f"plus estimate {audit.plus.value:.5f}+-{audit.plus.std_error:.5f} (>= -2 se); "
        f"mirrored minus {audit.minus.value:.5f}+-{audit.minus.std_error:.5f} (<= +2 se)"
    )


def _criterion_symmetry_breaking_trend() -> tuple[bool, str]:
    estimates = []
    for beta in (1.0, 2.0, 4.0, 8.0):
        params = OscillatorParams(m=1.0, a=1.0, b1=3.0, b2=1.0, J=0.1, d=3, beta=beta)
        clamp = math.sqrt(params.upsilon)
        slices = default_slices(beta, 1.0, 1.0)
        factory = build_factory(beta, 1.0, 1.0, slices)
        initial = LoopConfiguration.constant(
            (4, 4, 4), beta, slices, clamp, BoundaryCondition.plus_clamped(clamp)
        )
        settings = ChainSettings(sweeps=1500, burn_in=800, thinning=2, seed=99)
        result = metropolis_chain(initial, params, factory, settings)
        mean, se = batch_means(result.trace.mean(axis=(1, 2)))
        estimates.append((beta, float(mean), float(se)))
    monotone = all(b[1] > a[1] for a, b in zip(estimates, estimates[1:]))
    finite = all(np.isfinite(m) and np.isfinite(s) for _, m, s in estimates)
    detail = "; ".join(f"beta={b:g}: M+ = {m:.4f}+-{s:.4f}" for b, m, s in estimates)
    return monotone and finite, f"{detail}; monotone increasing: {monotone} (diagnostic only, not gated)"


CRITERIA = [
    ("harmonic-spectrum", _criterion_harmonic_spectrum, True, 5.0),
    ("rigidity-identities", _criterion_rigidity_identities, True, None),
    ("small-mass-law", _criterion_small_mass_law, True, 60.0),
    ("theta-dispersion", _criterion_theta_dispersion, True, None),
    ("inversion-and-beta-star", _criterion_inversion_beta_star, True, None),
    ("classification-exclusivity", _criterion_classification_exclusivity, True, None),
    ("exact-gaussian-sampler", _criterion_exact_gaussian_sampler, True, 10.0),
    ("sampler-vs-quadrature", _criterion_sampler_vs_quadrature, True, 60.0),
    ("pimc-harmonic", _criterion_pimc_harmonic, True, None),
    ("symmetry-suite", _criterion_symmetry_suite, True, None),
    ("gks-sign-audit", _criterion_gks_sign_audit, True, 300.0),
    ("symmetry-breaking-trend", _criterion_symmetry_breaking_trend, False, None),
]


def run_criterion(name: str) -> CriterionResult:
    for entry, fn, gated, budget in CRITERIA:
        if entry == name:
            start = time.perf_counter()
            passed, detail = fn()
            runtime = time.perf_counter() - start
            if budget is not None and runtime > budget:
                passed = False
                detail += f"; runtime {runtime:.1f}s exceeded budget {budget:.0f}s"
            return CriterionResult(
                name=name, passed=bool(passed), runtime=runtime, detail=detail, gated=gated
            )
    raise KeyError(f"unknown criterion {name!r}; known: {[c[0] for c in CRITERIA]}")


def run_all(only=None, stream=None) -> list[CriterionResult]:
    """Run the acceptance criteria, printing one line each to `stream`."""
    names = [c[0] for c in CRITERIA]
    if only:
        unknown = set(only) - set(names)
        if unknown:
            raise KeyError(f"unknown criteria: {sorted(unknown)}")
        names = [n for n in names if n in set(only)]
    results = []
    for name in names:
        result = run_criterion(name)
        results.append(result)
        if stream is not None:
            status = "PASS" if result.passed else ("INFO" if not result.gated else "FAIL")
            stream.write(f"[{status}] {result.name} ({result.runtime:.1f}s): {result.detail}\n")
            stream.flush()
    return results
