"""Lattice dispersion, the t/u inversion pair, beta_*, and phase verdicts."""

import math

import numpy as np
import pytest

from qacrystal.criteria import (
    beta_star_by_bisection,
    classify_phase,
    solve_beta_star,
    t_of_u,
    theta_bessel,
    theta_of_d,
    u_of_t,
    _theta_cached,
    _theta_grid_raw,
)
from qacrystal.errors import DomainError, PreconditionError
from qacrystal.spectral import OscillatorParams, single_site_spectrum


def params(**overrides):
    base = dict(m=1.0, a=1.0, b1=2.0, b2=1.0, J=0.1, d=3, beta=1.0)
    base.update(overrides)
    return OscillatorParams(**base)


class TestTheta:
    def test_d3_grid_matches_bessel_oracle(self):
        dispersion = theta_of_d(3)
        oracle, oracle_err = theta_bessel(3)
        assert abs(dispersion.theta - oracle) < 1e-4
        assert oracle_err < 1e-8

    def test_decreasing_toward_one(self):
        values = [theta_of_d(d).theta for d in (3, 4, 5, 6)]
        assert all(v > 1.0 for v in values)
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_low_dimension_rejected(self):
        for d in (1, 2):
            with pytest.raises(DomainError):
                theta_of_d(d)

    def test_reflection_symmetry_of_grid_rule(self):
        # evenness of cos: reflecting every node p -> -p reproduces the sum
        size = 16
        step = 2 * math.pi / size
        nodes = -math.pi + (np.arange(size) + 0.5) * step
        reflected = -nodes
        def raw(points):
            omc = 1.0 - np.cos(points)
            total = 0.0
            for x in omc:
                for y in omc:
                    total += np.sum(1.0 / (x + y + omc))
            return 3 * total / size**3
        assert raw(nodes) == pytest.approx(raw(reflected), rel=1e-14)
        assert raw(nodes) == pytest.approx(_theta_grid_raw(3, size), rel=1e-12)

    def test_quadrature_error_is_conservative(self):
        dispersion = theta_of_d(3)
        oracle, _ = theta_bessel(3)
        assert abs(dispersion.theta - oracle) <= dispersion.quadrature_error + 1e-8

    def test_high_dimension_uses_bessel(self):
        dispersion = theta_of_d(6)
        assert dispersion.method == "bessel-1d"
        assert dispersion.theta == pytest.approx(1.1169633732, abs=1e-6)

    def test_odd_grid_size_rejected(self):
        with pytest.raises(DomainError):
            theta_of_d(3, grid_sizes=(33, 66))


class TestInversionPair:
    def test_origin(self):
        assert t_of_u(0.0) == 0.0
        assert u_of_t(0.0) == 0.0

    def test_quarter_closed_form(self):
        assert t_of_u(0.25) == pytest.approx(0.25 * math.log(3.0), rel=1e-14)

    def test_divergence_probe(self):
        assert t_of_u(1.0 - 1e-12) > 10.0

    def test_monotone_increasing(self):
        us = np.linspace(0.0, 0.999, 200)
        ts = [t_of_u(float(u)) for u in us]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_round_trips(self):
        for u in (0.1, 0.5, 0.9, 0.99):
            assert u_of_t(t_of_u(u)) == pytest.approx(u, abs=1e-10)

    def test_inverse_of_worked_example(self):
        assert u_of_t(0.274653) == pytest.approx(0.25, abs=1e-5)

    def test_domains(self):
        with pytest.raises(DomainError):
            t_of_u(1.0)
        with pytest.raises(DomainError):
            t_of_u(-0.1)
        with pytest.raises(DomainError):
            u_of_t(-1e-9)

    def test_saturation_at_large_t(self):
        u = u_of_t(50.0)
        assert 0.0 < u < 1.0


class TestBetaStar:
    def test_tuned_ratio_reduces_to_closed_form(self):
        # choose J so that 4 m upsilon^2 Jhat = 2 theta(3): beta_* = 4 m upsilon t(1/2)
        dispersion = _theta_cached(3)
        p = params()
        upsilon = p.upsilon
        J = 2 * dispersion.theta / (4 * p.m * upsilon**2 * 2 * p.d)
        tuned = params(J=J)
        expected = 4 * tuned.m * upsilon * t_of_u(0.5)
        assert solve_beta_star(tuned, dispersion) == pytest.approx(expected, rel=1e-12)

    def test_near_threshold_divergence(self):
        dispersion = _theta_cached(3)
        p = params()
        upsilon = p.upsilon
        J = (1.0 + 1e-6) * dispersion.theta / (4 * p.m * upsilon**2 * 2 * p.d)
        beta_star = solve_beta_star(params(J=J), dispersion)
        assert beta_star > 4 * p.m * upsilon * t_of_u(1.0 - 1e-6)

    def test_doubling_coupling_decreases_beta_star(self):
        dispersion = _theta_cached(3)
        base = params(J=1.3)
        doubled = params(J=2.6)
        assert solve_beta_star(doubled, dispersion) < solve_beta_star(base, dispersion)

    def test_hypothesis_violation_carries_values(self):
        dispersion = _theta_cached(3)
        weak = params(J=0.01)
        with pytest.raises(PreconditionError) as err:
            solve_beta_star(weak, dispersion)
        assert err.value.lhs == pytest.approx(4 * weak.m * weak.upsilon**2 * weak.j_hat)
        assert err.value.rhs == pytest.approx(dispersion.theta)

    def test_single_well_rejected(self):
        dispersion = _theta_cached(3)
        with pytest.raises(PreconditionError):
            solve_beta_star(params(b1=0.4, J=100.0), dispersion)

    def test_bisection_self_check(self):
        dispersion = _theta_cached(3)
        rng = np.random.default_rng(8)
        for _ in range(5):
            upsilon_target = rng.uniform(0.2, 1.0)
            b1 = 0.5 + 6 * upsilon_target  # b2 = 1, a = 1
            ratio = rng.uniform(1.2, 6.0)
            p0 = params(b1=b1)
            J = ratio * dispersion.theta / (4 * p0.m * p0.upsilon**2 * 2 * p0.d)
            p = params(b1=b1, J=J)
            closed = solve_beta_star(p, dispersion)
            bisect = beta_star_by_bisection(p, dispersion)
            assert closed == pytest.approx(bisect, rel=1e-8)


class TestClassification:
    def test_weak_coupling_is_stabilized(self):
        p = params(J=0.01)
        result = classify_phase(p)
        assert result.verdict == "stabilized_all_beta"
        assert result.criteria_values["j_hat"] < result.criteria_values["rigidity"]
        assert result.criteria_values["four_m_upsilon_sq_jhat"] < 1.0 + 1e-9

    def test_strong_coupling_is_transition(self):
        p = params(J=1.5)
        result = classify_phase(p)
        assert result.verdict == "transition_regime"
        assert result.beta_star is not None and result.beta_star > 0
        assert result.criteria_values["four_m_upsilon_sq_jhat"] > result.criteria_values["theta"]

    def test_between_hypotheses_is_undetermined(self):
        spectrum = single_site_spectrum(params(), levels=8)
        j_hat = 1.05 * spectrum.rigidity  # just above the stabilization bound
        p = params(J=j_hat / (2 * 3))
        result = classify_phase(p, spectrum=spectrum)
        assert result.verdict == "undetermined"

    def test_low_dimension_skips_transition_test(self):
        p = OscillatorParams(m=1.0, a=1.0, b1=2.0, b2=1.0, J=5.0, d=2, beta=1.0)
        result = classify_phase(p)
        assert result.verdict in ("stabilized_all_beta", "undetermined")
        assert result.criteria_values["theta"] is None
