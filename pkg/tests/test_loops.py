"""Loops: propagator values, exact circulant sampling, the action, serialization."""

import math

import numpy as np
import pytest

import qacrystal.loops
from qacrystal.errors import ConfigurationError, DefinitenessError, DomainError
from qacrystal.loops import (
    BoundaryCondition,
    LoopConfiguration,
    action,
    box_bonds,
    build_factory,
    default_slices,
    exterior_face_counts,
    load_loops,
    propagator,
    sample_loop,
    save_loops,
)
from qacrystal.spectral import OscillatorParams


def params(**overrides):
    base = dict(m=1.0, a=1.0, b1=1.0, b2=1.0, J=0.5, d=3, beta=1.0)
    base.update(overrides)
    return OscillatorParams(**base)


class TestPropagator:
    def test_symmetry_and_reflection(self):
        beta = 2.0
        for tau, tau_p in ((0.3, 1.7), (0.0, 0.6), (1.1, 1.9)):
            assert propagator(beta, 1.0, 1.0, tau, tau_p) == pytest.approx(
                propagator(beta, 1.0, 1.0, tau_p, tau), rel=1e-15
            )
        for tau in (0.2, 0.9, 1.5):
            assert propagator(beta, 1.0, 1.0, 0.0, tau) == pytest.approx(
                propagator(beta, 1.0, 1.0, 0.0, beta - tau), rel=1e-15
            )

    def test_equal_time_value(self):
        expected = (1 + math.exp(-1)) / (2 * (1 - math.exp(-1)))
        assert propagator(1.0, 1.0, 1.0, 0.4, 0.4) == pytest.approx(expected, rel=1e-14)

    def test_zero_temperature_limit(self):
        assert propagator(50.0, 1.0, 1.0, 25.0, 25.0) == pytest.approx(0.5, abs=1e-10)

    def test_out_of_range_rejected(self):
        with pytest.raises(DomainError):
            propagator(1.0, 1.0, 1.0, -0.1, 0.5)
        with pytest.raises(DomainError):
            propagator(1.0, 1.0, 1.0, 0.2, 1.2)

    def test_default_slices_rule(self):
        assert default_slices(2.0, 1.0, 1.0) == 16
        assert default_slices(8.0, 1.0, 1.0) == 64
        assert default_slices(1.0, 4.0, 1.0) == 16


class TestFactory:
    def test_first_row_is_propagator_values(self):
        beta, P = 2.0, 16
        factory = build_factory(beta, 1.0, 1.0, P)
        times = np.arange(P) * beta / P
        assert np.allclose(factory.first_row, propagator(beta, 1.0, 1.0, 0.0, times), rtol=1e-15)

    def test_two_slice_eigenpair(self):
        factory = build_factory(1.0, 1.0, 1.0, 2)
        s00 = propagator(1.0, 1.0, 1.0, 0.0, 0.0)
        s05 = propagator(1.0, 1.0, 1.0, 0.0, 0.5)
        assert np.allclose(factory.covariance_matrix(), [[s00, s05], [s05, s00]])
        assert sorted(factory.spectral_weights) == pytest.approx(sorted([s00 + s05, s00 - s05]))
        assert np.all(factory.spectral_weights > 0)

    def test_trace_identity(self):
        factory = build_factory(2.0, 1.0, 1.0, 32)
        assert float(np.sum(factory.spectral_weights)) == pytest.approx(
            32 * factory.slice_variance, rel=1e-12
        )

    def test_circulant_structure(self):
        factory = build_factory(2.0, 0.5, 2.0, 8)
        C = factory.covariance_matrix()
        for j in range(8):
            for k in range(8):
                assert C[j, k] == C[(j + 1) % 8, (k + 1) % 8]

    def test_basis_reconstructs_covariance(self):
        factory = build_factory(2.0, 1.0, 1.0, 12)
        rebuilt = (factory.basis.T * factory.spectral_weights) @ factory.basis
        assert np.allclose(rebuilt, factory.covariance_matrix(), atol=1e-13)

    def test_quad_form_matches_direct_solve(self):
        factory = build_factory(2.0, 1.0, 1.0, 16)
        rng = np.random.default_rng(3)
        C = factory.covariance_matrix()
        for _ in range(5):
            x = rng.standard_normal(16)
            direct = float(x @ np.linalg.solve(C, x))
            assert factory.quad_form(x) == pytest.approx(direct, rel=1e-10)

    def test_non_definite_covariance_rejected(self, monkeypatch):
        def fake_propagator(beta, m, a, tau, tau_prime):
            lag = np.abs(np.asarray(tau) - np.asarray(tau_prime))
            return np.where(lag == 0, 1.0, -0.9)  # not positive definite for P > 2

        monkeypatch.setattr(qacrystal.loops, "propagator", fake_propagator)
        with pytest.raises(DefinitenessError):
            build_factory(1.0, 1.0, 1.0, 4)


class TestExactSampling:
    def test_moments_of_law(self):
        factory = build_factory(2.0, 1.0, 1.0, 16)
        rng = np.random.default_rng(123)
        samples = factory.sample_batch(rng, 10_000)
        n = samples.shape[0]
        # centered at every slice
        mean_se = samples.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(samples.mean(axis=0)) < 4 * mean_se)
        # slice variance
        sq = samples[:, 0] ** 2
        assert abs(sq.mean() - factory.slice_variance) < 4 * sq.std() / math.sqrt(n)
        # covariance at half period
        half = samples[:, 0] * samples[:, 8]
        expected = propagator(2.0, 1.0, 1.0, 0.0, 1.0)
        assert abs(half.mean() - expected) < 4 * half.std() / math.sqrt(n)

    def test_sample_loop_wrapper(self):
        factory = build_factory(2.0, 1.0, 1.0, 16)
        loop = sample_loop(factory, np.random.default_rng(5))
        assert loop.slices == 16
        assert loop.beta == 2.0
        assert np.all(np.isfinite(loop.values))


class TestVolumes:
    def test_bond_count_of_box(self):
        assert box_bonds((3, 3, 3)).shape[0] == 3 * (2 * 3 * 3)
        assert box_bonds((2,)).shape[0] == 1
        assert box_bonds((1, 1)).shape[0] == 0

    def test_exterior_face_counts(self):
        counts = exterior_face_counts((3, 3, 3))
        assert counts.sum() == 6 * 9  # one per boundary plaquette
        assert counts.reshape(3, 3, 3)[1, 1, 1] == 0
        assert counts.reshape(3, 3, 3)[0, 0, 0] == 3

    def test_site_indexing(self):
        config = LoopConfiguration.zeros((2, 3, 4), 1.0, 4)
        assert config.site_index((0, 0, 0)) == 0
        assert config.site_index((1, 2, 3)) == config.n_sites - 1
        with pytest.raises(DomainError):
            config.site_index((2, 0, 0))
        with pytest.raises(DomainError):
            config.site_index(24)


class TestAction:
    def test_zero_configuration(self):
        config = LoopConfiguration.zeros((2, 2, 2), 1.0, 8)
        assert action(config, params()) == 0.0

    def test_single_site_constant_loop(self):
        p = params(d=1)
        c = 0.7
        config = LoopConfiguration.constant((1,), 1.0, 8, c)
        expected = 1.0 * (-p.b1 * c**2 + p.b2 * c**4)
        assert action(config, p) == pytest.approx(expected, rel=1e-12)

    def test_two_neighboring_constant_loops(self):
        p = params(d=1)
        c = 0.9
        config = LoopConfiguration.constant((2,), 1.0, 8, c)
        expected = -p.J * 1.0 * c**2 + 2 * 1.0 * (-p.b1 * c**2 + p.b2 * c**4)
        assert action(config, p) == pytest.approx(expected, rel=1e-12)

    def test_beta_mismatch_rejected(self):
        config = LoopConfiguration.zeros((2,), 2.0, 8)
        with pytest.raises(ConfigurationError):
            action(config, params(d=1, beta=1.0))

    def test_locality_of_single_site_change(self):
        rng = np.random.default_rng(11)
        p = params()
        box = (3, 3, 3)
        config = LoopConfiguration(
            box=box, beta=1.0, slices=8, values=rng.standard_normal((27, 8)),
            boundary=BoundaryCondition.plus_clamped(0.6),
        )
        site = 13
        new_loop = rng.standard_normal(8)
        updated = config.copy()
        updated.values[site] = new_loop
        full_delta = action(updated, p) - action(config, p)

        from qacrystal.loops import neighbor_lists

        dt = 1.0 / 8
        old_loop = config.values[site]
        neighbor_sum = config.values[neighbor_lists(box)[site]].sum(axis=0)
        clamp_level = 0.6 * exterior_face_counts(box)[site]
        local_delta = dt * (
            float(np.sum(-p.b1 * new_loop**2 + p.b2 * new_loop**4))
            - float(np.sum(-p.b1 * old_loop**2 + p.b2 * old_loop**4))
            - p.J * float(np.dot(new_loop - old_loop, neighbor_sum))
            - p.J * clamp_level * float(np.sum(new_loop - old_loop))
        )
        assert local_delta == pytest.approx(full_delta, rel=1e-12)

    def test_sign_flip_symmetry(self):
        rng = np.random.default_rng(2)
        p = params()
        values = rng.standard_normal((8, 4))
        free = LoopConfiguration(box=(2, 2, 2), beta=1.0, slices=4, values=values,
                                 boundary=BoundaryCondition.free())
        flipped = LoopConfiguration(box=(2, 2, 2), beta=1.0, slices=4, values=-values,
                                    boundary=BoundaryCondition.free())
        assert action(free, p) == pytest.approx(action(flipped, p), rel=1e-14)

        plus = LoopConfiguration(box=(2, 2, 2), beta=1.0, slices=4, values=values,
                                 boundary=BoundaryCondition.plus_clamped(0.5))
        minus_of_flip = LoopConfiguration(box=(2, 2, 2), beta=1.0, slices=4, values=-values,
                                          boundary=BoundaryCondition.minus_clamped(0.5))
        assert action(plus, p) == action(minus_of_flip, p)

    def test_slice_rotation_invariance_free_boundary(self):
        rng = np.random.default_rng(4)
        p = params()
        values = rng.standard_normal((8, 6))
        config = LoopConfiguration(box=(2, 2, 2), beta=1.0, slices=6, values=values,
                                   boundary=BoundaryCondition.free())
        rotated = LoopConfiguration(box=(2, 2, 2), beta=1.0, slices=6,
                                    values=np.roll(values, 2, axis=1),
                                    boundary=BoundaryCondition.free())
        assert action(rotated, p) == pytest.approx(action(config, p), rel=1e-12)


class TestBoundaryCondition:
    def test_kinds(self):
        assert BoundaryCondition.free().sign == 0
        assert BoundaryCondition.plus_clamped(0.3).sign == 1
        assert BoundaryCondition.minus_clamped(0.3).sign == -1
        assert BoundaryCondition.plus_clamped(0.3).mirrored().kind == "minus_clamped"

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            BoundaryCondition(kind="plus_clamped", clamp=None)
        with pytest.raises(ConfigurationError):
            BoundaryCondition(kind="plus_clamped", clamp=-1.0)
        with pytest.raises(ConfigurationError):
            BoundaryCondition(kind="weird")
        with pytest.raises(ConfigurationError):
            BoundaryCondition(kind="free", clamp=1.0)


class TestSerialization:
    def test_bit_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        config = LoopConfiguration(
            box=(2, 3), beta=1.75, slices=8, values=rng.standard_normal((6, 8)),
            boundary=BoundaryCondition.minus_clamped(0.4),
        )
        path = tmp_path / "loops.qac"
        save_loops(config, path)
        restored = load_loops(path)
        assert restored.box == config.box
        assert restored.beta == config.beta
        assert restored.slices == config.slices
        assert restored.boundary == config.boundary
        assert np.array_equal(restored.values, config.values)  # bit-exact

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "junk.qac"
        path.write_bytes(b"not a loops file")
        with pytest.raises(ConfigurationError):
            load_loops(path)
