import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forced_rom.errors import RankDeficient, ShapeError, UnsupportedPropagator
from forced_rom.linalg import eig_magnitudes
from forced_rom.propagators import (KoopmanOperator, LinearPropagator, MlpPropagator, inner_spectral_radius, ols_fit,
                                    propagator_from_arrays, step)
from oracles import mlp_straight_line


def _linear_latent_data(rng, nz=4, nw=2, n=300):
    a = rng.standard_normal((nz, nz))
    a *= 0.9 / np.max(np.abs(np.linalg.eigvals(a)))
    b, b1 = rng.standard_normal((2, nz, nw))
    w = rng.standard_normal((nw, n + 1))
    z = np.zeros((nz, n + 1))
    z[:, 0] = rng.standard_normal(nz)
    for k in range(n):
        z[:, k + 1] = a @ z[:, k] + b @ w[:, k] + b1 @ w[:, k + 1]
    return np.hstack([a, b, b1]), z, w


def test_ols_recovers_known_operator(rng):
    truth, z, w = _linear_latent_data(rng)
    prop = ols_fit(z[:, :-1], w[:, :-1], w[:, 1:], z[:, 1:])
    assert np.linalg.norm(prop.A - truth) / np.linalg.norm(truth) < 1e-6


def test_ols_constant_state_zero_forcing_residual():
    z = np.vstack([np.ones(20), np.linspace(0, 1, 20) ** 2 + 1.0])
    w = np.vstack([np.sin(np.arange(20.0))])
    z[:, :] = z[:, :1]
    z[1] = np.exp(-np.arange(20.0))
    prop = ols_fit(z[:, :-1], w[:, :-1], w[:, 1:], z[:, 1:])
    np.testing.assert_allclose(prop.step(z[:, :-1], w[:, :-1], w[:, 1:]), z[:, 1:], atol=1e-12)


def test_ols_scalar_hand_system(rng):
    u = rng.standard_normal(40)
    x = np.zeros(41)
    x[0] = 1.0
    for k in range(40):
        x[k + 1] = 0.5 * x[k] + 2.0 * u[k]
    uu = np.append(u, rng.standard_normal())
    prop = ols_fit(x[None, :-1], uu[None, :-1], uu[None, 1:], x[None, 1:])
    np.testing.assert_allclose(prop.A[0], [0.5, 2.0, 0.0], atol=1e-8)


def test_ols_rank_deficient(rng):
    z = rng.standard_normal((2, 30))
    w = np.zeros((1, 30))
    with pytest.raises(RankDeficient):
        ols_fit(z, w, w, z)


def test_ols_local_optimality(rng):
    truth, z, w = _linear_latent_data(rng)
    z = z + 0.01 * rng.standard_normal(z.shape)
    args = (z[:, :-1], w[:, :-1], w[:, 1:])
    prop = ols_fit(*args, z[:, 1:])
    base = np.sum((prop.step(*args) - z[:, 1:]) ** 2)
    for _ in range(20):
        other = LinearPropagator(prop.A + 1e-3 * rng.standard_normal(prop.A.shape), 4, 2)
        assert np.sum((other.step(*args) - z[:, 1:]) ** 2) >= base


def test_step_identity_and_zero(rng):
    a = np.hstack([np.eye(3), np.zeros((3, 4))])
    z, w, w1 = rng.standard_normal(3), rng.standard_normal(2), rng.standard_normal(2)
    np.testing.assert_array_equal(step(LinearPropagator(a, 3, 2), z, w, w1), z)
    np.testing.assert_array_equal(step(LinearPropagator(np.zeros((3, 7)), 3, 2), z, w, w1), np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_step_matches_direct_multiply(seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((4, 8))
    z, w, w1 = r.standard_normal(4), r.standard_normal(2), r.standard_normal(2)
    for cls in (LinearPropagator, KoopmanOperator):
        np.testing.assert_allclose(step(cls(a, 4, 2), z, w, w1), a @ np.concatenate([z, w, w1]), atol=1e-12)
        rows = cls(a, 4, 2).step_rows(z[None], w[None], w1[None]).data[0]
        np.testing.assert_allclose(rows, a @ np.concatenate([z, w, w1]), atol=1e-12)


def test_mlp_step_matches_straight_line(rng):
    prop = MlpPropagator.init(3, 2, rng)
    for layer in prop.net.layers:
        layer.bias.data = rng.standard_normal(layer.bias.data.shape)
    z, w, w1 = rng.standard_normal(3), rng.standard_normal(2), rng.standard_normal(2)
    ref = mlp_straight_line([l.weight.data for l in prop.net.layers], [l.bias.data for l in prop.net.layers],
                            np.concatenate([z, w, w1])[None])[0]
    np.testing.assert_allclose(step(prop, z, w, w1), ref, atol=1e-12)
    assert prop.net.dims == [7, 7, 7, 3]


def test_step_shape_errors(rng):
    with pytest.raises(ShapeError):
        LinearPropagator(np.zeros((3, 6)), 3, 2)
    with pytest.raises(ShapeError):
        step(LinearPropagator(np.zeros((3, 7)), 3, 2), np.zeros(4), np.zeros(2), np.zeros(2))


def test_inner_spectral_radius_examples(rng):
    a = np.hstack([0.9 * np.eye(3), np.ones((3, 2))])
    assert inner_spectral_radius(LinearPropagator(a, 3, 1)) == pytest.approx(0.9)
    rot = np.hstack([[[0.0, -1.0], [1.0, 0.0]], np.zeros((2, 2))])
    assert inner_spectral_radius(KoopmanOperator(rot, 2, 1)) == pytest.approx(1.0)
    r = rng.standard_normal((5, 7))
    assert inner_spectral_radius(LinearPropagator(r, 5, 1)) == eig_magnitudes(r[:, :5])[0]
    with pytest.raises(UnsupportedPropagator):
        inner_spectral_radius(MlpPropagator.init(2, 1, rng))


def test_propagator_array_round_trip(rng):
    for prop in (LinearPropagator.init(3, 2, rng), KoopmanOperator.init(3, 2, rng), MlpPropagator.init(3, 2, rng)):
        back = propagator_from_arrays(prop.describe(), prop.to_arrays())
        z, w, w1 = rng.standard_normal(3), rng.standard_normal(2), rng.standard_normal(2)
        assert type(back) is type(prop) and np.array_equal(back.step(z, w, w1), prop.step(z, w, w1))
    with pytest.raises(UnsupportedPropagator):
        propagator_from_arrays({"kind": "gru"}, {})
