import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forced_rom.autoencoders import AutoencoderStack, Group, NeuralCoder, PodBasis, fit_pod_stack, pod_fit, recon_error_curve
from forced_rom.errors import InvalidParam, InvalidRank, MissingVariable, ShapeError
from forced_rom.linalg import svd_exact


def _affine_plane(rng, n=20, t=50, r=2):
    basis = rng.standard_normal((n, r))
    return rng.standard_normal(n)[:, None] + basis @ rng.standard_normal((r, t))


def _recon(b, x):
    return b.decode(b.encode(x))


def test_pod_exact_affine_subspace(rng):
    x = _affine_plane(rng)
    b = pod_fit(x, 2)
    assert np.max(np.abs(_recon(b, x) - x)) < 1e-8


def test_pod_full_basis_reconstructs(rng):
    x = rng.standard_normal((8, 30))
    b = pod_fit(x, 8, center=False)
    assert np.max(np.abs(_recon(b, x) - x)) < 1e-8


def test_pod_energy_matches_exact_svd(rng):
    x = rng.standard_normal((30, 40)) * np.geomspace(10, 0.1, 30)[:, None]
    b = pod_fit(x, 5)
    xc = x - x.mean(axis=1, keepdims=True)
    ref = svd_exact(xc).s[:5] ** 2 / np.sum(xc ** 2)
    np.testing.assert_allclose(b.energy, ref, rtol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6))
def test_pod_invariants(seed, r):
    x = np.random.default_rng(seed).standard_normal((12, 25))
    b = pod_fit(x, r, seed=seed)
    np.testing.assert_allclose(b.modes.T @ b.modes, np.eye(r), atol=1e-10)
    assert np.all(np.diff(b.energy) <= 1e-15)


def test_pod_rank_errors(rng):
    with pytest.raises(InvalidRank):
        pod_fit(rng.standard_normal((5, 10)), 6)
    with pytest.raises(InvalidRank):
        pod_fit(rng.standard_normal((5, 10)), 0)


def test_encode_mean_is_zero_and_mode_coordinates(rng):
    b = pod_fit(rng.standard_normal((10, 40)), 3)
    np.testing.assert_allclose(b.encode(b.mean[:, None])[:, 0], 0.0, atol=1e-14)
    z = b.encode((b.mean + 3.0 * b.modes[:, 0])[:, None])[:, 0]
    np.testing.assert_allclose(z, [3.0, 0.0, 0.0], atol=1e-12)


def test_decode_zero_latent_is_mean(rng):
    b = pod_fit(rng.standard_normal((10, 40)), 3)
    np.testing.assert_array_equal(b.decode(np.zeros((3, 1)))[:, 0], b.mean)


def test_decode_encode_in_span_and_residual_orthogonal(rng):
    b = pod_fit(rng.standard_normal((10, 40)), 4)
    inside = b.mean[:, None] + b.modes @ rng.standard_normal((4, 6))
    np.testing.assert_allclose(_recon(b, inside), inside, atol=1e-10)
    x = rng.standard_normal((10, 6))
    resid = x - _recon(b, x)
    assert np.max(np.abs(b.modes.T @ resid)) < 1e-8


def _two_group_stack(rng):
    values = {"a": rng.standard_normal((6, 30)), "b": rng.standard_normal((4, 30)), "c": rng.standard_normal((3, 30))}
    sizes = {k: v.shape[0] for k, v in values.items()}
    stack = fit_pod_stack(values, [(("a", "b"), 3), (("c",), 2)], sizes)
    return stack, values


def test_stack_concatenation_order(rng):
    stack, values = _two_group_stack(rng)
    z = stack.encode(values)
    g0 = stack.groups[0].coder.encode(np.vstack([values["a"], values["b"]]))
    g1 = stack.groups[1].coder.encode(values["c"])
    np.testing.assert_array_equal(z, np.vstack([g0, g1]))
    assert stack.latent_dim == 5 and stack.variables == ["a", "b", "c"]
    out = stack.decode(z)
    assert {k: v.shape for k, v in out.items()} == {"a": (6, 30), "b": (4, 30), "c": (3, 30)}


def test_stack_rows_agree_with_columns(rng):
    stack, values = _two_group_stack(rng)
    x = stack.stack(values)
    np.testing.assert_allclose(stack.encode_rows(x.T).data.T, stack.encode(values), atol=1e-13)
    z = stack.encode(values)
    np.testing.assert_allclose(stack.decode_rows(z.T).data.T, stack.decode_stacked(z), atol=1e-13)


def test_stack_errors(rng):
    stack, values = _two_group_stack(rng)
    with pytest.raises(MissingVariable):
        stack.encode({"a": values["a"], "b": values["b"]})
    with pytest.raises(ShapeError):
        stack.decode(np.zeros((4, 2)))
    coder = pod_fit(rng.standard_normal((6, 20)), 2)
    with pytest.raises(InvalidParam):
        AutoencoderStack([Group(("a",), coder), Group(("a",), coder)], {"a": 6})
    with pytest.raises(ShapeError):
        AutoencoderStack([Group(("a",), coder)], {"a": 5})


def test_stack_json_round_trip(rng):
    stack, values = _two_group_stack(rng)
    doc, arrays = stack.to_json()
    back = AutoencoderStack.from_json(doc, arrays)
    assert np.array_equal(back.encode(values), stack.encode(values))


def test_neural_coder_dims_and_forcing_without_decoder(rng):
    c = NeuralCoder.build(7, 3, rng, hidden=(5,), linear=False)
    assert c.encoder.dims == [7, 5, 3] and c.decoder.dims == [3, 5, 7]
    lin = NeuralCoder.build(7, 3, rng, hidden=(5,), linear=True)
    assert lin.encoder.dims == [7, 3] and lin.linear
    f = NeuralCoder.build(4, 2, rng, hidden=(6,), linear=False, with_decoder=False)
    assert f.decoder is None and f.encode(np.ones((4, 3))).shape == (2, 3)
    with pytest.raises(InvalidParam):
        f.decode(np.ones((2, 1)))
    back = NeuralCoder.from_arrays(c.describe(), c.to_arrays())
    x = rng.standard_normal((7, 4))
    assert np.array_equal(back.decode(back.encode(x)), c.decode(c.encode(x)))


def test_recon_curve_full_rank_ends_at_zero(rng):
    x = rng.standard_normal((6, 40))
    curve = recon_error_curve(x, range(1, 7))
    assert curve[-1] < 1e-12


def test_recon_curve_rank_three_data(rng):
    x = rng.standard_normal((15, 3)) @ rng.standard_normal((3, 60))
    curve = recon_error_curve(x, [1, 2, 3, 4, 5], center=False)
    assert np.all(curve[2:] < 1e-8) and curve[1] > 1e-3


def test_recon_curve_matches_direct_reconstruction(rng):
    x = rng.standard_normal((12, 50)) * np.geomspace(5, 0.5, 12)[:, None]
    ranks = [1, 3, 5, 8]
    curve = recon_error_curve(x, ranks, seed=3)
    full = pod_fit(x, 8, seed=3)
    for r, value in zip(ranks, curve):
        b = PodBasis(full.modes[:, :r], full.mean, full.energy[:r], full.singular_values[:r])
        ref = np.sqrt(np.mean((x - _recon(b, x)) ** 2)) / (x.max() - x.min())
        assert value == pytest.approx(ref, rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_recon_curve_monotone(seed):
    x = np.random.default_rng(seed).standard_normal((10, 30))
    curve = recon_error_curve(x, range(1, 11), seed=seed)
    assert np.all(np.diff(curve) <= 1e-9)
