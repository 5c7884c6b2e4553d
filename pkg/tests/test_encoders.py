import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clearnav.encoders import LangEncoder, VisEncoder, pad_batch, pool_panorama
from clearnav.numerics import ParamStore, ShapeError, Tensor, grad_check, layer_norm, linear, relu
from clearnav.worldgen import NUM_VIEWS


@pytest.fixture
def lang():
    return LangEncoder(ParamStore(0), dim=16, layers=2)


def _ln_oracle(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def test_identical_instructions_identical_embeddings(lang):
    out = lang.encode([(1, 5, 9, 2), (1, 5, 9, 2)])
    np.testing.assert_array_equal(out.cls.data[0], out.cls.data[1])


def test_output_length_and_cls_position(lang):
    toks = (1, 10, 11, 12, 2)
    out = lang.encode([toks])
    assert out.states.shape == (1, len(toks), 16)
    np.testing.assert_array_equal(out.cls.data, out.states.data[:, 0])


def test_padding_does_not_change_encoding(lang):
    short, long = (1, 7, 8, 2), (1, 7, 8, 9, 10, 11, 2)
    alone = lang.encode([short])
    batched = lang.encode([short, long])
    np.testing.assert_allclose(batched.states.data[0, :4], alone.states.data[0], atol=1e-12)
    assert batched.mask[0].tolist() == [True] * 4 + [False] * 3


def test_empty_instruction_rejected(lang):
    with pytest.raises(ValueError):
        lang.encode([()])
    with pytest.raises(ValueError):
        pad_batch([])
    with pytest.raises(ShapeError):
        lang.encode([(1, 10_000)])


def test_cls_norm_gradient_matches_finite_differences():
    enc = LangEncoder(ParamStore(1), dim=8, layers=2)

    def f():
        c = enc.encode([(1, 4, 5, 6, 2), (1, 7, 2)]).cls
        return (c * c).sum()

    assert grad_check(f, [enc.embedding], max_entries=40) < 1e-4
    assert grad_check(f, enc.params(), max_entries=20) < 1e-4


def test_zero_projection_reduces_to_layer_norm(rng):
    vis = VisEncoder(ParamStore(0), dim=8)
    vis.w1.data[:] = 0.0
    vis.w2.data[:] = 0.0
    o = rng.standard_normal((5, 8))
    np.testing.assert_allclose(vis.encode(o).data, _ln_oracle(o, 1.0, 0.0), atol=1e-12)


def test_constant_view_gives_zero_pre_affine_output():
    vis = VisEncoder(ParamStore(0), dim=8)
    vis.w1.data[:] = 0.0
    np.testing.assert_allclose(vis.encode(np.full((3, 8), 2.5)).data, 0.0, atol=1e-12)


def test_encode_view_matches_composition_oracle(rng):
    vis = VisEncoder(ParamStore(3), dim=8)
    vis.gain.data[:] = rng.uniform(0.5, 1.5, 8)
    vis.bias.data[:] = rng.standard_normal(8)
    o = rng.standard_normal((4, 8))
    v = np.maximum(o @ vis.w2.data.T, 0.0) @ vis.w1.data.T
    want = _ln_oracle(v + o, vis.gain.data, vis.bias.data)
    np.testing.assert_allclose(vis.encode(o).data, want, atol=1e-12)
    # and equals the composition of the library's own ops
    lib = layer_norm(linear(relu(linear(Tensor(o), vis.w2)), vis.w1) + Tensor(o), vis.gain, vis.bias)
    np.testing.assert_array_equal(vis.encode(o).data, lib.data)


def test_encode_view_dim_mismatch():
    with pytest.raises(ShapeError):
        VisEncoder(ParamStore(0), dim=8).encode(np.zeros((2, 9)))


@settings(max_examples=15)
@given(st.permutations(list(range(NUM_VIEWS))))
def test_encode_view_equivariant_pool_invariant(perm):
    vis = VisEncoder(ParamStore(2), dim=8)
    x = np.random.default_rng(0).standard_normal((NUM_VIEWS, 8))
    enc = vis.encode(x).data
    enc_p = vis.encode(x[perm]).data
    np.testing.assert_allclose(enc_p, enc[perm], atol=1e-12)
    np.testing.assert_allclose(pool_panorama(Tensor(enc_p)).data, pool_panorama(Tensor(enc)).data, atol=1e-12)


def test_pool_examples(rng):
    x = rng.standard_normal(8)
    np.testing.assert_allclose(pool_panorama(Tensor(np.tile(x, (NUM_VIEWS, 1)))).data, x, atol=1e-12)
    sym = np.concatenate([np.tile(x, (18, 1)), np.tile(-x, (18, 1))])
    np.testing.assert_allclose(pool_panorama(Tensor(sym)).data, 0.0, atol=1e-12)
    r = rng.standard_normal((2, NUM_VIEWS, 8))
    total = np.zeros((2, 8))
    for m in range(NUM_VIEWS):
        total += r[:, m]
    np.testing.assert_allclose(pool_panorama(Tensor(r)).data, total / NUM_VIEWS, atol=1e-12)
    with pytest.raises(ShapeError):
        pool_panorama(Tensor(np.zeros((35, 8))))


def test_residual_path_exact_with_zero_weights(rng):
    vis = VisEncoder(ParamStore(9), dim=8)
    vis.w1.data[:] = 0.0
    o = rng.standard_normal((2, 8))
    a = vis.encode(o).data
    vis.w2.data[:] = rng.standard_normal(vis.w2.shape)
    np.testing.assert_array_equal(vis.encode(o).data, a)
