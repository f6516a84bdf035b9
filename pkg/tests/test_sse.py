"""Spatial semantic embedding tests."""

import numpy as np
import pytest

from rme.errors import ConfigurationError, NumericError
from rme.scene import Extent
from rme.seeding import make_rng
from rme.sse import (
    SseConfig,
    embed_points,
    encode_priors,
    init_sse_params,
    sin_encode,
)
from rme.tensor import GradientTape, Tensor, sum_all

from oracles import finite_diff, rel_err, sin_encode_ref


def tiny_cfg(**kw):
    base = dict(freq_count=2, prior_channels=3, conv_hidden=2, mlp_hidden=4,
                embed_dim=3)
    base.update(kw)
    return SseConfig(**base)


def window(cells=16, delta=1.0):
    extent = Extent(0.0, 0.0, cells * delta, cells * delta)
    b_mask = np.zeros((cells, cells), dtype=np.uint8)
    s_mask = np.zeros((cells, cells), dtype=np.uint8)
    s_mask[1, 1] = 1
    return extent, b_mask, s_mask


def run_embed(params, cfg, xy, extent, b_mask, s_mask):
    from rme.grid import GridSpec
    rows, cols = b_mask.shape
    spec = GridSpec(rows=rows, cols=cols,
                    delta_x=extent.width / cols, delta_y=extent.height / rows,
                    origin_x=extent.x0, origin_y=extent.y0)
    pb, ps = encode_priors(params, b_mask, s_mask)
    return embed_points(params, cfg, xy, extent, spec, pb, ps)


# ---------------------------------------------------------------------------
# sinusoidal coordinates
# ---------------------------------------------------------------------------

def test_sin_encode_matches_reference():
    xs = np.array([0.0, 0.25, 1.0 / 3.0, 0.5, 0.9999, 1.0])
    enc = sin_encode(xs, 16)
    assert enc.shape == (6, 33)
    for i, x in enumerate(xs):
        assert np.max(np.abs(enc[i] - sin_encode_ref(float(x), 16))) < 1e-12


def test_sin_encode_distinct_on_fine_grid():
    xs = np.linspace(0.0, 1.0, 1025)
    enc = sin_encode(xs, 16)
    assert np.unique(enc, axis=0).shape[0] == 1025


def test_sin_encode_scalar_layout():
    enc = sin_encode(np.array([0.5]), 3)
    # x, then sin/cos pairs of pi x, 2 pi x, 4 pi x
    want = [0.5, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0]
    assert np.allclose(enc[0], want, atol=1e-12)


# ---------------------------------------------------------------------------
# dimensions and variants
# ---------------------------------------------------------------------------

def test_point_dims_per_variant():
    assert SseConfig().point_dim == 98
    assert SseConfig(variant="no-posenc").point_dim == 34
    assert SseConfig(variant="no-b").point_dim == 98
    assert SseConfig(variant="no-s").point_dim == 98
    with pytest.raises(ConfigurationError, match="variant"):
        SseConfig(variant="nope")
    with pytest.raises(ConfigurationError):
        SseConfig(freq_count=0)


def test_embed_output_shape():
    cfg = SseConfig()
    params = init_sse_params(make_rng(0, "init"), cfg)
    extent, b_mask, s_mask = window()
    xy = np.array([[2.5, 2.5], [7.0, 3.1], [15.9, 15.9]])
    out = run_embed(params, cfg, xy, extent, b_mask, s_mask)
    assert out.shape == (3, 32)
    assert np.all(np.isfinite(out.data))


def test_batch_equals_per_point():
    cfg = tiny_cfg()
    params = init_sse_params(make_rng(1, "init"), cfg)
    extent, b_mask, s_mask = window(8)
    xy = np.array([[0.7, 0.7], [3.2, 6.8], [7.5, 0.1], [4.0, 4.0]])
    full = run_embed(params, cfg, xy, extent, b_mask, s_mask).data
    for i in range(len(xy)):
        one = run_embed(params, cfg, xy[i:i + 1], extent, b_mask, s_mask).data
        assert np.allclose(full[i], one[0], atol=1e-13)


def test_no_b_variant_ignores_buildings():
    extent, b_mask, s_mask = window()
    xy = np.array([[2.5, 2.5]])
    for variant, ignored in (("no-b", True), ("full", False)):
        # wide enough convs that the flipped block survives the relus
        cfg = tiny_cfg(variant=variant, conv_hidden=8, prior_channels=8)
        params = init_sse_params(make_rng(2, "init"), cfg)
        base = run_embed(params, cfg, xy, extent, b_mask, s_mask).data
        flipped = b_mask.copy()
        flipped[2:4, 2:4] = 1
        moved = run_embed(params, cfg, xy, extent, flipped, s_mask).data
        assert np.array_equal(base, moved) == ignored


def test_no_s_variant_ignores_coverage():
    extent, b_mask, s_mask = window()
    xy = np.array([[2.5, 2.5]])
    cfg = tiny_cfg(variant="no-s")
    params = init_sse_params(make_rng(3, "init"), cfg)
    base = run_embed(params, cfg, xy, extent, b_mask, s_mask).data
    other = s_mask.copy()
    other[2, 2] = 1
    assert np.array_equal(base, run_embed(params, cfg, xy, extent, b_mask, other).data)


def test_no_posenc_uses_raw_coordinates():
    cfg = tiny_cfg(variant="no-posenc")
    params = init_sse_params(make_rng(4, "init"), cfg)
    extent, b_mask, s_mask = window()
    a = run_embed(params, cfg, np.array([[2.2, 2.2]]), extent, b_mask, s_mask).data
    b = run_embed(params, cfg, np.array([[2.4, 2.4]]), extent, b_mask, s_mask).data
    assert not np.array_equal(a, b)  # moving inside one cell still registers


# ---------------------------------------------------------------------------
# mask context behavior
# ---------------------------------------------------------------------------

def test_receptive_field_is_local():
    # three stacked convs (5, 3, 3) reach 4 cells out; nothing beyond that
    cfg = tiny_cfg()
    params = init_sse_params(make_rng(5, "init"), cfg)
    extent, b_mask, s_mask = window(16)
    xy = np.array([[2.5, 2.5]])
    base = run_embed(params, cfg, xy, extent, b_mask, s_mask).data

    far = b_mask.copy()
    far[12, 12] = 1
    assert np.array_equal(base, run_embed(params, cfg, xy, extent, far, s_mask).data)

    near = b_mask.copy()
    near[3, 3] = 1
    assert not np.array_equal(base, run_embed(params, cfg, xy, extent, near, s_mask).data)


def test_context_follows_nearest_cell():
    # two points in the same cell share the context part of their features
    cfg = tiny_cfg(variant="no-posenc")
    params = init_sse_params(make_rng(6, "init"), cfg)
    extent, b_mask, s_mask = window(8)
    b_mask[4, 4] = 1
    same_cell = run_embed(params, cfg, np.array([[2.3, 2.3], [2.3, 2.3]]),
                          extent, b_mask, s_mask).data
    assert np.array_equal(same_cell[0], same_cell[1])


def test_zeroed_head_gives_zero_embedding():
    cfg = tiny_cfg()
    params = init_sse_params(make_rng(7, "init"), cfg)
    params.mlp[4].weight.data[:] = 0.0
    extent, b_mask, s_mask = window(8)
    out = run_embed(params, cfg, np.array([[1.0, 1.0], [5.0, 2.0]]),
                    extent, b_mask, s_mask)
    assert np.array_equal(out.data, np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_gradients_match_finite_differences():
    cfg = tiny_cfg()
    params = init_sse_params(make_rng(8, "init"), cfg)
    extent, b_mask, s_mask = window(6)
    b_mask[3, 3] = 1
    xy = np.array([[0.7, 0.7], [3.2, 4.8], [5.5, 0.1]])

    named = list(params.items())
    # zero biases on near-zero mask inputs park conv pre-activations exactly
    # on the relu kink, where finite differences disagree by construction;
    # nudge everything off it
    jitter = make_rng(13, "jitter")
    for _, t in named:
        t.data += jitter.uniform(0.01, 0.08, size=t.data.shape)
    tensors = [t for _, t in named]
    with GradientTape() as tape:
        tape.watch(*tensors)
        out = run_embed(params, cfg, xy, extent, b_mask, s_mask)
        loss = sum_all(out)
    grads = tape.gradients(loss, tensors)

    def loss_fn(_):
        return float(run_embed(params, cfg, xy, extent, b_mask, s_mask).data.sum())

    checked = 0
    for (name, tensor), grad in zip(named, grads):
        want = finite_diff(loss_fn, tensor.data)
        assert rel_err(grad, want) < 1e-4, name
        checked += 1
    assert checked == len(named)


def test_unused_branch_gets_zero_gradient():
    cfg = tiny_cfg(variant="no-b")
    params = init_sse_params(make_rng(9, "init"), cfg)
    extent, b_mask, s_mask = window(6)
    named = list(params.items())
    tensors = [t for _, t in named]
    with GradientTape() as tape:
        tape.watch(*tensors)
        out = run_embed(params, cfg, np.array([[1.0, 1.0]]), extent, b_mask, s_mask)
        loss = sum_all(out)
    grads = tape.gradients(loss, tensors)
    for (name, _), grad in zip(named, grads):
        if name.startswith("sse.building"):
            assert np.all(grad == 0.0), name


# ---------------------------------------------------------------------------
# parameter bookkeeping
# ---------------------------------------------------------------------------

def test_param_names_unique_and_rebindable():
    cfg = tiny_cfg()
    params = init_sse_params(make_rng(10, "init"), cfg)
    named = list(params.items())
    names = [n for n, _ in named]
    assert len(set(names)) == len(names)
    assert "sse.building.0.kernel" in names
    assert "sse.mlp.4.weight" in names

    store = {n: Tensor(t.data * 2.0) for n, t in named}
    params.rebind(store)
    assert np.array_equal(params.mlp[0].weight.data, store["sse.mlp.0.weight"].data)


def test_init_deterministic():
    cfg = SseConfig()
    a = init_sse_params(make_rng(11, "init"), cfg)
    b = init_sse_params(make_rng(11, "init"), cfg)
    for (na, ta), (nb, tb) in zip(a.items(), b.items()):
        assert na == nb
        assert np.array_equal(ta.data, tb.data)


def test_embed_input_validation():
    cfg = tiny_cfg()
    params = init_sse_params(make_rng(12, "init"), cfg)
    extent, b_mask, s_mask = window(6)
    with pytest.raises(NumericError, match="non-finite"):
        run_embed(params, cfg, np.array([[np.nan, 1.0]]), extent, b_mask, s_mask)
    with pytest.raises(ConfigurationError, match=r"\(m, 2\)"):
        run_embed(params, cfg, np.array([1.0, 2.0, 3.0]), extent, b_mask, s_mask)
    with pytest.raises(ConfigurationError, match="mask shapes"):
        encode_priors(params, b_mask, s_mask[:4])
