"""Cross-attention model tests: oracle equivalence, invariants, training."""

import numpy as np
import pytest

from rme.errors import (
    ConfigurationError,
    DataFormatError,
    DegenerateInputError,
    DimensionError,
)
from rme.model import (
    BlockParams,
    CgformerModel,
    HeadParams,
    ModelConfig,
    batch_loss,
    cross_attention_block,
    forward,
    init_model,
    load_model,
    mse_loss,
    save_model,
    train_step,
    with_standardization,
)
from rme.optim import AdamState
from rme.scene import (
    Sample,
    Scene,
    ShadowingConfig,
    Transmitter,
    extract_subregion,
    generate_single_tx_map,
    make_sample,
)
from rme.seeding import make_rng
from rme.sse import SseConfig
from rme.tensor import GradientTape, Tensor

from oracles import attention_block_ref, finite_diff, rel_err

NO_SHADOW = ShadowingConfig(enabled=False)


def tiny_config(**kw):
    sse = SseConfig(freq_count=2, prior_channels=2, conv_hidden=2,
                    mlp_hidden=4, embed_dim=4,
                    variant=kw.pop("variant", "full"))
    base = dict(sse=sse, model_dim=4, num_heads=2, value_hidden=4,
                value_mean=10.0, value_std=12.0)
    base.update(kw)
    return ModelConfig(**base)


def open_sample(cells=8, factor=0.4, seed=0):
    scene = Scene(float(cells), float(cells), 1.0, (),
                  (Transmitter(0.5, 0.5, 30.0),))
    rm = generate_single_tx_map(scene, 0, NO_SHADOW, seed=0)
    sub = extract_subregion(rm, (0, 0), (cells, cells))
    return make_sample(sub, factor, 0.5, make_rng(seed, "model-sample"))


def jitter_params(model, seed=1):
    """Nudge every parameter off zero so relu kinks cannot trap FD checks."""
    rng = make_rng(seed, "jitter")
    for _, t in model.named_params():
        t.data += rng.uniform(0.01, 0.08, size=t.data.shape)


# ---------------------------------------------------------------------------
# block against the hand-rolled reference
# ---------------------------------------------------------------------------

def random_block(rng, d, n_heads):
    dh = d // n_heads
    heads = [HeadParams(Tensor(0.3 * rng.standard_normal((d, dh))),
                        Tensor(0.3 * rng.standard_normal((d, dh))),
                        Tensor(0.3 * rng.standard_normal((d, dh))))
             for _ in range(n_heads)]
    return BlockParams(
        heads=heads,
        out_proj=Tensor(0.3 * rng.standard_normal((d, d))),
        norm1_gain=Tensor(1.0 + 0.1 * rng.standard_normal(d)),
        norm1_bias=Tensor(0.05 * rng.standard_normal(d)),
        norm2_gain=Tensor(1.0 + 0.1 * rng.standard_normal(d)),
        norm2_bias=Tensor(0.05 * rng.standard_normal(d)),
        ffn_in=Tensor(0.3 * rng.standard_normal((d, d))),
        ffn_out=Tensor(0.3 * rng.standard_normal((d, d))),
    )


@pytest.mark.parametrize("bypass,norm_keys", [(False, False), (True, False),
                                              (False, True)])
def test_block_matches_reference(bypass, norm_keys):
    rng = make_rng(0, "block-ref", bypass, norm_keys)
    cfg = ModelConfig(model_dim=8, num_heads=2, norm_keys=norm_keys)
    block = random_block(rng, 8, 2)
    q = rng.standard_normal((3, 8))
    k = rng.standard_normal((5, 8))
    v = rng.standard_normal((5, 8))
    got = cross_attention_block(block, Tensor(q), Tensor(k), Tensor(v), cfg,
                                bypass_norms=bypass)
    want = attention_block_ref(q, k, v, block, cfg.norm_eps,
                               bypass_norms=bypass, norm_keys=norm_keys)
    assert got.shape == (3, 8)
    assert np.max(np.abs(got.data - want)) < 1e-12


def test_norm_keys_changes_the_numbers():
    rng = make_rng(1, "block-ref")
    block = random_block(rng, 8, 2)
    q, k, v = (rng.standard_normal((4, 8)) for _ in range(3))
    plain = cross_attention_block(block, Tensor(q), Tensor(k), Tensor(v),
                                  ModelConfig(model_dim=8, num_heads=2))
    keyed = cross_attention_block(block, Tensor(q), Tensor(k), Tensor(v),
                                  ModelConfig(model_dim=8, num_heads=2,
                                              norm_keys=True))
    assert not np.allclose(plain.data, keyed.data)


# ---------------------------------------------------------------------------
# forward invariants
# ---------------------------------------------------------------------------

def test_attention_rows_are_distributions():
    cfg = tiny_config()
    model = init_model(cfg, seed=3)
    sample = open_sample()
    sink = []
    out = forward(model, sample, sample.target_xy, attn_sink=sink)
    n, m = len(sample.meas_values), len(sample.target_values)
    assert out.shape == (m,)
    assert len(sink) == cfg.num_blocks * cfg.num_heads
    for attn in sink:
        assert attn.shape == (m, n)
        assert np.all(attn >= 0.0)
        assert np.max(np.abs(attn.sum(axis=1) - 1.0)) < 1e-12


def test_queries_do_not_interact():
    model = init_model(tiny_config(), seed=4)
    sample = open_sample()
    full = forward(model, sample, sample.target_xy).data
    for i in range(len(sample.target_xy)):
        solo = forward(model, sample, sample.target_xy[i:i + 1]).data
        assert abs(full[i] - solo[0]) < 1e-12

    doubled = np.vstack([sample.target_xy, sample.target_xy[:1]])
    again = forward(model, sample, doubled).data
    assert again[-1] == again[0]


def test_measurement_order_is_irrelevant():
    model = init_model(tiny_config(), seed=5)
    sample = open_sample()
    base = forward(model, sample, sample.target_xy).data
    perm = make_rng(6, "perm").permutation(len(sample.meas_values))
    shuffled = Sample(
        extent=sample.extent,
        meas_xy=sample.meas_xy[perm], meas_values=sample.meas_values[perm],
        target_xy=sample.target_xy, target_values=sample.target_values,
        b_mask=sample.b_mask, s_mask=sample.s_mask,
        sampling_factor=sample.sampling_factor,
    )
    assert np.allclose(forward(model, shuffled, sample.target_xy).data, base,
                       atol=1e-9)


def test_zeroed_model_predicts_the_window_mean():
    cfg = tiny_config(value_mean=-70.0, value_std=5.0)
    model = init_model(cfg, seed=7)
    for _, t in model.named_params():
        t.data[:] = 0.0
    sample = open_sample()
    out = forward(model, sample, sample.target_xy).data
    assert np.all(out == float(np.mean(sample.meas_values)))


def test_constant_offset_tracks_through():
    # readings are centered per window, so shifting every measurement by a
    # constant must shift every prediction by exactly that constant
    model = init_model(tiny_config(), seed=9)
    sample = open_sample()
    shifted = Sample(
        extent=sample.extent,
        meas_xy=sample.meas_xy, meas_values=sample.meas_values + 12.5,
        target_xy=sample.target_xy, target_values=sample.target_values,
        b_mask=sample.b_mask, s_mask=sample.s_mask,
        sampling_factor=sample.sampling_factor,
    )
    base = forward(model, sample, sample.target_xy).data
    moved = forward(model, shifted, sample.target_xy).data
    assert np.max(np.abs(moved - (base + 12.5))) < 1e-9


def test_standardization_is_an_affine_wrapper():
    cfg = tiny_config(value_mean=-50.0, value_std=8.0)
    model = init_model(cfg, seed=8)
    raw_cfg = tiny_config(value_mean=0.0, value_std=1.0)
    twin = init_model(raw_cfg, seed=8)

    sample = open_sample()
    standardized = Sample(
        extent=sample.extent,
        meas_xy=sample.meas_xy,
        meas_values=(sample.meas_values - (-50.0)) / 8.0,
        target_xy=sample.target_xy, target_values=sample.target_values,
        b_mask=sample.b_mask, s_mask=sample.s_mask,
        sampling_factor=sample.sampling_factor,
    )
    a = forward(model, sample, sample.target_xy).data
    b = forward(twin, standardized, sample.target_xy).data
    # both forwards subtract their own window mean, so the two nets see the
    # same centered inputs only up to rounding; the affine identity still
    # holds but not bitwise
    assert np.max(np.abs(a - (-50.0 + 8.0 * b))) < 1e-9


def test_input_validation():
    model = init_model(tiny_config(), seed=9)
    sample = open_sample()
    with pytest.raises(DimensionError):
        forward(model, sample, np.zeros((3,)))
    empty = Sample(extent=sample.extent,
                   meas_xy=np.zeros((0, 2)), meas_values=np.zeros(0),
                   target_xy=sample.target_xy, target_values=sample.target_values,
                   b_mask=sample.b_mask, s_mask=sample.s_mask,
                   sampling_factor=0.1)
    with pytest.raises(DegenerateInputError, match="measurement"):
        forward(model, empty, sample.target_xy)
    with pytest.raises(DegenerateInputError, match="query"):
        forward(model, sample, np.zeros((0, 2)))
    with pytest.raises(ConfigurationError, match="divisible"):
        ModelConfig(model_dim=10, num_heads=4)
    with pytest.raises(ConfigurationError, match="value_std"):
        ModelConfig(value_std=0.0)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_full_model_gradients_match_fd():
    model = init_model(tiny_config(), seed=10)
    jitter_params(model)
    sample = open_sample(cells=6, factor=0.5)

    named = model.named_params()
    tensors = [t for _, t in named]
    with GradientTape() as tape:
        tape.watch(*tensors)
        loss = mse_loss(forward(model, sample, sample.target_xy),
                        sample.target_values)
    grads = tape.gradients(loss, tensors)

    def loss_fn(_):
        pred = forward(model, sample, sample.target_xy).data
        return float(np.mean((pred - sample.target_values) ** 2))

    # compare one flattened vector: the key-lift bias cancels inside softmax,
    # so its true gradient is exactly zero and an entrywise ratio would pit
    # finite-difference noise against it
    analytic = np.concatenate([g.ravel() for g in grads])
    numeric = np.concatenate(
        [finite_diff(loss_fn, t.data).ravel() for t in tensors])
    gap = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
    assert gap < 2e-4
    assert np.linalg.norm(numeric) > 0.0  # something was actually compared


# ---------------------------------------------------------------------------
# training mechanics
# ---------------------------------------------------------------------------

def test_loss_decreases_on_one_sample():
    model = init_model(tiny_config(), seed=11)
    sample = open_sample()
    state = AdamState.for_params(model.tensors(), lr=1e-2)
    first = train_step(model, state, [sample])
    last = first
    for _ in range(49):
        last = train_step(model, state, [sample])
    assert last < 0.5 * first
    assert state.step_count == 50


def test_training_is_deterministic():
    batch = [open_sample(seed=s) for s in range(3)]

    def run():
        model = init_model(tiny_config(), seed=12)
        state = AdamState.for_params(model.tensors())
        for _ in range(3):
            train_step(model, state, batch)
        return model

    a, b = run(), run()
    for (na, ta), (_, tb) in zip(a.named_params(), b.named_params()):
        assert np.array_equal(ta.data, tb.data), na


def test_batch_loss_is_mean_of_sample_losses():
    model = init_model(tiny_config(), seed=13)
    batch = [open_sample(seed=s) for s in range(2)]
    got = float(batch_loss(model, batch).data)
    parts = [float(mse_loss(forward(model, s, s.target_xy), s.target_values).data)
             for s in batch]
    assert abs(got - 0.5 * (parts[0] + parts[1])) < 1e-12
    with pytest.raises(DegenerateInputError):
        batch_loss(model, [])


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    cfg = tiny_config(norm_keys=True)
    model = init_model(cfg, seed=14)
    model.epochs_trained = 17
    path = str(tmp_path / "model.rmod")
    save_model(model, path)
    back = load_model(path)

    assert back.cfg == cfg
    assert back.epochs_trained == 17
    for (na, ta), (nb, tb) in zip(model.named_params(), back.named_params()):
        assert na == nb
        assert np.array_equal(ta.data, tb.data), na

    sample = open_sample()
    assert np.array_equal(forward(model, sample, sample.target_xy).data,
                          forward(back, sample, sample.target_xy).data)


def test_checkpoint_rejects_corruption(tmp_path):
    model = init_model(tiny_config(), seed=15)
    path = str(tmp_path / "model.rmod")
    save_model(model, path)
    blob = open(path, "rb").read()

    bad_magic = str(tmp_path / "magic.rmod")
    with open(bad_magic, "wb") as fh:
        fh.write(b"XXXX" + blob[4:])
    with pytest.raises(DataFormatError, match="magic"):
        load_model(bad_magic)

    cut = str(tmp_path / "cut.rmod")
    with open(cut, "wb") as fh:
        fh.write(blob[:-20])
    with pytest.raises(DataFormatError, match="truncated"):
        load_model(cut)

    with pytest.raises(DataFormatError, match="no checkpoint"):
        load_model(str(tmp_path / "missing.rmod"))


def test_with_standardization():
    cfg = with_standardization(tiny_config(), mean=-61.5, std=9.25)
    assert cfg.value_mean == -61.5 and cfg.value_std == 9.25
    floored = with_standardization(tiny_config(), mean=0.0, std=0.0)
    assert floored.value_std == 1e-6
