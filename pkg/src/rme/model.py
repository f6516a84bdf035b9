"""Cross-attention map estimator and its checkpoint format.

Target points become queries, measurements become keys and values, and two
attention blocks move information from measurements to targets.  Queries
never attend to each other, so every prediction depends only on its own
coordinates and the shared measurement set; predicting points one at a time
or in bulk gives the same numbers.

The value path fuses each measurement's standardized reading with its
spatial embedding; keys and queries are linear lifts of embeddings alone.
Key and value source features are computed once and shared by both blocks.
Predictions leave the network destandardized, in dBm.

Checkpoints (extension ``.rmod``) carry magic ``RMOD``, a u16 version, a
length-prefixed sorted-key JSON config block, and little-endian f64 blobs
for every parameter under its dotted walk name.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigurationError,
    DataFormatError,
    DegenerateInputError,
    DimensionError,
    NumericError,
    TrainingDivergedError,
)
from .layers import LinearLayer, check_unique_names, init_linear, items_of, rebind_all
from .optim import AdamState, adam_step
from .scene import Sample
from .seeding import make_rng
from .sse import SseConfig, SseParams, embed_points, encode_priors, init_sse_params
from .tensor import (
    GradientTape,
    Tensor,
    add,
    affine_scalar,
    concat_last_axis,
    layer_norm,
    matmul,
    mean_all,
    mul,
    relu,
    reshape,
    scale,
    slice_rows,
    softmax_rows,
    sub,
    transpose,
    uniform_init,
    zeros,
)

CHECKPOINT_MAGIC = b"RMOD"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    sse: SseConfig = field(default_factory=SseConfig)
    model_dim: int = 64
    num_heads: int = 4
    num_blocks: int = 2
    value_hidden: int = 64
    norm_keys: bool = False
    norm_eps: float = 1e-5
    value_mean: float = 0.0
    value_std: float = 1.0

    def __post_init__(self):
        if self.model_dim < 1 or self.num_heads < 1 or self.num_blocks < 1:
            raise ConfigurationError("model dims and counts must be positive")
        if self.model_dim % self.num_heads != 0:
            raise ConfigurationError(
                f"model_dim {self.model_dim} not divisible by {self.num_heads} heads")
        if self.value_std <= 0.0:
            raise ConfigurationError(f"value_std must be positive, got {self.value_std}")
        if self.norm_eps <= 0.0:
            raise ConfigurationError(f"norm_eps must be positive, got {self.norm_eps}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "model_dim", "num_heads", "num_blocks", "value_hidden",
            "norm_keys", "norm_eps", "value_mean", "value_std")}
        out["sse"] = {k: getattr(self.sse, k) for k in (
            "freq_count", "prior_channels", "conv_hidden", "mlp_hidden",
            "embed_dim", "variant")}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        sse = SseConfig(**d["sse"])
        rest = {k: v for k, v in d.items() if k != "sse"}
        return cls(sse=sse, **rest)


@dataclass
class HeadParams:
    query_proj: Tensor   # (model_dim, head_dim), no bias
    key_proj: Tensor
    value_proj: Tensor

    def items(self, prefix: str):
        yield prefix + ".query_proj", self.query_proj
        yield prefix + ".key_proj", self.key_proj
        yield prefix + ".value_proj", self.value_proj

    def rebind(self, prefix: str, store: dict):
        self.query_proj = store[prefix + ".query_proj"]
        self.key_proj = store[prefix + ".key_proj"]
        self.value_proj = store[prefix + ".value_proj"]


@dataclass
class BlockParams:
    heads: list[HeadParams]
    out_proj: Tensor
    norm1_gain: Tensor
    norm1_bias: Tensor
    norm2_gain: Tensor
    norm2_bias: Tensor
    ffn_in: Tensor
    ffn_out: Tensor

    def items(self, prefix: str):
        for i, h in enumerate(self.heads):
            yield from h.items(f"{prefix}.heads.{i}")
        for name in ("out_proj", "norm1_gain", "norm1_bias", "norm2_gain",
                     "norm2_bias", "ffn_in", "ffn_out"):
            yield f"{prefix}.{name}", getattr(self, name)

    def rebind(self, prefix: str, store: dict):
        for i, h in enumerate(self.heads):
            h.rebind(f"{prefix}.heads.{i}", store)
        for name in ("out_proj", "norm1_gain", "norm1_bias", "norm2_gain",
                     "norm2_bias", "ffn_in", "ffn_out"):
            setattr(self, name, store[f"{prefix}.{name}"])


@dataclass
class CgformerModel:
    cfg: ModelConfig
    sse: SseParams
    fuse_pre: list[LinearLayer]    # reading -> value_hidden -> value_hidden
    fuse_post: list[LinearLayer]   # (value_hidden + embed) -> embed -> model_dim
    lift_query: LinearLayer        # embed -> model_dim
    lift_key: LinearLayer
    blocks: list[BlockParams]
    head: LinearLayer              # model_dim -> 1, bias carries the mean
    epochs_trained: int = 0

    def items(self):
        yield from self.sse.items("sse")
        yield from items_of(self.fuse_pre, "fuse_pre")
        yield from items_of(self.fuse_post, "fuse_post")
        yield from self.lift_query.items("lift_query")
        yield from self.lift_key.items("lift_key")
        for i, b in enumerate(self.blocks):
            yield from b.items(f"blocks.{i}")
        yield from self.head.items("head")

    def named_params(self) -> list[tuple[str, Tensor]]:
        return check_unique_names(self.items())

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.items()]

    def rebind(self, store: dict):
        self.sse.rebind(store, "sse")
        rebind_all(self.fuse_pre, "fuse_pre", store)
        rebind_all(self.fuse_post, "fuse_post", store)
        self.lift_query.rebind("lift_query", store)
        self.lift_key.rebind("lift_key", store)
        for i, b in enumerate(self.blocks):
            b.rebind(f"blocks.{i}", store)
        self.head.rebind("head", store)


def _init_block(rng, cfg: ModelConfig) -> BlockParams:
    d, dh = cfg.model_dim, cfg.head_dim
    heads = [HeadParams(
        query_proj=uniform_init(rng, (d, dh), d, dh),
        key_proj=uniform_init(rng, (d, dh), d, dh),
        value_proj=uniform_init(rng, (d, dh), d, dh),
    ) for _ in range(cfg.num_heads)]
    return BlockParams(
        heads=heads,
        out_proj=uniform_init(rng, (d, d), d, d),
        norm1_gain=Tensor(np.ones(d)),
        norm1_bias=zeros((d,)),
        norm2_gain=Tensor(np.ones(d)),
        norm2_bias=zeros((d,)),
        ffn_in=uniform_init(rng, (d, d), d, d),
        ffn_out=uniform_init(rng, (d, d), d, d),
    )


def init_model(cfg: ModelConfig, seed: int) -> CgformerModel:
    rng = make_rng(seed, "model-init")
    e, v, d = cfg.sse.embed_dim, cfg.value_hidden, cfg.model_dim
    return CgformerModel(
        cfg=cfg,
        sse=init_sse_params(rng, cfg.sse),
        fuse_pre=[init_linear(rng, 1, v), init_linear(rng, v, v)],
        fuse_post=[init_linear(rng, v + e, e), init_linear(rng, e, d)],
        lift_query=init_linear(rng, e, d),
        lift_key=init_linear(rng, e, d),
        blocks=[_init_block(rng, cfg) for _ in range(cfg.num_blocks)],
        head=init_linear(rng, d, 1),
    )


def fuse_values(model: CgformerModel, meas_std: Tensor, meas_emb: Tensor) -> Tensor:
    """Measurement readings + embeddings -> attention value source rows."""
    pre = model.fuse_pre[1](relu(model.fuse_pre[0](meas_std)))
    cat = concat_last_axis(pre, meas_emb)
    return model.fuse_post[1](relu(model.fuse_post[0](cat)))


def cross_attention_block(block: BlockParams, queries: Tensor, key_src: Tensor,
                          value_src: Tensor, cfg: ModelConfig,
                          bypass_norms: bool = False,
                          attn_sink: list | None = None) -> Tensor:
    """One pre-norm block: queries read the measurement set, then an FFN.

    Only queries are normalized before projection (norm_keys additionally
    normalizes keys with the same parameters).  The residual adds onto the
    raw query input, keeping the block close to identity at initialization.
    """
    if bypass_norms:
        q_in, k_in = queries, key_src
    else:
        q_in = layer_norm(queries, block.norm1_gain, block.norm1_bias, cfg.norm_eps)
        k_in = key_src
        if cfg.norm_keys:
            k_in = layer_norm(key_src, block.norm1_gain, block.norm1_bias, cfg.norm_eps)

    inv_scale = 1.0 / math.sqrt(cfg.head_dim)
    head_outs = []
    for hp in block.heads:
        qh = matmul(q_in, hp.query_proj)
        kh = matmul(k_in, hp.key_proj)
        vh = matmul(value_src, hp.value_proj)
        attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale))
        if attn_sink is not None:
            attn_sink.append(attn.data.copy())
        head_outs.append(matmul(attn, vh))
    mha = matmul(concat_last_axis(*head_outs), block.out_proj)
    updated = add(queries, mha)

    if bypass_norms:
        z = updated
    else:
        z = layer_norm(updated, block.norm2_gain, block.norm2_bias, cfg.norm_eps)
    ffn = matmul(relu(matmul(z, block.ffn_in)), block.ffn_out)
    return add(updated, ffn)


def forward(model: CgformerModel, sample: Sample, query_xy: np.ndarray,
            attn_sink: list | None = None) -> Tensor:
    """Predicted received power (m,) in dBm at continuous query points."""
    query_xy = np.asarray(query_xy, dtype=np.float64)
    if query_xy.ndim != 2 or query_xy.shape[1] != 2:
        raise DimensionError(f"queries must be (m, 2), got {query_xy.shape}")
    n = len(sample.meas_values)
    m = query_xy.shape[0]
    if n < 1:
        raise DegenerateInputError("at least one measurement is required")
    if m < 1:
        raise DegenerateInputError("at least one query point is required")
    if not np.all(np.isfinite(sample.meas_values)):
        raise NumericError("non-finite measurement values")

    cfg = model.cfg
    spec = sample.grid_spec()
    prior_b, prior_s = encode_priors(model.sse, sample.b_mask, sample.s_mask)
    all_xy = np.vstack([sample.meas_xy, query_xy])
    emb = embed_points(model.sse, cfg.sse, all_xy, sample.extent, spec,
                       prior_b, prior_s)
    meas_emb = slice_rows(emb, 0, n)
    query_emb = slice_rows(emb, n, n + m)

    # readings enter centered on their own window's mean, so predictions
    # track any constant offset of the inputs exactly; the classical
    # interpolators are all level-adaptive the same way, and the network
    # then spends its capacity on spatial structure instead of absolute
    # level.  cfg.value_mean still identifies the training dataset.
    center = float(np.mean(sample.meas_values))
    std_readings = (sample.meas_values - center) / cfg.value_std
    value_src = fuse_values(model, Tensor(std_readings[:, None]), meas_emb)
    key_src = model.lift_key(meas_emb)

    q = model.lift_query(query_emb)
    for block in model.blocks:
        q = cross_attention_block(block, q, key_src, value_src, cfg,
                                  attn_sink=attn_sink)
    out = model.head(q)
    return reshape(affine_scalar(out, cfg.value_std, center), (m,))


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction {pred.shape} vs target {target.shape}")
    diff = sub(pred, Tensor(target))
    return mean_all(mul(diff, diff))


def batch_loss(model: CgformerModel, batch: list[Sample]) -> Tensor:
    """Mean per-sample loss, accumulated in batch order."""
    if not batch:
        raise DegenerateInputError("empty batch")
    total = None
    for sample in batch:
        loss = mse_loss(forward(model, sample, sample.target_xy),
                        sample.target_values)
        total = loss if total is None else add(total, loss)
    return scale(total, 1.0 / len(batch))


def train_step(model: CgformerModel, state: AdamState, batch: list[Sample]) -> float:
    """One Adam update over a batch; returns the batch loss in dB^2."""
    named = model.named_params()
    tensors = [t for _, t in named]
    with GradientTape() as tape:
        tape.watch(*tensors)
        loss = batch_loss(model, batch)
    value = float(loss.data)
    if not np.isfinite(value):
        raise TrainingDivergedError(
            f"batch loss became {value} at optimizer step {state.step_count}")
    grads = tape.gradients(loss, tensors)
    updated = adam_step(tensors, grads, state)
    model.rebind({name: t for (name, _), t in zip(named, updated)})
    return value


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_model(model: CgformerModel, path: str) -> None:
    config = {"model": model.cfg.to_dict(), "epochs_trained": model.epochs_trained}
    blob = json.dumps(config, sort_keys=True).encode()
    named = model.named_params()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(named)))
        for name, tensor in named:
            encoded = name.encode()
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            dims = tensor.data.shape
            fh.write(struct.pack("<B", len(dims)))
            for d in dims:
                fh.write(struct.pack("<I", d))
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_model(path: str) -> CgformerModel:
    if not os.path.exists(path):
        raise DataFormatError(f"no checkpoint at {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataFormatError(
            f"{path}: bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack("<H", blob[4:6])
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"{path}: unsupported checkpoint version {version}")

    at = 6

    def take(n: int) -> bytes:
        nonlocal at
        if at + n > len(blob):
            raise DataFormatError(f"{path}: truncated checkpoint at byte {at}")
        out = blob[at:at + n]
        at += n
        return out

    (cfg_len,) = struct.unpack("<I", take(4))
    try:
        config = json.loads(take(cfg_len))
        cfg = ModelConfig.from_dict(config["model"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataFormatError(f"{path}: malformed config block: {exc}") from exc

    (count,) = struct.unpack("<I", take(4))
    store: dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        (ndim,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim)) if ndim else ()
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(8 * size), dtype="<f8").reshape(dims).copy()
        store[name] = Tensor(data)

    model = init_model(cfg, seed=0)
    model.epochs_trained = int(config.get("epochs_trained", 0))
    expected = model.named_params()
    missing = [n for n, _ in expected if n not in store]
    extra = sorted(set(store) - {n for n, _ in expected})
    if missing or extra:
        raise DataFormatError(
            f"{path}: parameter names do not match the config "
            f"(missing {missing[:3]}, extra {extra[:3]})")
    for name, tensor in expected:
        if store[name].shape != tensor.shape:
            raise DataFormatError(
                f"{path}: {name} has shape {store[name].shape}, expected {tensor.shape}")
    model.rebind(store)
    return model


def with_standardization(cfg: ModelConfig, mean: float, std: float) -> ModelConfig:
    return replace(cfg, value_mean=float(mean), value_std=float(max(std, 1e-6)))
