"""Two-branch velocity network.

Frequency branch: the low/high band images are concatenated on channels,
patchified, and run through a small pre-norm transformer. Two pointwise
projections split the trunk features into low/high streams; a sigmoid gate
conditioned on time mixes them (h = w*h_low + (1-w)*h_high) and two linear
unpatchify heads emit the band velocity predictions.

Spatial branch: a 3x3-conv stem embeds x_t, the gated frequency features are
projected, bilinearly upsampled and merged by elementwise addition, then
residual conv blocks and a final 3x3 conv produce the full velocity.

Public entry points mirror the single-sample contracts; *_core functions are
the batched tape-building internals used by training and sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError, InputError, NumericError
from .flowpath import ClassCondition
from .rng import RngStream
from .spectral import FrequencyMaskPair, decompose_batch

TIME_SCALE = 1000.0
MAX_PERIOD = 1.0e4


@dataclass(frozen=True)
class ModelConfig:
    image_channels: int = 1
    image_size: int = 16
    num_classes: int = 8
    patch_size: int = 4
    freq_depth: int = 4
    freq_width: int = 64
    spatial_depth: int = 3
    spatial_width: int = 32
    time_embed_dim: int = 32
    sigma_low: float = 8.0
    sigma_high: float = 2.0
    label_dropout: float = 0.1

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if min(self.freq_depth, self.freq_width, self.spatial_depth, self.spatial_width) < 1:
            raise ConfigError("depths and widths must be >= 1")
        if self.time_embed_dim % 2 or self.time_embed_dim < 4:
            raise ConfigError("time_embed_dim must be even and >= 4")
        if not 0.0 <= self.label_dropout < 1.0:
            raise ConfigError("label_dropout must be in [0, 1)")
        if self.image_size % 2 or self.image_size < 2:
            raise ConfigError("image_size must be even and >= 2")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid * self.grid

    @property
    def patch_dim(self) -> int:
        return 2 * self.image_channels * self.patch_size**2

    @property
    def head_dim(self) -> int:
        return self.image_channels * self.patch_size**2

    def to_kv(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_kv(cls, kv: dict) -> "ModelConfig":
        casted = {}
        for f in fields(cls):
            if f.name not in kv:
                raise ConfigError(f"missing model config key {f.name}")
            raw = kv[f.name]
            casted[f.name] = float(raw) if f.type == "float" else int(raw)
        return cls(**casted)


def param_schema(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every tensor the model owns, by name, with its exact shape."""
    e, d, s = cfg.time_embed_dim, cfg.freq_width, cfg.spatial_width
    c, p, t = cfg.image_channels, cfg.patch_size, cfg.num_tokens
    schema: dict[str, tuple[int, ...]] = {
        "time_mlp.w1": (e, e),
        "time_mlp.b1": (e,),
        "time_mlp.w2": (e, e),
        "time_mlp.b2": (e,),
        "class_embed.table": (cfg.num_classes + 1, e),
        "freq.cond.w": (e, d),
        "freq.cond.b": (d,),
        "freq.patch.w": (cfg.patch_dim, d),
        "freq.patch.b": (d,),
        "freq.pos": (t, d),
    }
    for i in range(cfg.freq_depth):
        b = f"freq.block{i}"
        schema[f"{b}.ln1.g"] = (d,)
        schema[f"{b}.ln1.b"] = (d,)
        for nm in ("wq", "wk", "wv", "wo"):
            schema[f"{b}.attn.{nm}"] = (d, d)
        for nm in ("bq", "bk", "bv", "bo"):
            schema[f"{b}.attn.{nm}"] = (d,)
        schema[f"{b}.ln2.g"] = (d,)
        schema[f"{b}.ln2.b"] = (d,)
        schema[f"{b}.ff.w1"] = (d, 2 * d)
        schema[f"{b}.ff.b1"] = (2 * d,)
        schema[f"{b}.ff.w2"] = (2 * d, d)
        schema[f"{b}.ff.b2"] = (d,)
    schema.update(
        {
            "freq.final_ln.g": (d,),
            "freq.final_ln.b": (d,),
            "freq.low_proj.w": (d, d),
            "freq.low_proj.b": (d,),
            "freq.high_proj.w": (d, d),
            "freq.high_proj.b": (d,),
            "freq.gate.w1": (2 * d + e, d),
            "freq.gate.b1": (d,),
            "freq.gate.w2": (d, d),
            "freq.gate.b2": (d,),
            "freq.head_low.w": (d, cfg.head_dim),
            "freq.head_low.b": (cfg.head_dim,),
            "freq.head_high.w": (d, cfg.head_dim),
            "freq.head_high.b": (cfg.head_dim,),
            "spatial.cond.w": (e, s),
            "spatial.cond.b": (s,),
            "spatial.stem.w": (3, 3, c, s),
            "spatial.stem.b": (s,),
            "spatial.bridge.w": (d, s),
            "spatial.bridge.b": (s,),
        }
    )
    for i in range(cfg.spatial_depth):
        b = f"spatial.block{i}"
        schema[f"{b}.ln.g"] = (s,)
        schema[f"{b}.ln.b"] = (s,)
        schema[f"{b}.conv.w"] = (3, 3, s, s)
        schema[f"{b}.conv.b"] = (s,)
        schema[f"{b}.pw1.w"] = (s, 2 * s)
        schema[f"{b}.pw1.b"] = (2 * s,)
        schema[f"{b}.pw2.w"] = (2 * s, s)
        schema[f"{b}.pw2.b"] = (s,)
    schema["spatial.head.w"] = (3, 3, s, c)
    schema["spatial.head.b"] = (c,)
    return schema


def param_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count; must match the instantiated schema."""
    e, d, s = cfg.time_embed_dim, cfg.freq_width, cfg.spatial_width
    c = cfg.image_channels
    total = 2 * e * e + 2 * e  # time mlp
    total += (cfg.num_classes + 1) * e  # class table
    total += e * d + d  # freq conditioning
    total += cfg.patch_dim * d + d  # patch embed
    total += cfg.num_tokens * d  # positions
    total += cfg.freq_depth * (8 * d * d + 11 * d)  # attn + ff blocks
    total += 2 * d  # final ln
    total += 2 * (d * d + d)  # band projections
    total += (2 * d + e) * d + d + d * d + d  # gate mlp
    total += 2 * (d * cfg.head_dim + cfg.head_dim)  # band heads
    total += e * s + s  # spatial conditioning
    total += 9 * c * s + s  # stem
    total += d * s + s  # bridge
    total += cfg.spatial_depth * (13 * s * s + 6 * s)  # conv blocks
    total += 9 * s * c + c  # head
    return total


ZERO_INIT = ("freq.head_low.w", "freq.head_low.b", "freq.head_high.w", "freq.head_high.b",
             "spatial.head.w", "spatial.head.b")


class ModelParams:
    """Named parameter tensors validated against the config's schema."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        schema = param_schema(config)
        missing = sorted(set(schema) - set(tensors))
        extra = sorted(set(tensors) - set(schema))
        if missing or extra:
            raise ConfigError(f"parameter names do not match schema (missing={missing}, extra={extra})")
        for name, shape in schema.items():
            arr = tensors[name]
            if tuple(arr.shape) != shape:
                raise ConfigError(f"parameter {name} has shape {arr.shape}, schema says {shape}")
            if not np.all(np.isfinite(arr)):
                raise NumericError(f"parameter {name} contains non-finite values")
        self.config = config
        self.tensors = tensors

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def count(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def as_tensors(self, requires_grad: bool = False) -> dict[str, ad.Tensor]:
        return {k: ad.Tensor(v, requires_grad=requires_grad) for k, v in self.tensors.items()}


def _trunc_normal(stream: RngStream, shape, std: float) -> np.ndarray:
    out = stream.normal(size=shape)
    for _ in range(8):
        bad = np.abs(out) > 2.0
        if not bad.any():
            break
        out[bad] = stream.normal(size=int(bad.sum()))
    return np.clip(out, -2.0, 2.0) * std


def _init_std(name: str, shape) -> float:
    # fan-in scaling; a flat 0.02 (big-model practice) starves the narrow
    # conditioning paths at toy widths, leaving the gate effectively blind
    # to time
    if name in ("class_embed.table", "freq.pos"):
        return 1.0 / float(np.sqrt(shape[-1]))
    fan_in = int(np.prod(shape[:-1]))
    return 1.0 / float(np.sqrt(fan_in))


def init_params(cfg: ModelConfig, stream: RngStream, zero_heads: bool = True,
                dtype=np.float32) -> ModelParams:
    """Truncated-normal weights at 1/sqrt(fan_in), zero biases, unit LN gains.

    zero_heads zeroes the three velocity output layers (stabilizes early
    training); pass False to get a fully random net for gradient probing.
    """
    tensors = {}
    for i, (name, shape) in enumerate(sorted(param_schema(cfg).items())):
        child = stream.child(i)
        if name.endswith((".g",)):
            arr = np.ones(shape)
        elif zero_heads and name in ZERO_INIT:
            arr = np.zeros(shape)
        elif len(shape) == 1:
            arr = np.zeros(shape)
        else:
            arr = _trunc_normal(child, shape, _init_std(name, shape))
        tensors[name] = np.ascontiguousarray(arr, dtype=dtype)
    return ModelParams(cfg, tensors)


@dataclass
class FrequencyBranchOutput:
    """Band velocity predictions plus the gated trunk features (single sample)."""

    v_low_hat: np.ndarray
    v_high_hat: np.ndarray
    h: np.ndarray
    omega: np.ndarray
    h_low: np.ndarray
    h_high: np.ndarray

    @property
    def mean_omega(self) -> float:
        return float(self.omega.mean())


# ------------------------------------------------------------ conditioning


def time_features(t: np.ndarray, dim: int) -> np.ndarray:
    """Raw sinusoidal features of t*1000 at dim/2 geometric frequencies.

    Periods span 1 to MAX_PERIOD; output is [sin | cos], bounded in [-1, 1].
    """
    if dim % 2 or dim < 4:
        raise ConfigError(f"time embedding dim must be even and >= 4, got {dim}")
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    periods = MAX_PERIOD ** (np.arange(half) / (half - 1))
    args = t[:, None] * TIME_SCALE / periods[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


def _time_embed_core(t: np.ndarray, p: dict[str, ad.Tensor], dtype) -> ad.Tensor:
    raw = ad.Tensor(time_features(t, p["time_mlp.w1"].shape[0]).astype(dtype))
    hidden = ad.gelu(ad.linear(raw, p["time_mlp.w1"], p["time_mlp.b1"]))
    return ad.linear(hidden, p["time_mlp.w2"], p["time_mlp.b2"])


def time_embedding(t: float, dim: int, params: ModelParams) -> np.ndarray:
    """Sinusoidal features of one t pushed through the learned 2-layer projection."""
    if dim != params.config.time_embed_dim:
        raise ConfigError(f"dim {dim} does not match config time_embed_dim {params.config.time_embed_dim}")
    p = params.as_tensors()
    return _time_embed_core(np.array([t]), p, params.dtype).data[0]


def class_embedding(c: ClassCondition, params: ModelParams) -> np.ndarray:
    """Row lookup; NULL maps to the extra final row."""
    table = params.tensors["class_embed.table"]
    return table[c.index(params.config.num_classes)].copy()


# ------------------------------------------------------------ shape helpers


def _patchify(x: ad.Tensor, channels: int, grid: int, p: int) -> ad.Tensor:
    b = x.shape[0]
    t = ad.reshape(x, (b, channels, grid, p, grid, p))
    t = ad.transpose(t, (0, 2, 4, 1, 3, 5))
    return ad.reshape(t, (b, grid * grid, channels * p * p))


def _unpatchify(tok: ad.Tensor, channels: int, grid: int, p: int) -> ad.Tensor:
    b = tok.shape[0]
    t = ad.reshape(tok, (b, grid, grid, channels, p, p))
    t = ad.transpose(t, (0, 3, 1, 4, 2, 5))
    return ad.reshape(t, (b, channels, grid * p, grid * p))


def bilinear_matrix(grid: int, size: int, dtype=np.float64) -> np.ndarray:
    """Dense (size*size, grid*grid) bilinear interpolation operator."""
    scale = grid / size
    mat = np.zeros((size * size, grid * grid))
    for oy in range(size):
        sy = (oy + 0.5) * scale - 0.5
        y0 = int(np.floor(sy))
        wy = sy - y0
        y0c, y1c = min(max(y0, 0), grid - 1), min(max(y0 + 1, 0), grid - 1)
        for ox in range(size):
            sx = (ox + 0.5) * scale - 0.5
            x0 = int(np.floor(sx))
            wx = sx - x0
            x0c, x1c = min(max(x0, 0), grid - 1), min(max(x0 + 1, 0), grid - 1)
            row = oy * size + ox
            mat[row, y0c * grid + x0c] += (1 - wy) * (1 - wx)
            mat[row, y0c * grid + x1c] += (1 - wy) * wx
            mat[row, y1c * grid + x0c] += wy * (1 - wx)
            mat[row, y1c * grid + x1c] += wy * wx
    return mat.astype(dtype)


def _linear(x: ad.Tensor, p: dict, w: str, b: str) -> ad.Tensor:
    return ad.linear(x, p[w], p[b])


# ---------------------------------------------------------------- cores


def adaptive_integration_core(h_low: ad.Tensor, h_high: ad.Tensor, t_emb: ad.Tensor,
                              p: dict[str, ad.Tensor]):
    """omega = sigmoid(MLP(h_low, h_high, t)); h = omega*h_low + (1-omega)*h_high."""
    if h_low.shape != h_high.shape:
        raise DimensionError(f"h_low {h_low.shape} vs h_high {h_high.shape}")
    b, t, _ = h_low.shape
    # broadcast t_emb to every token (mul keeps the gradient path to the time MLP)
    t_mid = ad.reshape(t_emb, (b, 1, t_emb.shape[1]))
    ones = ad.Tensor(np.ones((b, t, 1), dtype=h_low.dtype))
    t_tok = ad.mul(ones, t_mid)
    z = ad.concat([h_low, h_high, t_tok], axis=2)
    u = ad.gelu(_linear(z, p, "freq.gate.w1", "freq.gate.b1"))
    omega = ad.sigmoid(_linear(u, p, "freq.gate.w2", "freq.gate.b2"))
    one_minus = ad.add(ad.mul_scalar(omega, -1.0), ad.Tensor(np.ones((), dtype=h_low.dtype)))
    h = ad.add(ad.mul(omega, h_low), ad.mul(one_minus, h_high))
    return omega, h


def frequency_branch_core(x_low: np.ndarray, x_high: np.ndarray, t: np.ndarray,
                          label_idx: np.ndarray, p: dict[str, ad.Tensor], cfg: ModelConfig):
    """Batched frequency branch; returns dict of Tensors."""
    dtype = p["freq.patch.w"].dtype
    b = x_low.shape[0]
    expect = (b, cfg.image_channels, cfg.image_size, cfg.image_size)
    if x_low.shape != expect or x_high.shape != expect:
        raise DimensionError(f"band inputs must be {expect}, got {x_low.shape} / {x_high.shape}")
    xcat = ad.Tensor(np.concatenate([x_low, x_high], axis=1).astype(dtype))
    patches = _patchify(xcat, 2 * cfg.image_channels, cfg.grid, cfg.patch_size)
    tokens = _linear(patches, p, "freq.patch.w", "freq.patch.b")

    t_emb = _time_embed_core(t, p, dtype)
    cls_emb = ad.embedding(p["class_embed.table"], label_idx)
    cond = _linear(ad.add(t_emb, cls_emb), p, "freq.cond.w", "freq.cond.b")
    tokens = ad.add(ad.add(tokens, p["freq.pos"]), ad.reshape(cond, (b, 1, cfg.freq_width)))

    scale = 1.0 / float(np.sqrt(cfg.freq_width))
    x = tokens
    for i in range(cfg.freq_depth):
        blk = f"freq.block{i}"
        a = ad.layernorm(x, p[f"{blk}.ln1.g"], p[f"{blk}.ln1.b"])
        q = _linear(a, p, f"{blk}.attn.wq", f"{blk}.attn.bq")
        k = _linear(a, p, f"{blk}.attn.wk", f"{blk}.attn.bk")
        v = _linear(a, p, f"{blk}.attn.wv", f"{blk}.attn.bv")
        scores = ad.mul_scalar(ad.matmul(q, ad.transpose(k, (0, 2, 1))), scale)
        attn = ad.softmax_last(scores)
        o = _linear(ad.matmul(attn, v), p, f"{blk}.attn.wo", f"{blk}.attn.bo")
        x = ad.add(x, o)
        f = ad.layernorm(x, p[f"{blk}.ln2.g"], p[f"{blk}.ln2.b"])
        f = ad.linear(ad.gelu(_linear(f, p, f"{blk}.ff.w1", f"{blk}.ff.b1")),
                      p[f"{blk}.ff.w2"], p[f"{blk}.ff.b2"])
        x = ad.add(x, f)
    x = ad.layernorm(x, p["freq.final_ln.g"], p["freq.final_ln.b"])

    h_low = _linear(x, p, "freq.low_proj.w", "freq.low_proj.b")
    h_high = _linear(x, p, "freq.high_proj.w", "freq.high_proj.b")
    omega, h = adaptive_integration_core(h_low, h_high, t_emb, p)

    v_low = _unpatchify(_linear(h_low, p, "freq.head_low.w", "freq.head_low.b"),
                        cfg.image_channels, cfg.grid, cfg.patch_size)
    v_high = _unpatchify(_linear(h_high, p, "freq.head_high.w", "freq.head_high.b"),
                         cfg.image_channels, cfg.grid, cfg.patch_size)
    return {
        "v_low": v_low,
        "v_high": v_high,
        "h": h,
        "omega": omega,
        "h_low": h_low,
        "h_high": h_high,
        "t_emb": t_emb,
        "cls_emb": cls_emb,
    }


def spatial_branch_core(x_t: np.ndarray, h_tokens: ad.Tensor, t_emb: ad.Tensor,
                        cls_emb: ad.Tensor, p: dict[str, ad.Tensor], cfg: ModelConfig,
                        upsample: np.ndarray) -> ad.Tensor:
    dtype = p["spatial.stem.w"].dtype
    b = x_t.shape[0]
    x_nhwc = ad.Tensor(np.ascontiguousarray(np.moveaxis(x_t, 1, -1)).astype(dtype))
    u = ad.conv3x3(x_nhwc, p["spatial.stem.w"], p["spatial.stem.b"])

    hs = _linear(h_tokens, p, "spatial.bridge.w", "spatial.bridge.b")
    up = ad.matmul(ad.Tensor(upsample.astype(dtype)), hs)
    up = ad.reshape(up, (b, cfg.image_size, cfg.image_size, cfg.spatial_width))
    m = ad.add(u, up)  # merge: elementwise addition

    cond = _linear(ad.add(t_emb, cls_emb), p, "spatial.cond.w", "spatial.cond.b")
    m = ad.add(m, ad.reshape(cond, (b, 1, 1, cfg.spatial_width)))

    for i in range(cfg.spatial_depth):
        blk = f"spatial.block{i}"
        y = ad.layernorm(m, p[f"{blk}.ln.g"], p[f"{blk}.ln.b"])
        y = ad.conv3x3(y, p[f"{blk}.conv.w"], p[f"{blk}.conv.b"])
        y = ad.gelu(_linear(y, p, f"{blk}.pw1.w", f"{blk}.pw1.b"))
        y = _linear(y, p, f"{blk}.pw2.w", f"{blk}.pw2.b")
        m = ad.add(m, y)

    out = ad.conv3x3(m, p["spatial.head.w"], p["spatial.head.b"])
    return ad.transpose(out, (0, 3, 1, 2))


def forward_core(x_t: np.ndarray, t: np.ndarray, label_idx: np.ndarray,
                 p: dict[str, ad.Tensor], cfg: ModelConfig, masks: FrequencyMaskPair,
                 upsample: np.ndarray | None = None):
    """Full batched forward pass: decompose, frequency branch, spatial branch."""
    if upsample is None:
        upsample = bilinear_matrix(cfg.grid, cfg.image_size)
    x_low, x_high = decompose_batch(x_t, masks)
    freq = frequency_branch_core(x_low, x_high, t, label_idx, p, cfg)
    v_hat = spatial_branch_core(x_t, freq["h"], freq["t_emb"], freq["cls_emb"], p, cfg, upsample)
    if not np.all(np.isfinite(v_hat.data)):
        raise NumericError("non-finite activations in forward pass")
    return v_hat, freq


# ------------------------------------------------------- single-sample API


def _tokens_to_grid(arr: np.ndarray, grid: int) -> np.ndarray:
    # (T, D) tokens -> (D, H', W') feature map
    d = arr.shape[-1]
    return np.ascontiguousarray(arr.reshape(grid, grid, d).transpose(2, 0, 1))


def _grid_to_tokens(arr: np.ndarray, grid: int) -> np.ndarray:
    return np.ascontiguousarray(arr.transpose(1, 2, 0).reshape(grid * grid, arr.shape[0]))


def adaptive_integration(h_low: np.ndarray, h_high: np.ndarray, t_emb: np.ndarray,
                         params: ModelParams):
    """Single-sample gate; features are (d, H', W') maps."""
    if h_low.shape != h_high.shape:
        raise DimensionError(f"h_low {h_low.shape} vs h_high {h_high.shape}")
    cfg = params.config
    p = params.as_tensors()
    hl = ad.Tensor(_grid_to_tokens(np.asarray(h_low, dtype=params.dtype), cfg.grid)[None])
    hh = ad.Tensor(_grid_to_tokens(np.asarray(h_high, dtype=params.dtype), cfg.grid)[None])
    te = ad.Tensor(np.asarray(t_emb, dtype=params.dtype)[None])
    omega, h = adaptive_integration_core(hl, hh, te, p)
    return _tokens_to_grid(omega.data[0], cfg.grid), _tokens_to_grid(h.data[0], cfg.grid)


def frequency_branch(x_low: np.ndarray, x_high: np.ndarray, t: float, c: ClassCondition,
                     params: ModelParams) -> FrequencyBranchOutput:
    cfg = params.config
    out = frequency_branch_core(
        np.asarray(x_low, dtype=np.float64)[None],
        np.asarray(x_high, dtype=np.float64)[None],
        np.array([t], dtype=np.float64),
        np.array([c.index(cfg.num_classes)]),
        params.as_tensors(),
        cfg,
    )
    return FrequencyBranchOutput(
        v_low_hat=out["v_low"].data[0],
        v_high_hat=out["v_high"].data[0],
        h=_tokens_to_grid(out["h"].data[0], cfg.grid),
        omega=_tokens_to_grid(out["omega"].data[0], cfg.grid),
        h_low=_tokens_to_grid(out["h_low"].data[0], cfg.grid),
        h_high=_tokens_to_grid(out["h_high"].data[0], cfg.grid),
    )


def spatial_branch(x_t: np.ndarray, h: np.ndarray, t: float, c: ClassCondition,
                   params: ModelParams) -> np.ndarray:
    cfg = params.config
    p = params.as_tensors()
    t_arr = np.array([t], dtype=np.float64)
    t_emb = _time_embed_core(t_arr, p, params.dtype)
    cls_emb = ad.embedding(p["class_embed.table"], np.array([c.index(cfg.num_classes)]))
    h_tok = ad.Tensor(_grid_to_tokens(np.asarray(h, dtype=params.dtype), cfg.grid)[None])
    out = spatial_branch_core(np.asarray(x_t, dtype=np.float64)[None], h_tok, t_emb, cls_emb,
                              p, cfg, bilinear_matrix(cfg.grid, cfg.image_size))
    return out.data[0]


def forward(x_t: np.ndarray, t: float, c: ClassCondition, params: ModelParams,
            masks: FrequencyMaskPair):
    """Single-sample forward; returns (v_hat, FrequencyBranchOutput)."""
    cfg = params.config
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape != (cfg.image_channels, cfg.image_size, cfg.image_size):
        raise DimensionError(f"x_t shape {x.shape} does not match config")
    v_hat, freq = forward_core(
        x[None], np.array([t], dtype=np.float64),
        np.array([c.index(cfg.num_classes)]), params.as_tensors(), cfg, masks,
    )
    out = FrequencyBranchOutput(
        v_low_hat=freq["v_low"].data[0],
        v_high_hat=freq["v_high"].data[0],
        h=_tokens_to_grid(freq["h"].data[0], cfg.grid),
        omega=_tokens_to_grid(freq["omega"].data[0], cfg.grid),
        h_low=_tokens_to_grid(freq["h_low"].data[0], cfg.grid),
        h_high=_tokens_to_grid(freq["h_high"].data[0], cfg.grid),
    )
    return v_hat.data[0], out
