"""Dual-domain losses, AdamW training, gradient verification, checkpoints.

The objective is
    L = L_s(v_hat, v) + L_f(v_hat, v)
      + alpha * [ L_s(v_hat_H, v_H) + L_s(v_hat_L, v_L)
                + L_f(v_hat_H, v_H) + L_f(v_hat_L, v_L) ]
where L_s is elementwise mean squared error and L_f the same on the
unnormalized DFT of the prediction error. Toggles gate the band terms:
use_low/high_supervision drop a band's pair entirely, use_freq_domain_loss
drops the spectral halves of the band terms. The two spatial-head terms are
always on, so with everything off training reduces to plain flow matching
plus its spectral twin.

L_f = H*W * L_s identically (Parseval), which every logged step re-verifies
in 64-bit as a self-check; the backward pass still runs through the FFT.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import CheckpointError, DimensionError, NumericError, ParameterError
from .flowpath import ClassCondition, FlowSample, draw_batch
from .model import ModelConfig, ModelParams, bilinear_matrix, forward_core, init_params, param_schema
from .rng import RngStream
from .spectral import make_masks

ADAM_EPS = 1e-8
PARSEVAL_RTOL = 1e-9
NO_DECAY = ("class_embed.table", "freq.pos")

MAGIC = b"FQFLCKPT"
CKPT_VERSION = 1

METRIC_FIELDS = ("step", "loss", "loss_s", "loss_f", "loss_sL", "loss_sH",
                 "loss_fL", "loss_fH", "grad_norm", "mean_omega", "lr")

# stream indices under the root seed
STREAM_INIT = 0
STREAM_DATA = 1
STREAM_DROPOUT = 2


@dataclass(frozen=True)
class LossToggles:
    use_low_supervision: bool = True
    use_high_supervision: bool = True
    use_freq_domain_loss: bool = True


@dataclass
class TrainConfig:
    alpha: float = 0.5
    learning_rate: float = 2e-4
    adam_betas: tuple[float, float] = (0.99, 0.99)
    weight_decay: float = 0.03
    batch_size: int = 64
    warmup_steps: int = 100
    total_steps: int = 2000
    label_dropout: float = 0.1
    seed: int = 0
    loss_toggles: LossToggles = field(default_factory=LossToggles)
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.alpha < 0:
            raise ParameterError("alpha must be >= 0")
        if not all(0.0 <= b < 1.0 for b in self.adam_betas):
            raise ParameterError("adam betas must be in [0, 1)")
        if not 0.0 <= self.label_dropout < 1.0:
            raise ParameterError("label_dropout must be in [0, 1)")


@dataclass
class OptState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_opt_state(params: ModelParams) -> OptState:
    return OptState(
        m={k: np.zeros_like(t) for k, t in params.tensors.items()},
        v={k: np.zeros_like(t) for k, t in params.tensors.items()},
        step=0,
    )


# -------------------------------------------------------------------- losses


def spatial_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared difference over all elements, in 64-bit."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {target.shape}")
    d = pred - target
    return float((d * d).mean())


def frequency_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean squared spectral magnitude of the error, unnormalized forward DFT."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {target.shape}")
    h, w = pred.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"even dims required, got {h} x {w}")
    f = np.fft.fft2(pred - target, axes=(-2, -1))
    return float((f.real * f.real + f.imag * f.imag).mean())


def _breakdown(v_hat, v_low_hat, v_high_hat, v, v_low, v_high, cfg: TrainConfig) -> dict[str, float]:
    """All six loss terms in 64-bit, with disabled terms zeroed."""
    t = cfg.loss_toggles
    terms = {
        "loss_s": spatial_loss(v_hat, v),
        "loss_f": frequency_loss(v_hat, v),
        "loss_sL": spatial_loss(v_low_hat, v_low) if t.use_low_supervision else 0.0,
        "loss_sH": spatial_loss(v_high_hat, v_high) if t.use_high_supervision else 0.0,
        "loss_fL": frequency_loss(v_low_hat, v_low)
        if (t.use_low_supervision and t.use_freq_domain_loss) else 0.0,
        "loss_fH": frequency_loss(v_high_hat, v_high)
        if (t.use_high_supervision and t.use_freq_domain_loss) else 0.0,
    }
    return terms


def _combine(terms: dict[str, float], alpha: float) -> float:
    return terms["loss_s"] + terms["loss_f"] + alpha * (
        terms["loss_sH"] + terms["loss_sL"] + terms["loss_fH"] + terms["loss_fL"]
    )


def total_loss(outputs, sample: FlowSample, cfg: TrainConfig):
    """Eq.-style objective for one sample; returns (value, per-term breakdown)."""
    v_hat, freq_out = outputs
    terms = _breakdown(v_hat, freq_out.v_low_hat, freq_out.v_high_hat,
                       sample.v, sample.v_low, sample.v_high, cfg)
    return _combine(terms, cfg.alpha), terms


def _parseval_check(terms: dict[str, float], hw: int):
    pairs = (("loss_s", "loss_f"), ("loss_sL", "loss_fL"), ("loss_sH", "loss_fH"))
    for s_key, f_key in pairs:
        if terms[f_key] == 0.0:
            continue
        rel = abs(terms[f_key] - hw * terms[s_key]) / terms[f_key]
        if rel > PARSEVAL_RTOL:
            raise NumericError(
                f"Parseval self-check failed: {f_key} vs {hw}*{s_key}, rel error {rel:.3e}"
            )


def _loss_tape(v_hat, freq, targets, cfg: TrainConfig):
    """Tape-building twin of the 64-bit breakdown; returns (loss, named term tensors)."""
    t = cfg.loss_toggles
    terms = {
        "loss_s": ad.mse(v_hat, targets["v"]),
        "loss_f": ad.freq_mse(v_hat, targets["v"]),
    }
    if t.use_low_supervision:
        terms["loss_sL"] = ad.mse(freq["v_low"], targets["v_low"])
        if t.use_freq_domain_loss:
            terms["loss_fL"] = ad.freq_mse(freq["v_low"], targets["v_low"])
    if t.use_high_supervision:
        terms["loss_sH"] = ad.mse(freq["v_high"], targets["v_high"])
        if t.use_freq_domain_loss:
            terms["loss_fH"] = ad.freq_mse(freq["v_high"], targets["v_high"])
    for name, term in terms.items():
        if not np.isfinite(term.data):
            raise NumericError(f"non-finite loss term {name}")
    loss = terms["loss_s"] + terms["loss_f"]
    band = [terms[k] for k in ("loss_sH", "loss_sL", "loss_fH", "loss_fL") if k in terms]
    if band and cfg.alpha != 0.0:
        acc = band[0]
        for extra in band[1:]:
            acc = acc + extra
        loss = loss + cfg.alpha * acc
    return loss, terms


def _stack_batch(batch, num_classes: int, drop_stream: RngStream, dropout: float):
    if not batch:
        raise ParameterError("batch is empty")
    x_t = np.stack([s.x_t for s in batch])
    t = np.array([s.t for s in batch], dtype=np.float64)
    idx = np.array([s.label.index(num_classes) for s in batch], dtype=np.int64)
    if dropout > 0.0:
        dropped = drop_stream.random(len(batch)) < dropout
        idx = np.where(dropped, num_classes, idx)
    targets = {
        "v": np.stack([s.v for s in batch]),
        "v_low": np.stack([s.v_low for s in batch]),
        "v_high": np.stack([s.v_high for s in batch]),
    }
    return x_t, t, idx, targets


def learning_rate_at(cfg: TrainConfig, step: int) -> float:
    """Linear warmup to the constant rate; step is 1-based."""
    if cfg.warmup_steps > 0 and step < cfg.warmup_steps:
        return cfg.learning_rate * step / cfg.warmup_steps
    return cfg.learning_rate


def train_step(params: ModelParams, opt_state: OptState, batch, cfg: TrainConfig,
               upsample: np.ndarray | None = None):
    """One AdamW step on the mean batch loss; returns (params, opt_state, metrics)."""
    mcfg = params.config
    step = opt_state.step + 1
    drop_stream = RngStream(cfg.seed).child(STREAM_DROPOUT, step)
    x_t, t, idx, targets64 = _stack_batch(batch, mcfg.num_classes, drop_stream, cfg.label_dropout)
    dtype = params.dtype
    targets = {k: v.astype(dtype) for k, v in targets64.items()}

    masks = make_masks(mcfg.image_size, mcfg.image_size, mcfg.sigma_low, mcfg.sigma_high)
    tensors = params.as_tensors(requires_grad=True)
    v_hat, freq = forward_core(x_t, t, idx, tensors, mcfg, masks, upsample)
    loss, _ = _loss_tape(v_hat, freq, targets, cfg)
    loss.backward()

    sq = 0.0
    for name in tensors:
        g = tensors[name].grad
        if g is not None:
            sq += float((g.astype(np.float64) ** 2).sum())
    grad_norm = float(np.sqrt(sq))

    lr = learning_rate_at(cfg, step)
    b1, b2 = cfg.adam_betas
    for name, tensor in tensors.items():
        g = tensor.grad
        if g is None:
            continue
        wd = cfg.weight_decay if (tensor.data.ndim >= 2 and name not in NO_DECAY) else 0.0
        kernels.adamw_update(
            params.tensors[name].reshape(-1), g.reshape(-1).astype(dtype, copy=False),
            opt_state.m[name].reshape(-1), opt_state.v[name].reshape(-1),
            lr, b1, b2, ADAM_EPS, wd, step,
        )
    opt_state.step = step

    terms = _breakdown(v_hat.data, freq["v_low"].data, freq["v_high"].data,
                       targets64["v"], targets64["v_low"], targets64["v_high"], cfg)
    _parseval_check(terms, mcfg.image_size * mcfg.image_size)
    metrics = {"step": step, "loss": _combine(terms, cfg.alpha), **terms,
               "grad_norm": grad_norm, "mean_omega": float(freq["omega"].data.mean()),
               "lr": lr}
    return params, opt_state, metrics


# ------------------------------------------------------------ gradient check


@dataclass
class GradCheckProbe:
    name: str
    index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    probes: list[GradCheckProbe]
    max_rel_error: float
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures


FD_STEP = 1e-5
REL_TOL = 1e-3
REL_FLOOR = 1e-2  # |a - n| / max(|a|, |n|, floor): keeps FD noise on near-zero
                  # gradients from masquerading as relative error


def gradient_check(params: ModelParams, loss_fn, probes: int, seed: int = 0) -> GradCheckReport:
    """Central differences vs the tape on randomly probed parameters (64-bit)."""
    p64 = params.astype(np.float64)
    tensors = p64.as_tensors(requires_grad=True)
    loss_fn(tensors).backward()

    arrays = {k: v.copy() for k, v in p64.tensors.items()}

    def value() -> float:
        return float(loss_fn({k: ad.Tensor(v) for k, v in arrays.items()}).data)

    names = sorted(arrays)
    sizes = np.array([arrays[n].size for n in names])
    offsets = np.cumsum(sizes)
    stream = RngStream(seed).child(97)
    picks = stream.integers(0, int(offsets[-1]), size=probes)

    report_probes = []
    failures = []
    max_rel = 0.0
    for flat_idx in picks:
        which = int(np.searchsorted(offsets, flat_idx, side="right"))
        name = names[which]
        local = int(flat_idx - (offsets[which] - sizes[which]))
        arr = arrays[name].reshape(-1)
        orig = arr[local]
        arr[local] = orig + FD_STEP
        up = value()
        arr[local] = orig - FD_STEP
        dn = value()
        arr[local] = orig
        numeric = (up - dn) / (2 * FD_STEP)
        g = tensors[name].grad
        analytic = float(g.reshape(-1)[local]) if g is not None else 0.0
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)
        max_rel = max(max_rel, rel)
        report_probes.append(GradCheckProbe(name, local, analytic, numeric, rel))
        if rel > REL_TOL:
            failures.append(f"{name}[{local}]")
    return GradCheckReport(report_probes, max_rel, failures)


# --------------------------------------------------------------- checkpoints


def _config_block(cfg: ModelConfig) -> bytes:
    lines = "".join(f"{k}={v}\n" for k, v in sorted(cfg.to_kv().items()))
    return lines.encode("utf-8")


def _parse_config_block(blob: bytes) -> ModelConfig:
    kv = {}
    for line in blob.decode("utf-8").splitlines():
        if not line:
            continue
        key, _, val = line.partition("=")
        kv[key] = val
    return ModelConfig.from_kv(kv)


def _write_record(fh, name: str, arr: np.ndarray):
    data = np.ascontiguousarray(arr, dtype="<f4")
    nb = name.encode("utf-8")
    fh.write(struct.pack("<I", len(nb)))
    fh.write(nb)
    fh.write(struct.pack("<I", data.ndim))
    fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
    fh.write(data.tobytes())


def save_checkpoint(path, params: ModelParams, opt_state: OptState, step: int):
    """Binary checkpoint: magic, version, config block, step, f32 records."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", CKPT_VERSION))
        block = _config_block(params.config)
        fh.write(struct.pack("<I", len(block)))
        fh.write(block)
        fh.write(struct.pack("<Q", step))
        for name in sorted(params.tensors):
            _write_record(fh, f"p/{name}", params.tensors[name])
        for name in sorted(opt_state.m):
            _write_record(fh, f"m/{name}", opt_state.m[name])
        for name in sorted(opt_state.v):
            _write_record(fh, f"v/{name}", opt_state.v[name])


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    @property
    def done(self) -> bool:
        return self.pos >= len(self.blob)


def load_checkpoint(path):
    """Read a checkpoint; returns (ModelParams, OptState, step)."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(blob)
    if r.take(8, "magic") != MAGIC:
        raise CheckpointError("bad magic: not a freqflow checkpoint")
    (version,) = struct.unpack("<I", r.take(4, "version"))
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {CKPT_VERSION})")
    (blk_len,) = struct.unpack("<I", r.take(4, "config length"))
    cfg = _parse_config_block(r.take(blk_len, "config block"))
    (step,) = struct.unpack("<Q", r.take(8, "step"))

    schema = param_schema(cfg)
    groups: dict[str, dict[str, np.ndarray]] = {"p": {}, "m": {}, "v": {}}
    while not r.done:
        (name_len,) = struct.unpack("<I", r.take(4, "record name length"))
        name = r.take(name_len, "record name").decode("utf-8")
        (rank,) = struct.unpack("<I", r.take(4, f"rank of {name}"))
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank, f"dims of {name}"))
        count = int(np.prod(dims)) if rank else 1
        payload = r.take(4 * count, f"payload of {name}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        prefix, _, base = name.partition("/")
        if prefix not in groups or not base:
            raise CheckpointError(f"unknown record {name}")
        if base not in schema:
            raise CheckpointError(f"record {name} not in model schema")
        if tuple(dims) != schema[base]:
            raise CheckpointError(f"record {name} has shape {dims}, schema says {schema[base]}")
        groups[prefix][base] = arr

    for prefix in ("p", "m", "v"):
        missing = sorted(set(schema) - set(groups[prefix]))
        if missing:
            raise CheckpointError(f"checkpoint missing {prefix}/ records: {missing[:3]}")
    params = ModelParams(cfg, groups["p"])
    opt = OptState(m=groups["m"], v=groups["v"], step=step)
    return params, opt, step


# ----------------------------------------------------------------- trainer


def format_metrics_row(metrics: dict) -> str:
    parts = [str(metrics["step"])]
    for key in METRIC_FIELDS[1:]:
        parts.append(f"{metrics[key]:.10g}")
    return ",".join(parts)


def train_loop(dataset, model_cfg: ModelConfig, cfg: TrainConfig, out_dir,
               resume=None, progress=None):
    """Full training run: builds params, iterates train_step, writes
    metrics.csv and periodic checkpoints under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = RngStream(cfg.seed)
    if resume is not None:
        params, opt, _ = load_checkpoint(resume)
        if params.config != model_cfg:
            raise CheckpointError("resume checkpoint config does not match the run config")
    else:
        params = init_params(model_cfg, root.child(STREAM_INIT), zero_heads=True)
        opt = init_opt_state(params)

    masks = make_masks(model_cfg.image_size, model_cfg.image_size,
                       model_cfg.sigma_low, model_cfg.sigma_high)
    upsample = bilinear_matrix(model_cfg.grid, model_cfg.image_size)
    images = np.stack(dataset.images)
    labels = np.array(dataset.labels)

    mode = "a" if (resume is not None and (out_dir / "metrics.csv").exists()) else "w"
    history = []
    with open(out_dir / "metrics.csv", mode, newline="\n") as fh:
        if mode == "w":
            fh.write(",".join(METRIC_FIELDS) + "\n")
        for step in range(opt.step, cfg.total_steps):
            data_stream = root.child(STREAM_DATA, step + 1)
            idx = data_stream.integers(0, len(images), size=cfg.batch_size)
            batch = draw_batch(images[idx], labels[idx], data_stream, masks)
            params, opt, metrics = train_step(params, opt, batch, cfg, upsample)
            fh.write(format_metrics_row(metrics) + "\n")
            history.append(metrics)
            if cfg.checkpoint_every and metrics["step"] % cfg.checkpoint_every == 0:
                save_checkpoint(out_dir / f"ckpt_{metrics['step']:06d}.bin", params, opt, opt.step)
            if progress is not None:
                progress(metrics)
    save_checkpoint(out_dir / "ckpt_final.bin", params, opt, opt.step)
    return params, opt, history
