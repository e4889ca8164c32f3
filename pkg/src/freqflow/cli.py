"""Operator entry point: train, sample, analyze, check.

Every subcommand is a deterministic function of its flags and files; seeds
always come from the config or the command line, never the clock. Exit
codes: 0 success, 1 check/validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, configio, selfcheck
from .data import synth_dataset, write_ppm
from .errors import ConfigError, FreqFlowError
from .flowpath import ClassCondition
from .model import ModelConfig
from .sampling import SamplerConfig, sample_batch, write_trajectory_csv
from .spectral import make_masks
from .training import LossToggles, TrainConfig, load_checkpoint, train_loop

DATA_DEFAULTS = {"num_classes": 8, "per_class": 250, "size": 16, "channels": 1}
TRAIN_DEFAULTS = {
    "alpha": 0.5, "learning_rate": 2e-4, "beta1": 0.99, "beta2": 0.99,
    "weight_decay": 0.03, "batch_size": 64, "warmup_steps": 100,
    "total_steps": 2000, "label_dropout": 0.1, "checkpoint_every": 0,
}
LOSS_DEFAULTS = {
    "use_low_supervision": True, "use_high_supervision": True, "use_freq_domain_loss": True,
}
MODEL_DEFAULTS = {
    "patch_size": 4, "freq_depth": 4, "freq_width": 64, "spatial_depth": 3,
    "spatial_width": 32, "time_embed_dim": 32, "sigma_low": 8.0, "sigma_high": 2.0,
}


KNOWN_SECTIONS = ("data", "model", "train", "loss")
KNOWN_TOP_KEYS = ("seed", "out_dir")
_SECTION_DEFAULTS = {"data": DATA_DEFAULTS, "model": MODEL_DEFAULTS,
                     "train": TRAIN_DEFAULTS, "loss": LOSS_DEFAULTS}


def qualify_overrides(overrides) -> list[str]:
    """Map bare --set keys onto their section ('total_steps' ->
    'train.total_steps') using the known schema; dotted keys pass through."""
    out = []
    for item in overrides or []:
        key, eq, value = item.partition("=")
        key = key.strip()
        if eq and "." not in key and key not in KNOWN_TOP_KEYS:
            owners = [sec for sec, defaults in _SECTION_DEFAULTS.items()
                      if key in defaults or (sec == "data" and key == "seed")]
            if len(owners) > 1:
                raise ConfigError(f"--set {key}: ambiguous across sections {owners}")
            if owners:
                item = f"{owners[0]}.{key}={value}"
        out.append(item)
    return out


def _section(flat: dict, name: str, defaults: dict) -> dict:
    out = dict(defaults)
    for key, value in flat.items():
        sec, _, base = key.partition(".")
        if sec == name and base:
            if base not in defaults:
                raise ConfigError(f"unknown key [{name}] {base}")
            out[base] = value
    return out


def resolve_run_config(flat: dict) -> dict:
    """Materialize all defaults; returns a flat dotted-key dict."""
    for key in flat:
        sec, dot, _ = key.partition(".")
        if dot and sec not in KNOWN_SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        if not dot and key not in KNOWN_TOP_KEYS:
            raise ConfigError(f"unknown top-level key {key!r}")
    seed = configio.get(flat, "seed", required=True)
    data = _section(flat, "data", {**DATA_DEFAULTS, "seed": seed})
    model = _section(flat, "model", MODEL_DEFAULTS)
    train = _section(flat, "train", TRAIN_DEFAULTS)
    loss = _section(flat, "loss", LOSS_DEFAULTS)
    resolved = {"seed": seed}
    if "out_dir" in flat:
        resolved["out_dir"] = flat["out_dir"]
    for sec, kv in (("data", data), ("model", model), ("train", train), ("loss", loss)):
        for k, v in kv.items():
            resolved[f"{sec}.{k}"] = v
    return resolved


def build_configs(resolved: dict):
    model_cfg = ModelConfig(
        image_channels=resolved["data.channels"],
        image_size=resolved["data.size"],
        num_classes=resolved["data.num_classes"],
        patch_size=resolved["model.patch_size"],
        freq_depth=resolved["model.freq_depth"],
        freq_width=resolved["model.freq_width"],
        spatial_depth=resolved["model.spatial_depth"],
        spatial_width=resolved["model.spatial_width"],
        time_embed_dim=resolved["model.time_embed_dim"],
        sigma_low=float(resolved["model.sigma_low"]),
        sigma_high=float(resolved["model.sigma_high"]),
        label_dropout=float(resolved["train.label_dropout"]),
    )
    train_cfg = TrainConfig(
        alpha=float(resolved["train.alpha"]),
        learning_rate=float(resolved["train.learning_rate"]),
        adam_betas=(float(resolved["train.beta1"]), float(resolved["train.beta2"])),
        weight_decay=float(resolved["train.weight_decay"]),
        batch_size=resolved["train.batch_size"],
        warmup_steps=resolved["train.warmup_steps"],
        total_steps=resolved["train.total_steps"],
        label_dropout=float(resolved["train.label_dropout"]),
        seed=resolved["seed"],
        loss_toggles=LossToggles(
            use_low_supervision=resolved["loss.use_low_supervision"],
            use_high_supervision=resolved["loss.use_high_supervision"],
            use_freq_domain_loss=resolved["loss.use_freq_domain_loss"],
        ),
        checkpoint_every=resolved["train.checkpoint_every"],
    )
    return model_cfg, train_cfg


def build_dataset(resolved: dict):
    return synth_dataset(
        num_classes=resolved["data.num_classes"],
        per_class=resolved["data.per_class"],
        size=resolved["data.size"],
        seed=resolved["data.seed"],
        channels=resolved["data.channels"],
    )


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    flat = configio.parse_config_file(args.config)
    flat = configio.apply_overrides(flat, qualify_overrides(args.set))
    resolved = resolve_run_config(flat)
    out_dir = args.out_dir or resolved.get("out_dir")
    if not out_dir:
        raise ConfigError("no output directory: set out_dir in the config or pass --out-dir")
    resolved["out_dir"] = str(out_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved.toml").write_text(configio.format_config(resolved))

    model_cfg, train_cfg = build_configs(resolved)
    dataset = build_dataset(resolved)

    def progress(metrics):
        if metrics["step"] % max(1, train_cfg.total_steps // 20) == 0:
            print(f"step {metrics['step']:6d}  loss {metrics['loss']:.4f}  "
                  f"mean_omega {metrics['mean_omega']:.3f}  lr {metrics['lr']:.2e}")

    train_loop(dataset, model_cfg, train_cfg, out_dir, resume=args.resume,
               progress=progress if not args.quiet else None)
    print(f"trained {train_cfg.total_steps} steps -> {out_dir}/metrics.csv, ckpt_final.bin")
    return 0


def cmd_sample(args) -> int:
    params, _, _ = load_checkpoint(args.ckpt)
    mcfg = params.config
    masks = make_masks(mcfg.image_size, mcfg.image_size, mcfg.sigma_low, mcfg.sigma_high)
    if args.cls is not None and not 0 <= args.cls < mcfg.num_classes:
        raise ConfigError(f"--class {args.cls} outside [0, {mcfg.num_classes})")
    labels = [ClassCondition(args.cls if args.cls is not None else i % mcfg.num_classes)
              for i in range(args.count)]
    scfg = SamplerConfig(steps=args.steps, cfg_scale=args.cfg_scale, seed=args.seed,
                         capture_every=args.capture)
    images, trajectories = sample_batch(params, labels, scfg, masks)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        write_ppm(np.clip(images[i], -1.0, 1.0), out / f"sample_{i}.ppm")
        if args.capture:
            write_trajectory_csv(trajectories[i], out / f"trajectory_{i}.csv")
    print(f"wrote {args.count} samples to {out}")
    return 0


def cmd_analyze(args) -> int:
    params, _, _ = load_checkpoint(args.ckpt)
    mcfg = params.config
    flat = configio.parse_config_file(args.config)
    flat = configio.apply_overrides(flat, qualify_overrides(args.set))
    resolved = resolve_run_config(flat)
    if resolved["data.size"] != mcfg.image_size or resolved["data.num_classes"] != mcfg.num_classes:
        raise ConfigError("dataset config does not match the checkpoint's model config")
    dataset = build_dataset(resolved)
    masks = make_masks(mcfg.image_size, mcfg.image_size, mcfg.sigma_low, mcfg.sigma_high)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    wrote = []
    if args.fig2 or args.fig4:
        scfg = SamplerConfig(steps=args.steps, cfg_scale=args.cfg_scale, seed=args.seed,
                             capture_every=1)
        _, trajectories = sample_batch(params, [ClassCondition(0)], scfg, masks)
        trajectory = trajectories[0]
        if args.fig2:
            for band, mask in (("low", masks.low), ("high", masks.high)):
                curve = analysis.relative_log_amplitude_curve(trajectory, mask, dataset.images)
                analysis.write_fig2_csv(curve, out / f"fig2_{band}.csv")
                wrote.append(f"fig2_{band}.csv")
        if args.fig4:
            analysis.write_fig4_csv(analysis.omega_curve(trajectory), out / "fig4_omega.csv")
            wrote.append("fig4_omega.csv")
    if args.freq_error:
        scfg = SamplerConfig(steps=args.steps, cfg_scale=args.cfg_scale, seed=args.seed)
        report = analysis.frequency_error_report(dataset.images, params, args.samples, scfg, masks)
        analysis.write_freq_error_csv(report, out / "freq_error.csv")
        wrote.append("freq_error.csv")
    if not wrote:
        raise ConfigError("nothing to do: pass --fig2, --fig4 and/or --freq-error")
    print(f"wrote {', '.join(wrote)} to {out}")
    return 0


def cmd_check(args) -> int:
    results = selfcheck.run_all(inject_fault=args.inject_fault)
    width = max(len(name) for name, *_ in results)
    failed = 0
    for name, passed, detail, elapsed in results:
        status = "PASS" if passed else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}  ({elapsed:.2f}s)")
        failed += not passed
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqflow",
        description="Band-decomposed flow matching: train, sample, analyze, self-check.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("config", help="path to the run config")
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override a config key (repeatable)")
    p_train.add_argument("--out-dir", help="output directory (overrides config out_dir)")
    p_train.add_argument("--resume", help="checkpoint to resume from")
    p_train.add_argument("--quiet", action="store_true")
    p_train.set_defaults(fn=cmd_train)

    p_sample = sub.add_parser("sample", help="draw images from a checkpoint")
    p_sample.add_argument("ckpt")
    p_sample.add_argument("--class", dest="cls", type=int, default=None,
                          help="class label (default: cycle through classes)")
    p_sample.add_argument("--count", type=int, default=1)
    p_sample.add_argument("--steps", type=int, default=50)
    p_sample.add_argument("--cfg-scale", type=float, default=1.0)
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--out-dir", default="samples")
    p_sample.add_argument("--capture", type=int, default=0,
                          help="capture every N steps into trajectory_<i>.csv")
    p_sample.set_defaults(fn=cmd_sample)

    p_an = sub.add_parser("analyze", help="emit spectral diagnostics CSVs")
    p_an.add_argument("ckpt")
    p_an.add_argument("config", help="dataset config (for the reference set)")
    p_an.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_an.add_argument("--fig2", action="store_true", help="relative log-amplitude curves")
    p_an.add_argument("--fig4", action="store_true", help="gate weight curves")
    p_an.add_argument("--freq-error", action="store_true", help="low/high frequency error")
    p_an.add_argument("--samples", type=int, default=64)
    p_an.add_argument("--steps", type=int, default=50)
    p_an.add_argument("--cfg-scale", type=float, default=1.0)
    p_an.add_argument("--seed", type=int, required=True)
    p_an.add_argument("--out-dir", default="analysis")
    p_an.set_defaults(fn=cmd_analyze)

    p_check = sub.add_parser("check", help="run the built-in oracle suite")
    p_check.add_argument("--inject-fault", choices=["dft-sign"], default=None,
                         help="test mode: corrupt the transform to prove the oracle bites")
    p_check.set_defaults(fn=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FreqFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
