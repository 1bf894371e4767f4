"""Command-line harness: ``stmix check | gradcheck | flops | train-toy | bench``.

Every command writes ``report.json`` (deterministic given seed and config),
one CSV table, and ``timing.json`` (wall clock, kept apart so the report
stays bit-identical across runs). Exit status is 0 iff all hard checks pass.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ._validation import ConfigError
from .attention import MIXING, SPATIAL, AttentionVariant
from .bench import shift_overhead
from .checks import INVENTORY, CheckContext, CheckResult, all_variants, gradcheck_suite, run_checks
from .complexity import compare_variants, published_reproduction, write_table
from .model import ModelConfig, PRESETS, forward, init_params, train_step
from .rng import Rng
from .synthetic import SyntheticSpec, gen_synthetic

log = logging.getLogger("stmix")

CLI_PRESETS = ("desk", "vitb16", "vitb32", "vitl32")


@dataclass
class TrainSettings:
    steps: int = 400
    baseline_steps: int = 200
    learning_rate: float = 0.01
    momentum: float = 0.9
    clip_norm: float | None = 1.0
    batch_size: int = 16
    train_samples: int = 500
    test_samples: int = 200


@dataclass
class RunConfig:
    preset: str = "desk"
    model: dict = field(default_factory=dict)
    synthetic: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | None, preset: str) -> "RunConfig":
        cfg = cls(preset=preset)
        if not path:
            return cfg
        raw = json.loads(Path(path).read_text())
        model_keys = {f.name for f in fields(ModelConfig)}
        synth_keys = {f.name for f in fields(SyntheticSpec)}
        train_keys = {f.name for f in fields(TrainSettings)}
        for key, value in raw.items():
            if key in ("model", "synthetic", "train"):
                getattr(cfg, key).update(value)
            elif key in model_keys:
                cfg.model[key] = value
            elif key in synth_keys:
                cfg.synthetic[key] = value
            elif key in train_keys:
                cfg.train[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cfg

    def model_config(self, **overrides) -> ModelConfig:
        base = dict(PRESETS[self.preset])
        base.update(self.model)
        base.update(overrides)
        return ModelConfig(**base)

    def synthetic_spec(self, **overrides) -> SyntheticSpec:
        return SyntheticSpec(**{**self.synthetic, **overrides})

    def train_settings(self) -> TrainSettings:
        return TrainSettings(**self.train)

    def to_dict(self) -> dict:
        return {"preset": self.preset, "model": self.model, "synthetic": self.synthetic, "train": self.train}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunReport:
    suite: str
    seed: int
    config_hash: str
    checks: list[CheckResult]
    extra: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    timing: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "seed": self.seed, "config_hash": self.config_hash,
                "passed": self.passed, "checks": [c.to_dict() for c in self.checks], **self.extra}

    def write(self, out: Path) -> None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=1, default=_jsonable))
        (out / "timing.json").write_text(json.dumps({"suite": self.suite, "wall_clock_s": self.wall_clock_s, **self.timing},
                                                   indent=1))
        with open(out / "checks.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "passed", "measured", "tolerance", "detail"])
            for c in self.checks:
                w.writerow([c.id, c.passed, json.dumps(c.measured, default=_jsonable),
                            json.dumps(c.tolerance, default=_jsonable), c.detail])


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# ---------------------------------------------------------------------------
# commands

def cmd_check(cfg: RunConfig, seed: int, fault: bool = False) -> RunReport:
    ctx = CheckContext(seed=seed, boundary="wrap" if fault else "zero")
    results = run_checks(ctx)
    return RunReport("check", seed, cfg.digest(), results,
                     {"inventory": list(INVENTORY), "fault_injected": fault})


def cmd_gradcheck(cfg: RunConfig, seed: int) -> RunReport:
    return RunReport("gradcheck", seed, cfg.digest(), gradcheck_suite(seed))


def cmd_flops(cfg: RunConfig, seed: int, out: Path, views: int = 1) -> RunReport:
    config = cfg.model_config()
    rows = compare_variants(config, all_variants(), views=views)
    write_table(rows, out, f"flops_{cfg.preset}")
    repro = published_reproduction()
    write_table(repro, out, "flops_reproduction")
    by_label = {r["variant"]: r for r in rows}
    mix = by_label[AttentionVariant(MIXING).label]
    checks = [CheckResult("mixing_ratio_vs_spatial", mix["ratio_vs_spatial"] == 1.0,
                          {"ratio": mix["ratio_vs_spatial"]}, {"ratio": 1.0})]
    for r in repro:
        if r["tolerance"] is None:
            continue
        checks.append(CheckResult(f"reproduction.{r['preset']}.T{r['T']}", bool(r["within_tolerance"]),
                                  {"gmacs": r["gmacs_patch_tokens"], "rel_error": r["rel_error"]},
                                  {"published": r["published_gmacs"], "rel_error": r["tolerance"]}))
    return RunReport("flops", seed, cfg.digest(), checks, {"table": rows, "reproduction": repro})


def fit(X, y, config: ModelConfig, settings: TrainSettings, steps: int, seed: int) -> tuple[dict, list[float]]:
    """SGD with momentum on seeded minibatches; returns parameters and the loss curve."""
    rng = Rng(seed)
    params = init_params(config, rng.fork())
    shuffle = rng.fork()
    velocity: dict = {}
    losses = []
    order, pos = shuffle.permutation(len(X)), 0
    for step in range(steps):
        if pos + settings.batch_size > len(order):
            order, pos = shuffle.permutation(len(X)), 0
        idx = order[pos:pos + settings.batch_size]
        pos += settings.batch_size
        losses.append(train_step(X[idx], y[idx], config, params, velocity,
                                 settings.learning_rate, settings.momentum, settings.clip_norm))
        if step % 100 == 0:
            log.info("%s step %d loss %.4f", config.variant.label, step, losses[-1])
    return params, losses


def per_clip_logits(X, config: ModelConfig, params: dict) -> np.ndarray:
    """One forward call per clip, so no clip's logits depend on its batch neighbours."""
    return np.stack([forward(x, config, params).data[0] for x in X])


def cmd_train_toy(cfg: RunConfig, seed: int) -> RunReport:
    settings = cfg.train_settings()
    spec = cfg.synthetic_spec(num_samples=settings.train_samples, seed=seed)
    Xtr, ytr = gen_synthetic(spec)
    Xte, yte = gen_synthetic(cfg.synthetic_spec(num_samples=settings.test_samples, seed=seed + 1))
    shape = dict(num_frames=spec.T, image_size=spec.H, learn_temporal_pos=False)
    baseline = cfg.model_config(**shape, variant=AttentionVariant(SPATIAL), aggregation="average")
    mixing = cfg.model_config(**shape, variant=AttentionVariant(MIXING), aggregation="attention")

    results, extra = [], {"task": spec.task, "settings": settings.__dict__}
    for name, config, steps in (("baseline", baseline, settings.baseline_steps),
                                ("mixing", mixing, settings.steps)):
        params, losses = fit(Xtr, ytr, config, settings, steps, seed)
        logits = per_clip_logits(Xte, config, params)
        acc = float(np.mean(np.argmax(logits, axis=1) == yte))
        extra[name] = {"variant": config.variant.label, "aggregation": config.aggregation, "steps": steps,
                       "test_accuracy": acc, "final_loss": float(np.mean(losses[-50:]))}
        if name == "baseline" and spec.task == "reversed_pairs":
            diff = float(np.abs(logits[0::2] - logits[1::2]).max())
            results.append(CheckResult("baseline.reversal_logits_equal", diff == 0.0,
                                       {"max_abs_diff": diff}, {"max_abs_diff": 0.0}))
            results.append(CheckResult("baseline.chance_accuracy", 0.4 <= acc <= 0.6,
                                       {"accuracy": acc}, {"range": [0.4, 0.6]}))
        else:
            results.append(CheckResult(f"{name}.accuracy", acc >= 0.9, {"accuracy": acc}, {"min": 0.9}))
    return RunReport("train-toy", seed, cfg.digest(), results, extra)


def cmd_bench(cfg: RunConfig, seed: int) -> RunReport:
    res = shift_overhead(cfg.model_config(), seed=seed)
    # timing is informational; only the no-op equivalence is a hard check
    checks = [CheckResult("rho0_identical_to_spatial", res["rho0_identical_to_spatial"],
                          {"identical": res["rho0_identical_to_spatial"]}, {"identical": True})]
    timing_free = {k: v for k, v in res.items() if k not in ("median_s", "frames_per_s", "overhead", "overhead_rho0")}
    return RunReport("bench", seed, cfg.digest(), checks, {"bench": timing_free}, timing=res)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stmix", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with model / synthetic / train fields")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="reports", help="output directory")
    common.add_argument("--preset", choices=CLI_PRESETS, default="desk")
    common.add_argument("-v", "--verbose", action="store_true")
    p = sub.add_parser("check", parents=[common], help="property and oracle check suite")
    p.add_argument("--fault", action="store_true", help="skip boundary zero-fill in the temporal shift")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p = sub.add_parser("flops", parents=[common], help="MAC tables per attention variant")
    p.add_argument("--views", type=int, default=1)
    sub.add_parser("train-toy", parents=[common], help="train baseline and mixing models on a synthetic task")
    sub.add_parser("bench", parents=[common], help="shift-overhead microbenchmark")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = RunConfig.load(args.config, args.preset)
    except (ConfigError, TypeError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) / args.command
    t0 = time.perf_counter()
    if args.command == "check":
        report = cmd_check(cfg, args.seed, fault=args.fault)
    elif args.command == "gradcheck":
        report = cmd_gradcheck(cfg, args.seed)
    elif args.command == "flops":
        report = cmd_flops(cfg, args.seed, out, views=args.views)
    elif args.command == "train-toy":
        report = cmd_train_toy(cfg, args.seed)
    else:
        report = cmd_bench(cfg, args.seed)
    report.wall_clock_s = time.perf_counter() - t0
    report.write(out)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.id}  {json.dumps(c.measured, default=_jsonable)}")
    print(f"{report.suite}: {sum(c.passed for c in report.checks)}/{len(report.checks)} passed -> {out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
