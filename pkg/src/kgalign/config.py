"""Pipeline configuration: dataclasses, an INI-style file format and CLI overrides.

Every config key is spelled like its CLI flag without the leading dashes, so
``num-batches = 10`` under ``[sampler]`` and ``--num-batches 10`` are the same
setting. Flags win over the file.
"""

from __future__ import annotations

import argparse
import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .eval import EVAL_DIRECTIONS
from .fusion import FusionConfig
from .sampler.samplers import PartitionerConfig
from .synth import SyntheticSpec
from .train import TrainConfig

PIPELINE_SAMPLERS = ("cmcs+iscs", "cmcs-only", "cmcs", "iscs", "vps", "metis-cps")


def _bool(text: str | bool) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str | tuple) -> tuple[int, ...]:
    if isinstance(text, tuple):
        return text
    return tuple(int(x) for x in str(text).split(",") if x.strip())


@dataclass
class PipelineConfig:
    data_dir: str | None = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    partition: PartitionerConfig = field(default_factory=PartitionerConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    train_ratio: float = 0.3
    split_seed: int = 0
    rng_seed: int = 0
    sampler: str = "cmcs+iscs"
    output_dir: str = "runs/default"
    threads: int = 1
    deterministic: bool = False
    hits: tuple[int, ...] = (1, 10)
    eval_direction: str = "s2t"

    def __post_init__(self):
        if not 0.0 < self.train_ratio < 1.0:
            raise ValueError("train-ratio must lie in (0, 1)")
        if self.sampler not in PIPELINE_SAMPLERS:
            raise ValueError(f"sampler must be one of {PIPELINE_SAMPLERS}, got {self.sampler!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not self.hits or min(self.hits) < 1:
            raise ValueError("hits must list positive integers")
        if self.eval_direction not in EVAL_DIRECTIONS:
            raise ValueError(f"eval-direction must be one of {EVAL_DIRECTIONS}, got {self.eval_direction!r}")

    @property
    def worker_threads(self) -> int:
        return 1 if self.deterministic else self.threads

    def seeded(self) -> "PipelineConfig":
        """Copy with the global rng seed pushed into the trainer and the samplers."""
        return replace(self, train=replace(self.train, rng_seed=self.rng_seed),
                       partition=replace(self.partition, rng_seed=self.rng_seed))


@dataclass(frozen=True)
class Option:
    flag: str
    section: str
    target: str  # "attr" on PipelineConfig or "sub.attr"
    parse: Callable[[str], Any]
    help: str


OPTIONS: tuple[Option, ...] = (
    Option("data-dir", "data", "data_dir", str, "directory with rel_triples_1, rel_triples_2, ent_links"),
    Option("train-ratio", "data", "train_ratio", float, "fraction of links used as seeds (default 0.3)"),
    Option("split-seed", "data", "split_seed", int, "rng seed of the seed/test split"),
    Option("entities", "synthetic", "synthetic.n_entities", int, "synthetic entities per side"),
    Option("relations", "synthetic", "synthetic.n_relations", int, "synthetic relation count"),
    Option("avg-degree", "synthetic", "synthetic.avg_degree", float, "synthetic mean degree"),
    Option("edge-dropout", "synthetic", "synthetic.edge_dropout", float, "per-side edge drop probability"),
    Option("remap-prob", "synthetic", "synthetic.relation_remap_prob", float, "per-triple relation remap probability"),
    Option("synth-seed", "synthetic", "synthetic.rng_seed", int, "rng seed of the generator"),
    Option("dim", "train", "train.dim", int, "embedding width (default 128)"),
    Option("layers", "train", "train.layers", int, "GCN layers (default 2)"),
    Option("fanout", "train", "train.fanout", int, "sampled neighbours per node and layer (default 8)"),
    Option("np", "train", "train.n_pos", int, "positive pairs per step (default 2000)"),
    Option("nn", "train", "train.n_neg", int, "negative entities per side and step (default 4000)"),
    Option("epochs", "train", "train.epochs", int, "training epochs"),
    Option("lr", "train", "train.lr", float, "Adam learning rate"),
    Option("gamma", "train", "train.gamma", float, "loss margin"),
    Option("lambda", "train", "train.lam", float, "LogSumExp scale"),
    Option("activation", "train", "train.activation", str, "tanh, relu or linear"),
    Option("num-batches", "sampler", "partition.k", int, "mini-batch count K"),
    Option("sampler", "sampler", "sampler", str, "cmcs+iscs (CMCS + ISCS both ways), cmcs-only, cmcs, iscs, vps, metis-cps"),
    Option("classifier", "sampler", "partition.classifier", str, "logreg or gbt"),
    Option("gcn-epochs", "sampler", "partition.gcn_classifier_epochs", int, "ISCS classifier epochs"),
    Option("sinkhorn-iters", "fusion", "fusion.sinkhorn_iters", int, "Sinkhorn rounds K_s (default 100)"),
    Option("topk", "fusion", "fusion.topk", int, "global neighbours K_r (default 50)"),
    Option("csls-k", "fusion", "fusion.csls_k", int, "CSLS neighbourhood K_n (default 10)"),
    Option("tau", "fusion", "fusion.tau", float, "Sinkhorn temperature (default 0.05)"),
    Option("seed", "run", "rng_seed", int, "rng seed for training and sampling"),
    Option("out", "run", "output_dir", str, "output directory"),
    Option("threads", "run", "threads", int, "worker thread cap"),
    Option("deterministic", "run", "deterministic", _bool, "single-threaded, bitwise reproducible run"),
    Option("hits", "eval", "hits", _int_list, "Hits@N cut-offs, e.g. 1,10"),
    Option("eval-direction", "eval", "eval_direction", str, "s2t (default), t2s or both"),
)

_BY_FLAG = {o.flag: o for o in OPTIONS}


def _apply(cfg: PipelineConfig, values: dict[str, Any]) -> PipelineConfig:
    top: dict[str, Any] = {}
    subs: dict[str, dict[str, Any]] = {}
    for flag, raw in values.items():
        opt = _BY_FLAG[flag]
        value = opt.parse(raw) if isinstance(raw, str) else raw
        if "." in opt.target:
            sub, attr = opt.target.split(".")
            subs.setdefault(sub, {})[attr] = value
        else:
            top[opt.target] = value
    for sub, kw in subs.items():
        top[sub] = replace(getattr(cfg, sub), **kw)
    return replace(cfg, **top)


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None)
    if not parser.read(path, encoding="utf-8"):
        raise FileNotFoundError(f"config file not found: {path}")
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            opt = _BY_FLAG.get(key)
            if opt is None:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
            if opt.section != section:
                raise ValueError(f"{path}: key {key!r} belongs in [{opt.section}], not [{section}]")
            values[key] = raw
    return _apply(base or PipelineConfig(), values)


def dump_config(cfg: PipelineConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for opt in OPTIONS:
        obj = cfg
        for part in opt.target.split("."):
            obj = getattr(obj, part)
        if obj is None:
            continue
        if not parser.has_section(opt.section):
            parser.add_section(opt.section)
        text = ",".join(map(str, obj)) if isinstance(obj, tuple) else str(obj)
        parser.set(opt.section, opt.flag, text)
    out = []
    for section in parser.sections():
        out.append(f"[{section}]")
        out.extend(f"{k} = {v}" for k, v in parser.items(section))
        out.append("")
    return "\n".join(out)


def add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI-style config file; flags override its values")
    for opt in OPTIONS:
        kw: dict[str, Any] = {"dest": f"opt_{opt.flag}", "default": None, "help": opt.help}
        if opt.parse is _bool:
            kw["action"] = argparse.BooleanOptionalAction
        else:
            kw["type"] = str
            kw["metavar"] = opt.flag.replace("-", "_").upper()
        parser.add_argument(f"--{opt.flag}", **kw)


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {o.flag: getattr(args, f"opt_{o.flag}") for o in OPTIONS
                 if getattr(args, f"opt_{o.flag}", None) is not None}
    return _apply(cfg, overrides)
