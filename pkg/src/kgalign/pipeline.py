"""Stage-sequential alignment pipeline with on-disk artifacts and resumption."""

from __future__ import annotations

import csv
import logging
import resource
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .config import PipelineConfig, dump_config
from .eval import EvalReport, evaluate, greedy_cosine_hits, hits_at_n
from .fusion import assemble_local, fuse_final, global_similarity, neighbourhood_means
from .io import load_adjacency, load_embeddings, save_adjacency, save_embeddings
from .kg import (AlignmentSet, KnowledgeGraph, WeightedAdjacency, build_weighted_adjacency, load_alignment,
                 load_kg, save_alignment, save_kg, split_seed)
from .sampler.samplers import BatchAssignment, PartitionerConfig, overlap, run_sampler
from .sparse import SparseSimMatrix
from .synth import generate_synthetic
from .train import EmbeddingMatrix, train_embeddings

log = logging.getLogger(__name__)

STAGES = ("data", "adjacency", "train", "sample", "local", "global", "fuse", "eval")

# batch assignments computed per pipeline sampler choice
_ASSIGNMENTS = {
    "cmcs+iscs": ("cmcs", "iscs-s2t", "iscs-t2s"),
    "cmcs-only": ("cmcs",),
    "cmcs": ("cmcs",),
    "iscs": ("iscs-s2t", "iscs-t2s"),
    "vps": ("vps",),
    "metis-cps": ("metis-cps-s2t", "metis-cps-t2s"),
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineState:
    cfg: PipelineConfig
    out: Path
    kg_s: KnowledgeGraph | None = None
    kg_t: KnowledgeGraph | None = None
    alignment: AlignmentSet | None = None
    seed: AlignmentSet | None = None
    test: AlignmentSet | None = None
    adjacency: tuple[WeightedAdjacency, WeightedAdjacency] | None = None
    embeddings: EmbeddingMatrix | None = None
    assignments: dict[str, BatchAssignment] = field(default_factory=dict)
    m_local: SparseSimMatrix | None = None
    m_global: SparseSimMatrix | None = None
    m_final: SparseSimMatrix | None = None
    report: EvalReport = field(default_factory=EvalReport)

    @property
    def unit_embeddings(self) -> EmbeddingMatrix:
        return self.embeddings.normalized()


def _peak_memory_mb() -> float:
    # ru_maxrss is in KiB on Linux
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


# data -------------------------------------------------------------------------
def _run_data(st: PipelineState) -> None:
    cfg = st.cfg
    if cfg.data_dir:
        d = Path(cfg.data_dir)
        st.kg_s = load_kg(d / "rel_triples_1")
        st.kg_t = load_kg(d / "rel_triples_2")
        st.alignment = load_alignment(d / "ent_links", st.kg_s, st.kg_t)
    else:
        task = generate_synthetic(cfg.synthetic)
        st.kg_s, st.kg_t, st.alignment = task.kg_s, task.kg_t, task.alignment
    st.seed, st.test = split_seed(st.alignment, cfg.train_ratio, cfg.split_seed)
    d = st.out / "data"
    d.mkdir(parents=True, exist_ok=True)
    save_kg(st.kg_s, d / "rel_triples_1", d / "entities_1")
    save_kg(st.kg_t, d / "rel_triples_2", d / "entities_2")
    for name, al in (("ent_links", st.alignment), ("seed_links", st.seed), ("test_links", st.test)):
        save_alignment(al, d / name, st.kg_s, st.kg_t)


def _load_data(st: PipelineState) -> None:
    d = st.out / "data"
    st.kg_s = load_kg(d / "rel_triples_1", d / "entities_1")
    st.kg_t = load_kg(d / "rel_triples_2", d / "entities_2")
    st.alignment = load_alignment(d / "ent_links", st.kg_s, st.kg_t)
    st.seed = load_alignment(d / "seed_links", st.kg_s, st.kg_t)
    st.test = load_alignment(d / "test_links", st.kg_s, st.kg_t)


# adjacency --------------------------------------------------------------------
def _run_adjacency(st: PipelineState) -> None:
    st.adjacency = (build_weighted_adjacency(st.kg_s), build_weighted_adjacency(st.kg_t))
    save_adjacency(st.adjacency, st.out / "adjacency.npz")


def _load_adjacency(st: PipelineState) -> None:
    st.adjacency = load_adjacency(st.out / "adjacency.npz")


# train ------------------------------------------------------------------------
def _run_train(st: PipelineState) -> None:
    tc = st.cfg.train

    def progress(epoch: int, loss: float) -> None:
        log.info("epoch %d/%d loss %.5f", epoch + 1, tc.epochs, loss)

    st.embeddings = train_embeddings(st.kg_s, st.kg_t, st.seed, tc, progress, st.adjacency)
    save_embeddings(st.embeddings, st.out / "embeddings.bin", st.kg_s, st.kg_t)
    with open(st.out / "train_history.tsv", "w") as fh:
        fh.writelines(f"{i}\t{v!r}\n" for i, v in enumerate(st.embeddings.history))


def _load_train(st: PipelineState) -> None:
    st.embeddings = load_embeddings(st.out / "embeddings.bin")


# sample -----------------------------------------------------------------------
def _run_sample(st: PipelineState) -> None:
    names = _ASSIGNMENTS[st.cfg.sampler]
    f = st.unit_embeddings
    st.assignments = {}
    for name in names:
        t0 = time.perf_counter()
        st.assignments[name] = run_sampler(name, st.kg_s, st.kg_t, f, st.seed, st.cfg.partition, st.adjacency)
        st.report.runtime_seconds[f"sample.{name}"] = time.perf_counter() - t0
    d = st.out / "batches"
    for name, a in st.assignments.items():
        a.save(d, name)
    (d / "manifest.txt").write_text("".join(f"{n}\n" for n in names))


def _load_sample(st: PipelineState) -> None:
    d = st.out / "batches"
    names = (d / "manifest.txt").read_text().split()
    st.assignments = {n: BatchAssignment.load(d, n, st.cfg.partition.k) for n in names}


# fusion -----------------------------------------------------------------------
def _means(st: PipelineState) -> tuple[np.ndarray, np.ndarray]:
    f = st.unit_embeddings
    return neighbourhood_means(f.source, f.target, st.cfg.fusion.csls_k)


def _run_local(st: PipelineState) -> None:
    f = st.unit_embeddings
    swapped = EmbeddingMatrix(np.vstack([f.target, f.source]), f.num_target, f.num_source)
    total = None
    for name, a in st.assignments.items():
        if name.endswith("t2s"):
            # normalized with target rows, then transposed back
            m = assemble_local(a.transposed(), swapped, st.cfg.fusion, st.cfg.worker_threads).T
        else:
            m = assemble_local(a, f, st.cfg.fusion, st.cfg.worker_threads)
        total = m if total is None else total + m
    st.m_local = total
    st.m_local.save_binary(st.out / "m_local.bin")


def _load_local(st: PipelineState) -> None:
    st.m_local = SparseSimMatrix.load_binary(st.out / "m_local.bin")


def _run_global(st: PipelineState) -> None:
    st.m_global = global_similarity(st.unit_embeddings, st.cfg.fusion, _means(st))
    st.m_global.save_binary(st.out / "m_global.bin")


def _load_global(st: PipelineState) -> None:
    st.m_global = SparseSimMatrix.load_binary(st.out / "m_global.bin")


def _run_fuse(st: PipelineState) -> None:
    st.m_final = fuse_final(st.m_local, st.m_global, st.cfg.fusion.csls_k, means=_means(st))
    st.m_final.save_binary(st.out / "m_final.bin")
    st.m_final.save_text(st.out / "m_final.tsv")


def _load_fuse(st: PipelineState) -> None:
    st.m_final = SparseSimMatrix.load_binary(st.out / "m_final.bin")


# eval -------------------------------------------------------------------------
def _run_eval(st: PipelineState) -> None:
    rep = evaluate(st.m_final, st.test, st.cfg.hits, st.cfg.eval_direction)
    rep.runtime_seconds = st.report.runtime_seconds
    rep.overlap = {name: overlap(a, st.alignment) for name, a in st.assignments.items()}
    f = st.embeddings
    rep.extra["greedy_cosine_hits@1"] = greedy_cosine_hits(f.source, f.target, st.test)
    if st.m_local is not None:
        rep.extra["local_hits@1"] = hits_at_n(st.m_local, st.test, 1)
    if st.m_global is not None:
        rep.extra["global_hits@1"] = hits_at_n(st.m_global, st.test, 1)
    st.report = rep


_RUN: dict[str, Callable[[PipelineState], None]] = {
    "data": _run_data, "adjacency": _run_adjacency, "train": _run_train, "sample": _run_sample,
    "local": _run_local, "global": _run_global, "fuse": _run_fuse, "eval": _run_eval,
}
_LOAD: dict[str, Callable[[PipelineState], None]] = {
    "data": _load_data, "adjacency": _load_adjacency, "train": _load_train, "sample": _load_sample,
    "local": _load_local, "global": _load_global, "fuse": _load_fuse, "eval": lambda st: None,
}


def run_pipeline(cfg: PipelineConfig, resume_from: str | None = None,
                 stop_after: str | None = None) -> PipelineState:
    """Run the stages in order, persisting each before the next starts.

    Stages before ``resume_from`` are loaded from the output directory
    instead of recomputed. ``stop_after`` ends the run early; the report is
    only written when the eval stage runs.
    """
    for name in (resume_from, stop_after):
        if name is not None and name not in STAGES:
            raise ValueError(f"unknown stage {name!r}; expected one of {STAGES}")
    start = STAGES.index(resume_from) if resume_from else 0
    stop = STAGES.index(stop_after) if stop_after else len(STAGES) - 1
    if start > stop:
        raise ValueError(f"resume stage {resume_from!r} comes after stop stage {stop_after!r}")
    cfg = cfg.seeded()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(cfg))
    st = PipelineState(cfg, out)
    with threadpool_limits(limits=cfg.worker_threads):
        for i, stage in enumerate(STAGES[: stop + 1]):
            t0 = time.perf_counter()
            try:
                if i < start:
                    _load_needed(st, stage, start)
                else:
                    log.info("stage %s", stage)
                    _RUN[stage](st)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(stage, exc) from exc
            st.report.runtime_seconds[stage] = time.perf_counter() - t0
    st.report.peak_memory_mb = _peak_memory_mb()
    if stop == len(STAGES) - 1:
        st.report.save(out)
    return st


def _load_needed(st: PipelineState, stage: str, start: int) -> None:
    """Load a finished stage's artifacts unless nothing downstream reads them."""
    resume = STAGES[start]
    needed = {
        "data": True,
        "adjacency": resume in ("train", "sample"),
        "train": True,
        "sample": True,
        "local": resume in ("fuse", "eval"),
        "global": resume in ("fuse", "eval"),
        "fuse": resume == "eval",
    }
    if needed.get(stage, True):
        _LOAD[stage](st)


def load_state(cfg: PipelineConfig, through: str) -> PipelineState:
    """Load the persisted artifacts of every stage up to and including ``through``."""
    if through not in STAGES:
        raise ValueError(f"unknown stage {through!r}; expected one of {STAGES}")
    cfg = cfg.seeded()
    st = PipelineState(cfg, Path(cfg.output_dir))
    for stage in STAGES[: STAGES.index(through) + 1]:
        try:
            _LOAD[stage](st)
        except Exception as exc:
            raise StageError(stage, exc) from exc
    return st


STUDY_SAMPLERS = ("vps", "metis-cps", "cmcs", "iscs")


def run_sampler_study(cfg: PipelineConfig, k_values: list[int], samplers=STUDY_SAMPLERS,
                      resume: bool = False) -> list[dict]:
    """Overlap and wall time per sampler and K, written to ``sampler_study.csv``.

    Overlap is measured over every reference pair (seed and test). The
    one-directional samplers report the mean of their two directions.
    """
    if resume:
        st = load_state(cfg, through="train")
    else:
        st = run_pipeline(cfg, stop_after="train")
    f = st.unit_embeddings
    rows = []
    for k in k_values:
        pc = PartitionerConfig(**{**st.cfg.partition.__dict__, "k": int(k)})
        for sampler in samplers:
            names = {"metis-cps": ("metis-cps-s2t", "metis-cps-t2s"),
                     "iscs": ("iscs-s2t", "iscs-t2s")}.get(sampler, (sampler,))
            t0 = time.perf_counter()
            values = [overlap(run_sampler(n, st.kg_s, st.kg_t, f, st.seed, pc, st.adjacency), st.alignment)
                      for n in names]
            rows.append({"sampler": sampler, "K": int(k), "overlap": float(np.mean(values)),
                         "seconds": time.perf_counter() - t0})
            log.info("study %s K=%d overlap %.4f", sampler, k, rows[-1]["overlap"])
    with open(st.out / "sampler_study.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["sampler", "K", "overlap", "seconds"])
        w.writeheader()
        w.writerows(rows)
    return rows
