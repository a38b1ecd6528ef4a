"""``kgalign`` command line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import add_config_arguments, config_from_args
from .kg import save_alignment, save_kg
from .pipeline import STAGES, StageError, run_pipeline, run_sampler_study
from .synth import generate_synthetic

# (resume_from, stop_after) per pipeline subcommand
_SPANS = {
    "train": (None, "train"),
    "sample": ("sample", "sample"),
    "fuse": ("local", "fuse"),
    "eval": ("eval", "eval"),
    "run": (None, None),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgalign", description="Entity alignment between two knowledge graphs.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "train": "load or generate data and train embeddings",
        "sample": "compute mini-batch assignments from trained embeddings",
        "fuse": "build local, global and fused similarity matrices",
        "eval": "score the fused matrix on the test links",
        "run": "full pipeline",
        "synth": "write a synthetic KG pair in the input file layout",
        "study": "sampler overlap and runtime over several K",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        add_config_arguments(p)
        if name == "run":
            p.add_argument("--resume-from", choices=STAGES, help="reuse artifacts of earlier stages")
        if name == "study":
            p.add_argument("--k-values", default="5,10,15,20,25", help="comma-separated batch counts")
            p.add_argument("--resume", action="store_true", help="reuse data and embeddings on disk")
    return parser


def _synth(cfg) -> None:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    task = generate_synthetic(cfg.synthetic)
    save_kg(task.kg_s, out / "rel_triples_1")
    save_kg(task.kg_t, out / "rel_triples_2")
    save_alignment(task.alignment, out / "ent_links", task.kg_s, task.kg_t)
    print(f"wrote {task.kg_s.num_triples} + {task.kg_t.num_triples} triples and "
          f"{len(task.alignment)} links to {out}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"kgalign: error in stage 'config': {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "synth":
            _synth(cfg)
        elif args.command == "study":
            ks = [int(k) for k in args.k_values.split(",") if k.strip()]
            rows = run_sampler_study(cfg, ks, resume=args.resume)
            print("sampler,K,overlap,seconds")
            for r in rows:
                print(f"{r['sampler']},{r['K']},{r['overlap']:.6f},{r['seconds']:.3f}")
        else:
            resume, stop = _SPANS[args.command]
            if args.command == "run" and args.resume_from:
                resume = args.resume_from
            st = run_pipeline(cfg, resume_from=resume, stop_after=stop)
            if stop is None or stop == "eval":
                sys.stdout.write(st.report.to_text())
            else:
                print(f"stage '{stop}' done; artifacts in {st.out}")
    except StageError as exc:
        logging.getLogger("kgalign").debug("stage failure", exc_info=exc.cause)
        print(f"kgalign: error in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure still gets a tagged message
        print(f"kgalign: error in stage '{args.command}': {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
