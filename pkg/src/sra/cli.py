"""Command-line entry point: ``sra train | ablate | eval | align``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .alignment import AlignmentError, align_tokenized, span_char_range, validate_alignment
from .config import load_config
from .harness import AXES, Experiment, InvariantError, evaluate, run_ablation, run_distillation
from .losses import Projection
from .model import load_model
from .tokenization import ToyTokenizer, encode_with_offsets

log = logging.getLogger("sra")


def _train(args) -> int:
    cfg = load_config(args.config)
    seeds = [args.seed] if args.seed is not None else cfg.seeds
    report = run_distillation(cfg, seeds=seeds, out_dir=args.out, dump_spans=args.dump_spans)
    print(json.dumps({"seeds": report["seeds"], "mean": report["mean"]}, indent=2))
    return 0


def _ablate(args) -> int:
    cfg = load_config(args.config)
    report = run_ablation(cfg, args.axis, out_dir=args.out)
    print(json.dumps(report, indent=2))
    return 0


def _eval(args) -> int:
    cfg = load_config(args.config)
    exp = Experiment(cfg)
    student, extra = load_model(args.student)
    if not Path(args.teacher).exists():
        raise FileNotFoundError(f"teacher checkpoint {args.teacher} not found")
    exp.ensure_teacher(args.teacher)
    if student.config != exp.student_config(student.config.seed):
        raise InvariantError(f"{args.student}: student config does not match run config")
    W = extra.get("projector.0")
    if W is None:
        raise InvariantError(f"{args.student}: no projector.0 array stored with the student")
    metrics = evaluate(student, Projection.from_array(W), exp, exp.eval)
    print(json.dumps(metrics, indent=2))
    return 0


def _align(args) -> int:
    tok_t = ToyTokenizer.load(args.teacher_tok)
    tok_s = ToyTokenizer.load(args.student_tok)
    tt = encode_with_offsets(tok_t, args.text)
    ts = encode_with_offsets(tok_s, args.text)
    alignment = align_tokenized(tt, ts)
    validate_alignment(alignment, tt, ts)
    for pt, ps in alignment.pairs:
        c0, c1 = span_char_range(pt, tt)
        print(json.dumps({"t": [pt.start, pt.end], "s": [ps.start, ps.end], "chars": [c0, c1]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sra", description="Span-level cross-tokenizer distillation on toy models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="pretrain the teacher (or load it from --out) and distil students")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--dump-spans", action="store_true", help="append held-out span bundles to metrics.jsonl")
    p.set_defaults(func=_train)

    p = sub.add_parser("ablate", help="run one ablation axis over all seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--out")
    p.set_defaults(func=_ablate)

    p = sub.add_parser("eval", help="held-out span metrics for a saved student")
    p.add_argument("--student", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--config", required=True)
    p.set_defaults(func=_eval)

    p = sub.add_parser("align", help="print aligned span pairs for one text")
    p.add_argument("--teacher-tok", required=True)
    p.add_argument("--student-tok", required=True)
    p.add_argument("--text", required=True)
    p.set_defaults(func=_align)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvariantError, AlignmentError, FloatingPointError) as exc:
        print(f"sra: invariant violated: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"sra: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
