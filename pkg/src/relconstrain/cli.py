"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .lm import load_lm, save_lm
from .pipeline import (
    SOURCES,
    ConstrainedSummarizer,
    ConstraintExtractor,
    DataError,
    PipelineConfig,
    QfsExample,
    evaluate_files,
    load_dataset,
    parse_config,
    run_pipeline,
    write_jsonl,
)
from .synthetic import write_splits

log = logging.getLogger("relconstrain")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_constraint_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scorer", help="scorer file (default: seeded toy bilinear scorer)")
    p.add_argument("--scorer-seed", type=int, default=0)
    p.add_argument("--scorer-dim", type=int, default=16)
    p.add_argument("--stopwords", help="stopword file, one surface per line")
    p.add_argument("--morphology", help="morphology TSV: lemma<TAB>form1,form2,...")
    p.add_argument("--k-constraints", type=int, default=3)
    p.add_argument("--constraint-source", choices=SOURCES, default="document")
    p.add_argument("--ig-steps", type=int, default=10)


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--query", help="query text")
    p.add_argument("--document", help="document text")
    p.add_argument("--dataset", help="JSONL dataset instead of --query/--document")
    p.add_argument("--max-doc-tokens", type=int, default=512)


def _add_decoder_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beam-width", type=int, default=20)
    p.add_argument("--lambda", dest="lambda_", type=float, default=0.1)
    p.add_argument("--max-len", type=int, default=32)
    p.add_argument("--expand-top", type=int, default=20)
    p.add_argument("--clause-slack", type=int, default=1)
    p.add_argument("--likelihood-keep", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="relconstrain", description="Relevance-constrained query-focused summarization decoding.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("train-lm", help="train an n-gram LM on query <sep> summary sequences")
    p.add_argument("--train", required=True, help="training dataset JSONL")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--smoothing-k", type=float, default=1.0)
    p.add_argument("--output", required=True, help="LM file to write")

    p = sub.add_parser("saliency", help="per-token saliency TSV for one example")
    _add_input_args(p)
    p.add_argument("--id", help="example id when reading --dataset (default: first)")
    _add_constraint_args(p)

    p = sub.add_parser("constrain", help="print constraint CNFs")
    _add_input_args(p)
    _add_constraint_args(p)

    p = sub.add_parser("decode", help="decode summaries with a trained LM")
    p.add_argument("--lm", required=True, help="LM file from train-lm")
    _add_input_args(p)
    p.add_argument("--output", help="predictions JSONL (with --dataset)")
    p.add_argument("--no-constraints", action="store_true", help="plain beam search")
    p.add_argument("--trace", help="write per-step beam/group JSONL here")
    _add_decoder_args(p)
    _add_constraint_args(p)

    p = sub.add_parser("evaluate", help="ROUGE report for predictions against references")
    p.add_argument("--predictions", required=True)
    p.add_argument("--references", required=True, help="JSONL with id and summary (or reference)")
    p.add_argument("--compare", help="second predictions file; adds paired t-tests on per-example F1")
    p.add_argument("--output", help="write the JSON report here as well as stdout")

    p = sub.add_parser("pipeline", help="train, constrain, decode and evaluate end to end")
    p.add_argument("--config", help="config file of 'key = value' lines")
    for f in dataclasses.fields(PipelineConfig):
        flag = "--" + ("lambda" if f.name == "lambda_" else f.name.replace("_", "-"))
        p.add_argument(flag, dest=f.name, default=None, help=f"override config key {f.name}")

    p = sub.add_parser("make-fixtures", help="write the synthetic train/dev/test JSONL splits")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, default=13)
    return parser


def _examples(args) -> list[QfsExample]:
    if args.dataset:
        return load_dataset(args.dataset, args.max_doc_tokens)
    if args.query is None or args.document is None:
        raise UsageError("give --query and --document, or --dataset")
    return [QfsExample("cli", args.query, args.document, "")]


def _extractor(args) -> ConstraintExtractor:
    return ConstraintExtractor(args.k_constraints, args.constraint_source, args.ig_steps, args.scorer,
                               args.scorer_seed, args.scorer_dim, args.stopwords, args.morphology).fit()


def cmd_train_lm(args) -> int:
    model = ConstrainedSummarizer(lm_order=args.order, lm_smoothing_k=args.smoothing_k)
    model.fit(load_dataset(args.train))
    save_lm(model.lm_, args.output)
    log.info("wrote %s (|V|=%d)", args.output, len(model.lm_.vocab))
    return 0


def cmd_saliency(args) -> int:
    examples = _examples(args)
    if args.id is not None:
        examples = [ex for ex in examples if ex.id == args.id]
        if not examples:
            raise DataError(f"no example with id {args.id!r}")
    extractor = _extractor(args)
    ex = examples[0]
    sal = extractor.saliency(ex)
    selected = set(extractor.selected_tokens(ex))
    out = sys.stdout
    out.write("token\traw\tnormalized\tselected\n")
    # only the best-scoring occurrence of a selected surface is flagged
    flagged: set[str] = set()
    order = sorted(range(len(sal.tokens)), key=lambda i: (-sal.raw[i], i))
    chosen_idx = set()
    for i in order:
        s = sal.tokens[i]
        if s in selected and s not in flagged:
            flagged.add(s)
            chosen_idx.add(i)
    for i, (tok, raw, norm) in enumerate(zip(sal.tokens, sal.raw, sal.normalized)):
        out.write(f"{tok}\t{float(raw)!r}\t{float(norm)!r}\t{int(i in chosen_idx)}\n")
    return 0


def cmd_constrain(args) -> int:
    extractor = _extractor(args)
    examples = _examples(args)
    for ex, cnf in zip(examples, extractor.transform(examples)):
        if args.dataset:
            print(f"# {ex.id}")
        if len(cnf):
            print(cnf.format())
    return 0


def cmd_decode(args) -> int:
    lm = load_lm(args.lm)
    model = ConstrainedSummarizer(
        k_constraints=args.k_constraints, constraint_source=args.constraint_source, ig_steps=args.ig_steps,
        scorer_path=args.scorer, scorer_seed=args.scorer_seed, scorer_dim=args.scorer_dim,
        stopwords=args.stopwords, morphology=args.morphology, beam_width=args.beam_width, lambda_=args.lambda_,
        max_len=args.max_len, expand_top=args.expand_top, clause_slack=args.clause_slack,
        likelihood_keep=args.likelihood_keep, constrained=not args.no_constraints,
    ).fit([], lm=lm)
    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        rows = []
        for ex in _examples(args):
            def trace(rec, ex_id=ex.id):
                trace_fh.write(json.dumps({"id": ex_id, **rec}) + "\n")

            decoded = model.decode(ex, trace=trace if trace_fh else None)
            rows.append(decoded.row())
            if not args.output:
                print(decoded.text)
        if args.output:
            write_jsonl(args.output, rows)
    finally:
        if trace_fh:
            trace_fh.close()
    return 0


def cmd_evaluate(args) -> int:
    report = evaluate_files(args.predictions, args.references, args.compare)
    text = json.dumps(report, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def cmd_pipeline(args) -> int:
    text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(PipelineConfig)}
    try:
        cfg = parse_config(text, overrides).validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = run_pipeline(cfg)
    summary = {k: report[k] for k in ("n_examples", "constrained", "unconstrained", "paired_t_test") if k in report}
    print(json.dumps(summary, indent=2))
    return 0


def cmd_make_fixtures(args) -> int:
    for name, path in write_splits(args.output_dir, seed=args.seed).items():
        print(f"{name}\t{path}")
    return 0


COMMANDS = {
    "train-lm": cmd_train_lm,
    "saliency": cmd_saliency,
    "constrain": cmd_constrain,
    "decode": cmd_decode,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "make-fixtures": cmd_make_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"relconstrain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"relconstrain: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
