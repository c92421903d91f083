"""Command-line interface.

Subcommands: tokenize, treeify, complexity, gen, ingest, train, decode,
eval, gradcheck. Exit codes: 0 ok, 1 usage error, 2 data error,
3 check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import metrics as metrics_mod
from .autodiff import EmptyLossError, Tensor
from .decoding import decode_corpus
from .gradcheck import check_primitives, gradcheck
from .model import JointModel, ModelConfig
from .tokenizer import detokenize, tokenize_raw, tokenize_spaced
from .training import (
    TrainConfig,
    records_to_ids,
    teacher_forced_parent_predictions,
    train_model,
    write_log,
)
from .treebank import (
    DanglingScriptError,
    UnbalancedBracesError,
    sequence_complexity,
    to_tuple_text,
    treeify,
)
from .vocab import TokenSeq, UnknownTokenError, Vocab

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_CHECK = 3

DATA_ERRORS = (
    UnknownTokenError,
    UnbalancedBracesError,
    DanglingScriptError,
    corpus_mod.JsonlSchemaError,
    corpus_mod.MalformedInkmlError,
    corpus_mod.MissingTruthError,
    metrics_mod.LengthMismatchError,
    metrics_mod.EmptyCorpusError,
    EmptyLossError,
    FileNotFoundError,
    KeyError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_vocab(arg: str | None) -> Vocab:
    if arg is None:
        return Vocab.default()
    return Vocab.from_file(arg)


def _emit(args, payload: dict, plain: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, sort_keys=True))
    else:
        print(plain)


# -- subcommands ---------------------------------------------------------


def cmd_tokenize(args) -> int:
    vocab = _load_vocab(args.vocab)
    fn = tokenize_raw if args.raw else tokenize_spaced
    seq = fn(args.text, vocab)
    _emit(
        args,
        {"tokens": list(seq.tokens()), "ids": list(seq.ids)},
        " ".join(seq.tokens()),
    )
    return EXIT_OK


def cmd_treeify(args) -> int:
    vocab = _load_vocab(args.vocab)
    fn = tokenize_raw if args.raw else tokenize_spaced
    seq = fn(args.text, vocab)
    ann = treeify(seq)
    _emit(args, {"parents": list(ann.parents)}, to_tuple_text(ann))
    return EXIT_OK


def cmd_complexity(args) -> int:
    vocab = _load_vocab(args.vocab)
    fn = tokenize_raw if args.raw else tokenize_spaced
    seq = fn(args.text, vocab)
    c = sequence_complexity(seq)
    _emit(args, {"complexity": c}, str(c))
    return EXIT_OK


def cmd_gen(args) -> int:
    config = corpus_mod.GrammarConfig(
        max_depth=args.max_depth,
        max_baseline=args.max_baseline,
        allow_bare_groups=args.allow_bare_groups,
        seed=args.seed,
    )
    records = corpus_mod.generate(config, args.n)
    corpus_mod.write_jsonl(args.out, records)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    vocab = _load_vocab(args.vocab) if args.check_vocab else None
    records = corpus_mod.ingest_dir(args.dir, normalize=args.normalize, vocab=vocab)
    corpus_mod.write_jsonl(args.out, records)
    print(f"ingested {len(records)} files from {args.dir} into {args.out}")
    return EXIT_OK


def _model_config_from_args(args, vocab_size: int) -> ModelConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            base = json.load(fh)
        base["vocab_size"] = vocab_size
        return ModelConfig.from_dict(base)
    return ModelConfig.toy(
        vocab_size=vocab_size,
        d_model=args.d_model,
        heads=args.heads,
        d_ff=args.d_ff,
        decoder_layers=args.layers,
        relation_layers=args.relation_layers,
        max_len=args.max_len,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )


def cmd_train(args) -> int:
    records = corpus_mod.read_jsonl(args.corpus)
    if args.derive_vocab:
        vocab = corpus_mod.derive_vocab(records)
    else:
        vocab = _load_vocab(args.vocab)
    model_config = _model_config_from_args(args, len(vocab))
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        lambda_struct=args.lambda_struct,
        seed=args.seed,
    )

    def progress(stats):
        print(
            f"epoch {stats.epoch:3d}  L_seq {stats.l_seq:.4f}  "
            f"L_struct {stats.l_struct:.4f}  tok {stats.token_acc:.3f}  "
            f"par {stats.parent_acc:.3f}"
        )

    train_model(
        records,
        vocab,
        model_config,
        train_config,
        log_path=args.log,
        checkpoint_path=args.out,
        progress=progress if not args.quiet else None,
    )
    print(f"checkpoint: {args.out}" + (f"  log: {args.log}" if args.log else ""))
    return EXIT_OK


def _load_model(path) -> tuple[JointModel, Vocab]:
    model, meta = JointModel.load(path)
    if "vocab" not in meta:
        raise ValueError(f"{path}: checkpoint carries no vocabulary")
    return model, Vocab(meta["vocab"])


def cmd_decode(args) -> int:
    model, vocab = _load_model(args.checkpoint)
    records = corpus_mod.read_jsonl(args.corpus)
    if args.limit:
        records = records[: args.limit]
    id_seqs, _ = records_to_ids(records, vocab)
    preds, results = decode_corpus(
        model,
        vocab,
        id_seqs,
        seed=args.seed,
        beam_width=args.beam_width,
        max_len=args.max_len or model.config.max_len,
        lambda_rerank=args.lambda_rerank,
    )
    out = []
    for record, result in zip(records, results):
        entry = {
            "id": record.id,
            "selected": result.selected,
            "prediction": [vocab.token(i) for i in result.best.tokens],
            "candidates": [
                {
                    "tokens": [vocab.token(i) for i in h.tokens],
                    "seq_score": result.seq_scores[k],
                    "struct_score": result.struct_scores[k],
                    "composite": result.composite[k],
                }
                for k, h in enumerate(result.candidates)
            ],
        }
        out.append(entry)
        if not args.json:
            print(f"== {record.id}")
            for k, cand in enumerate(entry["candidates"]):
                marker = "*" if k == result.selected else " "
                print(
                    f" {marker} seq {cand['seq_score']:+.4f}  "
                    f"struct {cand['struct_score']:+.4f}  "
                    f"composite {cand['composite']:+.4f}  "
                    + " ".join(cand["tokens"])
                )
    if args.json:
        print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def _run_eval_arm(model, vocab, records, args, lambda_rerank):
    id_seqs, _ = records_to_ids(records, vocab)
    preds, _ = decode_corpus(
        model,
        vocab,
        id_seqs,
        seed=args.seed,
        beam_width=args.beam_width,
        max_len=args.max_len or model.config.max_len,
        lambda_rerank=lambda_rerank,
    )
    pred_seqs = [TokenSeq(p, vocab) for p in preds]
    ref_seqs = [TokenSeq(tuple(ids), vocab) for ids in id_seqs]
    pred_parents = teacher_forced_parent_predictions(model, vocab, records, args.seed)
    from .treebank import ParentAnnotation

    pred_annotations = [ParentAnnotation(tuple(int(x) for x in p)) for p in pred_parents]
    gold_annotations = [r.annotation() for r in records]
    return metrics_mod.evaluate(pred_seqs, ref_seqs, pred_annotations, gold_annotations)


def _delta_csv(on: metrics_mod.EvalReport, off: metrics_mod.EvalReport) -> str:
    import csv as _csv
    import io as _io

    buf = _io.StringIO()
    writer = _csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "complexity", "n",
            "exprate_off", "exprate_on", "exprate_delta",
            "bracket_acc_off", "bracket_acc_on", "bracket_acc_delta",
        ]
    )
    keys = sorted(
        set(on.buckets) | set(off.buckets),
        key=lambda k: 5 if k == "5+" else int(k),
    )
    empty = metrics_mod.BucketStats()
    for key in keys:
        b_on = on.buckets.get(key, empty)
        b_off = off.buckets.get(key, empty)
        writer.writerow(
            [
                key, b_off.n or b_on.n,
                f"{b_off.exprate:.2f}", f"{b_on.exprate:.2f}",
                f"{b_on.exprate - b_off.exprate:.2f}",
                f"{b_off.bracket_acc:.2f}", f"{b_on.bracket_acc:.2f}",
                f"{b_on.bracket_acc - b_off.bracket_acc:.2f}",
            ]
        )
    writer.writerow(
        [
            "TOTAL", off.n,
            f"{off.exprate:.2f}", f"{on.exprate:.2f}",
            f"{on.exprate - off.exprate:.2f}",
            f"{off.bracket_accuracy:.2f}", f"{on.bracket_accuracy:.2f}",
            f"{on.bracket_accuracy - off.bracket_accuracy:.2f}",
        ]
    )
    return buf.getvalue()


def cmd_eval(args) -> int:
    model, vocab = _load_model(args.checkpoint)
    records = corpus_mod.read_jsonl(args.corpus)
    if args.limit:
        records = records[: args.limit]
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)

    report_on = _run_eval_arm(model, vocab, records, args, args.lambda_rerank)
    if args.compare:
        report_off = _run_eval_arm(model, vocab, records, args, 0.0)
        for tag, rep in (("on", report_on), ("off", report_off)):
            (prefix.parent / f"{prefix.name}_{tag}.json").write_text(rep.to_json() + "\n")
            (prefix.parent / f"{prefix.name}_{tag}.csv").write_text(rep.to_csv())
        delta = _delta_csv(report_on, report_off)
        (prefix.parent / f"{prefix.name}_delta.csv").write_text(delta)
        if not args.json:
            print(delta, end="")
        else:
            print(
                json.dumps(
                    {"on": report_on.to_dict(), "off": report_off.to_dict()},
                    sort_keys=True,
                )
            )
    else:
        (prefix.parent / f"{prefix.name}.json").write_text(report_on.to_json() + "\n")
        (prefix.parent / f"{prefix.name}.csv").write_text(report_on.to_csv())
        if args.json:
            print(json.dumps(report_on.to_dict(), sort_keys=True))
        else:
            print(report_on.to_csv(), end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    t0 = time.perf_counter()
    report = check_primitives(seed=args.seed, eps=args.eps, tol=args.tol)
    lines = report.lines()
    payload = {
        "primitives_passed": report.passed,
        "worst_rel_err": report.worst,
    }
    ok = report.passed
    if not args.ops_only:
        from .modelcheck import full_model_case

        params, f = full_model_case(seed=args.seed)
        model_report = gradcheck(f, params, eps=args.eps, tol=args.model_tol)
        lines += [""] + model_report.lines()
        payload["model_passed"] = model_report.passed
        payload["model_worst_rel_err"] = model_report.worst
        ok = ok and model_report.passed
    payload["elapsed_s"] = time.perf_counter() - t0
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print("\n".join(lines))
        print(f"elapsed: {payload['elapsed_s']:.1f}s")
    return EXIT_OK if ok else EXIT_CHECK


# -- wiring --------------------------------------------------------------


def _text_flags(sub):
    sub.add_argument("text")
    sub.add_argument("--raw", action="store_true", help="scan unspaced input")
    sub.add_argument("--vocab", default=None, help="vocabulary file (default: packaged)")
    sub.add_argument("--json", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treetex")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("tokenize", help="tokenize a LaTeX string")
    _text_flags(p)
    p.set_defaults(fn=cmd_tokenize)

    p = subs.add_parser("treeify", help="print the (child, parent) tuples")
    _text_flags(p)
    p.set_defaults(fn=cmd_treeify)

    p = subs.add_parser("complexity", help="structural complexity of an expression")
    _text_flags(p)
    p.set_defaults(fn=cmd_complexity)

    p = subs.add_parser("gen", help="generate a synthetic annotated corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--max-depth", type=int, default=2)
    p.add_argument("--max-baseline", type=int, default=6)
    p.add_argument("--allow-bare-groups", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen)

    p = subs.add_parser("ingest", help="ingest InkML files into JSONL")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--normalize", action="store_true", help="apply \\lt/\\gt mapping")
    p.add_argument("--check-vocab", action="store_true")
    p.add_argument("--vocab", default=None)
    p.set_defaults(fn=cmd_ingest)

    p = subs.add_parser("train", help="train the joint model on a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default=None, help="CSV training log path")
    p.add_argument("--config", default=None, help="model config JSON")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--lambda-struct", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=128)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--relation-layers", type=int, default=1)
    p.add_argument("--max-len", type=int, default=48)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--vocab", default=None)
    p.add_argument("--derive-vocab", action="store_true", help="build the vocabulary from the corpus")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = subs.add_parser("decode", help="beam search + tree-score reranking")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--beam-width", type=int, default=4)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--lambda-rerank", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_decode)

    p = subs.add_parser("eval", help="decode an eval corpus and report metrics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--beam-width", type=int, default=4)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--lambda-rerank", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--compare", action="store_true", help="also run with tree scoring off")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_eval)

    p = subs.add_parser("gradcheck", help="finite-difference check of gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--model-tol", type=float, default=1e-4)
    p.add_argument("--ops-only", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except DATA_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
