"""Synthetic corpora with ground-truth tree annotations, InkML label
and trace ingestion, and JSONL persistence.

JSONL schema, one object per line:

    {"id": ..., "tokens": [...], "parents": [...], "complexity": int}

plus optional "traces" (list of strokes, each a list of [x, y] points)
and "raw" (the untokenized truth string an ingested file carried).
NO_PARENT is serialized as -1.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import stream
from .treebank import (
    ParentAnnotation,
    build_tree,
    structural_complexity,
    treeify_tokens,
)
from .vocab import TokenSeq, Vocab


class JsonlSchemaError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MalformedInkmlError(ValueError):
    pass


class MissingTruthError(ValueError):
    pass


#: Minimal label normalization pairs, applied only on request.
NORMALIZE_MAP = {"\\lt": "<", "\\gt": ">"}

_DEFAULT_ALPHABET = (
    "a", "b", "c", "x", "y", "z",
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "+", "-", "=",
)


@dataclass(frozen=True)
class GrammarConfig:
    """Stochastic grammar over baseline chains with nested constructs."""

    max_depth: int = 2
    max_baseline: int = 6
    arg_baseline: int = 2
    w_script: float = 1.0
    w_frac: float = 1.0
    w_sqrt: float = 0.7
    w_sum: float = 0.5
    construct_prob: float = 0.35
    sqrt_index_prob: float = 0.2
    alphabet: tuple[str, ...] = _DEFAULT_ALPHABET
    allow_bare_groups: bool = False
    seed: int = 0

    def __post_init__(self):
        weights = (self.w_script, self.w_frac, self.w_sqrt, self.w_sum)
        if any(w < 0 for w in weights):
            raise ValueError("construct weights must be non-negative")
        if sum(weights) == 0:
            raise ValueError("construct weights must not all be zero")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not self.alphabet:
            raise ValueError("alphabet must not be empty")


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    tokens: tuple[str, ...]
    parents: tuple[int, ...]
    complexity: int
    traces: tuple | None = None
    raw: str | None = None

    def annotation(self) -> ParentAnnotation:
        return ParentAnnotation(self.parents)


def _annotate(tokens: list[str]) -> tuple[tuple[int, ...], int]:
    ann = treeify_tokens(tokens)
    return ann.parents, structural_complexity(build_tree(ann))


def generate(config: GrammarConfig, n: int) -> list[CorpusRecord]:
    """Sample n annotated expressions; byte-deterministic given the seed."""
    rng = stream(config.seed, "corpus/generate")
    records = []
    for i in range(n):
        tokens = _gen_expr(rng, config, depth=0, max_units=config.max_baseline)
        parents, complexity = _annotate(tokens)
        records.append(
            CorpusRecord(
                id=f"gen{config.seed}-{i:05d}",
                tokens=tuple(tokens),
                parents=parents,
                complexity=complexity,
            )
        )
    return records


def _gen_expr(rng, config: GrammarConfig, depth: int, max_units: int) -> list[str]:
    length = int(rng.integers(1, max_units + 1))
    out: list[str] = []
    for _ in range(length):
        if depth < config.max_depth and rng.random() < config.construct_prob:
            out.extend(_gen_construct(rng, config, depth))
        else:
            out.append(_pick(rng, config.alphabet))
        if (
            config.allow_bare_groups
            and depth < config.max_depth
            and rng.random() < 0.1
        ):
            inner = _gen_expr(rng, config, depth + 1, config.arg_baseline)
            out.extend(["{", *inner, "}"])
    return out


def _gen_construct(rng, config: GrammarConfig, depth: int) -> list[str]:
    weights = np.array([config.w_script, config.w_frac, config.w_sqrt, config.w_sum])
    kind = rng.choice(4, p=weights / weights.sum())
    arg = lambda: _gen_expr(rng, config, depth + 1, config.arg_baseline)
    if kind == 0:
        base = _pick(rng, config.alphabet)
        mark = "^" if rng.random() < 0.5 else "_"
        if rng.random() < 0.25:
            return [base, mark, _pick(rng, config.alphabet)]  # single-token arg
        return [base, mark, "{", *arg(), "}"]
    if kind == 1:
        return ["\\frac", "{", *arg(), "}", "{", *arg(), "}"]
    if kind == 2:
        if rng.random() < config.sqrt_index_prob:
            return ["\\sqrt", "[", *arg(), "]", "{", *arg(), "}"]
        return ["\\sqrt", "{", *arg(), "}"]
    return ["\\sum", "_", "{", *arg(), "}", "^", "{", *arg(), "}"]


def _pick(rng, pool):
    return pool[int(rng.integers(len(pool)))]


def derive_vocab(records: list[CorpusRecord]) -> Vocab:
    """Vocabulary of every token observed, in sorted order."""
    tokens = sorted({t for r in records for t in r.tokens})
    return Vocab(tokens)


# -- JSONL ---------------------------------------------------------------


def write_jsonl(path: str | Path, records: list[CorpusRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj: dict = {
                "id": r.id,
                "tokens": list(r.tokens),
                "parents": list(r.parents),
                "complexity": r.complexity,
            }
            if r.traces is not None:
                obj["traces"] = [[list(pt) for pt in trace] for trace in r.traces]
            if r.raw is not None:
                obj["raw"] = r.raw
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_jsonl(path: str | Path) -> list[CorpusRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise JsonlSchemaError(line_no, f"invalid JSON: {e}") from None
            try:
                tokens = tuple(str(t) for t in obj["tokens"])
                parents = tuple(int(p) for p in obj["parents"])
                if len(parents) != len(tokens):
                    raise ValueError("parents length does not match tokens")
                ParentAnnotation(parents)  # structural validation
                traces = obj.get("traces")
                if traces is not None:
                    traces = tuple(
                        tuple(tuple(float(c) for c in pt) for pt in trace)
                        for trace in traces
                    )
                records.append(
                    CorpusRecord(
                        id=str(obj["id"]),
                        tokens=tokens,
                        parents=parents,
                        complexity=int(obj["complexity"]),
                        traces=traces,
                        raw=obj.get("raw"),
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise JsonlSchemaError(line_no, str(e)) from None
    return records


# -- InkML ---------------------------------------------------------------


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def ingest_inkml(
    path: str | Path, normalize: bool = False, vocab: Vocab | None = None
) -> CorpusRecord:
    """Extract the LaTeX truth label and stroke traces from one InkML file.

    The truth is the first annotation element of type "truth"; dollar
    framing is stripped and the label is split on whitespace. Traces
    become float point lists, keeping the first two coordinates of each
    point. Namespace prefixes are tolerated. When a vocabulary is
    supplied, tokens outside it raise UnknownTokenError.
    """
    path = Path(path)
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as e:
        raise MalformedInkmlError(f"{path}: {e}") from None

    truth = None
    for elem in root.iter():
        if _local_name(elem.tag) == "annotation" and elem.get("type") == "truth":
            truth = (elem.text or "").strip()
            break
    if truth is None:
        raise MissingTruthError(f"{path}: no truth annotation")

    label = truth.strip("$").strip()
    tokens = label.split()
    if normalize:
        tokens = [NORMALIZE_MAP.get(t, t) for t in tokens]
    if vocab is not None:
        TokenSeq.from_tokens(tokens, vocab)  # raises UnknownTokenError

    traces = []
    for elem in root.iter():
        if _local_name(elem.tag) != "trace":
            continue
        points = []
        for chunk in (elem.text or "").split(","):
            coords = chunk.split()
            if len(coords) >= 2:
                points.append((float(coords[0]), float(coords[1])))
        if points:
            traces.append(tuple(points))

    parents, complexity = _annotate(tokens)
    return CorpusRecord(
        id=path.stem,
        tokens=tuple(tokens),
        parents=parents,
        complexity=complexity,
        traces=tuple(traces),
        raw=truth,
    )


def ingest_dir(
    directory: str | Path, normalize: bool = False, vocab: Vocab | None = None
) -> list[CorpusRecord]:
    """Ingest every *.inkml file in a directory, sorted by filename."""
    paths = sorted(Path(directory).glob("*.inkml"))
    return [ingest_inkml(p, normalize=normalize, vocab=vocab) for p in paths]
