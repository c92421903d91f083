"""Expression-tree annotation of LaTeX token sequences.

Every token position is annotated with the position of its parent node,
or NO_PARENT (-1) when it has none. Layout-control tokens ("{", "}",
"^", "_") never carry a parent and never act as attachment points.

Conversion rules:

  R1  Baseline chain: a non-structural token attaches to the current
      attachment point and then becomes the attachment point. The first
      token of an expression has no parent.
  R2  Structural tokens always get NO_PARENT.
  R3  Scripts: for a base b followed by "^" or "_", the first tree node
      of the script argument has parent b; the chain continues inside;
      when the argument closes the attachment point reverts to b. A base
      may carry both a subscript and a superscript.
  R4  Argument commands: "\\frac" takes two arguments, "\\sqrt" one plus
      an optional leading "[ ... ]" index whose brackets are treated as
      structural for that occurrence. The command token itself follows
      R1; the first tree node of each argument has the command as
      parent; afterwards the attachment point is the command token.
      Any other command consumes the brace groups that immediately
      follow it (zero or more) the same way. This keeps the conversion
      total over the full symbol set and is deliberately approximate
      for exotic commands.
  R5  Bare brace groups are transparent: the chain continues through
      them, and after a group closes the attachment point is the last
      tree node inside it (or the prior attachment point if empty).

A script applied to a brace group ("{ a b } ^ { 2 }") uses the last
tree node of the group as its base, which is what R5 transparency
leaves as the attachment point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .vocab import STRUCTURAL_TOKENS, TokenSeq, classify, TokenClass

NO_PARENT = -1

_SCRIPTS = ("^", "_")
_OPEN, _CLOSE = "{", "}"


class UnbalancedBracesError(ValueError):
    def __init__(self, position: int):
        super().__init__(f"unbalanced braces at token position {position}")
        self.position = position


class DanglingScriptError(ValueError):
    def __init__(self, position: int):
        super().__init__(f"script token at position {position} has no argument")
        self.position = position


class CycleError(ValueError):
    """Defensive: a parent annotation that does not point backwards."""


@dataclass(frozen=True)
class ParentAnnotation:
    """Per-position parent indices; -1 encodes the absence of a parent.

    Parents strictly precede their children in reading order, which
    also guarantees acyclicity.
    """

    parents: tuple[int, ...]

    def __post_init__(self):
        for i, p in enumerate(self.parents):
            if p != NO_PARENT and not 0 <= p < i:
                raise ValueError(
                    f"parent {p} of position {i} must be NO_PARENT or precede it"
                )

    def __len__(self) -> int:
        return len(self.parents)

    def __iter__(self):
        return iter(self.parents)

    def __getitem__(self, i: int) -> int:
        return self.parents[i]


@dataclass(frozen=True)
class ExprTree:
    """Explicit rooted forest over tree-node positions."""

    nodes: tuple[int, ...]
    children: dict[int, tuple[int, ...]] = field(compare=False)
    roots: tuple[int, ...] = ()

    def child_list(self, node: int) -> tuple[int, ...]:
        return self.children.get(node, ())


def to_tuple_text(ann: ParentAnnotation) -> str:
    """Render an annotation as "(child, parent)" tuples, e.g.
    "(0, -1), (1, -1), (2, -1), (3, 0)"."""
    return ", ".join(f"({i}, {p})" for i, p in enumerate(ann.parents))


def brackets_balanced(seq: TokenSeq) -> bool:
    """True iff the "{" / "}" tokens nest correctly (stack scan)."""
    depth = 0
    for tok in seq.tokens():
        if tok == _OPEN:
            depth += 1
        elif tok == _CLOSE:
            depth -= 1
            if depth < 0:
                return False
    return depth == 0


def treeify(seq: TokenSeq) -> ParentAnnotation:
    """Annotate a token sequence with parent positions (rules R1-R5)."""
    return treeify_tokens(list(seq.tokens()))


def treeify_tokens(toks: list[str]) -> ParentAnnotation:
    """treeify over raw token strings (no vocabulary binding needed)."""
    match = _match_braces(toks)
    parents = [NO_PARENT] * len(toks)
    _parse_span(toks, 0, len(toks), None, parents, match, limit=None)
    return ParentAnnotation(tuple(parents))


def _match_braces(toks: list[str]) -> dict[int, int]:
    stack: list[int] = []
    match: dict[int, int] = {}
    for i, tok in enumerate(toks):
        if tok == _OPEN:
            stack.append(i)
        elif tok == _CLOSE:
            if not stack:
                raise UnbalancedBracesError(i)
            match[stack.pop()] = i
    if stack:
        raise UnbalancedBracesError(stack[0])
    return match


def _parse_span(
    toks: list[str],
    i: int,
    hi: int,
    attach: int | None,
    parents: list[int],
    match: dict[int, int],
    limit: int | None,
) -> tuple[int, int | None]:
    """Parse toks[i:hi) as a baseline run starting from `attach`.

    `limit` bounds the number of units consumed (None = run to hi);
    scripts extend the preceding unit and do not count. Returns the
    next index and the final attachment point.
    """
    units = 0
    while i < hi:
        tok = toks[i]
        if tok in _SCRIPTS:
            if i + 1 >= hi:
                raise DanglingScriptError(i)
            base = attach
            i, _ = _parse_span(toks, i + 1, hi, base, parents, match, limit=1)
            attach = base
            continue
        if limit is not None and units >= limit:
            break
        if tok == _OPEN:
            close = match[i]
            _, inner = _parse_span(toks, i + 1, close, attach, parents, match, None)
            attach = inner  # R5: transparent group
            i = close + 1
        elif tok == _CLOSE:
            raise UnbalancedBracesError(i)  # unreachable when match is complete
        elif tok == "\\frac":
            i, attach = _parse_command(toks, i, hi, attach, parents, match, args=2)
        elif tok == "\\sqrt":
            i, attach = _parse_sqrt(toks, i, hi, attach, parents, match)
        elif classify(tok) is TokenClass.COMMAND:
            i, attach = _parse_generic_command(toks, i, hi, attach, parents, match)
        else:
            parents[i] = attach if attach is not None else NO_PARENT
            attach = i
            i += 1
        units += 1
    return i, attach


def _attach_command(toks, i, attach, parents) -> int:
    parents[i] = attach if attach is not None else NO_PARENT
    return i


def _arg_start(tok: str) -> bool:
    return tok not in _SCRIPTS and tok != _CLOSE


def _parse_command(toks, i, hi, attach, parents, match, args: int):
    cmd = _attach_command(toks, i, attach, parents)
    i += 1
    for _ in range(args):
        if i < hi and _arg_start(toks[i]):
            i, _ = _parse_span(toks, i, hi, cmd, parents, match, limit=1)
        else:
            break
    return i, cmd


def _parse_sqrt(toks, i, hi, attach, parents, match):
    cmd = _attach_command(toks, i, attach, parents)
    i += 1
    if i < hi and toks[i] == "[":
        close = _find_index_close(toks, i, hi)
        if close is not None:
            # index brackets are structural for this occurrence
            _parse_span(toks, i + 1, close, cmd, parents, match, None)
            i = close + 1
    if i < hi and _arg_start(toks[i]):
        i, _ = _parse_span(toks, i, hi, cmd, parents, match, limit=1)
    return i, cmd


def _find_index_close(toks, i, hi) -> int | None:
    depth = 0
    for k in range(i, hi):
        if toks[k] == "[":
            depth += 1
        elif toks[k] == "]":
            depth -= 1
            if depth == 0:
                return k
    return None


def _parse_generic_command(toks, i, hi, attach, parents, match):
    cmd = _attach_command(toks, i, attach, parents)
    i += 1
    while i < hi and toks[i] == _OPEN:
        close = match[i]
        _parse_span(toks, i + 1, close, cmd, parents, match, None)
        i = close + 1
    return i, cmd


def build_tree(ann: ParentAnnotation) -> ExprTree:
    """Invert a parent annotation into an explicit forest.

    Positions participate when they are a child or a parent of someone;
    parentless positions attached to nothing (structural tokens) are
    left out. A length-1 annotation is taken to be a single-symbol
    expression and yields one root.
    """
    parents = ann.parents
    for i, p in enumerate(parents):
        if p != NO_PARENT and p >= i:
            raise CycleError(f"parent {p} of {i} does not precede it")
    node_set = {i for i, p in enumerate(parents) if p != NO_PARENT}
    node_set |= {p for p in parents if p != NO_PARENT}
    if len(parents) == 1 and parents[0] == NO_PARENT:
        node_set = {0}
    nodes = tuple(sorted(node_set))
    children: dict[int, list[int]] = {}
    for i in nodes:
        p = parents[i]
        if p != NO_PARENT:
            children.setdefault(p, []).append(i)
    roots = tuple(i for i in nodes if parents[i] == NO_PARENT)
    return ExprTree(
        nodes=nodes,
        children={p: tuple(sorted(c)) for p, c in children.items()},
        roots=roots,
    )


def structural_complexity(tree: ExprTree) -> int:
    """Maximum, over all root-to-leaf paths, of the number of nodes on
    the path that have more than one child. Empty forest scores 0."""
    best = 0
    for root in tree.roots:
        stack = [(root, 0)]
        while stack:
            node, count = stack.pop()
            kids = tree.child_list(node)
            count += 1 if len(kids) > 1 else 0
            if not kids:
                best = max(best, count)
            else:
                for k in kids:
                    stack.append((k, count))
    return best


def sequence_complexity(seq: TokenSeq) -> int:
    """Structural complexity of a token sequence (treeify + walk)."""
    return structural_complexity(build_tree(treeify(seq)))
