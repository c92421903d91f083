"""Token vocabulary for LaTeX math expressions.

A vocabulary is an ordered list of token strings with three reserved
control tokens (PAD, SOS, EOS) occupying ids 0..2. All other ids follow
file order: the token on line k of a vocabulary file gets id k + 3.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

PAD_TOKEN = "<pad>"
SOS_TOKEN = "<sos>"
EOS_TOKEN = "<eos>"
RESERVED_TOKENS = (PAD_TOKEN, SOS_TOKEN, EOS_TOKEN)

#: The four layout-control tokens. They never become tree nodes.
STRUCTURAL_TOKENS = ("{", "}", "^", "_")

_DEFAULT_ASSET = "crohme_symbols.txt"


class TokenClass(Enum):
    STRUCTURAL = "structural"
    COMMAND = "command"
    SYMBOL = "symbol"


def classify(token: str) -> TokenClass:
    """Classify a token string. Depends on the string alone."""
    if token in STRUCTURAL_TOKENS:
        return TokenClass.STRUCTURAL
    if token.startswith("\\"):
        return TokenClass.COMMAND
    return TokenClass.SYMBOL


class UnknownTokenError(ValueError):
    """A chunk of input text is not present in the vocabulary."""

    def __init__(self, chunk: str, position: int):
        super().__init__(f"unknown token {chunk!r} at position {position}")
        self.chunk = chunk
        self.position = position


class Vocab:
    """Immutable token-string <-> id mapping with reserved PAD/SOS/EOS."""

    def __init__(self, tokens: Iterable[str]):
        symbols = list(RESERVED_TOKENS) + list(tokens)
        seen = set()
        for tok in symbols:
            if not tok or tok != tok.strip() or any(c.isspace() for c in tok):
                raise ValueError(f"invalid vocabulary token {tok!r}")
            if tok in seen:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            seen.add(tok)
        self._symbols = tuple(symbols)
        self._ids = {tok: i for i, tok in enumerate(symbols)}

    # -- construction -------------------------------------------------

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocab":
        """Load a UTF-8 vocabulary file, one token per line."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)

    @classmethod
    def default(cls) -> "Vocab":
        """The packaged CROHME-style symbol set (100+ tokens)."""
        text = (
            resources.files("treetex.assets")
            .joinpath(_DEFAULT_ASSET)
            .read_text(encoding="utf-8")
        )
        return cls(text.splitlines())

    # -- lookup -------------------------------------------------------

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def sos_id(self) -> int:
        return 1

    @property
    def eos_id(self) -> int:
        return 2

    @property
    def symbols(self) -> tuple[str, ...]:
        return self._symbols

    def __len__(self) -> int:
        return len(self._symbols)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise UnknownTokenError(token, -1) from None

    def lookup(self, token: str) -> int | None:
        return self._ids.get(token)

    def token(self, token_id: int) -> str:
        return self._symbols[token_id]

    def token_class(self, token_id: int) -> TokenClass:
        return classify(self._symbols[token_id])

    def structural_ids(self) -> frozenset[int]:
        return frozenset(
            self._ids[t] for t in STRUCTURAL_TOKENS if t in self._ids
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self._symbols == other._symbols

    def __hash__(self) -> int:
        return hash(self._symbols)

    def __repr__(self) -> str:
        return f"Vocab({len(self)} tokens)"

    def save(self, path: str | Path) -> None:
        """Write the non-reserved tokens back out, one per line."""
        body = "\n".join(self._symbols[len(RESERVED_TOKENS):])
        Path(path).write_text(body + "\n", encoding="utf-8")


@dataclass(frozen=True)
class TokenSeq:
    """A validated sequence of token ids bound to a vocabulary.

    Position i in the sequence is the node identifier i used by the
    tree annotation. SOS/EOS framing is not included unless a caller
    adds it explicitly.
    """

    ids: tuple[int, ...]
    vocab: Vocab

    def __post_init__(self):
        v = len(self.vocab)
        for i in self.ids:
            if not 0 <= i < v:
                raise ValueError(f"token id {i} out of range for V={v}")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[int]:
        return iter(self.ids)

    def __getitem__(self, i: int) -> int:
        return self.ids[i]

    def tokens(self) -> tuple[str, ...]:
        return tuple(self.vocab.token(i) for i in self.ids)

    @classmethod
    def from_tokens(cls, tokens: Iterable[str], vocab: Vocab) -> "TokenSeq":
        ids = []
        for pos, tok in enumerate(tokens):
            tid = vocab.lookup(tok)
            if tid is None:
                raise UnknownTokenError(tok, pos)
            ids.append(tid)
        return cls(tuple(ids), vocab)
