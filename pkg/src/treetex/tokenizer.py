"""Tokenization of LaTeX math strings into id sequences."""

from __future__ import annotations

from .vocab import TokenSeq, UnknownTokenError, Vocab


def tokenize_spaced(text: str, vocab: Vocab) -> TokenSeq:
    """Tokenize whitespace-separated input (CROHME label convention).

    One token per whitespace-delimited chunk. Raises UnknownTokenError
    if a chunk is not in the vocabulary.
    """
    return TokenSeq.from_tokens(text.split(), vocab)


def tokenize_raw(text: str, vocab: Vocab) -> TokenSeq:
    """Tokenize raw LaTeX without guaranteed spacing.

    Longest-match scan: a backslash followed by a maximal alphabetic run
    is one token (a backslash escaping a single non-alphabetic character,
    e.g. "\\{", is also one token); every other non-space character is
    its own token.
    """
    chunks: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "\\":
            j = i + 1
            while j < n and text[j].isalpha():
                j += 1
            if j == i + 1 and j < n:
                j += 1  # escaped symbol such as \{ or \}
            chunks.append(text[i:j])
            i = j
        else:
            chunks.append(ch)
            i += 1
    return TokenSeq.from_tokens(chunks, vocab)


def detokenize(seq: TokenSeq) -> str:
    """Join tokens with single spaces. Inverse of tokenize_spaced."""
    return " ".join(seq.tokens())
