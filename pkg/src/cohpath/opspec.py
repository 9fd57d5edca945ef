"""Plain-text grammar for polynomial operators.

A spec is a list of terms separated by ``|`` or newlines; ``#`` starts a
comment.  Each term is a coefficient, a colon, and one ``m,n`` ladder-power
pair per mode (semicolon-separated, mode order):

    # hbar = 1: oscillator on mode 1 of a two-mode space
    1.0 : 0,0 ; 1,1
    0.5 : 0,0 ; 0,0

means ``1.0 * adag_1 a_1 + 0.5``.  Coefficients are Python complex
literals (``-0.5``, ``2j``, ``(1+0.25j)``); whitespace is ignored
everywhere.  ``parse_operator`` and ``serialize_operator`` round-trip
exactly: coefficients are written back with ``repr`` precision.
"""

from __future__ import annotations

import re

from .errors import OperatorFormatError
from .operators import PolynomialOperator

__all__ = ["parse_operator", "serialize_operator"]

_PAIR_RE = re.compile(r"^(\d+),(\d+)$")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("#", 1)[0] for line in text.splitlines())


def _parse_coeff(raw: str, where: str) -> complex:
    packed = "".join(raw.split())
    if not packed:
        raise OperatorFormatError(f"{where}: empty coefficient")
    try:
        return complex(packed)
    except ValueError:
        raise OperatorFormatError(
            f"{where}: {raw.strip()!r} is not a complex literal"
        ) from None


def _parse_pairs(raw: str, where: str):
    pairs = []
    for k, chunk in enumerate(raw.split(";")):
        packed = "".join(chunk.split())
        m = _PAIR_RE.match(packed)
        if m is None:
            raise OperatorFormatError(
                f"{where}, mode {k}: {chunk.strip()!r} is not an 'm,n' power pair"
            )
        pairs.append((int(m.group(1)), int(m.group(2))))
    return tuple(pairs)


def parse_operator(text: str, n_modes: int | None = None) -> PolynomialOperator:
    """Parse the term grammar above into a :class:`PolynomialOperator`.

    ``n_modes`` pins the expected mode count; when omitted it is inferred
    from the first term.  Errors name the offending term (1-based, in
    textual order) and the fragment that failed.
    """
    chunks = []
    for line in _strip_comments(text).split("\n"):
        chunks.extend(line.split("|"))
    terms = {}
    index = 0
    for chunk in chunks:
        if not chunk.strip():
            continue
        index += 1
        where = f"term {index}"
        head, sep, tail = chunk.partition(":")
        if not sep:
            raise OperatorFormatError(
                f"{where}: expected 'coeff : m,n ; ...', got {chunk.strip()!r}"
            )
        coeff = _parse_coeff(head, where)
        key = _parse_pairs(tail, where)
        if n_modes is None:
            n_modes = len(key)
        elif len(key) != n_modes:
            raise OperatorFormatError(
                f"{where}: {len(key)} power pairs, expected one per mode ({n_modes})"
            )
        terms[key] = terms.get(key, 0) + coeff
    if index == 0:
        raise OperatorFormatError("operator spec contains no terms")
    return PolynomialOperator(n_modes, terms)


def _format_coeff(c: complex) -> str:
    if c.imag == 0.0:
        return repr(c.real)
    if c.real == 0.0:
        return repr(c.imag) + "j"
    return repr(c)


def serialize_operator(op: PolynomialOperator) -> str:
    """Canonical text for ``op``: one term per line, keys sorted."""
    lines = []
    for key in sorted(op.terms):
        pairs = " ; ".join(f"{m},{n}" for m, n in key)
        lines.append(f"{_format_coeff(op.terms[key])} : {pairs}")
    return "\n".join(lines)
