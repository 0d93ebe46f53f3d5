"""Compile CRS ``@rx`` patterns with PCRE-like semantics on top of ``regex``.

ModSecurity compiles every ``@rx`` argument as a byte pattern with
``PCRE_DOTALL | PCRE_DOLLAR_ENDONLY`` and no UTF mode.  We reproduce that by
matching latin-1 strings (one character per byte) and by re-encoding
non-ASCII pattern text to its UTF-8 bytes before compiling.

The ``regex`` package already understands possessive quantifiers, atomic
groups, backreferences, ``\\h``/``\\v`` and POSIX bracket classes.  The
constructs it reads differently from PCRE are listed in :data:`REWRITES`
and rewritten before compilation.  Rules whose pattern still fails to
compile can be given a replacement pattern by rule id (see the
``rx_overrides`` argument of :func:`crs_learn.seclang.parse_ruleset`).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import regex

FLAGS = regex.DOTALL | regex.VERSION0


@dataclass(frozen=True)
class Rewrite:
    construct: str
    replacement: str
    reason: str
    in_class: bool


REWRITES = (
    Rewrite(r"\x{H...}", r"\xHH / \uHHHH", "braced hex escapes are PCRE syntax", True),
    Rewrite(r"\Q...\E", "escaped literal", "literal quoting is PCRE syntax", False),
    Rewrite(r"\z", r"\Z", "absolute end of subject", False),
    Rewrite(r"\Z", r"(?=\n?\Z)", "PCRE \\Z also matches before a final newline", False),
    Rewrite("$", r"\Z", "PCRE_DOLLAR_ENDONLY", False),
)


def to_bytes_text(text: str) -> str:
    """Map text to its UTF-8 bytes, one latin-1 character per byte."""
    return text.encode("utf-8").decode("latin-1")


def _hex_escape(code: int) -> str:
    if code <= 0xFF:
        return f"\\x{code:02x}"
    if code <= 0xFFFF:
        return f"\\u{code:04x}"
    return f"\\U{code:08x}"


def rewrite_pattern(pattern: str) -> str:
    """Apply the :data:`REWRITES` table to a PCRE pattern."""
    out = []
    i, n = 0, len(pattern)
    in_class = False
    while i < n:
        c = pattern[i]
        if c == "\\" and i + 1 < n:
            nxt = pattern[i + 1]
            if nxt == "x" and i + 2 < n and pattern[i + 2] == "{":
                end = pattern.find("}", i + 3)
                if end != -1:
                    out.append(_hex_escape(int(pattern[i + 3:end] or "0", 16)))
                    i = end + 1
                    continue
            if not in_class:
                if nxt == "Q":
                    end = pattern.find("\\E", i + 2)
                    literal = pattern[i + 2:] if end == -1 else pattern[i + 2:end]
                    out.append(regex.escape(literal))
                    i = n if end == -1 else end + 2
                    continue
                if nxt == "z":
                    out.append("\\Z")
                    i += 2
                    continue
                if nxt == "Z":
                    out.append("(?=\\n?\\Z)")
                    i += 2
                    continue
            out.append(pattern[i:i + 2])
            i += 2
            continue
        if in_class:
            if c == "]":
                in_class = False
            elif c == "[" and pattern.startswith("[:", i):
                end = pattern.find(":]", i + 2)
                if end != -1:
                    out.append(pattern[i:end + 2])
                    i = end + 2
                    continue
            out.append(c)
            i += 1
            continue
        if c == "[":
            in_class = True
            out.append(c)
            i += 1
            # a leading ']' (optionally after '^') is a literal member
            if i < n and pattern[i] == "^":
                out.append("^")
                i += 1
            if i < n and pattern[i] == "]":
                out.append("]")
                i += 1
            continue
        if c == "$":
            out.append("\\Z")
            i += 1
            continue
        out.append(c)
        i += 1
    return "".join(out)


@lru_cache(maxsize=4096)
def compile_rx(pattern: str):
    """Compile an ``@rx`` argument; raises ``regex.error`` when it is invalid."""
    return regex.compile(rewrite_pattern(to_bytes_text(pattern)), FLAGS)
