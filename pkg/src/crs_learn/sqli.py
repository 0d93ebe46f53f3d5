"""Heuristic SQL injection detector standing in for ``@detectSQLi``.

The value is tokenized three times: as-is, as if it started inside a
single-quoted string, and as if it started inside a double-quoted string.
Each pass yields a fingerprint, the token classes of the first five tokens:

====  ===========================================
s     string literal
1     number
n     bare word / identifier
v     ``@var`` / ``@@var``
f     function name (word followed by ``(``)
k     other SQL keyword (FROM, WHERE, ...)
E     statement keyword (SELECT, DROP, ...)
U     UNION / INTERSECT / EXCEPT
B     ORDER BY / GROUP BY / HAVING
&     logical operator
o     other operator
c     comment
( ) , ;  punctuation
====  ===========================================

A value is flagged when some fingerprint matches one of
:data:`SUSPICIOUS_FINGERPRINTS` (every pattern needs at least three tokens).
This is not libinjection: there is no fingerprint whitelist.  Callers that
need libinjection verdicts can install another detector with
:func:`set_detector`.
"""

from __future__ import annotations

import re
from contextlib import contextmanager
from typing import Callable, NamedTuple, Optional

LOGIC = {"AND", "OR", "XOR", "&&", "||"}
UNION = {"UNION", "INTERSECT", "EXCEPT", "MINUS"}
STATEMENT = {
    "SELECT", "INSERT", "UPDATE", "DELETE", "DROP", "EXEC", "EXECUTE",
    "DECLARE", "SHUTDOWN", "TRUNCATE", "ALTER", "CREATE", "REPLACE",
}
WORD_OPERATORS = {"LIKE", "RLIKE", "REGEXP", "SOUNDS", "DIV", "MOD", "IS", "IN", "NOT"}
KEYWORDS = {
    "FROM", "WHERE", "INTO", "VALUES", "TABLE", "AS", "NULL", "CASE", "WHEN",
    "THEN", "ELSE", "END", "BETWEEN", "LIMIT", "OFFSET", "WAITFOR", "DELAY",
    "ALL", "DISTINCT", "TOP", "SET", "PROCEDURE", "ANALYSE", "ESCAPE",
}
GROUPING = {"ORDER", "GROUP"}

_OPS = ("<=>", "<>", "!=", ">=", "<=", ":=", "==", "&&", "||", "<<", ">>")
_OP_CHARS = set("=<>!+-*/%^|&~:?.\\")
_WS = set(" \t\n\r\f\v\xa0\x00")
_NUMBER = re.compile(
    r"0[xX][0-9a-fA-F]+|0[bB][01]+|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
)
_WORD = re.compile(r"[A-Za-z_$\x80-\xff][A-Za-z0-9_$.\x80-\xff]*")

SUSPICIOUS_FINGERPRINTS = tuple(re.compile(p) for p in (
    # break out of a quoted value, then extend the condition
    r"^s\)*&[(]*[s1nvf]",
    r"^s\)*o[s1v]",
    r"^s\)*U",
    r"^s\)*;[EU]",
    r"^s\)*B",
    # unquoted numeric / identifier context
    r"^[1nv]\)*U[E(]",
    r"^[1nv]\)*;E",
    r"^[1nv]\)*&[(]*[1s]o[(]*[1s]",
    r"^[1nv]\)*&f\(",
    r"^[1nv]\)+&",
    r"^[1ns]of\(",
    r"^E[1nfv]k",
    r"^E[1nv](?:,[1nv])+k",
    r"^\(E",
))


class Token(NamedTuple):
    kind: str
    value: str


def _classify_word(word: str, nxt: str) -> str:
    up = word.upper()
    if up in LOGIC:
        return "&"
    if up in UNION:
        return "U"
    if up in STATEMENT:
        return "E"
    if up in WORD_OPERATORS:
        return "o"
    if up in GROUPING or up == "HAVING":
        return "B"
    if up in KEYWORDS:
        return "k"
    if nxt == "(":
        return "f"
    return "n"


def _read_string(s: str, i: int, quote: str) -> int:
    """Index just past the closing quote starting at ``i`` (inside the string)."""
    n = len(s)
    while i < n:
        c = s[i]
        if c == "\\" and i + 1 < n:
            i += 2
            continue
        if c == quote:
            if i + 1 < n and s[i + 1] == quote:
                i += 2
                continue
            return i + 1
        i += 1
    return n


def tokenize(s: str, quote: Optional[str] = None, limit: int = 5) -> list[Token]:
    """Tokenize ``s``; with ``quote`` the input is taken to start inside a string."""
    tokens: list[Token] = []
    i, n = 0, len(s)
    if quote is not None:
        end = _read_string(s, 0, quote)
        tokens.append(Token("s", s[:end]))
        i = end
    while i < n and len(tokens) < limit:
        c = s[i]
        if c in _WS:
            i += 1
            continue
        if s.startswith("/*", i):
            end = s.find("*/", i + 2)
            end = n if end == -1 else end + 2
            tok = Token("c", s[i:end])
            if not tokens or tokens[-1].kind != "c":
                tokens.append(tok)
            i = end
            continue
        if s.startswith("--", i) or c == "#":
            tokens.append(Token("c", s[i:]))
            break
        if c in "'\"":
            end = _read_string(s, i + 1, c)
            tokens.append(Token("s", s[i:end]))
            i = end
            continue
        if c == "`":
            end = s.find("`", i + 1)
            end = n if end == -1 else end + 1
            tokens.append(Token("n", s[i:end]))
            i = end
            continue
        if c in "(),;":
            tokens.append(Token(c, c))
            i += 1
            continue
        if c == "@":
            m = _WORD.match(s, i + 2 if s.startswith("@@", i) else i + 1)
            end = m.end() if m else i + 1
            tokens.append(Token("v", s[i:end]))
            i = end
            continue
        m = _NUMBER.match(s, i)
        if m:
            # a sign directly before a number at expression start is unary
            if tokens and tokens[-1].value in ("-", "+") and (
                    len(tokens) == 1 or tokens[-2].kind in "o&(,"):
                tokens.pop()
            tokens.append(Token("1", m.group(0)))
            i = m.end()
            continue
        m = _WORD.match(s, i)
        if m:
            word = m.group(0)
            j = m.end()
            while j < n and s[j] in _WS:
                j += 1
            nxt = s[j] if j < n else ""
            kind = _classify_word(word, nxt)
            if word.upper() in GROUPING:
                by = re.match(r"[ \t\n\r\f\v]+by\b", s[m.end():], re.IGNORECASE)
                if by:
                    j = m.end() + by.end()
                    tokens.append(Token("B", s[i:j]))
                    i = j
                    continue
                kind = "n"
            if kind == "U":
                rest = re.match(r"[ \t\n\r\f\v]+(all|distinct)\b", s[m.end():], re.IGNORECASE)
                if rest:
                    tokens.append(Token("U", s[i:m.end() + rest.end()]))
                    i = m.end() + rest.end()
                    continue
            tokens.append(Token(kind, word))
            i = m.end()
            continue
        for op in _OPS:
            if s.startswith(op, i):
                tokens.append(Token("&" if op in LOGIC else "o", op))
                i += len(op)
                break
        else:
            if c in _OP_CHARS:
                tokens.append(Token("o", c))
            i += 1
    return tokens[:limit]


def fingerprint(s: str, quote: Optional[str] = None) -> str:
    return "".join(t.kind for t in tokenize(s, quote))


def fingerprints(s: str) -> list[str]:
    """Fingerprints for every context the value is tried in."""
    out = [fingerprint(s)]
    for q in ("'", '"'):
        if q in s:
            out.append(fingerprint(s, q))
    return out


def heuristic_detect(value: str) -> bool:
    """Default ``@detectSQLi`` verdict for a (latin-1) string."""
    for fp in fingerprints(value):
        if len(fp) < 3:
            continue
        if any(p.match(fp) for p in SUSPICIOUS_FINGERPRINTS):
            return True
    return False


_detector: Callable[[str], bool] = heuristic_detect


def get_detector() -> Callable[[str], bool]:
    return _detector


def set_detector(fn: Optional[Callable[[str], bool]]) -> None:
    """Install ``fn`` as the ``@detectSQLi`` backend (``None`` restores the default)."""
    global _detector
    _detector = heuristic_detect if fn is None else fn


@contextmanager
def use_detector(fn: Callable[[str], bool]):
    previous = _detector
    set_detector(fn)
    try:
        yield
    finally:
        set_detector(previous)


def detect_sqli(value: str) -> bool:
    return _detector(value)


def libinjection_detector() -> Callable[[str], bool]:
    """Detector backed by the ``libinjection-python`` bindings, if installed."""
    import libinjection

    def detect(value: str) -> bool:
        return bool(libinjection.is_sql_injection(value)["is_sqli"])

    return detect
