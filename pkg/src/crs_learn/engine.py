"""Evaluate parsed rules against payloads.

Every payload is scored as the value of a single query argument ``q``
(see :func:`materialize_context`).  Strings handled here are latin-1 text,
one character per payload byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional, Union
from urllib.parse import quote

from . import pcre, sqli
from .ahocorasick import PhraseMatcher
from .seclang import ChainPart, Operator, Rule, Target
from .transforms import transform, transform_stages

Payload = bytes
PayloadLike = Union[bytes, str]

QUERY_ARG = "q"


def as_payload(value: PayloadLike) -> Payload:
    """Normalize to bytes; text is stored as its UTF-8 encoding."""
    if isinstance(value, bytes):
        return value
    if isinstance(value, (bytearray, memoryview)):
        return bytes(value)
    if isinstance(value, str):
        return value.encode("utf-8", "surrogateescape")
    raise TypeError(f"payload must be bytes or str, not {type(value).__name__}")


@dataclass(frozen=True)
class EvaluationContext:
    variables: dict[str, tuple[tuple[str, str], ...]] = field(default_factory=dict)

    def collection(self, name: str) -> tuple[tuple[str, str], ...]:
        return self.variables.get(name, ())


class MatchResult(NamedTuple):
    matched: bool
    matched_variable: Optional[str] = None


def materialize_context(payload: PayloadLike) -> EvaluationContext:
    raw = as_payload(payload)
    value = raw.decode("latin-1")
    uri = "/?" + QUERY_ARG + "=" + quote(raw, safe="")
    return EvaluationContext({
        "ARGS": ((QUERY_ARG, value),),
        "ARGS_NAMES": ((QUERY_ARG, QUERY_ARG),),
        "REQUEST_URI": (("REQUEST_URI", uri),),
    })


# --------------------------------------------------------------------------
# target selection

@lru_cache(maxsize=1024)
def _key_regex(key: str):
    return re.compile(key[1:-1], re.IGNORECASE)


def _key_matches(target: Target, name: str) -> bool:
    if target.key is None:
        return True
    if target.key_is_regex:
        return _key_regex(target.key).search(name) is not None
    return target.key.lower() == name.lower()


def _select(targets: Iterable[Target], ctx: EvaluationContext, state: dict):
    selected: list[tuple[str, str, str]] = []  # (collection, name, value)
    excluded = [t for t in targets if t.exclude]
    for t in targets:
        if t.exclude:
            continue
        if t.collection == "TX":
            pairs = tuple((k, v) for k, v in state["tx"].items()
                          if t.key is None or _key_matches(t, k))
        elif t.collection in ("MATCHED_VAR", "MATCHED_VARS"):
            pairs = state["matched"][:1] if t.collection == "MATCHED_VAR" else state["matched"]
            pairs = tuple((name, value) for _, name, value in pairs)
        else:
            pairs = tuple(p for p in ctx.collection(t.collection) if _key_matches(t, p[0]))
        if t.count:
            selected.append((t.collection, "&" + t.collection, str(len(pairs))))
            continue
        for name, value in pairs:
            if any(e.collection == t.collection and _key_matches(e, name) for e in excluded):
                continue
            selected.append((t.collection, name, value))
    return selected


# --------------------------------------------------------------------------
# operators

def expand_macros(text: str, state: dict) -> str:
    """Expand ``%{TX.n}`` and ``%{MATCHED_VAR}``; other macros expand to ''."""
    def repl(m):
        ref = m.group(1)
        up = ref.upper()
        if up.startswith("TX."):
            return state["tx"].get(ref[3:].lower(), "")
        if up == "MATCHED_VAR" and state["matched"]:
            return state["matched"][0][2]
        return ""

    return re.sub(r"%\{([^}]+)\}", repl, text)


@lru_cache(maxsize=1024)
def _phrase_matcher(phrases: tuple[str, ...]) -> PhraseMatcher:
    return PhraseMatcher(pcre.to_bytes_text(p) for p in phrases)


def _operator_test(op: Operator, value: str, state: dict, capture: bool) -> bool:
    name = op.name
    if name == "rx":
        m = pcre.compile_rx(op.argument).search(value)
        if m is None:
            return False
        if capture:
            tx = state["tx"]
            for i in range(10):
                tx.pop(str(i), None)
            for i, g in enumerate(m.groups(default="")[:9], 1):
                tx[str(i)] = g
            tx["0"] = m.group(0)
        return True
    if name in ("pm", "pmFromFile"):
        return _phrase_matcher(op.phrases).search(value)
    if name == "detectSQLi":
        return sqli.detect_sqli(value)
    arg = pcre.to_bytes_text(expand_macros(op.argument, state))
    if name == "contains":
        return arg in value
    if name == "streq":
        return value == arg
    if name == "beginsWith":
        return value.startswith(arg)
    if name == "endsWith":
        return value.endswith(arg)
    raise ValueError(f"unsupported operator @{name}")


def _evaluate_part(part: ChainPart, ctx: EvaluationContext, state: dict, cache: dict):
    matches = []
    for coll, name, value in _select(part.targets, ctx, state):
        key = (value, part.transformations, part.multi_match)
        candidates = cache.get(key)
        if candidates is None:
            if part.multi_match:
                candidates = tuple(transform_stages(value, part.transformations))
            else:
                candidates = (transform(value, part.transformations),)
            cache[key] = candidates
        hit = any(_operator_test(part.operator, c, state, part.capture) for c in candidates)
        if hit != part.operator.negated:
            matches.append((coll, name, value))
    return matches


def match_rule(rule: Rule, ctx: EvaluationContext, cache: Optional[dict] = None) -> MatchResult:
    """Whether ``rule`` fires on ``ctx``; chained parts must all match.

    ``cache`` memoizes transformation results and may be shared by every rule
    evaluated against the same context.
    """
    if cache is None:
        cache = {}
    state = {"tx": {}, "matched": ()}
    first = None
    for part in rule.parts:
        matches = _evaluate_part(part, ctx, state, cache)
        if not matches:
            return MatchResult(False)
        state["matched"] = tuple(matches)
        if first is None:
            coll, name, _ = matches[0]
            first = coll if coll == name else f"{coll}:{name}"
    return MatchResult(True, first)


def evaluate_rules(rules: Iterable[Rule], payload: PayloadLike) -> list[bool]:
    ctx = materialize_context(payload)
    cache: dict = {}
    return [match_rule(r, ctx, cache).matched for r in rules]


def fired_rule_ids(rules: Iterable[Rule], payload: PayloadLike) -> list[int]:
    rules = list(rules)
    return [r.id for r, hit in zip(rules, evaluate_rules(rules, payload)) if hit]


def detect_sqli(value: PayloadLike) -> bool:
    """``@detectSQLi`` verdict through the installed detector."""
    if isinstance(value, bytes):
        value = value.decode("latin-1")
    return sqli.detect_sqli(value)
