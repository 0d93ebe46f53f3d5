"""Parser for the subset of SecLang used by the CRS SQL injection rules.

Supported
---------
* ``SecRule VARIABLES "OPERATOR" "ACTIONS"`` directives, including ``chain``.
  Every other directive (``SecMarker``, ``SecAction``, ``SecComponentSignature``,
  ...) is skipped.
* Variables: see :data:`KNOWN_COLLECTIONS`; ``!`` exclusions, ``&`` counts and
  ``:key`` / ``:/regex/`` selectors.
* Operators: ``@rx`` (also implicit), ``@pm``, ``@pmFromFile``/``@pmf``,
  ``@detectSQLi``, ``@contains``, ``@streq``, ``@beginsWith``, ``@endsWith``,
  optionally negated with ``!``.
* Actions used for scoring: ``id``, ``tag`` (``paranoia-level/N``),
  ``severity``, ``msg``, ``chain``, ``t:``, ``multiMatch``, ``capture``.
  Other actions are accepted and ignored.

``SecRule TX:... "@lt N" "...,skipAfter:..."`` paranoia gates carry ids but no
severity; they are recorded in :attr:`RuleSet.ignored` instead of being
treated as scoring rules.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Iterator, Mapping, Optional

import regex

from . import pcre
from .errors import RuleParseError, UnsupportedTransformationError
from .transforms import check_chain

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

KNOWN_COLLECTIONS = frozenset({
    "ARGS", "ARGS_NAMES", "ARGS_GET", "ARGS_GET_NAMES", "ARGS_POST",
    "ARGS_POST_NAMES", "REQUEST_COOKIES", "REQUEST_COOKIES_NAMES",
    "REQUEST_HEADERS", "REQUEST_HEADERS_NAMES", "REQUEST_BODY", "REQUEST_URI",
    "REQUEST_URI_RAW", "REQUEST_LINE", "REQUEST_BASENAME", "REQUEST_FILENAME",
    "QUERY_STRING", "XML", "TX", "MATCHED_VAR", "MATCHED_VARS",
    "MATCHED_VAR_NAME", "MATCHED_VARS_NAMES",
})

OPERATORS = frozenset({
    "rx", "pm", "pmFromFile", "detectSQLi", "contains", "streq",
    "beginsWith", "endsWith",
})
_OPERATOR_ALIASES = {"pmf": "pmFromFile"}

# syslog-style numeric severities accepted by ModSecurity
_NUMERIC_SEVERITY = {"2": "CRITICAL", "3": "ERROR", "4": "WARNING", "5": "NOTICE"}


class Severity(IntEnum):
    NOTICE = 2
    WARNING = 3
    ERROR = 4
    CRITICAL = 5

    @property
    def score(self) -> int:
        return int(self)

    @classmethod
    def parse(cls, text: str) -> "Severity":
        key = text.strip().strip("'\"").upper()
        key = _NUMERIC_SEVERITY.get(key, key)
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unsupported severity {text!r}") from None


@dataclass(frozen=True)
class Target:
    collection: str
    key: Optional[str] = None
    exclude: bool = False
    count: bool = False

    @property
    def key_is_regex(self) -> bool:
        return self.key is not None and len(self.key) >= 2 and \
            self.key.startswith("/") and self.key.endswith("/")

    def __str__(self):
        prefix = "!" if self.exclude else "&" if self.count else ""
        suffix = f":{self.key}" if self.key is not None else ""
        return f"{prefix}{self.collection}{suffix}"


@dataclass(frozen=True)
class Operator:
    name: str
    argument: str = ""
    negated: bool = False
    phrases: tuple[str, ...] = ()

    def __str__(self):
        bang = "!" if self.negated else ""
        return f"{bang}@{self.name} {self.argument}".rstrip()


@dataclass(frozen=True)
class ChainPart:
    targets: tuple[Target, ...]
    transformations: tuple[str, ...]
    operator: Operator
    multi_match: bool = False
    capture: bool = False


@dataclass(frozen=True)
class Rule:
    id: int
    paranoia_level: int
    severity: Severity
    targets: tuple[Target, ...]
    transformations: tuple[str, ...]
    operator: Operator
    chain: tuple[ChainPart, ...] = ()
    msg: str = ""
    multi_match: bool = False
    capture: bool = False
    tags: tuple[str, ...] = ()
    line: int = field(default=0, compare=False)

    @property
    def head(self) -> ChainPart:
        return ChainPart(self.targets, self.transformations, self.operator,
                         self.multi_match, self.capture)

    @property
    def parts(self) -> tuple[ChainPart, ...]:
        return (self.head,) + self.chain


@dataclass(frozen=True)
class SkippedRule:
    rule_id: Optional[int]
    line: int
    reason: str


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...] = ()
    source_digest: str = ""
    skipped: tuple[SkippedRule, ...] = ()
    ignored: tuple[SkippedRule, ...] = ()
    warnings: tuple[str, ...] = ()

    def __len__(self):
        return len(self.rules)

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    @cached_property
    def by_id(self) -> dict[int, Rule]:
        return {r.id: r for r in self.rules}

    @property
    def ids(self) -> list[int]:
        return [r.id for r in self.rules]

    def __getitem__(self, rule_id: int) -> Rule:
        return self.by_id[rule_id]

    def __contains__(self, rule_id) -> bool:
        return rule_id in self.by_id

    def pl_counts(self) -> dict[int, int]:
        """Number of rules assigned to each paranoia level (not cumulative)."""
        counts = {pl: 0 for pl in (1, 2, 3, 4)}
        for r in self.rules:
            counts[r.paranoia_level] += 1
        return counts


# --------------------------------------------------------------------------
# lexical layer

@dataclass
class _Directive:
    line: int
    words: list[str]


def _logical_lines(text: str) -> Iterator[tuple[int, str]]:
    """Yield (first line number, text) with backslash continuations joined."""
    buf: list[str] = []
    start = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip()
        if not buf:
            stripped = line.lstrip()
            if not stripped or stripped.startswith("#"):
                continue
            start = lineno
        if line.endswith("\\"):
            buf.append(line[:-1])
            continue
        buf.append(line)
        yield start, " ".join(part.strip() for part in buf)
        buf = []
    if buf:
        yield start, " ".join(part.strip() for part in buf)


def _split_words(text: str, line: int) -> list[str]:
    """Apache-config style words; inside quotes only ``\\"`` is unescaped."""
    words = []
    i, n = 0, len(text)
    while i < n:
        while i < n and text[i].isspace():
            i += 1
        if i >= n:
            break
        if text[i] in "\"'":
            quote = text[i]
            i += 1
            buf = []
            while i < n and text[i] != quote:
                if text[i] == "\\" and i + 1 < n and text[i + 1] == quote:
                    buf.append(quote)
                    i += 2
                    continue
                buf.append(text[i])
                i += 1
            if i >= n:
                raise RuleParseError("unterminated quoted argument", line=line)
            i += 1
            words.append("".join(buf))
        else:
            j = i
            while j < n and not text[j].isspace():
                j += 1
            words.append(text[i:j])
            i = j
    return words


def _split_actions(text: str) -> list[tuple[str, Optional[str]]]:
    """Split ``a,b:c,d:'e,f'`` into (name, value) pairs; quotes are stripped."""
    actions = []
    i, n = 0, len(text)
    while i < n:
        while i < n and (text[i].isspace() or text[i] == ","):
            i += 1
        if i >= n:
            break
        j = i
        while j < n and text[j] not in ":,":
            j += 1
        name = text[i:j].strip()
        value = None
        if j < n and text[j] == ":":
            j += 1
            while j < n and text[j] == " ":
                j += 1
            if j < n and text[j] == "'":
                k = j + 1
                buf = []
                while k < n and text[k] != "'":
                    if text[k] == "\\" and k + 1 < n and text[k + 1] == "'":
                        buf.append("'")
                        k += 2
                        continue
                    buf.append(text[k])
                    k += 1
                value = "".join(buf)
                j = k + 1
            else:
                k = j
                while k < n and text[k] != ",":
                    k += 1
                value = text[j:k].strip()
                j = k
        actions.append((name, value))
        i = j
    return actions


def _split_variables(text: str) -> list[str]:
    parts, buf = [], []
    in_regex = False
    prev = ""
    for ch in text:
        if ch == "/" and prev == ":" and not in_regex:
            in_regex = True
        elif ch == "/" and in_regex and prev != "\\":
            in_regex = False
        if ch == "|" and not in_regex:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
        prev = ch
    parts.append("".join(buf))
    return [p.strip() for p in parts if p.strip()]


def parse_targets(text: str) -> tuple[Target, ...]:
    targets = []
    for part in _split_variables(text):
        exclude = part.startswith("!")
        count = part.startswith("&")
        if exclude or count:
            part = part[1:]
        name, sep, key = part.partition(":")
        key = key.strip("'") if sep else None
        targets.append(Target(name.upper(), key or None, exclude, count))
    return tuple(targets)


def parse_operator(text: str) -> Operator:
    text = text.strip()
    negated = text.startswith("!")
    if negated:
        text = text[1:].lstrip()
    if not text.startswith("@"):
        return Operator("rx", text, negated)
    name, _, arg = text[1:].partition(" ")
    name = _OPERATOR_ALIASES.get(name, name)
    return Operator(name, arg.strip(), negated)


# --------------------------------------------------------------------------
# semantic layer

@dataclass
class _Pending:
    """A rule being assembled from a head directive and its chain."""

    rule_id: Optional[int]
    line: int
    fields: dict
    chain: list[ChainPart]
    error: Optional[str] = None
    open_chain: bool = False


def _load_phrase_files(argument: str, base_dir: Optional[str]) -> tuple[str, ...]:
    phrases = []
    for name in argument.split():
        path = name if os.path.isabs(name) or base_dir is None else os.path.join(base_dir, name)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line and not line.startswith("#"):
                    phrases.append(line.lower())
    return tuple(phrases)


def _validate_operator(op: Operator, base_dir, rule_id, rx_overrides) -> Operator:
    if op.name not in OPERATORS:
        raise ValueError(f"unknown operator @{op.name}")
    if op.name == "rx":
        pattern = rx_overrides.get(rule_id, op.argument) if rx_overrides else op.argument
        try:
            pcre.compile_rx(pattern)
        except regex.error as exc:
            raise ValueError(f"uncompilable regex: {exc}") from None
        if pattern != op.argument:
            op = Operator("rx", pattern, op.negated)
    elif op.name == "pm":
        phrases = tuple(p.lower() for p in op.argument.split())
        if not phrases:
            raise ValueError("@pm needs at least one phrase")
        op = Operator("pm", op.argument, op.negated, phrases)
    elif op.name == "pmFromFile":
        try:
            phrases = _load_phrase_files(op.argument, base_dir)
        except OSError as exc:
            raise ValueError(f"@pmFromFile: {exc}") from None
        if not phrases:
            raise ValueError("@pmFromFile loaded no phrases")
        op = Operator("pmFromFile", op.argument, op.negated, phrases)
    return op


def _parse_secrule(words, line, rule_id_hint):
    """Return (actions, targets, operator, transformations) for one SecRule."""
    if len(words) < 3:
        raise RuleParseError("SecRule needs variables and an operator",
                             rule_id=rule_id_hint, line=line)
    targets = parse_targets(words[1])
    operator = parse_operator(words[2])
    actions = _split_actions(words[3]) if len(words) > 3 else []
    transformations = tuple(v for k, v in actions if k == "t" and v)
    return actions, targets, operator, transformations


def parse_ruleset(conf_text: str | bytes, mode: str = "strict", base_dir: Optional[str] = None,
                  rx_overrides: Optional[Mapping[int, str]] = None) -> RuleSet:
    """Parse SecLang text into a :class:`RuleSet`.

    In ``strict`` mode the first invalid rule raises :class:`RuleParseError`
    carrying its id and line.  In ``permissive`` mode invalid rules are listed
    in :attr:`RuleSet.skipped` and left out.

    ``base_dir`` resolves ``@pmFromFile`` paths; ``rx_overrides`` maps rule ids
    to replacement ``@rx`` patterns for rules the regex engine cannot compile.
    """
    if mode not in ("strict", "permissive"):
        raise ValueError(f"mode must be 'strict' or 'permissive', got {mode!r}")
    if isinstance(conf_text, bytes):
        raw = conf_text
        conf_text = conf_text.decode("utf-8")
    else:
        raw = conf_text.encode("utf-8")
    digest = hashlib.sha256(raw).hexdigest()

    rules: list[Rule] = []
    skipped: list[SkippedRule] = []
    ignored: list[SkippedRule] = []
    warnings: list[str] = []
    seen: set[int] = set()
    pending: Optional[_Pending] = None

    def fail(p: _Pending, reason: str):
        if mode == "strict":
            raise RuleParseError(reason, rule_id=p.rule_id, line=p.line)
        skipped.append(SkippedRule(p.rule_id, p.line, reason))

    def finish(p: _Pending):
        if p.error is not None:
            fail(p, p.error)
            return
        if p.fields.get("control"):
            ignored.append(SkippedRule(p.rule_id, p.line, p.fields["control"]))
            return
        if p.rule_id in seen:
            fail(p, f"duplicate rule id {p.rule_id}")
            return
        seen.add(p.rule_id)
        f = p.fields
        rules.append(Rule(
            id=p.rule_id, paranoia_level=f["pl"], severity=f["severity"],
            targets=f["targets"], transformations=f["transformations"],
            operator=f["operator"], chain=tuple(p.chain), msg=f["msg"],
            multi_match=f["multi_match"], capture=f["capture"], tags=f["tags"],
            line=p.line,
        ))

    for line, text in _logical_lines(conf_text):
        try:
            words = _split_words(text, line)
        except RuleParseError as exc:
            if pending is not None and pending.open_chain:
                pending.error = pending.error or str(exc)
                continue
            if mode == "strict":
                raise
            skipped.append(SkippedRule(None, line, str(exc)))
            continue
        if not words or words[0] != "SecRule":
            if pending is not None and pending.open_chain:
                pending.error = pending.error or "chain not followed by SecRule"
                pending.open_chain = False
                finish(pending)
                pending = None
            continue

        hint = pending.rule_id if pending is not None and pending.open_chain else None
        try:
            actions, targets, operator, transformations = _parse_secrule(
                words, line, hint)
        except RuleParseError as exc:
            if mode == "strict":
                raise
            skipped.append(SkippedRule(hint, line, str(exc)))
            continue
        names = {k for k, _ in actions}
        continues_chain = "chain" in names

        if pending is not None and pending.open_chain:
            # chain continuation of the pending rule
            if pending.error is None:
                try:
                    check_chain(transformations)
                    operator = _validate_operator(operator, base_dir, pending.rule_id, None)
                    _check_targets(targets, continuation=True)
                except (ValueError, UnsupportedTransformationError) as exc:
                    pending.error = str(exc)
                else:
                    pending.chain.append(ChainPart(
                        targets, transformations, operator,
                        "multiMatch" in names, "capture" in names))
            pending.open_chain = continues_chain
            if not continues_chain:
                finish(pending)
                pending = None
            continue

        ids = [v for k, v in actions if k == "id"]
        if not ids:
            if continues_chain:
                pending = _Pending(None, line, {"control": "chain without id"}, [], open_chain=True)
            continue
        try:
            rule_id = int(ids[0])
        except ValueError:
            rule_id = None
        pending = _Pending(rule_id, line, {}, [], open_chain=continues_chain)
        if rule_id is None:
            pending.error = f"non-integer id {ids[0]!r}"
        else:
            _fill_head(pending, actions, targets, operator, transformations,
                       base_dir, rx_overrides, warnings)
        if not continues_chain:
            finish(pending)
            pending = None

    if pending is not None:
        if pending.open_chain and pending.error is None:
            pending.error = "chain not followed by SecRule"
        finish(pending)

    return RuleSet(tuple(rules), digest, tuple(skipped), tuple(ignored), tuple(warnings))


def _check_targets(targets, continuation=False):
    for t in targets:
        if t.collection not in KNOWN_COLLECTIONS:
            raise ValueError(f"unknown variable {t.collection}")
        if not continuation and t.collection in ("MATCHED_VAR", "MATCHED_VARS"):
            raise ValueError(f"{t.collection} only valid in chained parts")


def _fill_head(p: _Pending, actions, targets, operator, transformations,
               base_dir, rx_overrides, warnings):
    severity_text = next((v for k, v in actions if k == "severity"), None)
    names = {k for k, _ in actions}
    if severity_text is None and ("skipAfter" in names or
                                  all(t.collection == "TX" for t in targets)):
        p.fields["control"] = "paranoia/flow-control directive"
        return
    tags = tuple(v for k, v in actions if k == "tag" and v)
    pls = [t.split("/", 1)[1] for t in tags if t.startswith("paranoia-level/")]
    try:
        if severity_text is None:
            raise ValueError("missing severity")
        p.fields["severity"] = Severity.parse(severity_text)
        if pls:
            pl = int(pls[0])
            if pl not in (1, 2, 3, 4):
                raise ValueError(f"paranoia level {pl} out of range")
        else:
            pl = 1
            msg = f"rule {p.rule_id} (line {p.line}): no paranoia-level tag, assuming PL1"
            warnings.append(msg)
            logger.warning(msg)
        check_chain(transformations)
        _check_targets(targets)
        operator = _validate_operator(operator, base_dir, p.rule_id, rx_overrides)
    except (ValueError, UnsupportedTransformationError) as exc:
        p.error = str(exc)
        return
    p.fields.update(
        pl=pl, targets=targets, transformations=transformations,
        operator=operator, msg=next((v for k, v in actions if k == "msg"), "") or "",
        multi_match="multiMatch" in names, capture="capture" in names, tags=tags,
    )


def rules_at_pl(ruleset: RuleSet, pl: int) -> RuleSet:
    """Rules enabled at paranoia level ``pl`` (every rule with level <= pl)."""
    if pl not in (1, 2, 3, 4):
        raise ValueError(f"paranoia level must be in 1..4, got {pl!r}")
    return RuleSet(
        tuple(r for r in ruleset.rules if r.paranoia_level <= pl),
        ruleset.source_digest, ruleset.skipped, ruleset.ignored, ruleset.warnings,
    )


# --------------------------------------------------------------------------
# canonical debug serialization

def _part_to_dict(part: ChainPart) -> dict:
    return {
        "targets": [asdict(t) for t in part.targets],
        "transformations": list(part.transformations),
        "operator": {**asdict(part.operator), "phrases": list(part.operator.phrases)},
        "multi_match": part.multi_match,
        "capture": part.capture,
    }


def _part_from_dict(d: dict) -> ChainPart:
    op = d["operator"]
    return ChainPart(
        tuple(Target(**t) for t in d["targets"]),
        tuple(d["transformations"]),
        Operator(op["name"], op["argument"], op["negated"], tuple(op["phrases"])),
        d["multi_match"], d["capture"],
    )


def dump_ruleset(ruleset: RuleSet) -> str:
    """Canonical JSON text for golden files and round-trip checks."""
    doc = {
        "format_version": FORMAT_VERSION,
        "source_digest": ruleset.source_digest,
        "rules": [
            {
                "id": r.id, "paranoia_level": r.paranoia_level,
                "severity": r.severity.name, "msg": r.msg, "tags": list(r.tags),
                "line": r.line, **_part_to_dict(r.head),
                "chain": [_part_to_dict(c) for c in r.chain],
            }
            for r in ruleset.rules
        ],
        "skipped": [asdict(s) for s in ruleset.skipped],
        "ignored": [asdict(s) for s in ruleset.ignored],
        "warnings": list(ruleset.warnings),
    }
    return json.dumps(doc, indent=1, sort_keys=True, ensure_ascii=True) + "\n"


def load_ruleset(text: str) -> RuleSet:
    """Inverse of :func:`dump_ruleset`."""
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported ruleset dump version {doc.get('format_version')!r}")
    rules = []
    for d in doc["rules"]:
        head = _part_from_dict(d)
        rules.append(Rule(
            id=d["id"], paranoia_level=d["paranoia_level"],
            severity=Severity[d["severity"]], targets=head.targets,
            transformations=head.transformations, operator=head.operator,
            chain=tuple(_part_from_dict(c) for c in d["chain"]), msg=d["msg"],
            multi_match=head.multi_match, capture=head.capture,
            tags=tuple(d["tags"]), line=d["line"],
        ))
    return RuleSet(
        tuple(rules), doc["source_digest"],
        tuple(SkippedRule(**s) for s in doc["skipped"]),
        tuple(SkippedRule(**s) for s in doc["ignored"]),
        tuple(doc["warnings"]),
    )


def load_conf(path: str | os.PathLike, mode: str = "strict",
              rx_overrides: Optional[Mapping[int, str]] = None) -> RuleSet:
    """Read and parse a ``.conf`` file; ``@pmFromFile`` resolves next to it."""
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_ruleset(raw, mode=mode, base_dir=os.path.dirname(os.path.abspath(path)),
                         rx_overrides=rx_overrides)
