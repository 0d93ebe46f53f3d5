"""Labeled payload corpora: loading, balanced selection and train/test splits.

Payloads are kept as raw bytes.  Nothing is decoded or trimmed at load time
apart from the record delimiter; decoding is left to the rule
transformations.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .engine import as_payload
from .errors import InsufficientSamplesError, MalformedRecordError

BENIGN, SQLI = 0, 1
SOURCES = ("open-appsec", "http-params", "kaggle-sqli", "sqlmap", "other")
FORMATS = ("jsonl", "csv", "lines", "json-array")
_LABEL_NAMES = {
    "0": BENIGN, "benign": BENIGN, "legitimate": BENIGN,
    "1": SQLI, "sqli": SQLI, "malicious": SQLI,
}


@dataclass(frozen=True)
class LabeledSample:
    payload: bytes
    label: int
    source: str = "other"

    def __post_init__(self):
        if self.payload is None:
            raise ValueError("payload must not be None")
        object.__setattr__(self, "payload", as_payload(self.payload))
        if self.label not in (BENIGN, SQLI):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True)
class SplitSpec:
    train_per_class: int
    test_per_class: int
    seed: int = 0

    def __post_init__(self):
        if self.train_per_class < 0 or self.test_per_class < 0:
            raise ValueError("per-class counts must be non-negative")


class Corpus(list):
    """List of samples plus the records skipped in permissive mode."""

    def __init__(self, samples: Iterable[LabeledSample] = (), skipped=()):
        super().__init__(samples)
        self.skipped: list[tuple[int, str]] = list(skipped)


def parse_label(value) -> int:
    if isinstance(value, bool):
        raise ValueError("boolean labels are ambiguous")
    if isinstance(value, int) and value in (0, 1):
        return value
    if isinstance(value, str) and value.strip().lower() in _LABEL_NAMES:
        return _LABEL_NAMES[value.strip().lower()]
    raise ValueError(f"unrecognized label {value!r}")


def _source(value, default: str) -> str:
    if value is None or value == "":
        return default
    value = str(value)
    return value if value in SOURCES else "other"


def _text_payload(text: str) -> bytes:
    return text.encode("utf-8", "surrogateescape")


def _from_record(rec, label, source, line) -> LabeledSample:
    if isinstance(rec, str):
        if label is None:
            raise MalformedRecordError("bare payload needs a label argument", line)
        return LabeledSample(_text_payload(rec), label, source)
    if not isinstance(rec, dict):
        raise MalformedRecordError("record must be an object", line)
    if "payload_b64" in rec:
        try:
            payload = base64.b64decode(rec["payload_b64"], validate=True)
        except (ValueError, TypeError) as exc:
            raise MalformedRecordError(f"bad payload_b64: {exc}", line) from None
    elif isinstance(rec.get("payload"), str):
        payload = _text_payload(rec["payload"])
    else:
        raise MalformedRecordError("missing or non-string 'payload'", line)
    raw_label = rec.get("label", label)
    if raw_label is None:
        raise MalformedRecordError("missing 'label'", line)
    try:
        lab = parse_label(raw_label)
    except ValueError as exc:
        raise MalformedRecordError(str(exc), line) from None
    return LabeledSample(payload, lab, _source(rec.get("source"), source))


def guess_format(path) -> str:
    suffix = Path(path).suffix.lower()
    return {".jsonl": "jsonl", ".ndjson": "jsonl", ".csv": "csv",
            ".json": "json-array"}.get(suffix, "lines")


def _iter_records(data: bytes, fmt: str, label: Optional[int]):
    """Yield (line_number, record-or-exception) pairs."""
    if fmt == "lines":
        if label is None:
            raise ValueError("the 'lines' format needs a label")
        chunks = data.split(b"\n")
        if chunks and chunks[-1] == b"":
            chunks.pop()
        for i, chunk in enumerate(chunks, 1):
            yield i, chunk
    elif fmt == "jsonl":
        for i, line in enumerate(data.split(b"\n"), 1):
            if not line.strip():
                continue
            try:
                yield i, json.loads(line.decode("utf-8", "surrogateescape"))
            except (json.JSONDecodeError, UnicodeError) as exc:
                yield i, MalformedRecordError(f"invalid JSON: {exc}", i)
    elif fmt == "json-array":
        try:
            doc = json.loads(data.decode("utf-8", "surrogateescape"))
        except json.JSONDecodeError as exc:
            raise MalformedRecordError(f"invalid JSON: {exc}", exc.lineno) from None
        if not isinstance(doc, list):
            raise MalformedRecordError("top-level value must be an array", 1)
        for i, rec in enumerate(doc, 1):
            yield i, rec
    elif fmt == "csv":
        text = data.decode("utf-8", "surrogateescape")
        reader = csv.DictReader(io.StringIO(text, newline=""))
        if reader.fieldnames is None or "payload" not in reader.fieldnames:
            raise MalformedRecordError("CSV header must include 'payload'", 1)
        for rec in reader:
            if None in rec:
                yield reader.line_num, MalformedRecordError("too many fields", reader.line_num)
                continue
            if "label" in rec and rec["label"] in (None, ""):
                rec.pop("label")
            yield reader.line_num, rec
    else:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def load_corpus(path, format: Optional[str] = None, label: Optional[int] = None,
                source: str = "other", strict: bool = True) -> Corpus:
    """Load labeled payloads from ``path``.

    ``strict`` raises :class:`MalformedRecordError` on the first bad record;
    otherwise bad records are skipped and listed in ``Corpus.skipped``.
    """
    fmt = format or guess_format(path)
    if label is not None:
        label = parse_label(label)
    data = Path(path).read_bytes()
    out, skipped = [], []
    for line, rec in _iter_records(data, fmt, label):
        try:
            if isinstance(rec, Exception):
                raise rec
            if fmt == "lines":
                out.append(LabeledSample(rec, label, _source(source, "other")))
            else:
                out.append(_from_record(rec, label, _source(source, "other"), line))
        except MalformedRecordError as exc:
            if strict:
                raise
            skipped.append((line, str(exc)))
    return Corpus(out, skipped)


def export_jsonl(samples: Iterable[LabeledSample], path) -> None:
    """Write {payload, label, source} rows; non-UTF-8 payloads go to payload_b64."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(sample_record(s), ensure_ascii=False) + "\n")


def sample_record(s: LabeledSample) -> dict:
    try:
        rec = {"payload": s.payload.decode("utf-8")}
    except UnicodeDecodeError:
        rec = {"payload_b64": base64.b64encode(s.payload).decode("ascii")}
    rec.update(label=s.label, source=s.source)
    return rec


def dataset_digest(samples: Iterable[LabeledSample]) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(len(s.payload).to_bytes(8, "little"))
        h.update(s.payload)
        h.update(bytes([s.label]))
    return h.hexdigest()[:16]


def payloads(samples: Sequence[LabeledSample]) -> list[bytes]:
    return [s.payload for s in samples]


def labels(samples: Sequence[LabeledSample]) -> np.ndarray:
    return np.fromiter((s.label for s in samples), dtype=np.int64, count=len(samples))


# --------------------------------------------------------------------------
# selection and splitting

def _class_indices(samples, dedup: bool) -> dict[int, np.ndarray]:
    seen: set[bytes] = set()
    idx: dict[int, list[int]] = {BENIGN: [], SQLI: []}
    for i, s in enumerate(samples):
        if dedup:
            if s.payload in seen:
                continue
            seen.add(s.payload)
        idx[s.label].append(i)
    return {k: np.asarray(v, dtype=np.int64) for k, v in idx.items()}


def _check_counts(idx, need: int):
    for lab in (BENIGN, SQLI):
        if len(idx[lab]) < need:
            raise InsufficientSamplesError(lab, len(idx[lab]), need)


def balanced_select(samples: Sequence[LabeledSample], per_class: int, seed: int = 0,
                    dedup: bool = False) -> list[LabeledSample]:
    """``per_class`` samples of each label, drawn without replacement, then shuffled.

    With ``dedup`` a payload seen earlier in ``samples`` is ignored, whatever
    its label.
    """
    if per_class < 0:
        raise ValueError("per_class must be non-negative")
    idx = _class_indices(samples, dedup)
    _check_counts(idx, per_class)
    rng = np.random.default_rng(seed)
    chosen = np.concatenate([rng.choice(idx[lab], per_class, replace=False)
                             for lab in (BENIGN, SQLI)])
    return [samples[i] for i in rng.permutation(chosen)]


def split(samples: Sequence[LabeledSample], spec: SplitSpec):
    """Disjoint train/test lists with exact per-class counts."""
    idx = _class_indices(samples, dedup=False)
    _check_counts(idx, spec.train_per_class + spec.test_per_class)
    rng = np.random.default_rng(spec.seed)
    train, test = [], []
    for lab in (BENIGN, SQLI):
        perm = rng.permutation(idx[lab])
        train.append(perm[:spec.train_per_class])
        test.append(perm[spec.train_per_class:spec.train_per_class + spec.test_per_class])
    train_idx = rng.permutation(np.concatenate(train))
    test_idx = rng.permutation(np.concatenate(test))
    return [samples[i] for i in train_idx], [samples[i] for i in test_idx]
