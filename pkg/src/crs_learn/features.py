"""Binary rule-match features: one bit per rule, set when the rule fires.

A :class:`FeatureSpace` fixes which rules become columns (ascending id) and
carries a digest that every matrix, scorer and model derived from it keeps,
so that mismatched columns are detected instead of silently misaligned.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .engine import PayloadLike, evaluate_rules
from .errors import CrsLearnError, DegenerateSpaceError, InconsistentSpaceError
from .seclang import RuleSet, rules_at_pl

MAGIC = b"CRSF"
BINARY_VERSION = 1
THREADS_ENV = "CRS_LEARN_THREADS"


@dataclass(frozen=True)
class FeatureSpace:
    rule_ids: tuple[int, ...]
    pl: int
    severities: tuple[int, ...] = ()
    ruleset_digest: str = ""

    def __post_init__(self):
        ids = list(self.rule_ids)
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValueError("rule_ids must be strictly ascending")
        if self.severities and len(self.severities) != len(ids):
            raise ValueError("severities must align with rule_ids")

    @property
    def d(self) -> int:
        return len(self.rule_ids)

    @property
    def digest(self) -> str:
        doc = json.dumps([list(self.rule_ids), self.pl, self.ruleset_digest])
        return hashlib.sha256(doc.encode()).hexdigest()[:16]

    def index(self, rule_id: int) -> int:
        return self.rule_ids.index(rule_id)

    def to_dict(self) -> dict:
        return {
            "rule_ids": list(self.rule_ids), "pl": self.pl,
            "severities": list(self.severities),
            "ruleset_digest": self.ruleset_digest, "digest": self.digest,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSpace":
        space = cls(tuple(doc["rule_ids"]), doc["pl"], tuple(doc.get("severities", ())),
                    doc.get("ruleset_digest", ""))
        if "digest" in doc and doc["digest"] != space.digest:
            raise InconsistentSpaceError("feature space digest does not match its contents")
        return space

    def save(self, path, **extra):
        with open(path, "w") as fh:
            json.dump({**self.to_dict(), **extra}, fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FeatureSpace":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class FeatureVector:
    bits: np.ndarray
    space_digest: str

    def __len__(self):
        return len(self.bits)


@dataclass(frozen=True)
class FeatureMatrix:
    bits: np.ndarray
    space_digest: str
    rule_ids: tuple[int, ...] = field(default=())

    @property
    def shape(self):
        return self.bits.shape

    def __len__(self):
        return self.bits.shape[0]

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(self.bits[i], self.space_digest)

    def __iter__(self):
        return (self.row(i) for i in range(len(self)))


class ExtractionError(CrsLearnError):
    def __init__(self, row: int, cause: Exception):
        self.row = row
        super().__init__(f"row {row}: {cause}")


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _eval_chunk(args):
    rules, payloads, offset = args
    out = np.zeros((len(payloads), len(rules)), dtype=np.uint8)
    for i, p in enumerate(payloads):
        try:
            out[i] = evaluate_rules(rules, p)
        except Exception as exc:  # re-raised with the global row index
            raise ExtractionError(offset + i, exc) from exc
    return out


def rule_matrix(rules: Sequence, payloads: Sequence[PayloadLike],
                n_jobs: Optional[int] = None, chunk_size: int = 2000) -> np.ndarray:
    """Match bits for every (payload, rule) pair, rows in payload order."""
    rules = tuple(rules)
    payloads = list(payloads)
    n_jobs = default_jobs() if n_jobs is None else max(1, n_jobs)
    if n_jobs == 1 or len(payloads) <= chunk_size:
        return _eval_chunk((rules, payloads, 0))
    chunks = [(rules, payloads[i:i + chunk_size], i)
              for i in range(0, len(payloads), chunk_size)]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        parts = list(pool.map(_eval_chunk, chunks))
    return np.vstack(parts)


def _space_rules(space: FeatureSpace, ruleset: RuleSet):
    missing = [rid for rid in space.rule_ids if rid not in ruleset]
    if missing:
        raise InconsistentSpaceError(f"rule ids missing from ruleset: {missing}")
    return [ruleset[rid] for rid in space.rule_ids]


def space_from_matrix(ruleset: RuleSet, pl: int, bits: np.ndarray) -> FeatureSpace:
    """Keep rules at ``pl`` whose column in ``bits`` (file order) has a hit."""
    fired = np.asarray(bits).any(axis=0)
    keep = sorted(
        (r.id, int(r.severity)) for r, hit in zip(ruleset.rules, fired)
        if hit and r.paranoia_level <= pl
    )
    if not keep:
        raise DegenerateSpaceError(f"no rule at PL{pl} fired on the training payloads")
    return FeatureSpace(tuple(i for i, _ in keep), pl, tuple(s for _, s in keep),
                        ruleset.source_digest)


def derive_feature_space(ruleset: RuleSet, pl: int, training_payloads: Sequence[PayloadLike],
                         n_jobs: Optional[int] = None) -> FeatureSpace:
    """Rules enabled at ``pl`` that fire on at least one training payload."""
    if not len(training_payloads):
        raise ValueError("training_payloads must not be empty")
    enabled = rules_at_pl(ruleset, pl)
    return space_from_matrix(enabled, pl, rule_matrix(enabled.rules, training_payloads, n_jobs))


def full_space(ruleset: RuleSet, pl: int) -> FeatureSpace:
    """Every rule enabled at ``pl``, without pruning."""
    rules = sorted(rules_at_pl(ruleset, pl).rules, key=lambda r: r.id)
    if not rules:
        raise DegenerateSpaceError(f"no rules enabled at PL{pl}")
    return FeatureSpace(tuple(r.id for r in rules), pl, tuple(int(r.severity) for r in rules),
                        ruleset.source_digest)


def extract(space: FeatureSpace, ruleset: RuleSet, payload: PayloadLike) -> FeatureVector:
    bits = np.asarray(evaluate_rules(_space_rules(space, ruleset), payload), dtype=np.uint8)
    return FeatureVector(bits, space.digest)


def extract_batch(space: FeatureSpace, ruleset: RuleSet, payloads: Sequence[PayloadLike],
                  n_jobs: Optional[int] = None) -> FeatureMatrix:
    rules = _space_rules(space, ruleset)
    bits = rule_matrix(rules, payloads, n_jobs)
    return FeatureMatrix(bits.reshape(len(payloads), len(rules)), space.digest, space.rule_ids)


def project(bits: np.ndarray, from_ids: Sequence[int], space: FeatureSpace) -> FeatureMatrix:
    """Select the columns of ``space`` from a matrix whose columns are ``from_ids``."""
    pos = {rid: i for i, rid in enumerate(from_ids)}
    try:
        cols = [pos[rid] for rid in space.rule_ids]
    except KeyError as exc:
        raise InconsistentSpaceError(f"rule {exc.args[0]} not among the matrix columns") from None
    return FeatureMatrix(np.ascontiguousarray(np.asarray(bits)[:, cols]), space.digest,
                         space.rule_ids)


def as_bits(X, space: Optional[FeatureSpace] = None, digest: Optional[str] = None) -> np.ndarray:
    """2-D bit array from a FeatureMatrix / FeatureVector / array, checking digests."""
    expected = digest if digest is not None else (space.digest if space is not None else None)
    if isinstance(X, (FeatureMatrix, FeatureVector)):
        if expected is not None and X.space_digest != expected:
            raise InconsistentSpaceError(
                f"features bound to space {X.space_digest}, expected {expected}")
        X = X.bits
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if space is not None and arr.shape[1] != space.d:
        raise InconsistentSpaceError(f"expected {space.d} columns, got {arr.shape[1]}")
    return arr


# --------------------------------------------------------------------------
# persistence

def write_csv(matrix: FeatureMatrix, path, comment: Optional[str] = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(matrix.rule_ids)
        for row in np.asarray(matrix.bits, dtype=np.uint8):
            w.writerow(row.tolist())


def read_csv(path, space_digest: str = "") -> FeatureMatrix:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(io.StringIO("".join(lines)))
    header = next(reader, None)
    if header is None:
        raise ValueError(f"{path}: empty feature CSV")
    ids = tuple(int(h) for h in header)
    rows = [[int(v) for v in r] for r in reader if r]
    bits = np.array(rows, dtype=np.uint8).reshape(len(rows), len(ids))
    if bits.size and bits.max() > 1:
        raise ValueError(f"{path}: feature values must be 0 or 1")
    return FeatureMatrix(bits, space_digest, ids)


def to_bytes(bits: np.ndarray) -> bytes:
    """``CRSF`` container: magic, u8 version, u32 d (LE), packed rows (MSB first)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.ndim != 2:
        raise ValueError("expected a 2-D bit matrix")
    d = bits.shape[1]
    header = MAGIC + struct.pack("<BI", BINARY_VERSION, d)
    return header + np.packbits(bits, axis=1).tobytes()


def from_bytes(data: bytes) -> np.ndarray:
    if data[:4] != MAGIC:
        raise ValueError("not a CRSF feature file")
    version, d = struct.unpack_from("<BI", data, 4)
    if version != BINARY_VERSION:
        raise ValueError(f"unsupported CRSF version {version}")
    body = np.frombuffer(data, dtype=np.uint8, offset=9)
    row_bytes = (d + 7) // 8
    if row_bytes == 0:
        return np.zeros((0, 0), dtype=np.uint8)
    if body.size % row_bytes:
        raise ValueError("truncated CRSF payload")
    packed = body.reshape(-1, row_bytes)
    return np.unpackbits(packed, axis=1, count=d).astype(np.uint8)


def write_binary(matrix: FeatureMatrix, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(matrix.bits))


def read_binary(path, space: Optional[FeatureSpace] = None) -> FeatureMatrix:
    with open(path, "rb") as fh:
        bits = from_bytes(fh.read())
    if space is not None:
        if bits.shape[1] != space.d:
            raise InconsistentSpaceError(f"file has {bits.shape[1]} columns, space has {space.d}")
        return FeatureMatrix(bits, space.digest, space.rule_ids)
    return FeatureMatrix(bits, "")


# --------------------------------------------------------------------------
# estimator interface

class RuleFeatureExtractor(TransformerMixin, BaseEstimator):
    """Map payloads to rule-match bit vectors.

    ``fit`` derives the feature space from the training payloads (rules at
    ``paranoia_level`` that fire at least once, or every enabled rule when
    ``prune=False``); ``transform`` returns an ``(n, d)`` uint8 array.
    """

    def __init__(self, ruleset=None, paranoia_level=4, prune=True, n_jobs=None):
        self.ruleset = ruleset
        self.paranoia_level = paranoia_level
        self.prune = prune
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        if self.ruleset is None:
            raise ValueError("RuleFeatureExtractor needs a ruleset")
        payloads = list(X)
        if self.prune:
            self.feature_space_ = derive_feature_space(
                self.ruleset, self.paranoia_level, payloads, self.n_jobs)
        else:
            self.feature_space_ = full_space(self.ruleset, self.paranoia_level)
        self.n_features_out_ = self.feature_space_.d
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_space_")
        return extract_batch(self.feature_space_, self.ruleset, list(X), self.n_jobs).bits

    def transform_matrix(self, X) -> FeatureMatrix:
        check_is_fitted(self, "feature_space_")
        return extract_batch(self.feature_space_, self.ruleset, list(X), self.n_jobs)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_space_")
        return np.array([str(i) for i in self.feature_space_.rule_ids], dtype=object)

    def _more_tags(self):
        return {"X_types": ["string"], "stateless": False}

