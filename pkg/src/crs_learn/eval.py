"""ROC analysis, TPR at a fixed FPR, and the learned-weight report.

ROC points are built from exact integer counts; a point with threshold
``t`` is the operating point "flag when score >= t".  The first point is
``(0, 0)`` with threshold ``+inf``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import baseline, learn
from .errors import DegenerateLabelsError, InconsistentSpaceError
from .features import FeatureMatrix, FeatureSpace, project, space_from_matrix
from .learn import LinearModel, TrainConfig

MODEL_KINDS = ("vanilla", "svm_l1", "svm_l2", "lr_l1", "lr_l2", "rf")
PLS = (1, 2, 3, 4)
C_GRID = (1e-3, 1e-2, 1e-1, 0.5, 1.0)
DEFAULT_C = 0.5
DEFAULT_FPR = 0.01


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float, float], ...]
    auc: float
    fp: tuple[int, ...] = ()
    tp: tuple[int, ...] = ()
    n_neg: int = 0
    n_pos: int = 0

    @property
    def fpr(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])


def roc(scores, labels) -> RocCurve:
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape or scores.size < 2:
        raise ValueError("need at least two scores with one label each")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not set(np.unique(labels).tolist()) <= {0, 1}:
        raise ValueError("labels must be 0 or 1")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("ROC needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    p = pos[order].astype(np.int64)
    tp = np.cumsum(p)
    fp = np.cumsum(1 - p)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.r_[0, tp[ends]]
    fp = np.r_[0, fp[ends]]
    thr = np.r_[np.inf, s[ends]]
    # trapezoids in integer arithmetic; one final division
    area2 = int(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])))
    auc = area2 / (2 * n_pos * n_neg)
    points = tuple((int(f) / n_neg, int(t) / n_pos, float(h)) for f, t, h in zip(fp, tp, thr))
    return RocCurve(points, auc, tuple(int(v) for v in fp), tuple(int(v) for v in tp),
                    n_neg, n_pos)


def pairwise_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), by counting every pair."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    sp, sn = scores[labels == 1], scores[labels == 0]
    if sp.size == 0 or sn.size == 0:
        raise DegenerateLabelsError("AUC needs both classes")
    gt = int((sp[:, None] > sn[None, :]).sum())
    eq = int((sp[:, None] == sn[None, :]).sum())
    return (2 * gt + eq) / (2 * sp.size * sn.size)


def tpr_at_fpr(curve: RocCurve, fpr_target: float = DEFAULT_FPR) -> float:
    """Highest TPR among points whose FPR does not exceed the target."""
    if not 0 < fpr_target < 1:
        raise ValueError("fpr_target must lie in (0, 1)")
    if curve.fp and curve.n_neg:
        limit = fpr_target * curve.n_neg
        ok = [t for f, t in zip(curve.fp, curve.tp) if f <= limit]
        return max(ok) / curve.n_pos
    return max(t for f, t, _ in curve.points if f <= fpr_target)


# --------------------------------------------------------------------------
# weight report

@dataclass(frozen=True)
class WeightRow:
    rule_id: int
    severity: int
    normalized_severity: float
    weights: tuple[float, ...]
    zero: bool
    negative: bool


@dataclass(frozen=True)
class SparsityReport:
    model_names: tuple[str, ...]
    rows: tuple[WeightRow, ...]
    degenerate: bool
    reference: str

    @property
    def zero_count(self) -> int:
        return sum(r.zero for r in self.rows)

    @property
    def negative_count(self) -> int:
        return sum(r.negative for r in self.rows)

    @property
    def discardable(self) -> list[int]:
        return [r.rule_id for r in self.rows if r.zero]


def normalize_severities(severities, lo: float, hi: float) -> np.ndarray:
    """Map the severity scale [2, 5] linearly onto [lo, hi]."""
    s = np.asarray(severities, dtype=float)
    return lo + (s - 2.0) / 3.0 * (hi - lo)


def sparsity_report(models: Mapping[str, LinearModel] | Sequence[LinearModel], severities,
                    rule_ids: Optional[Sequence[int]] = None, reference: Optional[str] = None,
                    eps: float = 1e-9) -> SparsityReport:
    """Per-rule weights next to the severities rescaled onto the weight range.

    The range and the zero/negative flags come from ``reference``, by default
    the first logistic l1 model.
    """
    if not isinstance(models, Mapping):
        models = {f"{'lr' if m.loss == 'logistic' else 'svm'}_{m.penalty}": m for m in models}
    if not models:
        raise ValueError("no models given")
    names = tuple(models)
    digests = {m.space_digest for m in models.values() if m.space_digest}
    if len(digests) > 1:
        raise InconsistentSpaceError(f"models come from different feature spaces: {sorted(digests)}")
    dims = {m.d for m in models.values()}
    severities = [int(s) for s in severities]
    if len(dims) != 1 or dims.pop() != len(severities):
        raise InconsistentSpaceError("models and severities differ in length")
    if reference is None:
        reference = next((n for n, m in models.items()
                          if m.penalty == "l1" and m.loss == "logistic"), names[0])
    ref = models[reference].weights
    if rule_ids is None:
        rule_ids = models[reference].feature_ids or tuple(range(len(severities)))
    lo, hi = float(ref.min()), float(ref.max())
    degenerate = hi == lo
    norm = normalize_severities(severities, lo, hi)
    rows = tuple(
        WeightRow(int(rid), sev, float(ns), tuple(float(models[n].weights[i]) for n in names),
                  bool(abs(ref[i]) <= eps), bool(ref[i] < -eps))
        for i, (rid, sev, ns) in enumerate(zip(rule_ids, severities, norm))
    )
    return SparsityReport(names, rows, degenerate, reference)


# --------------------------------------------------------------------------
# full evaluation

@dataclass
class MetricsReport:
    table: dict[str, dict[int, float]] = field(default_factory=dict)
    curves: dict[tuple[int, str], RocCurve] = field(default_factory=dict)
    spaces: dict[int, FeatureSpace] = field(default_factory=dict)
    models: dict[tuple[int, str], object] = field(default_factory=dict)
    sparsity: Optional[SparsityReport] = None
    chosen_c: dict[tuple[int, str], float] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)
    fpr_target: float = DEFAULT_FPR

    @property
    def model_names(self) -> list[str]:
        return [m for m in MODEL_KINDS if m in self.table] + \
            [m for m in self.table if m not in MODEL_KINDS]

    @property
    def pls(self) -> list[int]:
        return sorted({pl for row in self.table.values() for pl in row})


def model_config(kind: str, C: float, seed: int = 0) -> TrainConfig:
    family, penalty = kind.split("_")
    loss = "logistic" if family == "lr" else "squared_hinge"
    return TrainConfig(C=C, penalty=penalty, loss=loss, seed=seed)


def fit_model(kind: str, X: FeatureMatrix, y, C: float = DEFAULT_C, seed: int = 0,
              n_trees: int = 100, n_jobs: Optional[int] = 1):
    if kind == "rf":
        return learn.train_forest(X, y, n_trees=n_trees, seed=seed, n_jobs=n_jobs)
    if kind in ("svm_l1", "svm_l2", "lr_l1", "lr_l2"):
        return learn.train_linear(X, y, model_config(kind, C, seed))
    raise ValueError(f"unknown model kind {kind!r}")


def tune_c(kind: str, X: FeatureMatrix, y, grid: Sequence[float] = C_GRID, seed: int = 0,
           fpr_target: float = DEFAULT_FPR) -> float:
    """Pick C by TPR@FPR on a seeded, class-stratified 80/20 split of the training set."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    val = np.zeros(len(y), dtype=bool)
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == c))
        val[idx[:max(1, len(idx) // 5)]] = True
    fit_X = FeatureMatrix(X.bits[~val], X.space_digest, X.rule_ids)
    val_X = FeatureMatrix(X.bits[val], X.space_digest, X.rule_ids)
    best, best_key = None, None
    for C in grid:
        model = fit_model(kind, fit_X, y[~val], C, seed)
        curve = roc(learn.decision_scores(model, val_X), y[val])
        key = (tpr_at_fpr(curve, fpr_target), curve.auc)
        if best_key is None or key > best_key:
            best, best_key = C, key
    return float(best)


def evaluate_all(ruleset, train_payloads, y_train, test_payloads, y_test,
                 pls: Sequence[int] = PLS, models: Sequence[str] = MODEL_KINDS,
                 C: float | Mapping[str, float] = DEFAULT_C, tune: bool = False,
                 seed: int = 0, n_trees: int = 100, fpr_target: float = DEFAULT_FPR,
                 n_jobs: Optional[int] = None, full_bits=None,
                 c_grid: Sequence[float] = C_GRID) -> MetricsReport:
    """Train and score every (PL, model) pair on identical test features.

    Rule matching runs once over all payloads with every rule; each PL then
    keeps the rules enabled at that level that fire on some training payload.
    ``full_bits`` may pass a precomputed ``(train_bits, test_bits)`` pair with
    columns in ruleset order.
    """
    from .features import rule_matrix

    y_train = np.asarray(y_train)
    y_test = np.asarray(y_test)
    if full_bits is None:
        train_bits = rule_matrix(ruleset.rules, train_payloads, n_jobs)
        test_bits = rule_matrix(ruleset.rules, test_payloads, n_jobs)
    else:
        train_bits, test_bits = full_bits
    order = [r.id for r in ruleset.rules]
    report = MetricsReport(seeds={"model": seed, "tune": seed}, fpr_target=fpr_target)
    for pl in pls:
        space = space_from_matrix(ruleset, pl, train_bits)
        report.spaces[pl] = space
        Xtr = project(train_bits, order, space)
        Xte = project(test_bits, order, space)
        for kind in models:
            if kind == "vanilla":
                scorer = baseline.AnomalyScorer.from_space(space)
                scores = baseline.anomaly_scores(scorer, Xte)
                report.models[(pl, kind)] = scorer
            else:
                c = C.get(kind, DEFAULT_C) if isinstance(C, Mapping) else C
                if tune and kind != "rf":
                    c = tune_c(kind, Xtr, y_train, c_grid, seed, fpr_target)
                if kind != "rf":
                    report.chosen_c[(pl, kind)] = c
                model = fit_model(kind, Xtr, y_train, c, seed, n_trees, n_jobs)
                scores = learn.decision_scores(model, Xte)
                report.models[(pl, kind)] = model
            curve = roc(scores, y_test)
            report.curves[(pl, kind)] = curve
            report.table.setdefault(kind, {})[pl] = tpr_at_fpr(curve, fpr_target)
    top = max(pls)
    linear = {k: report.models[(top, k)] for k in ("lr_l1", "lr_l2") if (top, k) in report.models}
    if linear:
        report.sparsity = sparsity_report(linear, report.spaces[top].severities,
                                          report.spaces[top].rule_ids)
    return report


# --------------------------------------------------------------------------
# output files

def _num(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def _header(fh, comments: Sequence[str]):
    for c in comments:
        fh.write(f"# {c}\n")


def write_roc_csv(curve: RocCurve, path, comments: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        _header(fh, comments)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fpr", "tpr", "threshold"])
        for f, t, h in curve.points:
            w.writerow([_num(f), _num(t), _num(h)])


def read_roc_csv(path) -> list[tuple[float, float, float]]:
    with open(path, newline="") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(rows)
    return [(float(r["fpr"]), float(r["tpr"]), float(r["threshold"])) for r in reader]


def write_table_csv(report: MetricsReport, path, comments: Sequence[str] = ()) -> None:
    pls = report.pls
    with open(path, "w", newline="") as fh:
        _header(fh, comments)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model"] + [f"PL{pl}" for pl in pls])
        for name in report.model_names:
            row = report.table[name]
            w.writerow([name] + [_num(row[pl]) if pl in row else "" for pl in pls])


def read_table_csv(path) -> dict[str, dict[str, str]]:
    with open(path, newline="") as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(rows)
    return {r["model"]: {k: v for k, v in r.items() if k != "model"} for r in reader}


def write_weights_csv(rep: SparsityReport, path, comments: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        _header(fh, comments + (f"reference={rep.reference}", f"degenerate={rep.degenerate}"))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rule_id", "severity", "normalized_severity"]
                   + [f"w_{n}" for n in rep.model_names] + ["zero", "negative"])
        for r in rep.rows:
            w.writerow([r.rule_id, r.severity, _num(r.normalized_severity)]
                       + [_num(x) for x in r.weights] + [int(r.zero), int(r.negative)])


def write_report(report: MetricsReport, out_dir, comments: Sequence[str] = ()) -> list[Path]:
    """Write table1.csv, one ROC CSV per (PL, model) and weights_pl<top>.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comments = tuple(comments) + tuple(f"seed.{k}={v}" for k, v in sorted(report.seeds.items()))
    written = []
    path = out / "table1.csv"
    write_table_csv(report, path, comments + (f"fpr_target={report.fpr_target!r}",))
    written.append(path)
    for (pl, name), curve in sorted(report.curves.items()):
        path = out / f"roc_{pl}_{name}.csv"
        write_roc_csv(curve, path, comments + (f"auc={curve.auc!r}",))
        written.append(path)
    if report.sparsity is not None:
        path = out / f"weights_pl{max(report.pls)}.csv"
        write_weights_csv(report.sparsity, path, comments)
        written.append(path)
    return written


def render_svg(out_dir, path=None) -> Optional[Path]:
    """Plot every roc_*.csv in ``out_dir`` into one SVG; None without matplotlib."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        matplotlib.rcParams["svg.hashsalt"] = "crs-learn"
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    out = Path(out_dir)
    files = sorted(out.glob("roc_*_*.csv"))
    pls = sorted({int(f.stem.split("_")[1]) for f in files})
    if not pls:
        return None
    fig, axes = plt.subplots(1, len(pls), figsize=(4 * len(pls), 4), squeeze=False)
    for ax, pl in zip(axes[0], pls):
        for f in files:
            if int(f.stem.split("_")[1]) != pl:
                continue
            pts = read_roc_csv(f)
            ax.step([p[0] for p in pts], [p[1] for p in pts], where="post",
                    label=f.stem.split("_", 2)[2])
        ax.set_xscale("symlog", linthresh=1e-3)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_title(f"PL{pl}")
        ax.set_xlabel("FPR")
        ax.set_ylabel("TPR")
        ax.legend(fontsize="small", loc="lower right")
    fig.tight_layout()
    path = Path(path) if path else out / "roc.svg"
    # fixed metadata keeps the SVG byte-stable across runs
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
