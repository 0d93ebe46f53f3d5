"""``crs-learn`` command line: parse, extract, train, eval, run.

Exit status is 0 on success, 1 when ``--check`` finds a cell outside its
tolerance, and 2 for usage or input errors.

Every command accepts ``--config FILE`` with ``key = value`` lines whose keys
are long option names; options given on the command line win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import data as data_mod
from . import eval as eval_mod
from . import learn
from .baseline import AnomalyScorer, anomaly_scores
from .errors import CrsLearnError, RuleParseError
from .features import (
    FeatureMatrix,
    FeatureSpace,
    default_jobs,
    extract_batch,
    read_binary,
    read_csv,
    rule_matrix,
    space_from_matrix,
    write_binary,
    write_csv,
)
from .seclang import dump_ruleset, load_conf, rules_at_pl

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
OUTPUT_OPTIONS = ("out", "out_dir", "dump")


class UsageError(Exception):
    """Bad input detected by a command; reported with exit status 2."""


# --------------------------------------------------------------------------
# manifest

def build_manifest(command: str, config: dict, ruleset_digest: str = "",
                   dataset_digests: Optional[dict] = None) -> dict:
    return {
        "tool": "crs-learn",
        "version": __version__,
        "command": command,
        "config": config,
        "ruleset_digest": ruleset_digest,
        "dataset_digests": dataset_digests or {},
        "python": platform.python_version(),
        "numpy": np.__version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def manifest_hash(manifest: dict) -> str:
    """Hash of the inputs: timestamp and output locations are left out."""
    body = {k: v for k, v in manifest.items() if k != "created"}
    body["config"] = {k: v for k, v in body.get("config", {}).items()
                      if k not in OUTPUT_OPTIONS}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_manifest(manifest: dict, path: Path) -> str:
    """Write ``manifest`` to ``path`` (a directory gets ``manifest.json``)."""
    h = manifest_hash(manifest)
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    with open(path, "w") as fh:
        json.dump({**manifest, "hash": h}, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")
    return h


def _echo(args: argparse.Namespace) -> dict:
    skip = {"func", "config"}
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        out[k] = [str(x) for x in v] if isinstance(v, list) else (
            v if isinstance(v, (int, float, bool, type(None))) else str(v))
    return out


# --------------------------------------------------------------------------
# argument helpers

def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def _pl(text: str) -> int:
    value = int(text)
    if value not in (1, 2, 3, 4):
        raise argparse.ArgumentTypeError("paranoia level must be 1..4")
    return value


def _int_list(text: str) -> list[int]:
    return [_pl(t) for t in text.split(",") if t.strip()]


def _name_list(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in eval_mod.MODEL_KINDS]
    if bad:
        raise argparse.ArgumentTypeError(
            f"unknown model(s) {bad}; choose from {','.join(eval_mod.MODEL_KINDS)}")
    return names


def _float_list(text: str) -> list[float]:
    return [_positive_float(t) for t in text.split(",") if t.strip()]


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, quotes around values are dropped."""
    out = {}
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip() if not raw.lstrip().startswith("#") else ""
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
                value = value[1:-1]
            out[key.replace("-", "_")] = value
    return out


def _add_dataset_args(p: argparse.ArgumentParser):
    p.add_argument("--dataset", action="append", default=None,
                   help="labeled corpus; repeat to combine files")
    p.add_argument("--format", choices=data_mod.FORMATS, default=None,
                   help="corpus format (default: from the file extension)")
    p.add_argument("--label", default=None,
                   help="label for 'lines' files (0/benign or 1/sqli)")
    p.add_argument("--train", default=None, help="pre-split training corpus")
    p.add_argument("--test", default=None, help="pre-split test corpus")
    p.add_argument("--per-class", type=int, default=None,
                   help="balanced selection size per class (default: smaller class)")
    p.add_argument("--train-per-class", type=int, default=None)
    p.add_argument("--test-per-class", type=int, default=None)
    p.add_argument("--dedup", action="store_true",
                   help="drop repeated payloads before balanced selection")
    p.add_argument("--permissive-data", action="store_true",
                   help="skip malformed corpus records instead of failing")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crs-learn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None, help="key = value defaults file")
        return p

    p = command("parse", "parse a rule file and summarize it")
    p.add_argument("conf")
    p.add_argument("--strict", action="store_true", help="fail on the first invalid rule")
    p.add_argument("--dump", default=None, help="write the canonical JSON dump here")
    p.set_defaults(func=cmd_parse)

    p = command("extract", "compute rule-match feature matrices")
    p.add_argument("--conf", required=True)
    p.add_argument("--pl", type=_pl, default=4)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-prune", action="store_true",
                   help="keep rules that never fire on the training set")
    _add_dataset_args(p)
    p.set_defaults(func=cmd_extract)

    p = command("train", "train one model on extracted features")
    p.add_argument("--features", required=True, help="directory written by 'extract'")
    p.add_argument("--model", choices=("lr", "svm", "rf"), required=True)
    p.add_argument("--penalty", choices=("l1", "l2"), default=None)
    p.add_argument("--loss", choices=learn.linear.LOSSES, default=None,
                   help="override the loss (svm default: squared_hinge)")
    p.add_argument("--c", type=_positive_float, default=eval_mod.DEFAULT_C)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--tol", type=_positive_float, default=1e-8)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_train)

    p = command("eval", "score models on test features and write the report")
    p.add_argument("--features", required=True, help="directory written by 'extract'")
    p.add_argument("--models", nargs="*", default=[], help="model JSON files")
    p.add_argument("--labels", default=None, help="test label file (default: in --features)")
    p.add_argument("--no-vanilla", action="store_true", help="leave out the anomaly scorer")
    p.add_argument("--threshold", type=float, default=5,
                   help="anomaly threshold for the single-point vanilla verdicts")
    p.add_argument("--fpr", type=float, default=eval_mod.DEFAULT_FPR)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--svg", action="store_true", help="also render roc.svg")
    p.add_argument("--check", default=None, help="expected table1 values")
    p.add_argument("--tol", type=float, default=0.0, help="default --check tolerance")
    p.set_defaults(func=cmd_eval)

    p = command("run", "full matrix: every PL x model, trained and evaluated")
    p.add_argument("--conf", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--pls", type=_int_list, default="1,2,3,4")
    p.add_argument("--models", type=_name_list, default=",".join(eval_mod.MODEL_KINDS))
    p.add_argument("--c", type=_positive_float, default=eval_mod.DEFAULT_C)
    p.add_argument("--tune", action="store_true",
                   help="pick C per model from the grid on an 80/20 split of train")
    p.add_argument("--c-grid", type=_float_list,
                   default=",".join(str(c) for c in eval_mod.C_GRID))
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--fpr", type=float, default=eval_mod.DEFAULT_FPR)
    p.add_argument("--svg", action="store_true")
    p.add_argument("--save-models", action="store_true",
                   help="write every trained model to <out-dir>/models")
    p.add_argument("--check", default=None)
    p.add_argument("--tol", type=float, default=0.0)
    _add_dataset_args(p)
    p.set_defaults(func=cmd_run)
    return parser


def _config_path(argv: Sequence[str]) -> Optional[str]:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str], path: str):
    """Install values from the config file as defaults of the chosen subcommand."""
    choices = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in argv if tok in choices), None)
    if command is None:
        return
    subparser = choices[command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, value in read_config(path).items():
        action = known.get(key)
        if action is None or key in ("help", "config") or not action.option_strings:
            raise UsageError(f"{path}: unknown option {key!r} for {command}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            defaults[key] = _bool(value)
        elif isinstance(action, argparse._AppendAction):
            defaults[key] = [v.strip() for v in value.split(",")]
        elif action.nargs in ("*", "+"):
            defaults[key] = value.split()
        else:
            defaults[key] = value
        # the file satisfies options that are otherwise required
        action.required = False
    subparser.set_defaults(**defaults)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    config = _config_path(argv)
    if config:
        if not Path(config).exists():
            raise UsageError(f"config file not found: {config}")
        _apply_config(parser, argv, config)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# shared steps

def _load_ruleset(path, mode="permissive"):
    try:
        return load_conf(path, mode=mode)
    except FileNotFoundError:
        raise UsageError(f"rule file not found: {path}") from None


def _load_corpus(args, path):
    label = args.label if getattr(args, "label", None) is not None else None
    try:
        corpus = data_mod.load_corpus(path, args.format, label,
                                      strict=not args.permissive_data)
    except FileNotFoundError:
        raise UsageError(f"dataset not found: {path}") from None
    if corpus.skipped:
        print(f"{path}: skipped {len(corpus.skipped)} malformed record(s)", file=sys.stderr)
    return list(corpus)


def select_and_split(args):
    """Train/test samples from --train/--test or from --dataset plus the split flags."""
    if args.train or args.test:
        if not (args.train and args.test):
            raise UsageError("--train and --test go together")
        return _load_corpus(args, args.train), _load_corpus(args, args.test)
    if not args.dataset:
        raise UsageError("give --dataset or --train/--test")
    samples = []
    for path in args.dataset:
        samples.extend(_load_corpus(args, path))
    counts = [sum(s.label == lab for s in samples) for lab in (0, 1)]
    per_class = args.per_class if args.per_class is not None else min(counts)
    selected = data_mod.balanced_select(samples, per_class, args.seed, args.dedup)
    train_n = args.train_per_class
    test_n = args.test_per_class
    if train_n is None and test_n is None:
        train_n = int(round(per_class * 0.8))
    if train_n is None:
        train_n = per_class - test_n
    if test_n is None:
        test_n = per_class - train_n
    return data_mod.split(selected, data_mod.SplitSpec(train_n, test_n, args.seed))


def _write_labels(y, path):
    with open(path, "w") as fh:
        fh.writelines(f"{int(v)}\n" for v in y)


def _read_labels(path) -> np.ndarray:
    try:
        with open(path) as fh:
            return np.array([int(ln) for ln in fh if ln.strip()], dtype=np.int64)
    except FileNotFoundError:
        raise UsageError(f"label file not found: {path}") from None
    except ValueError:
        raise UsageError(f"label file {path} must hold one 0/1 per line") from None


def _load_split(features_dir: Path, name: str, space: FeatureSpace) -> FeatureMatrix:
    binary = features_dir / f"{name}.crsf"
    if binary.exists():
        return read_binary(binary, space)
    path = features_dir / f"{name}.csv"
    if not path.exists():
        raise UsageError(f"no {name} features in {features_dir}")
    m = read_csv(path, space.digest)
    if m.rule_ids != space.rule_ids:
        raise UsageError(f"{path} columns do not match space.json")
    return m


def _load_space(features_dir: Path) -> FeatureSpace:
    path = features_dir / "space.json"
    if not path.exists():
        raise UsageError(f"{features_dir} has no space.json; run 'extract' first")
    return FeatureSpace.load(path)


def model_name(model) -> str:
    if isinstance(model, learn.ForestModel):
        return "rf"
    family = "lr" if model.loss == "logistic" else "svm"
    name = f"{family}_{model.penalty}"
    return name if model.loss != "hinge" else name + "_hinge"


# --------------------------------------------------------------------------
# --check

def _parse_expectation(cell: str, default_tol: float):
    cell = cell.strip()
    if cell in ("", "*"):
        return None
    if cell.startswith(">="):
        return (">=", float(cell[2:]), 0.0)
    if cell.startswith("<="):
        return ("<=", float(cell[2:]), 0.0)
    for sep in ("+-", "±"):
        if sep in cell:
            v, t = cell.split(sep, 1)
            return ("~", float(v), float(t))
    return ("~", float(cell), default_tol)


def check_table(table_path, expected_path, default_tol: float = 0.0) -> tuple[bool, list[str]]:
    """Compare table1.csv with an expected-values file of the same layout.

    Cells hold ``value``, ``value+-tol``, ``>=value``, ``<=value`` or ``*``.
    """
    got = eval_mod.read_table_csv(table_path)
    want = eval_mod.read_table_csv(expected_path)
    ok, lines = True, []
    for model, cols in want.items():
        for col, cell in cols.items():
            exp = _parse_expectation(cell or "", default_tol)
            if exp is None:
                continue
            raw = got.get(model, {}).get(col, "")
            if raw in ("", None):
                ok = False
                lines.append(f"FAIL {model} {col}: missing (expected {cell})")
                continue
            value = float(raw)
            op, target, tol = exp
            passed = (value >= target if op == ">=" else
                      value <= target if op == "<=" else abs(value - target) <= tol + 1e-12)
            ok &= passed
            lines.append(f"{'PASS' if passed else 'FAIL'} {model} {col}: {value:.4f} "
                         f"(expected {cell.strip()})")
    return ok, lines


def _maybe_check(args, out_dir: Path) -> int:
    if not args.check:
        return EXIT_OK
    if not Path(args.check).exists():
        raise UsageError(f"expected-values file not found: {args.check}")
    ok, lines = check_table(out_dir / "table1.csv", args.check, args.tol)
    for ln in lines:
        print(ln)
    return EXIT_OK if ok else EXIT_CHECK


# --------------------------------------------------------------------------
# commands

def cmd_parse(args) -> int:
    if not Path(args.conf).exists():
        raise UsageError(f"rule file not found: {args.conf}")
    try:
        rs = load_conf(args.conf, mode="strict" if args.strict else "permissive")
    except RuleParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    counts = rs.pl_counts()
    print(f"scoring rules: {len(rs)}")
    for pl in (1, 2, 3, 4):
        print(f"  PL{pl}: {counts.get(pl, 0)}")
    print(f"ignored directives: {len(rs.ignored)}")
    print(f"skipped: {len(rs.skipped)}")
    for s in rs.skipped:
        print(f"  {s.rule_id} (line {s.line}): {s.reason}")
    for w in rs.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"digest: {rs.source_digest}")
    if args.dump:
        Path(args.dump).write_text(dump_ruleset(rs) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_extract(args) -> int:
    rs = _load_ruleset(args.conf)
    train, test = select_and_split(args)
    if not train:
        raise UsageError("training split is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = default_jobs()
    enabled = rules_at_pl(rs, args.pl)
    if args.no_prune:
        from .features import full_space
        space = full_space(rs, args.pl)
    else:
        bits = rule_matrix(enabled.rules, data_mod.payloads(train), jobs)
        space = space_from_matrix(enabled, args.pl, bits)
        space = FeatureSpace(space.rule_ids, space.pl, space.severities, rs.source_digest)
    manifest = build_manifest("extract", _echo(args), rs.source_digest, {
        "train": data_mod.dataset_digest(train), "test": data_mod.dataset_digest(test)})
    h = write_manifest(manifest, out)
    space.save(out / "space.json", manifest=h)
    for name, samples in (("train", train), ("test", test)):
        m = extract_batch(space, rs, data_mod.payloads(samples), jobs)
        write_csv(m, out / f"{name}.csv", comment=f"manifest={h} space={space.digest}")
        write_binary(m, out / f"{name}.crsf")
        _write_labels(data_mod.labels(samples), out / f"{name}_labels.txt")
        data_mod.export_jsonl(samples, out / f"{name}.jsonl")
    print(f"PL{args.pl}: {space.d} features, {len(train)} train / {len(test)} test samples")
    print(f"space digest {space.digest}, manifest {h}")
    return EXIT_OK


def cmd_train(args) -> int:
    fdir = Path(args.features)
    space = _load_space(fdir)
    X = _load_split(fdir, "train", space)
    y = _read_labels(fdir / "train_labels.txt")
    if len(y) != len(X):
        raise UsageError(f"{len(X)} feature rows but {len(y)} labels")
    manifest = build_manifest("train", _echo(args), space.ruleset_digest,
                              {"train_features": hashlib.sha256(X.bits.tobytes()).hexdigest()[:16]})
    h = manifest_hash(manifest)
    if args.model == "rf":
        if args.penalty or args.loss:
            print("warning: --penalty/--loss ignored for rf", file=sys.stderr)
        model = learn.train_forest(X, y, args.n_trees, args.seed, default_jobs())
        print(f"rf: {args.n_trees} trees, {space.d} features")
    else:
        loss = args.loss or ("logistic" if args.model == "lr" else "squared_hinge")
        cfg = learn.TrainConfig(C=args.c, penalty=args.penalty or "l2", loss=loss,
                                max_iters=args.max_iter, tol=args.tol, seed=args.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = learn.train_linear(X, y, cfg)
        if not model.converged:
            print(f"warning: solver did not converge in {model.n_iter} iterations",
                  file=sys.stderr)
        print(f"{model_name(model)}: C={model.C!r} objective={model.objective:.10g} "
              f"zero_weights={learn.zero_weight_count(model)}/{model.d} "
              f"iterations={model.n_iter}")
    model.extra["manifest"] = h
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    learn.save_model(model, out)
    write_manifest(manifest, out.with_name(out.stem + ".manifest.json"))
    return EXIT_OK


def cmd_eval(args) -> int:
    fdir = Path(args.features)
    space = _load_space(fdir)
    X = _load_split(fdir, "test", space)
    y = _read_labels(args.labels or fdir / "test_labels.txt")
    if len(y) != len(X):
        raise UsageError(f"{len(X)} feature rows but {len(y)} labels")
    if not 0 < args.fpr < 1:
        raise UsageError("--fpr must lie in (0, 1)")
    models = []
    for path in args.models:
        if not Path(path).exists():
            raise UsageError(f"model not found: {path}")
        models.append(learn.load_model(path))
    if args.no_vanilla and not models:
        raise UsageError("nothing to evaluate")
    report = eval_mod.MetricsReport(fpr_target=args.fpr)
    pl = space.pl
    entries = []
    if not args.no_vanilla:
        scorer = AnomalyScorer.from_space(space, args.threshold)
        entries.append(("vanilla", anomaly_scores(scorer, X)))
    for model in models:
        if model.space_digest and model.space_digest != space.digest:
            raise UsageError(f"model space {model.space_digest} != features {space.digest}")
        entries.append((model_name(model), learn.decision_scores(model, X.bits)))
        report.models[(pl, model_name(model))] = model
        report.seeds[model_name(model)] = model.seed
    for name, scores in entries:
        curve = eval_mod.roc(scores, y)
        report.curves[(pl, name)] = curve
        report.table.setdefault(name, {})[pl] = eval_mod.tpr_at_fpr(curve, args.fpr)
    linear = {n: m for (p, n), m in report.models.items()
              if isinstance(m, learn.LinearModel) and n in ("lr_l1", "lr_l2")}
    if linear:
        report.sparsity = eval_mod.sparsity_report(linear, space.severities, space.rule_ids)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = build_manifest("eval", _echo(args), space.ruleset_digest,
                              {"test_features": hashlib.sha256(X.bits.tobytes()).hexdigest()[:16]})
    h = write_manifest(manifest, out)
    eval_mod.write_report(report, out, (f"manifest={h}",))
    if not args.no_vanilla:
        verdicts = (anomaly_scores(AnomalyScorer.from_space(space, args.threshold), X)
                    >= args.threshold)
        tpr = float(verdicts[y == 1].mean()) if (y == 1).any() else float("nan")
        fpr = float(verdicts[y == 0].mean()) if (y == 0).any() else float("nan")
        print(f"vanilla @ threshold {args.threshold:g}: TPR={tpr:.4f} FPR={fpr:.4f}")
    _print_table(report)
    if args.svg:
        eval_mod.render_svg(out)
    return _maybe_check(args, out)


def _print_table(report):
    pls = report.pls
    print("model     " + "".join(f"{'PL' + str(p):>9}" for p in pls))
    for name in report.model_names:
        row = report.table[name]
        print(f"{name:<10}" + "".join(
            f"{100 * row[p]:>8.2f}%" if p in row else " " * 9 for p in pls))


def cmd_run(args) -> int:
    rs = _load_ruleset(args.conf)
    train, test = select_and_split(args)
    if not train or not test:
        raise UsageError("both splits must be non-empty")
    if not 0 < args.fpr < 1:
        raise UsageError("--fpr must lie in (0, 1)")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = default_jobs()
    xtr, ytr = data_mod.payloads(train), data_mod.labels(train)
    xte, yte = data_mod.payloads(test), data_mod.labels(test)
    full = (rule_matrix(rs.rules, xtr, jobs), rule_matrix(rs.rules, xte, jobs))
    report = eval_mod.evaluate_all(
        rs, xtr, ytr, xte, yte, pls=args.pls, models=args.models, C=args.c,
        tune=args.tune, seed=args.seed, n_trees=args.n_trees, fpr_target=args.fpr,
        n_jobs=jobs, full_bits=full, c_grid=args.c_grid)
    report.seeds["split"] = args.seed
    manifest = build_manifest("run", _echo(args), rs.source_digest, {
        "train": data_mod.dataset_digest(train), "test": data_mod.dataset_digest(test)})
    manifest["chosen_c"] = {f"PL{pl}/{k}": c for (pl, k), c in sorted(report.chosen_c.items())}
    manifest["feature_counts"] = {f"PL{pl}": s.d for pl, s in sorted(report.spaces.items())}
    h = write_manifest(manifest, out)
    eval_mod.write_report(report, out, (f"manifest={h}",))
    for pl, space in sorted(report.spaces.items()):
        space.save(out / f"space_pl{pl}.json", manifest=h)
    if args.save_models:
        mdir = out / "models"
        mdir.mkdir(exist_ok=True)
        for (pl, name), model in sorted(report.models.items()):
            if isinstance(model, (learn.LinearModel, learn.ForestModel)):
                model.extra["manifest"] = h
                learn.save_model(model, mdir / f"pl{pl}_{name}.json")
    print("features per PL: " + ", ".join(
        f"PL{pl}={s.d}" for pl, s in sorted(report.spaces.items())))
    _print_table(report)
    if report.sparsity is not None:
        sp = report.sparsity
        print(f"{sp.reference}: {sp.zero_count} zero weights, {sp.negative_count} negative")
    if args.svg:
        eval_mod.render_svg(out)
    return _maybe_check(args, out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, CrsLearnError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
