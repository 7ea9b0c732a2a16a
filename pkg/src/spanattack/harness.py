"""Experiment runner: synthetic data, batch attacks, metrics and run comparison.

Output of ``write_report(report, out_dir)``:

* ``report.json``: metrics, counts, echoed configuration and a note on the
  query statistics. Keys are sorted and no timestamps are written, so equal
  runs give byte-identical files.
* ``instances.csv``: header ``index,label,status,queries_used,iterations,perturbation_norm,reason``;
  status is success, failure or skipped. Empty cells for skipped instances.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputError, InvariantViolation
from .hard import BoundaryConfig, SignOptConfig, boundary_attack, signopt_attack
from .linalg import gram_schmidt_orthonormalize
from .models import KNNModel, LabeledInstance, load_dataset, load_model, predict, save_dataset, save_model
from .soft import AttackConfig, soft_label_attack
from .subspace import (SubspaceBasis, build_basis, derive_seed, load_basis, make_rng, save_basis,
                       select_singular_vectors)

log = logging.getLogger(__name__)

ATTACKS = ("rgf", "spsa", "boundary", "signopt")
SPANNING_MODES = ("off", "full", "top-k", "bottom-k")
CSV_COLUMNS = ("index", "label", "status", "queries_used", "iterations", "perturbation_norm", "reason")
QUERY_STATS_NOTE = (
    "query_mean and query_median are computed over successful attacks only; "
    "an attack that fails on hard instances is not charged for them, which "
    "favours methods with lower success rates"
)


def epsilon_for(rule: str, dim: int, value: float | None = None) -> float:
    if rule == "sqrt-0.001-D":
        return float(np.sqrt(0.001 * dim))
    if rule == "absolute":
        if value is None or value <= 0:
            raise InputError("absolute epsilon rule needs a positive value")
        return float(value)
    raise InputError(f"unknown epsilon rule {rule!r}")


@dataclass
class ExperimentConfig:
    model_path: str
    eval_dataset_path: str
    master_seed: int
    subspace_dataset_path: str | None = None
    basis_path: str | None = None
    attack: str = "rgf"
    spanning_mode: str = "off"
    k: int | None = None
    basis_method: str = "svd"
    epsilon_rule: str = "sqrt-0.001-D"
    epsilon: float | None = None
    budget: int = 10_000
    output_path: str | None = None
    parallelism: int = 1
    attack_params: dict = field(default_factory=dict)
    header: bool = False
    max_instances: int | None = None

    def __post_init__(self):
        if self.attack not in ATTACKS:
            raise InputError(f"attack must be one of {ATTACKS}")
        if self.spanning_mode not in SPANNING_MODES:
            raise InputError(f"spanning_mode must be one of {SPANNING_MODES}")
        needs_k = self.spanning_mode in ("top-k", "bottom-k")
        if needs_k and (self.k is None or self.k < 1):
            raise InputError(f"spanning_mode {self.spanning_mode} needs k >= 1")
        if not needs_k and self.k is not None:
            raise InputError("k is only valid with top-k or bottom-k")
        if self.spanning_mode != "off" and not (self.subspace_dataset_path or self.basis_path):
            raise InputError("spanning needs a subspace dataset or a basis file")
        if self.budget < 1 or self.parallelism < 1:
            raise InputError("budget and parallelism must be >= 1")


@dataclass
class InstanceSummary:
    index: int
    label: int
    status: str
    queries_used: int | None = None
    iterations: int | None = None
    perturbation_norm: float | None = None
    reason: str = ""


@dataclass
class MetricsReport:
    success_rate: float
    query_mean: float | None
    query_median: float | None
    n_evaluated: int
    n_successes: int
    n_skipped: int
    per_instance: list
    config_echo: dict
    note: str = QUERY_STATS_NOTE

    def to_dict(self) -> dict:
        return {
            "metrics": {
                "success_rate": self.success_rate,
                "query_mean": self.query_mean,
                "query_median": self.query_median,
            },
            "counts": {"evaluated": self.n_evaluated, "successes": self.n_successes, "skipped": self.n_skipped},
            "config": self.config_echo,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict, per_instance=None) -> "MetricsReport":
        m, c = d["metrics"], d["counts"]
        return cls(m["success_rate"], m["query_mean"], m["query_median"], c["evaluated"], c["successes"],
                   c["skipped"], per_instance or [], d.get("config", {}), d.get("note", QUERY_STATS_NOTE))


# ---------------------------------------------------------------- attack dispatch


def run_single(model, instance: LabeledInstance, attack: str, epsilon: float, budget: int, seed: int,
               basis: SubspaceBasis | None = None, params: dict | None = None, counter=None):
    params = dict(params or {})
    kinds = {"rgf": (AttackConfig, soft_label_attack), "spsa": (AttackConfig, soft_label_attack),
             "boundary": (BoundaryConfig, boundary_attack), "signopt": (SignOptConfig, signopt_attack)}
    if attack not in kinds:
        raise InputError(f"unknown attack {attack!r}")
    config_cls, run = kinds[attack]
    if attack in ("rgf", "spsa"):
        params["estimator"] = attack
    try:
        cfg = config_cls(epsilon=epsilon, budget=budget, subspace=basis, seed=seed, **params)
    except TypeError as exc:
        raise InputError(f"bad parameter for {attack}: {exc}") from None
    return run(model, instance, cfg, counter)


_WORKER = {}


def _init_worker(state):
    _WORKER.update(state)


def _attack_one(i):
    w = _WORKER
    x, y = w["x"][i], int(w["y"][i])
    if predict(w["model"], x) != y:
        return InstanceSummary(i, y, "skipped", reason="misclassified")
    res = run_single(w["model"], LabeledInstance(x, y), w["attack"], w["epsilon"], w["budget"],
                     derive_seed(w["master_seed"], i), w["basis"], w["params"])
    if res.success and (predict(w["model"], x + res.perturbation) == y or res.norm > w["epsilon"] * (1 + 1e-9)):
        raise InvariantViolation(f"instance {i}: reported success fails the independent check")
    return InstanceSummary(i, y, "success" if res.success else "failure", res.queries_used, res.iterations,
                           res.norm, res.reason)


def evaluate(model, x, y, *, attack: str, epsilon: float, budget: int, master_seed: int,
             basis: SubspaceBasis | None = None, params: dict | None = None, parallelism: int = 1,
             config_echo: dict | None = None) -> MetricsReport:
    """Attack every correctly classified row of ``x`` and aggregate the metrics.

    Seeds derive from (master_seed, row index), so results do not depend on
    ``parallelism``.
    """
    state = dict(model=model, x=np.asarray(x, dtype=np.float64), y=np.asarray(y), attack=attack,
                 epsilon=float(epsilon), budget=int(budget), master_seed=int(master_seed), basis=basis,
                 params=dict(params or {}))
    indices = range(len(state["x"]))
    if parallelism > 1:
        with ProcessPoolExecutor(parallelism, initializer=_init_worker, initargs=(state,)) as pool:
            rows = list(pool.map(_attack_one, indices, chunksize=max(1, len(indices) // (4 * parallelism))))
    else:
        _init_worker(state)
        try:
            rows = [_attack_one(i) for i in indices]
        finally:
            _WORKER.clear()
    rows.sort(key=lambda r: r.index)
    return summarize(rows, config_echo or {})


def summarize(rows, config_echo) -> MetricsReport:
    attacked = [r for r in rows if r.status != "skipped"]
    skipped = len(rows) - len(attacked)
    if skipped:
        log.info("skipped %d misclassified instances", skipped)
    if not attacked:
        raise DataError("no correctly classified instances to attack", field="eval_dataset")
    queries = [r.queries_used for r in attacked if r.status == "success"]
    return MetricsReport(
        success_rate=len(queries) / len(attacked),
        query_mean=float(np.mean(queries)) if queries else None,
        query_median=float(np.median(queries)) if queries else None,
        n_evaluated=len(attacked),
        n_successes=len(queries),
        n_skipped=skipped,
        per_instance=rows,
        config_echo=config_echo,
    )


# ---------------------------------------------------------------- experiment from files


def _row_keys(x):
    return {np.ascontiguousarray(r).tobytes() for r in np.asarray(x, dtype=np.float64)}


def check_exclusive(eval_x, subspace_x) -> None:
    overlap = _row_keys(eval_x) & _row_keys(subspace_x)
    if overlap:
        raise DataError(f"{len(overlap)} instance(s) appear in both the evaluation and subspace datasets",
                        field="subspace_dataset")


def resolve_basis(config: ExperimentConfig, dim: int, eval_x=None) -> SubspaceBasis | None:
    if config.spanning_mode == "off":
        return None
    if config.basis_path:
        basis = load_basis(config.basis_path)
    else:
        s, _ = load_dataset(config.subspace_dataset_path, labeled=False, header=config.header)
        if eval_x is not None:
            check_exclusive(eval_x, s)
        method = "svd" if config.spanning_mode != "full" else config.basis_method
        basis = build_basis(s, method=method)
    if basis.dim != dim:
        raise DataError(f"basis dimension {basis.dim} != model dimension {dim}", field="basis")
    if config.spanning_mode == "top-k":
        basis = select_singular_vectors(basis, "top", config.k)
    elif config.spanning_mode == "bottom-k":
        basis = select_singular_vectors(basis, "bottom", config.k)
    return basis


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    model = load_model(config.model_path)
    x, y = load_dataset(config.eval_dataset_path, labeled=True, header=config.header)
    if x.shape[1] != model.dim:
        raise DataError(f"width {x.shape[1]} != model dim {model.dim}", field="eval_dataset")
    if config.max_instances is not None:
        x, y = x[: config.max_instances], y[: config.max_instances]
    basis = resolve_basis(config, model.dim, x)
    eps = epsilon_for(config.epsilon_rule, model.dim, config.epsilon)
    echo = {
        "model": os.path.basename(config.model_path),
        "eval_dataset": os.path.basename(config.eval_dataset_path),
        "subspace_dataset": os.path.basename(config.subspace_dataset_path) if config.subspace_dataset_path else None,
        "basis_file": os.path.basename(config.basis_path) if config.basis_path else None,
        "attack": config.attack,
        "spanning_mode": config.spanning_mode,
        "k": config.k,
        "basis_size": basis.size if basis is not None else None,
        "epsilon": eps,
        "budget": config.budget,
        "master_seed": config.master_seed,
        "attack_params": dict(sorted(config.attack_params.items())),
    }
    report = evaluate(model, x, y, attack=config.attack, epsilon=eps, budget=config.budget,
                      master_seed=config.master_seed, basis=basis, params=config.attack_params,
                      parallelism=config.parallelism, config_echo=echo)
    if config.output_path:
        write_report(report, config.output_path)
    return report


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(report: MetricsReport, out_dir) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.json")
    csv_path = os.path.join(out_dir, "instances.csv")
    with open(report_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in report.per_instance:
            writer.writerow([_cell(getattr(r, c)) for c in CSV_COLUMNS])
    return report_path, csv_path


def load_report(path) -> MetricsReport:
    """Read ``report.json`` (or a directory containing it)."""
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    try:
        with open(path) as fh:
            return MetricsReport.from_dict(json.load(fh))
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"not a metrics report ({exc})", field=str(path)) from None


# ---------------------------------------------------------------- comparison

_MUST_MATCH = ("model", "eval_dataset", "attack", "epsilon", "budget")


def _ratio(a, b):
    if a is None or b is None or a == 0:
        return None
    return b / a


def compare_runs(report_a: MetricsReport, report_b: MetricsReport) -> list[dict]:
    """Rows of (metric, a, b, b/a). ``a`` is normally the baseline run."""
    for key in _MUST_MATCH:
        va, vb = report_a.config_echo.get(key), report_b.config_echo.get(key)
        if va != vb:
            raise InputError(f"reports differ in {key}: {va!r} vs {vb!r}")
    rows = []
    for name in ("success_rate", "query_mean", "query_median"):
        a, b = getattr(report_a, name), getattr(report_b, name)
        rows.append({"metric": name, "a": a, "b": b, "ratio": _ratio(a, b)})
    return rows


def format_comparison(rows, label_a="baseline", label_b="spanning") -> str:
    def fmt(v):
        return "-" if v is None else f"{v:.4g}"

    lines = [f"{'metric':<14}{label_a:>12}{label_b:>12}{'ratio':>10}"]
    for r in rows:
        lines.append(f"{r['metric']:<14}{fmt(r['a']):>12}{fmt(r['b']):>12}{fmt(r['ratio']):>10}")
    return "\n".join(lines)


# ---------------------------------------------------------------- synthetic data


@dataclass
class SyntheticPaths:
    train: str
    eval: str
    subspace: str
    frame: str
    model: str | None = None


def generate_synthetic(dim, intrinsic_dim, n_train, n_eval, n_subspace, classes, seed, out_dir, *,
                       separation=0.6, spread=0.2, subspace_classes=None, knn_k=None) -> SyntheticPaths:
    """Gaussian-mixture data confined to a random ``intrinsic_dim``-dimensional frame of R^dim.

    Class means sit at pairwise distance ``separation`` (when classes <= intrinsic_dim)
    with isotropic in-frame noise of scale ``spread``. Writes train/eval (labeled),
    subspace (unlabeled, optionally restricted to ``subspace_classes``) and the
    frame as a basis file; with ``knn_k`` also a K-NN model on the train split.
    """
    if not 1 <= intrinsic_dim <= dim:
        raise InputError("need 1 <= intrinsic_dim <= dim")
    if min(n_train, n_eval, n_subspace) < 1 or classes < 2:
        raise InputError("counts must be >= 1 and classes >= 2")
    rng = make_rng(seed)
    frame = gram_schmidt_orthonormalize(rng.standard_normal((intrinsic_dim, dim)))
    if frame.size != intrinsic_dim:
        raise InputError("failed to draw a full-rank frame")
    if classes <= intrinsic_dim:
        q = gram_schmidt_orthonormalize(rng.standard_normal((classes, intrinsic_dim))).vectors
        means = q * (separation / np.sqrt(2.0))
    else:
        means = rng.standard_normal((classes, intrinsic_dim)) * separation
    allowed = np.arange(classes) if subspace_classes is None else np.asarray(sorted(subspace_classes))
    if allowed.size == 0 or allowed.min() < 0 or allowed.max() >= classes:
        raise InputError("subspace_classes must be a nonempty subset of the classes")

    def draw(n, labels_from):
        labels = rng.choice(labels_from, size=n)
        z = means[labels] + spread * rng.standard_normal((n, intrinsic_dim))
        return z @ frame.vectors, labels

    xtr, ytr = draw(n_train, np.arange(classes))
    xev, yev = draw(n_eval, np.arange(classes))
    xs, _ = draw(n_subspace, allowed)

    os.makedirs(out_dir, exist_ok=True)
    paths = SyntheticPaths(*(os.path.join(out_dir, n) for n in ("train.csv", "eval.csv", "subspace.csv",
                                                                  "frame.basis")))
    save_dataset(paths.train, xtr, ytr)
    save_dataset(paths.eval, xev, yev)
    save_dataset(paths.subspace, xs)
    save_basis(SubspaceBasis(frame, None, "gram-schmidt"), paths.frame)
    if knn_k is not None:
        paths.model = os.path.join(out_dir, "knn.json")
        save_model(KNNModel(xtr, ytr, knn_k, classes), paths.model)
    return paths
