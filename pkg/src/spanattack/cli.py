"""Command-line entry point: ``spanattack <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data/model error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness
from .errors import DataError, InputError, InvariantViolation, SpanAttackError
from .linalg import gram_schmidt_orthonormalize
from .minperturb import knn_min_perturbation, span_membership, svm_min_perturbation
from .models import LabeledInstance, QueryCounter, load_dataset, load_model, predict
from .subspace import (SubspaceBasis, build_basis, load_basis, random_basis, save_basis,
                       select_singular_vectors)

EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _param(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def _add_attack_args(p, seed_required):
    p.add_argument("--model", required=True)
    p.add_argument("--attack", choices=harness.ATTACKS, default="rgf")
    p.add_argument("--subspace-data", help="unlabeled CSV spanning the attack subspace")
    p.add_argument("--basis", help="basis file to use instead of --subspace-data")
    p.add_argument("--spanning-mode", choices=harness.SPANNING_MODES, default="off")
    p.add_argument("--k", type=int, help="vectors kept for top-k / bottom-k")
    p.add_argument("--basis-method", choices=("svd", "gram-schmidt"), default="svd")
    p.add_argument("--epsilon-rule", choices=("sqrt-0.001-D", "absolute"), default="sqrt-0.001-D")
    p.add_argument("--epsilon", type=float, help="radius for --epsilon-rule absolute")
    p.add_argument("--budget", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=seed_required, default=None if seed_required else 0)
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="attack hyper-parameter, e.g. q=10 or sigma=1.0 (repeatable)")
    p.add_argument("--header", action="store_true", help="CSV files start with a header row")


def build_parser():
    parser = _Parser(prog="spanattack", description="Subspace-constrained black-box attacks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate synthetic train/eval/subspace datasets")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--intrinsic-dim", type=int, required=True)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--n-eval", type=int, default=50)
    p.add_argument("--n-subspace", type=int, default=200)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--separation", type=float, default=0.6)
    p.add_argument("--spread", type=float, default=0.2)
    p.add_argument("--subspace-classes", type=_int_list, help="comma-separated classes for the subspace set")
    p.add_argument("--knn-k", type=int, help="also write a K-NN model on the train split")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("basis", help="build, inspect or export a subspace basis")
    bsub = p.add_subparsers(dest="basis_command", required=True, parser_class=_Parser)
    b = bsub.add_parser("build")
    b.add_argument("--subspace-data", required=True)
    b.add_argument("--header", action="store_true")
    b.add_argument("--method", choices=("svd", "gram-schmidt"), default="svd")
    b.add_argument("--select", choices=("top", "bottom"))
    b.add_argument("--k", type=int)
    b.add_argument("--out", required=True)
    b = bsub.add_parser("random", help="random orthonormal basis (no data prior)")
    b.add_argument("--dim", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--seed", type=int, required=True)
    b.add_argument("--out", required=True)
    b = bsub.add_parser("inspect")
    b.add_argument("path")

    p = sub.add_parser("attack", help="attack one instance and print a trace")
    _add_attack_args(p, seed_required=False)
    p.add_argument("--data", required=True, help="labeled CSV")
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("eval", help="attack a whole evaluation set")
    _add_attack_args(p, seed_required=True)
    p.add_argument("--eval-data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-instances", type=int)

    p = sub.add_parser("minperturb", help="exact minimum perturbation (K-NN or binary SVM)")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="labeled CSV holding the instance")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--header", action="store_true")
    p.add_argument("--span-data", help="unlabeled CSV whose span the residual is measured against")

    p = sub.add_parser("compare", help="compare a baseline and a spanning report")
    p.add_argument("baseline")
    p.add_argument("spanning")
    p.add_argument("--json", action="store_true")
    return parser


def _basis_from_args(args, model_dim, eval_x=None):
    cfg = harness.ExperimentConfig(model_path="", eval_dataset_path="", master_seed=0,
                                   subspace_dataset_path=args.subspace_data, basis_path=args.basis,
                                   spanning_mode=args.spanning_mode, k=args.k, basis_method=args.basis_method,
                                   header=args.header)
    return harness.resolve_basis(cfg, model_dim, eval_x)


def cmd_gen(args):
    paths = harness.generate_synthetic(args.dim, args.intrinsic_dim, args.n_train, args.n_eval, args.n_subspace,
                                       args.classes, args.seed, args.out, separation=args.separation,
                                       spread=args.spread, subspace_classes=args.subspace_classes,
                                       knn_k=args.knn_k)
    print(json.dumps(vars(paths), indent=2))


def cmd_basis(args):
    if args.basis_command == "build":
        s, _ = load_dataset(args.subspace_data, labeled=False, header=args.header)
        basis = build_basis(s, method=args.method)
        if args.select:
            if args.k is None:
                raise InputError("--select needs --k")
            basis = select_singular_vectors(basis, args.select, args.k)
        save_basis(basis, args.out)
    elif args.basis_command == "random":
        basis = random_basis(args.dim, args.k, args.seed)
        save_basis(basis, args.out)
    else:
        basis = load_basis(args.path)
    gram_err = float(np.max(np.abs(basis.vectors @ basis.vectors.T - np.eye(basis.size))))
    info = {"dim": basis.dim, "size": basis.size, "provenance": basis.provenance, "orthonormality_error": gram_err}
    if basis.singular_values is not None:
        sv = basis.singular_values
        info["singular_values"] = {"max": float(sv[0]), "min": float(sv[-1])}
    print(json.dumps(info, indent=2))


def cmd_attack(args):
    model = load_model(args.model)
    x, y = load_dataset(args.data, labeled=True, header=args.header)
    if not 0 <= args.index < len(x):
        raise InputError(f"--index must lie in [0, {len(x)})")
    basis = _basis_from_args(args, model.dim, x)
    eps = harness.epsilon_for(args.epsilon_rule, model.dim, args.epsilon)
    inst = LabeledInstance(x[args.index], int(y[args.index]))
    params = dict(args.param)
    params["record_trace"] = True
    counter = QueryCounter()
    res = harness.run_single(model, inst, args.attack, eps, args.budget, args.seed, basis, params, counter)
    _verify(model, inst, res, eps)
    for t, d in enumerate(res.trace):
        line = f"iterate {t}: |delta| = {np.linalg.norm(d):.6g}"
        if basis is not None:
            line += f"  subspace residual = {basis.residual(d):.3e}"
        print(line)
    print(json.dumps({
        "success": res.success, "queries_used": res.queries_used, "soft_queries": counter.soft_queries,
        "hard_queries": counter.hard_queries, "iterations": res.iterations, "perturbation_norm": res.norm,
        "epsilon": eps, "reason": res.reason,
    }, indent=2))


def _verify(model, inst, res, eps):
    if res.success:
        if predict(model, inst.x + res.perturbation) == inst.y or res.norm > eps * (1 + 1e-9):
            raise InvariantViolation("reported success does not hold up to an independent check")


def cmd_eval(args):
    cfg = harness.ExperimentConfig(
        model_path=args.model, eval_dataset_path=args.eval_data, master_seed=args.seed,
        subspace_dataset_path=args.subspace_data, basis_path=args.basis, attack=args.attack,
        spanning_mode=args.spanning_mode, k=args.k, basis_method=args.basis_method,
        epsilon_rule=args.epsilon_rule, epsilon=args.epsilon, budget=args.budget, output_path=args.out,
        parallelism=args.workers, attack_params=dict(args.param), header=args.header,
        max_instances=args.max_instances,
    )
    report = harness.run_experiment(cfg)
    print(json.dumps(report.to_dict()["metrics"], indent=2, sort_keys=True))


def cmd_minperturb(args):
    model = load_model(args.model)
    x, y = load_dataset(args.data, labeled=True, header=args.header)
    if not 0 <= args.index < len(x):
        raise InputError(f"--index must lie in [0, {len(x)})")
    xi = x[args.index]
    yi = predict(model, xi)
    out = {"index": args.index, "label": int(y[args.index]), "predicted": yi}
    if model.kind == "knn":
        delta, witness = knn_min_perturbation(model.train_x, model.train_y, xi, yi, model.k)
        out["witness_set"] = list(witness)
        span_rows = model.train_x
    elif model.kind == "svm" and model.binary:
        delta = svm_min_perturbation(model.weights[0], model.biases[0], xi)
        span_rows = model.weights
    else:
        raise InputError("minperturb supports K-NN and binary linear SVM models only")
    if args.span_data:
        span_rows, _ = load_dataset(args.span_data, labeled=False, header=args.header)
    basis = SubspaceBasis(gram_schmidt_orthonormalize(span_rows))
    member, residual = span_membership(basis, delta)
    out.update({"delta": delta.tolist(), "norm": float(np.linalg.norm(delta)), "span_residual": residual,
                "in_span": bool(member)})
    print(json.dumps(out, indent=2))


def cmd_compare(args):
    a, b = harness.load_report(args.baseline), harness.load_report(args.spanning)
    rows = harness.compare_runs(a, b)
    print(json.dumps(rows, indent=2) if args.json else harness.format_comparison(rows))


COMMANDS = {"gen": cmd_gen, "basis": cmd_basis, "attack": cmd_attack, "eval": cmd_eval,
            "minperturb": cmd_minperturb, "compare": cmd_compare}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except InputError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SpanAttackError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
