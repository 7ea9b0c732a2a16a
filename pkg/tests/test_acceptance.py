"""End-to-end exit criteria. Each test records one PASS/FAIL line, shown in the
terminal summary under "acceptance criteria"."""

import itertools
import time

import numpy as np
import pytest
from conftest import CountingModel, record_criterion
from test_minperturb import grid_qp_objective, random_2d_problem

from spanattack import harness
from spanattack.hard import BoundaryConfig, SignOptConfig, boundary_attack, signopt_attack
from spanattack.linalg import gram_schmidt_orthonormalize, projector_distance
from spanattack.minperturb import QpProblem, knn_constraints, knn_min_perturbation, solve_qp, svm_min_perturbation
from spanattack.models import KNNModel, LabeledInstance, LinearSVM, MLPModel, predict
from spanattack.subspace import (IsometricSampler, SubspaceBasis, build_basis, random_basis, sample_in_subspace,
                                 save_basis)

pytestmark = pytest.mark.acceptance


# ---------------------------------------------------------------- 1


def test_criterion_1_knn_perturbation_in_training_span():
    r = np.random.default_rng(101)
    start = time.perf_counter()
    worst, done = 0.0, 0
    while done < 50:
        frame = r.standard_normal((5, 12))
        tx = r.standard_normal((20, 5)) @ frame
        ty = r.integers(0, 2, 20)
        k = (1, 3)[done % 2]
        x = r.standard_normal(5) @ frame
        y = predict(KNNModel(tx, ty, k, 2), x)
        if np.all(ty == y) or np.sum(ty != y) < (k + 1) // 2:
            continue
        delta, _ = knn_min_perturbation(tx, ty, x, y, k)
        basis = SubspaceBasis(gram_schmidt_orthonormalize(tx))
        worst = max(worst, basis.residual(delta) / max(1.0, np.linalg.norm(delta)))
        done += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 60
    record_criterion(1, ok, f"50 K-NN instances, worst relative span residual {worst:.2e}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_svm_closed_form():
    r = np.random.default_rng(202)
    worst_plane = worst_cross = 0.0
    for _ in range(1000):
        d = int(r.integers(1, 17))
        w, b, x = r.standard_normal(d), r.standard_normal(), r.standard_normal(d)
        delta = svm_min_perturbation(w, b, x)
        worst_plane = max(worst_plane, abs(w @ (x + delta) + b))
        worst_cross = max(worst_cross, np.linalg.norm(delta - (delta @ w) / (w @ w) * w))
    ok = worst_plane <= 1e-10 and worst_cross <= 1e-10
    record_criterion(2, ok, f"1000 triples, hyperplane residual {worst_plane:.1e}, cross residual {worst_cross:.1e}")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_qp_certificates_and_grid_oracle():
    r = np.random.default_rng(303)
    solved = certified = 0
    worst_gap = 0.0
    for _ in range(100):
        A, b = random_2d_problem(r)
        prob = QpProblem(A, b)
        s = solve_qp(prob)
        solved += 1
        certified += s.certified(prob, 1e-8)
        worst_gap = max(worst_gap, abs(s.objective - grid_qp_objective(A, b)))
    # desk-scale problems: up to 200 constraints, D up to 100
    for _ in range(60):
        d, m = int(r.integers(2, 101)), int(r.integers(1, 201))
        prob = QpProblem(r.standard_normal((m, d)), r.standard_normal(m))
        s = solve_qp(prob)
        if s.status == "optimal":
            solved += 1
            certified += s.certified(prob, 1e-8)
    # K-NN constraint systems
    for _ in range(40):
        tx = r.standard_normal((12, 6))
        T = tuple(sorted(r.choice(12, size=3, replace=False)))
        prob = knn_constraints(tx, r.standard_normal(6), T)
        s = solve_qp(prob)
        if s.status == "optimal":
            solved += 1
            certified += s.certified(prob, 1e-8)
    ok = certified == solved and worst_gap <= 1e-2
    record_criterion(3, ok, f"{certified}/{solved} optima KKT-certified at 1e-8, worst grid gap {worst_gap:.2e}")
    assert ok


# ---------------------------------------------------------------- 4


def _span_dataset(r, i):
    d = int(r.integers(3, 20))
    n = int(r.integers(2, 30))
    kind = i % 4
    if kind == 0:  # generic
        return r.standard_normal((n, d))
    if kind == 1:  # rank-deficient
        rank = int(r.integers(1, min(n, d)))
        return r.standard_normal((n, rank)) @ r.standard_normal((rank, d))
    if kind == 2:  # duplicate and rescaled rows
        base = r.standard_normal((max(1, n // 3), d))
        rows = base[r.integers(0, base.shape[0], n)] * r.choice([1.0, -2.0, 0.5], size=(n, 1))
        return rows
    s = r.standard_normal((n, d))  # zero rows mixed in
    s[r.random(n) < 0.3] = 0.0
    s[0] = r.standard_normal(d)
    return s


def test_criterion_4_gram_schmidt_equals_svd_span():
    r = np.random.default_rng(404)
    worst = 0.0
    for i in range(100):
        s = _span_dataset(r, i)
        gs = build_basis(s, method="gram-schmidt")
        sv = build_basis(s, method="svd")
        assert gs.size == sv.size == np.linalg.matrix_rank(s)
        worst = max(worst, projector_distance(gs.basis, sv.basis))
    ok = worst < 1e-8
    record_criterion(4, ok, f"100 datasets, worst projector max-entry gap {worst:.2e}")
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_sampling_scale_and_confinement():
    d, m, n = 256, 16, 100_000
    basis = random_basis(d, m, seed=55)
    parts, ok = [], True
    for kind in ("gaussian", "rademacher"):
        sampler = IsometricSampler(kind, 505)
        draws = np.empty((n, d))
        for i in range(n):
            draws[i] = sample_in_subspace(basis, sampler, d)
        mean_sq = float(np.mean(np.sum(draws**2, axis=1)))
        resid = draws - (draws @ basis.vectors.T) @ basis.vectors
        worst = float(np.sqrt(np.max(np.sum(resid**2, axis=1))))
        good = abs(mean_sq - d) <= 0.05 * d and worst < 1e-10
        ok &= good
        parts.append(f"{kind}: mean |v|^2 {mean_sq:.1f}, max residual {worst:.1e}")
    record_criterion(5, ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 6, 8, 10

C6_DIM, C6_INTRINSIC, C6_TRAIN, C6_EVAL, C6_SUBSPACE = 256, 16, 200, 50, 200
C6_GEN_SEED, C6_MASTER_SEED, C6_K = 7, 11, 5


def _c6_params():
    eps = float(np.sqrt(0.001 * C6_DIM))
    return {"q": 10, "sigma": 2 * eps}


def _c6_runs(paths, out_root):
    runs = {}
    for attack in ("rgf", "spsa"):
        for mode in ("off", "full"):
            kw = {"subspace_dataset_path": paths.subspace} if mode == "full" else {}
            cfg = harness.ExperimentConfig(paths.model, paths.eval, C6_MASTER_SEED, attack=attack, spanning_mode=mode,
                                           budget=10_000, attack_params=_c6_params(),
                                           output_path=str(out_root / f"{attack}-{mode}"), **kw)
            runs[attack, mode] = harness.run_experiment(cfg)
    return runs


@pytest.fixture(scope="module")
def c6(tmp_path_factory):
    root = tmp_path_factory.mktemp("c6")
    start = time.perf_counter()
    paths = harness.generate_synthetic(C6_DIM, C6_INTRINSIC, C6_TRAIN, C6_EVAL, C6_SUBSPACE, 2, C6_GEN_SEED,
                                       str(root / "data"), knn_k=C6_K)
    runs = _c6_runs(paths, root / "run1")
    return paths, runs, root, time.perf_counter() - start


def test_criterion_6_spanning_needs_fewer_queries(c6):
    _, runs, _, elapsed = c6
    ok, parts = elapsed < 600, []
    for attack in ("rgf", "spsa"):
        base, span = runs[attack, "off"], runs[attack, "full"]
        ratio = span.query_median / base.query_median
        good = ratio <= 0.7 and span.success_rate >= base.success_rate
        ok &= good
        parts.append(f"{attack}: median {span.query_median:.0f} vs {base.query_median:.0f} (ratio {ratio:.2f}), "
                     f"success {span.success_rate:.2f} vs {base.success_rate:.2f}")
    record_criterion(6, ok, "; ".join(parts) + f"; {elapsed:.0f}s")
    assert ok


def test_criterion_8_random_subspace_does_not_help(c6):
    paths, runs, root, _ = c6
    rand_path = root / "random16.basis"
    save_basis(random_basis(C6_DIM, 16, seed=808), rand_path)
    cfg = harness.ExperimentConfig(paths.model, paths.eval, C6_MASTER_SEED, attack="rgf", spanning_mode="full",
                                   basis_path=str(rand_path), budget=10_000, attack_params=_c6_params())
    trs = harness.run_experiment(cfg)
    base = runs["rgf", "off"]
    ok = trs.success_rate <= base.success_rate
    record_criterion(8, ok, f"random 16-dim basis success {trs.success_rate:.2f} vs baseline {base.success_rate:.2f}")
    assert ok


def test_criterion_10_determinism(c6):
    paths, _, root, _ = c6
    _c6_runs(paths, root / "run2")
    same = []
    for name in ("rgf-off", "rgf-full", "spsa-off", "spsa-full"):
        a = (root / "run1" / name / "instances.csv").read_bytes()
        b = (root / "run2" / name / "instances.csv").read_bytes()
        same.append(a == b)
    ok = all(same)
    record_criterion(10, ok, f"{sum(same)}/4 per-instance CSVs byte-identical across two executions")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_hard_label_gap_on_linear_svm():
    d, n = 16, 20
    r = np.random.default_rng(707)
    so_ok = ba_ok = 0
    so_ratios, ba_ratios = [], []
    for i in range(n):
        w, b, x = r.standard_normal(d), r.standard_normal(), r.standard_normal(d)
        model = LinearSVM(w, [b])
        inst = LabeledInstance(x, predict(model, x))
        dmin = float(np.linalg.norm(svm_min_perturbation(w, b, x)))
        eps = 1.2 * dmin
        so = signopt_attack(model, inst, SignOptConfig(eps, budget=10_000, seed=i, early_stop=False))
        ba = boundary_attack(model, inst, BoundaryConfig(eps, budget=10_000, seed=i, early_stop=False))
        for res, ratios in ((so, so_ratios), (ba, ba_ratios)):
            ratios.append(res.norm / dmin if res.perturbation is not None else np.inf)
            assert res.perturbation is None or predict(model, x + res.perturbation) != inst.y
        so_ok += so_ratios[-1] <= 1.10
        ba_ok += ba_ratios[-1] <= 1.20
    ok = so_ok >= 0.9 * n and ba_ok >= 0.9 * n
    record_criterion(7, ok, f"Sign-OPT within 10% on {so_ok}/{n} (worst {max(so_ratios):.3f}), "
                            f"boundary within 20% on {ba_ok}/{n} (worst {max(ba_ratios):.3f}), D={d}")
    assert ok


# ---------------------------------------------------------------- 9


def _random_model(r):
    d = int(r.integers(2, 9))
    kind = r.integers(0, 3)
    if kind == 0:
        return KNNModel(r.standard_normal((12, d)), r.integers(0, 3, 12), int(r.choice([1, 3])), 3)
    if kind == 1:
        return LinearSVM(r.standard_normal((1, d)), r.standard_normal(1))
    return MLPModel([(r.standard_normal((6, d)), r.standard_normal(6), "relu"),
                     (r.standard_normal((3, 6)), r.standard_normal(3), "identity")])


def test_criterion_9_exact_query_accounting():
    r = np.random.default_rng(909)
    attacks = itertools.cycle(harness.ATTACKS)
    runs = mismatches = 0
    while runs < 1000:
        model = _random_model(r)
        x = r.standard_normal(model.dim)
        inst = LabeledInstance(x, predict(model, x))
        attack = next(attacks)
        basis = random_basis(model.dim, int(r.integers(1, model.dim + 1)), int(r.integers(1 << 30))) \
            if r.random() < 0.5 else None
        params = {"q": int(r.integers(1, 12))} if attack != "boundary" else {}
        counting = CountingModel(model)
        res = harness.run_single(counting, inst, attack, float(r.uniform(0.1, 2.0)), int(r.integers(1, 400)),
                                 int(r.integers(1 << 30)), basis, params)
        mismatches += res.queries_used != counting.calls
        runs += 1
    ok = mismatches == 0
    record_criterion(9, ok, f"{runs} runs over all four attacks, {mismatches} count mismatches")
    assert ok
