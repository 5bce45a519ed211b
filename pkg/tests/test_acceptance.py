"""Acceptance suite. Each test records one PASS/FAIL/SKIP line, printed at the
end of the run. Criteria on real datasets read
``$PROXML_DATA_DIR/{bibtex,eurlex,mediamill}_{train,test}.txt`` and skip when
those files are absent (see scripts/split_xmc.py)."""
import io
import os
import time
from itertools import permutations
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_problem
from oracles import dense_objective, dense_lambda2, prox_1d, ref_gains
from proxml.ccd import CcdConfig, solve_ccd
from proxml.data import read_xmc
from proxml.harness import certify_dataset
from proxml.labelgraph import LabelGraph, algebraic_connectivity, build_graph
from proxml.metrics import evaluate, ndcg_at_k, precision_at_k, propensities, psndcg_at_k, psp_at_k
from proxml.predictor import predict, write_predictions
from proxml.prox import ProxConfig, soft_threshold, solve_prox, squared_hinge_grad
from proxml.synthetic import make_xmc
from proxml.trainer import cross_validate_lambda, model_to_bytes, train_all

DATA_DIR = os.environ.get("PROXML_DATA_DIR")
THREADS = int(os.environ.get("PROXML_THREADS") or os.cpu_count() or 1)
LAMBDA_GRID = (0.01, 0.05, 0.1, 0.5)


def record(crit, ok, detail):
    ACCEPTANCE_LINES.append((crit, "PASS" if ok else "FAIL", detail))
    assert ok, f"criterion {crit}: {detail}"


def need(crit, *names):
    paths = [Path(DATA_DIR or "") / f"{n}.txt" for n in names]
    missing = [p.name for p in paths if not DATA_DIR or not p.is_file()]
    if missing:
        reason = f"dataset files missing ({', '.join(missing)}; set PROXML_DATA_DIR)"
        ACCEPTANCE_LINES.append((crit, "SKIP", reason))
        pytest.skip(reason)
    return [read_xmc(p) for p in paths]


def report_for(model, test, train, ks=(1, 3, 5)):
    p = propensities(np.asarray(model.meta["label_counts"]), 0.55, 1.5, train.n_instances).p
    preds = predict(model, test, max(ks), threads=THREADS)
    return evaluate([t.labels for t in preds], test.labels, p, ks)


# -- dataset-gated reproduction ---------------------------------------------


@pytest.mark.slow
def test_criterion_1_bibtex_precision():
    train, test = need("1", "bibtex_train", "bibtex_test")
    t0 = time.perf_counter()
    lam, scores = cross_validate_lambda(train, LAMBDA_GRID, "prox", ProxConfig(), folds=5, parallelism=THREADS)
    model, _ = train_all(train, "prox", ProxConfig(lam=lam), parallelism=THREADS)
    rep = report_for(model, test, train)
    p1, psp1 = rep.precision[1], rep.psp[1]
    ok = abs(p1 - 64.4) <= 2.0 and abs(psp1 - 50.1) <= 2.0
    record("1", ok, f"lambda={lam} P@1={p1:.2f} (64.4+-2.0) PSP@1={psp1:.2f} (50.1+-2.0) "
                    f"nnz={model.nnz} time={time.perf_counter() - t0:.0f}s cv={scores}")


@pytest.mark.slow
def test_criterion_2_eurlex_precision():
    train, test = need("2", "eurlex_train", "eurlex_test")
    t0 = time.perf_counter()
    if os.environ.get("PROXML_EURLEX_LAMBDA"):
        lam = float(os.environ["PROXML_EURLEX_LAMBDA"])
    else:
        lam, _ = cross_validate_lambda(train, LAMBDA_GRID, "prox", ProxConfig(), folds=3, parallelism=THREADS)
    model, _ = train_all(train, "prox", ProxConfig(lam=lam), parallelism=THREADS)
    rep = report_for(model, test, train)
    p1, p5, psp1 = rep.precision[1], rep.precision[5], rep.psp[1]
    ok = abs(p1 - 83.4) <= 2.5 and abs(p5 - 59.1) <= 2.5 and abs(psp1 - 45.2) <= 3.0
    record("2", ok, f"lambda={lam} P@1={p1:.2f} (83.4+-2.5) P@5={p5:.2f} (59.1+-2.5) "
                    f"PSP@1={psp1:.2f} (45.2+-3.0) time={time.perf_counter() - t0:.0f}s")


@pytest.mark.slow
def test_criterion_3_eurlex_certification():
    (train,) = need("3", "eurlex_train")
    lam = 0.1
    summary = certify_dataset(train, lam, ProxConfig(lam=lam),
                              CcdConfig(lam=lam, tol=0.01, relative_tol=True, shrinking=True),
                              parallelism=THREADS)
    frac = summary.fraction_prox_lower()
    record("3", frac >= 0.6, f"fraction opt_prox < opt_ccd = {frac:.3f} over {summary.n_labels} labels (>= 0.6)")


@pytest.mark.slow
@pytest.mark.parametrize("name,target", [("bibtex", 0.30), ("mediamill", 0.46), ("eurlex", 0.22)])
def test_criterion_4_algebraic_connectivity(name, target):
    (train,) = need(f"4-{name}", f"{name}_train")
    t0 = time.perf_counter()
    r = algebraic_connectivity(build_graph(train))
    secs = time.perf_counter() - t0
    ok = abs(r.lambda2 - target) <= 0.03 and secs < 60 and r.converged
    record(f"4-{name}", ok, f"lambda2={r.lambda2:.4f} ({target}+-0.03) components={r.component_count} "
                            f"isolated={r.n_isolated} iters={r.iterations} time={secs:.1f}s")


# -- property criteria (no data needed) ----------------------------------------


def test_criterion_5_soft_threshold_oracle():
    rng = np.random.default_rng(5)
    u = rng.uniform(-3.0, 3.0, 10_000)
    thr = rng.uniform(0.0, 1.0, 10_000)
    got = np.array([float(soft_threshold(a, t)) for a, t in zip(u, thr)])
    ref = np.array([prox_1d(a, t) for a, t in zip(u, thr)])
    err = float(np.max(np.abs(got - ref)))
    record("5", err <= 1e-9, f"max |soft_threshold - brute force| = {err:.2e} over 10000 pairs (<= 1e-9)")


def test_criterion_6_gradient_finite_differences():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        X, s = random_problem(rng, n=int(rng.integers(2, 21)), d=int(rng.integers(1, 11)), density=0.7)
        Xd = X.toarray()
        while True:
            w = rng.standard_normal(X.shape[1])
            if np.min(np.abs(1.0 - s * (Xd @ w))) > 1e-3:
                break
        g = squared_hinge_grad(w, X, s)
        fd = np.empty_like(w)
        h = 1e-6
        for j in range(w.size):
            e = np.zeros_like(w)
            e[j] = h
            fd[j] = (dense_objective(w + e, Xd, s, 0.0) - dense_objective(w - e, Xd, s, 0.0)) / (2 * h)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    record("6", worst <= 1e-5, f"max relative gradient error = {worst:.2e} over 100 problems (<= 1e-5)")


def test_criterion_7_monotone_descent():
    rng = np.random.default_rng(7)
    worst = -np.inf
    for _ in range(100):
        X, s = random_problem(rng)
        lam = float(rng.choice([0.0, 0.01, 0.1, 1.0]))
        trace = np.asarray(solve_prox(X, s, ProxConfig(lam=lam)).objective_trace)
        worst = max(worst, float(np.max(np.diff(trace))) if trace.size > 1 else -np.inf)
    record("7", worst <= 1e-10, f"largest per-step objective increase = {worst:.2e} over 100 problems (<= 1e-10)")


def test_criterion_8_solver_agreement():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        X, s = random_problem(rng)
        rp = solve_prox(X, s, ProxConfig(lam=0.1, tol=1e-16, max_iters=200_000))
        rc = solve_ccd(X, s, CcdConfig(lam=0.1, tol=1e-10, shrinking=False, max_outer_iters=200_000))
        worst = max(worst, abs(rp.objective - rc.objective))
    record("8", worst <= 1e-6, f"max |opt_prox - opt_ccd| = {worst:.2e} over 50 problems (<= 1e-6)")


def test_criterion_9_metric_oracles():
    rng = np.random.default_rng(9)
    worst, collapse_ok = 0.0, True
    for _ in range(500):
        L = int(rng.integers(1, 6))
        y = (rng.random(L) < 0.5).astype(int)
        p = rng.uniform(0.05, 1.0, L)
        k = int(rng.integers(1, L + 1))
        truth = set(np.flatnonzero(y).tolist())
        ones = np.ones(L)
        for order in permutations(range(L)):
            ref = np.array(ref_gains(order, y, 1.0 / p, k))
            got = np.array([precision_at_k(order, truth, k), psp_at_k(order, truth, p, k),
                            ndcg_at_k(order, truth, k), psndcg_at_k(order, truth, p, k)])
            worst = max(worst, float(np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(ref)))))
            collapse_ok &= (psp_at_k(order, truth, ones, k) == precision_at_k(order, truth, k)
                            and psndcg_at_k(order, truth, ones, k) == ndcg_at_k(order, truth, k))
    ok = worst <= 1e-12 and collapse_ok
    record("9", ok, f"max relative deviation from enumeration = {worst:.1e} (<= 1e-12) over 500 cases; "
                    f"p=1 collapse exact: {collapse_ok}")


def test_criterion_10_spectral_oracles():
    rng = np.random.default_rng(10)
    worst, n_graphs = 0.0, 0
    while n_graphs < 100:
        n = int(rng.integers(3, 51))
        edges = [(i, j, int(rng.integers(1, 6))) for i in range(n) for j in range(i + 1, n)
                 if rng.random() < rng.uniform(0.05, 0.6)]
        g = LabelGraph.from_edges(n, edges)
        if g.n_vertices - g.isolated.size < 2 or g.n_components() != 1:
            continue
        worst = max(worst, abs(algebraic_connectivity(g).lambda2 - dense_lambda2(g.adjacency)))
        n_graphs += 1
    kn = max(abs(algebraic_connectivity(LabelGraph.from_edges(
        n, [(i, j, 1) for i in range(n) for j in range(i + 1, n)]), tol=1e-10).lambda2 - n / (n - 1))
        for n in range(2, 11))
    p3 = abs(algebraic_connectivity(LabelGraph.from_edges(3, [(0, 1, 1), (1, 2, 1)]), tol=1e-10).lambda2 - 1.0)
    disc = algebraic_connectivity(LabelGraph.from_edges(6, [(0, 1, 1), (1, 2, 2), (3, 4, 1), (4, 5, 1)]))
    ok = worst <= 1e-6 and kn <= 1e-8 and p3 <= 1e-8 and disc.lambda2 <= 1e-8
    record("10", ok, f"random max err={worst:.1e} (<= 1e-6, 100 graphs); K_n err={kn:.1e}, P3 err={p3:.1e} "
                     f"(<= 1e-8); disconnected lambda2={disc.lambda2:.1e} (<= 1e-8)")


# -- determinism -------------------------------------------------------------


def _artifacts(train, test, threads):
    model, _ = train_all(train, "prox", ProxConfig(lam=0.1), parallelism=threads)
    preds = predict(model, test, 5, threads=threads)
    p = propensities(np.asarray(model.meta["label_counts"]), 0.55, 1.5, train.n_instances).p
    buf_pred, buf_eval = io.StringIO(), io.StringIO()
    write_predictions(preds, buf_pred)
    evaluate([t.labels for t in preds], test.labels, p).write_csv(buf_eval, include_coverage=True)
    return model_to_bytes(model), buf_pred.getvalue(), buf_eval.getvalue()


def _check_determinism(crit, train, test):
    runs = {t: _artifacts(train, test, t) for t in (1, 4, 8)}
    same = runs[1] == runs[4] == runs[8]
    record(crit, same, f"model/predictions/report byte-identical across threads 1,4,8: {same} "
                       f"(model {len(runs[1][0])} bytes)")


def test_criterion_11_determinism_synthetic():
    from proxml.synthetic import train_test_split
    train, test = train_test_split(make_xmc(n_instances=600, n_features=200, n_labels=30, seed=11), 0.25, seed=1)
    _check_determinism("11-synthetic", train, test)


@pytest.mark.slow
def test_criterion_11_determinism_bibtex():
    train, test = need("11", "bibtex_train", "bibtex_test")
    _check_determinism("11", train, test)
