"""Acceptance criteria, one test each, with a one-line PASS/FAIL record per criterion.

Run ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or ``python3 tests/test_acceptance.py``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from constrained_spectral import constraints as cons  # noqa: E402
from constrained_spectral import expressivity as ex  # noqa: E402
from constrained_spectral import net  # noqa: E402
from constrained_spectral import verify as vf  # noqa: E402
from constrained_spectral.graph import (cycle, disjoint_union, erdos_renyi,  # noqa: E402
                                        extract_enclosing_subgraph, laplacian, path,
                                        random_connected, rook4x4, sbm, shrikhande)
from constrained_spectral.lanczos import exact_constrained_solve, solve  # noqa: E402
from constrained_spectral.linkpred import run_link_prediction  # noqa: E402

from conftest import example_graph, nullspace_eigenvalues  # noqa: E402

RESULTS = {}

# Link-prediction setup shared by both arms of the ablation.
ABLATION_CONFIG = dict(lr=0.002, epochs=14, optimizer="adam", batch_size=32)


def record(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    RESULTS[num] = line
    print(line)
    return ok


# --- criterion bodies (return (ok, detail)) --------------------------------------------

def unconstrained_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(25):
        n = int(rng.integers(5, 65))
        g = random_connected(n, float(rng.uniform(max(0.08, 2 * np.log(n) / n), 0.5)),
                             int(rng.integers(2**31)))
        L = laplacian(g)
        basis = solve(L, None, kappa=n, steps=n, restart=True, seed=int(rng.integers(1000)))
        worst = max(worst, float(np.abs(basis.R - np.linalg.eigvalsh(L.toarray())).max()))
    p3 = solve(laplacian(path(3)), None, kappa=3).R
    p3_err = float(np.abs(p3 - [0, 1, 3]).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and p3_err <= 1e-10 and elapsed < 5
    return ok, f"max Ritz error {worst:.2e} (<=1e-6), P3 error {p3_err:.1e} (<=1e-10), {elapsed:.2f}s (<5s)"


def _constraint_corpus(rng, count=100):
    """(L, C) cases: per-link Neumann sets, subgraph and whole-graph vertex-deleted sets."""
    cases = []
    while len(cases) < count:
        n = int(rng.integers(8, 65))
        g = random_connected(n, float(rng.uniform(min(0.4, max(0.08, 2 * np.log(n) / n)), 0.5)),
                             int(rng.integers(2**31)))
        kind = len(cases) % 3
        if kind == 2:
            cols = [cons.vertex_deleted_column(g, v)
                    for v in cons.stochastic_select(n, int(rng.integers(1, 6)), int(rng.integers(1000)))]
            cases.append((laplacian(g), cons.assemble(cols, n)))
            continue
        u, v = g.sorted_edges()[int(rng.integers(g.num_edges))]
        sub = extract_enclosing_subgraph(g, u, v, 2)
        policy = "neumann" if kind == 0 else "vdel"
        C = net.policy_constraints(sub, policy, k=int(rng.integers(1, 6)), seed=int(rng.integers(1000)))
        if C is not None and sub.size - C.l >= 1:
            cases.append((laplacian(sub.graph), C))
    return cases


def constrained_correctness():
    cases = _constraint_corpus(np.random.default_rng(7))
    start = time.perf_counter()
    worst_val = worst_ctv = 0.0
    for L, C in cases:
        basis = exact_constrained_solve(L, C)
        Cd = C.to_dense()
        worst_val = max(worst_val, float(np.abs(basis.R - nullspace_eigenvalues(L, Cd)).max()))
        worst_ctv = max(worst_ctv, float(np.abs(Cd.T @ basis.V).max()))
    elapsed = time.perf_counter() - start
    ok = worst_val <= 1e-6 and worst_ctv <= 1e-8 and elapsed < 10
    return ok, (f"{len(cases)} cases, max Ritz error {worst_val:.2e} (<=1e-6), "
                f"max|C^T V| {worst_ctv:.2e} (<=1e-8), {elapsed:.2f}s (<10s)")


def worked_example_columns():
    g = example_graph()
    sub = extract_enclosing_subgraph(g, 0, 1, 2)
    neumann = sub.lift(cons.neumann_boundary_column(sub).dense(sub.size))
    deleted = cons.vertex_deleted_column(g, range(4, 10)).dense(10)
    ok1 = np.array_equal(neumann, [0, 0, 1, 1, -1, -1, 0, 0, 0, 0])
    ok2 = np.array_equal(deleted, [2, 2, 2, 2, 0, 0, 0, 0, 0, 0])
    fmt = lambda a: "[" + ",".join(f"{x:g}" for x in a) + "]"  # noqa: E731
    return ok1 and ok2, f"boundary column {fmt(neumann)}, deleted column {fmt(deleted)}"


def _witness(g1, g2, policy, kappa, limit):
    start = time.perf_counter()
    wl = ex.wl1_distinguish(g1, g2)
    gap = ex.signature_gap(ex.llwlc_signature(g1, policy, kappa),
                           ex.llwlc_signature(g2, policy, kappa))
    elapsed = time.perf_counter() - start
    ok = not wl and gap > 1e-6 and elapsed < limit
    return ok, (f"1-WL {'distinguishes' if wl else 'indistinguishable'}, "
                f"signature gap {gap:.6g} (>1e-6), {elapsed:.2f}s (<{limit}s)")


def witness_cycles():
    return _witness(cycle(6), disjoint_union(cycle(3), cycle(3)), "neumann", 10, 1)


def witness_strongly_regular():
    return _witness(rook4x4(), shrikhande(), "vdel", 10, 5)


def orbit_experiment():
    rep = ex.orbit_pair_experiment()
    same, diff = [], []
    for i in range(len(rep.pairs)):
        for j in range(i + 1, len(rep.pairs)):
            p, q = rep.pairs[i], rep.pairs[j]
            (same if rep.orbit_of[p] == rep.orbit_of[q] else diff).append(rep.distances[i, j])
    orbits = len(set(rep.orbit_of.values()))
    ok = not rep.violations() and orbits == 3
    return ok, (f"{orbits} orbits, max same-orbit gap {max(same):.1e} (<=1e-10), "
                f"min cross-orbit gap {min(diff):.4g} (>1e-6)")


def convergence_bounds():
    reports = vf.theorem2_corpus(seed=0, count=50)
    decided = [r for r in reports if not r.inconclusive]
    min_slack = min(r.slack for r in decided)
    rng = np.random.default_rng(1)
    g = random_connected(16, 0.3, 11)
    ratio = vf.discrepancy_ratio(laplacian(g).toarray(), vf.random_tridiagonal(16, rng), 1e-4)
    ok = min_slack >= -1e-8 and 50 <= ratio <= 200
    return ok, (f"bound slack min {min_slack:.3g} over {len(decided)}/50 decided cases (>=-1e-8), "
                f"first-order discrepancy ratio {ratio:.2f} (in [50, 200])")


def gradient_check():
    model = net.init_model(seed=0)
    g = random_connected(40, 0.12, 3)
    rng = np.random.default_rng(3)
    edges = g.sorted_edges()
    insts = []
    for i in range(5):
        u, v = edges[int(rng.integers(len(edges)))] if i % 2 == 0 else \
            tuple(int(x) for x in rng.choice(g.n, 2, replace=False))
        insts.append(net.make_instance(g, u, v, int(g.has_edge(u, v)), "neumann", seed=[3, i]))
    grads = net.gradients(model, insts)
    h = 1e-5
    worst = {}
    for name, arr in model.params.items():
        flat = arr.reshape(-1)
        err = 0.0
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = net.batch_loss(model, insts)
            flat[i] = keep - h
            down = net.batch_loss(model, insts)
            flat[i] = keep
            gi = grads[name].reshape(-1)[i]
            err = max(err, abs((up - down) / (2 * h) - gi) / max(1.0, abs(gi)))
        worst[name] = err
    bad = sorted(k for k, v in worst.items() if v > 1e-4)
    ok = not bad
    return ok, (f"{len(worst)} parameter groups, {sum(a.size for a in model.params.values())} "
                f"entries, max relative error {max(worst.values()):.2e} (<=1e-4)"
                + (f", failing {bad}" if bad else ""))


def ablation_direction():
    start = time.perf_counter()
    means = {}
    for policy in ("none", "neumann"):
        aucs = []
        for seed in range(5):
            g, _ = sbm([50, 50], 0.2, 0.02, seed=seed)
            cfg = net.TrainConfig(seed=seed, policy=policy, **ABLATION_CONFIG)
            _, history, _ = run_link_prediction(g, cfg, test_frac=0.1)
            aucs.append(history[-1]["auc"])
        means[policy] = float(np.mean(aucs))
    elapsed = time.perf_counter() - start
    ok = (means["neumann"] > means["none"] and min(means.values()) >= 0.6 and elapsed < 120)
    return ok, (f"mean AUC neumann {means['neumann']:.4f} vs none {means['none']:.4f} "
                f"(neumann > none, both >= 0.6), {elapsed:.1f}s (<120s)")


def _solve_time(n, trials=5, avg_degree=8.0, kappa=10, steps=20):
    g = erdos_renyi(n, avg_degree / n, seed=n)
    times = []
    for seed in range(trials):
        start = time.perf_counter()
        solve(laplacian(g), None, kappa=kappa, steps=steps, seed=seed)
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def scaling():
    _solve_time(500, trials=1)  # warm-up
    small, large = _solve_time(4000), _solve_time(8000)
    ratio = large / small
    return ratio <= 2.5, f"median solve {small * 1e3:.1f}ms (n=4000) -> {large * 1e3:.1f}ms (n=8000), ratio {ratio:.2f} (<=2.5)"


CRITERIA = [
    (1, unconstrained_correctness),
    (2, constrained_correctness),
    (3, worked_example_columns),
    (4, witness_cycles),
    (5, witness_strongly_regular),
    (6, orbit_experiment),
    (7, convergence_bounds),
    (8, gradient_check),
    (9, ablation_direction),
    (10, scaling),
]


@pytest.mark.parametrize("num,body", CRITERIA, ids=[f"criterion_{n}_{f.__name__}" for n, f in CRITERIA])
def test_criterion(num, body):
    ok, detail = body()
    assert record(num, ok, detail), RESULTS[num]


if __name__ == "__main__":
    failed = 0
    for num, body in CRITERIA:
        ok, detail = body()
        failed += not record(num, ok, detail)
    sys.exit(1 if failed else 0)
