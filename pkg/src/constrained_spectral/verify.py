"""Numerical checks of the Lanczos low-rank bound and the first-order eigenvalue shift."""
from __future__ import annotations

import io
import csv
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from .graph import laplacian, random_connected
from .lanczos import Projector, constrained_lanczos

SLACK_TOL = 1e-8
DEGENERACY_TOL = 1e-9
RATIO_RANGE = (50.0, 200.0)  # discrepancy ratio expected for a second-order remainder


def chebyshev(degree: int, x):
    """First-kind Chebyshev polynomial by the three-term recurrence."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    x = np.asarray(x, dtype=float)
    t_prev, t = np.ones_like(x), x.copy()
    if degree == 0:
        return t_prev if t_prev.ndim else float(t_prev)
    for _ in range(degree - 1):
        t_prev, t = t, 2.0 * x * t - t_prev
    return t if t.ndim else float(t)


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    j: int
    kappa: int
    n: int
    inconclusive: bool = False
    reason: str = ""

    @property
    def slack(self):
        return self.rhs - self.lhs

    @property
    def holds(self):
        return self.inconclusive or self.slack >= -SLACK_TOL * max(1.0, self.rhs)

    def to_text(self) -> str:
        lines = ["[theorem2]", f"n = {self.n}", f"kappa = {self.kappa}", f"j = {self.j}",
                 f"lhs = {self.lhs:.17g}", f"rhs = {self.rhs:.17g}",
                 f"slack = {self.slack:.17g}", f"inconclusive = {self.inconclusive}"]
        if self.reason:
            lines.append(f"reason = {self.reason}")
        return "\n".join(lines)


def _dense(L):
    return L.toarray() if sp.issparse(L) else np.asarray(L, dtype=float)


def theorem2_rhs(lam, U, nu, kappa, j):
    """Bound value with eigenvalues sorted descending; raises ZeroDivisionError on degeneracy."""
    N = len(lam)
    scale = max(abs(lam[0]), abs(lam[-1]), 1.0)
    nu = nu / np.linalg.norm(nu)
    gaps_head = lam[: j - 1] - lam[j - 1]
    if np.any(np.abs(gaps_head) <= DEGENERACY_TOL * scale):
        raise ZeroDivisionError("repeated eigenvalue among the leading j")
    growth = np.prod((lam[: j - 1] - lam[N - 1]) / gaps_head)
    total = 0.0
    for i in range(1, j + 1):
        cos = abs(U[:, i - 1] @ nu)
        if cos <= DEGENERACY_TOL:
            raise ZeroDivisionError(f"start vector orthogonal to eigenvector {i}")
        spread = lam[i] - lam[N - 1]
        if abs(spread) <= DEGENERACY_TOL * scale:
            raise ZeroDivisionError(f"gamma_{i} undefined")
        gamma = (lam[i - 1] - lam[i]) / spread
        head = U[:, :i]
        sin = np.linalg.norm(nu - head @ (head.T @ nu))
        cheb = chebyshev(kappa - i, 1.0 + 2.0 * gamma)
        total += lam[i - 1] ** 2 * (sin * growth / (cos * cheb)) ** 2
    return total + float(np.sum(lam[j:] ** 2))


def theorem2_check(L, nu, kappa, j, lhs_inflation=1.0) -> BoundReport:
    """Compare ``||L - Q T Q^T||_F^2`` after ``kappa`` Lanczos steps with the Chebyshev bound.

    ``lhs_inflation`` scales the measured side; it exists only to exercise the
    failure path.
    """
    A = _dense(L)
    n = A.shape[0]
    if not 1 < j < n:
        raise ValueError(f"need 1 < j < n, got j={j}, n={n}")
    if kappa <= j:
        raise ValueError(f"need kappa > j, got kappa={kappa}, j={j}")
    nu = np.asarray(nu, dtype=float)
    Q, T = constrained_lanczos(A, Projector(None), nu=nu, steps=kappa)
    lhs = float(np.linalg.norm(A - Q @ T.dense() @ Q.T, "fro") ** 2) * lhs_inflation
    lam, U = np.linalg.eigh(A)
    lam, U = lam[::-1], U[:, ::-1]
    try:
        rhs = theorem2_rhs(lam, U, nu, kappa, j)
    except ZeroDivisionError as exc:
        return BoundReport(lhs, float("nan"), j, kappa, n, True, str(exc))
    return BoundReport(lhs, rhs, j, kappa, n)


@dataclass
class PerturbationReport:
    shift: float
    estimate: float
    scale: float
    inconclusive: bool = False
    reason: str = ""

    @property
    def discrepancy(self):
        return abs(self.shift - self.estimate)

    def to_text(self) -> str:
        lines = ["[theorem1]", f"scale = {self.scale:.17g}", f"shift = {self.shift:.17g}",
                 f"estimate = {self.estimate:.17g}", f"discrepancy = {self.discrepancy:.17g}",
                 f"inconclusive = {self.inconclusive}"]
        if self.reason:
            lines.append(f"reason = {self.reason}")
        return "\n".join(lines)


def first_order_shift(E, u):
    """``sum E(i,i) u_i^2 + 2 sum E(i,i+1) u_i u_{i+1}``."""
    d = np.diag(E)
    off = np.diag(E, 1)
    return float(d @ u**2 + 2.0 * off @ (u[:-1] * u[1:]))


def theorem1_check(L, E, scale) -> PerturbationReport:
    A = _dense(L)
    E = _dense(E)
    if not np.allclose(E, E.T):
        raise ValueError("perturbation must be symmetric")
    if np.any(np.triu(E, 2)):
        raise ValueError("perturbation must be tridiagonal")
    lam, U = np.linalg.eigh(A)
    if len(lam) > 1 and lam[1] - lam[0] <= DEGENERACY_TOL * max(1.0, abs(lam[-1])):
        return PerturbationReport(float("nan"), float("nan"), scale, True,
                                  "smallest eigenvalue is not simple")
    u = U[:, 0]
    shifted = np.linalg.eigvalsh(A + scale * E)[0]
    return PerturbationReport(float(shifted - lam[0]), scale * first_order_shift(E, u), scale)


def random_tridiagonal(n, rng):
    d = rng.standard_normal(n)
    off = rng.standard_normal(n - 1)
    return np.diag(d) + np.diag(off, 1) + np.diag(off, -1)


def discrepancy_ratio(L, E, scale):
    """Discrepancy at ``scale`` over discrepancy at ``scale / 10`` (about 100 if second order)."""
    big = theorem1_check(L, E, scale)
    small = theorem1_check(L, E, scale / 10)
    if big.inconclusive or small.inconclusive or small.discrepancy == 0:
        return float("nan")
    return big.discrepancy / small.discrepancy


def _corpus_graph(rng, n_lo=16, n_hi=64):
    n = int(rng.integers(n_lo, n_hi + 1))
    p = float(rng.uniform(max(0.1, 2.0 * np.log(n) / n), 0.4))
    return random_connected(n, p, int(rng.integers(2**31)))


def theorem2_corpus(seed=0, count=50, lhs_inflation=1.0):
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(count):
        g = _corpus_graph(rng)
        j = int(rng.integers(2, min(6, g.n - 1) + 1))
        kappa = int(rng.integers(j + 1, g.n + 1))
        nu = rng.standard_normal(g.n)
        reports.append(theorem2_check(laplacian(g), nu, kappa, j, lhs_inflation))
    return reports


def theorem1_corpus(seed=0, count=20, n=16, scale=1e-4):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        g = random_connected(n, 0.3, int(rng.integers(2**31)))
        E = random_tridiagonal(n, rng)
        L = laplacian(g).toarray()
        out.append((theorem1_check(L, E, scale), discrepancy_ratio(L, E, scale)))
    return out


def corpus_csv(reports) -> str:
    buf = io.StringIO()
    fields = ["n", "kappa", "j", "lhs", "rhs", "slack", "inconclusive"]
    w = csv.DictWriter(buf, fieldnames=fields)
    w.writeheader()
    for r in reports:
        row = {k: v for k, v in asdict(r).items() if k in fields}
        row["slack"] = r.slack
        w.writerow(row)
    return buf.getvalue()
