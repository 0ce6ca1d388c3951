"""Lanczos iteration restricted to the null space of ``C^T``.

The projector solves the inner least-squares problem ``min_y ||C y - b||`` with
a Householder QR of ``C`` computed once; every Lanczos step projects ``L q``
back into ``null(C^T)`` and is fully reorthogonalised.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .constraints import DEFAULT_RANK_TOL, ConstraintMatrix
from .errors import RankDeficiencyError, SolverDegeneracy

START_ATTEMPTS = 5


class Projector:
    """Orthogonal projector ``I - C (C^T C)^{-1} C^T`` onto ``null(C^T)``."""

    def __init__(self, C=None, rank_tol=DEFAULT_RANK_TOL):
        self.labels = None
        if isinstance(C, ConstraintMatrix):
            self.labels = [c.label for c in C.columns]
            C = C.to_dense()
        elif sp.issparse(C):
            C = C.toarray()
        if C is not None:
            C = np.asarray(C, dtype=float)
            if C.ndim == 1:
                C = C[:, None]
            if C.shape[1] == 0:
                C = None
        self.C = C
        if C is None:
            self.basis = None
            return
        if C.shape[1] > C.shape[0]:
            raise RankDeficiencyError(f"{C.shape[1]} constraints exceed dimension {C.shape[0]}")
        Qc, Rc = np.linalg.qr(C, mode="reduced")
        diag = np.abs(np.diag(Rc))
        bad = np.flatnonzero(diag <= rank_tol * max(diag.max(), np.finfo(float).tiny))
        if bad.size:
            j = int(bad[0])
            name = self.labels[j] if self.labels else f"column {j}"
            raise RankDeficiencyError(f"constraint {name} (index {j}) is linearly dependent")
        self.basis = Qc

    @property
    def num_constraints(self):
        return 0 if self.C is None else self.C.shape[1]

    def apply(self, b):
        """``b - C argmin_y ||C y - b||_2``; works column-wise on matrices."""
        b = np.asarray(b, dtype=float)
        if self.basis is None:
            return b.copy()
        return b - self.basis @ (self.basis.T @ b)

    __call__ = apply

    def violation(self, V) -> float:
        """Largest ``|C^T V|`` entry."""
        if self.C is None or V.size == 0:
            return 0.0
        return float(np.abs(self.C.T @ V).max())


def build_projector(C=None, rank_tol=DEFAULT_RANK_TOL) -> Projector:
    return Projector(C, rank_tol)


@dataclass
class TridiagonalMatrix:
    """``alphas`` on the diagonal, ``betas[i]`` couples steps ``i`` and ``i+1``.

    A zero beta marks a deflation restart (only when restarting is enabled).
    """

    alphas: np.ndarray
    betas: np.ndarray

    @property
    def j(self):
        return len(self.alphas)

    def dense(self) -> np.ndarray:
        return np.diag(self.alphas) + np.diag(self.betas, 1) + np.diag(self.betas, -1)


def operator_norm1(L) -> float:
    if sp.issparse(L):
        return float(abs(L).sum(axis=0).max()) if L.shape[0] else 0.0
    L = np.asarray(L)
    return float(np.abs(L).sum(axis=0).max()) if L.size else 0.0


def start_vector(n, seed, attempt=0) -> np.ndarray:
    rng = np.random.default_rng([int(seed), attempt])
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)


def _reorthogonalize(w, Q):
    # classical Gram-Schmidt, applied twice
    for _ in range(2):
        w = w - Q @ (Q.T @ w)
    return w


def constrained_lanczos(L, P: Projector, nu=None, steps=10, eps=None, seed=0,
                        restart=False):
    """Run up to ``steps`` projected Lanczos steps.

    Returns ``(Q, T)`` with ``Q`` of shape ``(n, j)``. Stops early when the
    next beta drops to ``eps`` (default ``1e-10 * ||L||_1``). With
    ``restart=True`` a breakdown instead continues from a fresh random vector
    orthogonal to the current basis, until ``null(C^T)`` is exhausted; this is
    what lets a full run recover repeated eigenvalues.
    """
    n = L.shape[0]
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if eps is None:
        eps = 1e-10 * max(operator_norm1(L), np.finfo(float).tiny)
    if eps <= 0:
        raise ValueError("eps must be positive")
    nu = start_vector(n, seed) if nu is None else np.asarray(nu, dtype=float)
    if not np.any(nu):
        raise ValueError("start vector must be nonzero")

    v = P.apply(nu)
    attempt = 0
    while np.linalg.norm(v) <= 1e-12 * np.linalg.norm(nu):
        attempt += 1
        if attempt >= START_ATTEMPTS:
            raise SolverDegeneracy(
                f"start vector lies in range(C) after {START_ATTEMPTS} attempts")
        nu = start_vector(n, seed, attempt)
        v = P.apply(nu)
    v = v / np.linalg.norm(v)

    Q = np.zeros((n, steps))
    alphas, betas = [], []
    q_prev = np.zeros(n)
    beta = 0.0
    j = 0
    while j < steps:
        q = v
        Q[:, j] = q
        p = P.apply(L @ q)
        u = p - beta * q_prev
        alpha = float(u @ q)
        # re-project: dividing by a small beta would amplify rounding drift out of null(C^T)
        w = _reorthogonalize(P.apply(u - alpha * q), Q[:, : j + 1])
        alphas.append(alpha)
        j += 1
        if j == steps:
            break
        beta_next = float(np.linalg.norm(w))
        if beta_next > eps:
            betas.append(beta_next)
            q_prev, v, beta = q, w / beta_next, beta_next
            continue
        if not restart:
            break
        fresh = _reorthogonalize(P.apply(start_vector(n, seed, 100 + j)), Q[:, :j])
        nrm = float(np.linalg.norm(fresh))
        if nrm <= 1e-8:
            break
        betas.append(0.0)
        q_prev, v, beta = np.zeros(n), fresh / nrm, 0.0
    return Q[:, :j], TridiagonalMatrix(np.array(alphas), np.array(betas))


def tridiagonal_evd(T: TridiagonalMatrix):
    """Eigenpairs of ``T``: returns ``(B, R)`` with ``R`` ascending."""
    if T.j == 1:
        return np.ones((1, 1)), np.array(T.alphas, dtype=float)
    R, B = sla.eigh_tridiagonal(T.alphas, T.betas)
    return B, R


@dataclass
class ConstrainedEigenbasis:
    V: np.ndarray
    R: np.ndarray
    kappa_effective: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def kappa(self):
        return self.V.shape[1]


def make_eigenbasis(Q, B, R, kappa_target, L=None, P: Projector | None = None):
    """Lift Ritz vectors ``V = Q B``, keep the smallest ``kappa_target`` pairs, zero-pad."""
    order = np.argsort(R, kind="stable")[:kappa_target]
    keff = len(order)
    n = Q.shape[0]
    V = np.zeros((n, kappa_target))
    Rout = np.zeros(kappa_target)
    V[:, :keff] = Q @ B[:, order]
    Rout[:keff] = R[order]
    diag = {}
    if keff:
        Ve = V[:, :keff]
        diag["orthogonality_loss"] = float(np.abs(Ve.T @ Ve - np.eye(keff)).max())
        if P is not None:
            diag["max_CtV"] = P.violation(Ve)
        if L is not None:
            LV = L @ Ve
            if P is not None:
                LV = P.apply(LV)
            diag["residuals"] = np.linalg.norm(LV - Ve * Rout[:keff], axis=0)
    return ConstrainedEigenbasis(V, Rout, keff, diag)


def solve(L, C=None, kappa=10, steps=None, seed=0, restart=False, eps=None,
          rank_tol=DEFAULT_RANK_TOL) -> ConstrainedEigenbasis:
    """Projector, Lanczos, tridiagonal EVD and lifting in one call.

    ``steps`` defaults to ``kappa``; pass ``steps=n - l`` with ``restart=True``
    for the exact smallest constrained eigenpairs.
    """
    P = C if isinstance(C, Projector) else build_projector(C, rank_tol)
    Q, T = constrained_lanczos(L, P, steps=steps or kappa, eps=eps, seed=seed,
                               restart=restart)
    B, R = tridiagonal_evd(T)
    basis = make_eigenbasis(Q, B, R, kappa, L=L, P=P)
    basis.diagnostics["steps"] = T.j
    return basis


def exact_constrained_solve(L, C=None, kappa=None, seed=0) -> ConstrainedEigenbasis:
    """Run Lanczos across the whole of ``null(C^T)``; ``kappa`` defaults to its dimension."""
    P = C if isinstance(C, Projector) else build_projector(C)
    dim = L.shape[0] - P.num_constraints
    if dim <= 0:
        raise SolverDegeneracy("constraints leave an empty feasible space")
    return solve(L, P, kappa=kappa or dim, steps=dim, seed=seed, restart=True)


def low_rank_reconstruct(V, R, phi=None) -> LinearOperator:
    """Operator ``x -> V diag(phi(R)) V^T x``; never forms the n-by-n matrix."""
    V = np.asarray(V, dtype=float)
    R = np.asarray(R, dtype=float)
    weights = R if phi is None else np.asarray(phi(R), dtype=float) * np.ones_like(R)
    n = V.shape[0]

    def matmat(x):
        return V @ (weights[:, None] * (V.T @ x))

    return LinearOperator((n, n), matvec=lambda x: matmat(x.reshape(n, -1)).ravel(),
                          matmat=matmat, rmatvec=lambda x: matmat(x.reshape(n, -1)).ravel(),
                          dtype=float)


def format_eigenbasis(basis: ConstrainedEigenbasis) -> str:
    lines = [f"{basis.n} {basis.kappa} {basis.kappa_effective}",
             " ".join(f"{r:.17g}" for r in basis.R)]
    lines += [f"{x:.17g}" for x in basis.V.ravel(order="F")]
    for key, val in basis.diagnostics.items():
        if isinstance(val, np.ndarray):
            val = " ".join(f"{x:.17g}" for x in val)
        lines.append(f"# {key} {val}")
    return "\n".join(lines) + "\n"


def parse_eigenbasis(text: str) -> ConstrainedEigenbasis:
    body = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    n, kappa, keff = map(int, body[0].split())
    R = np.array([float(x) for x in body[1].split()]) if kappa else np.zeros(0)
    vals = np.array([float(x) for x in body[2:2 + n * kappa]])
    V = vals.reshape((n, kappa), order="F")
    diag = {}
    for ln in text.splitlines():
        if ln.startswith("# "):
            key, _, rest = ln[2:].partition(" ")
            parts = rest.split()
            try:
                nums = [float(x) for x in parts]
                diag[key] = nums[0] if len(nums) == 1 else np.array(nums)
            except ValueError:
                diag[key] = rest
    return ConstrainedEigenbasis(V, R, keff, diag)
