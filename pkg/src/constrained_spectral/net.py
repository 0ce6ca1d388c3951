"""Spectral link-prediction network over constrained eigenbases.

Each block filters node features through ``V diag(f(R)) V^T`` with a small
per-eigenvalue MLP ``f``, mixes channels with ``W`` and applies ReLU. A sort
pooling readout and one affine head give the link logit. Gradients are
written out by hand; the eigenbasis is treated as a constant input.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import rankdata

from . import constraints as cons
from .errors import TrainingAborted, UndefinedMetricError
from .graph import EnclosingSubgraph, Graph, extract_enclosing_subgraph, laplacian
from .lanczos import ConstrainedEigenbasis, solve

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12
FEATURE_DIM = 5  # query flag, hop one-hot (0, 1, 2), log degree


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


class FilterMLP:
    """Scalar -> 32 -> 32 -> scalar, ReLU after each hidden layer."""

    def __init__(self, w1, b1, w2, b2, w3, b3):
        self.w1, self.b1, self.w2, self.b2, self.w3, self.b3 = w1, b1, w2, b2, w3, b3

    @classmethod
    def from_params(cls, params, prefix):
        return cls(*(params[f"{prefix}.{k}"] for k in ("w1", "b1", "w2", "b2", "w3", "b3")))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        h1 = relu(r[..., None] * self.w1 + self.b1)
        h2 = relu(h1 @ self.w2 + self.b2)
        return h2 @ self.w3 + self.b3[0]


def block_forward(V, R, f, X, W, activation=relu):
    """``activation(V diag(f(R)) V^T X W)`` for one graph."""
    V, X, W = np.asarray(V, float), np.asarray(X, float), np.asarray(W, float)
    if V.shape[0] != X.shape[0] or V.shape[1] != len(R) or X.shape[1] != W.shape[0]:
        raise ValueError(f"shape mismatch: V{V.shape}, R({len(R)},), X{X.shape}, W{W.shape}")
    resp = np.asarray(f(np.asarray(R, float)), float) * np.ones(len(R))
    return activation(V @ (resp[:, None] * (V.T @ X)) @ W)


def _full_order(H):
    m = H.shape[-2]
    idx = np.broadcast_to(np.arange(m), H.shape[:-1])
    keys = [idx] + [-H[..., c] for c in range(H.shape[-1])]
    return np.lexsort(keys, axis=-1)


def _sort_order(H, top=None):
    """Row order: descending by last channel, ties by earlier channels, then index.

    With ``top`` set only the first ``top`` positions are guaranteed exact.
    """
    order = np.argsort(-H[..., -1], axis=-1, kind="stable")
    if H.shape[-1] == 1:
        return order
    last = np.take_along_axis(H[..., -1], order, axis=-1)
    if top is not None:
        last = last[..., : top + 1]
    tied = (last[..., 1:] == last[..., :-1]).any(axis=-1)
    if H.ndim == 2:
        return _full_order(H) if tied else order
    if tied.any():
        order[tied] = _full_order(H[tied])
    return order


def sort_pooling(X, pool_k):
    """Top ``pool_k`` rows in canonical sort order, flattened; zero rows pad short inputs."""
    if pool_k < 1:
        raise ValueError("pool_k must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m, d = X.shape
    if m < pool_k:
        X = np.vstack([X, np.zeros((pool_k - m, d))])
    order = _sort_order(X, pool_k)[:pool_k]
    return X[order].ravel()


def bce_loss(p, y):
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


# --- model --------------------------------------------------------------------

@dataclass
class SpectralModel:
    params: dict
    dims: tuple
    pool_k: int = 10
    hidden: int = 32

    @property
    def num_blocks(self):
        return len(self.dims) - 1

    def filter(self, i) -> FilterMLP:
        return FilterMLP.from_params(self.params, f"f{i}")

    def copy(self):
        return SpectralModel({k: v.copy() for k, v in self.params.items()},
                             self.dims, self.pool_k, self.hidden)

    def num_parameters(self):
        return sum(v.size for v in self.params.values())


def _glorot(rng, fan_in, fan_out, shape):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_model(in_dim=FEATURE_DIM, channels=(32, 32), pool_k=10, hidden=32, seed=0):
    rng = np.random.default_rng(seed)
    dims = (in_dim,) + tuple(channels)
    p = {}
    for i in range(len(dims) - 1):
        p[f"f{i}.w1"] = _glorot(rng, 1, hidden, (hidden,))
        p[f"f{i}.b1"] = rng.uniform(-0.5, 0.5, hidden)
        p[f"f{i}.w2"] = _glorot(rng, hidden, hidden, (hidden, hidden))
        p[f"f{i}.b2"] = np.zeros(hidden)
        p[f"f{i}.w3"] = _glorot(rng, hidden, 1, (hidden,))
        p[f"f{i}.b3"] = np.zeros(1)
        p[f"W{i}"] = _glorot(rng, dims[i], dims[i + 1], (dims[i], dims[i + 1]))
    flat = pool_k * dims[-1]
    p["head.w"] = _glorot(rng, flat, 1, (flat,))
    p["head.b"] = np.zeros(1)
    return SpectralModel(p, dims, pool_k, hidden)


# --- link instances -------------------------------------------------------------

@dataclass
class LinkInstance:
    sub: EnclosingSubgraph
    basis: ConstrainedEigenbasis
    X0: np.ndarray
    label: int

    def __post_init__(self):
        if self.basis.n != self.sub.size or self.X0.shape[0] != self.sub.size:
            raise ValueError("eigenbasis / feature rows must match subgraph size")


def node_features(sub: EnclosingSubgraph) -> np.ndarray:
    hops = sub.local_hops()
    X = np.zeros((sub.size, FEATURE_DIM))
    X[:2, 0] = 1.0
    for h in range(3):
        X[hops == h, 1 + h] = 1.0
    X[:, 4] = np.log1p(sub.graph.degrees())
    return X


def policy_constraints(sub: EnclosingSubgraph, policy, k=10, seed=0):
    """Constraint matrix for one subgraph, or ``None`` for the plain solver.

    ``none``: no constraints. ``neumann``: boundary + degree-sum columns.
    ``vdel``: ``k`` single-vertex-deleted columns over the subgraph nodes,
    coefficients are parent-graph degrees.
    """
    if policy == "none":
        return None
    if policy == "neumann":
        return cons.subgraph_constraints(sub)
    if policy == "vdel":
        m = sub.size
        deg = sub.parent.degrees()[list(sub.nodes)]
        cols = []
        for v in cons.stochastic_select(m, min(k, m), seed):
            try:
                cols.append(cons.vertex_deleted_column(sub.graph, v, degrees=deg))
            except Exception:
                continue
        if not cols:
            return None
        try:
            C = cons.assemble(cols, m)
        except cons.EmptyConstraintError:
            return None
        return C if C.l < m else None
    raise ValueError(f"unknown constraint policy {policy!r}")


def make_instance(g: Graph, u, v, label, policy="neumann", kappa=10, k=10, seed=0,
                  solver_seed=0) -> LinkInstance:
    sub = extract_enclosing_subgraph(g, u, v, hops=2)
    C = policy_constraints(sub, policy, k, seed)
    basis = solve(laplacian(sub.graph), C, kappa=kappa, seed=solver_seed)
    return LinkInstance(sub, basis, node_features(sub), int(label))


# --- batched forward / backward ------------------------------------------------------

@dataclass
class Batch:
    V: np.ndarray  # (B, M, kappa)
    R: np.ndarray  # (B, kappa)
    X0: np.ndarray  # (B, M, d0)
    y: np.ndarray  # (B,)

    def __post_init__(self):
        self.Vt = np.ascontiguousarray(self.V.transpose(0, 2, 1))

    @classmethod
    def from_instances(cls, instances, pool_k=1):
        B = len(instances)
        M = max(max(inst.sub.size for inst in instances), pool_k)
        kappa = instances[0].basis.kappa
        d0 = instances[0].X0.shape[1]
        V = np.zeros((B, M, kappa))
        X0 = np.zeros((B, M, d0))
        R = np.zeros((B, kappa))
        for b, inst in enumerate(instances):
            m = inst.sub.size
            V[b, :m] = inst.basis.V
            X0[b, :m] = inst.X0
            R[b] = inst.basis.R
        y = np.array([inst.label for inst in instances], dtype=float)
        return cls(V, R, X0, y)


def _mlp_forward(p, prefix, r):
    s = r.reshape(-1)
    a1 = s[:, None] * p[f"{prefix}.w1"] + p[f"{prefix}.b1"]
    h1 = relu(a1)
    a2 = h1 @ p[f"{prefix}.w2"] + p[f"{prefix}.b2"]
    h2 = relu(a2)
    out = h2 @ p[f"{prefix}.w3"] + p[f"{prefix}.b3"][0]
    return out.reshape(r.shape), (s, a1, h1, a2, h2)


def _mlp_backward(p, prefix, cache, dout, grads):
    s, a1, h1, a2, h2 = cache
    dout = dout.reshape(-1)
    grads[f"{prefix}.w3"] = h2.T @ dout
    grads[f"{prefix}.b3"] = np.array([dout.sum()])
    da2 = np.outer(dout, p[f"{prefix}.w3"]) * (a2 > 0)
    grads[f"{prefix}.w2"] = h1.T @ da2
    grads[f"{prefix}.b2"] = da2.sum(axis=0)
    da1 = (da2 @ p[f"{prefix}.w2"].T) * (a1 > 0)
    grads[f"{prefix}.w1"] = s @ da1
    grads[f"{prefix}.b1"] = da1.sum(axis=0)


def forward_batch(model: SpectralModel, batch: Batch):
    """Return ``(logits, cache)``."""
    p = model.params
    X = batch.X0
    blocks = []
    for i in range(model.num_blocks):
        F, mcache = _mlp_forward(p, f"f{i}", batch.R)
        VtX = batch.Vt @ X
        Y = batch.V @ (F[:, :, None] * VtX)
        Z = Y @ p[f"W{i}"]
        blocks.append((F, mcache, VtX, Y, Z))
        X = relu(Z)
    order = _sort_order(X, model.pool_k)[:, : model.pool_k]
    pooled = np.take_along_axis(X, order[:, :, None], axis=1)
    flat = pooled.reshape(len(X), -1)
    logits = flat @ p["head.w"] + p["head.b"][0]
    return logits, (blocks, X, order, flat)


def loss_and_grads(model: SpectralModel, batch: Batch, reduction="mean"):
    p = model.params
    logits, (blocks, H, order, flat) = forward_batch(model, batch)
    probs = sigmoid(logits)
    losses = bce_loss(probs, batch.y)
    B = len(batch.y)
    scale = 1.0 / B if reduction == "mean" else 1.0
    loss = float(losses.sum() * scale)
    if not np.isfinite(loss):
        raise TrainingAborted(f"non-finite loss {loss}; max |logit| {np.abs(logits).max():.3g}")
    grads = {}
    dlogit = (probs - batch.y) * scale
    grads["head.w"] = flat.T @ dlogit
    grads["head.b"] = np.array([dlogit.sum()])
    dpooled = (dlogit[:, None] * p["head.w"]).reshape(B, model.pool_k, -1)
    dH = np.zeros_like(H)
    np.put_along_axis(dH, order[:, :, None], dpooled, axis=1)
    for i in reversed(range(model.num_blocks)):
        F, mcache, VtX, Y, Z = blocks[i]
        dZ = dH * (Z > 0)
        d_in, d_out = p[f"W{i}"].shape
        grads[f"W{i}"] = Y.reshape(-1, d_in).T @ dZ.reshape(-1, d_out)
        dY = dZ @ p[f"W{i}"].T
        G = batch.Vt @ dY
        dF = (G * VtX).sum(axis=2)
        _mlp_backward(p, f"f{i}", mcache, dF, grads)
        if i:
            dH = batch.V @ (F[:, :, None] * G)
    return loss, grads


def predict(model: SpectralModel, instances) -> np.ndarray:
    if not instances:
        return np.zeros(0)
    logits, _ = forward_batch(model, Batch.from_instances(instances, model.pool_k))
    return sigmoid(logits)


def forward(model: SpectralModel, inst: LinkInstance) -> float:
    """Link probability for one instance."""
    X = inst.X0
    for i in range(model.num_blocks):
        X = block_forward(inst.basis.V, inst.basis.R, model.filter(i), X, model.params[f"W{i}"])
    pooled = sort_pooling(X, model.pool_k)
    return float(sigmoid(pooled @ model.params["head.w"] + model.params["head.b"][0]))


def gradients(model: SpectralModel, instances, reduction="mean"):
    """Exact gradients of the batch BCE loss for every parameter tensor."""
    return loss_and_grads(model, Batch.from_instances(instances, model.pool_k), reduction)[1]


def batch_loss(model: SpectralModel, instances, reduction="mean") -> float:
    return loss_and_grads(model, Batch.from_instances(instances, model.pool_k), reduction)[0]


# --- metrics --------------------------------------------------------------------------

def auc_score(scores, labels) -> float:
    """P(random positive outscores random negative), ties counted half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    npos, nneg = int(labels.sum()), int((~labels).sum())
    if npos == 0 or nneg == 0:
        raise UndefinedMetricError("AUC needs both positive and negative examples")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - npos * (npos + 1) / 2) / (npos * nneg))


def hits_at_k(scores, labels, k) -> float:
    """Fraction of positives scoring above the k-th best negative."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    pos, neg = scores[labels], scores[~labels]
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError("Hits@K needs both positive and negative examples")
    if len(neg) < k:
        return 1.0
    kth = np.sort(neg)[::-1][k - 1]
    return float(np.mean(pos > kth))


def evaluate(model, instances, metric="auc", k=10) -> float:
    scores = predict(model, instances)
    labels = [inst.label for inst in instances]
    if metric == "auc":
        return auc_score(scores, labels)
    if metric == "hits":
        return hits_at_k(scores, labels, k)
    raise ValueError(f"unknown metric {metric!r}")


# --- training -------------------------------------------------------------------------

@dataclass
class TrainConfig:
    lr: float = 0.001
    epochs: int = 20
    kappa: int = 10
    seed: int = 0
    policy: str = "neumann"
    k: int = 10
    optimizer: str = "adam"
    batch_size: int = 32
    channels: tuple = (32, 32)
    pool_k: int = 10
    hits_k: int = 10

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def as_lines(self):
        return [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for k, g in grads.items():
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            mhat = self.m[k] / (1 - self.b1**self.t)
            vhat = self.v[k] / (1 - self.b2**self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _SGD:
    def __init__(self, params, lr):
        self.lr = lr

    def step(self, params, grads):
        for k, g in grads.items():
            params[k] -= self.lr * g


@dataclass
class LinkDataset:
    """Query pairs with labels over a fixed observed graph."""

    graph: Graph
    pairs: list
    labels: list
    instances: list = field(default_factory=list)

    def build(self, policy, kappa, k=10, seed=0):
        self.instances = [
            make_instance(self.graph, u, v, y, policy, kappa, k, seed=[seed, idx])
            for idx, ((u, v), y) in enumerate(zip(self.pairs, self.labels))]
        return self.instances


def train(model: SpectralModel, train_set: LinkDataset, cfg: TrainConfig,
          test_set: LinkDataset | None = None):
    """Minibatch training; returns the trained copy and per-epoch metrics.

    Under the ``vdel`` policy the deleted vertices are redrawn every epoch and
    the eigenbases recomputed.
    """
    if not train_set.labels or len(set(train_set.labels)) < 2:
        raise UndefinedMetricError("training set needs both positive and negative links")
    model = model.copy()
    opt = _Adam(model.params, cfg.lr) if cfg.optimizer == "adam" else _SGD(model.params, cfg.lr)
    rng = np.random.default_rng([cfg.seed, 7])
    history = []
    for epoch in range(cfg.epochs):
        if cfg.policy == "vdel" or not train_set.instances:
            train_set.build(cfg.policy, cfg.kappa, cfg.k, seed=[cfg.seed, epoch])
        if test_set is not None and (cfg.policy == "vdel" or not test_set.instances):
            test_set.build(cfg.policy, cfg.kappa, cfg.k, seed=[cfg.seed, epoch, 1])
        insts = train_set.instances
        perm = rng.permutation(len(insts))
        for start in range(0, len(insts), cfg.batch_size):
            chunk = [insts[i] for i in perm[start:start + cfg.batch_size]]
            _, grads = loss_and_grads(model, Batch.from_instances(chunk, model.pool_k))
            opt.step(model.params, grads)
        row = {"epoch": epoch + 1, "loss": batch_loss(model, insts)}
        if test_set is not None:
            row["auc"] = evaluate(model, test_set.instances, "auc")
            row["hits_at_k"] = evaluate(model, test_set.instances, "hits", cfg.hits_k)
        history.append(row)
        log.info("epoch %d: %s", epoch + 1, row)
    return model, history


def metrics_csv(history) -> str:
    lines = ["epoch,loss,auc,hits_at_k"]
    for row in history:
        lines.append(",".join([str(row["epoch"])] + [
            "" if row.get(k) is None else f"{row[k]:.17g}" for k in ("loss", "auc", "hits_at_k")]))
    return "\n".join(lines) + "\n"


# --- checkpoints ------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def format_checkpoint(model: SpectralModel, cfg: TrainConfig | None = None) -> str:
    lines = ["format=constrained-spectral-checkpoint", f"version={CHECKPOINT_VERSION}",
             "dims=" + ",".join(map(str, model.dims)), f"pool_k={model.pool_k}",
             f"hidden={model.hidden}"]
    if cfg is not None:
        lines += ["config." + ln for ln in cfg.as_lines()]
    for name in sorted(model.params):
        arr = model.params[name]
        lines.append(f"tensor {name} " + ",".join(map(str, arr.shape)))
        lines.append(" ".join(f"{x:.17g}" for x in arr.ravel()))
    return "\n".join(lines) + "\n"


def parse_checkpoint(text: str) -> SpectralModel:
    lines = text.splitlines()
    header, params = {}, {}
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("tensor "):
            _, name, shape = (line + " ").split(" ", 2)
            dims = tuple(int(s) for s in shape.split(",") if s)
            vals = np.array([float(x) for x in lines[i + 1].split()])
            params[name] = vals.reshape(dims)
            i += 2
            continue
        key, _, val = line.partition("=")
        header[key] = val
        i += 1
    if header.get("format") != "constrained-spectral-checkpoint":
        raise ValueError("not a checkpoint file")
    if int(header.get("version", -1)) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    dims = tuple(int(x) for x in header["dims"].split(","))
    return SpectralModel(params, dims, int(header["pool_k"]), int(header["hidden"]))
