"""Command-line entry point: eig, constraints, distinguish, lp, verify.

Exit codes: 0 success, 1 bad input, 2 numerical degeneracy, 3 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import constraints as cons
from . import expressivity as ex
from . import verify as vf
from .errors import (EmptyConstraintError, GraphParseError, GraphValidationError,
                     RankDeficiencyError, SolverDegeneracy, UndefinedMetricError)
from .graph import Graph, extract_enclosing_subgraph, laplacian, load_graph
from .lanczos import format_eigenbasis, solve
from .linkpred import degree_product_auc, split_links
from .net import (TrainConfig, format_checkpoint, init_model, metrics_csv,
                  policy_constraints, train)

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("constrained_spectral")


class InputError(Exception):
    """Bad flag combination detected after parsing."""


def _emit(text: str, out=None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(path) -> Graph:
    return load_graph(path)


def _whole_graph_constraints(g: Graph, policy, k, seed):
    if policy == "none":
        return None
    if policy == "neumann":
        raise InputError("the neumann policy needs --query u v")
    deg = g.degrees()
    cols = []
    for v in cons.stochastic_select(g.n, min(k, g.n), seed):
        try:
            cols.append(cons.vertex_deleted_column(g, v, degrees=deg))
        except EmptyConstraintError:
            continue
    return cons.assemble(cols, g.n) if cols else None


def _operator_and_constraints(args):
    """Laplacian and constraint matrix for the whole graph or a query subgraph."""
    g = _load(args.graph)
    if args.query is None:
        return laplacian(g), _whole_graph_constraints(g, args.policy, args.k, args.seed)
    u, v = args.query
    sub = extract_enclosing_subgraph(g, u, v, hops=args.hops)
    return laplacian(sub.graph), policy_constraints(sub, args.policy, args.k, args.seed)


# --- subcommands ----------------------------------------------------------------

def cmd_eig(args) -> int:
    L, C = _operator_and_constraints(args)
    if C is None and args.policy != "none":
        log.warning("no usable constraint columns; solving unconstrained")
    n = L.shape[0]
    steps = args.steps or min(n - (C.l if C is not None else 0), max(args.kappa, 1))
    basis = solve(L, C, kappa=args.kappa, steps=steps, seed=args.seed)
    if args.format == "csv":
        lines = ["index,ritz_value"] + [f"{i},{r:.17g}" for i, r in enumerate(basis.R)]
        for key, val in sorted(basis.diagnostics.items()):
            val = np.max(val) if np.ndim(val) else val
            lines.append(f"# {key},{val:.17g}")
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(format_eigenbasis(basis), args.out)
    return EXIT_OK


def cmd_constraints(args) -> int:
    if args.policy == "none":
        raise InputError("policy none has no constraint columns")
    _, C = _operator_and_constraints(args)
    if C is None:
        raise EmptyConstraintError("no constraint column survived for this query")
    if args.format == "csv":
        lines = ["column,row,value,label"]
        for j, col in enumerate(C.columns):
            lines += [f"{j},{i},{val:.17g},{col.label}" for i, val in sorted(col.entries.items())]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(cons.format_constraint_matrix(C), args.out)
    return EXIT_OK


def _signature_policy(args):
    if args.policy == "neumann":
        return ex.NEUMANN_PER_EDGE
    if args.policy == "vdel":
        return ex.VERTEX_DELETED_SAMPLE if args.k_given else ex.VERTEX_DELETED_ALL
    raise InputError("distinguish needs --policy neumann or vdel")


def cmd_distinguish(args) -> int:
    if not args.graph2:
        raise InputError("distinguish needs --graph2")
    g1, g2 = _load(args.graph), _load(args.graph2)
    policy = _signature_policy(args)
    wl_differs = ex.wl1_distinguish(g1, g2)
    s1 = ex.llwlc_signature(g1, policy, args.kappa, args.k, args.seed)
    s2 = ex.llwlc_signature(g2, policy, args.kappa, args.k, args.seed)
    gap = ex.signature_gap(s1, s2)
    wl = "DISTINGUISHED" if wl_differs else "INDISTINGUISHABLE"
    if args.format == "csv":
        text = f"test,verdict,gap\nWL1,{wl},\nLLwLC,{ex.verdict(gap).split()[0]},{gap:.17g}\n"
    else:
        text = f"WL1: {wl}\nLLwLC: {ex.verdict(gap)}\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_lp(args) -> int:
    g = _load(args.graph)
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, kappa=args.kappa, seed=args.seed,
                      policy=args.policy, k=args.k, optimizer=args.optimizer,
                      batch_size=args.batch_size)
    split = split_links(g, args.split, args.seed, args.max_train)
    model = init_model(channels=cfg.channels, pool_k=cfg.pool_k, seed=cfg.seed)
    model, history = train(model, split.train, cfg, split.test)
    baseline = degree_product_auc(split)
    csv_text = metrics_csv(history)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(csv_text)
        (out / "model.ckpt").write_text(format_checkpoint(model, cfg))
    if args.format == "csv":
        sys.stdout.write(csv_text)
    else:
        last = history[-1]
        sys.stdout.write(
            f"policy={cfg.policy}\nepochs={cfg.epochs}\nloss={last['loss']:.17g}\n"
            f"auc={last['auc']:.17g}\nhits_at_{cfg.hits_k}={last['hits_at_k']:.17g}\n"
            f"degree_product_auc={baseline:.17g}\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = vf.theorem2_corpus(args.seed, args.count, args.lhs_inflation)
    perturb = vf.theorem1_corpus(args.seed)
    failures = [r for r in reports if not r.holds]
    ratios = [ratio for rep, ratio in perturb if not rep.inconclusive and math.isfinite(ratio)]
    bad_ratios = [(rep, ratio) for rep, ratio in perturb
                  if not rep.inconclusive and math.isfinite(ratio)
                  and not vf.RATIO_RANGE[0] <= ratio <= vf.RATIO_RANGE[1]]
    if args.format == "csv":
        _emit(vf.corpus_csv(reports), args.out)
    else:
        skipped = sum(r.inconclusive for r in reports)
        ok = len(reports) - skipped - len(failures)
        lines = [f"theorem2: {ok} held, {len(failures)} violated, {skipped} inconclusive",
                 f"theorem1: median ratio {np.median(ratios) if ratios else float('nan'):.6g} "
                 f"over {len(ratios)} cases, {len(bad_ratios)} outside "
                 f"[{vf.RATIO_RANGE[0]:g}, {vf.RATIO_RANGE[1]:g}]"]
        _emit("\n".join(lines) + "\n", args.out)
    if failures or bad_ratios:
        for r in failures:
            print(r.to_text(), file=sys.stderr)
        for rep, ratio in bad_ratios:
            print(rep.to_text() + f"\nratio = {ratio:.17g}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="constrained-spectral",
        description="Constrained Laplacian eigenbases, expressivity checks and link prediction.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("text", "csv"), default="text")

    graph_opts = argparse.ArgumentParser(add_help=False)
    graph_opts.add_argument("--graph", required=True, help="edge-list file")
    graph_opts.add_argument("--policy", choices=("none", "neumann", "vdel"), default="neumann")
    graph_opts.add_argument("--k", type=int, default=None,
                            help="vertex-deleted columns / sampled cards (default 10)")
    graph_opts.add_argument("--kappa", type=int, default=10, help="eigenpairs to keep")

    query_opts = argparse.ArgumentParser(add_help=False)
    query_opts.add_argument("--query", type=int, nargs=2, metavar=("U", "V"),
                            help="solve on the enclosing subgraph of this node pair")
    query_opts.add_argument("--hops", type=int, default=2)

    p = sub.add_parser("eig", parents=[common, graph_opts, query_opts],
                       help="constrained eigenbasis dump")
    p.add_argument("--steps", type=int, default=None, help="Lanczos steps (default kappa)")
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("constraints", parents=[common, graph_opts, query_opts],
                       help="print the assembled constraint matrix")
    p.set_defaults(func=cmd_constraints)

    p = sub.add_parser("distinguish", parents=[common, graph_opts],
                       help="1-WL and constrained-spectrum verdicts for two graphs")
    p.add_argument("--graph2", required=True)
    p.set_defaults(func=cmd_distinguish)

    p = sub.add_parser("lp", parents=[common, graph_opts], help="train and evaluate link prediction")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--split", type=float, default=0.1, help="held-out edge fraction")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-train", type=int, default=None, help="cap on training pairs")
    p.set_defaults(func=cmd_lp)

    p = sub.add_parser("verify", parents=[common], help="run the bound and perturbation corpora")
    p.add_argument("--count", type=int, default=50, help="bound corpus size")
    p.add_argument("--lhs-inflation", type=float, default=1.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "k"):
        args.k_given = args.k is not None
        if args.k is None:
            args.k = 10
    try:
        return args.func(args)
    except (SolverDegeneracy, RankDeficiencyError) as exc:
        print(f"error: numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, GraphParseError, GraphValidationError, EmptyConstraintError,
            UndefinedMetricError, InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
