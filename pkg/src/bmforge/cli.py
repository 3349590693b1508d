"""Command-line front end.

Exit codes: 0 success, 1 a certificate is INVALID, 2 usage, input or
precondition error.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time

import numpy as np

from . import __version__
from .certifier import kkt_certificate, optimality_gap
from .errors import BMForgeError, ForgeError, PreconditionError
from .families import (appendix_b_counterexample, appendix_c_fixture, maxcut_bad_pair,
                       maxcut_instance, orthocut_bad_pair, orthocut_instance,
                       spheres_bad_pair, spheres_instance)
from .forge import forge, round_trip_spectra
from .manifold import second_order_report
from .minsecant import check_min_secant
from .optimizer import basin_experiment, descend, random_feasible_point, retract_array
from .serialization import (InputError, cost_from_dict, instance_from_dict,
                            instance_to_dict, metadata, pair_from_dict, pair_to_dict,
                            read_json, to_jsonable, write_json)
from .tolerances import PROFILES, Tolerances, default_tolerances

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


@dataclasses.dataclass(frozen=True)
class RunConfig:
    command: str
    inputs: dict
    output: str | None
    margins: dict
    tolerances: Tolerances
    seed: int | None
    verbose: bool

    def __post_init__(self):
        bad = [k for k, v in self.tolerances.as_dict().items() if not v > 0]
        if bad:
            raise ValueError(f"tolerances must be positive: {bad}")


def _print_table(rows, out=None):
    out = out or sys.stdout
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        flag = "PASS" if ok else "FAIL"
        print(f"  {name:<{width}}  {flag}  {detail}", file=out)


def _load_instance(path):
    return instance_from_dict(read_json(path), path)


def _load_pair(path, instance, tol):
    return pair_from_dict(read_json(path), instance, path, tol)


# --- subcommands --------------------------------------------------------------------

def cmd_family(args, cfg):
    kind = args.kind
    extra = {}
    if kind == "maxcut":
        inst = maxcut_instance(args.n)
        truth, V = maxcut_bad_pair(args.n, args.p)
    elif kind == "orthocut":
        inst = orthocut_instance(args.S, args.d)
        truth, V = orthocut_bad_pair(args.S, args.d, args.p, seed=cfg.seed or 0)
    elif kind == "spheres":
        dims = [int(x) for x in args.dims.split(",")]
        inst = spheres_instance(dims)
        truth, V = spheres_bad_pair(dims, args.p)
    elif kind == "appendix-b":
        fx = appendix_b_counterexample(args.n, args.m, seed=cfg.seed or 0)
        inst, truth, V = fx.instance, fx.truth, fx.V
        extra = {"u": fx.u, "w1": fx.w1, "w2": fx.w2, "direction": fx.direction}
    else:
        fx = appendix_c_fixture()
        inst, truth, V = fx.instance, fx.truth, fx.V
        extra = {"C": fx.C, "g1": fx.g1, "g2": fx.g2}
    meta = metadata(cfg.seed, cfg.tolerances, "family")
    inst_path, pair_path = args.emit
    write_json(inst_path, {**instance_to_dict(inst, extra.get("C")), "meta": meta})
    write_json(pair_path, {**pair_to_dict(truth, V), **to_jsonable(extra), "meta": meta})
    print(f"{kind}: n={inst.n} m={inst.m} r={truth.r} p={V.shape[1]} -> "
          f"{inst_path}, {pair_path}")
    return EXIT_OK


def cmd_forge(args, cfg):
    inst, _ = _load_instance(args.instance)
    truth, V = _load_pair(args.pair, inst, cfg.tolerances)
    res = forge(inst, truth, V, lambda_margin=args.lambda_margin, t_margin=args.t_margin,
                lam=args.lam, t=args.t, tol=cfg.tolerances)
    orig, gen = round_trip_spectra(res)
    out = {
        "meta": metadata(cfg.seed, cfg.tolerances, "forge"),
        "C": res.C, "g1": res.intermediates.g1, "gap": res.gap,
        "intermediates": res.intermediates, "kkt": res.kkt,
        "first_order": res.first_order, "second_order": res.second_order,
        "min_secant": res.min_secant,
        "round_trip": {"original": orig, "transformed_generalized": gen},
    }
    if args.out:
        write_json(args.out, out)
    so = res.second_order
    _print_table([
        ("kkt", res.kkt.valid and res.kkt.strict,
         f"rank C1 = {res.kkt.rank_C1}, min eig {res.kkt.min_eig_C1:.3e}"),
        ("first order", res.first_order.is_critical,
         f"||C2 V|| = {res.first_order.residual_C2V:.3e}"),
        ("second order", so.is_nondegenerate,
         f"zero dim {so.zero_dim}/{so.expected_zero_dim}, tangent dim {so.tangent_dim}"),
        ("gap", res.gap > 0, f"{res.gap:.6g}"),
    ])
    return EXIT_OK


def _certify(inst, C, truth, V, g1, tol):
    kkt = kkt_certificate(inst, C, truth, candidate_g1=g1, tol=tol)
    so = second_order_report(inst, C, V, tol, require_critical=False)
    ms = check_min_secant(inst, truth, V, tol)
    gap = optimality_gap(inst, C, truth, V)
    second = so.is_second_order and so.first_order.is_critical
    verdicts = {
        "kkt": kkt.verdict,
        "first_order": so.first_order.verdict,
        "second_order": "VALID" if second else "INVALID",
    }
    return kkt, so, ms, gap, verdicts


def cmd_certify(args, cfg):
    inst, C_inline = _load_instance(args.instance)
    truth, V = _load_pair(args.pair, inst, cfg.tolerances)
    if args.cost:
        C, g1 = cost_from_dict(read_json(args.cost), inst.n, args.cost)
    elif C_inline is not None:
        C, g1 = C_inline, None
    else:
        raise InputError(args.instance, "C", "no cost matrix (use --cost)")
    kkt, so, ms, gap, verdicts = _certify(inst, C, truth, V, g1, cfg.tolerances)
    out = {"meta": metadata(cfg.seed, cfg.tolerances, "certify"), "kkt": kkt,
           "first_order": so.first_order, "second_order": so, "min_secant": ms,
           "gap": gap, "verdicts": verdicts}
    if args.out:
        write_json(args.out, out)
    _print_table([
        ("kkt", kkt.verdict != "INVALID",
         f"{kkt.verdict}, strict={kkt.strict}, unique={kkt.unique}"),
        ("first order", so.first_order.is_critical,
         f"||C2 V|| = {so.first_order.residual_C2V:.3e}"),
        ("second order", verdicts["second_order"] == "VALID",
         f"nondegenerate={so.is_nondegenerate}, zero dim {so.zero_dim}"),
        ("min-secant", ms.verdict, f"({ms.property1}, {ms.property2}, {ms.property3})"),
        ("gap", gap > 0, f"{gap:.6g}"),
    ])
    if kkt.verdict == "UNVERIFIED":
        print("  note: optimality of X0 could not be verified (no multiplier supplied)")
    return EXIT_INVALID if "INVALID" in verdicts.values() else EXIT_OK


def cmd_minsec(args, cfg):
    inst, _ = _load_instance(args.instance)
    truth, V = _load_pair(args.pair, inst, cfg.tolerances)
    ms = check_min_secant(inst, truth, V, cfg.tolerances)
    if args.out:
        write_json(args.out, {"meta": metadata(cfg.seed, cfg.tolerances, "minsec"),
                              "min_secant": ms})
    _print_table([
        ("property 1 (rank V = p)", ms.property1, f"rank {ms.rank_V}"),
        ("property 2 (rank [U0 V] = r+p)", ms.property2, f"rank {ms.joint_rank}"),
        ("property 3 (intersection)", ms.property3,
         f"dim {ms.range_constrained_dim}, target {ms.target_dim}"),
    ])
    return EXIT_OK if ms.verdict else EXIT_INVALID


def _cost_for(args, inst, C_inline):
    if args.cost:
        return cost_from_dict(read_json(args.cost), inst.n, args.cost)[0]
    if C_inline is None:
        raise InputError(args.instance, "C", "no cost matrix (use --cost)")
    return C_inline


def cmd_optimize(args, cfg):
    inst, C_inline = _load_instance(args.instance)
    C = _cost_for(args, inst, C_inline)
    rng = np.random.default_rng(cfg.seed)
    if args.pair:
        _, V = _load_pair(args.pair, inst, cfg.tolerances)
        V0 = V
        if args.perturb > 0:
            V0 = retract_array(inst, V, args.perturb * rng.standard_normal(V.shape))
    else:
        if args.p is None:
            raise InputError("<argv>", "--p", "needed without --pair")
        V0 = random_feasible_point(inst, args.p, rng)
    tr = descend(inst, C, V0, max_iter=args.max_iter, tol_grad=args.tol_grad,
                 tol_eig=args.tol_eig, rng_seed=cfg.seed, tol=cfg.tolerances)
    out = {"meta": metadata(cfg.seed, cfg.tolerances, "optimize"), "trace": tr,
           "records": [{"iter": i, "objective": f, "grad_norm": g}
                       for i, (f, g) in enumerate(zip(tr.objectives, tr.grad_norms))]}
    if args.out:
        write_json(args.out, out)
    print(f"status={tr.status} iterations={tr.iterations} escapes={tr.escapes} "
          f"objective={tr.objective:.12g} grad={tr.grad_norms[-1]:.3e}")
    return EXIT_OK


def cmd_basin(args, cfg):
    inst, C_inline = _load_instance(args.instance)
    C = _cost_for(args, inst, C_inline)
    truth = V = None
    if args.pair:
        truth, V = _load_pair(args.pair, inst, cfg.tolerances)
    summ = basin_experiment(inst, C, truth, V, num_seeds=args.num_seeds,
                            rng_seed=cfg.seed or 0, p=args.p, certify=args.certify,
                            workers=args.workers, tol=cfg.tolerances)
    if args.out:
        write_json(args.out, {"meta": metadata(cfg.seed, cfg.tolerances, "basin"),
                              "summary": summ})
    print(f"global={summ.fraction_global:.3f} trapped={summ.fraction_trapped:.3f} "
          f"other={summ.fraction_other:.3f} over {summ.num_seeds} starts")
    return EXIT_OK


def reproduce_appendix_c(tol=None):
    """Run the rank-2 fixture through every certificate.

    Returns ``(rows, report)`` with ``rows`` a list of
    ``(name, passed, detail)``.
    """
    tol = tol or default_tolerances()
    t0 = time.perf_counter()
    fx = appendix_c_fixture()
    kkt = kkt_certificate(fx.instance, fx.C, fx.truth, candidate_g1=fx.g1, tol=tol)
    so = second_order_report(fx.instance, fx.C, fx.V, tol, require_critical=False)
    fo = so.first_order
    lam = so.eigenvalues
    lam_max = float(np.max(np.abs(lam)))
    zeros = int(np.sum(np.abs(lam) <= 1e-7 * lam_max))
    positive = int(np.sum(lam > 1e-7 * lam_max))
    c2v = float(np.linalg.norm(fo.C2 @ fx.V))
    c2n = float(np.linalg.norm(fo.C2))
    gap = optimality_gap(fx.instance, fx.C, fx.truth, fx.V)
    core = fx.G.T @ kkt.C1 @ fx.G
    core_err = float(np.max(np.abs(core - fx.C1_core)))
    scale = max(1.0, float(np.linalg.norm(fx.C)))
    elapsed = time.perf_counter() - t0
    rows = [
        ("C2 V = 0", c2v <= 1e-10 * c2n, f"{c2v:.3e} <= 1e-10 * {c2n:.3e}"),
        ("C1 PSD", kkt.min_eig_C1 >= -kkt.psd_tol, f"min eig {kkt.min_eig_C1:.3e}"),
        ("rank C1 = n - r = 4", kkt.rank_C1 == 4, f"rank {kkt.rank_C1}"),
        ("C1 X0 = 0", kkt.compl_residual <= kkt.compl_tol, f"{kkt.compl_residual:.3e}"),
        ("G^T C1 G matches", core_err <= 1e-9, f"max error {core_err:.3e}"),
        ("tangent dimension 6", so.tangent_dim == 6, f"{so.tangent_dim}"),
        ("Hessian: 1 zero eigenvalue", zeros == 1, f"{zeros}"),
        ("Hessian: 5 positive eigenvalues", positive == 5,
         "[" + ", ".join(f"{x:.4g}" for x in lam) + "]"),
        ("duality gap", kkt.duality_gap <= 1e-9 * scale, f"{kkt.duality_gap:.3e}"),
        ("spurious gap > 0", gap > 0, f"{gap:.6g}"),
        ("runtime < 1 s", elapsed < 1.0, f"{elapsed:.3f} s"),
    ]
    report = {"kkt": kkt, "first_order": fo, "second_order": so, "gap": gap,
              "elapsed": elapsed, "positive": positive, "zeros": zeros}
    return rows, report


def cmd_reproduce(args, cfg):
    rows, rep = reproduce_appendix_c(cfg.tolerances)
    print("appendix-c: rank-2 optimum with a non-degenerate spurious point (p = 2)")
    _print_table(rows)
    ok = all(r[1] for r in rows)
    if args.out:
        write_json(args.out, {"meta": metadata(cfg.seed, cfg.tolerances, "reproduce"),
                              "rows": [{"check": r[0], "pass": r[1], "detail": r[2]}
                                       for r in rows
                                       if not r[0].startswith("runtime")],
                              "kkt": rep["kkt"], "second_order": rep["second_order"],
                              "gap": rep["gap"]})
    return EXIT_OK if ok else EXIT_INVALID


# --- parser ------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="bmforge", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol-profile", choices=sorted(PROFILES), default=None,
                    help="tolerance profile (default: $BMFORGE_TOL_PROFILE or 'default')")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("family", help="emit a family instance and its (X0, V) pair")
    p.add_argument("kind", choices=["maxcut", "orthocut", "spheres", "appendix-b",
                                    "appendix-c"])
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--S", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--dims", help="comma-separated block sizes (spheres)")
    p.add_argument("--emit", nargs=2, metavar=("INSTANCE", "PAIR"), required=True)

    p = sub.add_parser("forge", help="build a cost matrix with a planted spurious point")
    p.add_argument("--instance", required=True)
    p.add_argument("--pair", required=True)
    p.add_argument("--out")
    p.add_argument("--lambda-margin", type=float, default=1.0)
    p.add_argument("--t-margin", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=None, help="explicit lambda")
    p.add_argument("--t", type=float, default=None, help="explicit shift t")

    p = sub.add_parser("certify", help="run every certificate on (C, X0, V)")
    p.add_argument("--instance", required=True)
    p.add_argument("--pair", required=True)
    p.add_argument("--cost", help="JSON with 'C' (and optionally 'g1')")
    p.add_argument("--out")

    p = sub.add_parser("minsec", help="check the minimally-secant condition")
    p.add_argument("--instance", required=True)
    p.add_argument("--pair", required=True)
    p.add_argument("--out")

    p = sub.add_parser("optimize", help="Riemannian descent from a start point")
    p.add_argument("--instance", required=True)
    p.add_argument("--cost")
    p.add_argument("--pair", help="start from the pair's V")
    p.add_argument("--perturb", type=float, default=0.0)
    p.add_argument("--p", type=int)
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--tol-grad", type=float, default=1e-7)
    p.add_argument("--tol-eig", type=float, default=1e-6)
    p.add_argument("--out")

    p = sub.add_parser("basin", help="classify descents from random starts")
    p.add_argument("--instance", required=True)
    p.add_argument("--cost")
    p.add_argument("--pair")
    p.add_argument("--p", type=int)
    p.add_argument("--num-seeds", type=int, default=10)
    p.add_argument("--certify", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")

    p = sub.add_parser("reproduce", help="reproduce a hard-coded fixture")
    p.add_argument("target", choices=["appendix-c"])
    p.add_argument("--out")
    return ap


COMMANDS = {
    "family": cmd_family, "forge": cmd_forge, "certify": cmd_certify,
    "minsec": cmd_minsec, "optimize": cmd_optimize, "basin": cmd_basin,
    "reproduce": cmd_reproduce,
}

_FAMILY_ARGS = {"maxcut": ("n", "p"), "orthocut": ("S", "d", "p"),
                "spheres": ("dims", "p"), "appendix-b": ("n", "m"), "appendix-c": ()}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    if args.command == "family":
        missing = [a for a in _FAMILY_ARGS[args.kind] if getattr(args, a) is None]
        if missing:
            print(f"error: family {args.kind} needs --{', --'.join(missing)}",
                  file=sys.stderr)
            return EXIT_USAGE
    try:
        tol = PROFILES[args.tol_profile] if args.tol_profile else default_tolerances()
        inputs = {k: v for k, v in vars(args).items()
                  if k in ("instance", "pair", "cost") and v}
        margins = {k: getattr(args, k) for k in ("lambda_margin", "t_margin", "lam", "t")
                   if hasattr(args, k)}
        cfg = RunConfig(args.command, inputs, getattr(args, "out", None), margins, tol,
                        args.seed, args.verbose)
        return COMMANDS[args.command](args, cfg)
    except PreconditionError as exc:
        slack = exc.details.get("slack")
        extra = f" (slack {slack})" if slack is not None and "slack" not in str(exc) else ""
        print(f"precondition failed: {exc}{extra}", file=sys.stderr)
        return EXIT_USAGE
    except ForgeError as exc:
        print(f"forge failed: {exc}", file=sys.stderr)
        return EXIT_INVALID if exc.stage == "certify" else EXIT_USAGE
    except (InputError, BMForgeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
