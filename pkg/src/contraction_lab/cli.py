"""Command line entry point ``contraction-lab``.

Exit codes: 0 success, 2 validation error, 3 numerical failure (or a failed
check / non-converged sweep), 4 IO error.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import diagnostics, rotation2d
from .errors import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, ParseError, exit_code_for
from .experiment import ChainSpec, ExperimentConfig, SweepManifest, run_experiment, run_sweep
from .io import dumps_json, load_chain, parse_xi, read_json, save_chain, write_json
from .plotting import plot_trace
from .seqgen import GENERATOR_KINDS, generate, verify_chain


def _emit(obj, path=None):
    if path:
        write_json(path, obj)
    else:
        sys.stdout.write(dumps_json(obj))


def cmd_gen(args):
    chain = generate(args.kind, args.dim, args.len, args.seed, delta=args.delta)
    save_chain(chain, args.out)
    return EXIT_OK


def cmd_run(args):
    cfg = ExperimentConfig(
        name=args.name,
        chain=ChainSpec(file=args.chain),
        sigma=args.sigma,
        xi=args.xi,
        horizon=args.steps if args.steps is not None else "auto",
        k=args.k,
        threshold=args.threshold,
        extend=not args.no_extend,
        adjoint=not args.no_adjoint,
        trace_out=args.out,
        verdict_out=args.verdict,
        plot_out=args.plot,
    )
    verdict = run_experiment(cfg)
    if not args.verdict:
        _emit({k: verdict[k] for k in ("name", "status", "steps_to_threshold", "final_dist_to_P") if k in verdict})
    if verdict["status"] == "numerical_error":
        return EXIT_NUMERICAL
    return EXIT_OK


def _parse_check(text):
    name, _, arg = text.partition(":")
    if name in ("chain", "gap", "summable") and not arg:
        return name, ()
    try:
        if name == "rate":
            m, k, eps = arg.split(",")
            return name, (int(m), int(k), float(eps))
        if name == "dissipation":
            return name, (int(arg),)
    except ValueError:
        pass
    raise ParseError(f"cannot parse check {text!r}; expected chain|gap|summable|rate:m,k,eps|dissipation:k")


def verify_document(chain, check, xi=None, extend=False):
    """JSON verdict ``{"check", "ok", "witness"}`` for one diagnostic."""
    name, params = _parse_check(check)
    if name == "chain":
        rep = verify_chain(chain)
        return {"check": check, "ok": bool(rep.accepted), "witness": rep.to_dict()}
    if name == "gap":
        g = diagnostics.gap_of(chain.limit_proxy, chain.cluster_tol, eig=chain.eig(len(chain)))
        return {
            "check": check,
            "ok": g > 0.0,
            "witness": {"gap": g, "note": "gap of the last term; spectrum {1} counts as gap 1"},
        }
    if name == "summable":
        rep = diagnostics.summability_report(chain)
        return {
            "check": check,
            "ok": bool(np.isfinite(rep.sup_estimate)),
            "witness": {"partial_sums": rep.partial_sums.tolist(), "sup_estimate": rep.sup_estimate, "note": rep.note},
        }
    if name == "rate":
        m, k, eps = params
        v = diagnostics.rate_guarantee_check(chain, xi, m, k, eps, extend=extend)
        return {
            "check": check,
            "ok": v.ok,
            "witness": {
                "premise_value": v.premise_value,
                "premise_holds": v.premise_holds,
                "xi_m_norm_sq": v.xi_m_norm_sq,
                "n_bound": v.n_bound,
                "conclusion_value": v.conclusion_value,
                "conclusion_holds": v.conclusion_holds,
            },
        }
    (k,) = params
    v = np.asarray(xi, dtype=float)
    worst, worst_step = math.inf, None
    for n in range(1, len(chain) + 1):
        t = chain.term(n)
        res = diagnostics.dissipation_check(t, v, k, eig=chain.eig(n))
        if res.rhs - res.lhs < worst:
            worst, worst_step = res.rhs - res.lhs, n
        v = t @ v
    return {
        "check": check,
        "ok": worst >= -diagnostics.DISSIPATION_TOL,
        "witness": {"min_margin": worst, "step": worst_step, "gamma": diagnostics.gamma(k)},
    }


def cmd_verify(args):
    chain = load_chain(args.chain, verify=False)
    xi = parse_xi(args.xi, chain.dim)
    doc = verify_document(chain, args.check, xi, extend=args.extend)
    _emit(doc, args.out)
    return EXIT_OK if doc["ok"] else EXIT_NUMERICAL


def cmd_rotation2d(args):
    if args.analyze:
        _emit(rotation2d.analyze(args.delta), args.report)
        return EXIT_OK
    theta = rotation2d.solve_theta(args.delta, args.n, args.target_angle, args.regime)
    state = rotation2d.run_recursion(rotation2d.RotationParams(args.delta, args.n, theta, args.regime))
    lam = args.lambda_
    chain = rotation2d.build_chain(state, lam)
    if args.out:
        save_chain(chain, args.out)
    report = rotation2d.report(state, chain, lam)
    _emit(report, args.report)
    return EXIT_OK if all(report["bounds_ok"].values()) else EXIT_NUMERICAL


def cmd_rate(args):
    if args.chain is None:
        if args.xi_norm_sq is None:
            raise ParseError("rate needs --chain or --xi-norm-sq")
        _emit({"n_bound": diagnostics.rate_bound(args.m, args.k, args.eps, args.xi_norm_sq)}, args.out)
        return EXIT_OK
    chain = load_chain(args.chain, verify=False)
    xi = parse_xi(args.xi, chain.dim)
    doc = verify_document(chain, f"rate:{args.m},{args.k},{args.eps!r}", xi, extend=args.extend)
    _emit(doc, args.out)
    return EXIT_OK if doc["ok"] else EXIT_NUMERICAL


def cmd_sweep(args):
    manifest = SweepManifest.from_dict(read_json(args.manifest), output_dir=args.out_dir)
    if args.workers is not None:
        manifest = SweepManifest(manifest.configs, manifest.group_by, manifest.summary_out, args.workers)
    summary, code = run_sweep(manifest)
    if not manifest.summary_out:
        _emit(summary)
    return code


def cmd_plot(args):
    plot_trace(args.trace, args.out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="contraction-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a decreasing chain")
    g.add_argument("--kind", required=True, choices=GENERATOR_KINDS)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--len", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--delta", type=float)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="trace xi_n = S_n^sigma xi")
    r.add_argument("--chain", required=True)
    r.add_argument("--sigma", default="identity")
    r.add_argument("--xi", default="random:0")
    r.add_argument("--steps", type=int, help="horizon (default: ten times the rate bound)")
    r.add_argument("--k", type=int, default=1)
    r.add_argument("--threshold", type=float, default=1e-4)
    r.add_argument("--no-extend", action="store_true", help="do not repeat the last term past the chain")
    r.add_argument("--no-adjoint", action="store_true")
    r.add_argument("--name", default="run")
    r.add_argument("--out", required=True, help="trace CSV")
    r.add_argument("--verdict", help="verdict JSON")
    r.add_argument("--plot", help="SVG plot")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run one diagnostic on a chain file")
    v.add_argument("--chain", required=True)
    v.add_argument("--check", required=True)
    v.add_argument("--xi", default="random:0")
    v.add_argument("--extend", action="store_true")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("rotation2d", help="2x2 rotating chain")
    t.add_argument("--delta", type=float, required=True)
    t.add_argument("--n", type=int, default=10_000)
    mode = t.add_mutually_exclusive_group(required=True)
    mode.add_argument("--target-angle", type=float)
    mode.add_argument("--analyze", action="store_true")
    t.add_argument("--lambda", dest="lambda_", type=float, default=1.0)
    t.add_argument("--regime", choices=rotation2d.REGIMES, default="strict")
    t.add_argument("--out")
    t.add_argument("--report")
    t.set_defaults(func=cmd_rotation2d)

    a = sub.add_parser("rate", help="rate bound, optionally checked on a chain")
    a.add_argument("--m", type=int, required=True)
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--eps", type=float, required=True)
    a.add_argument("--xi-norm-sq", type=float)
    a.add_argument("--chain")
    a.add_argument("--xi", default="random:0")
    a.add_argument("--extend", action="store_true")
    a.add_argument("--out")
    a.set_defaults(func=cmd_rate)

    s = sub.add_parser("sweep", help="run a manifest of experiments")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out-dir")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="render a trace CSV to SVG")
    pl.add_argument("--trace", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        if args.command == "rotation2d" and not args.analyze and args.n > 1_000_000:
            raise ParseError("n is capped at 10^6")
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped onto the exit contract
        code = exit_code_for(exc)
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
