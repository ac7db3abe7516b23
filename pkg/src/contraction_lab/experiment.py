"""Experiment configs, single runs and batch sweeps.

A config names a chain (generator parameters or a chain file), a sigma
spec, a start-vector spec and a horizon. A run writes the trace CSV and a
verdict JSON; a sweep runs many configs on a thread pool and writes a summary
grouped by generator and sigma.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
import itertools
import os
from pathlib import Path
import statistics

import numpy as np

from .diagnostics import dissipation_check, rate_bound
from .errors import EXIT_NUMERICAL, EXIT_OK, ContractionLabError, ParseError, exit_code_for
from .io import load_chain, load_sigma, parse_xi, write_json, write_trace_csv
from .products import trace_convergence, xi_norm_monotone
from .seqgen import GENERATOR_KINDS, generate

DEFAULT_THRESHOLD = 1e-4
AUTO_EXTEND = 4
RATE_K = 4
HORIZON_FACTOR = 10
MONOTONE_SLACK = 1e-12


def _reject_unknown(obj, allowed, what):
    if not isinstance(obj, dict):
        raise ParseError(f"{what} must be a JSON object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ParseError(f"unknown key(s) in {what}: {', '.join(extra)}")


@dataclass(frozen=True)
class ChainSpec:
    """Either a generator (``kind``, ``dim``, ``len``, ``seed``, ``delta``) or a ``file``."""

    kind: "str | None" = None
    dim: "int | None" = None
    len: "int | None" = None
    seed: int = 0
    delta: "float | None" = None
    file: "str | None" = None

    @classmethod
    def from_dict(cls, obj):
        _reject_unknown(obj, [f.name for f in fields(cls)], "chain spec")
        spec = cls(**obj)
        if spec.file is None:
            if spec.kind not in GENERATOR_KINDS:
                raise ParseError(f"chain kind must be one of {', '.join(GENERATOR_KINDS)}")
            if not isinstance(spec.dim, int) or not isinstance(spec.len, int) or spec.dim < 1 or spec.len < 1:
                raise ParseError("generated chains need positive integer dim and len")
        elif spec.kind is not None:
            raise ParseError("give either a chain file or generator parameters, not both")
        return spec

    def build(self):
        if self.file is not None:
            return load_chain(self.file)
        return generate(self.kind, self.dim, self.len, self.seed, delta=self.delta)

    @property
    def label(self):
        return self.kind if self.file is None else "file"

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class ExperimentConfig:
    """One run. ``horizon`` is an integer or ``"auto"`` (ten times the rate bound
    with ``k = 4``, ``eps = threshold`` and the start vector's squared norm).
    """

    name: str
    chain: ChainSpec
    sigma: str = "identity"
    xi: str = "random:0"
    horizon: "int | str" = "auto"
    k: int = 1
    threshold: float = DEFAULT_THRESHOLD
    extend: bool = True
    adjoint: bool = True
    auto_extend: int = AUTO_EXTEND
    trace_out: "str | None" = None
    verdict_out: "str | None" = None
    plot_out: "str | None" = None

    @classmethod
    def from_dict(cls, obj):
        _reject_unknown(obj, [f.name for f in fields(cls)], "experiment config")
        if "name" not in obj or "chain" not in obj:
            raise ParseError("experiment config needs 'name' and 'chain'")
        data = dict(obj)
        data["chain"] = ChainSpec.from_dict(obj["chain"])
        cfg = cls(**data)
        cfg.validate(check_files=False)
        return cfg

    def validate(self, check_files=True):
        if self.horizon != "auto" and (not isinstance(self.horizon, int) or self.horizon < 1):
            raise ParseError("horizon must be a positive integer or 'auto'")
        if not isinstance(self.k, int) or self.k < 1:
            raise ParseError("k must be a positive integer")
        if not self.threshold > 0:
            raise ParseError("threshold must be positive")
        if not isinstance(self.auto_extend, int) or self.auto_extend < 1:
            raise ParseError("auto_extend must be a positive integer")
        if check_files:
            refs = [self.chain.file]
            if self.sigma.startswith("file:"):
                refs.append(self.sigma[5:])
            kind, sep, _ = self.xi.partition(":")
            if not (sep and kind in ("random", "basis")):
                refs.append(self.xi[5:] if kind == "file" and sep else self.xi)
            for ref in refs:
                if ref is not None and not os.path.exists(ref):
                    raise FileNotFoundError(f"{self.name}: referenced file {ref} does not exist")

    def outputs(self):
        return [p for p in (self.trace_out, self.verdict_out, self.plot_out) if p is not None]

    def to_dict(self):
        out = asdict(self)
        out["chain"] = self.chain.to_dict()
        return out


def auto_horizon(xi_norm_sq, threshold):
    return HORIZON_FACTOR * rate_bound(0, RATE_K, threshold, xi_norm_sq)


def _diagnostic_flags(chain, trace, sigma):
    flags = {"xi_norm_monotone": xi_norm_monotone(trace)}
    if sigma.kind != "identity":
        flags["f_functional_monotone"] = None
        flags["dissipation"] = None
        return flags
    f = trace.f_functional
    flags["f_functional_monotone"] = bool(np.all(np.diff(f) <= MONOTONE_SLACK))
    ok = True
    # the step from row m to row m+1 applies T_{m+1}
    for m in range(len(trace) - 1):
        j = int(trace.sigma_index[m + 1])
        res = dissipation_check(chain.term(j, extend=True), trace.vectors[m], trace.k, eig=chain.eig(j, extend=True))
        ok &= res.ok
    flags["dissipation"] = bool(ok)
    return flags


def execute(config):
    """Run a config in memory; returns ``(trace, verdict)`` without writing files."""
    chain = config.chain.build()
    sigma = load_sigma(config.sigma)
    xi = parse_xi(config.xi, chain.dim)
    xi_sq = float(xi @ xi)
    horizon = auto_horizon(xi_sq, config.threshold) if config.horizon == "auto" else int(config.horizon)
    limit = horizon * config.auto_extend
    trace = trace_convergence(
        chain,
        sigma,
        xi,
        limit,
        k=config.k,
        extend=config.extend,
        adjoint=config.adjoint,
        functional=sigma.kind == "identity",
        retain=sigma.kind == "identity",
        stop_below=config.threshold,
    )
    hit = trace.steps_to(config.threshold)
    if config.adjoint:
        both = np.nonzero((trace.dist_to_P <= config.threshold) & (trace.adjoint_dist <= config.threshold))[0]
        adj_hit = int(trace.step[both[0]]) if both.size else None
    else:
        adj_hit = None
    if hit is not None and hit <= horizon:
        status = "converged"
    elif hit is not None:
        status = "converged_after_extension"
    else:
        status = "not_converged"
    verdict = {
        "name": config.name,
        "status": status,
        "converged": status == "converged",
        "threshold": config.threshold,
        "horizon": horizon,
        "horizon_searched": limit,
        "steps_to_threshold": hit,
        "steps_to_threshold_both": adj_hit,
        "final_step": trace.final_step,
        "final_dist_to_P": float(trace.dist_to_P[-1]),
        "final_adjoint_dist": None if not config.adjoint else float(trace.adjoint_dist[-1]),
        "final_xi_norm": float(trace.xi_norm[-1]),
        "xi_norm_sq": xi_sq,
        "sigma": sigma.describe(),
        "sigma_repetition_bound": sigma.repetition_bound,
        "chain": {"dim": chain.dim, "len": len(chain), "meta": chain.meta},
        "limit_note": "P is the top spectral projection of the last chain term",
        "flags": _diagnostic_flags(chain, trace, sigma),
        "error": None,
        "config": config.to_dict(),
    }
    return trace, verdict


def run_experiment(config):
    """Run one config and write its artifacts.

    Numerical failures (exit code 3) are recorded in the verdict instead of
    raised; validation and IO errors propagate.

    Returns
    -------
    dict
        The verdict.
    """
    config.validate()
    trace = None
    try:
        trace, verdict = execute(config)
    except ContractionLabError as exc:
        if exit_code_for(exc) != EXIT_NUMERICAL:
            raise
        verdict = {
            "name": config.name,
            "status": "numerical_error",
            "converged": False,
            "error": f"{type(exc).__name__}: {exc}",
            "config": config.to_dict(),
        }
    if trace is not None and config.trace_out:
        write_trace_csv(trace, config.trace_out)
    if trace is not None and config.plot_out:
        from .plotting import render_svg

        render_svg(trace.step, trace.dist_to_P, trace.adjoint_dist, config.plot_out)
    if config.verdict_out:
        write_json(config.verdict_out, verdict)
    return verdict


@dataclass(frozen=True)
class SweepManifest:
    """A list of configs plus grouping for the summary."""

    configs: tuple
    group_by: tuple = ("generator", "sigma")
    summary_out: "str | None" = None
    workers: "int | None" = None

    GROUP_KEYS = ("generator", "sigma", "dim")

    def __post_init__(self):
        bad = [g for g in self.group_by if g not in self.GROUP_KEYS]
        if bad:
            raise ParseError(f"cannot group by {bad}; allowed: {', '.join(self.GROUP_KEYS)}")
        names = [c.name for c in self.configs]
        if len(set(names)) != len(names):
            raise ParseError("config names must be unique")
        paths = [os.path.abspath(p) for c in self.configs for p in c.outputs()]
        if self.summary_out:
            paths.append(os.path.abspath(self.summary_out))
        if len(set(paths)) != len(paths):
            raise ParseError("two configs share an output path")

    @classmethod
    def from_dict(cls, obj, output_dir=None):
        """Decode a manifest.

        Keys: ``configs`` (list), ``grid`` (generator kinds x sigma specs x
        seeds x dims expanded into configs), ``defaults`` (merged into every
        config), ``output_dir`` (default location of per-config artifacts),
        ``group_by``, ``summary_out``, ``workers``, ``plots`` (bool).
        """
        _reject_unknown(
            obj,
            ["configs", "grid", "defaults", "output_dir", "group_by", "summary_out", "workers", "plots"],
            "sweep manifest",
        )
        out_dir = output_dir or obj.get("output_dir")
        defaults = obj.get("defaults", {})
        raw = list(obj.get("configs", []))
        if "grid" in obj:
            raw.extend(expand_grid(obj["grid"]))
        configs = []
        for entry in raw:
            entry = {**defaults, **entry}
            if out_dir is not None:
                stem = Path(out_dir) / entry.get("name", "")
                entry.setdefault("trace_out", str(stem) + ".csv")
                entry.setdefault("verdict_out", str(stem) + ".json")
                if obj.get("plots"):
                    entry.setdefault("plot_out", str(stem) + ".svg")
            configs.append(ExperimentConfig.from_dict(entry))
        summary = obj.get("summary_out")
        if summary is None and out_dir is not None:
            summary = str(Path(out_dir) / "summary.json")
        return cls(tuple(configs), tuple(obj.get("group_by", cls.group_by)), summary, obj.get("workers"))


def expand_grid(grid):
    """Configs for every (kind, sigma, seed, dim) combination, named ``kind-dD-sigma-sS``."""
    _reject_unknown(grid, ["kinds", "sigmas", "seeds", "dims", "len", "delta", "xi"], "grid")
    out = []
    kinds = grid.get("kinds", ["constant"])
    sigmas = grid.get("sigmas", ["identity"])
    seeds = grid.get("seeds", [0])
    dims = grid.get("dims", [2])
    for kind, sig, seed, dim in itertools.product(kinds, sigmas, seeds, dims):
        chain = {"kind": kind, "dim": dim, "len": grid.get("len", 30), "seed": seed}
        if grid.get("delta") is not None:
            chain["delta"] = grid["delta"]
        out.append(
            {
                "name": f"{kind}-d{dim}-{sig.replace(':', '')}-s{seed}",
                "chain": chain,
                "sigma": sig,
                "xi": grid.get("xi", f"random:{seed}"),
            }
        )
    return out


def _group_key(config, by):
    parts = {"generator": config.chain.label, "sigma": config.sigma, "dim": str(config.chain.dim)}
    return "|".join(parts[g] for g in by)


def summarize(manifest, verdicts):
    rows = []
    groups = {}
    for cfg, v in zip(manifest.configs, verdicts):
        row = {
            "name": cfg.name,
            "generator": cfg.chain.label,
            "sigma": cfg.sigma,
            "dim": cfg.chain.dim,
            "seed": cfg.chain.seed,
            "status": v["status"],
            "steps_to_threshold": v.get("steps_to_threshold"),
        }
        rows.append(row)
        groups.setdefault(_group_key(cfg, manifest.group_by), []).append(row)
    stats = {}
    for key, members in groups.items():
        steps = [r["steps_to_threshold"] for r in members if r["steps_to_threshold"] is not None]
        stats[key] = {
            "count": len(members),
            "failures": sum(r["status"] != "converged" for r in members),
            "min": min(steps) if steps else None,
            "median": statistics.median(steps) if steps else None,
            "max": max(steps) if steps else None,
        }
    failures = sum(r["status"] != "converged" for r in rows)
    return {
        "count": len(rows),
        "failures": failures,
        "group_by": list(manifest.group_by),
        "groups": stats,
        "rows": rows,
    }


def run_sweep(manifest):
    """Run every config (concurrently) and return ``(summary, exit_code)``.

    The summary depends only on the configs and their order, never on
    completion order. The exit code is 0 when every config converged within
    its horizon and 3 otherwise. Parent directories of every output path are
    created first.
    """
    for cfg in manifest.configs:
        for path in (cfg.trace_out, cfg.verdict_out, cfg.plot_out):
            if path:
                Path(path).parent.mkdir(parents=True, exist_ok=True)
    if manifest.summary_out:
        Path(manifest.summary_out).parent.mkdir(parents=True, exist_ok=True)
    if manifest.configs:
        workers = manifest.workers or min(len(manifest.configs), os.cpu_count() or 1)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            verdicts = list(pool.map(run_experiment, manifest.configs))
    else:
        verdicts = []
    summary = summarize(manifest, verdicts)
    if manifest.summary_out:
        write_json(manifest.summary_out, summary)
    code = EXIT_OK if summary["failures"] == 0 else EXIT_NUMERICAL
    return summary, code


__all__ = [
    "ChainSpec",
    "ExperimentConfig",
    "SweepManifest",
    "auto_horizon",
    "execute",
    "expand_grid",
    "run_experiment",
    "run_sweep",
    "summarize",
]
