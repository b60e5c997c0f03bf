"""Command-line entry point: ``gswitch <subcommand> [config.yaml] [flags]``.

Exit codes: 0 success, 1 invalid configuration or system, 2 runtime failure.

CSV columns per subcommand:

* ``simulate``: epsilon, statistic, value, batch_std, horizon, seed
* ``limit``: instance, w, arrival_term, service_term, value
* ``ulb``: instance, z, arrival_term, service_term, value, epsilon
* ``lp-bounds``: epsilon, objective, f_lower, f_upper, status (plus mode)
* ``geometry``: several blocks, each introduced by a ``# name`` line
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from contextlib import contextmanager
from typing import Iterator, Sequence

import numpy as np

from . import analysis, geometry, lp
from .config import ConfigError, ExperimentConfig, from_dict, load, with_overrides
from .engine import InstabilityWarning, sweep
from .geometry import DirectionError, GeometryError
from .model import validate_spec

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class CliError(RuntimeError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (list, tuple, np.ndarray)):
        return " ".join(_fmt(v) for v in np.asarray(x).ravel().tolist())
    return str(x)


def _emit(cfg: ExperimentConfig, header: Sequence[str] | None, rows: list[Sequence], out: io.TextIOBase) -> None:
    cells = [[_fmt(v) for v in r] for r in rows]
    if cfg.output_format == "pretty" and header is not None:
        widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
        out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
        for r in cells:
            out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    if header is not None:
        writer.writerow(header)
    writer.writerows(cells)


@contextmanager
def _sink(path: str) -> Iterator[io.TextIOBase]:
    if path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _geometry(cfg: ExperimentConfig) -> geometry.CapacityGeometry:
    return geometry.build_geometry(cfg.spec, cfg.nu, cfg.facets)


OBJECTIVE_ALIASES = {"q1": (1, 0, 0), "q2": (0, 1, 0), "q3": (0, 0, 1), "q2+q3": (0, 1, 1), "q1+q2": (1, 1, 0), "q1+q3": (1, 0, 1)}


def parse_lp_objective(text: str) -> tuple[float, float, float]:
    if text in OBJECTIVE_ALIASES:
        return OBJECTIVE_ALIASES[text]
    try:
        parts = tuple(float(v) for v in text.split(","))
    except ValueError:
        parts = ()
    if len(parts) != 3:
        raise ConfigError([f"objective {text!r}: use q1, q2, q3, q2+q3, ... or three comma-separated weights"])
    return parts


# ---------------------------------------------------------------------------
# Subcommands

def cmd_validate(cfg: ExperimentConfig, args, out) -> int:
    problems = [str(v) for v in validate_spec(cfg.spec)]
    try:
        geo = _geometry(cfg)
        cfg.family.at(cfg.eps_list[0] if cfg.eps_list else 0.1)
        if not geo.tight_set:
            problems.append("nu: no facet is tight at nu")
    except (GeometryError, ValueError) as exc:
        problems.append(str(exc))
    for p in problems:
        out.write(p + "\n")
    if problems:
        return EXIT_INVALID
    out.write(f"{cfg.name}: ok\n")
    return EXIT_OK


def cmd_geometry(cfg: ExperimentConfig, args, out) -> int:
    geo = _geometry(cfg)
    out.write("# facets\n")
    _emit(cfg, ["index", "c", "b", "tight", "independent"],
          [[i, f.c, f.b, int(i in geo.tight_set), int(i in geo.independent_set)] for i, f in enumerate(geo.facets)], out)
    out.write("# H\n")
    _emit(cfg, None, [list(r) for r in geo.H], out)
    out.write("# trace_H\n")
    _emit(cfg, None, [[float(np.trace(geo.H))]], out)
    out.write("# sigma_B\n")
    _emit(cfg, None, [list(r) for r in geo.sigma_B], out)
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, args, out) -> int:
    geo = _geometry(cfg)
    names = list(cfg.objectives)
    W = [cfg.objectives[k] for k in names]
    with warnings.catch_warnings():
        warnings.simplefilter("error", InstabilityWarning)
        results = sweep(cfg.spec, cfg.family, geo, cfg.sim, cfg.eps_list, W, workers=1)
    rows = []
    failed = []
    for res in results:
        if res.error is not None:
            failed.append(f"eps={res.epsilon}: {res.error}")
            continue
        est = res.estimates
        std = est.batch_std
        base = (cfg.sim.horizon, res.seed)

        def add(stat, value, sd):
            rows.append([res.epsilon, stat, float(value), float(sd), *base])

        for k, name in enumerate(names):
            add(f"scaled_lincomb[{name}]", est.scaled_lincomb[k], np.atleast_1d(std["scaled_lincomb"])[k])
        for i, v in enumerate(est.mean_q):
            add(f"mean_q[{i + 1}]", v, std["mean_q"][i])
        for k, t in enumerate(sorted(est.perp_cone_moments)):
            add(f"perp_cone_moment[{t}]", est.perp_cone_moments[t], np.atleast_1d(std["perp_cone_moments"])[k])
            add(f"perp_subspace_moment[{t}]", est.perp_subspace_moments[t], np.atleast_1d(std["perp_subspace_moments"])[k])
        for i, v in enumerate(est.flow_residual):
            add(f"flow_residual[{i + 1}]", v, std["flow_residual"][i])
        for ell, v in enumerate(est.facet_slack):
            add(f"facet_slack[{ell + 1}]", v, std["facet_slack"][ell])
        if cfg.sim.estimate_cross_terms:
            for i in range(cfg.spec.n):
                for j in range(cfg.spec.n):
                    if i != j:
                        add(f"cross_qu[{i + 1},{j + 1}]", est.cross_qu[i, j], std["cross_qu"][i, j])
        add("invariant_violations", sum(est.invariant_violations.values()), 0.0)
    _emit(cfg, ["epsilon", "statistic", "value", "batch_std", "horizon", "seed"], rows, out)
    if failed:
        raise CliError("; ".join(failed))
    return EXIT_OK


def cmd_limit(cfg: ExperimentConfig, args, out) -> int:
    geo = _geometry(cfg)
    sigma = cfg.family.sigma_a_limit
    rows = []
    for name, target in cfg.objectives.items():
        try:
            kappa = analysis.face_scale(geo, target)
        except DirectionError:
            continue
        rep = analysis.ht_limit(geo, sigma, target / kappa)
        rows.append([f"{cfg.name}:{name}", target, kappa * rep.arrival_term, kappa * rep.service_term, kappa * rep.limit_value])
    if not rows:
        raise CliError("no objective lies on a positive multiple of the common face")
    _emit(cfg, ["instance", "w", "arrival_term", "service_term", "value"], rows, out)
    return EXIT_OK


def cmd_ulb(cfg: ExperimentConfig, args, out) -> int:
    geo = _geometry(cfg)
    rows = []
    for eps in cfg.eps_list:
        sigma_eps = cfg.family.at(eps).sigma_a
        for name, z in cfg.objectives.items():
            try:
                rep = analysis.ulb(geo, sigma_eps, z, eps)
            except DirectionError:
                continue
            denom = 2 * eps * float(z @ geo.nu)
            rows.append([f"{cfg.name}:{name}", z, rep.arrival_term / denom, rep.service_term / denom, rep.bound, eps])
    if not rows:
        raise CliError("no objective lies in the cone of tight normals")
    _emit(cfg, ["instance", "z", "arrival_term", "service_term", "value", "epsilon"], rows, out)
    return EXIT_OK


def cmd_lp_bounds(cfg: ExperimentConfig, args, out) -> int:
    if cfg.spec.n != 4:
        raise CliError("lp-bounds is defined for the 2x2 switch only")
    objective_text = args.objective or "q2+q3"
    alpha = parse_lp_objective(objective_text)
    modes = ("derived", "as_printed") if cfg.lp_mode == "both" else (cfg.lp_mode,)
    rows = []
    for eps in cfg.eps_list:
        for mode in modes:
            system = lp.build_system_2x2(eps=eps, mode=mode)
            try:
                lo, hi = lp.bounds(system, alpha)
                status = "optimal"
            except lp.ModelInconsistencyError:
                lo = hi = float("nan")
                status = "infeasible"
            except lp.UnboundedError:
                lo = hi = float("nan")
                status = "unbounded"
            rows.append([eps, objective_text, lo, hi, status, "printed" if mode == "as_printed" else mode])
    _emit(cfg, ["epsilon", "objective", "f_lower", "f_upper", "status", "mode"], rows, out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "geometry": cmd_geometry,
    "simulate": cmd_simulate,
    "limit": cmd_limit,
    "ulb": cmd_ulb,
    "lp-bounds": cmd_lp_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gswitch", description="Generalized-switch heavy-traffic toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="YAML experiment file")
        p.add_argument("--preset", help="use a named system instead of a config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--epsilon", type=float, action="append", help="repeatable; replaces eps_list")
        p.add_argument("--horizon", type=int)
        p.add_argument("--mode", choices=["derived", "printed", "as_printed", "both"])
        p.add_argument("--objective", help="lp-bounds objective: q1, q2, q3, q2+q3 or a,b,c")
        p.add_argument("--output", help="output path ('-' for stdout)")
        p.add_argument("--format", choices=["csv", "pretty"])
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config and args.preset:
            raise ConfigError(["give either a config file or --preset, not both"])
        if args.config:
            cfg = load(args.config)
        elif args.preset:
            cfg = from_dict({"system": {"preset": args.preset}})
        else:
            raise ConfigError(["a config file or --preset is required"])
        cfg = with_overrides(cfg, seed=args.seed, epsilon=args.epsilon, horizon=args.horizon,
                             mode=args.mode, output=args.output, format=args.format)
    except (ConfigError, KeyError) as exc:
        errors = exc.errors if isinstance(exc, ConfigError) else [str(exc.args[0])]
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    try:
        with _sink(cfg.output_path) as out:
            return COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
