"""Command-line interface.

Subcommands: ``probs`` (analytic outcome tables), ``certify`` (min-entropy
certification), ``optimize`` / ``sweep`` (threshold and energy searches),
``ingest`` (raw sample binning with optional certification) and ``bound``
(certificate fast path, no optimization).

Exit codes: 0 success, 2 invalid input, 3 solver failure.  Angles are
degrees on the command line and radians internally.  A JSON config file
can supply any long option (dashes as underscores); explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import certify as certify_mod
from . import conic, detection, optimize
from .states import EnergyBound

__all__ = ["main", "RunConfig"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3


class InputError(Exception):
    """Invalid user input; maps to exit code 2."""


class SolverFailure(Exception):
    """Certification did not reach optimality; maps to exit code 3."""


@dataclass
class RunConfig:
    """Resolved options shared by the detector-facing subcommands."""

    detector: str
    mu: float | None
    eta: float
    phase_error: float
    partition: detection.HomodynePartition | detection.PhaseSpacePartition | None

    def scenario(self) -> detection.DetectorScenario:
        if self.partition is None:
            raise InputError("no partition given: use --thresholds, --partition "
                             "or --partition-file")
        return detection.DetectorScenario(
            kind=self.detector, eta=self.eta,
            phase_error=self.phase_error, partition=self.partition,
        )


# ---------------------------------------------------------------------------
# Option plumbing
# ---------------------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise InputError(f"config file {path} must hold a JSON object")
    return data


def _opt(args: argparse.Namespace, config: dict, key: str, default=None):
    """Explicit flag > config file entry > default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _floats(text: str) -> list[float]:
    try:
        return [float(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}: {exc}")


def _parse_range(text: str) -> list[float]:
    """``start:stop:step`` (inclusive stop) or a comma list."""
    text = str(text)
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InputError(f"ranges are start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise InputError("range step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    return _floats(text)


def _parse_partition_spec(text: str) -> detection.PhaseSpacePartition:
    """Inline heterodyne partition grammar.

    ``strips:<t1,...>``, ``sectors:<k>[:offset_deg]``, ``annuli:<r1,...>``
    or ``grid:<k>x<r1,...>``.
    """
    kind, _, rest = str(text).partition(":")
    try:
        if kind == "strips":
            return detection.strip_partition(_floats(rest))
        if kind == "sectors":
            head, _, offset = rest.partition(":")
            return detection.sector_partition(
                int(head), offset=math.radians(float(offset)) if offset else 0.0
            )
        if kind == "annuli":
            return detection.annulus_partition(_floats(rest))
        if kind == "grid":
            head, _, radii = rest.partition("x")
            return detection.sector_annulus_partition(int(head), _floats(radii))
    except (ValueError, InputError) as exc:
        raise InputError(f"invalid partition spec {text!r}: {exc}")
    raise InputError(f"unknown partition family {kind!r} "
                     "(use strips:, sectors:, annuli: or grid:)")


_PIECE_TYPES = {
    "strip": lambda p: detection.Strip(float(p["x_min"]), float(p["x_max"])),
    "sector": lambda p: detection.Sector(float(p["theta_lo"]), float(p["theta_hi"])),
    "annulus": lambda p: detection.Annulus(float(p["r_lo"]), float(p["r_hi"])),
    "sector_annulus": lambda p: detection.SectorAnnulus(
        float(p["theta_lo"]), float(p["theta_hi"]), float(p["r_lo"]), float(p["r_hi"])),
}


def _load_partition_file(path: str):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read partition file {path}: {exc}")
    try:
        if data["kind"] == "homodyne":
            return detection.HomodynePartition(data["thresholds"])
        if data["kind"] == "heterodyne":
            regions = []
            for region in data["regions"]:
                pieces = [_PIECE_TYPES[p["type"]](p) for p in region]
                regions.append(tuple(pieces))
            return detection.PhaseSpacePartition(regions)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid partition file {path}: {exc}")
    raise InputError(f"partition file {path}: kind must be homodyne or heterodyne")


def _resolve_partition(args, config, detector: str):
    inline_thresholds = _opt(args, config, "thresholds")
    inline_levels = _opt(args, config, "levels")
    inline_spec = _opt(args, config, "partition")
    file_spec = _opt(args, config, "partition_file")
    inline_given = [v for v in (inline_thresholds, inline_levels, inline_spec) if v is not None]
    if len(inline_given) > 1:
        raise InputError("give at most one of --thresholds, --levels, --partition")
    if inline_given and file_spec:
        raise InputError("inline partitions and --partition-file are mutually exclusive")

    if file_spec:
        return _load_partition_file(file_spec)
    if inline_thresholds is not None:
        part = detection.HomodynePartition(_floats(inline_thresholds))
        if detector == "heterodyne":
            return detection.strip_partition(part.thresholds)
        return part
    if inline_levels is not None:
        outcomes = _opt(args, config, "outcomes")
        if outcomes is None:
            raise InputError("--levels requires --outcomes")
        spec = detection.SymmetricPartitionSpec(int(outcomes), _floats(inline_levels))
        part = detection.expand_symmetric(spec)
        if detector == "heterodyne":
            return detection.strip_partition(part.thresholds)
        return part
    if inline_spec is not None:
        if detector != "heterodyne":
            raise InputError("--partition region specs apply to heterodyne detection")
        return _parse_partition_spec(inline_spec)
    return None


def _run_config(args, config) -> RunConfig:
    detector = _opt(args, config, "detector", "homodyne")
    if detector not in ("homodyne", "heterodyne"):
        raise InputError(f"unknown detector {detector!r}")
    mu = _opt(args, config, "mu")
    partition = _resolve_partition(args, config, detector)
    try:
        return RunConfig(
            detector=detector,
            mu=float(mu) if mu is not None else None,
            eta=float(_opt(args, config, "eta", 1.0)),
            phase_error=math.radians(float(_opt(args, config, "phase_error_deg", 0.0))),
            partition=partition,
        )
    except ValueError as exc:
        raise InputError(str(exc))


def _tolerances(args, config) -> conic.Tolerances:
    return conic.Tolerances(
        gap=float(_opt(args, config, "gap_tol", 1e-8)),
        feasibility=float(_opt(args, config, "feas_tol", 1e-8)),
        max_iterations=int(_opt(args, config, "max_iterations", 200)),
    )


def _write_table(dist: detection.ConditionalDistribution, path: str | None,
                 fmt: str, mu: float | None) -> None:
    if fmt == "json":
        payload = {"d": dist.outcomes, "p": dist.table.tolist()}
        if mu is not None:
            payload["mu"] = mu
        text = json.dumps(payload, indent=2) + "\n"
        if path:
            with open(path, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return
    if path:
        detection.write_probs_csv(path, dist)
    else:
        sys.stdout.write("x,b,p\n")
        for x in range(2):
            for b in range(dist.outcomes):
                sys.stdout.write(f"{x},{b},{format(dist.table[x, b], '.17g')}\n")


def _read_table(path: str) -> detection.ConditionalDistribution:
    try:
        if path.endswith(".json"):
            with open(path) as fh:
                data = json.load(fh)
            return detection.ConditionalDistribution(np.array(data["p"], dtype=float))
        return detection.read_probs_csv(path)
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read probability table {path}: {exc}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_probs(args, config) -> int:
    run = _run_config(args, config)
    if run.mu is None:
        raise InputError("--mu is required")
    dist = detection.scenario_probs(run.scenario(), run.mu)
    _write_table(dist, _opt(args, config, "output"), _opt(args, config, "format", "csv"),
                 run.mu)
    return EXIT_OK


def _certification_input(args, config) -> tuple[certify_mod.CertificationInput, RunConfig]:
    run = _run_config(args, config)
    if run.mu is None:
        raise InputError("--mu is required")
    probs_file = _opt(args, config, "probs_file")
    if probs_file and run.partition is not None:
        raise InputError("give either --probs-file or an inline detector spec, not both")
    if probs_file:
        dist = _read_table(probs_file)
    else:
        dist = detection.scenario_probs(run.scenario(), run.mu)
    try:
        inp = certify_mod.CertificationInput(EnergyBound(run.mu), dist)
    except ValueError as exc:
        raise InputError(str(exc))
    return inp, run


def _cmd_certify(args, config) -> int:
    inp, _ = _certification_input(args, config)
    form = _opt(args, config, "form", "dual")
    result = certify_mod.guessing_probability(inp, form=form,
                                              tolerances=_tolerances(args, config))
    if result.status != conic.OPTIMAL:
        print(f"solver failed: status {result.status}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"P_g ({result.form}): {result.pg:.12g}")
    print(f"H_min: {result.min_entropy:.12g} bits")
    print(f"status: {result.status}  gap: {result.gap:.3g}  "
          f"iterations: {result.iterations}")
    report = _opt(args, config, "output")
    if report:
        with open(report, "w") as fh:
            json.dump({"pg": result.pg, "hmin": result.min_entropy,
                       "form": result.form, "status": result.status,
                       "primal": result.primal_value, "dual": result.dual_value,
                       "gap": result.gap, "iterations": result.iterations}, fh)
    cert_path = _opt(args, config, "emit_certificate")
    if cert_path:
        cert = certify_mod.issue_certificate(result, inp)
        certify_mod.save_certificate(cert, cert_path)
        print(f"certificate written to {cert_path}")
    return EXIT_OK


def _optimization_spec(args, config) -> optimize.OptimizationSpec:
    detector = _opt(args, config, "detector", "homodyne")
    outcomes = _opt(args, config, "outcomes")
    if outcomes is None:
        raise InputError("--outcomes is required")
    mu = _opt(args, config, "mu")
    search = bool(_opt(args, config, "search_mu", False))
    if mu is not None and search:
        raise InputError("--mu and --search-mu are mutually exclusive")
    if search:
        mu_setting = (float(_opt(args, config, "mu_min", 1e-4)),
                      float(_opt(args, config, "mu_max", 0.5)))
    elif mu is not None:
        mu_setting = float(mu)
    else:
        mu_setting = None
    settings = optimize.OptimizerSettings(
        multi_starts=int(_opt(args, config, "starts", 5)),
        max_evaluations=int(_opt(args, config, "max_evals", 250)),
        convergence_tol=float(_opt(args, config, "tol", 1e-7)),
    )
    try:
        return optimize.OptimizationSpec(
            kind=detector,
            outcomes=int(outcomes) if not isinstance(outcomes, str) else int(_floats(outcomes)[0]),
            eta=float(_opt(args, config, "eta", 1.0)),
            phase_error=math.radians(float(_opt(args, config, "phase_error_deg", 0.0))),
            mu=mu_setting,
            settings=settings,
        )
    except ValueError as exc:
        raise InputError(str(exc))


def _cmd_optimize(args, config) -> int:
    spec = _optimization_spec(args, config)
    try:
        if isinstance(spec.mu, float):
            opt = optimize.optimize_levels(spec)
        else:
            opt = optimize.optimize_mu_and_levels(spec)
    except RuntimeError as exc:
        print(f"optimization failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    row = optimize.SweepRow(float(spec.outcomes), opt.hmin, opt.pg, opt.mu,
                            opt.levels, opt.status)
    result = optimize.SweepResult("outcomes", [row])
    out = _opt(args, config, "output")
    if out:
        optimize.write_sweep_csv(out, result)
    print(f"H_min*: {opt.hmin:.9g} bits  P_g: {opt.pg:.9g}")
    print(f"mu*: {opt.mu:.9g}  levels: {';'.join(format(l, '.9g') for l in opt.levels)}")
    print(f"status: {opt.status}  evaluations: {opt.evaluations}")
    return EXIT_OK


def _cmd_sweep(args, config) -> int:
    axis = _opt(args, config, "axis")
    if axis is None:
        raise InputError("--axis is required")
    axis = axis.replace("-", "_")
    if axis not in ("mu", "eta", "phase_error", "outcomes"):
        raise InputError(f"unknown sweep axis {axis!r}")

    if axis == "outcomes":
        outcomes_opt = _opt(args, config, "outcomes")
        if outcomes_opt is None:
            raise InputError("the outcomes axis needs --outcomes as a comma list")
        grid = [int(v) for v in _floats(str(outcomes_opt))]
        base_outcomes = grid[0]
    else:
        grid_opt = _opt(args, config, "grid")
        degrees_opt = _opt(args, config, "degrees")
        if axis == "phase_error":
            if degrees_opt is None and grid_opt is None:
                raise InputError("phase-error sweeps need --degrees start:stop:step")
            grid = [math.radians(v) for v in _parse_range(degrees_opt or grid_opt)]
        else:
            if grid_opt is None:
                raise InputError("--grid is required")
            grid = _parse_range(grid_opt)
        outcomes_opt = _opt(args, config, "outcomes")
        if outcomes_opt is None:
            raise InputError("--outcomes is required")
        base_outcomes = int(_floats(str(outcomes_opt))[0])

    detector = _opt(args, config, "detector", "homodyne")
    mu = _opt(args, config, "mu")
    search = bool(_opt(args, config, "search_mu", axis != "mu" and mu is None))
    if axis == "mu":
        mu_setting = None
    elif search:
        mu_setting = (float(_opt(args, config, "mu_min", 1e-4)),
                      float(_opt(args, config, "mu_max", 0.5)))
    else:
        mu_setting = float(mu) if mu is not None else None
    settings = optimize.OptimizerSettings(
        multi_starts=int(_opt(args, config, "starts", 3)),
        max_evaluations=int(_opt(args, config, "max_evals", 200)),
        convergence_tol=float(_opt(args, config, "tol", 1e-7)),
    )
    try:
        spec = optimize.OptimizationSpec(
            kind=detector, outcomes=base_outcomes,
            eta=float(_opt(args, config, "eta", 1.0)),
            phase_error=math.radians(float(_opt(args, config, "phase_error_deg", 0.0))),
            mu=mu_setting, settings=settings,
        )
    except ValueError as exc:
        raise InputError(str(exc))

    def progress(param, row):
        print(f"sweep {axis}={param:.6g}: hmin={row.hmin:.6g} status={row.status}",
              file=sys.stderr)

    jobs = int(_opt(args, config, "jobs", 0)) or None
    import os
    result = optimize.sweep(axis, grid, spec, jobs=jobs or os.cpu_count() or 1,
                            progress=progress)
    out = _opt(args, config, "output")
    if out:
        optimize.write_sweep_csv(out, result)
    else:
        optimize.write_sweep_csv("/dev/stdout", result)
    succeeded = sum(1 for row in result.rows if row.status == conic.OPTIMAL)
    return EXIT_OK if succeeded else EXIT_SOLVER


def _cmd_ingest(args, config) -> int:
    run = _run_config(args, config)
    samples_path = _opt(args, config, "samples")
    if samples_path is None:
        raise InputError("--samples is required")
    try:
        samples = detection.read_samples_csv(samples_path)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc))
    try:
        dist = detection.empirical_probs(
            samples, run.scenario(),
            phase_compensate=bool(_opt(args, config, "phase_compensate", False)),
        )
    except ValueError as exc:
        raise InputError(str(exc))
    _write_table(dist, _opt(args, config, "output"),
                 _opt(args, config, "format", "csv"), run.mu)

    cert_path = _opt(args, config, "certificate")
    if cert_path:
        try:
            cert = certify_mod.load_certificate(cert_path)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot load certificate {cert_path}: {exc}")
        if cert.outcomes != dist.outcomes:
            raise InputError(
                f"certificate is for {cert.outcomes} outcomes, data has {dist.outcomes}")
        if run.mu is not None and abs(run.mu - cert.mu) > 1e-12:
            raise InputError(
                f"certificate was issued at mu={cert.mu}; data claims mu={run.mu} "
                "(certificates are valid only at their issuance energy bound)")
        bound = certify_mod.certificate_bound(cert, dist)
        pg = min(max(bound, 1e-300), 1.0)
        print(f"certificate bound: P_g <= {bound:.12g}")
        print(f"H_min >= {-math.log2(pg):.12g} bits (certificate fast path)")
    if _opt(args, config, "certify", False):
        if run.mu is None:
            raise InputError("--certify needs --mu")
        result = certify_mod.guessing_probability(
            certify_mod.CertificationInput(EnergyBound(run.mu), dist),
            form="dual", tolerances=_tolerances(args, config))
        if result.status != conic.OPTIMAL:
            print(f"solver failed: status {result.status}", file=sys.stderr)
            return EXIT_SOLVER
        print(f"P_g (dual): {result.pg:.12g}")
        print(f"H_min: {result.min_entropy:.12g} bits")
    return EXIT_OK


def _cmd_bound(args, config) -> int:
    cert_path = _opt(args, config, "certificate")
    table_path = _opt(args, config, "probs_file")
    if not cert_path or not table_path:
        raise InputError("bound needs --certificate and --probs-file")
    try:
        cert = certify_mod.load_certificate(cert_path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot load certificate {cert_path}: {exc}")
    dist = _read_table(table_path)
    if cert.outcomes != dist.outcomes:
        raise InputError(
            f"certificate is for {cert.outcomes} outcomes, table has {dist.outcomes}")
    value = certify_mod.certificate_bound(cert, dist)
    pg = min(max(value, 1e-300), 1.0)
    print(f"certificate bound: P_g <= {value:.12g}")
    print(f"H_min >= {-math.log2(pg):.12g} bits")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_detector_options(sub) -> None:
    sub.add_argument("--detector", choices=["homodyne", "heterodyne"])
    sub.add_argument("--mu", type=float)
    sub.add_argument("--eta", type=float)
    sub.add_argument("--phase-error-deg", dest="phase_error_deg", type=float)
    sub.add_argument("--thresholds")
    sub.add_argument("--levels")
    sub.add_argument("--outcomes")
    sub.add_argument("--partition")
    sub.add_argument("--partition-file", dest="partition_file")


def _add_solver_options(sub) -> None:
    sub.add_argument("--gap-tol", dest="gap_tol", type=float)
    sub.add_argument("--feas-tol", dest="feas_tol", type=float)
    sub.add_argument("--max-iterations", dest="max_iterations", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qrandcert",
        description="Certified randomness rates for energy-bounded binary-input "
                    "QRNGs with d-outcome quadrature detection.",
    )
    parser.add_argument("--config", help="JSON file supplying defaults for any option")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("probs", help="analytic outcome probability table")
    _add_detector_options(p)
    p.add_argument("--output")
    p.add_argument("--format", choices=["csv", "json"])

    p = commands.add_parser("certify", help="certify min-entropy of a table")
    _add_detector_options(p)
    _add_solver_options(p)
    p.add_argument("--probs-file", dest="probs_file")
    p.add_argument("--form", choices=["primal", "dual", "both"])
    p.add_argument("--emit-certificate", dest="emit_certificate")
    p.add_argument("--output")

    p = commands.add_parser("optimize", help="optimize thresholds (and mu)")
    _add_detector_options(p)
    p.add_argument("--search-mu", dest="search_mu", action="store_const", const=True)
    p.add_argument("--mu-min", dest="mu_min", type=float)
    p.add_argument("--mu-max", dest="mu_max", type=float)
    p.add_argument("--starts", type=int)
    p.add_argument("--max-evals", dest="max_evals", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--output")

    p = commands.add_parser("sweep", help="optimize along a parameter grid")
    _add_detector_options(p)
    p.add_argument("--axis", choices=["mu", "eta", "phase-error", "outcomes"])
    p.add_argument("--grid")
    p.add_argument("--degrees")
    p.add_argument("--search-mu", dest="search_mu", action="store_const", const=True)
    p.add_argument("--mu-min", dest="mu_min", type=float)
    p.add_argument("--mu-max", dest="mu_max", type=float)
    p.add_argument("--starts", type=int)
    p.add_argument("--max-evals", dest="max_evals", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--jobs", type=int)
    p.add_argument("--output")

    p = commands.add_parser("ingest", help="bin raw samples into a table")
    _add_detector_options(p)
    _add_solver_options(p)
    p.add_argument("--samples")
    p.add_argument("--phase-compensate", dest="phase_compensate",
                   action="store_const", const=True)
    p.add_argument("--certify", action="store_const", const=True)
    p.add_argument("--certificate")
    p.add_argument("--output")
    p.add_argument("--format", choices=["csv", "json"])

    p = commands.add_parser("bound", help="apply a stored certificate to a table")
    p.add_argument("--certificate")
    p.add_argument("--probs-file", dest="probs_file")

    return parser


_COMMANDS = {
    "probs": _cmd_probs,
    "certify": _cmd_certify,
    "optimize": _cmd_optimize,
    "sweep": _cmd_sweep,
    "ingest": _cmd_ingest,
    "bound": _cmd_bound,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        config = _load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
