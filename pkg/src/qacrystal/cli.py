"""Command-line front end.

Subcommands: spectrum, rigidity-scan, theta, beta-star, classify, sample,
matsubara, order-parameter, gks-audit, verify.  Every run emits one or more
ResultRecords as JSON lines (or a flat CSV table with --format csv).

Exit codes: 0 ok, 2 configuration error, 3 numerical error, 4 verification
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import RunConfig, config_digest, parse_config
from .criteria import classify_phase, solve_beta_star, theta_of_d, _theta_cached
from .errors import ConfigurationError, QacError
from .loops import LoopConfiguration, build_factory
from .sampler import (
    clipped_identity,
    gks_audit,
    matsubara_estimate,
    merge_reports,
    metropolis_chain,
    order_parameter,
    run_parallel_chains,
    save_checkpoint,
)
from .spectral import rigidity_mass_scan, single_site_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4


@dataclass(frozen=True)
class ResultRecord:
    """One structured result: command, config digest, toolkit version, outputs."""

    command: str
    digest: str
    version: str
    seed: int | None
    timestamp: str
    outputs: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "digest": self.digest,
                "version": self.version,
                "seed": self.seed,
                "timestamp": self.timestamp,
                "outputs": self.outputs,
            },
            sort_keys=True,
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _report_outputs(report) -> dict:
    return {
        "value": _jsonable(report.value),
        "std_error": _jsonable(report.std_error),
        "n_samples": report.n_samples,
        "acceptance_rates": _jsonable(report.acceptance_rates),
        "settings": _jsonable(report.settings_echo),
    }


def _load_config(args) -> RunConfig:
    if not args.config:
        raise ConfigurationError("this command requires --config PATH")
    with open(args.config, "r", encoding="utf-8") as fh:
        config = parse_config(fh.read())
    if getattr(args, "seed", None) is not None:
        config = replace(config, chain=replace(config.chain, seed=args.seed))
    return config


def _emit(records, args) -> None:
    if args.format == "csv":
        text = _records_to_csv(records)
    else:
        text = "\n".join(r.to_json() for r in records) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _records_to_csv(records) -> str:
    rows = []
    for record in records:
        table = record.outputs.get("table")
        if table:
            rows.extend(table)
        else:
            flat = {"command": record.command, "digest": record.digest}
            for key, value in record.outputs.items():
                if isinstance(value, (int, float, str)) or value is None:
                    flat[key] = value
                else:
                    flat[key] = json.dumps(_jsonable(value))
            rows.append(flat)
    if not rows:
        return ""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def _initial_configuration(config: RunConfig, slices: int) -> LoopConfiguration:
    if config.volume is None:
        raise ConfigurationError("this command requires a [volume] section in the config")
    boundary = config.boundary
    if boundary.sign != 0:
        # start in the boundary-selected well so clamped runs begin mirrored
        level = boundary.sign * boundary.clamp
        return LoopConfiguration.constant(
            config.volume, config.model.beta, slices, level, boundary
        )
    return LoopConfiguration.zeros(config.volume, config.model.beta, slices, boundary)


def _run_chains(config: RunConfig, threads: int):
    model = config.model
    slices = config.resolved_slices()
    factory = build_factory(model.beta, model.m, model.a, slices)
    initial = _initial_configuration(config, slices)
    if threads > 1:
        return run_parallel_chains(initial, model, factory, config.chain, threads)
    return [metropolis_chain(initial, model, factory, config.chain)]


def _cmd_spectrum(args) -> list[ResultRecord]:
    config = _load_config(args)
    levels = args.levels or config.levels
    spectrum = single_site_spectrum(config.model, levels=levels, grid=config.grid)
    outputs = {
        "eigenvalues": _jsonable(spectrum.eigenvalues),
        "gap": spectrum.gap,
        "gap_index": spectrum.gap_index,
        "R_m": spectrum.rigidity,
        "half_width": spectrum.half_width,
        "levels": levels,
    }
    return [ResultRecord("spectrum", config_digest(config), __version__, None, _now(), outputs)]


def _cmd_rigidity_scan(args) -> list[ResultRecord]:
    config = _load_config(args)
    masses = np.geomspace(args.m_max, args.m_min, args.n_masses)
    result = rigidity_mass_scan(config.model, masses, levels=config.levels)
    table = [
        {"m": p.mass, "Delta": p.gap, "R_m": p.rigidity}
        for p in result.points
    ]
    outputs = {"table": table, "slope": result.slope}
    return [ResultRecord("rigidity-scan", config_digest(config), __version__, None, _now(), outputs)]


def _cmd_theta(args) -> list[ResultRecord]:
    dispersion = theta_of_d(args.d)
    outputs = {
        "d": dispersion.d,
        "theta": dispersion.theta,
        "quadrature_error": dispersion.quadrature_error,
        "method": dispersion.method,
    }
    digest = f"theta-d{args.d}"
    return [ResultRecord("theta", digest, __version__, None, _now(), outputs)]


def _cmd_beta_star(args) -> list[ResultRecord]:
    config = _load_config(args)
    dispersion = _theta_cached(config.model.d)
    beta_star = solve_beta_star(config.model, dispersion)
    outputs = {
        "beta_star": beta_star,
        "theta": dispersion.theta,
        "four_m_upsilon_sq_jhat": 4.0 * config.model.m * config.model.upsilon**2 * config.model.j_hat,
    }
    return [ResultRecord("beta-star", config_digest(config), __version__, None, _now(), outputs)]


def _cmd_classify(args) -> list[ResultRecord]:
    config = _load_config(args)
    classification = classify_phase(config.model, levels=config.levels)
    outputs = {
        "verdict": classification.verdict,
        "beta_star": classification.beta_star,
        "criteria_values": _jsonable(classification.criteria_values),
    }
    return [ResultRecord("classify", config_digest(config), __version__, None, _now(), outputs)]


def _cmd_sample(args) -> list[ResultRecord]:
    config = _load_config(args)
    results = _run_chains(config, args.threads)
    reports = [order_parameter(r, 0) for r in results]
    merged = merge_reports(reports) if len(reports) > 1 else reports[0]
    if args.state_out:
        save_checkpoint(results[-1], args.state_out)
    outputs = {
        "order_parameter_site0": _report_outputs(merged),
        "bounded_test_function": False,  # unbounded identity integrand
        "acceptance_rates": _jsonable(results[0].acceptance_rates),
        "n_chains": len(results),
        "slices": results[0].slices,
    }
    return [
        ResultRecord("sample", config_digest(config), __version__, config.chain.seed, _now(), outputs)
    ]


def _parse_site(text: str):
    parts = text.split(",")
    return int(parts[0]) if len(parts) == 1 else tuple(int(p) for p in parts)


def _cmd_matsubara(args) -> list[ResultRecord]:
    config = _load_config(args)
    sites = [_parse_site(tok) for tok in args.sites]
    times = [float(tok) for tok in args.times]
    if len(sites) != len(times):
        raise ConfigurationError("need exactly one --times entry per --sites entry")
    limit = args.clip if args.clip else _default_clip(config)
    fn = clipped_identity(limit)
    results = _run_chains(config, args.threads)
    reports = [matsubara_estimate(r, [(s, fn) for s in sites], times) for r in results]
    merged = merge_reports(reports) if len(reports) > 1 else reports[0]
    outputs = {
        "Gamma": _report_outputs(merged),
        "sites": _jsonable(sites),
        "times": times,
        "clip_limit": limit,
    }
    return [
        ResultRecord("matsubara", config_digest(config), __version__, config.chain.seed, _now(), outputs)
    ]


def _default_clip(config: RunConfig) -> float:
    upsilon = config.model.upsilon
    return 5.0 * (upsilon**0.5 if upsilon > 0 else (config.model.a / config.model.m) ** -0.25)


def _cmd_order_parameter(args) -> list[ResultRecord]:
    config = _load_config(args)
    site = _parse_site(args.site)
    results = _run_chains(config, args.threads)
    reports = [order_parameter(r, site) for r in results]
    merged = merge_reports(reports) if len(reports) > 1 else reports[0]
    outputs = {
        "M_hat": _report_outputs(merged),
        "site": _jsonable(site),
        "bounded_test_function": False,  # unbounded identity integrand
    }
    return [
        ResultRecord(
            "order-parameter", config_digest(config), __version__, config.chain.seed, _now(), outputs
        )
    ]


def _cmd_gks_audit(args) -> list[ResultRecord]:
    config = _load_config(args)
    if config.boundary.kind != "plus_clamped":
        raise ConfigurationError("gks-audit requires volume.boundary = plus_clamped")
    if args.sites:
        sites = [_parse_site(tok) for tok in args.sites]
    else:
        n_sites = int(np.prod(config.volume)) if config.volume else 1
        sites = [0, n_sites // 2, n_sites - 1]
    times = [float(tok) for tok in args.times] if args.times else None
    limit = args.clip if args.clip else _default_clip(config)
    fn = clipped_identity(limit)
    results = _run_chains(config, args.threads)
    if times is None:
        slices = results[0].slices
        beta = results[0].beta
        times = [0.0, beta * (slices // 3) / slices, beta * (2 * slices // 3) / slices]
    audits = [gks_audit(r, sites, times, [fn, fn, fn]) for r in results]
    plus = merge_reports([a.plus for a in audits]) if len(audits) > 1 else audits[0].plus
    minus = merge_reports([a.minus for a in audits]) if len(audits) > 1 else audits[0].minus
    passed = plus.value >= -2.0 * plus.std_error and minus.value <= 2.0 * minus.std_error
    outputs = {
        "verdict": "pass" if passed else "fail",
        "plus": _report_outputs(plus),
        "minus": _report_outputs(minus),
        "sites": _jsonable(sites),
        "times": times,
        "clip_limit": limit,
    }
    return [
        ResultRecord("gks-audit", config_digest(config), __version__, config.chain.seed, _now(), outputs)
    ]


def _cmd_verify(args) -> list[ResultRecord]:
    from .acceptance import run_all

    results = run_all(only=args.only, stream=sys.stdout)
    failed = [r.name for r in results if r.gated and not r.passed]
    outputs = {
        "criteria": [
            {"name": r.name, "passed": r.passed, "gated": r.gated, "runtime_s": round(r.runtime, 2)}
            for r in results
        ],
        "failed": failed,
    }
    record = ResultRecord("verify", "acceptance-suite", __version__, None, _now(), outputs)
    if failed:
        raise _VerifyFailure(record)
    return [record]


class _VerifyFailure(Exception):
    def __init__(self, record: ResultRecord):
        super().__init__("verification failed")
        self.record = record


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qacrystal",
        description="Quantum anharmonic crystal toolkit: spectra, phase criteria, and loop sampling",
    )
    parser.add_argument("--version", action="version", version=f"qacrystal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True, mc=False):
        if needs_config:
            p.add_argument("--config", required=False, help="path to a run configuration file")
        p.add_argument("--out", default=None, help="write records to this path instead of stdout")
        p.add_argument("--format", choices=("records", "csv"), default="records")
        if mc:
            p.add_argument("--seed", type=int, default=None, help="override chain.seed")
            p.add_argument("--threads", type=int, default=1, help="number of independent chains to merge")

    p = sub.add_parser("spectrum", help="lowest levels, gap, and rigidity of the single site")
    common(p)
    p.add_argument("--levels", type=int, default=None)
    p.set_defaults(fn=_cmd_spectrum)

    p = sub.add_parser("rigidity-scan", help="R_m over a decreasing mass grid with log-log slope")
    common(p)
    p.add_argument("--m-max", type=float, default=1e-2)
    p.add_argument("--m-min", type=float, default=1e-3)
    p.add_argument("--n-masses", type=int, default=8)
    p.set_defaults(fn=_cmd_rigidity_scan)

    p = sub.add_parser("theta", help="dimension constant theta(d)")
    common(p, needs_config=False)
    p.add_argument("--d", type=int, required=True)
    p.set_defaults(fn=_cmd_theta)

    p = sub.add_parser("beta-star", help="critical inverse temperature of the transition criterion")
    common(p)
    p.set_defaults(fn=_cmd_beta_star)

    p = sub.add_parser("classify", help="stabilized / transition / undetermined verdict")
    common(p)
    p.set_defaults(fn=_cmd_classify)

    p = sub.add_parser("sample", help="run the Metropolis chain; report site-0 order parameter")
    common(p, mc=True)
    p.add_argument("--state-out", default=None, help="write a resumable checkpoint here")
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("matsubara", help="n-point imaginary-time correlation estimate")
    common(p, mc=True)
    p.add_argument("--sites", nargs="+", required=True, help="site ids or i,j,k coordinates")
    p.add_argument("--times", nargs="+", required=True, help="imaginary times on the slice grid")
    p.add_argument("--clip", type=float, default=None, help="clip limit of the bounded test functions")
    p.set_defaults(fn=_cmd_matsubara)

    p = sub.add_parser("order-parameter", help="slice-averaged mean displacement at one site")
    common(p, mc=True)
    p.add_argument("--site", default="0")
    p.set_defaults(fn=_cmd_order_parameter)

    p = sub.add_parser("gks-audit", help="three-point sign audit under clamped boundaries")
    common(p, mc=True)
    p.add_argument("--sites", nargs=3, default=None)
    p.add_argument("--times", nargs=3, default=None)
    p.add_argument("--clip", type=float, default=None)
    p.set_defaults(fn=_cmd_gks_audit)

    p = sub.add_parser("verify", help="run the acceptance suite; exit 4 on any failure")
    common(p, needs_config=False)
    p.add_argument("--only", nargs="*", default=None, help="run only the named criteria")
    p.set_defaults(fn=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        records = args.fn(args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except _VerifyFailure as failure:
        _emit([failure.record], args)
        return EXIT_VERIFY
    except QacError as err:
        print(f"numerical error ({type(err).__name__}): {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(records, args)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
