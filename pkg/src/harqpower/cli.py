"""Command-line front end: outage tables, allocations, validation, sweeps.

Machine-readable output only on stdout or in files (CSV with '.' decimals and
a fixed column order, or JSON mirroring the CSV rows); diagnostics go to
stderr.  Identical configuration and seed produce byte-identical output.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .allocation import (
    AllocationError,
    AllocationProblem,
    allocate_closed_form,
    allocate_fixed,
    allocate_numerical_exact,
    exact_outage_sequence,
)
from .channel import ChannelParams
from .outage import (
    HarqConfig,
    Scheme,
    TruncationError,
    mgf_poles,
    outage_asymptotic,
    outage_cc,
    outage_ir_lower,
    outage_type1,
)
from .simulation import estimate_all_schemes

__all__ = ["main"]

OUTDIR_ENV = "HARQPOWER_OUTDIR"

_SCHEMES = {"type1": Scheme.TYPE1, "cc": Scheme.CC, "ir": Scheme.IR}
_METHODS = ("ppa-asymptotic", "ppa-exact", "fpa", "fpa-exact")

_CONFIG_KEYS = {
    "channel": {"m", "omega", "rho", "delta"},
    "harq": {"scheme", "rounds", "rate"},
    "solver": {"epsilon", "method", "truncation_tol", "trials", "seed"},
    "output": {"path", "format"},
}

# flat defaults; the channel and rate values mirror the usual reference setup
_DEFAULTS = {
    "m": 2,
    "omega": "1.0",
    "rho": 0.5,
    "delta": 1.0,
    "scheme": "all",
    "rounds": 2,
    "rate": 2.0,
    "epsilon": 1e-3,
    "method": "ppa-asymptotic",
    "truncation_tol": 1e-10,
    "trials": 100_000,
    "seed": 12345,
    "path": None,
    "format": "csv",
    "powers": "10.0",
    "power_grid": "0:30:7",
    "over": "epsilon",
    "values": "1e-2,1e-3,1e-4,1e-5,1e-6",
}


class CliError(Exception):
    """Configuration or input error; maps to exit status 2."""


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v != ""]
    except ValueError as exc:
        raise CliError(f"cannot parse float list {text!r}") from exc


def _parse_grid(text: str) -> list[float]:
    """START:STOP:COUNT inclusive grid, or a comma-separated list."""
    if ":" in str(text):
        parts = str(text).split(":")
        if len(parts) != 3:
            raise CliError(f"grid must be START:STOP:COUNT, got {text!r}")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise CliError(f"cannot parse grid {text!r}") from exc
        if count < 1:
            raise CliError(f"grid needs at least one point, got {count}")
        return [float(v) for v in np.linspace(start, stop, count)]
    return _parse_floats(text)


def _load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise CliError(f"cannot read config file {path!r}")
    settings: dict = {}
    for section in parser.sections():
        if section not in _CONFIG_KEYS:
            raise CliError(f"unknown config section [{section}]")
        for key, value in parser.items(section):
            if key not in _CONFIG_KEYS[section]:
                raise CliError(f"unknown key {key!r} in section [{section}]")
            settings[key] = value
    return settings


def _merge_settings(args: argparse.Namespace) -> dict:
    settings = dict(_DEFAULTS)
    if args.config:
        settings.update(_load_config_file(args.config))
    for key in settings:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    # normalize types after file/flag overrides (file values arrive as str)
    out = dict(settings)
    out["m"] = int(settings["m"])
    out["rho"] = float(settings["rho"])
    out["delta"] = float(settings["delta"])
    out["rounds"] = int(settings["rounds"])
    out["rate"] = float(settings["rate"])
    out["epsilon"] = float(settings["epsilon"])
    out["truncation_tol"] = float(settings["truncation_tol"])
    out["trials"] = int(settings["trials"])
    out["seed"] = int(settings["seed"])
    scheme = str(settings["scheme"]).lower()
    if scheme not in _SCHEMES and scheme != "all":
        raise CliError(f"scheme must be one of {sorted(_SCHEMES)} or 'all', got {scheme!r}")
    out["scheme"] = scheme
    method = str(settings["method"]).lower()
    if method not in _METHODS and method != "all":
        raise CliError(f"method must be one of {_METHODS} or 'all', got {method!r}")
    out["method"] = method
    fmt = str(settings["format"]).lower()
    if fmt not in ("csv", "json"):
        raise CliError(f"format must be csv or json, got {fmt!r}")
    out["format"] = fmt
    return out


def _channel(settings: dict, rounds: int | None = None) -> ChannelParams:
    rounds = settings["rounds"] if rounds is None else rounds
    omegas = _parse_floats(settings["omega"])
    if len(omegas) == 1:
        omegas = omegas * rounds
    if len(omegas) < rounds:
        raise CliError(f"need {rounds} mean powers, got {len(omegas)}")
    try:
        return ChannelParams(
            m=settings["m"], omegas=tuple(omegas[:rounds]),
            rho=settings["rho"], delta=settings["delta"],
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _selected_schemes(settings: dict) -> list[Scheme]:
    if settings["scheme"] == "all":
        return [Scheme.TYPE1, Scheme.CC, Scheme.IR]
    return [_SCHEMES[settings["scheme"]]]


def _powers(settings: dict, rounds: int) -> tuple[float, ...]:
    powers = _parse_floats(settings["powers"])
    if len(powers) == 1:
        powers = powers * rounds
    if len(powers) != rounds:
        raise CliError(f"need {rounds} powers, got {len(powers)}")
    return tuple(powers)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _check_finite(header: list[str], rows: list[list]) -> None:
    for row in rows:
        for name, value in zip(header, row):
            if isinstance(value, (int, float, np.floating)) and not math.isfinite(value):
                raise CliError(f"non-finite value in column {name!r}")


def _emit(header: list[str], rows: list[list], settings: dict) -> None:
    _check_finite(header, rows)
    if settings["format"] == "csv":
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    else:
        records = [
            {k: (v.value if isinstance(v, Scheme) else v) for k, v in zip(header, row)}
            for row in rows
        ]
        text = json.dumps(records, indent=2) + "\n"
    path = settings["path"]
    if path is None:
        sys.stdout.write(text)
        return
    outdir = os.environ.get(OUTDIR_ENV)
    if outdir and not os.path.isabs(path):
        path = os.path.join(outdir, path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_outage(settings: dict) -> int:
    rounds = settings["rounds"]
    params = _channel(settings)
    grid_db = _parse_grid(settings["power_grid"])
    header = ["scheme", "l", "power_db", "power", "exact", "asymptotic", "truncation_or_poles"]
    rows: list[list] = []
    for scheme in _selected_schemes(settings):
        for p_db in grid_db:
            power = 10.0 ** (p_db / 10.0)
            config = HarqConfig(scheme, rounds, settings["rate"], (power,) * rounds)
            for l in range(1, rounds + 1):
                if scheme is Scheme.TYPE1:
                    res = outage_type1(config, params, l, tol=settings["truncation_tol"])
                    exact, detail = res.value, res.truncation_order
                else:
                    dec = mgf_poles(l, config, params)
                    fn = outage_cc if scheme is Scheme.CC else outage_ir_lower
                    exact, detail = fn(config, params, l), len(dec.poles)
                asym = outage_asymptotic(scheme, l, config, params)
                rows.append([scheme.value, l, p_db, power, exact, asym, detail])
    _emit(header, rows, settings)
    return 0


def _allocate_rows(settings: dict, scheme: Scheme, epsilon: float,
                   methods: list[str]) -> list[list]:
    params = _channel(settings)
    problem = AllocationProblem(
        scheme=scheme, max_rounds=settings["rounds"], rate=settings["rate"],
        epsilon=epsilon, params=params,
    )
    rows = []
    for method in methods:
        if method == "ppa-asymptotic":
            result = allocate_closed_form(problem)
        elif method == "ppa-exact":
            result = allocate_numerical_exact(problem)
        elif method == "fpa":
            result = allocate_fixed(problem, use_exact=False)
        else:
            result = allocate_fixed(problem, use_exact=True)
        rows.append(
            [method, scheme.value, problem.max_rounds, params.m, params.rho, epsilon]
            + [float(p) for p in result.powers]
            + [result.average_power, result.achieved_outage]
        )
    return rows


def _cmd_allocate(settings: dict) -> int:
    methods = list(_METHODS) if settings["method"] == "all" else [settings["method"]]
    header = (
        ["method", "scheme", "L", "m", "rho", "epsilon"]
        + [f"P{i}" for i in range(1, settings["rounds"] + 1)]
        + ["avg_power", "achieved_outage"]
    )
    rows: list[list] = []
    for scheme in _selected_schemes(settings):
        rows.extend(_allocate_rows(settings, scheme, settings["epsilon"], methods))
    _emit(header, rows, settings)
    return 0


def _cmd_validate(settings: dict) -> int:
    rounds = settings["rounds"]
    params = _channel(settings)
    powers = _powers(settings, rounds)
    estimates = estimate_all_schemes(
        rounds, powers, settings["rate"], params, settings["trials"], settings["seed"]
    )
    header = ["scheme", "l", "analytic", "p_hat", "half_width", "z", "check", "passed"]
    rows: list[list] = []
    all_pass = True
    for scheme in _selected_schemes(settings):
        config = HarqConfig(scheme, rounds, settings["rate"], powers)
        for l in range(1, rounds + 1):
            if scheme is Scheme.TYPE1:
                analytic = outage_type1(config, params, l, tol=settings["truncation_tol"]).value
            elif scheme is Scheme.CC:
                analytic = outage_cc(config, params, l)
            else:
                analytic = outage_ir_lower(config, params, l)
            est = estimates[scheme][l - 1]
            # floor the scale at one event so the score stays finite at p_hat = 0
            sigma = max(est.half_width / 1.96, 1.0 / est.trials)
            z = (analytic - est.p_hat) / sigma
            if scheme is Scheme.IR:
                check = "lower_bound"
                passed = z <= 3.0  # bound must not exceed the estimate noticeably
            else:
                check = "two_sided"
                passed = abs(z) <= 3.0
            all_pass &= bool(passed)
            rows.append(
                [scheme.value, l, analytic, est.p_hat, est.half_width, z, check, passed]
            )
    _emit(header, rows, settings)
    if not all_pass:
        print("validation failed: analytic and Monte Carlo estimates disagree", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(settings: dict) -> int:
    over = str(settings["over"]).lower()
    if over not in ("epsilon", "rho", "m"):
        raise CliError(f"sweep must be over epsilon, rho or m, got {over!r}")
    values = _parse_grid(settings["values"])
    if over == "m":
        values = [int(v) for v in values]
    methods = list(_METHODS) if settings["method"] == "all" else [settings["method"]]
    schemes = _selected_schemes(settings)

    def run_point(value) -> list[list]:
        local = dict(settings)
        local[over] = value
        epsilon = local["epsilon"]
        rows = []
        for scheme in schemes:
            for row in _allocate_rows(local, scheme, epsilon, methods):
                rows.append([over, value] + row[:2] + row[6:])
        return rows

    with ThreadPoolExecutor(max_workers=min(8, len(values))) as pool:
        per_point = list(pool.map(run_point, values))
    header = (
        ["over", "value", "method", "scheme"]
        + [f"P{i}" for i in range(1, settings["rounds"] + 1)]
        + ["avg_power", "achieved_outage"]
    )
    rows = [row for rows_ in per_point for row in rows_]
    _emit(header, rows, settings)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file; flags override file values")
    parser.add_argument("--scheme", choices=sorted(_SCHEMES) + ["all"], default=None)
    parser.add_argument("--rounds", type=int, default=None, help="max HARQ rounds L")
    parser.add_argument("--rate", type=float, default=None, help="target rate, bits/s/Hz")
    parser.add_argument("--rho", type=float, default=None, help="time correlation in [0,1)")
    parser.add_argument("--m", type=int, default=None, help="integer fading order")
    parser.add_argument("--delta", type=float, default=None, help="feedback delay")
    parser.add_argument("--omega", default=None,
                        help="mean channel power, scalar or comma list")
    parser.add_argument("--epsilon", type=float, default=None, help="outage tolerance")
    parser.add_argument("--method", default=None,
                        help="allocation method: %s or 'all'" % ", ".join(_METHODS))
    parser.add_argument("--truncation-tol", dest="truncation_tol", type=float, default=None)
    parser.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
    parser.add_argument("--seed", type=int, default=None, help="Monte Carlo seed")
    parser.add_argument("--out", dest="path", default=None,
                        help=f"output file; relative paths join ${OUTDIR_ENV} when set")
    parser.add_argument("--format", choices=["csv", "json"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harqpower",
        description="Outage analysis and outage-constrained power allocation "
                    "for HARQ over correlated Nakagami-m fading.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("outage", help="exact and asymptotic outage over a power grid")
    _add_common(p)
    p.add_argument("--power-grid", dest="power_grid", default=None,
                   help="per-round power grid in dB, START:STOP:COUNT or comma list")

    p = sub.add_parser("allocate", help="solve the minimum-average-power problem")
    _add_common(p)

    p = sub.add_parser("validate", help="analytic outage against Monte Carlo")
    _add_common(p)
    p.add_argument("--powers", default=None,
                   help="per-round transmit powers, scalar or comma list")

    p = sub.add_parser("sweep", help="allocation sweep over epsilon, rho or m")
    _add_common(p)
    p.add_argument("--over", choices=["epsilon", "rho", "m"], default=None)
    p.add_argument("--values", default=None,
                   help="sweep values, comma list or START:STOP:COUNT")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = _merge_settings(args)
        if args.command == "outage":
            return _cmd_outage(settings)
        if args.command == "allocate":
            return _cmd_allocate(settings)
        if args.command == "validate":
            return _cmd_validate(settings)
        return _cmd_sweep(settings)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TruncationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AllocationError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
