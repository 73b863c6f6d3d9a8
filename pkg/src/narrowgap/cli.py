"""Command-line front end.

Every run reads one JSON experiment config; flags only choose paths,
verbosity, thread count and output format.  Exit codes: 0 success,
1 usage or I/O problem, 2 verification or invariant failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__, acceptance, capacity
from .analysis import (AnalysisError, HRule, Model, find_boundary_data, fit_exponent,
                       structural_checks, sweep, verify_theorems, _h_for)
from .geometry import GeometryError, PRESETS, config_gamma, preset
from .grid import GridError, SolverError, build_grid, write_lattice
from .pde import DegenerateError, functionals, write_svg
from .quadrature import QuadratureError
from .traces import KINDS, trace_id

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2

log = logging.getLogger("narrowgap")


class ConfigError(ValueError):
    pass


def _strict(data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = set(data) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")


H_RULE_KEYS = {"factor", "h_max"}
TOL_KEYS = {"solver", "quadrature", "fit", "window"}
DUMP_KEYS = {"lattice", "svg"}
INTEGRAL_KEYS = {"orders", "n", "r", "eps_list", "factor"}
BUILTIN_PHI = ("zero", "one", "dipole")


@dataclass
class ExperimentConfig:
    """One experiment: geometry, epsilons, mesh rule, boundary data, outputs."""

    preset: str | None = None
    params: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    epsilon: float | None = None
    eps_list: list = field(default_factory=list)
    h_rule: dict = field(default_factory=lambda: {"factor": 0.125, "h_max": None})
    phi: object = "search"
    output_dir: str = "out"
    tolerances: dict = field(default_factory=lambda: {
        "solver": 1e-10, "quadrature": 1e-8, "fit": 0.1, "window": 10.0})
    seed: int = 0
    method: str = "amg"
    dumps: dict = field(default_factory=lambda: {"lattice": None, "svg": False})
    integrals: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, data):
        _strict(data, {f.name for f in fields(cls)}, "config")
        defaults = cls()
        merged = {}
        for f in fields(cls):
            merged[f.name] = copy.deepcopy(data.get(f.name, getattr(defaults, f.name)))
        for key, allowed in (("h_rule", H_RULE_KEYS), ("tolerances", TOL_KEYS),
                             ("dumps", DUMP_KEYS)):
            if key in data:
                _strict(data[key], allowed, key)
                merged[key] = {**getattr(defaults, key), **data[key]}
        for k, entry in enumerate(merged["integrals"]):
            _strict(entry, INTEGRAL_KEYS, f"integrals[{k}]")
            if "orders" not in entry or "eps_list" not in entry:
                raise ConfigError(f"integrals[{k}] needs 'orders' and 'eps_list'")
        if merged["preset"] is not None and merged["preset"] not in PRESETS:
            raise ConfigError(f"unknown preset {merged['preset']!r}; "
                              f"choose from {sorted(PRESETS)}")
        if merged["method"] not in ("amg", "jacobi"):
            raise ConfigError("method must be 'amg' or 'jacobi'")
        if merged["dumps"]["lattice"] not in (None, "binary", "csv"):
            raise ConfigError("dumps.lattice must be null, 'binary' or 'csv'")
        cfg = cls(**merged)
        cfg.phi_kind()  # validates the phi spec
        return cfg

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def phi_kind(self):
        """'search', 'builtin' or 'trace' according to the phi spec."""
        phi = self.phi
        if phi == "search" or (isinstance(phi, dict) and phi.get("kind") == "search"):
            if isinstance(phi, dict):
                _strict(phi, {"kind", "m"}, "phi")
            return "search"
        if isinstance(phi, str):
            if phi not in BUILTIN_PHI:
                raise ConfigError(f"unknown builtin phi {phi!r}; choose from "
                                  f"{BUILTIN_PHI} or 'search'")
            return "builtin"
        if isinstance(phi, dict):
            try:
                trace_id(phi)
            except ValueError as exc:
                raise ConfigError(f"phi: {exc}") from None
            return "trace"
        raise ConfigError(f"phi must be a string or object, got {type(phi).__name__}; "
                          f"trace kinds are {KINDS}")

    @property
    def hrule(self):
        return HRule(float(self.h_rule.get("factor", 0.125)), self.h_rule.get("h_max"))

    def tol(self, key):
        return float(self.tolerances[key])


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column "
                          f"{exc.colno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(data)


def _outdir(cfg, override):
    out = Path(override or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_phi(cfg, epsilon):
    kind = cfg.phi_kind()
    if kind != "search":
        return cfg.phi, None
    m = cfg.phi.get("m", 8) if isinstance(cfg.phi, dict) else 8
    bd = find_boundary_data(cfg.preset, epsilon, m=m, h_rule=cfg.hrule,
                            params=cfg.params, overrides=cfg.overrides, seed=cfg.seed,
                            tol=cfg.tol("solver"), method=cfg.method)
    log.info("searched boundary data %s, |Q| = %.6g (%s)", bd.phi_id, abs(bd.Q), bd.case)
    return bd.spec, bd


def _need_preset(cfg):
    if cfg.preset is None:
        raise ConfigError("config needs a 'preset'")


# --------------------------------------------------------------------------
# commands


def cmd_solve(path, out=None, fmt="json") -> int:
    cfg = load_config(path)
    _need_preset(cfg)
    if cfg.epsilon is None:
        raise ConfigError("solve needs a single 'epsilon'")
    config = preset(cfg.preset, cfg.epsilon, cfg.params, cfg.overrides)
    grid = build_grid(config, _h_for(cfg.hrule, config))
    log.info("grid h=%.4g with %d active nodes", grid.h, grid.n_active)
    phi, _ = _resolve_phi(cfg, cfg.epsilon)
    report, flds = functionals(config, grid, phi, cfg.tol("solver"), cfg.method,
                               return_fields=True)
    outdir = _outdir(cfg, out)
    (outdir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    if cfg.dumps.get("lattice"):
        fmt_l = cfg.dumps["lattice"]
        for name, f in flds.items():
            write_lattice(f, outdir / f"{name}.{'lat' if fmt_l == 'binary' else 'csv'}",
                          fmt_l)
    if cfg.dumps.get("svg"):
        write_svg(flds["u"], outdir / "grad_u.svg")
    _emit(fmt, json.loads(report.to_json()),
          f"sup|grad u| = {report.sup_grad_u:.8g}, energy(v1) = {report.energy_v1:.8g}, "
          f"C1 = {report.C1:.8g}, C2 = {report.C2:.8g}, Q = {report.Q_eps:.8g}")
    if report.flags:
        log.error("invariant violation: %s", ", ".join(report.flags))
        return EXIT_FAIL
    return EXIT_OK


def cmd_sweep(path, out=None, threads=None, fmt="json") -> int:
    cfg = load_config(path)
    _need_preset(cfg)
    eps = sorted({float(e) for e in cfg.eps_list}, reverse=True)
    if len(eps) < 4:
        raise AnalysisError(f"need >= 4 epsilons, got {len(eps)}")
    phi, bd = _resolve_phi(cfg, eps[0])
    table = sweep(cfg.preset, eps, phi, cfg.hrule, cfg.params, cfg.overrides,
                  cfg.tol("solver"), cfg.method, workers=threads or 1)
    gamma = config_gamma(preset(cfg.preset, eps[0], cfg.params, cfg.overrides))
    outdir = _outdir(cfg, out)
    table.write_csv(outdir / "sweep.csv")
    theorems = verify_theorems(table, gamma, cfg.tol("fit"), cfg.tol("window"))
    summary = {"preset": cfg.preset, "gamma": gamma, "phi": table.phi,
               "passed": theorems.passed, "theorems": json.loads(theorems.to_json()),
               "structural": [asdict(c) for c in structural_checks(table)]}
    ok_rows = [r for r in table.rows if r.ok]
    if len(ok_rows) >= 4:
        for q in ("sup_grad_u", "energy_v1"):
            summary[f"fit_{q}"] = json.loads(fit_exponent(table, q, Model.POWER).to_json())
    if bd is not None:
        summary["search"] = {"Q": bd.Q, "pool_best": bd.pool_best, "case": bd.case}
    (outdir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True, indent=1, default=float) + "\n",
        encoding="utf-8")
    lines = [f"{c.name}: {'pass' if c.passed else 'FAIL'} ({c.detail})"
             for c in theorems.checks]
    _emit(fmt, summary, "\n".join(lines))
    return EXIT_OK if theorems.passed else EXIT_FAIL


INTEGRAL_COLUMNS = ["orders", "n", "r", "epsilon", "gamma", "regime", "I",
                    "predicted", "ratio", "sandwich_lower", "sandwich_upper",
                    "sandwich_holds"]


def cmd_integrals(path, out=None, fmt="json") -> int:
    cfg = load_config(path)
    if not cfg.integrals:
        raise ConfigError("config needs a non-empty 'integrals' list")
    tol = cfg.tol("quadrature")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(INTEGRAL_COLUMNS)
    results, all_ok = [], True
    for entry in cfg.integrals:
        orders = capacity.VanishingOrders(entry["orders"])
        n = int(entry.get("n", len(orders) + 1))
        r = float(entry.get("r", 1.0))
        eps = sorted(float(e) for e in entry["eps_list"])
        gamma = orders.gamma
        label = " ".join(str(a) for a in orders.to_json())
        ok = True
        if not orders.finite:
            # infinite orders only: I(eps) * eps is exactly 2^(n-1) r^(n-1)
            exact = 2.0 ** (n - 1) * r ** (n - 1)
            for e in eps:
                val = capacity.gap_integral(capacity.GapIntegralSpec(orders, r, n, e), tol)
                good = abs(val * e / exact - 1) <= 1e-10
                ok &= good
                writer.writerow([label, n, repr(r), repr(e),
                                 repr(gamma), "exact", repr(val), repr(exact / e),
                                 repr(val * e / exact), "", "", good])
        else:
            bound = capacity.verify_claim(orders, r, n, eps,
                                          float(entry.get("factor", 20.0)), tol)
            ok &= bound.success
            for e, val, ratio in zip(bound.eps, bound.values, bound.ratios):
                sw = capacity.reduction_sandwich(orders, r, n, e, tol)
                ok &= sw.holds
                writer.writerow([label, n, repr(r), repr(e),
                                 repr(gamma), bound.regime.value, repr(val),
                                 repr(float(bound.predicted(e))), repr(ratio),
                                 repr(sw.lower), repr(sw.upper), sw.holds])
        results.append({"orders": orders.to_json(), "n": n, "gamma": gamma, "passed": ok})
        all_ok &= ok
    outdir = _outdir(cfg, out)
    (outdir / "integrals.csv").write_text(buf.getvalue(), encoding="utf-8")
    _emit(fmt, {"passed": all_ok, "entries": results},
          "\n".join(f"orders {e['orders']} n={e['n']}: {'pass' if e['passed'] else 'FAIL'}"
                    for e in results))
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_verify(suite_config=None, only=None, threads=None, json_path=None) -> int:
    if suite_config:
        try:
            data = json.loads(Path(suite_config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read {suite_config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{suite_config}: invalid JSON at line {exc.lineno} "
                              f"column {exc.colno}: {exc.msg}") from None
        config = acceptance.SuiteConfig.from_dict(data)
    else:
        config = acceptance.SuiteConfig()
    suite = acceptance.Suite(config, workers=threads or 1, log=log.info)
    results = suite.run(only, report=lambda r: log.info(r.line()))
    print(acceptance.matrix(results))
    for r in results:
        if r.diagnostics:
            print(f"  criterion {r.number:2d} diagnostics: {r.diagnostics}")
    if json_path:
        Path(json_path).write_text(acceptance.results_json(results) + "\n",
                                   encoding="utf-8")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _emit(fmt, data, text):
    if fmt == "json":
        print(json.dumps(data, sort_keys=True, indent=1, default=float))
    else:
        print(text)


# --------------------------------------------------------------------------
# argument parsing


def _only(text):
    try:
        nums = {int(t) for t in text.split(",") if t.strip()}
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated criterion numbers")
    bad = nums - set(acceptance.CRITERIA)
    if bad:
        raise argparse.ArgumentTypeError(f"no such criteria: {sorted(bad)}")
    return nums


def _cores():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def build_parser():
    p = argparse.ArgumentParser(prog="narrowgap",
                                description="Narrow-gap gradient blow-up experiments.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0,
                   help="more logging on stderr (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", help="only errors on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, threads=False):
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("-o", "--out", help="output directory (overrides output_dir)")
        sp.add_argument("--format", choices=("json", "text"), default="json",
                        help="format of the result printed to stdout")
        if threads:
            sp.add_argument("-j", "--threads", type=int, default=_cores(),
                            help="parallel sweep rows (default: available cores)")

    common(sub.add_parser("solve", help="solve one configuration"))
    common(sub.add_parser("sweep", help="epsilon sweep with rate checks"), threads=True)
    common(sub.add_parser("integrals", help="gap-integral regime checks"))
    v = sub.add_parser("verify", help="run the built-in acceptance suite")
    v.add_argument("--config", help="JSON suite overrides (see SuiteConfig)")
    v.add_argument("--only", type=_only, help="comma-separated criterion numbers")
    v.add_argument("-j", "--threads", type=int, default=_cores(),
                   help="parallel sweep rows (default: available cores)")
    v.add_argument("--json", dest="json_path", help="also write results as JSON")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    level = logging.ERROR if args.quiet else (
        logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        if args.command == "solve":
            return cmd_solve(args.config, args.out, args.format)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.out, args.threads, args.format)
        if args.command == "integrals":
            return cmd_integrals(args.config, args.out, args.format)
        return cmd_verify(args.config, args.only, args.threads, args.json_path)
    except GridError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL if exc.code == "RESOLUTION" else EXIT_USAGE
    except (DegenerateError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, AnalysisError, GeometryError, SolverError, OSError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
