"""Command line front end: ``glsteiner <subcommand> ...``.

Exit codes: 0 ok, 2 input error, 3 numerical failure, 4 internal invariant
violation.  Errors are printed to stderr as one JSON object.  Artifacts are
written only after every computation of a run has succeeded.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .calibration import CalibrationCert, CalibrationError, bundled, check_calibration
from .currents import (CurrentError, MultiplicityCurrent, PsiNorm, polyhedral_approximate, psi_mass,
                       star_network)
from .exact_solver import MAX_N, solve_exact
from .extraction import ExtractionError, compare_networks, export_obj, extract_network
from .geometry import TerminalSet, build_domain
from .gl import EnergyIncreaseError, RecoveryError, build_grid, minimize, random_init, recovery_init
from .gl.io import write_fields
from .gl.kernels import set_threads

log = logging.getLogger("glsteiner")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INTERNAL = 0, 2, 3, 4

DEFAULTS = {
    "alpha": 0.0,
    "delta": 0.05,
    "gamma_ratio": 3.0,
    "eps_schedule": "0.16,0.08,0.04,0.02",
    "grid_h": None,
    "box": None,
    "pad": 0.25,
    "init": "exact",
    "seed": 0,
    "max_iter": 5000,
    "tol": 1e-6,
    "p_max": 16.0,
    "threads": None,
    "output_dir": ".",
}


class InputError(Exception):
    pass


class _Failure(Exception):
    def __init__(self, code, kind, message):
        super().__init__(message)
        self.code, self.kind = code, kind


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _dumps(doc) -> str:
    # repr of a float is its shortest round-trip form, so output is bit-stable
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _write_all(files: dict) -> None:
    """Write text/bytes artifacts via temporary files, then rename them all."""
    tmp = []
    for path, content in files.items():
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        t = path.with_name(path.name + ".tmp")
        if callable(content):
            content(t)
        elif isinstance(content, bytes):
            t.write_bytes(content)
        else:
            t.write_text(content)
        tmp.append((t, path))
    for t, path in tmp:
        os.replace(t, path)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _terminals(path) -> TerminalSet:
    try:
        return TerminalSet.from_json(_load_json(path))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _network(path) -> MultiplicityCurrent:
    try:
        return MultiplicityCurrent.from_json(_load_json(path))
    except (CurrentError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _psi(alpha) -> PsiNorm:
    try:
        return PsiNorm(float(alpha))
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _schedule(text) -> list:
    try:
        eps = [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"bad eps schedule {text!r}") from exc
    if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise InputError("eps schedule must be positive and strictly decreasing")
    return eps


def _settings(args) -> dict:
    """Flags override the optional JSON config file, which overrides the defaults."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        doc = _load_json(args.config)
        if not isinstance(doc, dict):
            raise InputError("config file must hold a JSON object")
        unknown = set(doc) - set(DEFAULTS) - {"input", "output", "report"}
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
        cfg.update(doc)
    for k, v in vars(args).items():
        if v is not None:
            cfg[k] = v
    if cfg.get("threads") is None and os.environ.get("GLS_THREADS"):
        try:
            cfg["threads"] = int(os.environ["GLS_THREADS"])
        except ValueError as exc:
            raise InputError("GLS_THREADS must be an integer") from exc
    return cfg


# --------------------------------------------------------------------------
# GL runs
# --------------------------------------------------------------------------


class GLSetup:
    """Normalised terminals, domain and grid shared by the GL runs of one instance."""

    def __init__(self, ts: TerminalSet, cfg: dict):
        self.original = ts
        if ts.n != 3 and cfg["init"] != "random":
            log.info("phase recovery unavailable for n=%d; literal construction is used", ts.n)
        self.ts, self.center, self.scale = ts.normalized()
        self.eps = _schedule(cfg["eps_schedule"])
        h = cfg["grid_h"]
        self.h = float(h) if h is not None else 0.5 * self.eps[-1]
        if not self.h > 0:
            raise InputError("grid spacing must be positive")
        try:
            ds = build_domain(self.ts, float(cfg["delta"]), float(cfg["gamma_ratio"]), L=1e3)
            reach = max(np.abs(c).max() for c in ds.curves) + ds.delta
            L = cfg["box"] or self.h * math.ceil((reach + float(cfg["pad"])) / self.h - 1e-9)
            self.domain = build_domain(self.ts, float(cfg["delta"]), float(cfg["gamma_ratio"]), L=float(L))
            # validates resolution (delta >= 3h)
            self.grid = build_grid(self.domain, self.h)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        if self.h > 0.5 * self.eps[-1] + 1e-12:
            log.warning("h=%g exceeds eps_min/2=%g: vortex cores are under-resolved", self.h, 0.5 * self.eps[-1])

    def to_original(self, net: MultiplicityCurrent) -> MultiplicityCurrent:
        return net.transformed(scale=1.0 / self.scale, shift=self.center)

    def to_compute(self, net: MultiplicityCurrent) -> MultiplicityCurrent:
        return net.transformed(shift=-self.center).transformed(scale=self.scale)

    def summary(self) -> dict:
        return {"grid": self.grid.summary(), "delta": self.domain.delta, "gamma": self.domain.gamma,
                "normalization": {"center": self.center.tolist(), "scale": self.scale},
                "h_original_units": self.h / self.scale}


def _init_field(setup: GLSetup, kind: str, psi: PsiNorm, seed: int, exact_net=None):
    eps0 = setup.eps[0]
    if kind == "random":
        return random_init(setup.grid, eps0, seed), None
    if kind == "exact":
        net = exact_net if exact_net is not None else solve_exact(setup.ts, psi, seed).network
    elif kind == "star":
        net = star_network(setup.ts)
    else:
        raise InputError(f"unknown init mode {kind!r}")
    net = polyhedral_approximate(net, setup.domain, eta=max(0.2, 4 * setup.domain.delta))
    return recovery_init(setup.domain, setup.grid, net, eps0), net


def run_gl(setup: GLSetup, cfg: dict, psi: PsiNorm, kind: str, exact_net=None):
    t0 = time.perf_counter()
    fs0, init_net = _init_field(setup, kind, psi, int(cfg["seed"]), exact_net)
    t_init = time.perf_counter() - t0
    fs, rep = minimize(fs0, psi, setup.eps, max_iter=int(cfg["max_iter"]), tol=float(cfg["tol"]),
                       p_max=float(cfg["p_max"]))
    # wall-clock times stay out of artifacts so that reruns are byte-identical
    records = [{k: v for k, v in r.items() if k != "seconds"} for r in rep.to_json()]
    doc = {"init": kind, "records": records, "ratio_over_pi": [r / math.pi for r in rep.ratios]}
    rep.timings = {"init": t_init, "eps": [r.seconds for r in rep.records]}
    return fs, rep, doc, init_net


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_solve_exact(cfg) -> tuple[dict, dict]:
    ts = _terminals(cfg["input"])
    psi = _psi(cfg["alpha"])
    if not 2 <= ts.N <= MAX_N:
        raise InputError(f"exact solver supports 2 <= N <= {MAX_N}")
    res = solve_exact(ts, psi, int(cfg["seed"]))
    doc = res.to_json()
    files = {cfg["output"]: _dumps(doc)} if cfg.get("output") else {}
    return files, {"cost": res.cost}


def cmd_solve_gl(cfg) -> tuple[dict, dict]:
    ts = _terminals(cfg["input"])
    psi = _psi(cfg["alpha"])
    if not cfg.get("output"):
        raise InputError("--output is required")
    setup = GLSetup(ts, cfg)
    fs, rep, doc, _ = run_gl(setup, cfg, psi, cfg["init"])
    report = {"setup": setup.summary(), "alpha": psi.alpha, "run": doc}
    files = {cfg["output"]: lambda p: write_fields(p, fs)}
    if cfg.get("report"):
        files[cfg["report"]] = _dumps(report)
    return files, {"energies": [r.energy for r in rep.records], "ratios": rep.ratios,
                   "seconds": rep.timings}


def cmd_check_calibration(cfg) -> tuple[dict, dict]:
    doc = _load_json(cfg["certificate"]) if cfg.get("certificate") else bundled("four_point_certificate.json")
    try:
        cert = CalibrationCert.from_json(doc)
        if cfg.get("candidate"):
            cand = _network(cfg["candidate"])
        elif "candidate" in doc:
            cand = MultiplicityCurrent.from_json(doc["candidate"])
        else:
            raise InputError("no candidate network given")
        report = check_calibration(cert, cand, strict=bool(cfg.get("strict")))
    except CalibrationError:
        raise
    except (ValueError, CurrentError) as exc:
        raise InputError(str(exc)) from exc
    out = report.to_json()
    files = {cfg["output"]: _dumps(out)} if cfg.get("output") else {}
    return files, out


def cmd_compare(cfg) -> tuple[dict, dict]:
    a = _network(cfg["a"])
    b = _network(cfg["b"])
    psi = _psi(cfg["alpha"])
    if a.N != b.N:
        raise InputError("networks have different N")
    step = 0.25 * float(cfg["grid_h"]) if cfg.get("grid_h") else None
    out = compare_networks(a, b, psi, step=step).to_json()
    files = {cfg["output"]: _dumps(out)} if cfg.get("output") else {}
    return files, out


def cmd_pipeline(cfg) -> tuple[dict, dict]:
    ts = _terminals(cfg["input"])
    psi = _psi(cfg["alpha"])
    if not 2 <= ts.N <= MAX_N:
        raise InputError(f"exact solver supports 2 <= N <= {MAX_N}")
    if ts.n != 3:
        raise InputError("the pipeline extracts vortex lines and needs n = 3")
    out_dir = Path(cfg["output_dir"])
    setup = GLSetup(ts, cfg)

    exact = solve_exact(ts, psi, int(cfg["seed"]))
    exact_c = setup.to_compute(exact.network)
    runs, timings, skipped = [], {}, []
    for kind in ("exact", "star"):
        try:
            fs, rep, doc, _ = run_gl(setup, cfg, psi, kind, exact_net=exact_c)
        except (CurrentError, RecoveryError) as exc:
            if kind == "exact":
                raise
            # the star is only a second opinion; it cannot always be pushed off the tube axes
            log.warning("%s initialisation skipped: %s", kind, exc)
            skipped.append({"init": kind, "skipped": f"{type(exc).__name__}: {exc}"})
            continue
        runs.append((rep.records[-1].energy, kind, fs, doc))
        timings[kind] = rep.timings
    runs.sort(key=lambda r: (r[0], r[1]))
    _, best_kind, fs, _ = runs[0]
    ex = extract_network(fs)
    net_gl = setup.to_original(ex.network)
    h_orig = setup.h / setup.scale
    cmp = compare_networks(net_gl, exact.network, psi, step=0.25 * h_orig)
    compare = cmp.to_json()
    compare.update({"h": h_orig, "hausdorff_over_h": cmp.hausdorff / h_orig,
                    "mass_gl": psi_mass(net_gl, psi), "mass_exact": exact.cost,
                    "extraction_errors": ex.errors})
    gl_doc = net_gl.to_json()
    gl_doc["diagnostics"] = ex.to_json()["diagnostics"]
    gl_doc["diagnostics"]["coordinates"] = "original"
    report = {"setup": setup.summary(), "alpha": psi.alpha, "selected": best_kind,
              "runs": [r[3] for r in sorted(runs, key=lambda r: r[1])] + skipped}
    files = {
        out_dir / "net_exact.json": _dumps(exact.to_json()),
        out_dir / "fields.bin": lambda p: write_fields(p, fs),
        out_dir / "report.json": _dumps(report),
        out_dir / "net_gl.json": _dumps(gl_doc),
        out_dir / "compare.json": _dumps(compare),
    }
    if cfg.get("obj"):
        files[out_dir / "net_gl.obj"] = lambda p: export_obj(net_gl, p)
    return files, dict(compare, seconds=timings)


COMMANDS = {
    "solve-exact": cmd_solve_exact,
    "solve-gl": cmd_solve_gl,
    "check-calibration": cmd_check_calibration,
    "compare": cmd_compare,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glsteiner", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, gl=False):
        p.add_argument("--config", help="JSON file with default settings (flags win)")
        p.add_argument("--threads", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--alpha", type=float)
        if gl:
            p.add_argument("--input", required=True)
            p.add_argument("--delta", type=float)
            p.add_argument("--gamma-ratio", type=float)
            p.add_argument("--eps-schedule")
            p.add_argument("--grid-h", type=float)
            p.add_argument("--box", type=float, help="half-width L of the box (normalised units)")
            p.add_argument("--pad", type=float)
            p.add_argument("--max-iter", type=int)
            p.add_argument("--tol", type=float)
            p.add_argument("--p-max", type=float)

    p = sub.add_parser("solve-exact", help="exact Gilbert-Steiner network by topology enumeration")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--output")

    p = sub.add_parser("solve-gl", help="minimise the vector Ginzburg-Landau energy")
    common(p, gl=True)
    p.add_argument("--init", choices=["exact", "star", "random"])
    p.add_argument("--output")
    p.add_argument("--report")

    p = sub.add_parser("check-calibration", help="verify a calibration certificate")
    common(p)
    p.add_argument("--certificate", help="certificate JSON (default: bundled four-point example)")
    p.add_argument("--candidate", help="candidate network JSON (default: the certificate's own)")
    p.add_argument("--strict", action="store_true", help="exit 3 when a condition fails")
    p.add_argument("--output")

    p = sub.add_parser("compare", help="mass gap, Hausdorff distance and boundary match of two networks")
    common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--grid-h", type=float)
    p.add_argument("--output")

    p = sub.add_parser("pipeline", help="exact solve, GL runs, extraction and comparison")
    common(p, gl=True)
    p.add_argument("--output-dir")
    p.add_argument("--obj", action="store_true", default=None, help="also write net_gl.obj")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    cmd = args.command
    ns = {k: v for k, v in vars(args).items() if k not in ("command", "log_level")}
    try:
        cfg = _settings(argparse.Namespace(**ns))
        set_threads(cfg.get("threads"))
        try:
            files, summary = COMMANDS[cmd](cfg)
        except (InputError, _Failure):
            raise
        except (EnergyIncreaseError, ExtractionError, RecoveryError, CalibrationError, CurrentError,
                FloatingPointError, np.linalg.LinAlgError) as exc:
            raise _Failure(EXIT_NUMERIC, "numerical failure", f"{type(exc).__name__}: {exc}") from exc
        except AssertionError as exc:
            raise _Failure(EXIT_INTERNAL, "internal invariant violation", str(exc) or "assertion failed") from exc
        _write_all(files)
    except InputError as exc:
        _error(EXIT_INPUT, "input error", str(exc), cmd)
        return EXIT_INPUT
    except _Failure as exc:
        _error(exc.code, exc.kind, str(exc), cmd)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - anything else is a bug
        _error(EXIT_INTERNAL, "internal invariant violation", f"{type(exc).__name__}: {exc}", cmd)
        return EXIT_INTERNAL
    sys.stdout.write(_dumps({"status": "ok", "command": cmd, "result": summary}))
    return EXIT_OK


def _error(code, kind, message, cmd):
    sys.stderr.write(json.dumps({"status": kind, "code": code, "command": cmd, "message": message}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
