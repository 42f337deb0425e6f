"""Command-line front end.

Exit codes: 0 success, 2 invalid curve, 3 propagation failure, 4 mode
mismatch (class-C mode requested for a table outside class C).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .billiard import NO_INTERSECTION, PhasePoint, gen_S, phi_to_s, step_phi, to_phiP
from .curve import (
    ClassCError,
    CurveInconsistencyError,
    InvalidCurveError,
    SupportCurve,
    _grid_extremum,
    load_curve,
)
from .maxorbit import NOTM, VERDICT_NAMES, classify, window_matrix
from .measure import (
    ScanConfig,
    ScanResult,
    bound_report_thm13,
    bound_report_thm14,
    d2_h_W,
    estimate_delta_measure,
    write_scan_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_PROPAGATION, EXIT_MODE = 0, 2, 3, 4
SPOT_CHECKS = 32


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class RunConfig:
    command: str
    curve: str
    chart: str = "phi"
    genfun: str = "S"
    grid: tuple[int, int] = (64, 64)
    horizon: int = 24
    tol_def: float = 1e-9
    collar: float = 1e-3
    seed: int = 0
    region: str = "full"
    theorem: str = "1.3"
    start: tuple[float, float] | None = None
    steps: int = 10
    out: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.tol_def > 0 and self.collar > 0):
            raise CliError(EXIT_INVALID, "tolerances must be positive")
        if self.horizon < 2:
            raise CliError(EXIT_INVALID, "horizon must be >= 2")
        if min(self.grid) < 8:
            raise CliError(EXIT_INVALID, "grid resolutions must be >= 8")

    def digest(self) -> str:
        """sha256 of the configuration (output paths excluded) and the curve file bytes."""
        cfg = asdict(self)
        cfg.pop("out")
        with open(self.curve, "rb") as fh:
            cfg["curve_sha256"] = hashlib.sha256(fh.read()).hexdigest()
        blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def manifest(self) -> str:
        return f"convex-billiards {__version__} command={self.command} config_sha256={self.digest()}"

    def scan_config(self) -> ScanConfig:
        return ScanConfig(self.grid[0], self.grid[1], self.horizon, self.collar, self.tol_def,
                          self.genfun, None)


# -- helpers ------------------------------------------------------------------------

def _load(cfg: RunConfig):
    try:
        cf = load_curve(cfg.curve)
        curve = cf.build()
    except OSError as exc:
        raise CliError(EXIT_INVALID, f"cannot read curve file: {exc}") from None
    except (InvalidCurveError, CurveInconsistencyError) as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    return cf, curve


def _class_c(cf):
    try:
        return cf.class_c()
    except (InvalidCurveError, CurveInconsistencyError) as exc:
        raise CliError(EXIT_MODE, f"class-C mode needs a class-C table: {exc}") from None


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def spot_check(curve: SupportCurve, scan: ScanResult, k: int, seed: int) -> tuple[int, int]:
    """Re-verify up to ``k`` random NotM witnesses with an eigenvalue computation."""
    idx = np.flatnonzero(scan.verdict == NOTM)
    if idx.size == 0:
        return 0, 0
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(idx, size=min(k, idx.size), replace=False))
    good = 0
    for i in pick:
        n = (int(scan.witness_len[i]) - 1) // 2
        diag, off = window_matrix(curve, scan.phi[i], scan.p[i], scan.genfun, n)
        W = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
        good += bool(np.linalg.eigvalsh(W)[-1] > 0)
    return good, int(pick.size)


# -- commands --------------------------------------------------------------------------

def cmd_curve_check(cfg: RunConfig) -> int:
    try:
        cf = load_curve(cfg.curve)
    except OSError as exc:
        raise CliError(EXIT_INVALID, f"cannot read curve file: {exc}") from None
    except InvalidCurveError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    try:
        curve = cf.build(check=False)
        diag = curve.validate()
    except ClassCError as exc:
        raise CliError(EXIT_INVALID, f"class-C frequency violation: {exc}") from None
    except (InvalidCurveError, CurveInconsistencyError) as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    h_max, h_max_at = _grid_extremum(curve.h, maximize=True)
    try:
        spec = cf.class_c()
        class_c = f"yes (R = {spec.R:.17g})"
    except (InvalidCurveError, CurveInconsistencyError) as exc:
        class_c = f"no ({exc})"
    rows = [
        ("kind", cf.kind),
        ("h_min", diag.h_min), ("h_min_at", diag.h_min_at),
        ("h_max", h_max), ("h_max_at", h_max_at),
        ("rho_min", diag.rho_min), ("rho_min_at", diag.rho_min_at),
        ("rho_max", diag.rho_max), ("rho_max_at", diag.rho_max_at),
        ("beta", curve.min_curvature()),
        ("length", curve.length),
        ("diameter", curve.diameter()),
        ("d2_h_W", d2_h_W(curve)),
        ("class_C", class_c),
    ]
    _emit(cfg, f"# {cfg.manifest()}\n" + "".join(f"{k} = {_fmt(v)}\n" for k, v in rows))
    return EXIT_OK


def cmd_orbit(cfg: RunConfig) -> int:
    _, curve = _load(cfg)
    if cfg.start is None:
        raise CliError(EXIT_INVALID, "--start is required")
    if cfg.chart == "s" and not -1 < cfg.start[1] < 1:
        raise CliError(EXIT_PROPAGATION, "cos(delta) must lie in (-1, 1)")
    z0 = to_phiP(curve, PhasePoint(cfg.chart, *cfg.start))
    phi, p = np.empty(cfg.steps + 1), np.empty(cfg.steps + 1)
    psi, delta = np.empty(cfg.steps), np.empty(cfg.steps)
    phi[0], p[0] = z0.first, z0.second
    for k in range(cfg.steps):
        st = step_phi(curve, phi[k], p[k])
        # near-tangent chords are traced on; the classifier reports them as degenerate
        if st.status == NO_INTERSECTION:
            raise CliError(EXIT_PROPAGATION, f"propagation failure at step {k}: no intersection")
        phi[k + 1], p[k + 1], psi[k], delta[k] = st.phi, st.p, st.psi, st.delta
    # the start of line k is the reflection before it; for k = 0 it is recovered by the chart change
    s, c, status = phi_to_s(curve, phi[:-1], p[:-1])
    if np.any(status == NO_INTERSECTION):
        raise CliError(EXIT_PROPAGATION, "starting line does not meet the table transversally")
    a = curve.point(np.mod(phi[:-1] - np.arccos(c), 2 * np.pi))
    b = curve.point(psi)
    L = np.linalg.norm(b - a, axis=-1)
    S = gen_S(curve, phi[:-1], phi[1:])

    out = [f"# {cfg.manifest()}\n", "step,phi,p,s,cos_delta,psi,delta,L,S\n"]
    for k in range(cfg.steps):
        row = (phi[k], p[k], s[k], c[k], psi[k], delta[k], L[k], S[k])
        out.append(f"{k}," + ",".join(f"{x:.17g}" for x in row) + "\n")
    cl = classify(curve, z0, cfg.genfun, cfg.horizon, cfg.tol_def)
    closes = [k for k in range(1, cfg.steps + 1)
              if abs(p[k] - p[0]) < 1e-9
              and abs((phi[k] - phi[0] + math.pi) % (2 * math.pi) - math.pi) < 1e-9]
    out.append(f"# verdict = {cl.verdict}\n")
    out.append(f"# witness_len = {cl.witness_len if cl.witness_len is not None else ''}\n")
    out.append(f"# margin = {cl.margin:.17g}\n")
    out.append(f"# periodic = {'yes (period %d)' % closes[0] if closes else 'no'}\n")
    _emit(cfg, "".join(out))
    return EXIT_OK


def cmd_scan(cfg: RunConfig) -> int:
    cf, curve = _load(cfg)
    spec = _class_c(cf) if cfg.region == "A" else None
    scan = estimate_delta_measure(curve, cfg.region, cfg.scan_config(), spec)
    good, checked = spot_check(curve, scan, SPOT_CHECKS, cfg.seed)
    manifest = cfg.manifest()
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
            write_scan_csv(fh, scan, manifest)
    summary = [("estimate", scan.estimate), ("band", scan.band),
               ("total_measure", scan.grid.total), ("horizon", cfg.horizon),
               ("grid", f"{cfg.grid[0]}x{cfg.grid[1]}"), ("region", cfg.region),
               ("genfun", cfg.genfun), ("spot_checks", f"{good}/{checked}")]
    summary += [(f"count_{k}", v) for k, v in scan.counts().items()]
    sys.stdout.write(f"# {manifest}\n" + "".join(f"{k} = {_fmt(v)}\n" for k, v in summary))
    return EXIT_OK


def cmd_bounds(cfg: RunConfig) -> int:
    cf, curve = _load(cfg)
    if cfg.theorem == "1.4":
        rep = bound_report_thm14(_class_c(cf), cfg.scan_config())
    else:
        rep = bound_report_thm13(curve, cfg.scan_config())
    _emit(cfg, f"# {cfg.manifest()}\n" + rep.to_text())
    return EXIT_OK


COMMANDS = {"curve-check": cmd_curve_check, "orbit": cmd_orbit, "scan": cmd_scan, "bounds": cmd_bounds}


# -- argument parsing -------------------------------------------------------------------

def _grid(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 64x64") from None


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(",")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError("start must look like X,Y") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="convex-billiards", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--curve", required=True, metavar="PATH")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--seed", type=int, default=0)

    dyn = argparse.ArgumentParser(add_help=False)
    dyn.add_argument("--genfun", choices=("S", "L"), default="S")
    dyn.add_argument("--horizon", type=int, default=24)
    dyn.add_argument("--tol-def", type=float, default=1e-9)

    scan = argparse.ArgumentParser(add_help=False)
    scan.add_argument("--grid", type=_grid, default=(64, 64), metavar="WxH")
    scan.add_argument("--collar", type=float, default=1e-3)

    sub.add_parser("curve-check", parents=[common], help="validate a curve file")
    p = sub.add_parser("orbit", parents=[common, dyn], help="trace and classify one orbit")
    p.add_argument("--chart", choices=("phi", "s"), default="phi")
    p.add_argument("--start", type=_pair, required=True, metavar="X,Y",
                   help="phi,p in the phi chart or s,cos(delta) in the s chart")
    p.add_argument("--steps", type=int, default=10)
    p = sub.add_parser("scan", parents=[common, dyn, scan], help="phase-space classification scan")
    p.add_argument("--region", choices=("full", "A"), default="full")
    p = sub.add_parser("bounds", parents=[common, dyn, scan], help="rigidity bound report")
    p.add_argument("--theorem", choices=("1.3", "1.4"), default="1.3")
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    kw = {k: v for k, v in vars(ns).items() if v is not None}
    kw["curve"] = ns.curve
    if ns.command == "bounds":
        kw["region"] = "A" if ns.theorem == "1.4" else "full"
    kw["tol_def"] = kw.pop("tol_def", 1e-9)
    return RunConfig(**kw)


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        return COMMANDS[cfg.command](cfg)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
