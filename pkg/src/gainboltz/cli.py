"""Command-line driver: ``gainboltz --command {geometry,delta,homogeneous,inhomogeneous,oracle-check}``.

Options come from flags and optionally from a ``key=value`` file given with
``--config`` (flags win).  Every run writes its result files plus a
``manifest.json`` into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 acceptance failure,
4 inconclusive run, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .classical import collision_sphere_points
from .core_model import (
    ClassicalHardSphere,
    ConfigurationError,
    DistributionField,
    RelativisticConstantSigma,
    make_sphere_quadrature,
    make_velocity_grid,
)
from .dynamics import Controls, InconclusiveRunError, evolve_truncated
from .gain import EstimationError, delta_on_grid, estimate_delta, gain_at, set_threads
from .mild import (
    InhomogeneousConfig,
    PicardEvaluator,
    check_shrinking_ball,
    negative_control,
    reduced_homogeneous_blowup,
)
from .oracle import mc_delta, mc_form_equivalence, mc_gain
from .relativistic import ellipsoid_points, fit_quadric

log = logging.getLogger("gainboltz")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3
EXIT_INCONCLUSIVE = 4
EXIT_IO = 5

COMMANDS = ("geometry", "delta", "homogeneous", "inhomogeneous", "oracle-check")
DEFAULT_SAMPLES = {"delta": 200_000, "oracle-check": 400_000, "inhomogeneous": 100}
MARGIN = 0.10


class AcceptanceFailure(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    regime: str = "classical"
    sigma0: float = 1.0
    R: float = 1.0
    lam: float = 1.0
    rho0: float = 1.0
    c0: float = 2.0
    c1: float = 1.5
    c2: float = 1.0
    T: float = 1.0
    grid_n: int = 16
    sphere_m: int = 8
    k_max: int = 3
    n_t: int = 2
    picard_grid_n: int = 4
    picard_sphere_m: int = 4
    samples: int | None = None
    probes: int = 32
    seed: int = 20240601
    threads: int = 1
    out: str = "out"
    p: tuple | None = None
    q: tuple | None = None
    t_end: float | None = None
    threshold_factor: float = 1e6
    max_rel_increment: float = 1e-3
    fault_scale: float = 1.0

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if self.regime not in ("classical", "relativistic"):
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        for name in ("sigma0", "R", "c0", "c1", "c2", "T", "threshold_factor", "max_rel_increment", "fault_scale"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ConfigurationError(f"{name} must be positive, got {val!r}")
        if not (np.isfinite(self.rho0) and self.rho0 >= 0):
            raise ConfigurationError(f"rho0 must be >= 0, got {self.rho0!r}")
        if self.lam < 1:
            raise ConfigurationError(f"lambda must be >= 1, got {self.lam!r}")
        for name in ("grid_n", "sphere_m", "k_max", "n_t", "picard_grid_n", "picard_sphere_m", "probes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.threads < 0:
            raise ConfigurationError("threads must be >= 0")
        if self.t_end is not None and not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if self.command == "inhomogeneous" and not self.c1 > self.T * self.c2:
            raise ConfigurationError(f"need c1 > T*c2, got c1={self.c1}, T*c2={self.T * self.c2}")
        if self.samples is None:
            self.samples = DEFAULT_SAMPLES.get(self.command, 100_000)

    @property
    def kernel(self):
        if self.regime == "classical":
            return ClassicalHardSphere()
        return RelativisticConstantSigma(self.sigma0)


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _report_dict(report) -> dict:
    return {k: getattr(report, k) for k in report.__dataclass_fields__}


# ---------------------------------------------------------------------------
# commands


def cmd_geometry(cfg: RunConfig, out: Path) -> dict:
    m = cfg.sphere_m
    if cfg.regime == "classical":
        p_default, q_default = (1.0, 0.0, 0.0), (-1.0, 0.0, 0.0)
    else:
        p_default, q_default = (2.0, 0.0, 0.0), (0.0, 0.0, 0.0)
    p = np.array(cfg.p if cfg.p is not None else p_default, float)
    q = np.array(cfg.q if cfg.q is not None else q_default, float)
    if cfg.regime == "classical":
        normals, vp, wp = collision_sphere_points(p, q, m)
        center = 0.5 * (p + q)
        radius = 0.5 * np.linalg.norm(p - q)
        dev = max(
            float(np.max(np.abs(np.linalg.norm(vp - center, axis=1) - radius))),
            float(np.max(np.abs(np.linalg.norm(wp - center, axis=1) - radius))),
        )
        antipodal = float(np.max(np.abs(vp + wp - 2 * center)))
        write_csv(
            out / "sphere.csv",
            ["nx", "ny", "nz", "vpx", "vpy", "vpz", "wpx", "wpy", "wpz"],
            np.hstack([normals, vp, wp]),
        )
        summary = {
            "regime": "classical",
            "v": p,
            "w": q,
            "center": center,
            "radius": radius,
            "max_radius_deviation": dev,
            "max_antipodal_deviation": antipodal,
            "points": len(normals),
        }
        write_json(out / "geometry.json", summary)
        return summary
    omegas, pp, qp = ellipsoid_points(p, q, m)
    write_csv(
        out / "ellipsoid.csv",
        ["omegax", "omegay", "omegaz", "ppx", "ppy", "ppz", "qpx", "qpy", "qpz"],
        np.hstack([omegas, pp, qp]),
    )
    e_p = np.sqrt(1 + np.sum(p * p))
    e_q = np.sqrt(1 + np.sum(q * q))
    alpha = e_p * e_q / (np.sqrt(1 + np.sum(pp * pp, axis=1)) * np.sqrt(1 + np.sum(qp * qp, axis=1)))
    summary = {
        "regime": "relativistic",
        "p": p,
        "q": q,
        "points": len(omegas),
        "excentricity_min": float(alpha.min()),
        "excentricity_max": float(alpha.max()),
    }
    if np.array_equal(p, q) or len(np.unique(pp, axis=0)) < 9:
        summary["quadric_fit"] = None
        summary["quadric_skipped"] = "degenerate"
    else:
        fit = fit_quadric(pp)
        summary["quadric_fit"] = {
            "eigenvalues": fit.eigenvalues,
            "residual": fit.residual,
            "is_ellipsoid": fit.is_ellipsoid,
            "all_equal": bool(np.allclose(fit.eigenvalues, fit.eigenvalues[0], rtol=1e-6)),
        }
    write_json(out / "geometry.json", summary)
    return summary


def cmd_delta(cfg: RunConfig, out: Path) -> dict:
    kernel = cfg.kernel
    data = {"R": cfg.R, "lambda": cfg.lam, "grid_n": cfg.grid_n, "sphere_m": cfg.sphere_m, "regime": cfg.regime}
    try:
        est = estimate_delta(cfg.R, cfg.lam, kernel, cfg.grid_n, cfg.sphere_m, fault_scale=cfg.fault_scale)
    except EstimationError as exc:
        data.update(delta=0.0, error=str(exc))
        write_json(out / "delta.json", data)
        raise AcceptanceFailure(str(exc)) from exc
    mc = mc_delta(cfg.R, cfg.lam, kernel, cfg.samples, cfg.probes, cfg.seed)
    diff = abs(est.delta - mc.mean)
    allowed = 0.05 * est.delta + 3.0 * mc.std_error
    data.update(
        delta=est.delta,
        argmin=est.argmin,
        oracle_mean=mc.mean,
        oracle_std_error=mc.std_error,
        oracle_samples_per_probe=mc.samples,
        oracle_probes=cfg.probes,
        oracle_argmin=mc.extra["argmin"],
        relative_difference=diff / est.delta,
        allowed_difference=allowed,
        agrees=diff <= allowed,
    )
    write_json(out / "delta.json", data)
    if diff > allowed:
        raise AcceptanceFailure(f"oracle disagrees: |{est.delta} - {mc.mean}| > {allowed}")
    return data


def cmd_homogeneous(cfg: RunConfig, out: Path) -> dict:
    grid = make_velocity_grid(cfg.R, cfg.grid_n)
    sq = make_sphere_quadrature(cfg.sphere_m)
    kernel = cfg.kernel
    controls = Controls(threshold_factor=cfg.threshold_factor, max_rel_increment=cfg.max_rel_increment)
    if cfg.rho0 == 0:
        traj, report = evolve_truncated(0.0, cfg.R, kernel, grid, sq, cfg.t_end or 1.0, controls)
        write_csv(out / "trajectory.csv", ["t", "sup_norm", "min_on_ball", "comparison_value"], traj.rows())
        data = {"report": _report_dict(report), "note": "no blowup expected for zero initial data"}
        write_json(out / "blowup.json", data)
        return data
    delta = delta_on_grid(grid, cfg.R, kernel, sq)
    bound = 1.0 / (delta * cfg.rho0)
    t_end = cfg.t_end or 2.0 * bound
    try:
        traj, report = evolve_truncated(cfg.rho0, cfg.R, kernel, grid, sq, t_end, controls)
    except InconclusiveRunError as exc:
        write_json(out / "blowup.json", {"inconclusive": str(exc), "delta": delta, "predicted_bound": bound})
        raise
    write_csv(out / "trajectory.csv", ["t", "sup_norm", "min_on_ball", "comparison_value"], traj.rows())
    in_window = report.detected and report.t_detect <= (1 + MARGIN) * bound
    dominated = report.comparison_margin >= -1e-6
    data = {
        "report": _report_dict(report),
        "delta": delta,
        "predicted_bound": bound,
        "detected_in_window": in_window,
        "comparison_dominated": dominated,
    }
    write_json(out / "blowup.json", data)
    if not report.detected and t_end < (1 + MARGIN) * bound:
        raise InconclusiveRunError(f"horizon t_end={t_end!r} ends before the predicted window {(1 + MARGIN) * bound!r}")
    if not (in_window and dominated):
        raise AcceptanceFailure(f"blowup not confirmed: detected_in_window={in_window}, dominated={dominated}")
    return data


def cmd_inhomogeneous(cfg: RunConfig, out: Path) -> dict:
    if cfg.regime != "classical":
        raise ConfigurationError("the inhomogeneous command supports the classical regime only")
    icfg = InhomogeneousConfig(
        cfg.c0, cfg.c1, cfg.c2, cfg.T, ClassicalHardSphere(), cfg.picard_sphere_m, cfg.picard_grid_n, cfg.n_t
    )
    ev = PicardEvaluator(icfg, cfg.k_max)
    rows = []
    worst = 0.0
    for i, frac in enumerate((0.25, 0.5, 0.75)):
        chk = check_shrinking_ball(ev, cfg.k_max, frac * cfg.T, cfg.samples, cfg.seed + i)
        worst = max(worst, chk.max_scaled)
        rows.extend(r + (0,) for r in chk.rows)
    t_ctl = 0.5 * cfg.T
    control = []
    for k in range(1, cfg.k_max + 1):
        fx, fy, d = negative_control(ev, k, t_ctl)
        x_norm = cfg.c1 - 0.5 * t_ctl * cfg.c2
        rows.append((k, t_ctl, x_norm, 0.0, 0.0, fx, fy, d, 1))
        control.append({"k": k, "f_x": fx, "f_y": fy, "discrepancy": d})
    write_csv(out / "lemma5.csv", ["k", "t", "abs_x", "abs_y", "abs_v", "f_x", "f_y", "discrepancy", "control"], rows)
    grid = make_velocity_grid(cfg.c2, cfg.grid_n)
    sq = make_sphere_quadrature(cfg.sphere_m)
    controls = Controls(threshold_factor=cfg.threshold_factor, max_rel_increment=cfg.max_rel_increment)
    red = reduced_homogeneous_blowup(icfg, grid, sq, controls)
    data = {
        "homogeneity_max_scaled_discrepancy": worst,
        "negative_control": control,
        "c1_gt_T_c2": cfg.c1 > cfg.T * cfg.c2,
        "delta": red.delta,
        "predicted_time": red.predicted_time,
        "predicted": red.predicted,
        "within_horizon": red.within_horizon,
        "branch": red.branch,
        "consistent": red.consistent,
        "report": _report_dict(red.blowup),
    }
    write_json(out / "theorem2.json", data)
    if worst > 1e-12 or not red.consistent:
        raise AcceptanceFailure(f"shrinking-ball discrepancy {worst!r}, reduction consistent={red.consistent}")
    return data


ORACLE_PROBES = np.array(
    [[0.0, 0.0, 0.0], [0.2, 0.0, 0.0], [0.1, -0.2, 0.15], [-0.3, 0.1, 0.2], [0.05, 0.35, -0.1]]
)
ORACLE_WIDTH = 0.3


def _bump(x):
    return np.exp(-np.sum(x * x, axis=-1) / (2.0 * ORACLE_WIDTH ** 2))


def cmd_oracle_check(cfg: RunConfig, out: Path) -> dict:
    """Deterministic gain against Monte Carlo on a smooth bump, both regimes."""
    grid = make_velocity_grid(2.0, 24)
    sq = make_sphere_quadrature(16)
    field_ = DistributionField.from_function(grid, _bump)
    zero = DistributionField(grid, np.zeros(grid.size))
    seeds = np.random.SeedSequence(cfg.seed).generate_state(64)
    rows = []
    worst = 0.0
    si = 0
    for regime, kernel in (("classical", ClassicalHardSphere()), ("relativistic", RelativisticConstantSigma(cfg.sigma0))):
        det = gain_at(field_, kernel, sq, ORACLE_PROBES, symmetric=False, fault_scale=cfg.fault_scale)
        for v, d in zip(ORACLE_PROBES, det):
            est = mc_gain(field_, kernel, v, cfg.samples, int(seeds[si]), w_radius=grid.support_radius)
            si += 1
            z = (d - est.mean) / est.std_error
            worst = max(worst, abs(z))
            rows.append({"regime": regime, "v": v, "deterministic": d, "mc_mean": est.mean, "mc_std_error": est.std_error, "z": z})
        d0 = float(gain_at(zero, kernel, sq, ORACLE_PROBES[:1])[0])
        e0 = mc_gain(zero, kernel, ORACLE_PROBES[0], 10_000, int(seeds[si]), w_radius=grid.support_radius)
        si += 1
        rows.append({"regime": regime, "v": ORACLE_PROBES[0], "deterministic": d0, "mc_mean": e0.mean, "mc_std_error": e0.std_error, "z": 0.0, "zero_field": True})
    forms = []
    for p in ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]):
        cm, kf = mc_form_equivalence(p, _bump, cfg.samples, int(seeds[si]), sigma0=cfg.sigma0, k_scale=cfg.fault_scale)
        si += 1
        z = (cm.mean - kf.mean) / np.hypot(cm.std_error, kf.std_error)
        worst = max(worst, abs(z))
        forms.append({"p": p, "cm_mean": cm.mean, "cm_std_error": cm.std_error, "k_mean": kf.mean, "k_std_error": kf.std_error, "z": z})
    data = {
        "gain_vs_mc": rows,
        "form_equivalence": forms,
        "omega_normalization": 0.25,
        "raw_k_over_cm_ratio": 4.0,
        "max_abs_z": worst,
        "passes_3sigma": worst <= 3.0,
        "fault_scale": cfg.fault_scale,
    }
    write_json(out / "oracle.json", data)
    if worst > 5.0:
        raise AcceptanceFailure(f"oracle disagreement at {worst:.2f} sigma")
    return data


HANDLERS = {
    "geometry": cmd_geometry,
    "delta": cmd_delta,
    "homogeneous": cmd_homogeneous,
    "inhomogeneous": cmd_inhomogeneous,
    "oracle-check": cmd_oracle_check,
}


# ---------------------------------------------------------------------------
# argument handling


def _vec(text: str):
    parts = [float(x) for x in str(text).replace(" ", "").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gainboltz", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key=value file; command-line flags override it")
    ap.add_argument("--command", choices=COMMANDS)
    ap.add_argument("--regime", choices=("classical", "relativistic"))
    ap.add_argument("--sigma0", type=float, help="constant relativistic cross section")
    ap.add_argument("--R", type=float)
    ap.add_argument("--lambda", dest="lam", type=float)
    ap.add_argument("--rho0", type=float)
    ap.add_argument("--c0", type=float)
    ap.add_argument("--c1", type=float)
    ap.add_argument("--c2", type=float)
    ap.add_argument("--T", type=float)
    ap.add_argument("--grid-n", dest="grid_n", type=int)
    ap.add_argument("--sphere-m", dest="sphere_m", type=int)
    ap.add_argument("--k-max", dest="k_max", type=int)
    ap.add_argument("--n-t", dest="n_t", type=int)
    ap.add_argument("--picard-grid-n", dest="picard_grid_n", type=int)
    ap.add_argument("--picard-sphere-m", dest="picard_sphere_m", type=int)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--probes", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out")
    ap.add_argument("--p", type=_vec, help="first velocity/momentum x,y,z (geometry)")
    ap.add_argument("--q", type=_vec, help="second velocity/momentum x,y,z (geometry)")
    ap.add_argument("--t-end", dest="t_end", type=float)
    ap.add_argument("--threshold-factor", dest="threshold_factor", type=float)
    ap.add_argument("--max-rel-increment", dest="max_rel_increment", type=float)
    ap.add_argument("--fault-scale", dest="fault_scale", type=float, help=argparse.SUPPRESS)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


_FILE_TYPES = {
    "command": str, "regime": str, "sigma0": float, "R": float, "lam": float, "rho0": float,
    "c0": float, "c1": float, "c2": float, "T": float, "grid_n": int, "sphere_m": int,
    "k_max": int, "n_t": int, "picard_grid_n": int, "picard_sphere_m": int, "samples": int,
    "probes": int, "seed": int, "threads": int, "out": str, "p": _vec, "q": _vec,
    "t_end": float, "threshold_factor": float, "max_rel_increment": float, "fault_scale": float,
}


def read_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key not in _FILE_TYPES:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _FILE_TYPES[key](val)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigurationError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return values


def config_from_args(argv=None) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for key, val in vars(args).items():
        if key in ("config", "verbose") or val is None:
            continue
        values[key] = val
    if "command" not in values:
        raise ConfigurationError("--command is required")
    return RunConfig(**values), args.verbose


def _manifest(cfg: RunConfig, out: Path, started: float, status: int, files) -> None:
    cfg_dict = asdict(cfg)
    write_json(
        out / "manifest.json",
        {
            "config": cfg_dict,
            "seed": cfg.seed,
            "version": __version__,
            "duration_seconds": time.time() - started,
            "exit_code": status,
            "files": sorted(files),
        },
    )


def run(cfg: RunConfig) -> int:
    started = time.time()
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"error: cannot write to output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    before = set(os.listdir(out))
    set_threads(cfg.threads)
    status = EXIT_OK
    try:
        HANDLERS[cfg.command](cfg, out)
    except AcceptanceFailure as exc:
        print(f"acceptance failure: {exc}", file=sys.stderr)
        status = EXIT_ACCEPTANCE
    except InconclusiveRunError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        status = EXIT_INCONCLUSIVE
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        status = EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    files = (set(os.listdir(out)) - before) | {f for f in os.listdir(out) if f.endswith((".csv", ".json"))}
    try:
        _manifest(cfg, out, started, status, files | {"manifest.json"})
    except OSError as exc:
        print(f"I/O error writing manifest in {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    return status


def main(argv=None) -> int:
    try:
        cfg, verbose = config_from_args(argv)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error reading config: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
