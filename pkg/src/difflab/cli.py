"""Command-line entry point orchestrating the lab's experiments.

Exit codes: 0 success, 2 malformed config or input, 3 mathematical
precondition violated (non-elliptic or non-FDN operator).  All randomness
derives from one --seed split per subtask by stable labels, and CSV output
is byte-reproducible for identical configs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .ballcalc import Ball
from .diffexp import (
    critical_rate_experiment,
    dyadic_radii,
    interface_probe_points,
    sample_points,
)
from .errors import DifflabError, InputError, PreconditionError
from .fieldgen import BandLimitedSpec, PiecewiseKernelSpec, realize, rigid_motion
from .grids import GridField
from .inequality import (
    poincare_sobolev_ratio,
    poincare_sobolev_ratio_measure,
    require_fdn,
)
from .nullspace import fdn_report
from .operators import (
    BUILTIN_NAMES,
    SphereSearchConfig,
    complex_ellipticity_margin,
    load_operator,
    make_builtin,
)
from .polynomials import PolynomialField
from .reconstruct import (
    fourier_reconstruct,
    kernel_homogeneity_check,
    require_elliptic,
    spectral_derivative,
)
from .rng import stream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _config_hash(cfg: dict) -> str:
    """Hash of the experiment parameters; the output location is excluded so
    equal experiments yield byte-identical files wherever they are written."""
    payload = {k: v for k, v in cfg.items() if k != "out"}
    blob = json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_csv(path: Path, columns, rows, cfg_hash: str, seed: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={cfg_hash} seed={seed}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _resolve_operator(cfg: dict):
    if cfg.get("operator_file"):
        return load_operator(cfg["operator_file"])
    name = cfg.get("builtin")
    if not name:
        raise InputError("specify --builtin or --operator-file")
    return make_builtin(name, cfg.get("n"), cfg.get("dimv"))


def _merged_config(args: argparse.Namespace) -> dict:
    """Flag values override config-file values; None flags fall through."""
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config file {args.config}: {exc}") from exc
    for key, val in vars(args).items():
        if key in ("config", "func"):
            continue
        if val is not None:
            cfg[key] = val
    cfg.setdefault("seed", 0)
    cfg.setdefault("resolution", 128)
    cfg.setdefault("out", "difflab-out")
    return cfg


def _outdir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands

def cmd_operator_check(cfg: dict) -> int:
    op = _resolve_operator(cfg)
    out = _outdir(cfg)
    sphere = SphereSearchConfig(seed=int(cfg["seed"]))
    margin = complex_ellipticity_margin(op, sphere)
    null = fdn_report(op, int(cfg.get("degree_cap", 8)), sphere_cfg=sphere)
    payload = {"operator": op.name, "config_hash": _config_hash(cfg)}
    with open(out / "ellipticity.json", "w", encoding="utf-8") as fh:
        json.dump({**payload, **margin.to_dict()}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    with open(out / "nullspace.json", "w", encoding="utf-8") as fh:
        json.dump({**payload, **null.to_dict()}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if null.is_fdn:
        print(f"{op.name}: FDN(l={null.stabilization_degree}, totalDim={null.total_dim})")
    else:
        print(f"{op.name}: NotFdnUpTo({null.degree_cap}), dims={list(null.dims_per_degree)}")
    print(f"real margin {margin.real_margin:.6g}, complex margin {margin.complex_margin:.6g}")
    return EXIT_OK


def _piecewise_spec(op, kernel_basis, rng, center) -> PiecewiseKernelSpec:
    angle = rng.uniform(0.0, np.pi)
    normal = (float(np.cos(angle)), float(np.sin(angle)))
    offset = rng.uniform(-0.15, 0.15)
    point = (float(center[0] + offset * normal[0]), float(center[1] + offset * normal[1]))
    zero = PolynomialField(op.n, op.dim_v, {})
    minus, plus = zero, zero
    for k in kernel_basis:
        minus = minus + k.scale(float(rng.standard_normal()))
        plus = plus + k.scale(float(rng.standard_normal()))
    return PiecewiseKernelSpec(point, normal, minus, plus)


def cmd_inequality(cfg: dict) -> int:
    op = _resolve_operator(cfg)
    _, kernel_basis = require_fdn(op)
    out = _outdir(cfg)
    seed = int(cfg["seed"])
    res = int(cfg["resolution"])
    fields = int(cfg.get("fields", 20))
    piecewise = int(cfg.get("piecewise", 0))
    band = int(cfg.get("band", 3))
    radii = [float(r) for r in str(cfg.get("radii", "0.25,0.125,0.0625")).split(",")]
    center = np.full(op.n, 0.5)
    rows = []
    ratios_by_field: dict = {}
    for i in range(fields):
        spec = BandLimitedSpec(seed=seed * 100003 + i, band=band)
        u, _mu = realize(spec, op, resolution=res)
        for r in radii:
            rep = poincare_sobolev_ratio(op, u, Ball(center, r), f"band-{i}", kernel_basis)
            rows.append((op.name, f"band-{i}", *[_fmt(c) for c in center], r,
                         rep.lhs, rep.rhs, rep.ratio, rep.outcome))
            ratios_by_field.setdefault(f"band-{i}", []).append(rep.ratio)
    rng = stream(seed, "cli/inequality/piecewise")
    for i in range(piecewise):
        spec = _piecewise_spec(op, kernel_basis, rng, center)
        u, mu = realize(spec, op, resolution=res)
        for r in radii:
            rep = poincare_sobolev_ratio_measure(op, mu, u, Ball(center, r),
                                                 f"piecewise-{i}", kernel_basis)
            rows.append((op.name, f"piecewise-{i}", *[_fmt(c) for c in center], r,
                         rep.lhs, rep.rhs, rep.ratio, rep.outcome))
    if cfg.get("kernel_probe"):
        from .grids import make_grid, sample_function

        probe = kernel_basis[-1]
        grid = make_grid(np.zeros(op.n), np.ones(op.n), res, op.dim_v)
        u = sample_function(grid, probe.evaluate)
        for r in radii:
            rep = poincare_sobolev_ratio(op, u, Ball(center, r), "kernel-0", kernel_basis)
            rows.append((op.name, "kernel-0", *[_fmt(c) for c in center], r,
                         rep.lhs, rep.rhs, rep.ratio, rep.outcome))
    columns = ["operator", "field_id"] + [f"center_x{j+1}" for j in range(op.n)] + [
        "radius", "lhs", "rhs", "ratio", "outcome"]
    _write_csv(out / "inequality.csv", columns, rows, _config_hash(cfg), seed)
    spread = _scale_invariance_spread(op, kernel_basis, radii, seed, band, res)
    print(f"scale-invariance: max rescaled-field ratio spread across radii {spread:.6f}")
    print(f"wrote {len(rows)} rows to {out / 'inequality.csv'}")
    return EXIT_OK


def _scale_invariance_spread(op, kernel_basis, radii, seed, band, res,
                             n_fields: int = 3) -> float:
    """Ratio spread across radii for fields rescaled with the ball.

    The same mode coefficients are synthesized over boxes scaled with each
    radius, realizing the proof's substitution u(x + r .); the ratio is then
    scale-invariant up to quadrature.
    """
    from .fieldgen import band_limited_coefficients, band_limited_modes, synthesize_band_limited
    from .grids import make_grid

    center = np.full(op.n, 0.5)
    modes = band_limited_modes(op.n, band)
    worst = 0.0
    for i in range(n_fields):
        coeffs = band_limited_coefficients(
            BandLimitedSpec(seed=seed * 7919 + i, band=band), op.dim_v, op.n)
        vals = []
        for r in radii:
            half = 1.2 * r
            grid = make_grid(center - half, center + half, res, op.dim_v, periodic=True)
            u, _ = synthesize_band_limited(op, coeffs, modes, grid)
            rep = poincare_sobolev_ratio(op, u, Ball(center, r), f"rescaled-{i}",
                                         kernel_basis)
            if rep.outcome == "ok":
                vals.append(rep.ratio)
        if len(vals) > 1 and max(vals) > 0:
            worst = max(worst, (max(vals) - min(vals)) / max(vals))
    return worst


def cmd_diff_rate(cfg: dict) -> int:
    op = _resolve_operator(cfg)
    _, kernel_basis = require_fdn(op)
    out = _outdir(cfg)
    seed = int(cfg["seed"])
    res = int(cfg["resolution"])
    kind = cfg.get("field_kind", "piecewise")
    n_points = int(cfg.get("points", 50))
    n_probes = int(cfg.get("probe_points", 0))
    band = int(cfg.get("band", 2))
    if kind == "piecewise":
        rng = stream(seed, "cli/diff-rate/spec")
        spec = _piecewise_spec(op, kernel_basis, rng, np.full(op.n, 0.5))
        u, mu = realize(spec, op, resolution=res)
    elif kind == "smooth":
        u, mu = realize(BandLimitedSpec(seed=seed, band=band), op, resolution=res)
    else:
        raise InputError(f"unknown field kind {kind!r}")
    r0 = cfg.get("r0")
    radii = dyadic_radii(u, float(r0) if r0 else None, int(cfg.get("radii_count", 6)))
    points = sample_points(u, mu, n_points, radii[0], seed, variant="interior")
    report = critical_rate_experiment(
        op, u, mu, points, radii, kernel_basis=kernel_basis,
        decompose=bool(cfg.get("decompose", True)),
    )
    rows = []
    p_star = report.exponent
    for result in report.results:
        x = result.point
        decomp = {row.radius: row for row in result.decomposition}
        for p, rep in sorted(result.reports.items()):
            for r, ev in zip(rep.radii, rep.excess):
                drow = decomp.get(r) if p == p_star else None
                rows.append(("excess", *x, p, r, ev,
                             drow.term_tv if drow else "", drow.term_proj if drow else "",
                             "", "", result.fit.residual_flag))
            rows.append(("summary", *x, p, "", "", "", "", rep.beta,
                         "pass" if rep.differentiable else "fail",
                         result.fit.residual_flag))
    probe_rows = 0
    if n_probes and kind == "piecewise":
        probes = interface_probe_points(u, mu, n_probes, seed)
        probe_report = critical_rate_experiment(
            op, u, mu, probes, radii, kernel_basis=kernel_basis, variant="probe")
        for result in probe_report.results:
            for p, rep in sorted(result.reports.items()):
                rows.append(("probe-summary", *result.point, p, "", "", "", "",
                             rep.beta, "pass" if rep.differentiable else "fail",
                             result.fit.residual_flag))
                probe_rows += 1
    columns = (["row"] + [f"x{j+1}" for j in range(op.n)]
               + ["p", "r", "excess", "I_r", "II_r", "beta", "verdict", "residual_flag"])
    _write_csv(out / "rate.csv", columns, rows, _config_hash(cfg), seed)
    print(f"pass fraction {report.pass_fraction:.3f} at p={p_star:.4g} "
          f"(median beta {report.median_beta:.3f}; {len(points)} points, "
          f"{probe_rows} probe rows)")
    return EXIT_OK


def cmd_reconstruct(cfg: dict) -> int:
    op = _resolve_operator(cfg)
    require_elliptic(op)
    out = _outdir(cfg)
    seed = int(cfg["seed"])
    res = int(cfg.get("resolution", 256))
    band = int(cfg.get("band", 8))
    u, _ = realize(BandLimitedSpec(seed=seed, band=band), op, resolution=res)
    u.data -= u.data.mean(axis=tuple(range(op.n)), keepdims=True)
    g = spectral_derivative(op, u)
    ur = fourier_reconstruct(op, g)
    err = float(np.linalg.norm(ur.data - u.data) / np.linalg.norm(u.data))
    payload = {
        "operator": op.name,
        "resolution": res,
        "band": band,
        "roundtrip_relative_l2": err,
        "imag_residue": ur.imag_residue,
        "config_hash": _config_hash(cfg),
    }
    if cfg.get("homogeneity"):
        rep = kernel_homogeneity_check(op)
        payload["homogeneity_max_residual"] = rep.max_residual
        payload["homogeneity_scale"] = rep.scale
    with open(out / "reconstruct.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"round-trip relative L2 error {err:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing

def _add_operator_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--builtin", choices=BUILTIN_NAMES)
    p.add_argument("--operator-file", dest="operator_file")
    p.add_argument("--n", type=int)
    p.add_argument("--dimV", dest="dimv", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--out")
    p.add_argument("--config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="difflab",
        description="Numerical experiments for first-order constant-coefficient operators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("operator-check", help="ellipticity margins and null-space report")
    _add_operator_flags(p)
    p.add_argument("--degree-cap", dest="degree_cap", type=int)
    p.set_defaults(func=cmd_operator_check)

    p = sub.add_parser("inequality", help="Poincare-Sobolev ratio sweeps")
    _add_operator_flags(p)
    p.add_argument("--fields", type=int)
    p.add_argument("--piecewise", type=int)
    p.add_argument("--band", type=int)
    p.add_argument("--radii")
    p.add_argument("--kernel-probe", dest="kernel_probe", action="store_const", const=True)
    p.set_defaults(func=cmd_inequality)

    p = sub.add_parser("diff-rate", help="critical-rate excess experiments")
    _add_operator_flags(p)
    p.add_argument("--field-kind", dest="field_kind", choices=("piecewise", "smooth"))
    p.add_argument("--points", type=int)
    p.add_argument("--probe-points", dest="probe_points", type=int)
    p.add_argument("--band", type=int)
    p.add_argument("--r0", type=float)
    p.add_argument("--radii-count", dest="radii_count", type=int)
    p.add_argument("--no-decompose", dest="decompose", action="store_const", const=False)
    p.set_defaults(func=cmd_diff_rate)

    p = sub.add_parser("reconstruct", help="multiplier round-trip and kernel checks")
    _add_operator_flags(p)
    p.add_argument("--band", type=int)
    p.add_argument("--homogeneity", action="store_const", const=True)
    p.set_defaults(func=cmd_reconstruct)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _merged_config(args)
        return args.func(cfg)
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (InputError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DifflabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
