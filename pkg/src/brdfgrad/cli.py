"""Command-line entry point: ``brdfgrad <subcommand> [options]``.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
Summaries go to stdout; CSV/PFM artifacts go to ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import brdf as _b
from .brdf import ConfigError, Kind
from .decomp import build, pdf_table, registry as _registry, write_pdf_csv
from .estimators import as_kind, gaussian_demo
from .render import library
from .render.image import ImageError, write_image
from .render.integrators import (declared_rays, render_gradient_direct, render_gradient_gi,
                                 render_samples, variance_benchmark)
from .render.scene import load_scene
from .validation import derivative_check, summarize, sweep

CSV_VERSION = "1"

OK, FAILED, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def registry():
    """``(model, param, decomposition, sampler family)`` for each supported derivative."""
    return [tuple(r) for r in _registry()]


# ---------------------------------------------------------------------------
# helpers


def _parse_params(text):
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if "=" not in item:
            raise UsageError(f"--params expects key=value pairs, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def _kind(name):
    try:
        return Kind(name)
    except ValueError:
        raise UsageError(f"unknown model {name!r}; choose from "
                         f"{', '.join(k.value for k in Kind)}") from None


def _rows_for(args):
    """Registry rows selected by ``--all`` or ``--model/--param``."""
    rows = _registry()
    if args.all:
        return rows
    if not args.model:
        raise UsageError("give --all or --model")
    k = _kind(args.model)
    sel = [r for r in rows if r.model is k and (args.param is None or r.param == args.param)]
    if not sel:
        raise UsageError(f"no registered derivative for {args.model} {args.param or ''}")
    return sel


def _row_key(check):
    """``(Kind, param)`` from a sweep label such as ``IsoGGX:alpha[alpha=0.2]``."""
    head = check.label.split("[", 1)[0]
    kind, param = head.split(":", 1)
    return Kind(kind), param


def _scene(spec):
    """A JSON path, or ``builtin:name`` for a procedural scene."""
    if spec.startswith("builtin:"):
        try:
            return library.builtin_scene(spec.split(":", 1)[1])
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    return load_scene(spec)


def _out_path(args, default=None):
    out = getattr(args, "out", None) or default
    if out is None:
        return None
    p = Path(out)
    if not p.parent.exists():
        raise UsageError(f"--out parent directory does not exist: {p.parent}")
    return p


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _all_finite(values):
    return bool(np.all(np.isfinite(np.asarray(values, float))))


# ---------------------------------------------------------------------------
# subcommands


def cmd_pdf_check(args):
    rows = _rows_for(args)
    kinds = sorted({r.model for r in rows}, key=lambda k: k.value)
    wanted = {(r.model, r.param) for r in rows}
    results = [r for r in sweep(0, args.seed, kinds) if _row_key(r) in wanted]
    bad = [r for r in results if not (r.norm_ok and r.mass_ok)]
    for r in results:
        flag = "ok " if r.norm_ok and r.mass_ok else "BAD"
        me = "-" if r.mass_rel_error is None else f"{r.mass_rel_error:.2e}"
        print(f"{flag} {r.label:48s} {r.lobe:30s} norm={r.norm:.6f} mass_err={me}")
    out = _out_path(args)
    if out:
        _write_csv(out, ["label", "lobe", "norm", "mass_rel_error"],
                   [(r.label, r.lobe, r.norm, "" if r.mass_rel_error is None else r.mass_rel_error)
                    for r in results])
    print(f"{len(results) - len(bad)}/{len(results)} lobes normalize within 1e-3")
    return OK if not bad and _all_finite([r.norm for r in results]) else FAILED


# the sweep bins on a 32 x 64 grid and wants ten samples per cell
CHI2_MIN_SAMPLES = 10 * 32 * 64


def cmd_chi2(args):
    if args.samples < CHI2_MIN_SAMPLES:
        raise UsageError(f"--samples must be at least {CHI2_MIN_SAMPLES}")
    rows = _rows_for(args)
    kinds = sorted({r.model for r in rows}, key=lambda k: k.value)
    wanted = {(r.model, r.param) for r in rows}
    t0 = time.perf_counter()

    def keep(r):
        return _row_key(r) in wanted

    def show(r):
        if keep(r):
            print(f"{r.label:48s} {r.lobe:30s} p={r.chi2_p:.4g}", flush=True)
    results = [r for r in sweep(args.samples, args.seed, kinds,
                                progress=show if args.verbose else None) if keep(r)]
    s = summarize(results, args.alpha)
    out = _out_path(args)
    if out:
        _write_csv(out, ["label", "lobe", "norm", "chi2_p"],
                   [(r.label, r.lobe, r.norm, r.chi2_p) for r in results])
    print(f"{s.n_tests} chi-square tests, {args.samples} samples each, "
          f"{time.perf_counter() - t0:.0f} s")
    print(f"p <= {args.alpha}: {s.raw_failures} (expected by chance: "
          f"{args.alpha * s.n_tests:.1f})")
    print(f"family-wise level {args.alpha} (per-test {s.family_level:.2e}): "
          f"{s.family_failures} rejections; normalization failures {s.norm_failures}")
    return OK if s.passed else FAILED


def cmd_pdf_dump(args):
    m = _b.model(_kind(args.model), **_parse_params(args.params))
    pair = build(m, args.param)
    if args.lobe not in (0, 1):
        raise UsageError("--lobe must be 0 or 1")
    wo = np.array([0.0, 0.0, 1.0]) if args.wo is None else np.asarray(
        [float(v) for v in args.wo.split(",")])
    rows = pdf_table(pair.lobes[args.lobe], args.n_theta, args.n_phi, wo)
    out = _out_path(args, f"pdf_{args.model}_{args.param}_{args.lobe}.csv")
    write_pdf_csv(rows, out)
    print(f"wrote {len(rows)} rows for {pair.lobes[args.lobe].name} to {out}")
    return OK if _all_finite([r[2] for r in rows]) else FAILED


def cmd_grad_check(args):
    rows = _rows_for(args)
    results = [derivative_check(r.model, r.param, args.configs, args.seed) for r in rows]
    for c in results:
        print(f"{'ok ' if c.passed else 'BAD'} {c.model.value:18s} {c.param:8s} "
              f"max rel err {c.max_rel_error:.2e} over {c.n_configs} configurations")
    out = _out_path(args)
    if out:
        _write_csv(out, ["model", "param", "n_configs", "max_rel_error"],
                   [(c.model.value, c.param, c.n_configs, c.max_rel_error) for c in results])
    return OK if all(c.passed for c in results) else FAILED


def cmd_grad_image(args):
    scene = _scene(args.scene)
    if args.max_depth > 1:
        img = render_gradient_gi(scene, args.target, args.kind, args.spp, args.max_depth,
                                 args.seed, 0, args.mis_lobes, args.threads)
    else:
        img = render_gradient_direct(scene, args.target, args.kind, args.spp, args.seed, 0,
                                     args.mis_light, args.mis_lobes, args.threads)
    out = _out_path(args, "gradient.pfm")
    write_image(img.data, out)
    print(f"{args.target} {as_kind(args.kind).value}: mean {img.data.mean():.6g}, "
          f"{img.rays_per_sample} rays per sample -> {out}")
    return OK if img.is_finite() else FAILED


def cmd_variance_bench(args):
    scene = _scene(args.scene)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    rep = variance_benchmark(scene, args.target, kinds, args.spp, args.runs, args.seed,
                             args.max_depth, args.mis_light, args.threads)
    print(f"{'kind':20s} {'variance':>14s} {'ratio':>10s} {'rays/px':>10s}")
    for k, v, r, rays in rep.rows():
        print(f"{k:20s} {v:14.6g} {r:10.3f} {rays:10.2f}")
    out = _out_path(args, "variance.csv")
    rep.write_csv(out)
    return OK if _all_finite([v for _, v, _, _ in rep.rows()]) else FAILED


def gi_ray_counts(depths, spp=1, res=4, seed=0, kind="BrdfSampling"):
    """Measured rays per camera sample in the closed furnace for each depth."""
    scene = library.builtin_scene("furnace", res=res)
    out = []
    for d in depths:
        b = render_samples(scene, "gradient", spp, seed, 0, "shell.rho", kind, d)
        out.append(b.rays / (res * res * spp))
    return np.asarray(out, float)


def quadratic_fit(depths, counts):
    """Least-squares quadratic and the largest relative residual."""
    depths = np.asarray(depths, float)
    counts = np.asarray(counts, float)
    coef = np.polyfit(depths, counts, 2)
    resid = np.abs(np.polyval(coef, depths) - counts) / counts
    return coef, float(resid.max())


def cmd_gi_bench(args):
    depths = list(range(1, args.max_depth + 1))
    counts = gi_ray_counts(depths, args.spp, seed=args.seed)
    coef, res = quadratic_fit(depths, counts)
    scene = library.builtin_scene("furnace", res=8)
    rows = []
    for d, c in zip(depths, counts):
        rows.append((d, c, declared_rays(scene, "shell.rho", "BrdfSampling", False, d)))
        print(f"depth {d}: {c:.2f} rays per camera sample")
    print(f"quadratic fit {coef[0]:.3f} d^2 + {coef[1]:.3f} d + {coef[2]:.3f}, "
          f"max relative residual {res:.2%}")
    img = render_gradient_gi(scene, "shell.rho", "BrdfSampling", 4, 2, args.seed)
    ref = library.furnace_derivative(0.5, 1.0, 2)
    err = abs(float(img.data.mean()) - ref) / ref
    print(f"furnace d=2: {img.data.mean():.6f} vs closed form {ref:.6f} ({err:.2e} relative)")
    out = _out_path(args, "gi_rays.csv")
    _write_csv(out, ["depth", "rays_per_camera_sample", "rays_per_shading_point"], rows)
    return OK if res < 0.05 and err < 0.01 else FAILED


# per-setup defaults: (kind, iterations, spp, step, light MIS)
INVREND_DEFAULTS = {"logo": ("pos", 100, 4, 0.02, False),
                    "aniso": ("prod", 200, 8, 0.01, True)}


def cmd_invrend(args):
    from .invrend import OptimizationDiverged, optimize, setup
    if args.setup not in INVREND_DEFAULTS:
        raise UsageError(f"unknown inverse-rendering setup {args.setup!r} (logo, aniso)")
    d_kind, d_iters, d_spp, d_step, d_mis = INVREND_DEFAULTS[args.setup]
    kind = args.kind or d_kind
    iters = d_iters if args.iterations is None else args.iterations
    spp = args.spp or d_spp
    step = args.step or d_step
    mis = d_mis if args.mis_light is None else args.mis_light
    scenes, targets, binds, truth = setup(args.setup, args.res, args.init, args.seed)
    try:
        res = optimize(scenes, targets, binds, kind, iters, args.seed, spp, step, truth,
                       args.threads, mis)
    except OptimizationDiverged as exc:
        print(f"diverged: {exc}")
        return FAILED
    for k, tr in res.l1_trace.items():
        print(f"{k}: L1 {tr[0]:.5f} -> {tr[-1]:.5f}")
    print(f"loss {res.loss_trace[0]:.5g} -> {res.loss_trace[-1]:.5g}")
    out = _out_path(args, "invrend.csv")
    res.write_csv(out)
    for k, tex in res.textures.items():
        write_image(tex.values, out.with_name(f"{out.stem}_{k.replace('.', '_')}.pfm"))
    finite = _all_finite(res.loss_trace) and all(_all_finite(t.values)
                                                  for t in res.textures.values())
    return OK if finite else FAILED


def cmd_demo_1d(args):
    if args.sigma <= 0:
        raise UsageError("--sigma must be positive")
    est = gaussian_demo(args.sigma, args.runs, args.seed)
    rows = [(k, float(v.mean()), float(v.var())) for k, v in est.items()]
    print(f"{'estimator':20s} {'mean':>12s} {'variance':>12s}")
    for k, m, v in rows:
        print(f"{k:20s} {m:12.6g} {v:12.6g}")
    out = _out_path(args)
    if out:
        _write_csv(out, ["estimator", "mean", "variance"], rows)
    return OK if _all_finite([r[2] for r in rows]) else FAILED


# ---------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None)


def _selection(p):
    p.add_argument("--all", action="store_true", help="every registered derivative")
    p.add_argument("--model")
    p.add_argument("--param")


def build_parser():
    ap = argparse.ArgumentParser(prog="brdfgrad", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pdf-check", help="quadrature normalization of every lobe")
    _selection(p)
    _common(p)
    p.set_defaults(fn=cmd_pdf_check)

    p = sub.add_parser("chi2", help="chi-square tests of the lobe samplers")
    _selection(p)
    p.add_argument("--samples", type=int, default=10 ** 6)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--verbose", action="store_true")
    _common(p)
    p.set_defaults(fn=cmd_chi2)

    p = sub.add_parser("pdf-dump", help="tabulate one lobe pdf to CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--params", default="")
    p.add_argument("--lobe", type=int, default=0)
    p.add_argument("--wo", default=None, help="x,y,z")
    p.add_argument("--n-theta", type=int, default=64)
    p.add_argument("--n-phi", type=int, default=128)
    _common(p)
    p.set_defaults(fn=cmd_pdf_dump)

    p = sub.add_parser("grad-check", help="derivatives against central differences")
    _selection(p)
    p.add_argument("--configs", type=int, default=100)
    _common(p)
    p.set_defaults(fn=cmd_grad_check)

    for name, fn, hlp in (("grad-image", cmd_grad_image, "render a derivative image"),
                          ("variance-bench", cmd_variance_bench, "per-pixel variance ratios")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--scene", required=True, help="scene JSON or builtin:NAME")
        p.add_argument("--target", required=True, help="object.param")
        if name == "grad-image":
            p.add_argument("--kind", default="brdf")
            p.add_argument("--spp", type=int, default=9)
            p.add_argument("--mis-lobes", action="store_true")
        else:
            p.add_argument("--kinds", required=True, help="comma list, baseline first")
            p.add_argument("--spp", type=int, default=9)
            p.add_argument("--runs", type=int, default=50)
        p.add_argument("--max-depth", type=int, default=1)
        p.add_argument("--mis-light", action="store_true")
        _common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("gi-bench", help="ray counts and furnace check for the GI integrator")
    p.add_argument("--max-depth", type=int, default=6)
    p.add_argument("--spp", type=int, default=1)
    _common(p)
    p.set_defaults(fn=cmd_gi_bench)

    p = sub.add_parser("invrend", help="texture recovery by gradient descent")
    p.add_argument("--setup", default="logo", help="logo or aniso")
    p.add_argument("--kind", default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--spp", type=int, default=None)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--res", type=int, default=32)
    p.add_argument("--init", type=float, default=None)
    p.add_argument("--mis-light", action=argparse.BooleanOptionalAction, default=None)
    _common(p)
    p.set_defaults(fn=cmd_invrend)

    p = sub.add_parser("demo-1d", help="1D Gaussian sign-variance demo")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--runs", type=int, default=10000)
    _common(p)
    p.set_defaults(fn=cmd_demo_1d)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return OK if exc.code == 0 else USAGE
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return USAGE
    try:
        _out_path(args)
        return args.fn(args)
    except (UsageError, ConfigError, ImageError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


def main():  # pragma: no cover - console script
    sys.exit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
