"""Scenario runner: ``planar-degen run CONFIG [key=value ...]`` and
``planar-degen report DIR``."""
from __future__ import annotations

import argparse
import json
import platform
import sys
import time
import traceback
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .field_core import CATALOG_KINDS, FieldError, FieldSpec, make_catalog_field, modulus_of_monotony, monotonicity_gap
from .io import ConfigError, default_output_root, load_config, sha256_file, svg_heatmap, svg_scatter, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_AUDIT = 0, 2, 3, 4


class AuditFailure(RuntimeError):
    pass


class NumericalFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config helpers
# ---------------------------------------------------------------------------


def field_from_config(fc):
    spec = FieldSpec(fc["kind"], dict(fc.get("params", {})), fc.get("label", ""))
    try:
        f = make_catalog_field(spec)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad field parameters for {spec.kind}: {exc}") from exc
    except FieldError as exc:
        raise ConfigError(str(exc)) from exc
    chain = fc.get("chain", [])
    if chain:
        from .duality import apply_chain

        steps = []
        for st in chain:
            kw = {k: v for k, v in st.items() if k != "op"}
            if st["op"] == "modify" and "M" not in kw:
                raise ConfigError("modify needs M")
            if st["op"] == "mollify" and "eps" not in kw:
                raise ConfigError("mollify needs eps")
            steps.append((st["op"], kw))
        f = apply_chain(f, steps)
    return f


def boundary_from_config(bc):
    kind = bc["kind"]
    if kind in ("cos", "sin"):
        k, a = int(bc.get("mode", 1)), float(bc.get("amplitude", 1.0))
        trig = np.cos if kind == "cos" else np.sin
        return lambda t: a * trig(k * t)
    if kind == "affine":
        a, b, c = bc.get("coeffs", [1.0, 0.0, 0.0])
        return lambda t: a * np.cos(t) + b * np.sin(t) + c
    from .beltrami import build_counterexample

    B = build_counterexample()
    return lambda t: B.u(np.stack([np.cos(t), np.sin(t)], axis=-1))


def _solve_opts(cfg):
    from .solver import SolveOptions

    sc = cfg.get("solver", {})
    return SolveOptions(
        tol=sc.get("tol", 1e-10),
        max_iter=sc.get("max_iter", 60),
        strategy=sc.get("strategy", "auto"),
        eps_continuation=tuple(sc.get("eps_continuation", ())),
    )


def _grid(cfg, default_box=(-2, 2, -2, 2), default_step=0.1):
    g = cfg.get("grid", {})
    return tuple(g.get("box", default_box)), g.get("step", default_step), g.get("n_dirs", 16)


# ---------------------------------------------------------------------------
# scenarios; each returns (audits, summary) and writes files into out
# ---------------------------------------------------------------------------


def _audit(name, anchor, value, passed, tol=None):
    return {"name": name, "anchor": anchor, "value": value, "tol": tol, "passed": bool(passed)}


def run_catalog(cfg, out):
    cc = cfg.get("catalog", {})
    n, R = cc.get("pairs", 100_000), cc.get("radius", 5.0)
    ts = cc.get("t", [0.1, 0.5, 1.0])
    rng = np.random.default_rng(cfg.get("seed", 0))
    fields = cfg.get("fields") or ([cfg["field"]] if "field" in cfg else None)
    if fields is None:
        defaults = {"p_laplacian": {"p": 4}, "rotational_gm": {"m": 0.5}, "separable": {"f": "power:3", "g": "linear:1"}}
        fields = [{"kind": k, "params": defaults.get(k, {})} for k in CATALOG_KINDS if k != "composite"]
    audits, rows, summary = [], [], []
    for i, fc in enumerate(fields):
        f = field_from_config(fc)
        r = R * np.sqrt(rng.random((2, n)))
        th = 2 * np.pi * rng.random((2, n))
        a = np.stack([r[0] * np.cos(th[0]), r[0] * np.sin(th[0])], -1)
        b = np.stack([r[1] * np.cos(th[1]), r[1] * np.sin(th[1])], -1)
        gap = monotonicity_gap(f, a, b)
        om = [modulus_of_monotony(f, t, R, samples=20_000, seed=cfg.get("seed", 0)) for t in ts]
        rows.append([i, float(gap.min())] + [float(o) for o in om])
        summary.append({"field": f.label, "min_gap": float(gap.min()), "modulus": dict(zip(map(str, ts), om))})
        audits.append(_audit(f"gap > 0: {f.label}", "strict monotonicity", float(gap.min()), gap.min() > 0))
    write_csv(out / "catalog.csv", ["index", "min_gap"] + [f"omega@{t:g}" for t in ts], rows)
    write_json(out / "catalog.json", summary)
    return audits, {"fields": [s["field"] for s in summary]}


def run_classify(cfg, out):
    from .classify import detect_bad_set, sample_ellipticity, stilde_inclusion_audit

    f = field_from_config(cfg["field"])
    box, step, nd = _grid(cfg)
    scales = cfg.get("scales", [1e-1, 1e-2, 1e-3])
    prof = sample_ellipticity(f, box, step, scales, n_dirs=nd)
    th = cfg.get("thresholds", {})
    comps = detect_bad_set(prof, th.get("lambda", 0.05), th.get("Lambda", 20.0))
    write_csv(out / "profile.csv", prof.header(), prof.rows())
    bad = [{"center": c.center.tolist(), "size": int(c.size)} for c in comps]
    st = stilde_inclusion_audit(f, box, profile=prof) if len(scales) >= 2 else None
    res = {"field": f.label, "n_components": len(comps), "components": bad}
    if st is not None:
        res["stilde_audit"] = {k: v for k, v in st.items() if k != "profile"}
    write_json(out / "bad_set.json", res)
    if "svg" in cfg.get("output", {}).get("formats", ["csv", "json", "svg"]):
        svg_heatmap(out / "lambda_hat.svg", prof.lambda_hat, box, title=f"lambda_hat {f.label}")
        svg_heatmap(out / "Lambda_hat.svg", prof.Lambda_hat, box, title=f"Lambda_hat {f.label}")
    audits = []
    if st is not None:
        audits.append(_audit("S-tilde inside S", "symmetric-side blow-up implies singular-side blow-up", len(st["violations"]), not st["violations"]))
    return audits, {"n_components": len(comps), "centers": [b["center"] for b in bad]}


def run_transform(cfg, out):
    from .duality import dual_field

    f = field_from_config(cfg["field"])
    tc = cfg.get("transform", {})
    n, R, r0, tol = tc.get("points", 1000), tc.get("radius", 2.0), tc.get("inner_radius", 0.0), tc.get("tol", 1e-8)
    rng = np.random.default_rng(cfg.get("seed", 0))
    r = np.sqrt(r0**2 + (R**2 - r0**2) * rng.random(n))
    t = 2 * np.pi * rng.random(n)
    xi = np.stack([r * np.cos(t), r * np.sin(t)], -1)
    d = dual_field(f)
    g = f(xi)
    ig = np.stack([-g[:, 1], g[:, 0]], -1)
    back = d(ig)
    rec = np.stack([back[:, 1], -back[:, 0]], -1)  # -i * back
    err = np.linalg.norm(rec - xi, axis=1)
    write_csv(out / "round_trip.csv", ["x", "y", "err"], np.column_stack([xi, err]))
    write_json(out / "transform.json", {"field": f.label, "dual": d.label, "max_err": float(err.max())})
    return [_audit("dual round trip", "-i G*(i G(xi)) = xi", float(err.max()), err.max() <= tol, tol)], {"max_err": float(err.max())}


def _solve(cfg):
    from .mesh import build_disc_mesh
    from .solver import SolverError, solve_dirichlet

    f = field_from_config(cfg["field"])
    dom = build_disc_mesh(cfg.get("mesh", {}).get("h", 1 / 16))
    try:
        u, rep = solve_dirichlet(f, dom, boundary_from_config(cfg["boundary"]), _solve_opts(cfg))
    except SolverError as exc:
        raise NumericalFailure(str(exc)) from exc
    return f, dom, u, rep


def run_solve(cfg, out):
    from .solver import reconstruct_conjugate

    f, dom, u, rep = _solve(cfg)
    _, defect = reconstruct_conjugate(f, u)
    write_csv(out / "solution.csv", ["x", "y", "u"], np.column_stack([dom.points, u.values]))
    info = {**rep.to_dict(), "field": f.label, "mesh_hash": dom.content_hash(), "curl_defect": defect}
    write_json(out / "solve_report.json", info)
    if "svg" in cfg.get("output", {}).get("formats", ["csv", "json", "svg"]):
        svg_scatter(out / "gradient_cloud.svg", u.gradient, title=f"grad u_h {f.label}")
    summary = {"residual": rep.residual_norm, "iterations": rep.iterations, "lipschitz": rep.lipschitz_estimate}
    return [_audit("solver converged", "discrete weak residual", rep.residual_norm, True)], summary


def run_diagnose(cfg, out):
    from .diagnostics import cacciopoli_ratio, gradient_image, localization_probe, maxmin_check

    f, dom, u, rep = _solve(cfg)
    dc = cfg.get("diagnose", {})
    deltas = dc.get("deltas", [0.05, 0.1, 0.2, 0.4])
    imgs = [gradient_image(u, d) for d in deltas]
    write_csv(out / "gradient_image.csv", ["delta", "diameter", "n_points"], [[i.radius, i.diameter, len(i.points)] for i in imgs])
    mm = maxmin_check(u, dc.get("r", 0.5))
    tol = dc.get("maxmin_tolerance", 0.05)
    res = {"field": f.label, "solve": rep.to_dict(), "maxmin": mm}
    cc = dc.get("cacciopoli")
    if cc is not None:
        prof = None
        if cc.get("use_profile", False):
            from .classify import sample_ellipticity

            box, step, nd = _grid(cfg)
            prof = sample_ellipticity(f, box, step, cfg.get("scales", [1e-1, 1e-2, 1e-3]), n_dirs=nd)
        res["cacciopoli"] = cacciopoli_ratio(u, f, cc.get("side", "O_lambda"), cc.get("threshold", 1.0), prof).to_dict()
    pc = dc.get("probe")
    if pc is not None:
        pr = localization_probe(u, f, pc["xi0"], pc["rho"], pc.get("deltas", deltas))
        res["probe"] = pr
        write_csv(out / "probe.csv", ["delta", "class_code", "diameter"],
                  [[r["delta"], {"inside": 0, "outside": 1, "mixed": 2}[r["class"]], r["diameter"]] for r in pr["table"]])
        if "svg" in cfg.get("output", {}).get("formats", ["csv", "json", "svg"]):
            x0, rho = pc["xi0"], pc["rho"]
            svg_scatter(out / "probe.svg", imgs[-1].points, circles=[(x0, rho), (x0, 3 * rho), (x0, 4 * rho)], title="grad u(B_delta)")
    write_json(out / "diagnostics.json", res)
    audits = [_audit("max/min principle", "image boundary attained on the circle", mm["fraction"], mm["fraction"] < tol, tol)]
    return audits, {"diameters": {str(i.radius): i.diameter for i in imgs}, "maxmin_fraction": mm["fraction"]}


def run_counterexample(cfg, out):
    from .beltrami import build_counterexample, counterexample_audits, counterexample_stilde_audit

    cc = cfg.get("counterexample", {})
    B = build_counterexample(cc.get("audit_points", 100_000))
    rows = counterexample_audits(B, gamma_scale=cc.get("gamma_scale", 1e-4))
    write_json(out / "counterexample_audit.json", {"audits": rows, "profile": B.audit, "stilde": counterexample_stilde_audit(B)})
    th = np.linspace(0, 2 * np.pi, 721)
    write_csv(out / "gradient_curve.csv", ["theta", "du_dx", "du_dy"], np.column_stack([th, B.grad_u(np.stack([np.cos(th), np.sin(th)], -1))]))
    return rows, {"passed": sum(r["passed"] for r in rows), "total": len(rows)}


def run_certify(cfg, out):
    from .classify import build_covering, certified_radius, detect_bad_set, sample_ellipticity

    f = field_from_config(cfg["field"])
    th = cfg["thresholds"]
    for k in ("lambda", "Lambda", "r", "M"):
        if k not in th:
            raise ConfigError(f"certify needs thresholds.{k}")
    M, r = th["M"], th["r"]
    box, step, nd = _grid(cfg, default_box=(-2.2 * M, 2.2 * M, -2.2 * M, 2.2 * M), default_step=0.05)
    prof = sample_ellipticity(f, box, step, cfg.get("scales", [1e-1, 1e-2, 1e-3]), n_dirs=nd)
    cc = cfg.get("certify", {})
    if "bad_centers" in cc:
        centers = np.asarray(cc["bad_centers"], dtype=float).reshape(-1, 2)
    else:
        centers = np.array([c.center for c in detect_bad_set(prof, th["lambda"], th["Lambda"])]).reshape(-1, 2)
    cov = build_covering(prof, M, r, th["lambda"], th["Lambda"], centers)
    floor = cc.get("monotony_floor")
    if floor is None:
        ts = np.linspace(cov.eta / 4, M + cov.eta, 6)
        ns = cc.get("modulus_samples", 20_000)
        floor = float(min(modulus_of_monotony(f, t, 2 * M + cov.eta, samples=ns, seed=cfg.get("seed", 0)) / t for t in ts))
    rc = certified_radius(cov, cc.get("grad_l2", 1.0), cc.get("G_grad_l2", 1.0), cc.get("c0", 1.0), cc.get("c_iter", 1.0), floor, cc.get("safety", 0.5))
    write_json(out / "covering.json", cov.to_dict())
    write_json(out / "certificate.json", rc.to_dict())
    audits = [_audit("covering", "B_2M covered with positive Lebesgue number", cov.eta, cov.eta > 0),
              _audit("radius positive", "log delta finite", rc.log_delta_final, np.isfinite(rc.log_delta_final))]
    return audits, {"eta": cov.eta, "K": rc.K, "log_delta_single": rc.log_delta_single, "log_delta_final": rc.log_delta_final}


SCENARIOS = {
    "catalog": run_catalog,
    "classify": run_classify,
    "transform": run_transform,
    "solve": run_solve,
    "diagnose": run_diagnose,
    "counterexample": run_counterexample,
    "certify": run_certify,
}


# ---------------------------------------------------------------------------
# run / report
# ---------------------------------------------------------------------------


def _versions():
    return {"package": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def resolve_output(cfg, config_path=None):
    d = cfg.get("output", {}).get("dir")
    if d is None:
        stem = Path(config_path).stem if config_path else cfg["scenario"]
        return default_output_root() / stem
    d = Path(d)
    return d if d.is_absolute() else default_output_root() / d


def run(cfg, out_dir):
    """Run one validated scenario; always writes ``manifest.json``. Returns the exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest = {"config": cfg, "versions": _versions(), "scenario": cfg.get("scenario"), "errors": [], "audits": []}
    code = EXIT_OK
    try:
        audits, summary = SCENARIOS[cfg["scenario"]](cfg, out)
        manifest["audits"] = audits
        manifest["summary"] = summary
        if not all(a["passed"] for a in audits):
            code = EXIT_AUDIT
            manifest["errors"].append({"kind": "audit", "failed": [a["name"] for a in audits if not a["passed"]]})
    except ConfigError as exc:
        code = EXIT_CONFIG
        manifest["errors"].append({"kind": "config", "message": str(exc)})
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        code = EXIT_NUMERIC
        manifest["errors"].append({"kind": "numerical", "message": str(exc), "trace": traceback.format_exc(limit=3)})
    manifest["exit_code"] = code
    manifest["wall_time"] = time.perf_counter() - t0
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest["files"] = [{"name": p.name, "sha256": sha256_file(p)} for p in files]
    write_json(out / "manifest.json", manifest)
    return code


def report(bundle_dir):
    """Human-readable summary of a run directory."""
    path = Path(bundle_dir) / "manifest.json"
    try:
        man = json.loads(path.read_text())
        scen = man["scenario"]
        audits = man["audits"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"missing or corrupt manifest in {bundle_dir}: {exc}") from exc
    lines = [f"scenario: {scen}   exit code: {man.get('exit_code')}", ""]
    if audits:
        w = max(len(a["name"]) for a in audits)
        lines.append(f"{'audit':<{w}}  result  anchor")
        for a in audits:
            lines.append(f"{a['name']:<{w}}  {'PASS' if a['passed'] else 'FAIL':<6}  {a.get('anchor', '')}")
    s = man.get("summary", {})
    if scen == "classify" and s:
        lines.append(f"bad-set components: {s['n_components']}")
        for c in s["centers"]:
            lines.append(f"  center ({c[0]:.3f}, {c[1]:.3f})")
    elif scen in ("solve", "diagnose") and s:
        for k, v in s.items():
            lines.append(f"{k}: {v}")
    elif s:
        lines.append(json.dumps(s, sort_keys=True))
    for e in man.get("errors", []):
        lines.append(f"error [{e['kind']}]: {e.get('message', e.get('failed'))}")
    return "\n".join(lines)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="planar-degen", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("overrides", nargs="*", help="key=value overrides (dotted keys)")
    r.add_argument("--out", help="output directory (default from config / environment)")
    p = sub.add_parser("report", help="summarise a run directory")
    p.add_argument("bundle")
    args = ap.parse_args(argv)
    if args.cmd == "report":
        try:
            print(report(args.bundle))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        out = Path(args.out) if args.out else default_output_root() / Path(args.config).stem
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "manifest.json", {"config_path": str(args.config), "exit_code": EXIT_CONFIG, "scenario": None,
                                           "audits": [], "errors": [{"kind": "config", "message": str(exc)}], "files": []})
        return EXIT_CONFIG
    out = Path(args.out) if args.out else resolve_output(cfg, args.config)
    code = run(cfg, out)
    print(report(out))
    return code


if __name__ == "__main__":
    sys.exit(main())
