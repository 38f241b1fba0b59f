"""Config loading/validation, deterministic CSV/JSON writers, small SVG plots
and the run manifest."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np
import yaml
from jsonschema import Draft7Validator

__all__ = [
    "ConfigError",
    "CONFIG_SCHEMA",
    "OUTPUT_ENV",
    "load_config",
    "validate_config",
    "apply_overrides",
    "write_json",
    "write_csv",
    "svg_scatter",
    "svg_heatmap",
    "sha256_file",
]

OUTPUT_ENV = "PLANAR_DEGEN_OUTPUT"

SCENARIOS = ["catalog", "classify", "transform", "solve", "diagnose", "counterexample", "certify"]


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_field = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"type": "string"},
        "params": {"type": "object"},
        "label": {"type": "string"},
        "chain": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["op"],
                "properties": {
                    "op": {"enum": ["modify", "mollify", "dual"]},
                    "M": _pos,
                    "eps": _pos,
                    "kernel_order": {"type": "integer", "minimum": 2},
                },
            },
        },
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario"],
    "properties": {
        "scenario": {"enum": SCENARIOS},
        "seed": {"type": "integer", "minimum": 0},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json", "svg"]}},
            },
        },
        "field": _field,
        "fields": {"type": "array", "items": _field},
        "mesh": {"type": "object", "additionalProperties": False, "properties": {"h": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5}}},
        "boundary": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["cos", "sin", "affine", "counterexample"]},
                "mode": {"type": "integer", "minimum": 0},
                "amplitude": _num,
                "coeffs": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": _pos,
                "max_iter": {"type": "integer", "minimum": 1},
                "strategy": {"enum": ["auto", "newton", "picard", "energy_descent"]},
                "eps_continuation": {"type": "array", "items": _pos},
            },
        },
        "thresholds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"lambda": _pos, "Lambda": _pos, "r": _pos, "M": _pos},
        },
        "scales": {"type": "array", "items": _pos, "minItems": 1},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "box": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
                "step": _pos,
                "n_dirs": {"type": "integer", "minimum": 16},
            },
        },
        "catalog": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"pairs": {"type": "integer", "minimum": 1}, "radius": _pos, "t": {"type": "array", "items": _pos}},
        },
        "transform": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"points": {"type": "integer", "minimum": 1}, "radius": _pos, "inner_radius": {"type": "number", "minimum": 0}, "tol": _pos},
        },
        "diagnose": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "deltas": {"type": "array", "items": _pos},
                "r": _pos,
                "maxmin_tolerance": _pos,
                "probe": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["xi0", "rho"],
                    "properties": {"xi0": _vec, "rho": _pos, "deltas": {"type": "array", "items": _pos}},
                },
                "cacciopoli": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"side": {"enum": ["O_lambda", "V_Lambda"]}, "threshold": _pos, "use_profile": {"type": "boolean"}},
                },
            },
        },
        "certify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grad_l2": _pos,
                "G_grad_l2": _pos,
                "c0": _pos,
                "c_iter": _pos,
                "safety": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "monotony_floor": _pos,
                "bad_centers": {"type": "array", "items": _vec},
                "modulus_samples": {"type": "integer", "minimum": 100},
            },
        },
        "counterexample": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"audit_points": {"type": "integer", "minimum": 1000}, "gamma_scale": _pos},
        },
    },
}

_REQUIRED_BY_SCENARIO = {
    "classify": ["field"],
    "transform": ["field"],
    "solve": ["field", "boundary"],
    "diagnose": ["field", "boundary"],
    "certify": ["field", "thresholds"],
}


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    errs = sorted(Draft7Validator(CONFIG_SCHEMA).iter_errors(cfg), key=lambda e: list(e.path))
    if errs:
        e = errs[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise ConfigError(f"{where}: {e.message}")
    for key in _REQUIRED_BY_SCENARIO.get(cfg["scenario"], []):
        if key not in cfg:
            raise ConfigError(f"scenario {cfg['scenario']!r} needs {key!r}")
    return cfg


def apply_overrides(cfg, overrides):
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars."""
    cfg = json.loads(json.dumps(cfg))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-mapping")
        node[parts[-1]] = yaml.safe_load(raw)
    return cfg


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return validate_config(apply_overrides(cfg or {}, overrides))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header, rows):
    path = Path(path)
    rows = np.asarray(rows, dtype=float)
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) for v in r) for r in rows.reshape(len(rows), -1)]
    path.write_text("\n".join(lines) + "\n")
    return path


def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def default_output_root():
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------


def _frame(pts, pad=0.05):
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = max(float((hi - lo).max()), 1e-12)
    c = (lo + hi) / 2
    return c - span * (0.5 + pad), span * (1 + 2 * pad)


def svg_scatter(path, pts, circles=(), size=480, title=""):
    """Scatter of plane points; ``circles`` is a list of (center, radius)."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    allp = [pts]
    for c, r in circles:
        c = np.asarray(c, dtype=float)
        allp.append(np.array([c - r, c + r]))
    lo, span = _frame(np.vstack(allp))

    def tx(p):
        return (p[..., 0] - lo[0]) / span * size, size - (p[..., 1] - lo[1]) / span * size

    X, Y = tx(pts)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    out.append(f'<rect width="{size}" height="{size}" fill="white"/>')
    if title:
        out.append(f'<text x="6" y="16" font-size="12" font-family="sans-serif">{title}</text>')
    for c, r in circles:
        cx, cy = tx(np.asarray(c, dtype=float))
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r / span * size:.2f}" fill="none" stroke="#c33"/>')
    for x, y in zip(X, Y):
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.2" fill="#246"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return Path(path)


def svg_heatmap(path, values, box, size=480, title="", log=True):
    """Cell heatmap of a 2D array over ``box`` (rows are y, increasing upward)."""
    v = np.asarray(values, dtype=float)
    if log:
        v = np.log10(np.clip(v, 1e-300, None))
    fin = np.isfinite(v)
    lo, hi = (float(v[fin].min()), float(v[fin].max())) if fin.any() else (0.0, 1.0)
    t = np.where(fin, (v - lo) / max(hi - lo, 1e-300), 0.0)
    ny, nx = v.shape
    cw, ch = size / nx, size / ny
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 20}">']
    for iy in range(ny):
        for ix in range(nx):
            s = t[iy, ix]
            r, g, b = int(255 * s), int(80 + 100 * (1 - abs(2 * s - 1))), int(255 * (1 - s))
            out.append(f'<rect x="{ix * cw:.2f}" y="{(ny - 1 - iy) * ch:.2f}" width="{cw:.2f}" height="{ch:.2f}" fill="rgb({r},{g},{b})"/>')
    label = f"{title} [{'log10 ' if log else ''}{lo:.3g}, {hi:.3g}] box={list(box)}"
    out.append(f'<text x="4" y="{size + 14}" font-size="11" font-family="sans-serif">{label}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
    return Path(path)
