"""Study runner: schema-validated configs in, CSV/JSON/SVG artifacts out.

Every study is reproducible from (config, seed): reruns produce identical
CSV bytes.  Pass/fail logic reads only the computed values; the SVG plots
are presentation-only.
"""

import json
import math

from pathlib import Path

from . import serialize
from .metrics import EvalGrid, fit_loglog_slope, grid_norm
from .netcore import audit_class
from .manifold import build_atlas, build_manifold_approx, manifold_norm
from .risk import RiskConfig, adversarial_gap_check, empirical_residual_study
from .targets import get_manifold_target, get_target
from .taylor import build_euclidean


class ConfigError(ValueError):
    """Raised for malformed study configurations (CLI exit code 2)."""


STUDY_KINDS = ("euclidean-rate", "manifold-rate", "risk", "adversarial", "audit")

_SCHEMAS = {
    "euclidean-rate": {
        "required": {"target", "alpha", "N_list"},
        "optional": {
            "dim": 2,
            "p": "inf",
            "grid": 61,
            "slope_window_k0": None,
            "slope_window_k1": None,
        },
    },
    "manifold-rate": {
        "required": {"target", "alpha", "N_list"},
        "optional": {
            "ambient_dim": 3,
            "r": None,
            "resolution": 40,
            "slope_window_k0": None,
            "slope_window_k1": None,
            "separation_slope": -1.2,
        },
    },
    "risk": {
        "required": {"target", "alpha", "N"},
        "optional": {"dim": 2, "n": 2000, "sigma": 0.2, "eps": 0.1, "reps": 200},
    },
    "adversarial": {
        "required": {"target", "alpha", "N"},
        "optional": {"dim": 2, "n_data": 200, "deltas": [0.01, 0.02, 0.05], "eps": None},
    },
    "audit": {"required": {"net"}, "optional": {}},
}


def validate_config(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    kind = doc.get("kind")
    if kind not in STUDY_KINDS:
        raise ConfigError(f"missing or unknown study kind {kind!r}; known: {STUDY_KINDS}")
    schema = _SCHEMAS[kind]
    allowed = schema["required"] | set(schema["optional"]) | {"kind", "seed"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)} for kind {kind!r}")
    missing = schema["required"] - set(doc)
    if missing:
        raise ConfigError(f"missing required config keys {sorted(missing)} for kind {kind!r}")
    out = dict(doc)
    for key, default in schema["optional"].items():
        out.setdefault(key, default)
    out.setdefault("seed", 0)
    return out


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    serialize.atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: Path, doc):
    serialize.atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_svg_loglog(path: Path, series, title, xlabel="N", ylabel="error"):
    """Minimal hand-rolled log-log plot: axes, ticks, one polyline per series."""
    W, H, M = 480, 360, 50
    xs_all = [x for pts, _ in series.values() for x in pts]
    ys_all = [y for _, pts in series.values() for y in pts]
    lx0, lx1 = math.log10(min(xs_all)), math.log10(max(xs_all))
    ly0, ly1 = math.log10(min(ys_all)), math.log10(max(ys_all))
    lx1 = lx1 if lx1 > lx0 else lx0 + 1
    ly1 = ly1 if ly1 > ly0 else ly0 + 1

    def px(x):
        return M + (math.log10(x) - lx0) / (lx1 - lx0) * (W - 2 * M)

    def py(y):
        return H - M - (math.log10(y) - ly0) / (ly1 - ly0) * (H - 2 * M)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{M}" y1="{H-M}" x2="{W-M}" y2="{H-M}" stroke="black"/>',
        f'<line x1="{M}" y1="{M}" x2="{M}" y2="{H-M}" stroke="black"/>',
        f'<text x="{W/2}" y="{H-10}" text-anchor="middle" font-size="11">{xlabel} (log)</text>',
        f'<text x="14" y="{H/2}" font-size="11" transform="rotate(-90 14 {H/2})" '
        f'text-anchor="middle">{ylabel} (log)</text>',
    ]
    for i, (label, (xs, ys)) in enumerate(sorted(series.items())):
        color = colors[i % len(colors)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{W-M+4}" y="{M+14*i+10}" font-size="10" fill="{color}">{label}</text>'
        )
    for x in sorted(set(xs_all)):
        parts.append(
            f'<text x="{px(x):.1f}" y="{H-M+14}" text-anchor="middle" font-size="9">{x:g}</text>'
        )
    parts.append("</svg>")
    serialize.atomic_write_text(path, "\n".join(parts))


def _window(cfg_value, nominal):
    if cfg_value is not None:
        return tuple(cfg_value)
    return (nominal - 0.6, nominal + 0.6)


def run_euclidean_rate(cfg, out: Path):
    alpha = cfg["alpha"]
    target = get_target(cfg["target"], alpha=alpha, dim=cfg["dim"])
    p = math.inf if cfg["p"] == "inf" else int(cfg["p"])
    grid = EvalGrid(target.dim, cfg["grid"])
    rows, errs = [], {0: [], 1: []}
    for N in cfg["N_list"]:
        ap = build_euclidean(target, s=0, p=p, N=int(N), compile_model=False)
        diff = lambda X: ap.eval(X) - target(X)
        for k in (0, 1):
            val = grid_norm(diff, k, p, grid)
            errs[k].append(val)
            rows.append(
                [target.name, N, int(N) ** target.dim, k, cfg["p"], val, cfg["grid"], cfg["seed"]]
            )
    slope0, _ = fit_loglog_slope(cfg["N_list"], errs[0])
    slope1, _ = fit_loglog_slope(cfg["N_list"], errs[1])
    w0 = _window(cfg["slope_window_k0"], -float(alpha))
    w1 = _window(cfg["slope_window_k1"], -float(alpha - 1))
    ok0, ok1 = w0[0] <= slope0 <= w0[1], w1[0] <= slope1 <= w1[1]
    summary = {
        "kind": "euclidean-rate",
        "target": target.name,
        "alpha": alpha,
        "N_list": list(cfg["N_list"]),
        "slope_k0": slope0,
        "slope_k1": slope1,
        "window_k0": list(w0),
        "window_k1": list(w1),
        "errors_k0": errs[0],
        "errors_k1": errs[1],
        "pass": bool(ok0 and ok1),
        "checks": {"slope_k0_in_window": ok0, "slope_k1_in_window": ok1},
    }
    write_csv(out / "rates.csv", ["target", "N", "MJ", "s_or_k", "p", "value", "grid", "seed"], rows)
    write_json(out / "summary.json", summary)
    write_svg_loglog(
        out / "rates.svg",
        {"W0": (cfg["N_list"], errs[0]), "W1": (cfg["N_list"], errs[1])},
        f"{target.name}: error vs N",
    )
    return (0 if summary["pass"] else 1), summary


def run_manifold_rate(cfg, out: Path):
    alpha = cfg["alpha"]
    mspec, target = get_manifold_target(cfg["target"], cfg["ambient_dim"], order=alpha)
    r = cfg["r"] if cfg["r"] is not None else 0.8 * mspec.reach / 4.0
    atlas = build_atlas(mspec, r)
    rows, errs = [], {0: [], 1: []}
    for N in cfg["N_list"]:
        ap = build_manifold_approx(target, mspec, N=int(N), atlas=atlas)
        diff = lambda X: ap.eval(X) - target(X)
        for k in (0, 1):
            val, _ = manifold_norm(diff, atlas, k, resolution=cfg["resolution"])
            errs[k].append(val)
            rows.append(
                [
                    mspec.name,
                    mspec.ambient_dim,
                    mspec.intrinsic_dim,
                    N,
                    k,
                    val,
                    atlas.chart_count,
                ]
            )
    slope0, _ = fit_loglog_slope(cfg["N_list"], errs[0])
    slope1, _ = fit_loglog_slope(cfg["N_list"], errs[1])
    w0 = _window(cfg["slope_window_k0"], -float(alpha))
    w1 = _window(cfg["slope_window_k1"], -float(alpha - 1))
    ok0, ok1 = w0[0] <= slope0 <= w0[1], w1[0] <= slope1 <= w1[1]
    sep = slope0 < cfg["separation_slope"]
    summary = {
        "kind": "manifold-rate",
        "target": target.name,
        "manifold": mspec.name,
        "alpha": alpha,
        "chart_count": atlas.chart_count,
        "N_list": list(cfg["N_list"]),
        "slope_k0": slope0,
        "slope_k1": slope1,
        "window_k0": list(w0),
        "window_k1": list(w1),
        "errors_k0": errs[0],
        "errors_k1": errs[1],
        "separation_slope": cfg["separation_slope"],
        "pass": bool(ok0 and ok1 and sep),
        "checks": {
            "slope_k0_in_window": ok0,
            "slope_k1_in_window": ok1,
            "intrinsic_rate_separated": sep,
        },
    }
    write_csv(out / "rates.csv", ["manifold", "D", "d", "N", "k", "error", "charts"], rows)
    write_json(out / "summary.json", summary)
    write_svg_loglog(
        out / "rates.svg",
        {"W0(M)": (cfg["N_list"], errs[0]), "W1(M)": (cfg["N_list"], errs[1])},
        f"{target.name} on {mspec.name}: error vs N",
    )
    return (0 if summary["pass"] else 1), summary


def run_risk(cfg, out: Path, threads=1):
    target = get_target(cfg["target"], alpha=cfg["alpha"], dim=cfg["dim"])
    ap = build_euclidean(target, s=0, p=math.inf, N=cfg["N"], compile_model=False)
    rc = RiskConfig(
        n=cfg["n"],
        sigma=cfg["sigma"],
        eps=cfg["eps"],
        reps=cfg["reps"],
        seed=cfg["seed"],
        threads=threads,
    )
    report = empirical_residual_study(rc, target, ap)
    report["kind"] = "risk"
    report["pass"] = bool(report["success_fraction"] >= report["theoretical_floor"])
    write_json(out / "summary.json", report)
    write_csv(
        out / "risk.csv",
        ["n", "sigma", "eps", "reps", "success_fraction", "theoretical_floor"],
        [
            [
                cfg["n"],
                cfg["sigma"],
                cfg["eps"],
                cfg["reps"],
                report["success_fraction"],
                report["theoretical_floor"],
            ]
        ],
    )
    return (0 if report["pass"] else 1), report


def run_adversarial(cfg, out: Path):
    target = get_target(cfg["target"], alpha=cfg["alpha"], dim=cfg["dim"])
    ap = build_euclidean(target, s=0, p=math.inf, N=cfg["N"], compile_model=False)
    eps = cfg["eps"]
    if eps is None:
        grid = EvalGrid(target.dim, 41)
        eps = grid_norm(lambda X: ap.eval(X) - target(X), 0, math.inf, grid) * 1.05
    rc = RiskConfig(eps=eps, deltas=tuple(cfg["deltas"]), seed=cfg["seed"])
    report = adversarial_gap_check(rc, target, ap, n_data=cfg["n_data"])
    report["kind"] = "adversarial"
    report["eps"] = eps
    report["pass"] = bool(report["all_ok"])
    write_json(out / "summary.json", report)
    write_csv(
        out / "gaps.csv",
        ["delta", "gap", "bound"],
        [[row["delta"], row["gap"], row["bound"]] for row in report["gap_table"]],
    )
    return (0 if report["pass"] else 1), report


def run_audit(cfg, out: Path):
    net = serialize.load(cfg["net"])
    params = audit_class(net)
    doc = {
        "kind": "audit",
        "net": cfg["net"],
        "M": params.M,
        "L": params.L,
        "J": params.J,
        "K": params.K,
        "kappa1": params.kappa1,
        "kappa2": params.kappa2,
        "first_row_only": params.first_row_only,
        "pass": True,
    }
    write_json(out / "summary.json", doc)
    return 0, doc


def run_study(doc, out_dir, threads=1):
    """Validate and execute one study; returns (exit_code, summary)."""
    cfg = validate_config(doc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg["kind"]
    if kind == "euclidean-rate":
        return run_euclidean_rate(cfg, out)
    if kind == "manifold-rate":
        return run_manifold_rate(cfg, out)
    if kind == "risk":
        return run_risk(cfg, out, threads=threads)
    if kind == "adversarial":
        return run_adversarial(cfg, out)
    return run_audit(cfg, out)
