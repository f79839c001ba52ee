"""Batch command-line front end.

Subcommands: build, eval, audit, rate-study, manifold-study, risk-study,
adv-study, net-io.  Exit codes: 0 success, 1 failed acceptance check,
2 configuration error.
"""

import argparse
import json
import math
import os
import sys

from pathlib import Path

import numpy as np

from . import serialize
from .netcore import resnet_forward_batch
from .studies import ConfigError, run_study, validate_config, write_json
from .targets import get_target
from .taylor import build_euclidean


def _load_config(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("SOBOLEV_FORGE_THREADS")
    return int(env) if env else 1


def cmd_build(args):
    cfg = _load_config(args.config)
    allowed = {"target", "alpha", "dim", "N", "Mt", "Jt", "compile", "seed"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown build config keys {sorted(unknown)}")
    for key in ("target", "alpha"):
        if key not in cfg:
            raise ConfigError(f"build config missing required key {key!r}")
    target = get_target(cfg["target"], alpha=cfg["alpha"], dim=cfg.get("dim", 2))
    approx = build_euclidean(
        target,
        s=0,
        p=math.inf,
        Mt=cfg.get("Mt"),
        Jt=cfg.get("Jt"),
        N=cfg.get("N"),
        compile_model=cfg.get("compile", True),
        seed=args.seed if args.seed is not None else cfg.get("seed", 0),
    )
    out = Path(args.out or "build-out")
    out.mkdir(parents=True, exist_ok=True)
    record = dict(approx.record)
    record["target"] = target.name
    if approx.model is not None:
        serialize.save(out / "model.json", approx.model)
        record["model"] = "model.json"
        record["class_params"] = vars(approx.class_params)
    write_json(out / "coeffs.json", approx.coeffs.to_json_dict())
    write_json(out / "record.json", record)
    print(f"built {target.name}: N={approx.N} eta={approx.eta:.3e} -> {out}")
    return 0


def cmd_eval(args):
    net = serialize.load(args.net)
    if args.at:
        X = np.array([[float(t) for t in point.split(",")] for point in args.at])
    else:
        axis = (np.arange(args.grid) + 0.5) / args.grid
        mesh = np.meshgrid(*([axis] * net.input_dim), indexing="ij")
        X = np.stack([m.ravel() for m in mesh], axis=1)
    vals = resnet_forward_batch(net, X)
    lines = [",".join(["x%d" % i for i in range(net.input_dim)] + ["value"])]
    for x, v in zip(X, vals):
        lines.append(",".join(repr(float(t)) for t in x) + "," + repr(float(v)))
    text = "\n".join(lines) + "\n"
    if args.out:
        serialize.atomic_write_text(Path(args.out) / "eval.csv", text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_audit(args):
    from .netcore import audit_class

    params = audit_class(serialize.load(args.net))
    doc = {
        "kind": "audit",
        "net": args.net,
        "M": params.M,
        "L": params.L,
        "J": params.J,
        "K": params.K,
        "kappa1": params.kappa1,
        "kappa2": params.kappa2,
        "first_row_only": params.first_row_only,
        "pass": True,
    }
    if args.out:
        write_json(Path(args.out) / "audit.json", doc)
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_net_io(args):
    if args.mode == "copy":
        if not args.dest:
            raise ConfigError("net-io copy needs --dest")
        serialize.save(args.dest, serialize.load(args.net))
        return 0
    obj = serialize.load(args.net)
    doc1 = serialize.to_dict(obj)
    doc2 = serialize.to_dict(serialize.from_dict(json.loads(json.dumps(doc1))))
    if doc1 != doc2:
        print("roundtrip mismatch", file=sys.stderr)
        return 1
    print(f"roundtrip ok: {args.net}")
    return 0


def _study_command(kind):
    def run(args):
        doc = _load_config(args.config)
        doc.setdefault("kind", kind)
        if doc["kind"] != kind:
            raise ConfigError(f"config kind {doc['kind']!r} does not match subcommand {kind!r}")
        if args.seed is not None:
            doc["seed"] = args.seed
        validate_config(doc)
        code, summary = run_study(doc, args.out or "study-out", threads=_threads(args))
        status = "PASS" if code == 0 else "FAIL"
        print(f"[{status}] {kind} -> {args.out or 'study-out'}")
        for key in ("slope_k0", "slope_k1", "success_fraction", "theoretical_floor"):
            if key in summary:
                print(f"  {key} = {summary[key]}")
        return code

    return run


def _shared_flags(for_subcommand):
    # Subcommand copies suppress their defaults so they never clobber values
    # parsed from the flags' pre-subcommand position.
    default = argparse.SUPPRESS if for_subcommand else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default, help="override config seed")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--threads", type=int, default=default,
                   help="worker threads (or SOBOLEV_FORGE_THREADS)")
    return p


def main(argv=None):
    shared = _shared_flags(for_subcommand=True)
    top = argparse.ArgumentParser(
        prog="sobolev-forge", description=__doc__, parents=[_shared_flags(False)]
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[shared],
                       help="compile a registry target into a network")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("eval", parents=[shared], help="evaluate a saved network")
    p.add_argument("--net", required=True)
    p.add_argument("--at", action="append", help="point as comma-separated floats")
    p.add_argument("--grid", type=int, default=11)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("audit", parents=[shared],
                       help="report class parameters of a saved network")
    p.add_argument("--net", required=True)
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("net-io", parents=[shared], help="serialization roundtrip utilities")
    p.add_argument("mode", choices=["check", "copy"])
    p.add_argument("--net", required=True)
    p.add_argument("--dest", default=None)
    p.set_defaults(fn=cmd_net_io)

    for kind, name in [
        ("euclidean-rate", "rate-study"),
        ("manifold-rate", "manifold-study"),
        ("risk", "risk-study"),
        ("adversarial", "adv-study"),
    ]:
        p = sub.add_parser(name, parents=[shared],
                           help=f"run a {kind} study from a config file")
        p.add_argument("--config", required=True)
        p.set_defaults(fn=_study_command(kind))

    args = top.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except serialize.SerializationError as e:
        print(f"network file error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
