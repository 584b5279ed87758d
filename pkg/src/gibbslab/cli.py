"""Command-line entry point: ``gibbslab {spectral,sample,run,report}``.

Exit codes: 0 success, 1 failed acceptance flags, 2 configuration or input
error, 3 numerical non-convergence.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib as tomli
else:  # pragma: no cover
    import tomli

from . import __version__
from .errors import ConfigError, DomainError, GibbsLabError, NumericError, ResourceError
from .experiments import DEFAULTS, ExperimentConfig, run
from .markov import markov_from_equilibrium, sample_paths, write_paths
from .potentials import potential_from_config
from .transfer import solve

log = logging.getLogger("gibbslab")

SPECTRAL_KEYS = {"potential", "depth", "tol", "max_iter"}
SAMPLE_KEYS = {"potential", "depth", "order", "length", "count", "seeds"}


# --------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    """Read a TOML or JSON config; a run manifest is unwrapped to its resolved config."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    text = p.read_text()
    try:
        if p.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomli.loads(text)
    except (json.JSONDecodeError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {p}: {exc}") from None
    if isinstance(data, dict) and "manifest_version" in data:
        return dict(data["config"])
    return data


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``dotted.key=value`` overrides; values are read as JSON when possible."""
    cfg = json.loads(json.dumps(cfg))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table value")
        node[parts[-1]] = _parse_value(raw)
    return cfg


def _strict(cfg: dict, allowed: set, what: str):
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {what} config: {sorted(unknown)}")


def _out_dir(args) -> Path:
    out = os.environ.get("GIBBSLAB_OUT") or args.out or "gibbslab-out"
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_manifest(out: Path, command: list, config: dict, outputs: dict, args) -> Path:
    manifest = {
        "manifest_version": 1,
        "gibbslab_version": __version__,
        "command": command,
        "config": config,
        "threads": args.threads,
        "outputs": outputs,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# --------------------------------------------------------------------------
# commands


def cmd_spectral(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.set)
    _strict(cfg, SPECTRAL_KEYS, "spectral")
    if "potential" not in cfg:
        raise ConfigError("spectral config needs a [potential] table")
    phi = potential_from_config(cfg["potential"])
    kw = {k: cfg[k] for k in ("tol", "max_iter") if k in cfg}
    S = solve(phi, cfg.get("depth"), **kw)
    out = _out_dir(args)
    S.write(out / "spectral.json", out / "mu.csv")
    cfg.setdefault("depth", S.depth)
    write_manifest(out, ["spectral"], cfg, {"json": str(out / "spectral.json"), "csv": str(out / "mu.csv")}, args)
    print(f"pressure={S.pressure!r} lambda={S.lam!r} residual={S.residual:.3e} depth={S.depth}")
    return 0


def cmd_sample(args) -> int:
    cfg = apply_overrides(load_config(args.config), args.set)
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    _strict(cfg, SAMPLE_KEYS, "sample")
    phi = potential_from_config(cfg.get("potential", {"kind": "bernoulli", "probs": [0.5, 0.5]}))
    depth, order = int(cfg.get("depth", 8)), int(cfg.get("order", 0))
    if order + 1 > depth:
        raise ConfigError(f"order {order} needs depth >= {order + 1}")
    model = markov_from_equilibrium(solve(phi, depth), order)
    length, count = int(cfg.get("length", 1000)), int(cfg.get("count", 1))
    seeds = cfg.get("seeds", [0])
    out = _out_dir(args)
    path = out / "paths.txt"
    with path.open("w") as fh:
        for s in seeds:
            write_paths(sample_paths(model, length, count, int(s)), fh, model.alphabet)
    write_manifest(out, ["sample"], cfg, {"paths": str(path)}, args)
    print(f"wrote {len(seeds) * count} path(s) of length {length} to {path}")
    return 0


def cmd_run(args) -> int:
    raw = apply_overrides(load_config(args.config), args.set)
    if args.experiment not in DEFAULTS:
        raise ConfigError(f"unknown experiment {args.experiment!r}; expected one of {sorted(DEFAULTS)}")
    if raw.get("experiment", args.experiment) != args.experiment:
        raise ConfigError(f"config is for experiment {raw['experiment']!r}, not {args.experiment!r}")
    raw["experiment"] = args.experiment
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    cfg = ExperimentConfig.from_dict(raw)
    result = run(cfg)
    out = _out_dir(args)
    paths = result.write(out)
    resolved = cfg.resolved()
    resolved.pop("out", None)
    write_manifest(out, ["run", args.experiment], resolved, paths, args)
    for name, ok in result.flags.items():
        print(f"{'PASS' if ok else 'FAIL'} {args.experiment}:{name}")
    return 0 if result.passed else 1


def cmd_report(args) -> int:
    out = Path(args.dir or os.environ.get("GIBBSLAB_OUT") or args.out or "gibbslab-out")
    summaries = sorted(out.glob("**/*.json"))
    rows, failed = [], False
    for p in summaries:
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError:
            continue
        if not isinstance(data, dict) or "flags" not in data:
            continue
        if "provenance" not in data:
            log.warning("skipping unprovenanced table %s", p)
            continue
        for name, ok in data["flags"].items():
            rows.append((data["experiment"], name, bool(ok), str(p)))
            failed |= not ok
    if not rows:
        raise ConfigError(f"no experiment summaries found under {out}")
    lines = ["experiment,flag,passed,source"] + [f"{e},{n},{int(ok)},{src}" for e, n, ok, src in rows]
    (out / "report.csv").write_text("\n".join(lines) + "\n")
    for e, n, ok, _ in rows:
        print(f"{'PASS' if ok else 'FAIL'} {e}:{n}")
    return 1 if failed else 0


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file (a manifest.json re-runs that run)")
    common.add_argument("--out", help="output directory (GIBBSLAB_OUT overrides)")
    common.add_argument("--seed", type=int, help="replace the configured seeds by this one")
    common.add_argument("--threads", type=int, default=1, help="worker cap (recorded in the manifest)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted-key override, repeatable")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="gibbslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectral", parents=[common], help="equilibrium state of a potential").set_defaults(func=cmd_spectral)
    sub.add_parser("sample", parents=[common], help="sample Markov-approximation paths").set_defaults(func=cmd_sample)
    p_run = sub.add_parser("run", parents=[common], help="run a named experiment")
    p_run.add_argument("experiment", help=", ".join(sorted(DEFAULTS)))
    p_run.set_defaults(func=cmd_run)
    p_rep = sub.add_parser("report", parents=[common], help="aggregate experiment flags")
    p_rep.add_argument("dir", nargs="?", help="directory holding experiment outputs")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, ResourceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numerical failure: {exc} (residual={exc.residual})", file=sys.stderr)
        return 3
    except GibbsLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
