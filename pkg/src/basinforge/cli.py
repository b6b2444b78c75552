"""Command line front end.

    basinforge --config run.toml [--pipeline NAME] [--seed N] [--horizon N]
               [--trains N] [--out DIR] [--slice SPEC] [--verify-only]
    basinforge --render DIR/summary.json

Exit status: 0 for ``ok`` and ``warning`` runs, 1 when a proof-derived
check fails, 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .errors import ConfigError, ContractError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def dumps(summary: dict) -> str:
    return json.dumps(_clean(summary), sort_keys=True, indent=1) + "\n"


def load_config(path: str | None, args: argparse.Namespace):
    from .pipelines import RunConfig

    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key in ("pipeline", "horizon", "trains", "out", "seed"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    if args.slice is not None:
        data["slice"] = args.slice
    if args.verify_only:
        data["verify_only"] = True
    if "sequence" not in data:
        raise ConfigError("no [sequence] table: pass --config")
    return RunConfig.from_dict(data)


def report_render(summary_path: str) -> str:
    """Text table of every check in a summary file."""
    try:
        summary = json.loads(Path(summary_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse summary {summary_path}: {exc}") from exc
    if not isinstance(summary, dict):
        raise ConfigError("summary must be a JSON object")
    lines = [f"pipeline: {summary.get('pipeline', '?')}   status: {summary.get('status', '?')}",
             f"{'check':48s} {'pass':5s} {'min slack':>12s} {'count':>7s}"]
    for group, body in sorted(summary.get("checks", {}).items()):
        if isinstance(body, dict) and "checks" in body:
            for c in body["checks"]:
                ms = c.get("min_slack")
                ms = f"{ms:12.4g}" if isinstance(ms, (int, float)) else f"{str(ms):>12s}"
                lines.append(f"{group + '.' + c['name']:48s} {'yes' if c['passed'] else 'NO':5s} {ms} {c.get('count', 0):7d}")
        elif isinstance(body, dict):
            lines.append(f"{group:48s} {'yes' if body.get('passed') else 'NO':5s}")
    for w in summary.get("warnings", []):
        lines.append(f"warning: {w}")
    return "\n".join(lines) + "\n"


def write_outputs(result, out: str) -> None:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    (d / "summary.json").write_text(dumps(result.summary))
    for name, payload in sorted(result.artifacts.items()):
        p = d / name
        if isinstance(payload, bytes):
            p.write_bytes(payload)
        else:
            p.write_text(payload)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="basinforge", description="Non-autonomous basin pipelines with proof-derived checks.")
    ap.add_argument("--config", help="TOML run configuration")
    ap.add_argument("--pipeline", choices=("diagonal", "general", "autonomous"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--horizon", type=int)
    ap.add_argument("--trains", type=int)
    ap.add_argument("--out", help="output directory for summary.json and traces")
    ap.add_argument("--slice", help='basin slice, e.g. "vary=z,fixed=0.1,extent=2,res=64"')
    ap.add_argument("--verify-only", action="store_true", help="run the checkers, skip point sampling")
    ap.add_argument("--render", metavar="SUMMARY", help="print a summary file as a table and exit")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.render:
            sys.stdout.write(report_render(args.render))
            return EXIT_OK
        cfg = load_config(args.config, args)
        from .pipelines import run

        result = run(cfg)
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out:
        write_outputs(result, cfg.out)
    print(f"status: {result.status}")
    for w in result.summary["warnings"]:
        print(f"warning: {w}")
    for f in result.summary["failed"]:
        print(f"FAILED: {f}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
