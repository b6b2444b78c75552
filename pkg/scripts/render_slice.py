"""Render a basin slice of a configured sequence to a PPM file.

    python3 scripts/render_slice.py configs/autonomous.toml slice.ppm --spec "vary=w,extent=2,res=128"
"""

import argparse
from pathlib import Path

from basinforge import basin_map as bm
from basinforge.cli import tomllib
from basinforge.pipelines import RunConfig
from basinforge.sequence_gen import MapSequence


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("out")
    ap.add_argument("--spec", default="vary=w,fixed=0,extent=2,res=128")
    ap.add_argument("--horizon", type=int, default=200)
    args = ap.parse_args()
    with open(args.config, "rb") as fh:
        cfg = RunConfig.from_dict(tomllib.load(fh))
    grid = bm.basin_slice(MapSequence(cfg.sequence), bm.SliceSpec.parse(args.spec), horizon=args.horizon)
    Path(args.out).write_bytes(bm.ppm_bytes(grid))
    counts = {name: int((grid == v).sum()) for name, v in (("converged", 1), ("escaped", -1), ("undecided", 0))}
    print(f"wrote {args.out}: {counts}")


if __name__ == "__main__":
    main()
