#!/usr/bin/env python3
"""Measure the canonical sphere-fit quality and freeze the regression bound.

Runs the desk-scale udf fit recipe on one analytic sphere, samples the fitted
surface, and records the chamfer distance against exact surface samples in
tests/acceptance_bounds.json with a 1.5x margin.  The acceptance suite replays
the identical protocol and asserts it stays under the recorded bound, so this
script is only rerun when the fit recipe intentionally changes.
"""
import argparse
import json
import time
from pathlib import Path

import numpy as np

from inrkit.config import scale_config
from inrkit.fields import sample_queries
from inrkit.fitting import fit_inr
from inrkit.metrics import chamfer_distance
from inrkit.recon import InrField, sample_cloud_udf
from inrkit.rng import stream
from inrkit.shapes import ShapeSpec, gen_shape

PROTOCOL = {
    "radius": 0.4,
    "spec_seed": 1,
    "pool_seed": 1,
    "init_seed": 0,
    "fit_seed": 0,
    "sample_seed": 5,
    "ref_seed": 77,
    "ref_points": 4096,
}


def measure_sphere_fit_cd(scale: str = "desk") -> tuple[float, float]:
    """(chamfer distance, elapsed seconds) for the pinned sphere protocol."""
    cfg = scale_config(scale)
    p = PROTOCOL
    spec = ShapeSpec(kind="sphere", dims=(p["radius"],), seed=p["spec_seed"])
    bundle = gen_shape(spec, cloud_points=cfg.cloud_points,
                       voxel_res=cfg.voxel_res)
    pool = sample_queries(bundle, "udf", total=cfg.pool_total,
                          seed=p["pool_seed"])
    t0 = time.perf_counter()
    rec = fit_inr(pool, cfg.arch(), cfg.fit_config("udf"),
                  init_seed=p["init_seed"], fit_seed=p["fit_seed"],
                  shape_id=spec.seed)
    cloud = sample_cloud_udf(InrField(rec), cfg.sampler_config(),
                             seed=p["sample_seed"])
    elapsed = time.perf_counter() - t0
    d = stream(p["ref_seed"], "ref").normal(size=(p["ref_points"], 3))
    ref = p["radius"] * d / np.linalg.norm(d, axis=1, keepdims=True)
    return chamfer_distance(cloud.points, ref), elapsed


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path,
                        default=Path(__file__).resolve().parent.parent
                        / "tests" / "acceptance_bounds.json")
    parser.add_argument("--margin", type=float, default=1.5)
    args = parser.parse_args()

    cd, elapsed = measure_sphere_fit_cd()
    bounds = {
        "sphere_fit_cd": {
            "bound": args.margin * cd,
            "measured": cd,
            "margin": args.margin,
            "fit_and_sample_seconds": round(elapsed, 2),
            "protocol": PROTOCOL,
        },
    }
    args.out.write_text(json.dumps(bounds, indent=2, sort_keys=True) + "\n")
    print(f"sphere fit cd {cd:.6f} ({elapsed:.1f}s) -> bound "
          f"{args.margin * cd:.6f} written to {args.out}")


if __name__ == "__main__":
    main()
