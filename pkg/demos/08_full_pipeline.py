"""End to end: config file -> generate -> stats -> splits -> eval.

Mirrors what the CLI does (synf generate / stats / splits / eval) through
the library API, on a small two-town dataset.
"""

import json
import tempfile
from pathlib import Path

from synf.dataio import SplitPlan
from synf.evalflow import report
from synf.pipeline import (
    PipelineConfig,
    dataset_files,
    run_eval,
    run_generate,
    run_splits,
    run_stats,
)

workdir = Path(tempfile.mkdtemp(prefix="synf_demo_"))
config = {
    "towns": [
        {"archetype": "grid", "extent": 300.0, "seed": 7},
        {"archetype": "highway-loop", "extent": 500.0, "seed": 9},
    ],
    "out_dir": str(workdir / "dataset"),
    "master_seed": 404,
    "sequences_per_cell": 1,
    "n_frames": 40,
    "beam_mix": [32, 64],
    "behaviors": [{"npc_vehicle_count": 10, "pedestrian_count": 5}],
}
cfg_path = workdir / "config.json"
cfg_path.write_text(json.dumps(config, indent=1))

cfg = PipelineConfig.from_json_file(cfg_path)
manifest = run_generate(cfg)
print(f"generated {len(manifest['sequences'])} sequences, "
      f"{len(manifest['failures'])} failures")
for rec in manifest["sequences"]:
    print(f"  {rec['name']}  dyn={rec['dynamic_ratio']:.2f}  pts={rec['n_points']}")

files = dataset_files(cfg.out_dir)
stats = run_stats(files)
print(f"\nstats: {stats['n_frames']} frames, {stats['n_points']} points, "
      f"dynamic-frame ratio {stats['dynamic_frame_ratio']:.2f}, "
      f"speed mass over 15 m/s {stats['speed_mass_over_15']:.3f}")

plan = SplitPlan.from_dict({
    "splits": {
        "urban32": {"cells": [{"archetype": "grid", "count": 1, "channels": 32}]},
        "all": {
            "cells": [{"archetype": "highway-loop", "count": 2}],
            "includes": ["urban32"],
        },
    }
})
print("\nsplits:", json.dumps(run_splits(files, plan), indent=1))

results = run_eval(files, predictor="ego")
text, _ = report(results)
print("\n" + text)
