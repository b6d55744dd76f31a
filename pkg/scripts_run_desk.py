"""Sequentially produce every desk-scale result directory (hours)."""
import sys, time
from nlpnlab.harness import load_config, run_cov_experiment, run_eq_experiment

JOBS = [
    ("configs/cov_desk.yaml", run_cov_experiment, "results/cov_desk"),
    ("configs/cov_desk.yaml", run_cov_experiment, "results/cov_desk_rerun"),
    ("configs/cov_desk_shaped.yaml", run_cov_experiment, "results/cov_desk_shaped"),
    ("configs/eq_desk.yaml", run_eq_experiment, "results/eq_desk"),
    ("configs/eq_desk.yaml", run_eq_experiment, "results/eq_desk_rerun"),
]
for cfg_path, runner, out in JOBS:
    t0 = time.time()
    print(f"=== {out} ...", flush=True)
    runner(load_config(cfg_path), out)
    print(f"=== {out} done in {(time.time()-t0)/60:.1f} min", flush=True)
print("ALL DONE", flush=True)
