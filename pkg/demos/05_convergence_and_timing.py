"""How the head count affects cost and the discrepancy curve. Epoch times are
machine-specific; only their trend across n is meaningful."""

import csv

import numpy as np

from multimcd.experiments import load_config, run_bench

cfg = load_config("configs/toy.toml", epochs=40, output_dir="demo_out/bench", n_list=[2, 3, 4, 6])
table, inversions = run_bench(cfg)
for r in table:
    print(f"n={r.n}: {r.mean_epoch_ms:6.1f} ms/epoch (std {r.std_epoch_ms:.1f}), "
          f"target accuracy {r.final_target_accuracy:.3f}")
for msg in inversions:
    print("note:", msg)

with open("demo_out/bench/curves.csv") as fh:
    rows = list(csv.reader(fh))
cols = np.array(rows[1:], dtype=float)
fifth = len(cols) // 5
for j, name in enumerate(rows[0][1:], start=1):
    print(f"{name}: first fifth {cols[:fifth, j].mean():.4f}  last fifth {cols[-fifth:, j].mean():.4f}")
