"""Closed-loop ablation on the toy task: the full three-pair loss against a loss
with one pair removed and one with a pair counted twice, plus the two-head
baseline. Two seeds keep it short; `multimcd ablate --config configs/toy.toml`
runs the five-seed version.
"""

from multimcd.experiments import load_config, run_ablation

cfg = load_config("configs/toy.toml", ablation_seeds=2, output_dir="demo_out/ablation")
header, rows = run_ablation(cfg)
print("  ".join(f"{h:>18s}" for h in header))
for row in rows:
    print("  ".join(f"{v:>18.3f}" if isinstance(v, float) else f"{v:>18}" for v in row))
