"""Bring-your-own data: write source and target CSV files, train through the
command-line entry point, then score the saved checkpoint. The target file has
no label column, so target accuracy is reported as unavailable."""

from pathlib import Path

from multimcd.cli import main
from multimcd.data import ToySpec, make_toy, write_csv

Path("demo_out/csv").mkdir(parents=True, exist_ok=True)
split = make_toy(ToySpec(n_per_domain=200, rotation_deg=20, seed=3))
write_csv("demo_out/csv/source.csv", split.source_x, split.source_y)
write_csv("demo_out/csv/target.csv", split.target_x)

data = ["--source-csv", "demo_out/csv/source.csv", "--target-csv", "demo_out/csv/target.csv"]
main(["train", *data, "--config", "configs/toy.toml", "--output-dir", "demo_out/csv/run"])
main(["eval", *data, "--config", "configs/toy.toml", "--checkpoint", "demo_out/csv/run/model.ckpt"])
