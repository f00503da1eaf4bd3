"""A short benchmark run: two algorithms, two seeds, a handful of small
epochs, then the summary and plots. Scale up via the CLI (see README)."""
import tempfile
from pathlib import Path

from cmdpbench.bench import RunConfig, run_experiment
from cmdpbench.bench.cli import main

with tempfile.TemporaryDirectory() as tmp:
    for algo in ("trpo", "trpo_lag"):
        cfg = RunConfig("Goal_Point_8Hazards", algo, epochs=3, steps_per_epoch=1000,
                        seeds=(0, 1), out_dir=tmp)
        for res in run_experiment(cfg):
            last = res.rows[-1]
            print(f"{algo:9s} seed {res.seed}: J_r={last.J_r:8.3f} M_c={last.M_c:6.2f} "
                  f"rho_c={last.rho_c:.4f}")

    # The same thing through the command-line entry point, with plots.
    code = main(["--suite", "Goal_Point_8Hazards", "--algo", "trpo,cpo", "--epochs", "2",
                 "--steps", "1000", "--out", tmp, "--plot", "-q"])
    print("cli exit code", code)
    print(sorted(p.name for p in Path(tmp, "Goal_Point_8Hazards").iterdir()))
