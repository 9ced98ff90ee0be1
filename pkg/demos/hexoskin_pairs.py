"""Pairwise sweep over the five Hexoskin channels with LinReg, plus a heatmap.

    python demos/hexoskin_pairs.py out_dir
"""
import sys
from pathlib import Path

from eebench import ModelSpec, pairwise_sweep
from eebench.reporting import plot_heatmap, write_csv
from eebench.synthgen import Protocol, synthetic_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "hexoskin_pairs")
data = synthetic_dataset(3, 3, Protocol.quick())
sweep = pairwise_sweep(data, "hexoskin", [ModelSpec.default("linreg")])

write_csv(sweep.matrix.reset_index(), out / "matrix.csv")
plot_heatmap(out / "matrix.csv", out / "heatmap.png")
print(sweep.matrix.round(3).to_string())
print("\nbest partner per channel:")
print(sweep.best_partner().to_string(index=False))
print(f"\nwrote {out}/matrix.csv and {out}/heatmap.png")
