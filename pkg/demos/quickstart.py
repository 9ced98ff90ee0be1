"""Generate a small synthetic cohort, then compare LinReg and a CNN on minute ventilation.

    python demos/quickstart.py [--epochs 10]
"""
import argparse

from eebench import ModelSpec, TrainConfig, run_loso_experiment
from eebench.synthgen import Protocol, linear_mv_profiles, synthetic_dataset

ap = argparse.ArgumentParser()
ap.add_argument("--epochs", type=int, default=10)
ap.add_argument("--seed", type=int, default=11)
args = ap.parse_args()

# EE is linear in minute ventilation here, so both models should approach the 0.2 W/kg noise floor
data = synthetic_dataset(args.seed, profiles=linear_mv_profiles(3, args.seed, 0.2), protocol=Protocol.compact())
print(f"{len(data)} subjects, {sum(len(r.ee_target) for r in data)} one-second samples")

for spec in (ModelSpec.default("linreg"), ModelSpec.default("cnn", dropout=0.0)):
    rep = run_loso_experiment(data, "minute_ventilation", spec, TrainConfig(epochs=args.epochs, seed=args.seed))
    folds = "  ".join(f"S{k}={v:.3f}" for k, v in rep.fold_rmse.items())
    print(f"\n{spec.display_name:8s} overall RMSE {rep.overall_rmse:.3f} W/kg   {folds}")
    print(rep.per_activity()[["activity", "condition", "rmse", "nrmse"]].to_string(index=False, float_format="%.3f"))
