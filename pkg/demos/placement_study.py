"""How PMU coverage changes what can be told apart.

Run with ``python demos/placement_study.py [runs]``.  For a handful of
random placements at each coverage the script reports the diagnosability
over the usual threshold grid and the single-outage accuracy of the lasso
with and without cluster augmentation.
"""

import sys
import warnings

import numpy as np

from outageid import BenchConfig, build_signature_map, case39, run_benchmark, sample_placement
from outageid import diagnosability_sweep, solve_power_flow
from outageid.mdc import TABLE_THRESHOLDS, UnobservableLineWarning

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 10
model = case39()
base = solve_power_flow(model)

print("mean diagnosability V(rho) over", runs, "placements")
print("coverage " + " ".join(f"{t:6.2f}" for t in TABLE_THRESHOLDS))
for coverage in (0.25, 0.5, 0.75):
    table = []
    for seed in range(runs):
        sig = build_signature_map(model, base, sample_placement(model, coverage, seed))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnobservableLineWarning)
            table.append([v for _, v in diagnosability_sweep(sig.f, TABLE_THRESHOLDS)])
    print(f"{coverage:8.2f} " + " ".join(f"{v:6.3f}" for v in np.mean(table, axis=0)))

report = run_benchmark(
    BenchConfig(runs=runs, kinds=("single",), methods=("lasso",), coverages=(0.25, 0.5, 0.75)),
    model,
)
print("\nsingle-outage lasso accuracy (median over runs)")
for cov, by_method in report["accuracy"]["single"].items():
    raw = by_method["lasso"]["raw"]["a1"]["median"]
    aug = by_method["lasso"]["mdc"]["a1"]["median"]
    print(f"  coverage {cov:>4}: raw {raw:.3f}   with clusters {aug:.3f}")
