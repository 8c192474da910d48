"""Replicated two-group study: residual diagnostics separate models.

Data come from a known two-group matrix-Weibull generator with roughly
ten percent censoring.  Three candidate models are fit to each
replication: the correctly specified matrix regression, a scalar
proportional-hazards model, and a plain Weibull PH model.  Cox-Snell
residual diagnostics should wave the first through and flag the others.

Run from the repository root (about half a minute):

    python3 demos/04_residual_study.py
"""

import numpy as np

from matlife.diagnostics import run_study, simulate_study
from matlife.regression import PIFitConfig

# One replication, unpacked: the study data carry a single group
# indicator and the generating models for each group.
study = simulate_study(seed=1, n_per_group=500)
print(f"study sample: n = {study.sample.y.size}, censored fraction = "
      f"{study.censored_fraction:.3f}")

config = PIFitConfig(max_outer=400, tol=1e-8, patience=8, nm_budget=400)
print("\nfitting three variants per seed; coverage is the fraction of the "
      "residual Kaplan-Meier support whose 95% band covers exp(-t), slope "
      "is the least-squares slope of the Nelson-Aalen plot\n")

header = f"{'seed':>4}  {'variant':<12} {'coverage':>8}  {'slope':>6}"
print(header)
print("-" * len(header))
for seed in (1, 2, 3):
    report = run_study(seed, config=config)
    for name, diag in report.diagnostics.items():
        print(f"{seed:>4}  {name:<12} {diag['coverage']:>8.3f}  "
              f"{diag['slope']:>6.3f}")

print("\nthe matrix variant should sit near coverage 1.0 and slope 1.0; "
      "the misspecified variants fall out of band")
