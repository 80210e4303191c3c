"""A small Monte Carlo study: bias and rMSE per estimator.

The full presets use 500 replicates; ten keep this to about a minute.
"""

from binmisclass.simulation import preset, run_study

scenario = preset("setting1").replace(n_realizations=10)
report = run_study(scenario, progress=lambda i: print(f"replicate {i + 1} done", end="\r"))
print()
print(report.format_table())
