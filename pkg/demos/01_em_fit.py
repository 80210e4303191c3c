"""Fit the misclassification model by EM on one simulated dataset.

Run with ``python demos/01_em_fit.py``.
"""

from binmisclass import fit_em, fit_naive
from binmisclass.simulation import generate_dataset, preset

scenario = preset("setting2")
gen = generate_dataset(scenario, replicate_index=0)
print(f"n = {gen.data.n}, realised sensitivity {gen.sensitivity:.3f}, "
      f"specificity {gen.specificity:.3f}")

# EM starts from the naive slope and 80% / 20% recording rates
em = fit_em(gen.data)
print(em.summary_table())

# ignoring the recording errors pulls the slope toward zero
naive = fit_naive(gen.data)
print(f"\nslope: truth -2.0, EM {em.params.beta[1]:.3f}, naive {naive.params.beta[1]:.3f}")
