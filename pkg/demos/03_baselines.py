"""Compare EM with the naive and one-directional estimators on one dataset."""

import numpy as np

from binmisclass import fit_em
from binmisclass.baselines import fit_naive, fit_one_directional_em
from binmisclass.simulation import generate_dataset, preset

for name in ("setting1", "setting3"):
    scenario = preset(name)
    data = generate_dataset(scenario, 0).data
    fits = {
        "em": fit_em(data),
        "perfect-spec": fit_one_directional_em(data, "specificity"),
        "perfect-sens": fit_one_directional_em(data, "sensitivity"),
        "naive": fit_naive(data),
    }
    print(f"\n{name}: true beta = {scenario.beta_true}")
    for label, fit in fits.items():
        b = np.round(fit.params.beta, 3)
        print(f"  {label:<13} beta = {b}, sens {fit.rates.sens:.3f}, spec {fit.rates.spec:.3f}")
