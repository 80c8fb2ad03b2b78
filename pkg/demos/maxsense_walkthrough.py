"""MaxSense end to end on a small information-scarce instance.

Run: python demos/maxsense_walkthrough.py
"""

import numpy as np

from ldp_lab.clustering import match_labels
from ldp_lab.maxsense import (class_mean_sd, delta_min, exact_expected_count, expected_count, ms_cluster,
                              recommended_users, simulate_maxsense)
from ldp_lab.model import sample_ground_truth, two_class_params
from ldp_lab.privacy import hat_epsilon

# %% instance: 100 items in two classes, each user rates 10 of them
p = two_class_params(100, 1, 10, b=(0.9, 0.1), epsilon=1.0, theta=1.0)
print("hat eps", round(hat_epsilon(p.epsilon), 6), " delta_min", round(delta_min(p), 6))

# the user count scale with the calibrated constant
p = p.replace(U=recommended_users(p, 17.0))
print("U =", p.U)

# %% one run
seed = 3
truth = sample_ground_truth(p, seed)
B = simulate_maxsense(p, truth, seed, engine="marginal")
labels = ms_cluster(B, p.L)
acc, _ = match_labels(labels, truth.item_class, p.L)
print("accuracy", acc)

# %% counts per item class against the closed forms
for ell in range(p.L):
    got = B.counts[truth.item_class == ell]
    print(f"class {ell}: mean {got.mean():9.1f}  closed form {expected_count(p, ell):9.1f}  "
          f"fixed-w form {exact_expected_count(p, ell):9.1f}  sd of mean {class_mean_sd(p, ell):6.1f}")

# the gap between the two class means is what the 1-D clustering separates
order = np.argsort(B.counts)
print("lowest counts ", B.counts[order[:5]], "classes", truth.item_class[order[:5]])
print("highest counts", B.counts[order[-5:]], "classes", truth.item_class[order[-5:]])
