"""Exact information leaked by one sketch, next to the bounds that cap it.

Run: python demos/information_bounds.py
"""

import math

import numpy as np

from ldp_lab.bounds import (basic_dp_bound, check_kernel, exact_mutual_information, onebit_sketch_search,
                            sample_complexity_floor, uniform_prior, weak_mi_bound)
from ldp_lab.maxsense import maxsense_user_kernel

# %% a MaxSense user on 4 items, rating 2, sensing items 0 and 2
N, w = 4, 2
H = np.array([1, 0, 1, 0], dtype=bool)
for eps in (0.3, 0.6, 1.0):
    k = maxsense_user_kernel(N, w, H, eps)
    mi = exact_mutual_information(uniform_prior(N), w, k)
    r = check_kernel(k, N, w, eps)
    print(f"eps {eps}: I = {mi:.5f} bits, pair bound {r.lemma5:.5f}, weak {weak_mi_bound(N, w, eps):.5f}, "
          f"eps*log2(e) {basic_dp_bound(eps):.5f}, all checks {r.passed}")

# %% the best deterministic one-bit sketch with w = 1 never beats 1/N bits
for n in range(1, 6):
    mi, A = onebit_sketch_search(n)
    print(f"N={n}: best one-bit MI {mi:.4f}  (1/N = {1 / n:.4f})  set {A}")

# %% user-count floors, order of growth only
for N in (100, 1000):
    print(N, {rg: round(sample_complexity_floor(rg, N, w=1 if rg == "adaptive-w1" else 4, epsilon=0.5))
              for rg in ("basic", "scarce-weak", "scarce-strong", "adaptive-w1")})
print("the strong floor needs eps below ln 2 =", round(math.log(2), 4))
