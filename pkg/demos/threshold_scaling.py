"""How the MaxSense user threshold grows with N at fixed w, on a small grid.

Run: python demos/threshold_scaling.py   (about half a minute on one core)
The full-size version is acceptance criterion 6.
"""

from ldp_lab.harness import TrialOptions, scaling_fit, threshold_users, user_scale
from ldp_lab.model import two_class_params

opts = TrialOptions(engine="marginal")
pts = []
for N in (40, 80, 160):
    p = two_class_params(N, 1, 8)
    res = threshold_users("maxsense", p, target=0.8, trials=5, U0=user_scale("maxsense", p, 11.31),
                          seed0=500, opts=opts, rel_width=0.2)
    print(f"N={N}: U* = {res.U_star}  probes {res.probes}")
    pts.append((N, res.U_star))

slope, _, r2 = scaling_fit(pts)
print(f"log-log slope in N: {slope:.2f} (R^2 {r2:.3f}); N^2 log N / w predicts a bit above 2")
