"""Pairwise-Preference in the information-rich regime, and why L eigenvectors need rank L.

Run: python demos/pairwise_walkthrough.py
"""

import math

import numpy as np

from ldp_lab.clustering import match_labels
from ldp_lab.model import ModelParams, sample_ground_truth, two_class_params
from ldp_lab.pairwise import expected_matrix, pp_cluster, simulate_pairwise

N = 60
U = math.ceil(180 * N * math.log2(N))

# %% every user rates every item; eps = 1
p = two_class_params(N, U, N, b=(0.9, 0.1), epsilon=1.0)
truth = sample_ground_truth(p, 0)
A = simulate_pairwise(p, truth, 0)
print("eps=1 accuracy", match_labels(pp_cluster(A, 2, seed=0), truth.item_class, 2)[0])


def top_eigs(M, k=3):
    vals = np.linalg.eigvalsh(M)
    return np.round(vals[np.argsort(-np.abs(vals))][:k], 1)


# the expected matrix has two large eigenvalues: the privacy offset adds a
# constant direction next to the b b^T block
print("expected matrix, top eigenvalues:", top_eigs(expected_matrix(p, truth)))

# %% with almost no privacy noise and one user class the signal is rank one
q = p.replace(epsilon=50.0)
print("eps=50, K=1 top eigenvalues:", top_eigs(expected_matrix(q, truth)))
A = simulate_pairwise(q, truth, 0)
print("eps=50, K=1 accuracy", match_labels(pp_cluster(A, 2, seed=0), truth.item_class, 2)[0])

# %% two user classes restore rank two
r = ModelParams(N=N, U=U, K=2, L=2, alpha=[0.5, 0.5], beta=[0.5, 0.5], b=[[0.9, 0.1], [0.1, 0.9]], w=N,
                epsilon=50.0)
truth = sample_ground_truth(r, 0)
A = simulate_pairwise(r, truth, 0)
print("eps=50, K=2 accuracy", match_labels(pp_cluster(A, 2, seed=0), truth.item_class, 2)[0])
