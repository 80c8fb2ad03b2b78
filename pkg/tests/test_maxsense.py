import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp_lab.clustering import match_labels
from ldp_lab.model import ModelParams, UserRecord, sample_ground_truth, two_class_params
from ldp_lab.maxsense import (ItemCounts, check_separability, class_load, class_mean_sd, count_covariance,
                              count_variance, delta_min, exact_expected_count, expected_count, hex_mask,
                              item_counts, make_sensing_vector, maxsense_user_kernel, mms_block_size,
                              mms_questions, mms_user_kernel, ms_cluster, ms_private_sketch, multi_maxsense,
                              q_zero, recommended_users, simulate_maxsense, simulate_mms, sketch_writer,
                              theta_sweep, write_counts_csv)
from ldp_lab.privacy import hat_epsilon, verify_dp_kernel


def _user(items, ratings):
    return UserRecord(0, np.array(items), np.array(ratings, dtype=bool))


def test_sensing_vector():
    rng = np.random.default_rng(0)
    assert make_sensing_vector(5, 3, 3, rng).all()
    with pytest.raises(ValueError):
        make_sensing_vector(5, 0, 3, rng)
    N, n = 20, 100_000
    H = np.array([make_sensing_vector(N, 1, N, rng) for _ in range(n)])
    p = 1 / N
    assert abs(H.mean() - p) < 4 * math.sqrt(p * (1 - p) / (n * N))


def test_private_sketch():
    u = _user([1, 3, 5], [1, 0, 1])
    H = np.zeros(7, bool)
    assert ms_private_sketch(u, H) == 0
    H[5] = True
    assert ms_private_sketch(u, H) == 1
    H = np.zeros(7, bool)
    H[[0, 2, 3]] = True       # unrated or rated 0
    assert ms_private_sketch(u, H) == 0


def test_item_counts():
    assert (item_counts([], 3).counts == 0).all()
    c = item_counts([(np.array([1, 0, 1]), 1)], 3)
    assert c.counts.tolist() == [1, 0, 1] and c.n_sketches == 1
    rng = np.random.default_rng(1)
    sk = [(rng.random(6) < 0.4, int(rng.integers(0, 2))) for _ in range(40)]
    assert (item_counts(sk[:15], 6).merge(item_counts(sk[15:], 6)).counts == item_counts(sk, 6).counts).all()
    with pytest.raises(ValueError):
        item_counts([(np.ones(4), 1)], 3)


def test_cluster_examples():
    lab = ms_cluster(np.array([0, 0, 100, 100]), 2)
    assert lab[0] == lab[1] != lab[2] == lab[3]
    lab = ms_cluster(ItemCounts(np.full(5, 7)), 2)
    assert lab.shape == (5,)


def test_delta_min():
    p = two_class_params(100, 1, 10)
    assert delta_min(p) == pytest.approx(math.exp(-0.5) * 0.8, rel=1e-12)
    assert delta_min(p) == pytest.approx(0.485225, abs=1e-6)
    assert delta_min(two_class_params(100, 1, 10, b=(0.4, 0.4))) == 0
    q = ModelParams(N=30, U=1, K=2, L=3, alpha=[0.3, 0.7], beta=[1 / 3] * 3,
                    b=[[0.9, 0.2, 0.5], [0.1, 0.6, 0.3]], w=3)
    gaps = [abs(0.3 * (0.9 - 0.2) + 0.7 * (0.1 - 0.6)), abs(0.3 * (0.9 - 0.5) + 0.7 * (0.1 - 0.3)),
            abs(0.3 * (0.2 - 0.5) + 0.7 * (0.6 - 0.3))]
    assert delta_min(q, 0.0) == pytest.approx(min(gaps))


def test_separability():
    assert check_separability(two_class_params(10, 1, 2))
    r = check_separability(ModelParams(N=9, U=1, K=1, L=3, alpha=[1], beta=[1 / 3] * 3,
                                       b=[[0.5, 0.2, 0.5]], w=2))
    assert not r and r.failing == [(1, 3)]
    # equal loads v = 0.5 and opposite differences: 0.5*0.4 + 0.5*(-0.4) = 0
    p = ModelParams(N=10, U=1, K=2, L=2, alpha=[0.5, 0.5], beta=[0.5, 0.5], b=[[0.7, 0.3], [0.3, 0.7]], w=2)
    assert class_load(p).tolist() == pytest.approx([0.5, 0.5])
    assert not check_separability(p)
    # unequal user-class weights break the cancellation
    p = ModelParams(N=10, U=1, K=2, L=2, alpha=[0.7, 0.3], beta=[0.5, 0.5], b=[[0.7, 0.3], [0.3, 0.7]], w=2)
    assert check_separability(p)


def test_expected_count_limits():
    p = two_class_params(50, 1000, 5, epsilon=1e-300)
    assert expected_count(p, 0) == pytest.approx(1000 * (1 / 5) / 2)
    p = two_class_params(50, 1000, 5, b=(0.0, 0.0), epsilon=1.0)
    e = hat_epsilon(1.0)
    for f in (expected_count, exact_expected_count):
        assert f(p, 0) == pytest.approx(1000 / 5 * (0.5 - e / 4))


def test_expected_count_hand_value():
    # N=2, w=1, theta=1, b=(1, 0), eps=ln 3 (hat eps = 1):
    # a class-0 item is the whole rated set w.p. 1/2, and H_i = 1 always (p = 1)
    p = two_class_params(2, 1, 1, b=(1.0, 0.0), epsilon=math.log(3))
    # P[S=1] = 1/4 + 1/2 * P[S0=1]; P[S0=1] = 1/2 (rates the 1-item and senses it)
    assert exact_expected_count(p, 0) == pytest.approx(0.25 + 0.5 * 0.5)


def test_expected_count_monte_carlo():
    p = two_class_params(100, 100_000, 10)
    t = sample_ground_truth(p, 21)
    B = simulate_maxsense(p, t, 21, "dense").counts
    for ell in (0, 1):
        m = B[t.item_class == ell].mean()
        assert abs(m - expected_count(p, ell)) < 4 * class_mean_sd(p, ell)


def test_exact_expected_count_many_seeds():
    p = two_class_params(100, 100_000, 10)
    R = 20
    means = np.zeros((R, 2))
    for s in range(R):
        t = sample_ground_truth(p, 100 + s)
        B = simulate_maxsense(p, t, 100 + s).counts
        means[s] = [B[t.item_class == ell].mean() for ell in (0, 1)]
    for ell in (0, 1):
        assert abs(means[:, ell].mean() - exact_expected_count(p, ell)) < 4 * class_mean_sd(p, ell) / math.sqrt(R)


def test_concentration_matches_binomial():
    p = two_class_params(100, 100_000, 10)
    for ell in (0, 1):
        pooled = []
        for s in range(4):
            t = sample_ground_truth(p, 300 + s)
            B = simulate_maxsense(p, t, 300 + s).counts[t.item_class == ell]
            pooled.append(B.var(ddof=1))
        sd = math.sqrt(np.mean(pooled))
        pred = math.sqrt(count_variance(p, ell) - count_covariance(p, ell, ell))
        assert abs(sd / pred - 1) < 0.2
        assert abs(sd / math.sqrt(count_variance(p, ell)) - 1) < 0.2


def test_engines_agree():
    p = two_class_params(60, 50_000, 6)
    d, m = [], []
    for s in range(6):
        t = sample_ground_truth(p, s)
        for eng, acc in (("dense", d), ("marginal", m)):
            B = simulate_maxsense(p, t, s, eng).counts
            acc.append([B[t.item_class == ell].mean() for ell in (0, 1)])
    sd = np.array([class_mean_sd(p, ell) for ell in (0, 1)]) / math.sqrt(6)
    assert (np.abs(np.mean(d, 0) - np.mean(m, 0)) < 4 * math.sqrt(2) * sd).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(20, 400), st.integers(1, 20), st.floats(0.1, 3.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0),
       st.floats(0.1, 4.0))
def test_separation_identity(N, w, theta, b0, b1, eps):
    w = min(w, N)
    theta = min(theta, w)
    N -= N % 2
    p = two_class_params(N, 10_000, w, b=(b0, b1), epsilon=eps, theta=theta)
    gap = abs(expected_count(p, 0) - expected_count(p, 1))
    ref = p.U * hat_epsilon(eps) * (theta - theta ** 2 / w) * delta_min(p) / (2 * N)
    if ref == 0:
        assert gap == pytest.approx(0, abs=1e-9)
        return
    r = gap / ref
    assert 1 - theta ** 2 / N - 1e-9 <= r <= (1 - theta / N) ** -2 + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 50), st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.05, 3.0))
def test_q_zero_bounds(half, b0, b1, theta):
    N = 2 * half
    theta = min(theta, N / 2)
    p = two_class_params(N, 1, 1, b=(b0, b1), theta=theta)
    q = q_zero(p)[0]
    v = class_load(p)[0]
    assert q <= math.exp(-theta * v) * (1 + 1e-12)
    assert q >= math.exp(-theta * v) * (1 - theta ** 2 / N) - 1e-12
    assert q >= math.exp(-theta) * (1 - theta ** 2 / N) - 1e-12
    assert q <= 1


def test_user_kernel_privacy():
    H = np.array([1, 0, 1, 0], bool)
    for eps in (0.5, 1.0, math.log(3)):
        k = maxsense_user_kernel(4, 2, H, eps)
        assert verify_dp_kernel(k, eps) and not verify_dp_kernel(k, eps - 0.01)
        kf = maxsense_user_kernel(4, 2, H, eps, items=(0, 2))
        assert len(kf.inputs) == 4 and verify_dp_kernel(kf, eps)


def test_multi_maxsense_layout():
    rng = np.random.default_rng(0)
    u = _user([0, 5, 9], [1, 1, 0])
    out = multi_maxsense(u, 3, 30, 1.0, 3, 2.0, rng)
    assert len(out) == 3
    masks = [h for h, _ in out]
    assert all(m.sum() == mms_block_size(30, 1.0, 3) == 10 for m in masks)
    assert not (masks[0] & masks[1]).any() and not (masks[1] & masks[2]).any()
    one = multi_maxsense(u, 1, 30, 1.0, 3, 2.0, rng)
    assert len(one) == 1 and one[0][0].sum() == 10
    with pytest.raises(ValueError):
        multi_maxsense(u, 4, 30, 1.0, 3, 2.0, rng)


def test_mms_questions():
    assert [mms_questions(e) for e in (0.2, 1.0, 1.5, 3.0)] == [1, 1, 2, 3]


def test_mms_kernel_privacy():
    eps = 1.4
    k = mms_user_kernel(4, 2, [(0, 1), (2, 3)], eps)
    assert verify_dp_kernel(k, eps)
    assert not verify_dp_kernel(k, eps - 0.01)


def test_mms_recovers_easy_instance():
    p = two_class_params(40, 20_000, 8, epsilon=2.5)
    t = sample_ground_truth(p, 0)
    c = simulate_mms(p, t, 0)
    assert c.n_sketches == p.U * 3
    assert match_labels(ms_cluster(c, 2), t.item_class, 2)[0] == 1.0


def test_dense_sink_reconstructs_counts(tmp_path):
    p = two_class_params(12, 300, 3)
    t = sample_ground_truth(p, 4)
    rows = []
    B = simulate_maxsense(p, t, 4, "dense", sink=lambda u, s, H: rows.append((s.copy(), H.copy())))
    S = np.concatenate([r[0] for r in rows])
    H = np.concatenate([r[1] for r in rows])
    assert (H[S == 1].sum(axis=0) == B.counts).all()
    with pytest.raises(ValueError):
        simulate_maxsense(p, t, 4, "marginal", sink=lambda *a: None)
    path = tmp_path / "s.txt"
    with open(path, "w") as fh:
        simulate_maxsense(p, t, 4, "dense", sink=sketch_writer(fh))
    lines = path.read_text().splitlines()
    assert len(lines) == 300
    uid, s, hx = lines[0].split(",")
    assert uid == "1" and int(hx, 16) == int(hex_mask(H[0]), 16)


def test_hex_mask():
    assert hex_mask([1, 0, 0, 0, 1]) == "11"
    assert hex_mask([0, 0]) == "0"


def test_counts_csv(tmp_path):
    path = tmp_path / "c.csv"
    write_counts_csv(path, ItemCounts(np.array([3, 0, 5])), ["x"])
    assert path.read_text().splitlines() == ["# x", "item,B_i", "1,3", "2,0", "3,5"]


def test_recommended_users_formula():
    p = two_class_params(200, 1, 20)
    e, d = hat_epsilon(1.0), delta_min(p)
    assert recommended_users(p, 1.0) == math.ceil(200 ** 2 * math.log2(200) / (e * e * d * d * 20))
    with pytest.raises(ValueError):
        recommended_users(two_class_params(200, 1, 20, b=(0.5, 0.5)), 1.0)


def test_theta_sweep():
    p = two_class_params(100, 1, 10)
    rows, best = theta_sweep(p, [0.5, 1.0, 2.0, 4.0, 50.0])
    assert len(rows) == 4
    assert best == max(rows, key=lambda r: r[1])[0]


def test_high_epsilon_recovers():
    p = two_class_params(200, 0, 20, epsilon=50.0)
    p = p.replace(U=recommended_users(p, 17.0))
    t = sample_ground_truth(p, 5)
    assert match_labels(ms_cluster(simulate_maxsense(p, t, 5), 2), t.item_class, 2)[0] == 1.0
