import numpy as np
import numpy.testing as npt
import pytest

from fairdiffusion.autodiff import Tensor
from fairdiffusion.data import ConditionVocab, LabeledExample
from fairdiffusion.errors import ContractError
from fairdiffusion.metrics import (GroupDistribution, fairness_discrepancy,
                                   frechet_distance, group_entropy_report,
                                   inception_score, pearson_r,
                                   statistical_parity_difference,
                                   unrecognizable_proportion)
from fairdiffusion.networks import DenoiserNet, IndicatorNet
from fairdiffusion.schedule import build_schedule

LN2 = np.log(2.0)


# ---------------------------------------------------------------------------
# group-proportion metrics


def test_fd_balanced_is_zero():
    assert fairness_discrepancy(GroupDistribution(("a", "b"), np.array([0.5, 0.5]))) == 0.0


def test_fd_direct_values():
    assert fairness_discrepancy(GroupDistribution(("a", "b"), np.array([0.6, 0.4]))) == pytest.approx(0.1)
    # majority share 0.74 against the uniform reference
    assert fairness_discrepancy(GroupDistribution(("a", "b"), np.array([0.74, 0.26]))) == pytest.approx(0.24)


def test_fd_invariant_under_label_swap():
    a = fairness_discrepancy(GroupDistribution(("a", "b"), np.array([0.7, 0.3])))
    b = fairness_discrepancy(GroupDistribution(("b", "a"), np.array([0.3, 0.7])))
    assert a == b


def test_fd_rejects_unnormalized():
    with pytest.raises(ContractError):
        fairness_discrepancy(GroupDistribution(("a", "b"), np.array([0.7, 0.7])))


def test_spd_examples():
    assert statistical_parity_difference(0.4, 0.4) == 0.0
    assert statistical_parity_difference(0.6, 0.497) == pytest.approx(0.103)
    assert statistical_parity_difference(0.5, 0.497) == pytest.approx(0.003)
    assert statistical_parity_difference(0.2, 0.9) == statistical_parity_difference(0.9, 0.2)


def test_spd_rejects_out_of_range():
    with pytest.raises(ContractError):
        statistical_parity_difference(1.2, 0.5)


def test_unrecognizable_proportion():
    assert unrecognizable_proportion([1, 2, 3], [1, 2, 3]) == 0.0
    assert unrecognizable_proportion([1, 2, 3], [0, 0, 0]) == 1.0
    assert unrecognizable_proportion([1, 2, 3, 4], [1, 2, 0, 0]) == 0.5
    with pytest.raises(ContractError):
        unrecognizable_proportion([1, 2], [1, 2, 3])


# ---------------------------------------------------------------------------
# feature-distribution distance


def test_frechet_of_identical_sets_is_zero():
    rng = np.random.default_rng(2)
    feats = rng.standard_normal((40, 5))
    assert frechet_distance(feats, feats) <= 1e-9


def test_frechet_unit_mean_shift_closed_form():
    # two samples fitting N(0, 1) and N(1, 1) exactly: distance = 1
    a = np.sqrt(0.5)
    real = np.array([[-a], [a]])
    gen = real + 1.0
    assert frechet_distance(real, gen) == pytest.approx(1.0, abs=1e-12)


def test_frechet_matches_independent_sqrtm_oracle():
    from scipy import linalg

    rng = np.random.default_rng(11)
    for dim in (1, 2, 3, 4, 5):
        x = rng.standard_normal((60, dim)) @ rng.standard_normal((dim, dim)) + rng.standard_normal(dim)
        y = rng.standard_normal((60, dim)) @ rng.standard_normal((dim, dim)) - rng.standard_normal(dim)
        mu_x, mu_y = x.mean(axis=0), y.mean(axis=0)
        cov_x, cov_y = np.cov(x, rowvar=False).reshape(dim, dim), np.cov(y, rowvar=False).reshape(dim, dim)
        cross = linalg.sqrtm(cov_x @ cov_y)
        if np.iscomplexobj(cross):
            cross = cross.real
        expected = float((mu_x - mu_y) @ (mu_x - mu_y) + np.trace(cov_x + cov_y - 2.0 * cross))
        got = frechet_distance(x, y)
        assert abs(got - expected) <= 1e-6 * max(1.0, abs(expected))


def test_frechet_symmetry():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((30, 4))
    b = rng.standard_normal((30, 4)) * 2 + 1
    assert abs(frechet_distance(a, b) - frechet_distance(b, a)) <= 1e-9
    assert frechet_distance(a, b) >= 0


def test_frechet_requires_enough_rows():
    with pytest.raises(ContractError, match="rows"):
        frechet_distance(np.zeros((4, 4)), np.zeros((10, 4)))


# ---------------------------------------------------------------------------
# confidence/diversity score


def test_is_uniform_rows_score_one():
    rows = np.full((50, 10), 0.1)
    mean, std = inception_score(rows, n_splits=5)
    assert mean == pytest.approx(1.0, abs=1e-9)
    assert std == pytest.approx(0.0, abs=1e-12)


def test_is_balanced_onehot_ten_classes():
    rows = np.tile(np.eye(10), (5, 1))
    mean, std = inception_score(rows, n_splits=1)
    assert mean == pytest.approx(10.0, abs=1e-6)


def test_is_balanced_onehot_two_classes():
    rows = np.tile(np.eye(2), (8, 1))
    mean, _ = inception_score(rows, n_splits=1)
    assert mean == pytest.approx(2.0, abs=1e-9)


def test_is_always_at_least_one():
    rng = np.random.default_rng(7)
    logits = rng.standard_normal((100, 10))
    rows = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    mean, _ = inception_score(rows, n_splits=10)
    assert mean >= 1.0 - 1e-9


def test_is_rejects_bad_input():
    with pytest.raises(ContractError):
        inception_score(np.full((10, 10), 0.2), n_splits=2)
    with pytest.raises(ContractError):
        inception_score(np.full((10, 10), 0.1), n_splits=0)
    with pytest.raises(ContractError):
        inception_score(np.full((3, 10), 0.1), n_splits=5)


# ---------------------------------------------------------------------------
# correlation


def test_pearson_identities():
    x = np.array([0.3, 1.2, -0.5, 2.0])
    assert pearson_r(x, x) == pytest.approx(1.0)
    assert pearson_r(x, -x) == pytest.approx(-1.0)
    assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)


def test_pearson_rejects_zero_variance():
    with pytest.raises(ContractError, match="zero variance"):
        pearson_r([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(ContractError):
        pearson_r([1.0], [2.0])


# ---------------------------------------------------------------------------
# group entropy report


def report_fixtures(dtype=np.float32, indicator_seed=5):
    sched = build_schedule(10, 1e-3, 0.05)
    denoiser = DenoiserNet(input_width=784, time_width=8, cond_width=4, hidden_width=16,
                           num_steps=10, rng=np.random.default_rng(1), dtype=dtype)
    indicator = IndicatorNet(input_width=784, hidden_widths=(16, 8),
                             rng=np.random.default_rng(indicator_seed), dtype=dtype)
    vocab = ConditionVocab(embed_width=4, seed=2, dtype=dtype)
    return sched, denoiser, indicator, vocab


def group_of(vocab, n, seed, digit=3):
    rng = np.random.default_rng(seed)
    return [LabeledExample(image=rng.uniform(-1, 1, (28, 28)).astype(np.float32),
                           y=1, condition_id=vocab.digit_id(digit), source_class=digit)
            for _ in range(n)]


def test_uniform_indicator_means_ln2():
    sched, denoiser, indicator, vocab = report_fixtures()
    for t in indicator.params.tensors():
        t.data[...] = 0.0
    groups = {"a": group_of(vocab, 6, 1), "b": group_of(vocab, 6, 2)}
    report = group_entropy_report(denoiser, indicator, vocab, sched, groups, seed=0)
    for value in report.mean_entropy.values():
        assert value == pytest.approx(LN2, abs=1e-12)
    assert report.pearson is None  # zero entropy variance, correlation undefined


def test_identical_groups_identical_seeds():
    sched, denoiser, indicator, vocab = report_fixtures()
    members = group_of(vocab, 8, 7)
    report = group_entropy_report(denoiser, indicator, vocab, sched,
                                  {"a": members, "b": list(members)}, seed=3)
    assert report.mean_entropy["a"] == report.mean_entropy["b"]
    assert report.pearson == pytest.approx(1.0)


def test_entropies_within_binary_bound():
    sched, denoiser, indicator, vocab = report_fixtures()
    groups = {"a": group_of(vocab, 20, 1), "b": group_of(vocab, 20, 2, digit=0)}
    report = group_entropy_report(denoiser, indicator, vocab, sched, groups, seed=1)
    for vec in report.entropies.values():
        assert np.all(vec >= 0) and np.all(vec <= LN2 + 1e-9)


def test_empty_group_rejected():
    sched, denoiser, indicator, vocab = report_fixtures()
    with pytest.raises(ContractError, match="empty"):
        group_entropy_report(denoiser, indicator, vocab, sched, {"a": []})


def test_toy_report_matches_hand_computed_forward():
    # tiny nets, float64, every matrix op re-derived with plain numpy
    sched = build_schedule(4, 1e-3, 0.05)
    denoiser = DenoiserNet(input_width=4, time_width=2, cond_width=2, hidden_width=3,
                           num_steps=4, rng=np.random.default_rng(3), dtype=np.float64)
    denoiser.params["out.w"].data = np.random.default_rng(4).standard_normal((3, 4)) * 0.5
    indicator = IndicatorNet(input_width=4, hidden_widths=(3, 3),
                             rng=np.random.default_rng(5), dtype=np.float64)
    vocab = ConditionVocab(embed_width=2, seed=6, dtype=np.float64)

    rng = np.random.default_rng(9)
    examples = [LabeledExample(image=rng.uniform(-1, 1, (2, 2)).astype(np.float32),
                               y=1, condition_id=1, source_class=1) for _ in range(4)]
    t_eval, seed = 2, 13
    report = group_entropy_report(denoiser, indicator, vocab, sched, {"g": examples},
                                  t_eval=t_eval, seed=seed)

    # independent re-computation (float64, matching the toy nets)
    check_rng = np.random.default_rng(seed)
    order = check_rng.permutation(4)
    z0 = np.stack([examples[i].image.reshape(-1) for i in order]).astype(np.float64)
    eps = check_rng.standard_normal(z0.shape, dtype=np.float64)
    abar = sched.alpha_bar(t_eval)
    z_t = np.sqrt(abar) * z0 + np.sqrt(1 - abar) * eps

    p = {n: t.data for n, t in denoiser.params.items()}
    t_emb = denoiser.time_table[np.full(4, t_eval - 1)]
    c_emb = np.repeat(vocab.table.data[1][None, :], 4, axis=0)
    cat = np.concatenate([z_t, t_emb, c_emb], axis=1)

    def silu(v):
        return v / (1.0 + np.exp(-v))

    h = silu(cat @ p["in.w"] + p["in.b"] + z_t @ p["skip.w"])
    h = silu(h @ p["mid.w"] + p["mid.b"])
    eps_hat = h @ p["out.w"] + p["out.b"]
    denoised = z0 + (eps - eps_hat)

    q = {n: t.data for n, t in indicator.params.items()}
    g = silu(denoised @ q["l1.w"] + q["l1.b"])
    g = silu(g @ q["l2.w"] + q["l2.b"])
    logits = g @ q["l3.w"] + q["l3.b"]
    exp = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = exp / exp.sum(axis=1, keepdims=True)
    probs = probs / probs.sum(axis=1, keepdims=True)
    expected = float(np.mean(-(probs * np.log(probs)).sum(axis=1)))

    npt.assert_allclose(report.mean_entropy["g"], expected, atol=1e-9)
