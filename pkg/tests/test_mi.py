# tests/test_mi.py
import math

import numpy as np
import pytest

from core.errors import DataError
from mi.bounds import Critic, infonce_bound, infonce_monte_carlo, optimize_critic, sentence_candidate_count
from mi.experiments import PRESETS, bound_report, mi_check, preset_joint
from mi.joint import DiscreteJoint, diagonal_joint, product_joint, random_joint, true_mi


class TestTrueMi:
    def test_diagonal_is_log_k(self):
        assert true_mi(diagonal_joint(4)) == pytest.approx(math.log(4))

    def test_independent_is_zero(self):
        assert true_mi(product_joint(np.array([0.3, 0.7]), np.array([0.2, 0.5, 0.3]))) == pytest.approx(0.0, abs=1e-12)

    def test_two_by_two(self):
        joint = DiscreteJoint(np.array([[0.4, 0.1], [0.1, 0.4]]))
        expected = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
        assert true_mi(joint) == pytest.approx(expected)

    def test_zero_cells_contribute_nothing(self):
        joint = DiscreteJoint(np.array([[0.5, 0.0], [0.0, 0.5]]))
        assert true_mi(joint) == pytest.approx(math.log(2))


class TestDiscreteJoint:
    def test_must_sum_to_one(self):
        with pytest.raises(DataError):
            DiscreteJoint(np.array([[0.5, 0.4]]))

    def test_no_negative_mass(self):
        with pytest.raises(DataError):
            DiscreteJoint(np.array([[1.2, -0.2]]))

    def test_from_counts(self):
        joint = DiscreteJoint.from_counts(np.array([[3, 1], [0, 4]]))
        assert joint.p[0, 0] == pytest.approx(3 / 8)
        assert joint.marginal_b == pytest.approx([3 / 8, 5 / 8])


class TestExactBound:
    def test_constant_critic_gives_zero(self):
        joint = random_joint(5, 7, rng=np.random.default_rng(0))
        for value in (0.0, 3.5):
            assert infonce_bound(joint, Critic.constant(joint.shape, value)).value == pytest.approx(0.0, abs=1e-12)

    def test_sharp_diagonal_critic_approaches_log_k(self):
        k = 8
        bound = infonce_bound(diagonal_joint(k), Critic(table=20.0 * np.eye(k)))
        assert bound.value == pytest.approx(math.log(k), abs=1e-6)
        assert bound.value <= math.log(k)
        assert bound.exact and bound.candidate_set_size == k

    def test_never_exceeds_mi_or_log_candidates(self):
        rng = np.random.default_rng(3)
        for j in range(20):
            size_a, size_b = (int(s) for s in rng.integers(2, 12, size=2))
            joint = random_joint(size_a, size_b, float(rng.choice([0.1, 1.0, 5.0])), rng)
            mi, ln_b = true_mi(joint), math.log(size_b)
            for _ in range(5):
                value = infonce_bound(joint, Critic.random(joint.shape, rng, scale=3.0)).value
                assert value <= mi + 1e-9 and value <= ln_b + 1e-9, j

    def test_uniform_marginal_gives_the_plain_form(self):
        f = np.random.default_rng(4).normal(size=(4, 4))
        expected = sum(0.25 * (f[k, k] - math.log(np.mean(np.exp(f[k])))) for k in range(4))
        assert infonce_bound(diagonal_joint(4), Critic(table=f)).value == pytest.approx(expected)

    def test_candidate_subset(self):
        rng = np.random.default_rng(8)
        joint = random_joint(5, 6, rng=rng)
        critic = Critic.random(joint.shape, rng)
        columns = [0, 2, 5]

        bound = infonce_bound(joint, critic, candidate_set=columns)
        restricted = DiscreteJoint.from_counts(joint.p[:, columns])
        assert bound.candidate_set_size == 3
        assert bound.value == pytest.approx(infonce_bound(restricted, Critic(table=critic.table[:, columns])).value)
        assert bound.value <= min(true_mi(restricted), math.log(3)) + 1e-9

    @pytest.mark.parametrize("columns", [[0, 0], [1, 9], [-1, 2]])
    def test_bad_candidate_set(self, columns):
        with pytest.raises(DataError):
            infonce_bound(diagonal_joint(4), Critic.constant((4, 4)), candidate_set=columns)

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            infonce_bound(diagonal_joint(3), Critic.constant((3, 4)))

    def test_critic_is_table_or_factored(self):
        with pytest.raises(DataError):
            Critic()
        with pytest.raises(DataError):
            Critic(g_a=np.zeros((2, 3)), g_b=np.zeros((2, 4)))


class TestOptimizedCritic:
    def test_reaches_true_mi_on_small_joint(self):
        joint = random_joint(4, 4, concentration=1.0, rng=np.random.default_rng(7))
        critic, history = optimize_critic(joint, steps=2000, lr=0.1)
        value = infonce_bound(joint, critic).value
        assert value == pytest.approx(true_mi(joint), abs=0.05)
        assert value <= true_mi(joint) + 1e-9
        assert history[0] == pytest.approx(0.0, abs=1e-12)

    def test_independent_joint_stays_at_zero(self):
        joint = product_joint(np.array([0.25, 0.75]), np.array([0.1, 0.6, 0.3]))
        critic, _ = optimize_critic(joint, steps=300)
        assert infonce_bound(joint, critic).value == pytest.approx(0.0, abs=1e-9)

    def test_factored_critic_gains_with_width(self):
        joint = diagonal_joint(6)
        values = []
        for d in (1, 2, 6):
            critic, _ = optimize_critic(joint, factored=True, d=d, steps=1500, lr=0.1, seed=0)
            assert critic.factored
            values.append(infonce_bound(joint, critic).value)
        assert values[0] <= values[1] + 0.02 <= values[2] + 0.04
        assert values[2] > 1.5

    def test_width_must_be_positive(self):
        with pytest.raises(DataError):
            optimize_critic(diagonal_joint(2), factored=True, d=0)


class TestMonteCarlo:
    def test_constant_critic_gives_zero(self):
        joint = random_joint(3, 3, rng=np.random.default_rng(1))
        estimate = infonce_monte_carlo(joint, Critic.constant(joint.shape), k=16, n_batches=5, rng=np.random.default_rng(0))
        assert estimate.value == pytest.approx(0.0, abs=1e-12)
        assert not estimate.exact and estimate.sample_count == 80

    def test_bounded_by_log_k(self):
        k = 4
        estimate = infonce_monte_carlo(diagonal_joint(16), Critic(table=20.0 * np.eye(16)), k=k, n_batches=50,
                                       rng=np.random.default_rng(2))
        assert estimate.value <= math.log(k) + 1e-9

    def test_large_batches_approach_the_exact_bound(self):
        rng = np.random.default_rng(5)
        joint = random_joint(4, 4, rng=rng)
        critic = Critic.random(joint.shape, rng)
        estimate = infonce_monte_carlo(joint, critic, k=512, n_batches=20, rng=rng)
        exact = infonce_bound(joint, critic).value
        assert abs(estimate.value - exact) < 0.05 + 3 * estimate.standard_error

    def test_needs_two_candidates(self):
        with pytest.raises(DataError):
            infonce_monte_carlo(diagonal_joint(2), Critic.constant((2, 2)), k=1, n_batches=1, rng=np.random.default_rng(0))


def test_sentence_candidate_count():
    count = sentence_candidate_count(10, 3)
    assert count.count == 1000
    assert count.log_count == pytest.approx(3 * math.log(10))


def test_mi_check_over_twenty_random_joints():
    reports = mi_check(n_joints=20, max_size=16, steps=1000)
    assert len(reports) == 20
    for report in reports:
        assert report["valid"], report["joint_id"]
        assert report["bound_initial"] == pytest.approx(0.0, abs=1e-12)
        assert report["bound_final"] >= report["bound_initial"]
        if report["true_mi"] <= 0.8 * report["ln_candidates"]:
            assert report["bound_final"] == pytest.approx(report["true_mi"], abs=0.05), report["joint_id"]


def test_bound_report_with_factored_critic():
    report = bound_report("diag", diagonal_joint(4), steps=200, factored_d=2)
    assert report["valid"]
    assert report["ln_candidates"] == pytest.approx(math.log(4))
    assert report["factored_d"] == 2 and report["bound_factored"] <= report["true_mi"] + 1e-9


@pytest.mark.parametrize("name", PRESETS)
def test_presets_give_valid_reports(name, synthetic_corpus):
    joint = preset_joint(name, synthetic_corpus)
    report = bound_report(f"preset-{name}", joint, steps=100)
    assert report["valid"]
    assert report["true_mi"] > 0


def test_unknown_preset(synthetic_corpus):
    with pytest.raises(DataError):
        preset_joint("nonsense", synthetic_corpus)
