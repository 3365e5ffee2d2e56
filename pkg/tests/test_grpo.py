import dataclasses
import json

import numpy as np
import pytest

from planrl.envsim.tasks import reference_maze, generate_maze_tasks
from planrl.grpo import (
    GrpoConfig,
    NumericError,
    PolicyParams,
    Rollout,
    RolloutGroup,
    SerializationError,
    collect_group,
    config_hash,
    finite_difference_error,
    group_advantages,
    grpo_loss,
    load_checkpoint,
    observation_mask,
    random_instance,
    save_checkpoint,
    token_logprobs,
    train_step,
    unclipped_objective,
)
from planrl.policy import N_FEATURES, N_HEADS
from planrl.reward import OBS_CLOSE, OBS_OPEN


# -- advantages -------------------------------------------------------------------

def test_advantages_two_point():
    np.testing.assert_allclose(group_advantages([0, 2]), [-1, 1], atol=1e-7)


def test_advantages_zero_variance():
    assert group_advantages([1, 1, 1, 1]).tolist() == [0.0, 0.0, 0.0, 0.0]


def test_advantages_three_point():
    np.testing.assert_allclose(group_advantages([1, 2, 3]), [-1.2247, 0, 1.2247], atol=1e-4)


def test_advantages_reject_non_finite_and_singletons():
    with pytest.raises(NumericError):
        group_advantages([1.0, float("nan")])
    with pytest.raises(ValueError):
        group_advantages([1.0])


def test_advantages_large_offset_stay_centered():
    a = group_advantages(1e6 + np.array([0.0, 1e-7, 3e-7]))
    assert abs(a.mean()) < 1e-9 and abs(a.std() - 1) < 1e-6


# -- masks ------------------------------------------------------------------------

def test_mask_without_spans():
    assert observation_mask(["a", "b", "c"]).all()


def test_mask_single_span():
    toks = ["a"] * 4 + [OBS_OPEN] + ["o"] * 5 + [OBS_CLOSE] + ["b", "c"]
    mask = observation_mask(toks)
    assert np.flatnonzero(~mask).tolist() == list(range(4, 11))


def test_mask_adjacent_spans():
    toks = ["x", OBS_OPEN, "o", OBS_CLOSE, OBS_OPEN, "p", OBS_CLOSE, "y"]
    assert observation_mask(toks).tolist() == [True, False, False, False, False, False, False, True]


@pytest.mark.parametrize("toks", [[OBS_OPEN, "a"], ["a", OBS_CLOSE], [OBS_OPEN, OBS_OPEN, OBS_CLOSE]])
def test_mask_unbalanced(toks):
    with pytest.raises(SerializationError):
        observation_mask(toks)


# -- loss -------------------------------------------------------------------------

def _identity_instance(seed=0, beta=0.0):
    rng = np.random.default_rng(seed)
    group, p, ref = random_instance(rng, jitter=0.0)
    return group, p, GrpoConfig(kl_beta=beta)


def test_identity_policy_loss_is_minus_mean_advantage():
    group, p, cfg = _identity_instance()
    loss, _, stats = grpo_loss(group, p, p, cfg)
    adv = group_advantages(group.rewards)
    has_tokens = np.array([ro.token_mask.any() for ro in group.rollouts])
    assert loss == pytest.approx(-np.sum(adv * has_tokens) / len(adv), abs=1e-12)
    assert stats.clip_frac == 0.0


def test_zero_variance_rewards_give_zero_loss_and_gradient():
    group, p, cfg = _identity_instance()
    for ro in group.rollouts:
        ro.reward = 0.5
    loss, grad, _ = grpo_loss(group, p, p, cfg)
    assert loss == 0.0 and not grad.any()


def test_fully_masked_group_has_no_loss():
    group, p, cfg = _identity_instance(beta=0.5)
    rollouts = [dataclasses.replace(ro, token_mask=np.zeros_like(ro.token_mask)) for ro in group.rollouts]
    loss, grad, stats = grpo_loss(RolloutGroup(None, rollouts), p, PolicyParams(p.weights + 1.0), cfg)
    assert loss == 0.0 and not grad.any() and stats.tokens == 0


def test_gradient_matches_finite_differences_small_instance():
    rng = np.random.default_rng(42)
    group, p, ref = random_instance(rng, group_size=4, max_tokens=20)
    assert finite_difference_error(group, p, ref, GrpoConfig(kl_beta=0.1)) < 1e-5


def test_reward_shift_invariance():
    group, p, ref = random_instance(np.random.default_rng(3))
    cfg = GrpoConfig()
    shifted = RolloutGroup(None, [dataclasses.replace(ro, reward=ro.reward + 7.0) for ro in group.rollouts])
    a, ga, _ = grpo_loss(group, p, ref, cfg)
    b, gb, _ = grpo_loss(shifted, p, ref, cfg)
    assert a == pytest.approx(b, abs=1e-12) and np.allclose(ga, gb, atol=1e-12)


def test_wide_clip_without_kl_equals_unclipped_surrogate():
    rng = np.random.default_rng(5)
    group, p, ref = random_instance(rng, jitter=0.1)
    cfg = GrpoConfig(clip_eps=0.999, kl_beta=0.0)
    loss, _, _ = grpo_loss(group, p, ref, cfg)
    assert -loss == pytest.approx(unclipped_objective(group, p.weights, cfg), abs=1e-10)


def test_masked_logprob_perturbation_is_invisible():
    group, p, ref = random_instance(np.random.default_rng(9), mask_prob=0.5)
    cfg = GrpoConfig()
    loss, grad, _ = grpo_loss(group, p, ref, cfg)
    noisy = []
    for ro in group.rollouts:
        old = ro.token_logprobs_old.copy()
        old[~ro.token_mask] = 123.0
        noisy.append(dataclasses.replace(ro, token_logprobs_old=old))
    loss2, grad2, _ = grpo_loss(RolloutGroup(None, noisy), p, ref, cfg)
    assert loss == loss2 and np.array_equal(grad, grad2)


def test_non_finite_ratio_reports_token():
    group, p, ref = random_instance(np.random.default_rng(1), mask_prob=0.0)
    ro = group.rollouts[0]
    old = ro.token_logprobs_old.copy()
    old[2] = -1e6
    bad = RolloutGroup(None, [dataclasses.replace(ro, token_logprobs_old=old)] + group.rollouts[1:])
    with pytest.raises(NumericError, match="token 2"):
        grpo_loss(bad, p, ref, GrpoConfig())


def test_rollout_length_mismatch():
    with pytest.raises(ValueError):
        Rollout(None, ["a"], [None, None], np.zeros(1), np.ones(1, bool), 0.0)


def test_group_needs_two():
    group, _, _ = random_instance(np.random.default_rng(0))
    with pytest.raises(ValueError):
        RolloutGroup(None, group.rollouts[:1])


# -- params and config ------------------------------------------------------------

def test_params_validation():
    with pytest.raises(ValueError):
        PolicyParams(np.zeros((2, 2)))
    w = np.zeros((N_FEATURES, N_HEADS))
    w[0, 0] = np.inf
    with pytest.raises(NumericError):
        PolicyParams(w)


@pytest.mark.parametrize("kw", [{"group_size": 1}, {"clip_eps": 0.0}, {"clip_eps": 1.0}, {"kl_beta": -0.1},
                                {"learning_rate": 0.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        GrpoConfig(**kw).validate()


def test_checkpoint_roundtrip(tmp_path):
    p = PolicyParams(np.random.default_rng(0).normal(size=(N_FEATURES, N_HEADS)), 7)
    save_checkpoint(tmp_path / "c.json", p, "abc", {"seed": 3})
    q, meta = load_checkpoint(tmp_path / "c.json")
    assert np.array_equal(p.weights, q.weights) and q.version == 7
    assert meta["config_hash"] == "abc" and meta["seed"] == 3
    assert json.loads((tmp_path / "c.json").read_text())["version"] == 7


def test_config_hash_is_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


# -- collection and training ------------------------------------------------------

@pytest.fixture(scope="module")
def maze_task():
    return generate_maze_tasks(1, 21)[0]


def test_greedy_group_collapses(maze_task):
    g = collect_group(maze_task, PolicyParams.initial(), 3, GrpoConfig(group_size=3), temperature=0.0)
    texts = {tuple(ro.tokens) for ro in g.rollouts}
    assert len(texts) == 1 and np.ptp(g.rewards) == 0
    assert not group_advantages(g.rewards).any()


def test_sampled_group_rewards_in_range(maze_task):
    g = collect_group(maze_task, PolicyParams.initial(), 2, GrpoConfig(group_size=16), seed=4)
    assert len(g.rollouts) == 16
    assert all(0.0 <= r <= 3.0 for r in g.rewards)


def test_same_seed_same_group(maze_task):
    cfg = GrpoConfig(group_size=4)
    a = collect_group(maze_task, PolicyParams.initial(), 1, cfg, seed=(1, 2))
    b = collect_group(maze_task, PolicyParams.initial(), 1, cfg, seed=(1, 2))
    for x, y in zip(a.rollouts, b.rollouts):
        assert x.tokens == y.tokens and np.array_equal(x.token_logprobs_old, y.token_logprobs_old)
    assert a.rewards.tolist() == b.rewards.tolist()


def test_collected_rollouts_mask_observations(maze_task):
    g = collect_group(maze_task, PolicyParams.initial(), 2, GrpoConfig(group_size=2), seed=0)
    for ro in g.rollouts:
        assert np.array_equal(ro.token_mask, observation_mask(ro.tokens))
        assert all((d is None) == (not m) for d, m in zip(ro.decisions, ro.token_mask))
        np.testing.assert_array_equal(ro.token_logprobs_old[ro.token_mask],
                                      token_logprobs(PolicyParams.initial().weights, ro.decisions)[ro.token_mask])


def test_first_update_has_unit_ratios(maze_task):
    p = PolicyParams.initial()
    g = collect_group(maze_task, p, 2, GrpoConfig(group_size=4), seed=1)
    _, _, stats = grpo_loss(g, p, p, GrpoConfig())
    assert stats.clip_frac == 0.0 and stats.kl == 0.0


def test_stage_one_records_no_plan_tokens(maze_task):
    g = collect_group(maze_task, PolicyParams.initial(), 1, GrpoConfig(group_size=2), seed=0)
    from planrl.policy import PLAN, PLAN_FORM
    heads = {d.head for ro in g.rollouts for d in ro.decisions if d is not None}
    assert PLAN not in heads and PLAN_FORM not in heads


def test_zero_advantage_batch_leaves_params(maze_task):
    p = PolicyParams.initial()
    g = collect_group(maze_task, p, 3, GrpoConfig(group_size=2), temperature=0.0)
    new, m = train_step([g], p, p, GrpoConfig(kl_beta=0.0))
    assert np.array_equal(new.weights, p.weights) and new.version == p.version + 1
    assert m.mean_abs_adv == 0.0


def test_train_step_does_not_mutate_inputs():
    group, p, ref = random_instance(np.random.default_rng(2))
    w0 = p.weights.copy()
    new, _ = train_step([group], p, ref, GrpoConfig(learning_rate=0.5))
    assert np.array_equal(p.weights, w0) and not np.array_equal(new.weights, w0)


def test_train_step_error_leaves_params():
    group, p, ref = random_instance(np.random.default_rng(2), mask_prob=0.0)
    ro = group.rollouts[0]
    old = ro.token_logprobs_old.copy()
    old[0] = -1e6
    bad = RolloutGroup(None, [dataclasses.replace(ro, token_logprobs_old=old)] + group.rollouts[1:])
    w0 = p.weights.copy()
    with pytest.raises(NumericError):
        train_step([bad], p, ref, GrpoConfig())
    assert np.array_equal(p.weights, w0) and p.version == 0


def test_large_kl_pulls_toward_reference():
    rng = np.random.default_rng(8)
    group, p, ref = random_instance(rng, jitter=0.0)
    ref = PolicyParams(p.weights + rng.normal(0, 0.5, p.weights.shape))
    cfg = GrpoConfig(kl_beta=10.0, learning_rate=0.002)
    kls = []
    for _ in range(5):
        p, m = train_step([group], p, ref, cfg)
        kls.append(m.kl)
    assert all(b < a for a, b in zip(kls, kls[1:]))
