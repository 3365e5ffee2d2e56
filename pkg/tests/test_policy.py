import numpy as np

from planrl.adaplan import RuleSelector, run_episode
from planrl.envsim import make_env
from planrl.envsim.tasks import reference_maze, generate_textcraft_tasks, generate_wordle_tasks
from planrl.oracle import OracleExecutor, OraclePlanner, oracle_clauses, oracle_next_action
from planrl.policy import EXEC, FORM, FORMS, PLAN, PolicyAgent, executor_candidates, initial_weights, sample
from planrl.reward import OBS_CLOSE, OBS_OPEN


def test_sample_greedy_is_argmax():
    w = np.zeros((5, 4))
    w[2, EXEC] = 1.0
    feats = np.eye(5)[[0, 2, 4]]
    assert sample(w, EXEC, feats, np.random.default_rng(0), 0.0) == 1


def test_sample_frequencies_follow_softmax():
    w = np.zeros((5, 4))
    w[:2, FORM] = [0.0, np.log(3.0)]
    rng = np.random.default_rng(0)
    draws = [sample(w, FORM, np.eye(5)[:2], rng, 1.0) for _ in range(20000)]
    assert abs(np.mean(draws) - 0.75) < 0.015


def test_maze_executor_candidates_are_moves():
    env = make_env(reference_maze())
    env.reset()
    cands, feats = executor_candidates(env, "Step 1: move right")
    assert sorted(cands) == ["move down", "move left", "move right", "move up"]
    right = cands.index("move right")
    assert feats[right, 0] == 1.0 and feats[cands.index("move left"), 3] == 1.0


def test_agent_records_decisions_and_observation_spans():
    agent = PolicyAgent(initial_weights(), np.random.default_rng(3), 1.0)
    traj = run_episode(reference_maze(), agent, agent, RuleSelector())
    texts, decisions = agent.finish(traj)
    assert len(texts) == len(decisions)
    assert texts.count(OBS_OPEN) == texts.count(OBS_CLOSE) == len(traj.turns) + 1
    heads = {d.head for d in decisions if d is not None}
    assert {FORM, EXEC, PLAN} <= heads


def test_greedy_initial_policy_writes_act_form():
    agent = PolicyAgent(initial_weights(), np.random.default_rng(0), 0.0)
    traj = run_episode(reference_maze(), agent, agent, RuleSelector())
    assert FORMS[int(np.argmax(initial_weights()[:4, FORM]))] == "act"
    assert all(t.raw.startswith("Action: ") for t in traj.turns)


def test_oracle_clauses_cover_environments():
    for task in [reference_maze()] + generate_wordle_tasks(2, 1) + generate_textcraft_tasks(2, 1):
        env = make_env(task)
        env.reset()
        clauses = oracle_clauses(env)
        assert clauses
        assert oracle_next_action(env)


def test_oracle_variants_are_alternative_shortest_paths():
    grid = [[0] * 4 for _ in range(4)]
    from planrl.envsim.tasks import maze_task

    task = maze_task(grid, (0, 0), (3, 3))
    env = make_env(task)
    env.reset()
    paths = {tuple(oracle_clauses(env, v)) for v in range(6)}
    assert len(paths) > 1 and all(len(p) == 6 for p in paths)


def test_oracle_executor_without_plan_uses_oracle():
    from planrl.adaplan import EpisodeConfig

    traj = run_episode(reference_maze(), None, OracleExecutor(), None, cfg=EpisodeConfig(mode="react"))
    assert traj.success and len(traj.turns) == 12
    traj = run_episode(reference_maze(), OraclePlanner(), OracleExecutor(), RuleSelector())
    assert traj.turns[0].raw.startswith("Action: move right")
