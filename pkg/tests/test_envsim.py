from collections import Counter

import numpy as np
import pytest

from planrl.envsim import EpisodeOverError, TaskValidationError, make_env, maze, oracle_optimal_length, wordle
from planrl.envsim.tasks import (
    EnvKind,
    RECIPE_BOOK,
    reference_maze,
    env_reset,
    generate_maze_tasks,
    generate_textcraft_tasks,
    generate_wordle_tasks,
    load_tasks,
    maze_task,
    oracle_solution,
    save_tasks,
    task_from_dict,
    task_to_dict,
    textcraft_task,
    wordle_task,
)
from planrl.envsim.textcraft import Recipe


# -- maze -------------------------------------------------------------------------

def test_maze_reset_text_names_goal_and_position():
    _, obs = env_reset(reference_maze())
    assert "goal is at position 8, 6" in obs.text
    assert "current position is at position 1, 1" in obs.text
    assert not obs.terminal


def test_maze_move_right_reports_new_cell():
    env = make_env(reference_maze())
    env.reset()
    obs = env.step("move right")
    assert "from 1, 1 to 1, 2" in obs.text
    assert env.pos == (1, 2)


def test_maze_wall_blocks_move():
    env = make_env(reference_maze())
    env.reset()
    obs = env.step("move left")
    assert env.pos == (1, 1)
    assert "wall" in obs.text and not env.last_valid
    assert env.turn == 1


def test_reference_maze_optimal_length_is_12():
    task = reference_maze()
    assert oracle_optimal_length(task) == 12
    sol = oracle_solution(task)
    assert sol[-1] == "move right" and len(sol) == 12


def test_open_3x3_maze_length_is_manhattan():
    # 3x3 open interior inside a wall border, so interior cells are numbered from 1
    grid = [[1] * 5] + [[1, 0, 0, 0, 1] for _ in range(3)] + [[1] * 5]
    task = maze_task(grid, (1, 1), (1, 3))
    assert oracle_optimal_length(task) == 2


def test_maze_budget_is_twice_oracle_length():
    task = reference_maze()
    assert task.max_turns == 24


def test_unreachable_maze_rejected():
    with pytest.raises(TaskValidationError, match="reachable"):
        maze_task([[0, 1, 0]], (0, 0), (0, 2))


def test_maze_goal_on_wall_rejected():
    with pytest.raises(TaskValidationError, match="goal"):
        maze_task([[0, 0, 1]], (0, 0), (0, 2))


def test_budget_exhaustion_is_terminal_failure():
    task = maze_task([[0, 0, 0, 0]], (0, 0), (0, 3), max_turns=2)
    env = make_env(task)
    env.reset()
    env.step("move right")
    obs = env.step("move left")
    assert obs.terminal and not obs.success
    with pytest.raises(EpisodeOverError):
        env.step("move right")


def test_reaching_goal_sets_success():
    task = maze_task([[0, 0]], (0, 0), (0, 1))
    env = make_env(task)
    env.reset()
    obs = env.step("move right")
    assert obs.terminal and obs.success and "Task Completed!" in obs.text


# -- wordle -----------------------------------------------------------------------

def test_feedback_exact_match():
    assert wordle.feedback("shire", "shire") == "g g g g g"


def test_feedback_raise_shire():
    # frozen from the brute-force letter-assignment scorer
    assert wordle.feedback_bruteforce("raise", "shire") == "y b g y g"
    assert wordle.feedback("raise", "shire") == "y b g y g"


def test_feedback_disjoint_letters():
    assert wordle.feedback("pygmy", "laden") == "b b b b b"


@pytest.mark.parametrize("guess,hidden", [("geese", "those"), ("llama", "hello"), ("speed", "abide"), ("eerie", "three")])
def test_duplicate_letters_match_bruteforce(guess, hidden):
    assert wordle.feedback(guess, hidden) == wordle.feedback_bruteforce(guess, hidden)


def test_duplicate_letter_two_pass_example():
    # one e in the hidden word is green, so the other guessed e's are black
    assert wordle.feedback("geese", "those") == "b b b g g"


def test_wordle_reset_has_six_attempts():
    _, obs = env_reset(wordle_task("shire", ["shire", "raise"]))
    assert "6 attempts" in obs.text and not obs.terminal


def test_invalid_guess_consumes_attempt():
    env = make_env(wordle_task("shire", ["shire", "raise"]))
    env.reset()
    obs = env.step("xyzzy")
    assert "Invalid guess" in obs.text and env.turn == 1 and not obs.terminal


def test_wordle_reference_solver_stays_within_six(small_tasks):
    for task in generate_wordle_tasks(20, 3):
        sol = oracle_solution(task)
        assert len(sol) <= 6
        env = make_env(task)
        env.reset()
        for g in sol:
            obs = env.step(g)
        assert obs.success


def test_bundled_word_list_has_200_words():
    words = wordle.default_words()
    assert len(words) == 200 and len(set(words)) == 200 and all(wordle.is_word(w) for w in words)


def test_hidden_word_validation():
    with pytest.raises(TaskValidationError):
        wordle_task("Shire", ["Shire"])


# -- textcraft --------------------------------------------------------------------

def _stick_task():
    return textcraft_task("stick", [Recipe("stick", 4, (("planks", 2),))], ["planks"])


def test_craft_consumes_ingredients():
    env = make_env(_stick_task())
    env.reset()
    env.step("get 2 planks")
    obs = env.step("craft 4 stick using 2 planks")
    assert obs.success
    assert dict(env.state.inventory) == {"stick": 4}


def test_craft_without_ingredients_fails():
    env = make_env(_stick_task())
    env.reset()
    obs = env.step("craft 4 stick using 2 planks")
    assert not obs.terminal and not env.last_valid
    assert dict(env.state.inventory) == {}


def test_direct_craft_oracle_length_is_two():
    assert oracle_optimal_length(_stick_task()) == 2


def test_textcraft_budget_is_three_times_oracle():
    assert _stick_task().max_turns == 6


def test_empty_recipe_book_rejected():
    with pytest.raises(TaskValidationError):
        textcraft_task("stick", [], ["planks"])


def test_generic_planks_accept_specific_type():
    task = textcraft_task("stick", RECIPE_BOOK, ["oak log"])
    env = make_env(task)
    env.reset()
    env.step("get 1 oak log")
    env.step("craft 4 oak planks using 1 oak log")
    obs = env.step("craft 4 stick using 2 oak planks")
    assert obs.success


def test_textcraft_oracle_solves_generated_tasks():
    for task in generate_textcraft_tasks(18, 5):
        env = make_env(task)
        env.reset()
        sol = oracle_solution(task)
        for a in sol:
            obs = env.step(a)
            assert env.last_valid
        assert obs.success and len(sol) <= task.max_turns


# -- task files, cloning, replay --------------------------------------------------

def test_task_json_roundtrip(tmp_path):
    tasks = generate_maze_tasks(2, 1) + generate_wordle_tasks(2, 2) + generate_textcraft_tasks(2, 3)
    save_tasks(tasks, tmp_path / "t.json")
    again = load_tasks(tmp_path / "t.json")
    assert [task_to_dict(t) for t in again] == [task_to_dict(t) for t in tasks]


def test_task_from_dict_missing_field():
    with pytest.raises(TaskValidationError, match="grid"):
        task_from_dict({"env": "maze", "start": [0, 0], "goal": [0, 1]})


def test_task_from_dict_unknown_kind():
    with pytest.raises(TaskValidationError, match="unknown"):
        task_from_dict({"env": "alfworld"})


def test_generators_are_seeded():
    a = [task_to_dict(t) for t in generate_maze_tasks(5, 9)]
    b = [task_to_dict(t) for t in generate_maze_tasks(5, 9)]
    assert a == b
    assert all(t.env_kind is EnvKind.MAZE for t in generate_maze_tasks(5, 9))


def test_clone_is_independent():
    env = make_env(reference_maze())
    env.reset()
    sim = env.clone()
    sim.step("move right")
    assert env.pos == (1, 1) and env.turn == 0 and sim.pos == (1, 2)


def test_replay_is_reproducible(small_tasks):
    rng = np.random.default_rng(0)
    for task in small_tasks:
        env = make_env(task)
        env.reset()
        actions = []
        while not env.done:
            a = oracle_solution(task)[0] if rng.random() < 0.3 else str(rng.choice(
                ["move up", "move left", "get 1 coal", "c r a n e", "inventory"]))
            actions.append(a)
            env.step(a)
        texts = []
        for _ in range(2):
            e = make_env(task)
            texts.append([e.reset().text] + [e.step(a).text for a in actions])
        assert texts[0] == texts[1]


def test_inventory_counter_never_negative():
    task = textcraft_task("torch", RECIPE_BOOK, ["coal", "oak log"])
    env = make_env(task)
    env.reset()
    for a in ["craft 4 torch using 1 coal, 1 stick", "get 1 coal", "get 1 oak log", "craft 4 oak planks using 1 oak log",
              "craft 4 stick using 2 oak planks", "craft 4 torch using 1 coal, 1 stick"]:
        env.step(a)
        assert all(v > 0 for v in env.state.inventory.values())
    assert env.success
    assert env.state.inventory == Counter({"torch": 4, "stick": 3, "oak planks": 2})


def test_maze_shift_and_walls_symmetric():
    layout = reference_maze().hidden_state
    rows, cols = layout.shape
    for x in range(rows):
        for y in range(cols):
            p = (x, y)
            if not layout.open(p):
                continue
            for d, blocked in layout.walls(p).items():
                q = maze.shift(p, d)
                if not blocked:
                    assert layout.walls(q)[maze.OPPOSITE[d]] is False
