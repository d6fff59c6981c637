#!/usr/bin/env python3
"""
Tests for requirement planning, sub-team formation and task assignment
"""

import sys
import os
import random
import logging
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__)))

from hypothesis import given, settings as hyp_settings, strategies as st

from assembler.errors import Unplannable
from assembler.geometry import manhattan
from assembler.settings_manager import SettingsManager
from assembler.task_planner import (
    OrderedPlan, TaskAssignment, assign_tasks, form_subteams, is_master, monitor_assignments, plan_requirements,
)
from assembler.world_state import Requirement, TaskSpec, generate_task, generate_world

GENERATED_TASKS = 1000


def make_config(**overrides):
    settings = SettingsManager()
    settings.update({"width": 20, "height": 20, "entities_per_team": 2, "teams": ["A"],
                     "task_size_min": 1, "task_size_max": 6, "initial_tasks": 0})
    settings.update(overrides)
    return settings.to_config()


def buildable(plan):
    """Each requirement after the first touches one placed before it"""
    seq = list(plan)
    if not seq or (seq[0].x, seq[0].y) != (0, 1):
        return False
    for i, req in enumerate(seq[1:], start=1):
        if not any(manhattan((req.x, req.y), (p.x, p.y)) == 1 for p in seq[:i]):
            return False
    return True


def test_plan_requirements_reference_case():
    """Planner orders the reference three-block task"""
    print("Testing plan_requirements reference case...")
    reqs = [Requirement(1, 2, "b0"), Requirement(0, 2, "b0"), Requirement(0, 1, "b1")]
    started = time.perf_counter()
    plan = plan_requirements(reqs)
    elapsed = time.perf_counter() - started
    assert list(plan) == [Requirement(0, 1, "b1"), Requirement(0, 2, "b0"), Requirement(1, 2, "b0")]
    assert plan.to_list() == [[0, 1, "b1"], [0, 2, "b0"], [1, 2, "b0"]]
    assert OrderedPlan.from_list(plan.to_list()) == plan
    assert elapsed < 0.01
    print("✓ Reference plan passed")


def test_plan_requirements_single_and_errors():
    print("Testing plan_requirements edge cases...")
    assert list(plan_requirements([Requirement(0, 1, "b0")])) == [Requirement(0, 1, "b0")]
    for bad in ([], [Requirement(0, 2, "b0")], [Requirement(0, 1, "b0"), Requirement(0, 3, "b1")],
                [Requirement(0, 1, "b0"), Requirement(0, 1, "b1")]):
        try:
            plan_requirements(bad)
            assert False, f"expected Unplannable for {bad}"
        except Unplannable:
            pass
    print("✓ Planner edge cases passed")


def test_generated_tasks_always_plan():
    """Every task the generator produces plans into a buildable order"""
    print("Testing generator/planner closure...")
    world = generate_world(make_config(seed=7))
    started = time.perf_counter()
    for _ in range(GENERATED_TASKS):
        task = generate_task(world)
        assert 1 <= len(task.requirements) <= 6
        plan = plan_requirements(task.requirements)
        assert sorted(plan) == sorted(task.requirements)
        assert buildable(plan), task.requirements
    assert time.perf_counter() - started < 5.0
    print(f"✓ {GENERATED_TASKS} generated tasks planned")


@st.composite
def server_requirements(draw):
    """Requirement sets built by the server walk: start at (0, 1), step S, E or W"""
    size = draw(st.integers(min_value=1, max_value=8))
    cells = [(0, 1)]
    for _ in range(size - 1):
        last = cells[-1]
        options = [c for c in ((last[0], last[1] + 1), (last[0] + 1, last[1]), (last[0] - 1, last[1]))
                   if c not in cells]
        cells.append(draw(st.sampled_from(options)))
    types = draw(st.lists(st.sampled_from(["b0", "b1", "b2"]), min_size=size, max_size=size))
    return [Requirement(x, y, t) for (x, y), t in zip(cells, types)]


@hyp_settings(max_examples=200, deadline=None)
@given(server_requirements(), st.randoms(use_true_random=False))
def test_plan_is_permutation_invariant(reqs, rnd):
    shuffled = list(reqs)
    rnd.shuffle(shuffled)
    plan = plan_requirements(shuffled)
    assert plan == plan_requirements(reqs)
    assert buildable(plan)


def test_form_subteams_cliques():
    print("Testing form_subteams...")
    identified = {
        "A01": {"A02", "A03"},
        "A02": {"A01", "A03"},
        "A03": {"A01", "A02", "A04"},
        "A04": {"A03"},
        "A05": set(),
    }
    subteams = form_subteams(["A01", "A02", "A03", "A04", "A05"], identified)
    assert subteams == [["A01", "A02", "A03"], ["A04"], ["A05"]]
    # One-sided identification is not an edge
    assert form_subteams(["A01", "A02"], {"A01": {"A02"}, "A02": set()}) == [["A01"], ["A02"]]
    print("✓ Sub-team formation passed")


def test_assign_tasks_prefers_largest_feasible():
    print("Testing assign_tasks...")
    big = TaskSpec("task1", 200, 30, (Requirement(0, 1, "b0"), Requirement(0, 2, "b1"), Requirement(1, 2, "b0")))
    small = TaskSpec("task2", 200, 10, (Requirement(0, 1, "b1"),))
    tight = TaskSpec("task3", 40, 20, (Requirement(0, 1, "b0"), Requirement(1, 1, "b1")))
    done = TaskSpec("task4", 200, 20, (Requirement(0, 1, "b0"), Requirement(0, 2, "b0")), submitted_by="B")

    assignments = assign_tasks([["A03", "A01", "A02"], ["A05"]], [small, tight, big, done], 0, 60)
    assert [a.to_dict() for a in assignments] == [
        {"agent": "A01", "task": "task1", "req": [0, 1, "b0"]},
        {"agent": "A02", "task": "task1", "req": [0, 2, "b1"]},
        {"agent": "A03", "task": "task1", "req": [1, 2, "b0"]},
        {"agent": "A05", "task": "task2", "req": [0, 1, "b1"]},
    ]
    assert is_master(assignments[0]) and not is_master(assignments[1])
    # Too little slack and already-taken tasks are skipped
    assert assign_tasks([["A01", "A02"]], [tight], 0, 60) == []
    assert assign_tasks([["A01"]], [small], 0, 60, taken={"task2"}) == []
    print("✓ Task assignment passed")


def test_assign_tasks_name_tie_break():
    a = TaskSpec("task9", 150, 10, (Requirement(0, 1, "b0"),))
    b = TaskSpec("task10", 150, 10, (Requirement(0, 1, "b1"),))
    assignments = assign_tasks([["A01"]], [a, b], 0, 60)
    assert assignments == [TaskAssignment("A01", "task10", Requirement(0, 1, "b1"))]


def test_monitor_assignments_cancels_dead_tasks():
    print("Testing monitor_assignments...")
    live = TaskSpec("task1", 100, 10, (Requirement(0, 1, "b0"),))
    taken = TaskSpec("task2", 100, 10, (Requirement(0, 1, "b0"),), submitted_by="B")
    late = TaskSpec("task3", 20, 10, (Requirement(0, 1, "b0"),))
    assignments = [
        TaskAssignment("A01", "task1", Requirement(0, 1, "b0")),
        TaskAssignment("A02", "task2", Requirement(0, 1, "b0")),
        TaskAssignment("A03", "task3", Requirement(0, 1, "b0")),
        TaskAssignment("A04", "task4", Requirement(0, 1, "b0")),
    ]
    kept, cancelled = monitor_assignments(assignments, [live, taken, late], 21)
    assert [a.agent for a in kept] == ["A01"]
    assert [a.agent for a in cancelled] == ["A02", "A03", "A04"]
    print("✓ Assignment monitoring passed")


def main():
    """Run all tests"""
    print("Task Planner Test Suite")
    print("=" * 40)

    logging.basicConfig(level=logging.WARNING)

    try:
        test_plan_requirements_reference_case()
        test_plan_requirements_single_and_errors()
        test_generated_tasks_always_plan()
        test_plan_is_permutation_invariant()
        test_form_subteams_cliques()
        test_assign_tasks_prefers_largest_feasible()
        test_assign_tasks_name_tie_break()
        test_monitor_assignments_cancels_dead_tasks()

        print("\n" + "=" * 40)
        print("✓ All tests passed!")
        return 0

    except Exception as e:
        print(f"\n✗ Test failed: {e}")
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
