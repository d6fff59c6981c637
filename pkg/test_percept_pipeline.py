#!/usr/bin/env python3
"""
Tests for percept ingestion, virtual positioning, identification and map soundness
"""

import sys
import os
import random
import logging
import threading

sys.path.insert(0, os.path.join(os.path.dirname(__file__)))

from assembler.errors import StepOutOfRange, UnknownAgent
from assembler.geometry import add, sub
from assembler.identification import SightingReport, compute_translation, pair_reports
from assembler.mailbox import Mailbox
from assembler.operator_agent import OperatorAgent
from assembler.percept_watcher import PerceptWatcher
from assembler.settings_manager import SettingsManager
from assembler.world_engine import ActionRequest, WorldEngine

RANDOM_WALK_RUNS = 100
IDENTIFICATION_RUNS = 10
WALK_STEPS = 300

_GLYPH_TERRAIN = {".": "empty", "#": "obstacle", "g": "goal"}


def make_config(layout=None, **overrides):
    settings = SettingsManager()
    settings.update({"teams": ["A", "B"], "entities_per_team": 5, "initial_tasks": 0,
                     "task_probability": 0.0})
    settings.update(overrides)
    if layout is not None:
        settings.set("layout", layout)
    return settings.to_config()


def attach_operators(watcher, config):
    mailbox = Mailbox()
    operators = []
    for team in config.teams:
        members = [n for n in config.agent_names if config.team_of(n) == team]
        operator = OperatorAgent(team, config, mailbox, members)
        watcher.post_ingest_hooks.append(operator.on_ingest)
        operators.append(operator)
    return operators


def random_walk(seed, steps, check, operators=False, snapshots=False):
    """Drive every agent with random moves, calling check(engine, watcher, starts) each step"""
    config = make_config(seed=seed)
    engine = WorldEngine(config, keep_snapshots=snapshots)
    watcher = PerceptWatcher(engine, config)
    if operators:
        attach_operators(watcher, config)
    starts = {name: engine.ground_position(name) for name in engine.agent_names}
    rng = random.Random(seed)
    for _ in range(steps):
        watcher.poll_and_update()
        check(engine, watcher, starts)
        actions = {}
        for name in engine.agent_names:
            if rng.random() < 0.85:
                actions[name] = ActionRequest.move(rng.choice("nesw"))
            else:
                actions[name] = ActionRequest.skip()
        engine.advance(actions)
    return engine, watcher, starts


def test_virtual_position_tracks_ground_truth():
    """enginePos(s) - enginePos(0) equals the virtual position at every step"""
    print("Testing virtual positions against ground truth...")

    def check(engine, watcher, starts):
        for name in engine.agent_names:
            assert watcher.virtual_position(name).cell == sub(engine.ground_position(name), starts[name]), \
                (name, engine.step)

    for run in range(RANDOM_WALK_RUNS):
        random_walk(1000 + run, WALK_STEPS, check)
    print(f"✓ Virtual positions exact over {RANDOM_WALK_RUNS} runs")


def _ground_truth(snapshot, cell):
    x, y = cell
    if not (0 <= x < snapshot["width"] and 0 <= y < snapshot["height"]):
        return "obstacle", [], []
    terrain = _GLYPH_TERRAIN[snapshot["terrain"][y][x]]
    things = [("dispenser", t) for dx, dy, t in snapshot["dispensers"] if (dx, dy) == cell]
    things += [("block", t) for bx, by, _, t, _ in snapshot["blocks"] if (bx, by) == cell]
    entities = [("entity", e["team"]) for e in snapshot["entities"] if tuple(e["pos"]) == cell]
    return terrain, sorted(things), entities


def test_identification_and_map_soundness():
    """Every identification matches true identity and every known cell matches the world when seen"""
    print("Testing identification soundness and map soundness...")
    identifications = 0
    merged_from_peers = 0
    for run in range(IDENTIFICATION_RUNS):
        engine, watcher, starts = random_walk(2000 + run, WALK_STEPS, lambda *a: None,
                                              operators=True, snapshots=True)
        for name in engine.agent_names:
            for peer, translation in watcher.identified(name).items():
                assert engine.config.team_of(peer) == engine.config.team_of(name)
                assert translation.as_tuple() == sub(starts[peer], starts[name]), (name, peer)
                identifications += 1

            for cell, percept in watcher.map_model(name).cells.items():
                world_cell = add(cell, starts[name])
                terrain, things, entities = _ground_truth(engine.snapshots[percept.last_seen], world_cell)
                assert percept.terrain == terrain, (name, cell, percept, terrain)
                assert sorted(t for t in percept.things if t[0] != "entity") == things, (name, cell, percept)
                assert all(t in entities for t in percept.things if t[0] == "entity"), (name, cell, percept)
            if watcher.identified(name):
                merged_from_peers += 1
    assert identifications > 0
    assert merged_from_peers > 0
    print(f"✓ {identifications} identifications sound, maps match ground truth")


def _scripted_watcher(entities, **overrides):
    layout = {"goals": [[9, 9]], "dispensers": [[0, 9, "b0"], [1, 9, "b1"]], "obstacles": [],
              "entities": entities, "tasks": []}
    config = make_config(layout, width=12, height=12, teams=["A"], entities_per_team=len(entities),
                         roles=["builder"] * len(entities), clear_event_rate=0.0, **overrides)
    engine = WorldEngine(config)
    watcher = PerceptWatcher(engine, config)
    attach_operators(watcher, config)
    return engine, watcher


def test_isolated_pair_identifies_on_first_sighting():
    print("Testing isolated pair identification...")
    engine, watcher = _scripted_watcher([[2, 2], [5, 3]])
    watcher.poll_and_update()
    assert watcher.identified("A01")["A02"].as_tuple() == (3, 1)
    assert watcher.identified("A02")["A01"].as_tuple() == (-3, -1)
    container = watcher.get_container("A01", 0)
    assert "A02" in container.identified
    # Both agents now hold the other's view of the map
    assert watcher.map_model("A01").is_known((3 + 5, 1))
    print("✓ Isolated pair identified at step 0")


def test_symmetric_pairs_abort_identification():
    print("Testing ambiguous sightings...")
    engine, watcher = _scripted_watcher([[2, 2], [4, 2], [2, 9], [4, 9]])
    watcher.poll_and_update()
    for name in engine.agent_names:
        assert watcher.identified(name) == {}
    print("✓ Ambiguous sightings identify nobody")


def test_pair_reports_rules():
    reports = [
        SightingReport("A01", 4, (2, 0), (0, 0)),
        SightingReport("A02", 4, (-2, 0), (7, 1)),
        SightingReport("A03", 4, (0, 3), (0, 0)),
    ]
    pairs, aborted = pair_reports(reports)
    assert [(a.reporter, b.reporter) for a, b in pairs] == [("A01", "A02")]
    assert aborted == []
    assert compute_translation((0, 0), (2, 0), (7, 1)).as_tuple() == (-5, -1)
    pairs, _ = pair_reports(reports, lambda a, b: True)
    assert pairs == []


def test_poll_ingests_once_per_step():
    print("Testing ingestion bookkeeping...")
    engine, watcher = _scripted_watcher([[2, 2], [9, 2]])
    assert watcher.poll_and_update()
    count = watcher.parse_count
    assert not watcher.poll_and_update()
    assert watcher.parse_count == count == 2
    engine.advance({"A01": ActionRequest.move("s"), "A02": ActionRequest.move("n")})
    assert watcher.poll_and_update()
    assert watcher.virtual_position("A01").cell == (0, 1)
    assert watcher.virtual_position("A02").cell == (0, -1)
    assert watcher.get_container("A01", 0).virtual_pos.cell == (0, 0)
    print("✓ Ingestion bookkeeping passed")


def test_get_container_blocks_until_ready():
    engine, watcher = _scripted_watcher([[2, 2], [9, 2]])
    watcher.poll_and_update()
    received = {}

    def reader():
        received["container"] = watcher.get_container("A01", 1, timeout=5.0)

    thread = threading.Thread(target=reader)
    thread.start()
    engine.advance({"A01": ActionRequest.move("e"), "A02": ActionRequest.skip()})
    watcher.poll_and_update()
    thread.join(timeout=5.0)
    assert received["container"].current_step == 1
    assert received["container"].origin == (1, 0)

    try:
        watcher.get_container("A01", 7, timeout=0.05)
        assert False, "future step should time out"
    except StepOutOfRange:
        pass
    try:
        watcher.get_container("Z01")
        assert False, "unknown agent"
    except UnknownAgent:
        pass


def test_blocked_move_keeps_position():
    engine, watcher = _scripted_watcher([[0, 0], [9, 2]])
    watcher.poll_and_update()
    engine.advance({"A01": ActionRequest.move("n"), "A02": ActionRequest.skip()})
    watcher.poll_and_update()
    assert watcher.virtual_position("A01").cell == (0, 0)
    assert watcher.get_container("A01").raw.last_action_result == "failed_blocked"


def main():
    """Run all tests"""
    print("Percept Pipeline Test Suite")
    print("=" * 40)

    logging.basicConfig(level=logging.WARNING)

    try:
        test_isolated_pair_identifies_on_first_sighting()
        test_symmetric_pairs_abort_identification()
        test_pair_reports_rules()
        test_poll_ingests_once_per_step()
        test_get_container_blocks_until_ready()
        test_blocked_move_keeps_position()
        test_virtual_position_tracks_ground_truth()
        test_identification_and_map_soundness()

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
