#!/usr/bin/env python3
"""
Tests for per-agent map knowledge and navigation queries
"""

import sys
import os
import random
import logging
import time
from collections import deque
from types import SimpleNamespace

sys.path.insert(0, os.path.join(os.path.dirname(__file__)))

from hypothesis import given, settings as hyp_settings, strategies as st

from assembler.attachment_model import AttachmentModel
from assembler.geometry import DIRECTIONS, add, neighbours
from assembler.map_model import MapModel, MapPercept, VirtualPosition, path_invalidated
from assembler.percept_watcher import PerceptIndex

ORACLE_MAPS = 200
ORACLE_PAIRS = 50
MAP_SIZE = 20


def random_model(rng, size=MAP_SIZE):
    """Known map with obstacles, blocks and a few never-seen cells"""
    model = MapModel("A01", chunk_size=5)
    for y in range(size):
        for x in range(size):
            roll = rng.random()
            if roll < 0.05:
                continue
            terrain = "obstacle" if roll < 0.3 else ("goal" if roll < 0.35 else "empty")
            things = (("block", "b0"),) if terrain != "obstacle" and rng.random() < 0.05 else ()
            model.cells[(x, y)] = MapPercept((x, y), terrain, things, 0)
    return model


def bfs_length(model, origin, goal):
    """Plain BFS oracle with the same entry rule for the destination"""
    if origin == goal:
        return 0
    goal_percept = model.get(goal)
    if goal_percept is None or goal_percept.terrain not in ("empty", "goal"):
        return None
    dist = {origin: 0}
    queue = deque([origin])
    while queue:
        cell = queue.popleft()
        for nxt in neighbours(cell):
            if nxt in dist:
                continue
            if nxt == goal:
                return dist[cell] + 1
            if model.is_traversable(nxt):
                dist[nxt] = dist[cell] + 1
                queue.append(nxt)
    return None


def walk(model, origin, path, goal):
    cell = origin
    for i, direction in enumerate(path):
        cell = add(cell, DIRECTIONS[direction])
        if i < len(path) - 1:
            assert model.is_traversable(cell), f"path crosses {cell}"
    assert cell == goal


def test_astar_matches_bfs_oracle():
    """A* path length equals BFS length on random known maps, or both find nothing"""
    print("Testing A* against the BFS oracle...")
    rng = random.Random(2024)
    started = time.perf_counter()
    reachable = 0
    for _ in range(ORACLE_MAPS):
        model = random_model(rng)
        for _ in range(ORACLE_PAIRS):
            origin = (rng.randrange(MAP_SIZE), rng.randrange(MAP_SIZE))
            goal = (rng.randrange(MAP_SIZE), rng.randrange(MAP_SIZE))
            path = model.shortest_path(origin, goal)
            expected = bfs_length(model, origin, goal)
            if expected is None:
                assert path is None, (origin, goal, path)
            else:
                assert path is not None and len(path) == expected, (origin, goal, path, expected)
                walk(model, origin, path, goal)
                reachable += 1
    assert reachable > 0
    assert time.perf_counter() - started < 10.0
    print(f"✓ A* agreed with BFS on {ORACLE_MAPS * ORACLE_PAIRS} queries")


def test_shortest_path_ignores_own_attachments():
    model = MapModel("A01")
    for x in range(4):
        model.cells[(x, 0)] = MapPercept((x, 0), "empty", (), 0)
    model.cells[(1, 0)] = MapPercept((1, 0), "empty", (("block", "b0"),), 0)
    assert model.shortest_path((0, 0), (3, 0)) is None
    assert model.shortest_path((0, 0), (3, 0), ignore={(1, 0)}) == ["e", "e", "e"]
    # Unknown cells are never entered
    assert model.shortest_path((0, 0), (5, 0)) is None


def test_find_nearest_tie_break():
    print("Testing find_nearest...")
    model = MapModel("A01")
    for y in range(-2, 3):
        for x in range(-2, 3):
            model.cells[(x, y)] = MapPercept((x, y), "empty", (), 0)
    model.cells[(1, 1)] = MapPercept((1, 1), "goal", (), 0)
    model.cells[(-1, -1)] = MapPercept((-1, -1), "goal", (), 0)
    model.cells[(2, -2)] = MapPercept((2, -2), "obstacle", (), 0)
    # Both goals are two steps away; (y, x) order picks the northern one
    assert model.find_nearest((0, 0), lambda p: p.terrain == "goal") == (-1, -1)
    # Obstacles never match
    assert model.find_nearest((0, 0), lambda p: p.terrain == "obstacle") is None
    assert model.find_nearest((0, 0), lambda p: p.terrain == "lava") is None
    print("✓ find_nearest passed")


def test_merge_remote_last_seen_wins():
    print("Testing merge_remote...")
    local = MapModel("A01")
    local.cells[(0, 0)] = MapPercept((0, 0), "empty", (), 5)
    local.cells[(1, 0)] = MapPercept((1, 0), "empty", (), 5)
    remote = [
        MapPercept((-3, 0), "obstacle", (), 5),   # same age: local kept
        MapPercept((-2, 0), "goal", (), 7),       # newer: replaces
        MapPercept((0, 4), "empty", (("dispenser", "b1"),), 2),  # unknown locally: added
    ]
    merged = local.merge_remote(remote, (3, 0))
    assert merged == {(1, 0), (3, 4)}
    assert local.get((0, 0)).terrain == "empty"
    assert local.get((1, 0)) == MapPercept((1, 0), "goal", (), 7)
    assert local.get((3, 4)).has_thing("dispenser", "b1")
    assert local.drain_changes() == [[1, 0, "goal", [], 7], [3, 4, "empty", [["dispenser", "b1"]], 2]]
    assert local.drain_changes() == []
    print("✓ merge_remote passed")


@hyp_settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4), st.sampled_from(["empty", "goal", "obstacle"]),
                          st.integers(0, 9)), max_size=30),
       st.integers(-5, 5), st.integers(-5, 5))
def test_merge_remote_is_idempotent(cells, dx, dy):
    remote = {}
    for x, y, terrain, seen in cells:
        remote[(x, y)] = MapPercept((x, y), terrain, (), seen)
    model = MapModel("A01")
    model.merge_remote(list(remote.values()), (dx, dy))
    snapshot = dict(model.cells)
    assert model.merge_remote(list(remote.values()), (dx, dy)) == set()
    assert model.cells == snapshot


def test_explore_direction_heads_for_unknown():
    print("Testing explore_direction...")
    model = MapModel("A01", chunk_size=5)
    for y in range(-2, 3):
        for x in range(-2, 8):
            model.cells[(x, y)] = MapPercept((x, y), "empty", (), 0)
    for y in range(-3, 4):
        model.cells[(-3, y)] = MapPercept((-3, y), "obstacle", (), 0)
    for x in range(-3, 9):
        model.cells[(x, -3)] = MapPercept((x, -3), "obstacle", (), 0)
        model.cells[(x, 3)] = MapPercept((x, 3), "obstacle", (), 0)
    # The only unknown cells reachable lie east of x = 7
    assert model.explore_direction((0, 0)) == "e"
    # Fully enclosed known map falls back to east
    closed = MapModel("A01")
    closed.cells[(0, 0)] = MapPercept((0, 0), "empty", (), 0)
    for cell in neighbours((0, 0)):
        closed.cells[cell] = MapPercept(cell, "obstacle", (), 0)
    assert closed.explore_direction((0, 0)) == "e"
    print("✓ explore_direction passed")


def test_path_invalidated_uses_immediate_percepts():
    percepts = PerceptIndex(terrain={(0, 0): "empty", (1, 0): "empty", (0, 1): "obstacle", (-1, 0): "empty"},
                            things={(-1, 0): [("entity", "B")], (1, 0): [("block", "b0")]})
    attach = AttachmentModel()
    attach.blocks[(1, 0)] = "b0"
    container = SimpleNamespace(percepts=percepts, attach_model=attach)
    assert path_invalidated(["s", "e"], container)
    assert path_invalidated(["w"], container)
    # Own attached block does not invalidate the path
    assert not path_invalidated(["e"], container)
    # Outside the percepts nothing is known
    assert not path_invalidated(["n"], container)
    assert not path_invalidated([], container)


def test_virtual_position_moves():
    pos = VirtualPosition()
    for direction in ["n", "n", "e", "s", "w", "w"]:
        pos = pos.moved(direction)
    assert pos.cell == (-1, -1)


def main():
    """Run all tests"""
    print("Map Model Test Suite")
    print("=" * 40)

    logging.basicConfig(level=logging.WARNING)

    try:
        test_astar_matches_bfs_oracle()
        test_shortest_path_ignores_own_attachments()
        test_find_nearest_tie_break()
        test_merge_remote_last_seen_wins()
        test_merge_remote_is_idempotent()
        test_explore_direction_heads_for_unknown()
        test_path_invalidated_uses_immediate_percepts()
        test_virtual_position_moves()

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
