# --- movement.py ---
"""Navigation shared by every agent role: path following, rotation contingency and getting unstuck"""
import logging
from collections import deque
from dataclasses import dataclass, field

from assembler.geometry import manhattan, neighbours, rotate
from assembler.map_model import path_invalidated
from assembler.world_engine import ActionRequest

# Rotation sequences tried when an attachment blocks the travel direction
ROTATION_PLANS = (("cw", 1), ("ccw", 1), ("cw", 2), ("ccw", 2), ("cw", 3), ("ccw", 3))


@dataclass
class NavMemory:
    target: tuple = None
    path: list = field(default_factory=list)
    pending: str = None
    failed_clears: set = field(default_factory=set)
    clear_target: tuple = None
    clear_energy: int = 0
    vision_radius: int = None

    def reset(self):
        self.target = None
        self.path = []
        self.pending = None


def attachment_cells(container):
    """Cells of the agent's own attachments in its virtual frame"""
    return {container.to_absolute(o) for o in container.attach_model.offsets()}


def move_with_rotation(container, direction):
    """move(direction) if possible, else the first rotation that frees it, else None"""
    attach = container.attach_model
    percepts = container.percepts
    if direction not in attach.blocked_moves(percepts):
        return ActionRequest.move(direction)
    for rotation, turns in ROTATION_PLANS:
        model = attach
        feasible = True
        for _ in range(turns):
            if rotation in model.blocked_rotations(percepts):
                feasible = False
                break
            model = model.predict_rotated(rotation)
        if feasible and direction not in model.blocked_moves(percepts):
            return ActionRequest.rotate(rotation)
    return None


def step_toward(container, nav, target, stop_adjacent=False):
    """Next action on the way to `target` in the virtual frame.

    Returns None once arrived, ActionRequest otherwise, or "unreachable" when
    no path exists on current map knowledge.
    """
    origin = container.origin
    target = tuple(target)
    raw = container.raw
    if nav.pending is not None:
        if raw.last_action.get("kind") == "move" and raw.last_action_result == "success" \
                and raw.last_action.get("direction") == nav.pending and nav.path:
            nav.path.pop(0)
        elif raw.last_action.get("kind") == "move":
            nav.path = []
        nav.pending = None

    remaining = manhattan(origin, target)
    if remaining == 0 or (stop_adjacent and remaining == 1):
        nav.reset()
        return None

    if nav.target != target or not nav.path or path_invalidated(nav.path, container):
        model = container.map_model
        path = model.shortest_path(origin, target, attachment_cells(container))
        if path is None:
            nav.reset()
            return "unreachable"
        if stop_adjacent and path:
            path = path[:-1]
            if not path:
                nav.reset()
                return None
        nav.target = target
        nav.path = path

    action = move_with_rotation(container, nav.path[0])
    if action is None:
        nav.path = []
        return _stuck(container, nav)
    if action.kind == "move":
        nav.pending = action.direction
    return action


def _stuck(container, nav):
    action = unstuck_decide(container, nav)
    return action if action is not None else ActionRequest.skip()


def explore(container, nav):
    """One exploration step toward the closest chunk with unknown cells"""
    unstuck = unstuck_decide(container, nav)
    if unstuck is not None:
        return unstuck
    direction = container.map_model.explore_direction(container.origin, attachment_cells(container))
    action = move_with_rotation(container, direction)
    if action is not None:
        return action
    for fallback in ("n", "e", "s", "w"):
        action = move_with_rotation(container, fallback)
        if action is not None:
            return action
    return ActionRequest.skip()


def _free_region(container, radius):
    """Flood fill of free cells from the agent, bounded by vision"""
    percepts = container.percepts
    own = container.attach_model.offsets()
    region = {(0, 0)}
    queue = deque([(0, 0)])
    while queue:
        cell = queue.popleft()
        for nxt in neighbours(cell):
            if nxt in region or manhattan(nxt) > radius:
                continue
            if percepts.is_free(nxt, own):
                region.add(nxt)
                queue.append(nxt)
    return region


def unstuck_decide(container, nav):
    """clear() at the best wall cell when caged within vision, else None"""
    percepts = container.percepts
    radius = nav.vision_radius if nav.vision_radius is not None else max(manhattan(o) for o in percepts.terrain)
    region = _free_region(container, radius)
    if any(manhattan(cell) == radius for cell in region):
        nav.clear_target = None
        return None

    if container.raw.energy < nav.clear_energy:
        return ActionRequest.skip()

    own = container.attach_model.offsets()
    if nav.clear_target is not None:
        offset = container.to_relative(nav.clear_target)
        last = container.raw
        if last.last_action.get("kind") == "clear" and last.last_action_result == "failed_target":
            nav.failed_clears.add(nav.clear_target)
        elif _clearable(percepts, offset, own):
            return ActionRequest.clear(offset)
        nav.clear_target = None

    candidates = []
    for cell in region:
        for nxt in neighbours(cell):
            if nxt in region or nxt in own or nxt == (0, 0):
                continue
            if not _clearable(percepts, nxt, own):
                continue
            if container.to_absolute(nxt) in nav.failed_clears:
                continue
            outer = sum(1 for n in neighbours(nxt) if n not in region and percepts.is_free(n))
            candidates.append((-outer, nxt[1], nxt[0], nxt))
    if not candidates:
        logging.debug(f"{container.agent_name}: caged with nothing left to clear")
        return None
    target = min(candidates)[3]
    nav.clear_target = container.to_absolute(target)
    logging.debug(f"{container.agent_name}: caged, clearing {target}")
    return ActionRequest.clear(target)


def _clearable(percepts, offset, own):
    if offset in own:
        return False
    terrain = percepts.terrain.get(offset)
    if terrain is None:
        return False
    return terrain == "obstacle" or percepts.has_thing(offset, "block")


def rotation_toward(current, wanted):
    """Rotation direction that brings `current` to `wanted` soonest, cw first"""
    if rotate(current, "cw") == wanted or rotate(rotate(current, "cw"), "cw") == wanted:
        return "cw"
    if rotate(current, "ccw") == wanted:
        return "ccw"
    return None

