# --- world_engine.py ---
"""Lockstep scenario engine.

`apply_step` is the only writer of a WorldState. Actions resolve one entity
at a time in ascending entity id against the state left by lower ids.
"""
import copy
import logging
import threading
from collections import deque
from dataclasses import dataclass, asdict
from enum import Enum

from assembler.errors import MalformedActionSet, UnknownAgent
from assembler.geometry import DIRECTIONS, ROTATIONS, add, diamond, manhattan, neighbours, rotate, sub
from assembler.percept_watcher import RawPerceptSet
from assembler.world_state import ClearEvent, Terrain, generate_task, generate_world


class ActionResult(str, Enum):
    SUCCESS = "success"
    FAILED_BLOCKED = "failed_blocked"
    FAILED_PARTNER = "failed_partner"
    FAILED_TARGET = "failed_target"
    FAILED_RESOURCES = "failed_resources"
    FAILED_DEADLINE = "failed_deadline"
    FAILED_INVALID = "failed_invalid"


ACTION_KINDS = ("move", "rotate", "attach", "detach", "request", "connect", "clear", "submit", "skip")

# How long a random clear event is announced before it fires
CLEAR_EVENT_WARNING = 3


@dataclass(frozen=True)
class ActionRequest:
    kind: str
    direction: str = None
    rotation: str = None
    partner: str = None
    offset: tuple = None
    task: str = None

    @classmethod
    def move(cls, direction):
        return cls("move", direction=direction)

    @classmethod
    def rotate(cls, rotation):
        return cls("rotate", rotation=rotation)

    @classmethod
    def attach(cls, direction):
        return cls("attach", direction=direction)

    @classmethod
    def detach(cls, direction):
        return cls("detach", direction=direction)

    @classmethod
    def request(cls, direction):
        return cls("request", direction=direction)

    @classmethod
    def connect(cls, partner, offset):
        return cls("connect", partner=partner, offset=tuple(offset))

    @classmethod
    def clear(cls, offset):
        return cls("clear", offset=tuple(offset))

    @classmethod
    def submit(cls, task):
        return cls("submit", task=task)

    @classmethod
    def skip(cls):
        return cls("skip")

    def to_dict(self):
        data = {k: v for k, v in asdict(self).items() if v is not None}
        if "offset" in data:
            data["offset"] = list(data["offset"])
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if data.get("offset") is not None:
            data["offset"] = tuple(data["offset"])
        return cls(**data)

    def is_well_formed(self):
        if self.kind not in ACTION_KINDS:
            return False
        if self.kind in ("move", "attach", "detach", "request"):
            return self.direction in DIRECTIONS
        if self.kind == "rotate":
            return self.rotation in ROTATIONS
        if self.kind == "connect":
            return self.partner is not None and self.offset is not None and len(self.offset) == 2
        if self.kind == "clear":
            return self.offset is not None and len(self.offset) == 2
        if self.kind == "submit":
            return bool(self.task)
        return True


SKIP = ActionRequest.skip()


def compute_percepts(world, entity_id):
    """Limited-vision view of the world for one entity, relative to its cell"""
    entity = world.entities[entity_id]
    terrain_cells = []
    things = []
    attached = []
    for offset in diamond(world.config.vision_radius):
        cell = add(entity.pos, offset)
        terrain_cells.append((offset[0], offset[1], world.terrain_at(cell).value))
        if offset != (0, 0):
            other = world.entity_at(cell)
            if other is not None:
                things.append((offset[0], offset[1], "entity", other.team))
        if cell in world.dispensers:
            things.append((offset[0], offset[1], "dispenser", world.dispensers[cell]))
        block = world.blocks.get(cell)
        if block is not None:
            things.append((offset[0], offset[1], "block", block.type))
            if block.attached_to is not None:
                attached.append((offset[0], offset[1]))
    return RawPerceptSet(
        step=world.step,
        team=entity.team,
        score=world.scores[entity.team],
        energy=entity.energy,
        disabled=entity.is_disabled(world.step),
        last_action=dict(entity.last_action),
        last_action_result=entity.last_result,
        terrain_cells=tuple(terrain_cells),
        things=tuple(things),
        attached_flags=tuple(attached),
        tasks=tuple(copy.copy(t) for t in world.tasks),
    )


def apply_step(world, actions):
    """Resolve one step of actions; returns (world, results, events).

    `actions` maps every entity id to an ActionRequest. Results map entity id
    to ActionResult; events are plain dicts recorded in the trace.
    """
    _check_action_set(world, actions)
    step = world.step
    results = {}
    events = []

    effective = {}
    for entity in world.entities:
        if entity.is_disabled(step):
            effective[entity.id] = SKIP
        else:
            effective[entity.id] = actions[entity.id]

    for entity in world.entities:
        if entity.id in results:
            continue
        action = effective[entity.id]
        if action.kind != "clear":
            entity.clear_charge = None
        handler = _HANDLERS[action.kind]
        outcome = handler(world, entity, action, effective, results, events)
        if outcome is not None:
            results[entity.id] = outcome

    for entity in world.entities:
        entity.last_action = effective[entity.id].to_dict()
        entity.last_result = results[entity.id].value

    _fire_clear_events(world, events)
    _schedule_clear_event(world)

    for entity in world.entities:
        entity.energy = min(world.config.max_energy, entity.energy + world.config.energy_regen)

    world.step += 1
    _refresh_tasks(world, events)
    logging.debug(f"Step {step} resolved: "
                  + ", ".join(f"{e.name}={results[e.id].value}" for e in world.entities))
    return world, results, events


def _check_action_set(world, actions):
    ids = {e.id for e in world.entities}
    if set(actions) != ids:
        missing = sorted(ids - set(actions))
        extra = sorted(set(actions) - ids, key=str)
        raise MalformedActionSet(f"Action set must name every entity once (missing {missing}, unknown {extra})")
    for entity_id, action in actions.items():
        if not isinstance(action, ActionRequest) or not action.is_well_formed():
            raise MalformedActionSet(f"Malformed action for entity {entity_id}: {action!r}")


def _cell_free_for(world, cell, entity, footprint):
    """Whether `entity` may occupy `cell` given its own current footprint"""
    if world.terrain_at(cell) == Terrain.OBSTACLE:
        return False
    if cell in world.dispensers:
        return False
    if cell in footprint:
        return True
    if world.entity_at(cell) is not None:
        return False
    return cell not in world.blocks


def _do_skip(world, entity, action, effective, results, events):
    return ActionResult.SUCCESS


def _do_move(world, entity, action, effective, results, events):
    delta = DIRECTIONS[action.direction]
    owned = world.owned_blocks(entity.id)
    footprint = {entity.pos} | set(owned)
    for cell in footprint:
        if not _cell_free_for(world, add(cell, delta), entity, footprint):
            return ActionResult.FAILED_BLOCKED
    for cell, block in sorted(owned.items()):
        del world.blocks[cell]
    for cell, block in owned.items():
        world.blocks[add(cell, delta)] = block
    entity.pos = add(entity.pos, delta)
    return ActionResult.SUCCESS


def _do_rotate(world, entity, action, effective, results, events):
    owned = world.owned_blocks(entity.id)
    footprint = {entity.pos} | set(owned)
    moved = {}
    for cell, block in owned.items():
        target = add(entity.pos, rotate(sub(cell, entity.pos), action.rotation))
        if not _cell_free_for(world, target, entity, footprint):
            return ActionResult.FAILED_BLOCKED
        moved[target] = block
    for cell in owned:
        del world.blocks[cell]
    world.blocks.update(moved)
    return ActionResult.SUCCESS


def _do_attach(world, entity, action, effective, results, events):
    cell = add(entity.pos, DIRECTIONS[action.direction])
    block = world.blocks.get(cell)
    if block is None or block.attached_to is not None:
        return ActionResult.FAILED_TARGET
    block.attached_to = entity.id
    events.append({"kind": "attach", "entity": entity.name, "team": entity.team,
                   "block": block.id, "type": block.type})
    return ActionResult.SUCCESS


def _do_detach(world, entity, action, effective, results, events):
    cell = add(entity.pos, DIRECTIONS[action.direction])
    block = world.blocks.get(cell)
    if block is None or block.attached_to != entity.id:
        return ActionResult.FAILED_TARGET
    block.attached_to = None
    released = [block.id] + _release_disconnected(world, entity)
    events.append({"kind": "detach", "entity": entity.name, "team": entity.team, "blocks": released})
    return ActionResult.SUCCESS


def _release_disconnected(world, entity):
    """Release owned blocks no longer 4-connected to the entity; returns their ids"""
    owned = world.owned_blocks(entity.id)
    reached = {entity.pos}
    queue = deque([entity.pos])
    while queue:
        cell = queue.popleft()
        for nxt in neighbours(cell):
            if nxt in owned and nxt not in reached:
                reached.add(nxt)
                queue.append(nxt)
    released = []
    for cell, block in sorted(owned.items()):
        if cell not in reached:
            block.attached_to = None
            released.append(block.id)
    return released


def _do_request(world, entity, action, effective, results, events):
    cell = add(entity.pos, DIRECTIONS[action.direction])
    if cell not in world.dispensers:
        return ActionResult.FAILED_TARGET
    if cell in world.blocks or world.entity_at(cell) is not None:
        return ActionResult.FAILED_BLOCKED
    block = world.new_block(world.dispensers[cell])
    world.blocks[cell] = block
    events.append({"kind": "request", "entity": entity.name, "block": block.id, "type": block.type})
    return ActionResult.SUCCESS


def _do_connect(world, entity, action, effective, results, events):
    partner = world.entity_by_name(action.partner)
    if partner is None or partner.id == entity.id:
        return ActionResult.FAILED_PARTNER
    reply = effective[partner.id]
    if reply.kind != "connect" or reply.partner != entity.name or partner.id in results:
        return ActionResult.FAILED_PARTNER

    own_cell = add(entity.pos, action.offset)
    other_cell = add(partner.pos, reply.offset)
    own_block = world.blocks.get(own_cell)
    other_block = world.blocks.get(other_cell)
    own_ok = own_block is not None and own_block.attached_to == entity.id
    other_ok = other_block is not None and other_block.attached_to == partner.id
    if not (own_ok and other_ok) or manhattan(own_cell, other_cell) != 1:
        results[partner.id] = ActionResult.FAILED_TARGET if own_ok else ActionResult.FAILED_PARTNER
        return ActionResult.FAILED_TARGET if not own_ok else ActionResult.FAILED_PARTNER

    own_size = len(world.owned_blocks(entity.id))
    other_size = len(world.owned_blocks(partner.id))
    if own_size > other_size or (own_size == other_size and entity.id < partner.id):
        owner, loser = entity, partner
    else:
        owner, loser = partner, entity
    for block in world.owned_blocks(loser.id).values():
        block.attached_to = owner.id

    results[partner.id] = ActionResult.SUCCESS
    events.append({
        "kind": "connect",
        "entities": [entity.name, partner.name],
        "team": entity.team,
        "blocks": [own_block.id, other_block.id],
        "owner": owner.name,
    })
    return ActionResult.SUCCESS


def _do_clear(world, entity, action, effective, results, events):
    config = world.config
    target = add(entity.pos, action.offset)
    if manhattan(action.offset) > config.vision_radius or not world.in_bounds(target):
        entity.clear_charge = None
        return ActionResult.FAILED_TARGET
    if entity.energy < config.clear_energy:
        entity.clear_charge = None
        return ActionResult.FAILED_RESOURCES

    count = entity.clear_charge[1] + 1 if entity.clear_charge and entity.clear_charge[0] == target else 1
    if count < 3:
        entity.clear_charge = (target, count)
        return ActionResult.SUCCESS

    entity.clear_charge = None
    entity.energy -= config.clear_energy
    victims = _clear_area(world, target, config.clear_radius, exempt=entity.id)
    events.append({"kind": "clear", "entity": entity.name, "team": entity.team,
                   "target": list(target), "victims": victims})
    logging.debug(f"{entity.name} triggered clear at {target} ({len(victims)} entities hit)")
    return ActionResult.SUCCESS


def _clear_area(world, center, radius, exempt=None):
    """Remove obstacles and blocks around `center`; disable and strip entities there"""
    victims = []
    # Attachments are counted before the area loses its blocks
    for entity in world.entities:
        if entity.id == exempt or manhattan(entity.pos, center) > radius:
            continue
        owned = world.owned_blocks(entity.id)
        victims.append({
            "name": entity.name,
            "team": entity.team,
            "on_goal": world.terrain_at(entity.pos) == Terrain.GOAL,
            "attachments": len(owned),
        })
        for block in owned.values():
            block.attached_to = None
        entity.disabled_until = world.step + 1 + world.config.disable_duration
        entity.clear_charge = None
    for offset in diamond(radius):
        cell = add(center, offset)
        if not world.in_bounds(cell):
            continue
        if world.terrain_at(cell) == Terrain.OBSTACLE:
            world.set_terrain(cell, Terrain.EMPTY)
        world.blocks.pop(cell, None)
    # Stripping can split other structures that ran through the cleared cells
    for entity in world.entities:
        _release_disconnected(world, entity)
    return victims


def _do_submit(world, entity, action, effective, results, events):
    task = world.task_by_name(action.task)
    reason = None
    if task is None:
        reason, result = "unknown_task", ActionResult.FAILED_TARGET
    elif task.deadline < world.step:
        reason, result = "expired", ActionResult.FAILED_DEADLINE
    elif task.submitted_by is not None:
        reason, result = "already_submitted", ActionResult.FAILED_TARGET
    elif world.terrain_at(entity.pos) != Terrain.GOAL:
        reason, result = "not_on_goal", ActionResult.FAILED_TARGET
    else:
        matched = []
        for req in task.requirements:
            cell = add(entity.pos, (req.x, req.y))
            block = world.blocks.get(cell)
            if block is None or block.type != req.block_type or block.attached_to != entity.id:
                break
            matched.append(cell)
        else:
            result = ActionResult.SUCCESS
        if len(matched) != len(task.requirements):
            reason, result = "pattern", ActionResult.FAILED_TARGET

    if reason is not None:
        events.append({"kind": "submit_failed", "entity": entity.name, "team": entity.team,
                       "task": action.task, "reason": reason})
        return result

    consumed = [world.blocks.pop(cell).id for cell in matched]
    _release_disconnected(world, entity)
    world.scores[entity.team] += task.reward
    task.submitted_by = entity.team
    events.append({"kind": "submit", "entity": entity.name, "team": entity.team, "task": task.name,
                   "blocks": consumed, "reward": task.reward})
    logging.info(f"{entity.name} submitted {task.name} for {task.reward} points (team {entity.team})")
    return ActionResult.SUCCESS


_HANDLERS = {
    "skip": _do_skip,
    "move": _do_move,
    "rotate": _do_rotate,
    "attach": _do_attach,
    "detach": _do_detach,
    "request": _do_request,
    "connect": _do_connect,
    "clear": _do_clear,
    "submit": _do_submit,
}


def _fire_clear_events(world, events):
    due = [ev for ev in world.pending_events if ev.trigger_step == world.step]
    world.pending_events = [ev for ev in world.pending_events if ev.trigger_step != world.step]
    for ev in due:
        victims = _clear_area(world, ev.center, ev.radius)
        area = []
        for offset in diamond(ev.radius):
            cell = add(ev.center, offset)
            if world.in_bounds(cell) and world.terrain_at(cell) == Terrain.EMPTY \
                    and cell not in world.blocks and cell not in world.dispensers \
                    and world.entity_at(cell) is None:
                area.append(cell)
        regen = world.rng.sample(area, min(world.config.regen_obstacles, len(area)))
        for cell in regen:
            world.set_terrain(cell, Terrain.OBSTACLE)
        events.append({"kind": "clear_event", "center": list(ev.center), "radius": ev.radius,
                       "victims": victims, "obstacles": sorted([list(c) for c in regen])})


def _schedule_clear_event(world):
    config = world.config
    if config.clear_event_rate <= 0:
        return
    if world.rng.random() < config.clear_event_rate:
        center = (world.rng.randrange(world.width), world.rng.randrange(world.height))
        world.pending_events.append(ClearEvent(center=center, radius=config.clear_event_radius,
                                               trigger_step=world.step + CLEAR_EVENT_WARNING))


def _refresh_tasks(world, events):
    """Prune expired tasks and maybe publish a new one"""
    world.tasks = [t for t in world.tasks if t.deadline >= world.step]
    config = world.config
    active = [t for t in world.tasks if t.submitted_by is None]
    if config.task_probability <= 0 or len(active) >= config.max_active_tasks:
        return
    if world.rng.random() < config.task_probability:
        task = generate_task(world)
        world.tasks.append(task)
        events.append({"kind": "task_created", "task": task.to_dict()})


class WorldEngine:
    """Owns one world and exposes it to the percept pipeline by agent name"""

    def __init__(self, config, keep_snapshots=False):
        self.config = config
        self.world = generate_world(config)
        self.keep_snapshots = keep_snapshots
        self.snapshots = [self.world.to_dict()] if keep_snapshots else []
        self._ids = {e.name: e.id for e in self.world.entities}
        # Held while a step resolves so readers never see a half-applied world
        self._lock = threading.Lock()

    @property
    def step(self):
        return self.world.step

    @property
    def agent_names(self):
        return [e.name for e in self.world.entities]

    def entity_id(self, name):
        if name not in self._ids:
            raise UnknownAgent(f"Unknown agent: {name}")
        return self._ids[name]

    def percepts(self, name):
        with self._lock:
            return compute_percepts(self.world, self.entity_id(name))

    def ground_position(self, name):
        return self.world.entities[self.entity_id(name)].pos

    def advance(self, actions_by_name):
        """Apply one step of actions keyed by agent name"""
        actions = {self.entity_id(name): action for name, action in actions_by_name.items()}
        with self._lock:
            _, results, events = apply_step(self.world, actions)
            if self.keep_snapshots:
                self.snapshots.append(self.world.to_dict())
        return {e.name: results[e.id] for e in self.world.entities}, events
