# --- world_state.py ---
"""Authoritative world data and its seeded generation.

Only the engine mutates a WorldState; everything else reads it or works from
percepts derived from it.
"""
import logging
import random
from collections import deque, namedtuple
from dataclasses import dataclass, field
from enum import Enum

from assembler.errors import InvalidConfig
from assembler.geometry import add, neighbours, sub, yx_key


class Terrain(str, Enum):
    EMPTY = "empty"
    OBSTACLE = "obstacle"
    GOAL = "goal"


# Offset (x, y) relative to the submitting agent, plus the block type
Requirement = namedtuple("Requirement", ["x", "y", "block_type"])


@dataclass
class Block:
    id: int
    type: str
    attached_to: int = None


@dataclass
class EntityState:
    id: int
    name: str
    team: str
    pos: tuple
    energy: int
    disabled_until: int = None
    # (absolute target cell, consecutive count) while a clear is charging
    clear_charge: tuple = None
    last_action: dict = field(default_factory=lambda: {"kind": "skip"})
    last_result: str = "success"

    def is_disabled(self, step):
        return self.disabled_until is not None and step < self.disabled_until


@dataclass
class TaskSpec:
    name: str
    deadline: int
    reward: int
    requirements: tuple
    submitted_by: str = None

    def to_dict(self):
        return {
            "name": self.name,
            "deadline": self.deadline,
            "reward": self.reward,
            "requirements": [[r.x, r.y, r.block_type] for r in self.requirements],
            "submitted_by": self.submitted_by,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            name=data["name"],
            deadline=data["deadline"],
            reward=data["reward"],
            requirements=tuple(Requirement(*r) for r in data["requirements"]),
            submitted_by=data.get("submitted_by"),
        )


@dataclass
class ClearEvent:
    center: tuple
    radius: int
    trigger_step: int

    def to_dict(self):
        return {"center": list(self.center), "radius": self.radius, "trigger_step": self.trigger_step}


@dataclass
class WorldState:
    config: object
    width: int
    height: int
    terrain: list
    dispensers: dict = field(default_factory=dict)
    blocks: dict = field(default_factory=dict)
    entities: list = field(default_factory=list)
    tasks: list = field(default_factory=list)
    pending_events: list = field(default_factory=list)
    step: int = 0
    scores: dict = field(default_factory=dict)
    rng: random.Random = None
    next_block_id: int = 0
    task_counter: int = 0

    def in_bounds(self, cell):
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def terrain_at(self, cell):
        """Terrain of a cell; the world boundary reads as obstacle"""
        if not self.in_bounds(cell):
            return Terrain.OBSTACLE
        return self.terrain[cell[1]][cell[0]]

    def set_terrain(self, cell, terrain):
        self.terrain[cell[1]][cell[0]] = terrain

    def entity_at(self, cell):
        for entity in self.entities:
            if entity.pos == cell:
                return entity
        return None

    def entity_by_name(self, name):
        for entity in self.entities:
            if entity.name == name:
                return entity
        return None

    def owned_blocks(self, entity_id):
        """Cells and blocks attached to an entity"""
        return {cell: block for cell, block in self.blocks.items() if block.attached_to == entity_id}

    def attachments_of(self, entity_id):
        """Attachment set of an entity as {(offset, block type)} in its own frame"""
        entity = self.entities[entity_id]
        return {(sub(cell, entity.pos), block.type) for cell, block in self.owned_blocks(entity_id).items()}

    def new_block(self, block_type):
        block = Block(id=self.next_block_id, type=block_type)
        self.next_block_id += 1
        return block

    def task_by_name(self, name):
        for task in self.tasks:
            if task.name == name:
                return task
        return None

    def to_dict(self):
        """Canonical snapshot used for determinism checks and rendering"""
        return {
            "step": self.step,
            "width": self.width,
            "height": self.height,
            "terrain": ["".join(_TERRAIN_GLYPH[t] for t in row) for row in self.terrain],
            "dispensers": sorted([[c[0], c[1], t] for c, t in self.dispensers.items()]),
            "blocks": sorted([[c[0], c[1], b.id, b.type, b.attached_to] for c, b in self.blocks.items()],
                             key=lambda r: (r[1], r[0])),
            "entities": [
                {
                    "id": e.id,
                    "name": e.name,
                    "team": e.team,
                    "pos": list(e.pos),
                    "energy": e.energy,
                    "disabled_until": e.disabled_until,
                }
                for e in self.entities
            ],
            "tasks": [t.to_dict() for t in self.tasks],
            "pending_events": [ev.to_dict() for ev in self.pending_events],
            "scores": dict(sorted(self.scores.items())),
        }


_TERRAIN_GLYPH = {Terrain.EMPTY: ".", Terrain.OBSTACLE: "#", Terrain.GOAL: "g"}


def generate_world(config):
    """Build the initial world; a deterministic function of the config"""
    rng = random.Random(config.seed)
    layout = config.layout or {}
    terrain = [[Terrain.EMPTY for _ in range(config.width)] for _ in range(config.height)]
    world = WorldState(
        config=config,
        width=config.width,
        height=config.height,
        terrain=terrain,
        scores={team: 0 for team in config.teams},
        rng=rng,
    )

    if "goals" in layout:
        for x, y in layout["goals"]:
            world.set_terrain((x, y), Terrain.GOAL)
    else:
        _place_goal_clusters(world, config, rng)

    if "dispensers" in layout:
        for x, y, block_type in layout["dispensers"]:
            world.dispensers[(x, y)] = block_type
    else:
        free = [c for c in _free_cells(world) if world.terrain_at(c) == Terrain.EMPTY]
        for block_type in config.block_types:
            for _ in range(config.dispensers_per_type):
                if not free:
                    raise InvalidConfig("No room left to place dispensers")
                cell = free.pop(rng.randrange(len(free)))
                world.dispensers[cell] = block_type

    missing = sorted(set(config.block_types) - set(world.dispensers.values()))
    if missing:
        raise InvalidConfig(f"No dispenser for block types: {', '.join(missing)}")

    if "obstacles" in layout:
        for x, y in layout["obstacles"]:
            world.set_terrain((x, y), Terrain.OBSTACLE)
    else:
        for y in range(config.height):
            for x in range(config.width):
                cell = (x, y)
                if world.terrain_at(cell) == Terrain.EMPTY and cell not in world.dispensers:
                    if rng.random() < config.obstacle_density:
                        world.set_terrain(cell, Terrain.OBSTACLE)

    for x, y, block_type in layout.get("blocks", []):
        world.blocks[(x, y)] = world.new_block(block_type)

    names = config.agent_names
    if "entities" in layout:
        positions = [tuple(p) for p in layout["entities"]]
        if len(positions) != len(names) or len(set(positions)) != len(positions):
            raise InvalidConfig("layout.entities must give one distinct cell per agent")
        for cell in positions:
            if not world.in_bounds(cell) or world.terrain_at(cell) == Terrain.OBSTACLE:
                raise InvalidConfig(f"Entity cell {cell} is not free")
    else:
        free = [c for c in _free_cells(world) if world.terrain_at(c) == Terrain.EMPTY]
        if len(free) < len(names):
            raise InvalidConfig("Not enough free cells to place all entities")
        positions = [free.pop(rng.randrange(len(free))) for _ in names]

    for entity_id, (name, pos) in enumerate(zip(names, positions)):
        world.entities.append(EntityState(
            id=entity_id,
            name=name,
            team=config.team_of(name),
            pos=pos,
            energy=config.max_energy,
        ))

    if "tasks" in layout:
        for data in layout["tasks"]:
            task = TaskSpec(
                name=data["name"],
                deadline=data.get("deadline", config.task_duration),
                reward=data.get("reward", config.reward_base * len(data["requirements"])),
                requirements=tuple(Requirement(*r) for r in data["requirements"]),
            )
            world.tasks.append(task)
            world.task_counter += 1
    else:
        for _ in range(config.initial_tasks):
            world.tasks.append(generate_task(world))

    logging.info(f"Generated {config.width}x{config.height} world (seed {config.seed}): "
                 f"{len(world.entities)} entities, {len(world.dispensers)} dispensers, {len(world.tasks)} tasks")
    return world


def generate_task(world):
    """Random task following the server rules: a walk from (0, 1) stepping S, E or W"""
    config = world.config
    rng = world.rng
    size = rng.randint(config.task_size_min, config.task_size_max)
    cells = [(0, 1)]
    visited = {(0, 1)}
    while len(cells) < size:
        last = cells[-1]
        options = [c for c in (add(last, (0, 1)), add(last, (1, 0)), add(last, (-1, 0)))
                   if c not in visited and c[1] >= 1]
        nxt = rng.choice(options)
        cells.append(nxt)
        visited.add(nxt)
    requirements = tuple(Requirement(x, y, rng.choice(config.block_types)) for x, y in cells)
    world.task_counter += 1
    return TaskSpec(
        name=f"task{world.task_counter}",
        deadline=world.step + config.task_duration,
        reward=config.reward_base * size,
        requirements=requirements,
    )


def _free_cells(world):
    """Empty, unoccupied, non-dispenser cells in (y, x) order"""
    cells = []
    for y in range(world.height):
        for x in range(world.width):
            cell = (x, y)
            if world.terrain_at(cell) != Terrain.OBSTACLE and cell not in world.dispensers \
                    and cell not in world.blocks:
                cells.append(cell)
    return cells


def _place_goal_clusters(world, config, rng):
    margin = 2
    for index in range(config.goal_clusters):
        for _ in range(200):
            center = (rng.randrange(margin, config.width - margin),
                      rng.randrange(margin, config.height - margin))
            cluster = _grow_cluster(world, center, config.goal_cluster_size, rng, margin)
            if cluster:
                for cell in cluster:
                    world.set_terrain(cell, Terrain.GOAL)
                break
        else:
            raise InvalidConfig(f"Could not place goal cluster {index + 1} of {config.goal_clusters}")


def _grow_cluster(world, center, size, rng, margin):
    """Random contiguous region of `size` cells not touching existing goal terrain"""

    def usable(cell):
        if not (margin <= cell[0] < world.width - margin and margin <= cell[1] < world.height - margin):
            return False
        if world.terrain_at(cell) == Terrain.GOAL:
            return False
        return all(world.terrain_at(n) != Terrain.GOAL for n in neighbours(cell) if world.in_bounds(n))

    if not usable(center):
        return None
    cluster = [center]
    members = {center}
    frontier = deque([center])
    while frontier and len(cluster) < size:
        cell = frontier[0]
        options = sorted((n for n in neighbours(cell) if n not in members and usable(n)), key=yx_key)
        if not options:
            frontier.popleft()
            continue
        nxt = rng.choice(options)
        cluster.append(nxt)
        members.add(nxt)
        frontier.append(nxt)
    return cluster if len(cluster) == size else None
