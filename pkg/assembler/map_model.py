# --- map_model.py ---
"""Per-agent map knowledge in the agent's virtual frame.

Cells are stored sparsely; a cell that was never perceived is unknown and
counts as non-traversable for every query here.
"""
import heapq
import logging
from collections import deque
from dataclasses import dataclass

from assembler.geometry import DIRECTIONS, add, direction_of, manhattan, neighbours, sub, yx_key

UNKNOWN = "unknown"
PASSABLE_TERRAIN = ("empty", "goal")
BLOCKING_THINGS = ("block", "entity", "dispenser")
FALLBACK_DIRECTION = "e"


@dataclass(frozen=True)
class VirtualPosition:
    x: int = 0
    y: int = 0

    @property
    def cell(self):
        return (self.x, self.y)

    def moved(self, direction):
        dx, dy = DIRECTIONS[direction]
        return VirtualPosition(self.x + dx, self.y + dy)


@dataclass(frozen=True)
class MapPercept:
    pos: tuple
    terrain: str
    things: tuple
    last_seen: int

    def content(self):
        return (self.terrain, self.things)

    def has_thing(self, kind, detail=None):
        return any(k == kind and (detail is None or d == detail) for k, d in self.things)

    def to_list(self):
        return [self.pos[0], self.pos[1], self.terrain, [list(t) for t in self.things], self.last_seen]

    @classmethod
    def from_list(cls, data):
        x, y, terrain, things, last_seen = data
        return cls((x, y), terrain, tuple(tuple(t) for t in things), last_seen)


class MapModel:
    def __init__(self, owner, chunk_size=5):
        self.owner = owner
        self.chunk_size = chunk_size
        self.cells = {}
        self._changed = set()

    def get(self, cell):
        return self.cells.get(tuple(cell))

    def terrain_at(self, cell):
        percept = self.cells.get(tuple(cell))
        return percept.terrain if percept else UNKNOWN

    def is_known(self, cell):
        return tuple(cell) in self.cells

    def is_traversable(self, cell, ignore=()):
        """Known passable terrain with no blocking thing, unless the cell is ignored"""
        percept = self.cells.get(cell)
        if percept is None or percept.terrain not in PASSABLE_TERRAIN:
            return False
        if cell in ignore:
            return True
        return not any(kind in BLOCKING_THINGS for kind, _ in percept.things)

    def _enterable(self, cell, goal, ignore):
        if cell == goal:
            percept = self.cells.get(cell)
            return percept is not None and percept.terrain in PASSABLE_TERRAIN
        return self.is_traversable(cell, ignore)

    def _store(self, percept):
        old = self.cells.get(percept.pos)
        if old is None or old.content() != percept.content():
            self._changed.add(percept.pos)
        self.cells[percept.pos] = percept

    def update_from_percepts(self, container):
        """Overwrite every cell of the vision diamond; returns the cells seen"""
        origin = container.virtual_pos.cell
        raw = container.raw
        things = {}
        for x, y, kind, detail in raw.things:
            things.setdefault((x, y), []).append((kind, detail))
        seen = set()
        for x, y, terrain in raw.terrain_cells:
            cell = add(origin, (x, y))
            self._store(MapPercept(cell, terrain, tuple(sorted(things.get((x, y), ()))), raw.step))
            seen.add(cell)
        return seen

    def merge_remote(self, remote_cells, translation):
        """Merge cells from another frame; larger lastSeen wins, ties keep the local cell"""
        dx, dy = translation
        merged = set()
        for remote in remote_cells:
            cell = (remote.pos[0] + dx, remote.pos[1] + dy)
            local = self.cells.get(cell)
            if local is not None and local.last_seen >= remote.last_seen:
                continue
            self._store(MapPercept(cell, remote.terrain, remote.things, remote.last_seen))
            merged.add(cell)
        return merged

    def drain_changes(self):
        """Cells whose content changed since the last drain, for the trace"""
        changed = [self.cells[c].to_list() for c in sorted(self._changed, key=yx_key)]
        self._changed = set()
        return changed

    def find_nearest(self, origin, predicate, ignore=()):
        """Matching known cell with the shortest traversable path, ties by (y, x)"""
        origin = tuple(origin)
        if origin in self.cells and predicate(self.cells[origin]):
            return origin
        visited = {origin}
        frontier = [origin]
        while frontier:
            matches = []
            next_frontier = []
            for cell in frontier:
                for nxt in neighbours(cell):
                    if nxt in visited:
                        continue
                    percept = self.cells.get(nxt)
                    if percept is None:
                        continue
                    visited.add(nxt)
                    if percept.terrain in PASSABLE_TERRAIN and predicate(percept):
                        matches.append(nxt)
                    if self.is_traversable(nxt, ignore):
                        next_frontier.append(nxt)
            if matches:
                return min(matches, key=yx_key)
            frontier = next_frontier
        return None

    def distances_from(self, origin, ignore=()):
        """BFS path lengths over traversable known cells from `origin`"""
        origin = tuple(origin)
        dist = {origin: 0}
        queue = deque([origin])
        while queue:
            cell = queue.popleft()
            for nxt in neighbours(cell):
                if nxt not in dist and self.is_traversable(nxt, ignore):
                    dist[nxt] = dist[cell] + 1
                    queue.append(nxt)
        return dist

    def path_length_to(self, dist, target):
        """Length of a path into `target` given distances from distances_from"""
        target = tuple(target)
        if target in dist:
            return dist[target]
        percept = self.cells.get(target)
        if percept is None or percept.terrain not in PASSABLE_TERRAIN:
            return None
        best = [dist[n] + 1 for n in neighbours(target) if n in dist]
        return min(best) if best else None

    def shortest_path(self, origin, goal, ignore=()):
        """A* over known cells with a Manhattan heuristic; returns directions or None"""
        origin, goal = tuple(origin), tuple(goal)
        if origin == goal:
            return []
        frontier = []
        heapq.heappush(frontier, (manhattan(origin, goal), 0, yx_key(origin), origin))
        came_from = {origin: None}
        cost_so_far = {origin: 0}

        while frontier:
            _, cost, _, current = heapq.heappop(frontier)
            if current == goal:
                return self._reconstruct(came_from, goal)
            if cost > cost_so_far[current]:
                continue
            for nxt in neighbours(current):
                if not self._enterable(nxt, goal, ignore):
                    continue
                new_cost = cost + 1
                if nxt not in cost_so_far or new_cost < cost_so_far[nxt]:
                    cost_so_far[nxt] = new_cost
                    came_from[nxt] = current
                    heapq.heappush(frontier, (new_cost + manhattan(nxt, goal), new_cost, yx_key(nxt), nxt))
        return None

    def _reconstruct(self, came_from, goal):
        cells = [goal]
        while came_from[cells[-1]] is not None:
            cells.append(came_from[cells[-1]])
        cells.reverse()
        return [direction_of(sub(b, a)) for a, b in zip(cells, cells[1:])]

    def explore_direction(self, origin, ignore=()):
        """First step toward the nearest chunk that still has reachable unknown cells"""
        origin = tuple(origin)
        dist = self.distances_from(origin, ignore)
        frontier = {}
        for cell in dist:
            for nxt in neighbours(cell):
                if nxt not in self.cells:
                    frontier.setdefault(nxt, set()).add(cell)
        if not frontier:
            return FALLBACK_DIRECTION

        size = self.chunk_size
        chunks = {}
        for cell in frontier:
            chunks.setdefault((cell[0] // size, cell[1] // size), []).append(cell)

        def centroid(chunk):
            return (chunk[0] * size + (size - 1) / 2, chunk[1] * size + (size - 1) / 2)

        def chunk_key(chunk):
            cx, cy = centroid(chunk)
            return ((cx - origin[0]) ** 2 + (cy - origin[1]) ** 2, cy, cx)

        chunk = min(chunks, key=chunk_key)
        borders = set()
        for cell in chunks[chunk]:
            borders |= frontier[cell]
        target = min(borders, key=lambda c: (dist[c], yx_key(c)))
        if target == origin:
            unknown = min((c for c in chunks[chunk] if manhattan(c, origin) == 1), key=yx_key)
            return direction_of(sub(unknown, origin))

        path = self.shortest_path(origin, target, ignore)
        if path:
            return path[0]
        logging.debug(f"{self.owner}: no path to exploration border {target}, using fallback")
        return FALLBACK_DIRECTION

    def to_list(self):
        return [self.cells[c].to_list() for c in sorted(self.cells, key=yx_key)]


def path_invalidated(path, container):
    """True iff the next cell of `path`, per the immediate percepts, cannot be entered"""
    if not path:
        return False
    offset = DIRECTIONS[path[0]]
    percepts = container.percepts
    terrain = percepts.terrain.get(offset)
    if terrain is None:
        return False
    if terrain not in PASSABLE_TERRAIN:
        return True
    if container.attach_model is not None and offset in container.attach_model.offsets():
        return False
    return any(kind in BLOCKING_THINGS for kind, _ in percepts.things.get(offset, ()))

