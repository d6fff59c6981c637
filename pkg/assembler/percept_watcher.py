# --- percept_watcher.py ---
"""Step-synchronized percept ingestion.

One updater parses every agent's percepts exactly once per step and publishes
the resulting containers; readers block on per-step readiness.
"""
import logging
import threading
from dataclasses import dataclass, field, replace

from assembler.attachment_model import AttachmentModel
from assembler.errors import AssemblerError, StepOutOfRange, UnknownAgent
from assembler.map_model import MapModel, VirtualPosition


@dataclass(frozen=True)
class RawPerceptSet:
    step: int
    team: str
    score: int
    energy: int
    disabled: bool
    last_action: dict
    last_action_result: str
    terrain_cells: tuple
    things: tuple
    attached_flags: tuple
    tasks: tuple

    def to_dict(self):
        """Trace form; terrain travels in the map deltas and tasks once per step"""
        return {
            "step": self.step,
            "score": self.score,
            "energy": self.energy,
            "disabled": self.disabled,
            "last_action": self.last_action,
            "last_action_result": self.last_action_result,
            "things": [list(t) for t in self.things],
            "attached": [list(a) for a in self.attached_flags],
        }


@dataclass
class PerceptIndex:
    """Parsed percepts keyed by relative offset"""
    terrain: dict = field(default_factory=dict)
    things: dict = field(default_factory=dict)
    attached: set = field(default_factory=set)
    teammates: list = field(default_factory=list)
    enemies: list = field(default_factory=list)

    def has_thing(self, offset, kind, detail=None):
        return any(k == kind and (detail is None or d == detail) for k, d in self.things.get(offset, ()))

    def is_free(self, offset, ignore=()):
        terrain = self.terrain.get(offset)
        if terrain not in ("empty", "goal"):
            return False
        if offset in ignore:
            return True
        return not any(k in ("block", "entity", "dispenser") for k, _ in self.things.get(offset, ()))


def parse_percepts(raw):
    index = PerceptIndex()
    for x, y, terrain in raw.terrain_cells:
        index.terrain[(x, y)] = terrain
    for x, y, kind, detail in raw.things:
        index.things.setdefault((x, y), []).append((kind, detail))
        if kind == "entity":
            (index.teammates if detail == raw.team else index.enemies).append((x, y))
    index.attached = {(x, y) for x, y in raw.attached_flags}
    index.teammates.sort(key=lambda o: (o[1], o[0]))
    index.enemies.sort(key=lambda o: (o[1], o[0]))
    return index


@dataclass(frozen=True)
class AgentContainer:
    agent_name: str
    team: str
    current_step: int
    virtual_pos: VirtualPosition
    raw: RawPerceptSet
    percepts: PerceptIndex
    map_model: MapModel
    identified: dict
    attach_model: AttachmentModel

    @property
    def origin(self):
        return self.virtual_pos.cell

    def to_absolute(self, offset):
        """Relative percept offset to the agent's virtual frame"""
        return (self.virtual_pos.x + offset[0], self.virtual_pos.y + offset[1])

    def to_relative(self, cell):
        return (cell[0] - self.virtual_pos.x, cell[1] - self.virtual_pos.y)


class PerceptWatcher:
    def __init__(self, engine, config):
        self.engine = engine
        self.config = config
        self.names = list(engine.agent_names)
        self._teams = {name: config.team_of(name) for name in self.names}
        self._positions = {name: VirtualPosition() for name in self.names}
        self._maps = {name: MapModel(name, config.chunk_size) for name in self.names}
        self._attachments = {name: AttachmentModel() for name in self.names}
        self._identified = {name: {} for name in self.names}
        self._history = {name: {} for name in self.names}
        self.containers = {}
        self.map_deltas = {}
        self.post_ingest_hooks = []
        self.parse_count = 0

        self._ready_step = -1
        self._condition = threading.Condition()
        self._update_lock = threading.Lock()
        self._advanced = threading.Event()
        self.running = True
        self.poll_interval = 0.05

    @property
    def ready_step(self):
        return self._ready_step

    def map_model(self, name):
        self._check(name)
        return self._maps[name]

    def attach_model(self, name):
        self._check(name)
        return self._attachments[name]

    def identified(self, name):
        """Live identification table of an agent; only written during ingestion"""
        self._check(name)
        return self._identified[name]

    def virtual_position(self, name):
        self._check(name)
        return self._positions[name]

    def _check(self, name):
        if name not in self._history:
            raise UnknownAgent(f"Unknown agent: {name}")

    def poll_and_update(self):
        """Ingest the engine's current step once; returns False if already ingested"""
        with self._update_lock:
            step = self.engine.step
            if step <= self._ready_step:
                return False

            staged = {}
            seen = {}
            for name in self.names:
                raw = self.engine.percepts(name)
                assert raw.step == step, f"percepts for {name} are from step {raw.step}, expected {step}"
                percepts = parse_percepts(raw)
                self.parse_count += 1

                position = self._positions[name]
                if raw.last_action.get("kind") == "move" and raw.last_action_result == "success":
                    position = position.moved(raw.last_action["direction"])
                    self._positions[name] = position

                attach = self._attachments[name]
                previous = self.containers.get(name)
                attach.on_action(raw.last_action, raw.last_action_result,
                                 previous.percepts if previous is not None else None)
                attach.refresh(raw)

                container = AgentContainer(
                    agent_name=name,
                    team=self._teams[name],
                    current_step=step,
                    virtual_pos=position,
                    raw=raw,
                    percepts=percepts,
                    map_model=self._maps[name],
                    identified={},
                    attach_model=attach,
                )
                seen[name] = self._maps[name].update_from_percepts(container)
                staged[name] = container

            for hook in self.post_ingest_hooks:
                hook(self, step, staged, seen)

            for name in self.names:
                container = replace(staged[name], identified=dict(self._identified[name]))
                self.containers[name] = container
                self._history[name][step] = container
            self.map_deltas = {name: self._maps[name].drain_changes() for name in self.names}

            with self._condition:
                self._ready_step = step
                self._condition.notify_all()
            logging.debug(f"Percepts for step {step} ingested for {len(self.names)} agents")
            return True

    def get_container(self, name, step=None, timeout=None):
        """Container for `step`, blocking until that step has been ingested"""
        self._check(name)
        with self._condition:
            if step is None:
                step = self._ready_step
            ready = self._condition.wait_for(lambda: self._ready_step >= step or not self.running, timeout)
            if not ready or step not in self._history[name]:
                raise StepOutOfRange(f"No container for {name} at step {step}")
            return self._history[name][step]

    def notify_step(self):
        """Wake the ingestion thread after the engine advanced"""
        self._advanced.set()

    def run(self):
        """Ingestion loop for threaded mode"""
        logging.info("Percept watcher started")
        while self.running:
            try:
                if not self.poll_and_update():
                    self._advanced.wait(self.poll_interval)
                    self._advanced.clear()
            except AssemblerError as e:
                logging.error(f"Percept ingestion failed: {e}")
                self.stop()

    def stop(self):
        """Stop the ingestion loop and release blocked readers"""
        self.running = False
        self._advanced.set()
        with self._condition:
            self._condition.notify_all()
