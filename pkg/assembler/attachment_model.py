# --- attachment_model.py ---
import logging
from collections import deque

from assembler.errors import InconsistentUpdate
from assembler.geometry import DIRECTIONS, DIRECTION_ORDER, ROTATIONS, add, neighbours, rotate

_PASSABLE = ("empty", "goal")
_BLOCKING = ("block", "entity", "dispenser")


class AttachmentModel:
    """Blocks the agent believes are attached to it, as offsets in its own frame"""

    def __init__(self):
        self.blocks = {}
        self._staged = None
        # Cells left by the real attachments when this model is a rotation prediction
        self._vacated = frozenset()

    def offsets(self):
        return set(self.blocks)

    def as_set(self):
        return {(offset, block_type) for offset, block_type in self.blocks.items()}

    def has_type(self, block_type):
        return block_type in self.blocks.values()

    def offset_of(self, block_type):
        """Offset of an attached block of `block_type`, lowest (y, x) first"""
        matches = sorted((o for o, t in self.blocks.items() if t == block_type), key=lambda o: (o[1], o[0]))
        return matches[0] if matches else None

    def stage_connect(self, gain=None, lose=False):
        """Record what a connect issued this step will do to the model if it succeeds.

        gain: {offset: type} the agent keeps after the fuse; lose: the agent hands
        its whole structure over.
        """
        self._staged = (dict(gain or {}), lose)

    def on_action(self, action, result, previous=None):
        """Apply the outcome of the agent's last action.

        `action` is the action dict echoed back in the percepts; `previous`
        is the parsed percept index the action was decided on.
        """
        kind = action.get("kind")
        staged, self._staged = self._staged, None
        if result != "success":
            return

        if kind == "attach":
            offset = DIRECTIONS[action["direction"]]
            if offset in self.blocks:
                raise InconsistentUpdate(f"Attach onto occupied offset {offset}")
            block_type = None
            if previous is not None:
                for thing, detail in previous.things.get(offset, ()):
                    if thing == "block":
                        block_type = detail
            if block_type is None:
                logging.warning(f"Attached block at {offset} was not in view; type unknown")
                block_type = "unknown"
            self.blocks[offset] = block_type
        elif kind == "detach":
            self.blocks.pop(DIRECTIONS[action["direction"]], None)
            self._drop_disconnected()
        elif kind == "rotate":
            self.blocks = {rotate(offset, action["rotation"]): t for offset, t in self.blocks.items()}
        elif kind == "connect":
            if staged is None:
                logging.warning("Connect succeeded without a staged model change")
                return
            gain, lose = staged
            if lose:
                self.blocks = {}
            else:
                self.blocks.update(gain)

    def _drop_disconnected(self):
        reached = set()
        queue = deque([(0, 0)])
        while queue:
            cell = queue.popleft()
            for nxt in neighbours(cell):
                if nxt in self.blocks and nxt not in reached:
                    reached.add(nxt)
                    queue.append(nxt)
        self.blocks = {o: t for o, t in self.blocks.items() if o in reached}

    def refresh(self, raw):
        """Drop every modeled block whose offset lacks an attached flag; returns the removals"""
        flags = {(x, y) for x, y in raw.attached_flags}
        removed = {(o, t) for o, t in self.blocks.items() if o not in flags}
        for offset, _ in removed:
            del self.blocks[offset]
        if removed:
            logging.debug(f"Attachment refresh dropped {sorted(removed)}")
        return removed

    def _footprint_blocked(self, moves, percepts):
        footprint = {(0, 0)} | set(self.blocks) | self._vacated
        for source, target in moves:
            if target in footprint:
                continue
            terrain = percepts.terrain.get(target)
            if terrain is not None and terrain not in _PASSABLE:
                return True
            if any(kind in _BLOCKING for kind, _ in percepts.things.get(target, ())):
                return True
        return False

    def blocked_moves(self, percepts):
        """Directions in which the agent or one of its blocks would hit something"""
        blocked = set()
        for direction in DIRECTION_ORDER:
            delta = DIRECTIONS[direction]
            moves = [(cell, add(cell, delta)) for cell in [(0, 0)] + sorted(self.blocks)]
            if self._footprint_blocked(moves, percepts):
                blocked.add(direction)
        return blocked

    def blocked_rotations(self, percepts):
        """Rotations whose destination cells are not free"""
        blocked = set()
        for rotation in ROTATIONS:
            moves = [(offset, rotate(offset, rotation)) for offset in sorted(self.blocks)]
            if self._footprint_blocked(moves, percepts):
                blocked.add(rotation)
        return blocked

    def predict_rotated(self, rotation):
        """A copy of this model after `rotation`"""
        model = AttachmentModel()
        model.blocks = {rotate(offset, rotation): t for offset, t in self.blocks.items()}
        model._vacated = self._vacated | set(self.blocks)
        return model

    def to_list(self):
        return sorted([o[0], o[1], t] for o, t in self.blocks.items())
