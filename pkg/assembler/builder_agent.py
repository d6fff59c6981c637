# --- builder_agent.py ---
"""Builder state machine: obtain a block, bring it to the master, connect, submit.

The master of a task is the member holding the (0, 1) requirement. It picks a
goal cell as meeting point, asks each slave in plan order to deliver its block
next to the growing structure, connects it, and submits after the last one.
"""
import logging
from dataclasses import dataclass, field
from enum import Enum

from assembler import mailbox
from assembler.geometry import add, direction_of, manhattan, rotate, sub, yx_key
from assembler.movement import NavMemory, attachment_cells, explore, rotation_toward, step_toward
from assembler.task_planner import MASTER_OFFSET, OrderedPlan, TaskAssignment
from assembler.world_engine import ActionRequest
from assembler.world_state import Requirement


class BuilderPhase(str, Enum):
    FREE = "Free"
    OBTAINING = "Obtaining"
    AWAITING_TURN = "AwaitingTurn"
    DELIVERING = "Delivering"
    CONNECTING = "Connecting"
    SUBMITTING_SUPPORT = "SubmittingSupport"
    MASTER_COLLECTING = "MasterCollecting"
    MASTER_SUBMITTING = "MasterSubmitting"


@dataclass
class BuilderState:
    phase: BuilderPhase = BuilderPhase.FREE
    assignment: TaskAssignment = None
    plan: OrderedPlan = None
    members: tuple = ()
    deadline: int = None
    meeting_point: tuple = None
    current_target: tuple = None
    fail_streak: int = 0
    # Meeting points that proved unusable for the current task
    rejected_points: set = field(default_factory=set)
    approach_stalls: int = 0
    support_idle: int = 0
    nav: NavMemory = field(default_factory=NavMemory)
    # Reset keeps a still-valid assignment and starts it over once unloaded
    resume: bool = False
    # Slave side
    delivery: mailbox.CoordinationMessage = None
    stance: tuple = None
    # Master side
    next_index: int = 1
    awaiting: str = None
    connected: int = 0
    # Connect handshake, both sides
    connect_due: int = None
    connect_attempts: int = 0
    last_issued: ActionRequest = None

    @property
    def is_master(self):
        return self.assignment is not None and (self.assignment.req.x, self.assignment.req.y) == MASTER_OFFSET

    @property
    def master(self):
        return self.members[0] if self.members else None

    def clear_task(self):
        self.phase = BuilderPhase.FREE
        self.assignment = None
        self.plan = None
        self.members = ()
        self.deadline = None
        self.resume = False
        self.rejected_points = set()
        self._clear_progress()

    def _clear_progress(self):
        self.meeting_point = None
        self.current_target = None
        self.delivery = None
        self.stance = None
        self.next_index = 1
        self.awaiting = None
        self.connected = 0
        self.connect_due = None
        self.connect_attempts = 0
        self.approach_stalls = 0
        self.support_idle = 0
        self.nav.reset()


def builder_decide(container, state, inbox, config):
    """One decision step; returns (ActionRequest, state, outbox)"""
    outbox = []
    state.nav.clear_energy = config.clear_energy
    state.nav.vision_radius = config.vision_radius
    _account_failures(container, state)
    _read_inbox(container, state, inbox, outbox)

    step = container.current_step
    if state.assignment is not None and state.deadline is not None and state.deadline < step:
        logging.info(f"{container.agent_name}: {state.assignment.task} expired, dropping it")
        state.clear_task()

    if state.fail_streak >= config.fail_tolerance:
        _reset(container, state, outbox)

    if container.raw.disabled:
        action = ActionRequest.skip()
    else:
        action = _PHASES[state.phase](container, state, outbox, config)
    state.last_issued = action
    logging.debug(f"{container.agent_name} [{state.phase.value}] -> {action.to_dict()}")
    return action, state, outbox


def _account_failures(container, state):
    raw = container.raw
    last = state.last_issued
    if last is None or raw.disabled or last.kind in ("skip", "connect"):
        return
    if raw.last_action_result == "success":
        state.fail_streak = 0
    else:
        state.fail_streak += 1


def _read_inbox(container, state, inbox, outbox):
    me = container.agent_name
    step = container.current_step
    for message in inbox:
        if message.kind == "Assign":
            if state.assignment is not None and state.assignment.task == message.task:
                continue
            state.clear_task()
            state.assignment = TaskAssignment(agent=me, task=message.task, req=Requirement(*message.req))
            state.plan = OrderedPlan(tuple(Requirement(*r) for r in message.plan))
            state.members = tuple(message.members)
            state.deadline = message.deadline
            state.phase = BuilderPhase.OBTAINING
            state.fail_streak = 0
            logging.info(f"{me}: assigned {message.task} requirement {message.req}"
                         f"{' as master' if state.is_master else ''}")
            continue

        if state.assignment is None or message.task != state.assignment.task:
            continue
        if message.kind == "Cancel":
            logging.info(f"{me}: {message.task} cancelled")
            state.clear_task()
        elif message.kind == "TaskSubmitted":
            state.clear_task()
        elif message.kind == "DeliverRequest":
            state.delivery = message
            state.stance = None
            if state.phase in (BuilderPhase.AWAITING_TURN, BuilderPhase.CONNECTING, BuilderPhase.DELIVERING):
                state.phase = BuilderPhase.DELIVERING
                state.connect_due = None
        elif message.kind == "ReadyToConnect":
            if state.phase == BuilderPhase.CONNECTING:
                state.connect_due = step
                state.connect_attempts = 0
        elif message.kind == "Delivered":
            if state.is_master and message.slave == state.awaiting:
                outbox.append(mailbox.ready_to_connect(me, message.slave, message.task))
                state.connect_due = step + 1
                state.connect_attempts = 0


def _reset(container, state, outbox):
    me = container.agent_name
    logging.warning(f"{me}: {state.fail_streak} failures in a row, resetting from {state.phase.value}")
    state.fail_streak = 0
    if state.assignment is not None and state.is_master and state.connected > 0:
        outbox.append(mailbox.cancel(me, mailbox.operator_name(container.team), state.assignment.task))
        state.clear_task()
        return
    if state.is_master and state.meeting_point is not None:
        state.rejected_points.add(state.meeting_point)
    delivery = state.delivery
    state._clear_progress()
    state.delivery = delivery
    state.resume = state.assignment is not None
    state.phase = BuilderPhase.FREE


def _on_goal(container):
    return container.percepts.terrain.get((0, 0)) == "goal"


def _detach_one(container):
    """Detach an adjacent attached block, lowest (y, x) first; None if none is adjacent"""
    for offset in sorted(container.attach_model.offsets(), key=yx_key):
        if manhattan(offset) == 1:
            return ActionRequest.detach(direction_of(offset))
    return None


def _phase_free(container, state, outbox, config):
    if container.attach_model.blocks:
        if _on_goal(container):
            return explore(container, state.nav)
        action = _detach_one(container)
        if action is not None:
            return action
    if state.resume and state.assignment is not None:
        state.resume = False
        state.phase = BuilderPhase.OBTAINING
        return _phase_obtaining(container, state, outbox, config)
    return explore(container, state.nav)


def _obtain(container, state):
    """Action that progresses toward holding exactly the required block, or None when held"""
    block_type = state.assignment.req.block_type
    attach = container.attach_model
    keep = attach.offset_of(block_type)
    extras = [o for o in attach.offsets() if o != keep]
    if extras:
        # Unload outside goal terrain so submissions elsewhere are not disturbed
        if _on_goal(container):
            return explore(container, state.nav)
        for offset in sorted(extras, key=yx_key):
            if manhattan(offset) == 1:
                return ActionRequest.detach(direction_of(offset))
        return _detach_one(container)
    if keep is not None:
        return None

    model = container.map_model
    ignore = attachment_cells(container)
    dispenser = model.find_nearest(container.origin, lambda p: p.has_thing("dispenser", block_type), ignore)
    if dispenser is None:
        return explore(container, state.nav)
    state.current_target = dispenser
    rel = container.to_relative(dispenser)
    if manhattan(rel) == 1:
        direction = direction_of(rel)
        percepts = container.percepts
        if percepts.has_thing(rel, "block"):
            if rel in percepts.attached:
                return ActionRequest.skip()
            return ActionRequest.attach(direction)
        return ActionRequest.request(direction)
    action = step_toward(container, state.nav, dispenser, stop_adjacent=True)
    if action == "unreachable":
        return explore(container, state.nav)
    return action if action is not None else ActionRequest.skip()


def _phase_obtaining(container, state, outbox, config):
    action = _obtain(container, state)
    if action is not None:
        return action
    state.current_target = None
    if state.is_master:
        state.phase = BuilderPhase.MASTER_COLLECTING
        return _phase_master_collecting(container, state, outbox, config)
    if state.delivery is not None:
        state.phase = BuilderPhase.DELIVERING
        return _phase_delivering(container, state, outbox, config)
    state.phase = BuilderPhase.AWAITING_TURN
    return explore(container, state.nav)


def _phase_awaiting_turn(container, state, outbox, config):
    if container.attach_model.offset_of(state.assignment.req.block_type) is None:
        state.phase = BuilderPhase.OBTAINING
        return _phase_obtaining(container, state, outbox, config)
    if state.delivery is not None:
        state.phase = BuilderPhase.DELIVERING
        return _phase_delivering(container, state, outbox, config)
    return explore(container, state.nav)


def _turn_block(container, current, wanted):
    """Rotate so the block at `current` ends at `wanted`; None if both rotations are blocked"""
    blocked = container.attach_model.blocked_rotations(container.percepts)
    first = rotation_toward(current, wanted)
    for rotation in (first, "ccw" if first == "cw" else "cw"):
        if rotation not in blocked:
            return ActionRequest.rotate(rotation)
    return None


def _choose_stance(container, dest, excluded):
    model = container.map_model
    origin = container.origin
    ignore = attachment_cells(container)
    dist = model.distances_from(origin, ignore)
    options = []
    for delta in ((0, 1), (1, 0), (-1, 0), (0, -1)):
        cell = add(dest, delta)
        if cell in excluded:
            continue
        if cell != origin and not model.is_traversable(cell, ignore):
            continue
        if cell not in dist:
            continue
        options.append((dist[cell], cell[1], cell[0], cell))
    return min(options)[3] if options else None


def _phase_delivering(container, state, outbox, config):
    me = container.agent_name
    block_type = state.assignment.req.block_type
    offset = container.attach_model.offset_of(block_type)
    if offset is None:
        state.phase = BuilderPhase.OBTAINING
        return _phase_obtaining(container, state, outbox, config)
    master = state.delivery.master
    translation = container.identified.get(master)
    if translation is None:
        logging.warning(f"{me}: cannot deliver, {master} is not identified")
        state.fail_streak += 1
        return ActionRequest.skip()

    dest = translation.apply(state.delivery.dest)
    excluded = {translation.apply(c) for c in state.delivery.reserved}
    excluded.add(translation.apply(state.delivery.anchor))
    if state.stance is None:
        state.stance = _choose_stance(container, dest, excluded)
        if state.stance is None:
            state.fail_streak += 1
            return explore(container, state.nav)

    if container.origin != state.stance:
        action = step_toward(container, state.nav, state.stance)
        if action == "unreachable":
            state.stance = None
            state.fail_streak += 1
            return ActionRequest.skip()
        if action is not None:
            return action

    wanted = sub(dest, state.stance)
    if offset != wanted:
        action = _turn_block(container, offset, wanted)
        if action is None:
            state.fail_streak += 1
            return ActionRequest.skip()
        return action

    outbox.append(mailbox.delivered(me, master, state.assignment.task))
    state.phase = BuilderPhase.CONNECTING
    state.connect_due = None
    state.connect_attempts = 0
    return ActionRequest.skip()


def _slave_connect(container, state):
    offset = container.attach_model.offset_of(state.assignment.req.block_type)
    if offset is None:
        return None
    container.attach_model.stage_connect(lose=True)
    return ActionRequest.connect(state.master, offset)


def _phase_connecting(container, state, outbox, config):
    raw = container.raw
    step = container.current_step
    if state.last_issued is not None and state.last_issued.kind == "connect":
        if raw.last_action_result == "success":
            state.phase = BuilderPhase.SUBMITTING_SUPPORT
            state.connect_due = None
            return ActionRequest.skip()
        state.connect_attempts += 1
        if state.connect_attempts > config.connect_retries:
            logging.warning(f"{container.agent_name}: connect retries exhausted")
            state.fail_streak = config.fail_tolerance
            return ActionRequest.skip()
        state.connect_due = step
    if state.connect_due == step:
        action = _slave_connect(container, state)
        if action is None:
            state.phase = BuilderPhase.OBTAINING
            return _phase_obtaining(container, state, outbox, config)
        return action
    return ActionRequest.skip()


def _phase_submitting_support(container, state, outbox, config):
    """Wait near the master for TaskSubmitted; give the task up after fail_tolerance idle steps"""
    action = _detach_one(container)
    if action is not None:
        return action
    state.support_idle += 1
    if state.support_idle > config.fail_tolerance:
        logging.info(f"{container.agent_name}: no word on {state.assignment.task}, leaving it to the master")
        state.clear_task()
        return explore(container, state.nav)
    return ActionRequest.skip()


def _pattern_rotation(attach, plan):
    """Rotation that brings the structure toward the plan pattern, "ok" if it matches, None if broken"""
    blocks = attach.as_set()
    wanted = {((r.x, r.y), r.block_type) for r in plan}
    rotated = blocks
    for turns in range(4):
        if wanted <= rotated:
            if turns == 0:
                return "ok"
            return "cw" if turns <= 2 else "ccw"
        rotated = {(rotate(o, "cw"), t) for o, t in rotated}
    return None


def _master_connect(container, state):
    req = state.plan.seq[state.next_index]
    rel_dest = (req.x, req.y)
    attach = container.attach_model
    anchors = sorted((o for o in attach.offsets() if manhattan(o, rel_dest) == 1), key=yx_key)
    if not anchors:
        return None
    attach.stage_connect(gain={rel_dest: req.block_type})
    return ActionRequest.connect(state.awaiting, anchors[0])


def _pick_meeting_point(container, state):
    args = (container.map_model, state.plan, container.origin, attachment_cells(container))
    point = choose_meeting_point(*args, excluded=state.rejected_points)
    if point is None and state.rejected_points:
        # Every candidate failed once; occupants may have moved on since
        state.rejected_points = set()
        point = choose_meeting_point(*args)
    return point


def _abandon_meeting_point(container, state, reason):
    if state.connected > 0:
        # Blocks are already connected at this meeting point
        state.fail_streak += 1
        return ActionRequest.skip()
    logging.info(f"{container.agent_name}: meeting point {state.meeting_point} {reason}, choosing another")
    state.rejected_points.add(state.meeting_point)
    state.meeting_point = None
    state.approach_stalls = 0
    state.awaiting = None
    state.connect_due = None
    state.nav.reset()
    return ActionRequest.skip()


def _footprint_free(container, plan):
    """Every requirement cell around the agent is free or holds one of its own blocks"""
    percepts = container.percepts
    own = container.attach_model.offsets()
    for req in plan:
        offset = (req.x, req.y)
        if offset in own or offset not in percepts.terrain:
            continue
        if not percepts.is_free(offset):
            return False
    return True


def _phase_master_collecting(container, state, outbox, config):
    me = container.agent_name
    step = container.current_step
    task = state.assignment.task
    block_type = state.assignment.req.block_type
    if state.connected == 0 and container.attach_model.offset_of(block_type) is None:
        state.phase = BuilderPhase.OBTAINING
        return _phase_obtaining(container, state, outbox, config)

    if state.meeting_point is None:
        state.meeting_point = _pick_meeting_point(container, state)
        if state.meeting_point is None:
            return explore(container, state.nav)
        logging.info(f"{me}: meeting point for {task} at {state.meeting_point}")

    if container.origin != state.meeting_point:
        if not container.map_model.is_traversable(state.meeting_point, attachment_cells(container)):
            return _abandon_meeting_point(container, state, "is occupied")
        action = step_toward(container, state.nav, state.meeting_point)
        if action == "unreachable":
            return _abandon_meeting_point(container, state, "is unreachable")
        if action is not None:
            if action.kind == "skip":
                state.approach_stalls += 1
                if state.approach_stalls >= config.fail_tolerance:
                    return _abandon_meeting_point(container, state, "cannot be approached")
            else:
                state.approach_stalls = 0
            return action
    if not _on_goal(container):
        return _abandon_meeting_point(container, state, "is not goal terrain")
    if state.connected == 0 and state.awaiting is None and not _footprint_free(container, state.plan):
        return _abandon_meeting_point(container, state, "has no room for the structure")

    if state.connected == 0:
        offset = container.attach_model.offset_of(block_type)
        if offset != MASTER_OFFSET:
            action = _turn_block(container, offset, MASTER_OFFSET)
            if action is None:
                state.fail_streak += 1
                return ActionRequest.skip()
            return action

    if state.last_issued is not None and state.last_issued.kind == "connect":
        if container.raw.last_action_result == "success":
            outbox.append(mailbox.connect_done(me, state.awaiting, task))
            state.connected += 1
            state.next_index += 1
            state.awaiting = None
            state.connect_due = None
            state.connect_attempts = 0
        else:
            state.connect_attempts += 1
            if state.connect_attempts > config.connect_retries:
                logging.warning(f"{me}: connect with {state.awaiting} failed {state.connect_attempts} times")
                state.fail_streak = config.fail_tolerance
                return ActionRequest.skip()
            state.connect_due = step

    if state.next_index >= len(state.plan):
        state.phase = BuilderPhase.MASTER_SUBMITTING
        return _phase_master_submitting(container, state, outbox, config)

    if state.connect_due == step:
        action = _master_connect(container, state)
        if action is not None:
            return action
        state.fail_streak += 1
        return ActionRequest.skip()

    if state.awaiting is None:
        req = state.plan.seq[state.next_index]
        slave = state.members[state.next_index]
        mp = state.meeting_point
        dest = add(mp, (req.x, req.y))
        reserved = [add(mp, (r.x, r.y)) for r in state.plan]
        outbox.append(mailbox.deliver_request(me, slave, task, dest, mp, reserved))
        state.awaiting = slave
    return ActionRequest.skip()


def _phase_master_submitting(container, state, outbox, config):
    me = container.agent_name
    task = state.assignment.task
    operator = mailbox.operator_name(container.team)
    raw = container.raw
    if state.last_issued is not None and state.last_issued.kind == "submit":
        if raw.last_action_result == "success":
            for recipient in [operator] + list(state.members[1:]):
                outbox.append(mailbox.task_submitted(me, recipient, task))
            state.clear_task()
            return explore(container, state.nav)
        if raw.last_action_result == "failed_deadline":
            outbox.append(mailbox.cancel(me, operator, task))
            state.clear_task()
            return ActionRequest.skip()

    pattern = _pattern_rotation(container.attach_model, state.plan)
    if pattern is None:
        logging.warning(f"{me}: structure for {task} no longer matches, giving up")
        outbox.append(mailbox.cancel(me, operator, task))
        state.clear_task()
        return ActionRequest.skip()
    if not _on_goal(container):
        goal = container.map_model.find_nearest(container.origin, lambda p: p.terrain == "goal",
                                                attachment_cells(container))
        if goal is None:
            return explore(container, state.nav)
        action = step_toward(container, state.nav, goal)
        if action == "unreachable" or action is None:
            return explore(container, state.nav)
        return action
    if pattern != "ok":
        if pattern in container.attach_model.blocked_rotations(container.percepts):
            state.fail_streak += 1
            return ActionRequest.skip()
        return ActionRequest.rotate(pattern)
    return ActionRequest.submit(task)


_PHASES = {
    BuilderPhase.FREE: _phase_free,
    BuilderPhase.OBTAINING: _phase_obtaining,
    BuilderPhase.AWAITING_TURN: _phase_awaiting_turn,
    BuilderPhase.DELIVERING: _phase_delivering,
    BuilderPhase.CONNECTING: _phase_connecting,
    BuilderPhase.SUBMITTING_SUPPORT: _phase_submitting_support,
    BuilderPhase.MASTER_COLLECTING: _phase_master_collecting,
    BuilderPhase.MASTER_SUBMITTING: _phase_master_submitting,
}


def choose_meeting_point(model, plan, origin, ignore=(), excluded=()):
    """Goal cell with room for every requirement, nearest the dispensers the slaves need.

    Cells in `excluded` and cells with a known occupant are never chosen.
    """
    origin = tuple(origin)
    from_origin = model.distances_from(origin, ignore)
    needed = sorted({r.block_type for r in list(plan)[1:]})
    dispensers = {t: [c for c, p in model.cells.items() if p.has_thing("dispenser", t)] for t in needed}

    best = None
    for cell, percept in model.cells.items():
        if percept.terrain != "goal" or cell in excluded:
            continue
        if cell != origin and not model.is_traversable(cell, ignore):
            continue
        reach = model.path_length_to(from_origin, cell)
        if reach is None:
            continue
        room = True
        for req in plan:
            spot = add(cell, (req.x, req.y))
            if model.is_known(spot) and not model.is_traversable(spot, ignore):
                room = False
                break
        if not room:
            continue
        supply = 0
        if needed:
            from_cell = model.distances_from(cell, ignore)
            for block_type in needed:
                lengths = [model.path_length_to(from_cell, d) for d in dispensers[block_type]]
                lengths = [n for n in lengths if n is not None]
                if lengths:
                    supply += min(lengths)
        key = (supply, reach, cell[1], cell[0])
        if best is None or key < best[0]:
            best = (key, cell)
    return best[1] if best else None

