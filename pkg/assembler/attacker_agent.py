# --- attacker_agent.py ---
import logging
from dataclasses import dataclass, field
from enum import Enum

from assembler.geometry import manhattan, neighbours
from assembler.movement import NavMemory, explore, step_toward, unstuck_decide
from assembler.world_engine import ActionRequest

# Consecutive clears on one target before it triggers
STRIKE_CHARGES = 3


class AttackerPhase(str, Enum):
    EXPLORING = "Exploring"
    MONITORING_GOAL = "MonitoringGoal"
    STRIKING = "Striking"


@dataclass
class AttackerState:
    phase: AttackerPhase = AttackerPhase.EXPLORING
    # (target cell in the virtual frame, clears issued so far)
    strike_target: tuple = None
    nav: NavMemory = field(default_factory=NavMemory)


def _strike_candidates(container, config):
    """Attached blocks next to an enemy standing on goal terrain, nearest first"""
    percepts = container.percepts
    candidates = []
    for enemy in percepts.enemies:
        if percepts.terrain.get(enemy) != "goal":
            continue
        for cell in neighbours(enemy):
            if cell not in percepts.attached or not percepts.has_thing(cell, "block"):
                continue
            # Never hit a block a teammate could be standing next to
            if any(manhattan(mate, cell) <= max(1, config.clear_radius) for mate in percepts.teammates):
                continue
            if manhattan(cell) > config.vision_radius or cell == (0, 0):
                continue
            candidates.append((manhattan(cell), cell[1], cell[0], cell))
    return [c[3] for c in sorted(candidates)]


def _target_valid(container, offset, config):
    return offset in _strike_candidates(container, config)


def attacker_decide(container, state, config):
    """One decision step for an attacker; returns (ActionRequest, state)"""
    state.nav.clear_energy = config.clear_energy
    state.nav.vision_radius = config.vision_radius
    if container.raw.disabled:
        state.strike_target = None
        return ActionRequest.skip(), state

    unstuck = unstuck_decide(container, state.nav)
    if unstuck is not None:
        return unstuck, state

    if state.strike_target is not None:
        cell, issued = state.strike_target
        offset = container.to_relative(cell)
        raw = container.raw
        if issued >= STRIKE_CHARGES or (issued and raw.last_action_result != "success"):
            state.strike_target = None
        elif _target_valid(container, offset, config):
            if raw.energy < config.clear_energy:
                state.strike_target = None
            else:
                state.strike_target = (cell, issued + 1)
                return ActionRequest.clear(offset), state
        else:
            logging.debug(f"{container.agent_name}: strike target {cell} no longer valid")
            state.strike_target = None
        state.phase = AttackerPhase.MONITORING_GOAL

    if container.raw.energy >= config.clear_energy:
        candidates = _strike_candidates(container, config)
        if candidates:
            offset = candidates[0]
            state.phase = AttackerPhase.STRIKING
            state.strike_target = (container.to_absolute(offset), 1)
            logging.info(f"{container.agent_name}: striking block at {offset}")
            return ActionRequest.clear(offset), state

    model = container.map_model
    goal = model.find_nearest(container.origin, lambda p: p.terrain == "goal")
    if goal is None:
        state.phase = AttackerPhase.EXPLORING
        return explore(container, state.nav), state

    state.phase = AttackerPhase.MONITORING_GOAL
    action = step_toward(container, state.nav, goal)
    if action == "unreachable":
        return explore(container, state.nav), state
    if action is None:
        return ActionRequest.skip(), state
    return action, state
