# --- task_planner.py ---
"""Requirement ordering, sub-team formation and task assignment"""
import logging
from dataclasses import dataclass

import networkx as nx

from assembler.errors import Unplannable
from assembler.world_state import Requirement

MASTER_OFFSET = (0, 1)

# Scan order from the current requirement: east, west, then south
_BUILD_STEPS = ((1, 0), (-1, 0), (0, 1))


@dataclass(frozen=True)
class OrderedPlan:
    seq: tuple

    def __iter__(self):
        return iter(self.seq)

    def __len__(self):
        return len(self.seq)

    def to_list(self):
        return [[r.x, r.y, r.block_type] for r in self.seq]

    @classmethod
    def from_list(cls, data):
        return cls(tuple(Requirement(*r) for r in data))


@dataclass(frozen=True)
class TaskAssignment:
    agent: str
    task: str
    req: Requirement

    def to_dict(self):
        return {"agent": self.agent, "task": self.task, "req": list(self.req)}


def plan_requirements(reqs):
    """Order requirements so each one can be connected to those before it.

    Starts at (0, 1) and walks east, west or south to an unvisited requirement,
    backtracking to the most recent requirement that still has one.
    """
    if not reqs:
        raise Unplannable("Task has no requirements")
    by_cell = {}
    for req in reqs:
        cell = (req.x, req.y)
        if cell in by_cell:
            raise Unplannable(f"Two requirements share cell {cell}")
        by_cell[cell] = req
    if MASTER_OFFSET not in by_cell:
        raise Unplannable("No requirement at (0, 1)")

    seq = [by_cell[MASTER_OFFSET]]
    visited = {MASTER_OFFSET}
    stack = [MASTER_OFFSET]
    while stack:
        current = stack[-1]
        for dx, dy in _BUILD_STEPS:
            nxt = (current[0] + dx, current[1] + dy)
            if nxt in by_cell and nxt not in visited:
                visited.add(nxt)
                seq.append(by_cell[nxt])
                stack.append(nxt)
                break
        else:
            stack.pop()

    if len(seq) != len(by_cell):
        stray = sorted(set(by_cell) - visited, key=lambda c: (c[1], c[0]))
        raise Unplannable(f"Requirements not reachable from (0, 1): {stray}")
    return OrderedPlan(tuple(seq))


def form_subteams(free_agents, identified):
    """Greedy largest-clique partition of free agents over mutual identification"""
    graph = nx.Graph()
    graph.add_nodes_from(free_agents)
    for a in free_agents:
        for b in identified.get(a, ()):
            if b in graph and a in identified.get(b, ()):
                graph.add_edge(a, b)

    subteams = []
    while graph.number_of_nodes():
        best = min((sorted(c) for c in nx.find_cliques(graph)), key=lambda c: (-len(c), c))
        subteams.append(best)
        graph.remove_nodes_from(best)
    return subteams


def is_feasible(task, team_size, step, min_slack):
    return (task.submitted_by is None
            and len(task.requirements) <= team_size
            and task.deadline - step >= min_slack)


def assign_tasks(subteams, tasks, step, min_slack, taken=()):
    """One task per sub-team, members sorted by name take requirements in plan order"""
    taken = set(taken)
    assignments = []
    for team in subteams:
        members = sorted(team)
        candidates = [t for t in tasks if t.name not in taken and is_feasible(t, len(members), step, min_slack)]
        candidates.sort(key=lambda t: (-len(t.requirements), -t.deadline, t.name))
        for task in candidates:
            try:
                plan = plan_requirements(task.requirements)
            except Unplannable as e:
                logging.warning(f"Skipping {task.name}: {e}")
                taken.add(task.name)
                continue
            taken.add(task.name)
            for member, req in zip(members, plan):
                assignments.append(TaskAssignment(agent=member, task=task.name, req=req))
            break
    return assignments


def monitor_assignments(assignments, tasks, world_step):
    """Split assignments into (kept, cancelled) against the current task list"""
    by_name = {t.name: t for t in tasks}
    dead = set()
    for assignment in assignments:
        task = by_name.get(assignment.task)
        if task is None or task.deadline < world_step or task.submitted_by is not None:
            dead.add(assignment.task)
    kept = [a for a in assignments if a.task not in dead]
    cancelled = [a for a in assignments if a.task in dead]
    return kept, cancelled


def is_master(assignment):
    return (assignment.req.x, assignment.req.y) == MASTER_OFFSET
