# --- match_runner.py ---
"""Headless lockstep match: percepts, operators, agent decisions, engine step, trace.

The loop is the only writer of the trace. Agent decisions may run on a thread
pool; their outputs are always collected and posted in name order.
"""
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import psutil

from assembler.attacker_agent import AttackerState, attacker_decide
from assembler.builder_agent import BuilderState, builder_decide
from assembler.errors import MalformedTrace, ReplayMismatch
from assembler.mailbox import Mailbox
from assembler.operator_agent import OperatorAgent
from assembler.percept_watcher import PerceptWatcher
from assembler.replay_trace import ReplayTrace, normalize
from assembler.world_engine import ActionRequest, WorldEngine

# Seconds a reader waits for the ingestion thread before giving up
CONTAINER_TIMEOUT = 10.0


class MatchRunner:
    def __init__(self, config, threaded=False):
        self.config = config
        self.threaded = threaded
        self.engine = WorldEngine(config)
        self.watcher = PerceptWatcher(self.engine, config)
        self.mailbox = Mailbox()
        self.names = list(self.engine.agent_names)

        self.operators = []
        for team in config.teams:
            members = [n for n in self.names if config.team_of(n) == team]
            operator = OperatorAgent(team, config, self.mailbox, members)
            self.watcher.post_ingest_hooks.append(operator.on_ingest)
            self.operators.append(operator)

        self.states = {}
        for name in self.names:
            self.states[name] = BuilderState() if config.role_of(name) == "builder" else AttackerState()

        self.trace = ReplayTrace.start(config, self.names)
        self._watcher_thread = None

    def _containers(self, step):
        if self.threaded:
            self.watcher.notify_step()
        else:
            self.watcher.poll_and_update()
        return {name: self.watcher.get_container(name, step, timeout=CONTAINER_TIMEOUT) for name in self.names}

    def _decide(self, name, container, inbox):
        state = self.states[name]
        if self.config.role_of(name) == "builder":
            action, state, outbox = builder_decide(container, state, inbox, self.config)
        else:
            action, state = attacker_decide(container, state, self.config)
            outbox = []
        self.states[name] = state
        return action, outbox

    def run_step(self, executor=None):
        step = self.engine.step
        containers = self._containers(step)
        delivered = self.mailbox.deliver()
        tasks = [t.to_dict() for t in self.engine.world.tasks]

        for operator in self.operators:
            self.mailbox.post_all(operator.step(containers, self.mailbox.take(operator.name), step))
        team_events = []
        for operator in self.operators:
            team_events.extend(operator.drain_events())

        inboxes = {name: self.mailbox.take(name) for name in self.names}
        jobs = [(name, containers[name], inboxes[name]) for name in self.names]
        if executor is not None:
            decisions = list(executor.map(lambda job: self._decide(*job), jobs))
        else:
            decisions = [self._decide(*job) for job in jobs]

        actions = {}
        for name, (action, outbox) in zip(self.names, decisions):
            actions[name] = action
            self.mailbox.post_all(outbox)

        # Captured before the engine advances; a threaded watcher may ingest right after
        agents = {}
        for name in self.names:
            container = containers[name]
            agents[name] = {
                "percepts": container.raw.to_dict(),
                "virtual_pos": list(container.origin),
                "attachments": container.attach_model.to_list(),
                "map_delta": self.watcher.map_deltas[name],
                "identified": {peer: list(t.as_tuple()) for peer, t in container.identified.items()},
                "phase": self.states[name].phase.value,
            }

        results, events = self.engine.advance(actions)
        self.trace.append({
            "step": step,
            "agents": agents,
            "messages": [m.to_dict() for m in delivered],
            "actions": {name: actions[name].to_dict() for name in self.names},
            "results": {name: results[name].value for name in self.names},
            "events": events,
            "team_events": team_events,
            "tasks": tasks,
            "scores": dict(self.engine.world.scores),
        })

    def run(self):
        """Play config.max_steps steps and return the trace"""
        process = psutil.Process()
        cpu_before = process.cpu_times()
        started = time.monotonic()
        logging.info(f"Starting match: {len(self.names)} agents, {self.config.max_steps} steps, "
                     f"seed {self.config.seed}")

        if self.threaded:
            self._watcher_thread = threading.Thread(target=self.watcher.run, daemon=True)
            self._watcher_thread.start()
        executor = None
        if self.config.agent_threads > 1:
            executor = ThreadPoolExecutor(max_workers=self.config.agent_threads)
        try:
            for _ in range(self.config.max_steps):
                self.run_step(executor)
        finally:
            if executor is not None:
                executor.shutdown(wait=True)
            if self._watcher_thread is not None:
                self.watcher.stop()
                self._watcher_thread.join(timeout=CONTAINER_TIMEOUT)

        cpu_after = process.cpu_times()
        self.trace.summary = {
            "steps": self.config.max_steps,
            "seconds": round(time.monotonic() - started, 3),
            "cpu_seconds": round((cpu_after.user - cpu_before.user) + (cpu_after.system - cpu_before.system), 3),
            "rss_mb": round(process.memory_info().rss / (1024 * 1024), 1),
            "scores": dict(self.engine.world.scores),
        }
        summary = self.trace.summary
        logging.info(f"Match finished in {summary['seconds']}s (cpu {summary['cpu_seconds']}s, "
                     f"rss {summary['rss_mb']} MB); scores {summary['scores']}")
        return self.trace


def run(config, threaded=False):
    return MatchRunner(config, threaded=threaded).run()


def match_outcome(scores):
    """win / tie / loss per team from final scores"""
    best = max(scores.values()) if scores else 0
    leaders = [team for team, score in scores.items() if score == best]
    outcome = {}
    for team, score in scores.items():
        if score < best:
            outcome[team] = "loss"
        else:
            outcome[team] = "win" if len(leaders) == 1 else "tie"
    return outcome


def run_simulations(config, count, threaded=False):
    """`count` matches with seeds seed, seed+1, ...; returns (trace, outcome) pairs"""
    played = []
    for index in range(count):
        trace = run(replace(config, seed=config.seed + index), threaded=threaded)
        scores = trace.records[-1]["scores"] if trace.records else {t: 0 for t in config.teams}
        outcome = match_outcome(scores)
        logging.info(f"Simulation {index + 1}/{count}: {outcome}")
        played.append((trace, outcome))
    return played


def _compare(step, field, expected, actual):
    actual = normalize(actual)
    if expected != actual:
        raise ReplayMismatch(step, field, expected, actual)


def validate(trace):
    """Re-simulate the recorded actions and check every world-derived field"""
    config = trace.config()
    engine = WorldEngine(config)
    if list(engine.agent_names) != list(trace.agents):
        raise MalformedTrace(f"Trace agents {trace.agents} do not match config agents {engine.agent_names}")

    for record in trace.records:
        step = record["step"]
        if engine.step != step:
            raise ReplayMismatch(step, "step", step, engine.step)
        _compare(step, "tasks", record["tasks"], [t.to_dict() for t in engine.world.tasks])
        for name in trace.agents:
            _compare(step, f"agents.{name}.percepts", record["agents"][name]["percepts"],
                     engine.percepts(name).to_dict())
        try:
            actions = {name: ActionRequest.from_dict(record["actions"][name]) for name in trace.agents}
        except (KeyError, TypeError) as e:
            raise MalformedTrace(f"Step {step} holds an unreadable action: {e}") from e
        results, events = engine.advance(actions)
        _compare(step, "results", record["results"], {name: r.value for name, r in results.items()})
        _compare(step, "events", record["events"], events)
        _compare(step, "scores", record["scores"], engine.world.scores)

    logging.info(f"Replay of {len(trace.records)} steps matches the trace")
    return True
