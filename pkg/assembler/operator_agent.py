# --- operator_agent.py ---
import logging

from assembler import mailbox
from assembler.identification import SightingReport, compute_translation, on_identified, pair_reports, share_recent_cells
from assembler.task_planner import assign_tasks, form_subteams, monitor_assignments, plan_requirements


class OperatorAgent:
    """Team-level coordinator: identifies teammates, forms sub-teams and hands out tasks"""

    def __init__(self, team, config, mailbox_, members):
        self.team = team
        self.name = mailbox.operator_name(team)
        self.config = config
        self.mailbox = mailbox_
        self.members = sorted(members)
        self.builders = sorted(m for m in members if config.role_of(m) == "builder")
        self.assignments = []
        self.events = []

    def on_ingest(self, watcher, step, staged, seen):
        """Percept hook: pair this step's mutual sightings, then sync fresh cells"""
        reports = []
        for name in self.members:
            container = staged[name]
            for offset in container.percepts.teammates:
                reports.append(SightingReport(name, step, offset, container.virtual_pos.cell))

        def known(a, b):
            return b in watcher.identified(a)

        pairs, aborted = pair_reports(reports, known)
        if aborted:
            logging.debug(f"{self.name}: step {step} identification aborted for {aborted}")
        for report_a, report_b in pairs:
            translation = compute_translation(report_a.position, report_a.offset, report_b.position)
            on_identified(watcher, report_a.reporter, report_b.reporter, translation)
            self.events.append({"kind": "identified", "team": self.team,
                                "pair": [report_a.reporter, report_b.reporter],
                                "translation": list(translation.as_tuple())})
        share_recent_cells(watcher, self.members, seen)

    def busy_agents(self):
        return {a.agent for a in self.assignments}

    def _drop_task(self, task, notify, reason):
        members = sorted(a.agent for a in self.assignments if a.task == task)
        self.assignments = [a for a in self.assignments if a.task != task]
        if not members:
            return []
        messages = [mailbox.cancel(self.name, m, task) for m in members if m not in notify]
        self.events.append({"kind": "cancelled", "team": self.team, "task": task, "agents": members,
                            "reason": reason})
        logging.info(f"{self.name}: {task} released ({reason}), freeing {', '.join(members)}")
        return messages

    def step(self, containers, inbox, step):
        """Monitor, re-form sub-teams and assign; returns messages to post"""
        outbox = []
        for message in inbox:
            if message.kind == "TaskSubmitted":
                members = sorted(a.agent for a in self.assignments if a.task == message.task)
                self.assignments = [a for a in self.assignments if a.task != message.task]
                if members:
                    self.events.append({"kind": "completed", "team": self.team, "task": message.task,
                                        "agents": members})
            elif message.kind == "Cancel":
                outbox.extend(self._drop_task(message.task, {message.sender}, "master gave up"))

        if not self.members:
            return outbox
        tasks = containers[self.members[0]].raw.tasks
        kept, cancelled = monitor_assignments(self.assignments, tasks, step)
        for task in sorted({a.task for a in cancelled}):
            outbox.extend(self._drop_task(task, set(), "expired or submitted"))

        busy = self.busy_agents()
        free = [b for b in self.builders if b not in busy]
        if free:
            identified = {b: set(containers[b].identified) for b in free}
            subteams = form_subteams(free, identified)
            taken = {a.task for a in self.assignments}
            open_tasks = [t for t in tasks if t.submitted_by is None and t.deadline >= step]
            new = assign_tasks(subteams, open_tasks, step, self.config.min_slack, taken)
            by_task = {}
            for assignment in new:
                by_task.setdefault(assignment.task, []).append(assignment)
            task_index = {t.name: t for t in tasks}
            for task_name in sorted(by_task):
                group = by_task[task_name]
                task = task_index[task_name]
                plan = plan_requirements(task.requirements)
                members = [a.agent for a in group]
                for assignment in group:
                    outbox.append(mailbox.assign(self.name, assignment.agent, task_name, assignment.req,
                                                 plan.seq, members, task.deadline))
                self.assignments.extend(group)
                self.events.append({"kind": "assigned", "team": self.team, "task": task_name,
                                    "assignments": [a.to_dict() for a in group]})
                logging.info(f"{self.name}: assigned {task_name} ({len(group)} reqs) to {', '.join(members)}")
        return outbox

    def drain_events(self):
        events, self.events = self.events, []
        return events
