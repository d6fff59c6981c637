# --- metrics.py ---
"""Per-team performance metrics computed from a replay trace.

Blocks are followed by their engine ids from attach through connect to
submit, so "used" attachments are exact rather than estimated.
"""
import json
from dataclasses import dataclass, asdict, field

from assembler.errors import MalformedTrace

ABSENT = "-"


@dataclass
class MetricsReport:
    team: str
    score: int = 0
    used: int = 0
    obtained: int = 0
    connections: int = 0
    submitted: int = 0
    failed: int = 0
    failed_causes: dict = field(default_factory=dict)
    first_task_start: int = None
    avg_task_req_size: float = None
    avg_completion_per_req: float = None
    avg_attach_to_connect: float = None
    avg_last_connect_to_submit: float = None
    rejected: int = 0

    @property
    def utilization(self):
        return f"{self.used} / {self.obtained}"

    def to_dict(self):
        return asdict(self)


# (label, attribute) in report order; None attribute is a section break
TABLE_ROWS = (
    ("Score", "score"),
    ("Attachment Utilization (Used/Obtained)", "utilization"),
    ("Number of Connections Made", "connections"),
    ("Submitted Tasks", "submitted"),
    ("Failed Submissions", "failed"),
    (None, None),
    ("First Task Start Time", "first_task_start"),
    ("Avg. Task Requirement Size", "avg_task_req_size"),
    ("Avg. Task Completion Time (Per Req.)", "avg_completion_per_req"),
    ("Avg. Attach to Connect Time", "avg_attach_to_connect"),
    ("Avg. Last Connect to Submit Time", "avg_last_connect_to_submit"),
    (None, None),
    ("Opponent Rejected Submissions", "rejected"),
)


def _mean(values):
    return sum(values) / len(values) if values else None


def _events(trace):
    """(step, event) pairs in trace order"""
    try:
        for record in trace.records:
            for event in record["events"]:
                yield record["step"], event
    except (KeyError, TypeError) as e:
        raise MalformedTrace(f"Trace step record is missing events: {e}") from e


def _assignment_windows(trace):
    """Per team, every assigned episode as (task, agents, master, start, end)"""
    windows = {}
    open_ = {}
    for record in trace.records:
        step = record["step"]
        for event in record.get("team_events", []):
            team = event.get("team")
            key = (team, event.get("task"))
            if event["kind"] == "assigned":
                agents = [a["agent"] for a in event["assignments"]]
                master = next((a["agent"] for a in event["assignments"] if a["req"][:2] == [0, 1]), None)
                open_[key] = (event["task"], agents, master, step)
            elif event["kind"] in ("cancelled", "completed") and key in open_:
                task, agents, master, start = open_.pop(key)
                windows.setdefault(team, []).append((task, agents, master, start, step))
    last = trace.records[-1]["step"] if trace.records else 0
    for (team, _), (task, agents, master, start) in sorted(open_.items()):
        windows.setdefault(team, []).append((task, agents, master, start, last))
    return windows


def _task_sizes(trace):
    sizes = {}
    for record in trace.records:
        for task in record.get("tasks", []):
            sizes[task["name"]] = len(task["requirements"])
    return sizes


def compute_metrics(trace):
    """MetricsReport per team, keyed by team name"""
    teams = list(trace.header["config"]["teams"])
    final_scores = trace.records[-1]["scores"] if trace.records else {}
    reports = {team: MetricsReport(team=team, score=final_scores.get(team, 0)) for team in teams}

    attach_steps = {}
    connect_steps = {}
    submits = {team: [] for team in teams}
    submitted_tasks = {team: set() for team in teams}
    failed_submits = {team: set() for team in teams}
    connects = []
    attaches = []

    for step, event in _events(trace):
        kind = event.get("kind")
        if kind == "attach":
            reports[event["team"]].obtained += 1
            attach_steps.setdefault(event["block"], []).append(step)
            attaches.append((step, event))
        elif kind == "connect":
            reports[event["team"]].connections += 1
            for block in event["blocks"]:
                connect_steps.setdefault(block, []).append(step)
            connects.append((step, event))
        elif kind == "submit":
            report = reports[event["team"]]
            report.submitted += 1
            report.used += len(event["blocks"])
            submits[event["team"]].append((step, event))
            submitted_tasks[event["team"]].add(event["task"])
        elif kind == "submit_failed":
            failed_submits[event["team"]].add(event["task"])
        elif kind == "clear":
            hit = [v for v in event["victims"]
                   if v["team"] != event["team"] and v["on_goal"] and v["attachments"] >= 1]
            if hit:
                reports[event["team"]].rejected += 1

    for team in teams:
        report = reports[team]
        team_submits = submits[team]
        if not team_submits:
            continue
        completion = []
        attach_to_connect = []
        last_connect = []
        for step, event in team_submits:
            blocks = event["blocks"]
            block_attach = {}
            for block in blocks:
                earlier = [s for s in attach_steps.get(block, []) if s <= step]
                if earlier:
                    block_attach[block] = earlier[-1]
            if block_attach:
                completion.append((step - min(block_attach.values())) / len(blocks))
            for block, attached_at in sorted(block_attach.items()):
                joined = [s for s in connect_steps.get(block, []) if attached_at <= s <= step]
                if joined:
                    attach_to_connect.append(joined[0] - attached_at)
            joined = [s for b in blocks for s in connect_steps.get(b, []) if s <= step]
            if joined:
                last_connect.append(step - max(joined))

        first_step, first = team_submits[0]
        first_attaches = [s for b in first["blocks"] for s in attach_steps.get(b, []) if s <= first_step]
        report.first_task_start = min(first_attaches) if first_attaches else None
        report.avg_task_req_size = _mean([len(e["blocks"]) for _, e in team_submits])
        report.avg_completion_per_req = _mean(completion)
        report.avg_attach_to_connect = _mean(attach_to_connect)
        report.avg_last_connect_to_submit = _mean(last_connect)

    sizes = _task_sizes(trace)
    for team, windows in _assignment_windows(trace).items():
        if team not in reports:
            continue
        counted = set()
        for task, agents, master, start, end in windows:
            if task in submitted_tasks[team] or task in counted:
                continue
            size = sizes.get(task, len(agents))
            if size > 1:
                joined = sum(1 for s, e in connects
                             if start <= s <= end and e["team"] == team and set(e["entities"]) & set(agents))
                complete = joined >= size - 1
            else:
                complete = any(start <= s <= end and e["entity"] == master for s, e in attaches)
            if not complete:
                continue
            counted.add(task)
            cause = "submit_failed" if task in failed_submits[team] else "deadline"
            reports[team].failed += 1
            reports[team].failed_causes[cause] = reports[team].failed_causes.get(cause, 0) + 1
    return reports


def _cell(report, attribute):
    value = getattr(report, attribute)
    if value is None:
        return ABSENT
    if isinstance(value, float):
        return f"{round(value, 1):g}"
    return str(value)


def format_table(reports):
    """Plain-text table: one row per metric, one column per team"""
    teams = sorted(reports)
    label_width = max(len(label) for label, _ in TABLE_ROWS if label)
    widths = {team: max(len(team), *(len(_cell(reports[team], a)) for _, a in TABLE_ROWS if a)) for team in teams}
    header = f"{'Metric':<{label_width}} | " + " | ".join(f"{team:>{widths[team]}}" for team in teams)
    rule = "=" * len(header)
    lines = [header, rule]
    for label, attribute in TABLE_ROWS:
        if label is None:
            lines.append(rule)
            continue
        cells = " | ".join(f"{_cell(reports[team], attribute):>{widths[team]}}" for team in teams)
        lines.append(f"{label:<{label_width}} | {cells}")
    causes = [f"{team}: {reports[team].failed_causes}" for team in teams if reports[team].failed_causes]
    if causes:
        lines.append("Failed submission causes: " + "; ".join(causes))
    return "\n".join(lines)


def format_json(reports):
    return json.dumps({team: reports[team].to_dict() for team in sorted(reports)}, indent=2, sort_keys=True)
