# --- mailbox.py ---
import json
import logging
from dataclasses import dataclass, asdict
from threading import Lock

MESSAGE_KINDS = ("Assign", "Cancel", "DeliverRequest", "Delivered", "ReadyToConnect", "ConnectDone", "TaskSubmitted")


def operator_name(team):
    return f"operator-{team}"


@dataclass(frozen=True)
class CoordinationMessage:
    kind: str
    sender: str
    recipient: str
    task: str
    # Assign
    req: tuple = None
    plan: tuple = None
    members: tuple = None
    deadline: int = None
    # DeliverRequest, all cells in the master's frame
    dest: tuple = None
    anchor: tuple = None
    reserved: tuple = None
    master: str = None
    # Delivered
    slave: str = None

    def to_dict(self):
        data = {k: v for k, v in asdict(self).items() if v is not None}
        return json.loads(json.dumps(data))

    def sort_key(self):
        return (self.sender, self.kind, self.recipient, json.dumps(self.to_dict(), sort_keys=True))


def assign(sender, recipient, task, req, plan, members, deadline):
    return CoordinationMessage("Assign", sender, recipient, task, req=tuple(req), plan=tuple(tuple(r) for r in plan),
                               members=tuple(members), deadline=deadline)


def cancel(sender, recipient, task):
    return CoordinationMessage("Cancel", sender, recipient, task)


def deliver_request(sender, recipient, task, dest, anchor, reserved):
    return CoordinationMessage("DeliverRequest", sender, recipient, task, dest=tuple(dest), anchor=tuple(anchor),
                               reserved=tuple(tuple(c) for c in reserved), master=sender)


def delivered(sender, recipient, task):
    return CoordinationMessage("Delivered", sender, recipient, task, slave=sender)


def ready_to_connect(sender, recipient, task):
    return CoordinationMessage("ReadyToConnect", sender, recipient, task)


def connect_done(sender, recipient, task):
    return CoordinationMessage("ConnectDone", sender, recipient, task)


def task_submitted(sender, recipient, task):
    return CoordinationMessage("TaskSubmitted", sender, recipient, task)


class Mailbox:
    """In-process message transport; posts become readable after the step boundary"""

    def __init__(self):
        self._lock = Lock()
        self._outgoing = []
        self._inboxes = {}

    def post(self, message):
        with self._lock:
            self._outgoing.append(message)

    def post_all(self, messages):
        with self._lock:
            self._outgoing.extend(messages)

    def deliver(self):
        """Flush posted messages into inboxes in (sender, kind) order; returns them"""
        with self._lock:
            batch = sorted(self._outgoing, key=CoordinationMessage.sort_key)
            self._outgoing = []
            for message in batch:
                self._inboxes.setdefault(message.recipient, []).append(message)
        if batch:
            logging.debug(f"Delivered {len(batch)} messages")
        return batch

    def take(self, name):
        """Remove and return everything delivered to `name`"""
        with self._lock:
            return self._inboxes.pop(name, [])
