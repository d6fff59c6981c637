# --- replay_trace.py ---
"""Line-delimited replay trace: one header record, then one record per step"""
import json
import logging
import os

from assembler.errors import InvalidConfig, MalformedTrace, StepOutOfRange
from assembler.settings_manager import SettingsManager

TRACE_VERSION = 1

STEP_FIELDS = ("step", "agents", "messages", "actions", "results", "events", "team_events", "tasks", "scores")


def normalize(value):
    """Plain JSON form of a record value (tuples become lists, keys become strings)"""
    return json.loads(json.dumps(value, sort_keys=True))


def _dump(record):
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


class ReplayTrace:
    def __init__(self, header, records=None):
        self.header = header
        self.records = list(records or [])
        # Filled in by the runner; never serialized
        self.summary = None

    @classmethod
    def start(cls, config, agent_names):
        header = {
            "type": "header",
            "schema_version": TRACE_VERSION,
            "config": config.to_dict(),
            "agents": list(agent_names),
        }
        return cls(normalize(header))

    @property
    def agents(self):
        return self.header["agents"]

    @property
    def steps(self):
        return len(self.records)

    def append(self, record):
        record = normalize(dict(record, type="step"))
        expected = self.records[-1]["step"] + 1 if self.records else 0
        if record["step"] != expected:
            raise MalformedTrace(f"Step records must be consecutive: got {record['step']}, expected {expected}")
        self.records.append(record)

    def record_at(self, step):
        if not 0 <= step < len(self.records):
            raise StepOutOfRange(f"Step {step} not in trace (0..{len(self.records) - 1})")
        return self.records[step]

    def config(self):
        """Rebuild the SimConfig echoed in the header"""
        settings = SettingsManager()
        try:
            settings.update(self.header["config"])
            return settings.to_config()
        except InvalidConfig as e:
            raise MalformedTrace(f"Trace header holds an invalid config: {e}") from e

    def to_lines(self):
        return [_dump(self.header)] + [_dump(r) for r in self.records]

    def save(self, path):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w") as f:
            for line in self.to_lines():
                f.write(line + "\n")
        logging.info(f"Wrote trace with {len(self.records)} steps to {path}")

    @classmethod
    def load(cls, path):
        try:
            with open(path, "r") as f:
                lines = f.readlines()
        except IOError as e:
            raise MalformedTrace(f"Cannot read trace {path}: {e}") from e
        return cls.from_lines(lines)

    @classmethod
    def from_lines(cls, lines):
        lines = [line for line in lines if line.strip()]
        if not lines:
            raise MalformedTrace("Trace is empty")
        try:
            records = [json.loads(line) for line in lines]
        except json.JSONDecodeError as e:
            raise MalformedTrace(f"Trace line is not valid JSON: {e}") from e

        header = records[0]
        if not isinstance(header, dict) or header.get("type") != "header":
            raise MalformedTrace("Trace must start with a header record")
        if header.get("schema_version") != TRACE_VERSION:
            raise MalformedTrace(f"Unsupported trace version: {header.get('schema_version')}")
        for key in ("config", "agents"):
            if key not in header:
                raise MalformedTrace(f"Trace header is missing '{key}'")

        trace = cls(header)
        for record in records[1:]:
            if not isinstance(record, dict) or record.get("type") != "step":
                raise MalformedTrace(f"Unexpected record: {str(record)[:80]}")
            missing = [k for k in STEP_FIELDS if k not in record]
            if missing:
                raise MalformedTrace(f"Step record {record.get('step')} is missing {', '.join(missing)}")
            trace.append(record)
        return trace
