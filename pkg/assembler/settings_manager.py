# --- settings_manager.py ---
import json
import os
import logging
from dataclasses import dataclass, asdict, field

from assembler.errors import InvalidConfig


@dataclass(frozen=True)
class SimConfig:
    seed: int
    width: int
    height: int
    teams: tuple
    entities_per_team: int
    roles: tuple
    vision_radius: int
    obstacle_density: float
    goal_clusters: int
    goal_cluster_size: int
    block_types: tuple
    dispensers_per_type: int
    task_size_min: int
    task_size_max: int
    task_duration: int
    reward_base: int
    initial_tasks: int
    max_active_tasks: int
    task_probability: float
    clear_event_rate: float
    clear_event_radius: int
    regen_obstacles: int
    clear_radius: int
    disable_duration: int
    max_energy: int
    clear_energy: int
    energy_regen: int
    max_steps: int
    fail_tolerance: int
    chunk_size: int
    min_slack: int
    connect_retries: int
    agent_threads: int
    trace_path: str = "trace.jsonl"
    log_level: str = "INFO"
    log_file: str = ""
    # Explicit placement hooks used by scripted scenarios; empty means random
    layout: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def agent_names(self):
        """All agent names in entity-id order"""
        return [f"{team}{i + 1:02d}" for team in self.teams for i in range(self.entities_per_team)]

    def team_of(self, name):
        for team in self.teams:
            if name.startswith(team) and name[len(team):].isdigit():
                return team
        return None

    def role_of(self, name):
        team = self.team_of(name)
        index = int(name[len(team):]) - 1
        return self.roles[index]

    def to_dict(self):
        data = asdict(self)
        data["teams"] = list(self.teams)
        data["roles"] = list(self.roles)
        data["block_types"] = list(self.block_types)
        return data


class SettingsManager:
    def __init__(self, filepath=None):
        self.filepath = filepath
        self.settings = {}
        self.defaults = {
            "seed": 1,
            "width": 30,
            "height": 30,
            "teams": ["A", "B"],
            "entities_per_team": 10,
            # One role per team slot; None means first half builders, rest attackers
            "roles": None,
            "vision_radius": 5,
            "obstacle_density": 0.12,
            "goal_clusters": 2,
            "goal_cluster_size": 6,
            "block_types": ["b0", "b1"],
            "dispensers_per_type": 2,
            "task_size_min": 1,
            "task_size_max": 3,
            "task_duration": 100,
            "reward_base": 10,
            "initial_tasks": 3,
            "max_active_tasks": 6,
            "task_probability": 0.1,
            "clear_event_rate": 0.02,
            "clear_event_radius": 2,
            "regen_obstacles": 3,
            "clear_radius": 1,
            "disable_duration": 4,
            "max_energy": 100,
            "clear_energy": 30,
            "energy_regen": 1,
            "max_steps": 500,
            "fail_tolerance": 8,
            "chunk_size": 5,
            "min_slack": 60,
            "connect_retries": 3,
            "agent_threads": 1,
            "trace_path": "trace.jsonl",
            "log_level": "INFO",
            "log_file": "",
            "layout": {},
        }
        self.settings = self.defaults.copy()
        if filepath:
            self.load()

    def load(self):
        """Load settings from file on top of the defaults"""
        if not os.path.exists(self.filepath):
            raise InvalidConfig(f"Config file not found: {self.filepath}")
        try:
            with open(self.filepath, 'r') as f:
                loaded_settings = json.load(f)
        except (json.JSONDecodeError, IOError) as e:
            raise InvalidConfig(f"Error loading settings from {self.filepath}: {e}") from e
        if not isinstance(loaded_settings, dict):
            raise InvalidConfig(f"Settings file {self.filepath} must hold a JSON object")

        unknown = sorted(set(loaded_settings) - set(self.defaults))
        if unknown:
            logging.warning(f"Ignoring unknown settings keys: {', '.join(unknown)}")
        self.settings = self.defaults.copy()
        self.settings.update({k: v for k, v in loaded_settings.items() if k in self.defaults})
        logging.debug(f"Loaded {len(loaded_settings)} settings from {self.filepath}")

    def get(self, key, default=None):
        """Get setting value with fallback to default"""
        return self.settings.get(key, self.defaults.get(key, default))

    def set(self, key, value):
        """Set a setting value"""
        if key not in self.defaults:
            raise InvalidConfig(f"Unknown setting: {key}")
        self.settings[key] = value

    def update(self, updates):
        """Update multiple settings at once"""
        for key, value in updates.items():
            self.set(key, value)

    def get_all(self):
        """Get all settings as a dictionary"""
        return self.settings.copy()

    def to_config(self):
        """Validate the current settings and freeze them into a SimConfig"""
        s = self.settings
        roles = s["roles"]
        if roles is None:
            builders = (s["entities_per_team"] + 1) // 2
            roles = ["builder"] * builders + ["attacker"] * (s["entities_per_team"] - builders)

        try:
            config = SimConfig(
                seed=int(s["seed"]),
                width=int(s["width"]),
                height=int(s["height"]),
                teams=tuple(str(t) for t in s["teams"]),
                entities_per_team=int(s["entities_per_team"]),
                roles=tuple(roles),
                vision_radius=int(s["vision_radius"]),
                obstacle_density=float(s["obstacle_density"]),
                goal_clusters=int(s["goal_clusters"]),
                goal_cluster_size=int(s["goal_cluster_size"]),
                block_types=tuple(str(b) for b in s["block_types"]),
                dispensers_per_type=int(s["dispensers_per_type"]),
                task_size_min=int(s["task_size_min"]),
                task_size_max=int(s["task_size_max"]),
                task_duration=int(s["task_duration"]),
                reward_base=int(s["reward_base"]),
                initial_tasks=int(s["initial_tasks"]),
                max_active_tasks=int(s["max_active_tasks"]),
                task_probability=float(s["task_probability"]),
                clear_event_rate=float(s["clear_event_rate"]),
                clear_event_radius=int(s["clear_event_radius"]),
                regen_obstacles=int(s["regen_obstacles"]),
                clear_radius=int(s["clear_radius"]),
                disable_duration=int(s["disable_duration"]),
                max_energy=int(s["max_energy"]),
                clear_energy=int(s["clear_energy"]),
                energy_regen=int(s["energy_regen"]),
                max_steps=int(s["max_steps"]),
                fail_tolerance=int(s["fail_tolerance"]),
                chunk_size=int(s["chunk_size"]),
                min_slack=int(s["min_slack"]),
                connect_retries=int(s["connect_retries"]),
                agent_threads=int(s["agent_threads"]),
                trace_path=str(s["trace_path"]),
                log_level=str(s["log_level"]),
                log_file=str(s["log_file"] or ""),
                layout=dict(s["layout"] or {}),
            )
        except (TypeError, ValueError) as e:
            raise InvalidConfig(f"Malformed setting value: {e}") from e

        validate_config(config)
        return config


def validate_config(config):
    """Raise InvalidConfig naming the first violated constraint"""
    if config.width < 10 or config.height < 10:
        raise InvalidConfig("width and height must be at least 10")
    positive = ("entities_per_team", "vision_radius", "goal_clusters", "goal_cluster_size",
                "dispensers_per_type", "task_size_min", "task_duration", "reward_base",
                "max_active_tasks", "clear_event_radius", "disable_duration", "max_energy",
                "clear_energy", "fail_tolerance", "chunk_size", "connect_retries", "agent_threads")
    for key in positive:
        if getattr(config, key) <= 0:
            raise InvalidConfig(f"{key} must be positive")
    non_negative = ("seed", "initial_tasks", "regen_obstacles", "clear_radius", "energy_regen",
                    "max_steps", "min_slack")
    for key in non_negative:
        if getattr(config, key) < 0:
            raise InvalidConfig(f"{key} must not be negative")
    for key in ("obstacle_density", "task_probability", "clear_event_rate"):
        if not 0.0 <= getattr(config, key) < 1.0:
            raise InvalidConfig(f"{key} must be in [0, 1)")
    if not config.teams or len(set(config.teams)) != len(config.teams):
        raise InvalidConfig("teams must be a non-empty list of distinct names")
    if config.task_size_max < config.task_size_min:
        raise InvalidConfig("task_size_max must be >= task_size_min")
    if not config.block_types:
        raise InvalidConfig("block_types must not be empty")
    if len(config.roles) != config.entities_per_team:
        raise InvalidConfig("roles must list one role per team slot")
    for role in config.roles:
        if role not in ("builder", "attacker"):
            raise InvalidConfig(f"Unknown role: {role}")
    if config.clear_energy > config.max_energy:
        raise InvalidConfig("clear_energy cannot exceed max_energy")
