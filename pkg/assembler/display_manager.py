# --- display_manager.py ---
from PIL import Image, ImageDraw, ImageFont
import os
import logging

from assembler.errors import MalformedTrace, StepOutOfRange
from assembler.map_model import MapPercept
from assembler.world_engine import ActionRequest, WorldEngine

UNKNOWN_GLYPH = "?"
SELF_GLYPH = "@"

LEGEND = (
    ("@", "agent (viewed)"),
    ("A-Z", "agent by team"),
    ("#", "obstacle"),
    ("g", "goal"),
    ("D", "dispenser"),
    ("b", "block"),
    ("B", "attached block"),
    (".", "empty"),
    ("?", "unknown"),
)


def _team_glyph(team):
    return team[0].upper() if team else "E"


class DisplayManager:
    """Text and image frames of a replay trace; pure over the trace"""

    def __init__(self, trace, cell_size=12):
        self.trace = trace
        self.cell_size = cell_size

        # Color scheme
        self.colors = {
            'background': 'black',
            'text': 'white',
            'header': 'orange',
            'empty': (40, 40, 40),
            'obstacle': (110, 110, 110),
            'goal': (200, 60, 60),
            'dispenser': (230, 200, 40),
            'block': (60, 140, 230),
            'attached': (30, 80, 200),
            'unknown': (0, 0, 0),
            'self': (255, 255, 255),
            'teams': [(60, 200, 90), (220, 120, 40), (170, 80, 220), (40, 200, 200)],
        }

    def _record(self, step):
        if not isinstance(step, int):
            raise StepOutOfRange(f"Step must be an integer, got {step!r}")
        return self.trace.record_at(step)

    def _world_at(self, step):
        """Ground truth at the start of `step`, rebuilt by replaying recorded actions"""
        engine = WorldEngine(self.trace.config())
        for record in self.trace.records[:step]:
            try:
                actions = {name: ActionRequest.from_dict(a) for name, a in record["actions"].items()}
            except (KeyError, TypeError) as e:
                raise MalformedTrace(f"Step {record['step']} holds an unreadable action: {e}") from e
            engine.advance(actions)
        return engine.world

    def global_grid(self, step):
        """Rows of glyphs for the whole world at `step`"""
        self._record(step)
        world = self._world_at(step)
        rows = []
        for y in range(world.height):
            row = []
            for x in range(world.width):
                cell = (x, y)
                entity = world.entity_at(cell)
                block = world.blocks.get(cell)
                if entity is not None:
                    row.append(_team_glyph(entity.team))
                elif block is not None:
                    row.append("B" if block.attached_to is not None else "b")
                elif cell in world.dispensers:
                    row.append("D")
                else:
                    row.append({"empty": ".", "obstacle": "#", "goal": "g"}[world.terrain_at(cell).value])
            rows.append("".join(row))
        return rows

    def agent_cells(self, step, agent):
        """The agent's map model at `step`, rebuilt from the recorded map deltas"""
        self._record(step)
        if agent not in self.trace.agents:
            raise MalformedTrace(f"Agent {agent} is not part of the trace")
        cells = {}
        for record in self.trace.records[:step + 1]:
            for data in record["agents"][agent]["map_delta"]:
                percept = MapPercept.from_list(data)
                cells[percept.pos] = percept
        return cells

    def agent_grid(self, step, agent):
        """Rows of glyphs for one agent's view and the frame's top-left cell"""
        cells = self.agent_cells(step, agent)
        position = tuple(self.trace.records[step]["agents"][agent]["virtual_pos"])
        xs = [c[0] for c in cells] + [position[0]]
        ys = [c[1] for c in cells] + [position[1]]
        left, top = min(xs), min(ys)
        attached = {(position[0] + a[0], position[1] + a[1])
                    for a in self.trace.records[step]["agents"][agent]["attachments"]}
        rows = []
        for y in range(top, max(ys) + 1):
            row = []
            for x in range(left, max(xs) + 1):
                cell = (x, y)
                percept = cells.get(cell)
                if cell == position:
                    row.append(SELF_GLYPH)
                elif percept is None:
                    row.append(UNKNOWN_GLYPH)
                elif percept.has_thing("entity"):
                    team = next(d for k, d in percept.things if k == "entity")
                    row.append(_team_glyph(team))
                elif percept.has_thing("block"):
                    row.append("B" if cell in attached else "b")
                elif percept.has_thing("dispenser"):
                    row.append("D")
                else:
                    row.append({"empty": ".", "obstacle": "#", "goal": "g"}.get(percept.terrain, UNKNOWN_GLYPH))
            rows.append("".join(row))
        return rows, (left, top)

    def _banner(self, step, agent):
        record = self.trace.records[step]
        scores = "  ".join(f"{team}: {score}" for team, score in sorted(record["scores"].items()))
        lines = [f"Step {step}  |  Scores  {scores}"]
        if agent is None:
            pairs = sorted({tuple(sorted((name, peer)))
                            for name, data in record["agents"].items() for peer in data["identified"]})
            identified = ", ".join(f"{a}-{b}" for a, b in pairs) or "none"
            lines.append(f"Identified pairs: {identified}")
        else:
            data = record["agents"][agent]
            percepts = data["percepts"]
            lines.append(f"Agent {agent}  pos {tuple(data['virtual_pos'])}  energy {percepts['energy']}  "
                         f"phase {data['phase']}{'  DISABLED' if percepts['disabled'] else ''}")
            identified = ", ".join(f"{peer} (T={tuple(t)})" for peer, t in sorted(data["identified"].items()))
            lines.append(f"Identified: {identified or 'none'}")
        return lines

    def render(self, step, agent=None):
        """Text frame: banner, grid and legend"""
        if agent is None:
            rows = self.global_grid(step)
        else:
            rows, _ = self.agent_grid(step, agent)
        legend = "Legend: " + "  ".join(f"{glyph} {meaning}" for glyph, meaning in LEGEND)
        return "\n".join(self._banner(step, agent) + rows + [legend])

    def _glyph_color(self, glyph):
        named = {
            ".": 'empty', "#": 'obstacle', "g": 'goal', "D": 'dispenser',
            "b": 'block', "B": 'attached', UNKNOWN_GLYPH: 'unknown', SELF_GLYPH: 'self',
        }
        if glyph in named:
            return self.colors[named[glyph]]
        teams = list(self.trace.header["config"]["teams"])
        glyphs = [_team_glyph(t) for t in teams]
        index = glyphs.index(glyph) if glyph in glyphs else 0
        return self.colors['teams'][index % len(self.colors['teams'])]

    def to_image(self, step, agent=None):
        if agent is None:
            rows = self.global_grid(step)
        else:
            rows, _ = self.agent_grid(step, agent)
        banner = self._banner(step, agent)
        font = self._load_font(12)
        line_height = 14
        size = self.cell_size
        width = max(len(rows[0]) * size if rows else 0, 320)
        height = line_height * len(banner) + 4 + len(rows) * size
        img = Image.new('RGB', (width, height), color=self.colors['background'])
        draw = ImageDraw.Draw(img)
        for i, line in enumerate(banner):
            draw.text((2, i * line_height), line, font=font,
                      fill=self.colors['header'] if i == 0 else self.colors['text'])
        top = line_height * len(banner) + 4
        for y, row in enumerate(rows):
            for x, glyph in enumerate(row):
                x0, y0 = x * size, top + y * size
                draw.rectangle([x0, y0, x0 + size - 2, y0 + size - 2], fill=self._glyph_color(glyph))
        return img

    def save_png(self, step, path, agent=None):
        img = self.to_image(step, agent)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        img.save(path, format='PNG')
        logging.info(f"Saved frame for step {step} to {path}")
        return path

    def _load_font(self, size=12):
        """Load font with fallbacks"""
        font_paths = [
            "/usr/share/fonts/truetype/dejavu/DejaVuSansMono.ttf",
            "/usr/share/fonts/truetype/liberation/LiberationMono-Regular.ttf",
        ]
        for font_path in font_paths:
            try:
                if os.path.exists(font_path):
                    return ImageFont.truetype(font_path, size)
            except Exception as e:
                logging.debug(f"Could not load font {font_path}: {e}")
        return ImageFont.load_default()


def render(trace, step, agent=None):
    return DisplayManager(trace).render(step, agent)
