# --- identification.py ---
"""Pairing of mutual teammate sightings into shared coordinate frames"""
import logging
from dataclasses import dataclass

from assembler.geometry import neg


@dataclass(frozen=True)
class SightingReport:
    reporter: str
    step: int
    offset: tuple
    # Reporter's own virtual position at the sighting step
    position: tuple = (0, 0)


@dataclass(frozen=True)
class TranslationVector:
    """Maps a point in agent B's frame into agent A's frame: q -> q + T"""
    dx: int
    dy: int

    def apply(self, cell):
        return (cell[0] + self.dx, cell[1] + self.dy)

    def inverse(self):
        return TranslationVector(-self.dx, -self.dy)

    def __add__(self, other):
        return TranslationVector(self.dx + other.dx, self.dy + other.dy)

    def as_tuple(self):
        return (self.dx, self.dy)


def pair_reports(reports, already_identified=None):
    """Match antisymmetric sightings; returns (pairs, aborted reporters).

    Reports are grouped by offset. An offset group pairs only when it and its
    negation each hold exactly one report; any other shape aborts both groups.
    """
    steps = {r.step for r in reports}
    assert len(steps) <= 1, f"sighting reports span several steps: {sorted(steps)}"

    groups = {}
    for report in sorted(reports, key=lambda r: (r.reporter, r.offset)):
        groups.setdefault(tuple(report.offset), []).append(report)

    pairs = []
    aborted = set()
    done = set()
    for offset in sorted(groups, key=lambda o: (o[1], o[0])):
        if offset in done:
            continue
        mirror = neg(offset)
        done.add(offset)
        done.add(mirror)
        side_a = groups[offset]
        side_b = groups.get(mirror, [])
        if not side_b:
            continue
        if len(side_a) != 1 or len(side_b) != 1:
            aborted.update(r.reporter for r in side_a + side_b)
            logging.debug(f"Ambiguous sightings at offset {offset}: "
                          f"{[r.reporter for r in side_a]} / {[r.reporter for r in side_b]}")
            continue
        a, b = sorted((side_a[0], side_b[0]), key=lambda r: r.reporter)
        if already_identified is not None and already_identified(a.reporter, b.reporter):
            continue
        pairs.append((a, b))
    return pairs, sorted(aborted)


def compute_translation(a_pos, a_offset, b_pos):
    """T(B->A) = aPos + aOffset - bPos"""
    return TranslationVector(a_pos[0] + a_offset[0] - b_pos[0], a_pos[1] + a_offset[1] - b_pos[1])


def on_identified(watcher, a, b, translation):
    """Record a permanent mutual identification and exchange full maps"""
    watcher.identified(a)[b] = translation
    watcher.identified(b)[a] = translation.inverse()
    map_a = watcher.map_model(a)
    map_b = watcher.map_model(b)
    cells_a = list(map_a.cells.values())
    cells_b = list(map_b.cells.values())
    gained_a = map_a.merge_remote(cells_b, translation.as_tuple())
    gained_b = map_b.merge_remote(cells_a, translation.inverse().as_tuple())
    logging.info(f"Identified {a} <-> {b} (T={translation.as_tuple()}); "
                 f"{a} gained {len(gained_a)} cells, {b} gained {len(gained_b)}")


def share_recent_cells(watcher, names, seen):
    """Push each agent's freshly seen cells to every identified peer"""
    for name in names:
        cells = [watcher.map_model(name).cells[c] for c in sorted(seen.get(name, ()), key=lambda c: (c[1], c[0]))]
        if not cells:
            continue
        for peer in sorted(watcher.identified(name)):
            # peer's table holds the vector from `name`'s frame into the peer's frame
            translation = watcher.identified(peer)[name]
            watcher.map_model(peer).merge_remote(cells, translation.as_tuple())
