# --- geometry.py ---
"""Grid directions and rotation algebra.

North is -y and South is +y, so a task requirement at (0, 1) sits directly
south of the submitting agent.
"""

DIRECTIONS = {
    "n": (0, -1),
    "s": (0, 1),
    "e": (1, 0),
    "w": (-1, 0),
}

# Fixed scan order used wherever a deterministic neighbour walk is needed
DIRECTION_ORDER = ("n", "e", "s", "w")

ROTATIONS = ("cw", "ccw")


def add(a, b):
    return (a[0] + b[0], a[1] + b[1])


def sub(a, b):
    return (a[0] - b[0], a[1] - b[1])


def neg(a):
    return (-a[0], -a[1])


def manhattan(a, b=(0, 0)):
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def step(cell, direction):
    """Cell reached from `cell` by one move in `direction`"""
    return add(cell, DIRECTIONS[direction])


def direction_of(offset):
    """Direction name for a unit offset, or None"""
    for name, delta in DIRECTIONS.items():
        if delta == tuple(offset):
            return name
    return None


def rotate(offset, rotation):
    """Rotate an offset about the origin: cw maps (x, y) to (-y, x)"""
    x, y = offset
    if rotation == "cw":
        return (-y, x)
    if rotation == "ccw":
        return (y, -x)
    raise ValueError(f"Unknown rotation: {rotation}")


def neighbours(cell):
    """4-connected neighbours in DIRECTION_ORDER"""
    return [step(cell, d) for d in DIRECTION_ORDER]


def diamond(radius):
    """All offsets with Manhattan length <= radius, sorted by (y, x)"""
    cells = []
    for y in range(-radius, radius + 1):
        span = radius - abs(y)
        for x in range(-span, span + 1):
            cells.append((x, y))
    return cells


def yx_key(cell):
    """Sort key used for every (y, x) lexicographic tie rule"""
    return (cell[1], cell[0])
