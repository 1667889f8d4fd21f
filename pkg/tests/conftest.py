import sys
from pathlib import Path

import pytest

# oracles.py lives next to the tests and is imported as a plain module
sys.path.insert(0, str(Path(__file__).parent))

from ssdlab.engine import derive_rng, load_map, make_world


def open_world(width=9, height=9, *, seed=0, prey=False, apples=()):
    """Bordered all-floor world with players at opposite corners."""
    rows = []
    for y in range(height):
        row = []
        for x in range(width):
            if x in (0, width - 1) or y in (0, height - 1):
                row.append("#")
            elif (x, y) == (1, 1):
                row.append("1")
            elif (x, y) == (width - 2, height - 2):
                row.append("2")
            elif prey and (x, y) == (width // 2, height // 2):
                row.append("P")
            elif (x, y) in apples:
                row.append("A")
            else:
                row.append(".")
        rows.append("".join(row))
    grid = load_map("\n".join(rows))
    teams = (0, 0) if prey else (0, 1)
    return make_world(grid, derive_rng(seed, "world"), player_teams=teams)


@pytest.fixture
def world():
    return open_world()
