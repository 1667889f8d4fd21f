import pytest

from ssdlab.engine import (
    EmptyMap,
    MapError,
    MissingSpawn,
    RaggedRows,
    UnknownChar,
    load_map,
)


def test_minimal_map_decodes_markers():
    grid = load_map("####\n#12#\n####")
    assert (grid.width, grid.height) == (4, 3)
    assert grid.player_spawns == ((1, 1), (2, 1))
    assert grid.apple_sites == ()
    assert grid.prey_spawns == ()


def test_unknown_char_reports_position():
    with pytest.raises(UnknownChar) as err:
        load_map("12\n#@")
    assert err.value.position == (1, 1)
    assert err.value.char == "@"


def test_apple_site_at_center_of_open_map():
    rows = ["." * 10 for _ in range(10)]
    rows[5] = "." * 5 + "A" + "." * 4
    rows[0] = "12" + "." * 8
    grid = load_map("\n".join(rows))
    assert grid.apple_sites == ((5, 5),)


def test_trailing_newline_optional():
    with_nl = load_map("####\n#12#\n####\n")
    without = load_map("####\n#12#\n####")
    assert with_nl == without


def test_ragged_rows_rejected():
    with pytest.raises(RaggedRows):
        load_map("####\n#12\n####")


def test_empty_document_rejected():
    with pytest.raises(EmptyMap):
        load_map("")
    with pytest.raises(EmptyMap):
        load_map("\n")


def test_missing_player_spawn():
    with pytest.raises(MissingSpawn) as err:
        load_map("####\n#1.#\n####")
    assert err.value.role == "player2"


def test_duplicate_player_spawn_rejected():
    with pytest.raises(MapError):
        load_map("#####\n#112#\n#####")


def test_spawns_are_floor_cells():
    grid = load_map("#####\n#1A2#\n##P##")
    for cell in (*grid.player_spawns, *grid.prey_spawns, *grid.apple_sites):
        assert grid.is_floor(*cell)


def test_walls_and_bounds():
    grid = load_map("####\n#12#\n####")
    assert not grid.is_floor(0, 0)       # wall
    assert not grid.is_floor(-1, 1)      # out of bounds
    assert not grid.is_floor(1, 3)
    assert grid.is_floor(1, 1)
