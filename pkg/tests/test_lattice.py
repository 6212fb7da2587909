"""Basis layout, pattern parsing, and charge-sector bookkeeping."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlmfloquet import (
    Boundary,
    LatticeSpec,
    SectorError,
    all_charges,
    charge_at,
    enumerate_sector,
    parse_pattern,
    render_pattern,
    sector_of,
    sector_to_string,
    z2_of_sector,
)
from qlmfloquet.lattice import sector_from_string


def test_dimensions_half_spin():
    spec = LatticeSpec(4, 0.5, Boundary.PBC)
    assert spec.total_dim == 256
    assert spec.n_slots == 8
    assert spec.gauge_dim == 2
    assert spec.dims == (2, 2, 2, 2, 2, 2, 2, 2)


def test_dimensions_spin_one():
    spec = LatticeSpec(3, 1.0, Boundary.PBC)
    assert spec.total_dim == 216
    assert spec.gauge_dim == 3
    assert spec.dims == (2, 3, 2, 3, 2, 3)


def test_slot_interleaving():
    spec = LatticeSpec(5, 0.5, Boundary.PBC)
    assert [spec.matter_slot(j) for j in range(5)] == [0, 2, 4, 6, 8]
    assert [spec.link_slot(j) for j in range(5)] == [1, 3, 5, 7, 9]
    assert spec.link_slot(4) == 9  # wrap link shares the last slot


def test_digits_index_round_trip():
    spec = LatticeSpec(3, 1.0, Boundary.PBC)
    for index in range(spec.total_dim):
        assert spec.index_of(spec.digits(index)) == index


def test_little_endian_strides():
    spec = LatticeSpec(2, 0.5, Boundary.PBC)
    # slot 0 is the fastest digit
    assert spec.digits(1) == (1, 0, 0, 0)
    assert spec.digits(2) == (0, 1, 0, 0)


def test_link_tz_convention():
    spec = LatticeSpec(2, 1.0, Boundary.PBC)
    # gauge digit k carries tz = 2k - 2S
    tz = {spec.link_tz(spec.index_of((0, k, 0, 0)), 0) for k in range(3)}
    assert tz == {-2, 0, 2}
    half = LatticeSpec(2, 0.5, Boundary.PBC)
    assert half.link_tz(half.index_of((0, 1, 0, 0)), 0) == 1
    assert half.link_tz(0, 0) == -1


def test_parse_render_known_pattern():
    spec = LatticeSpec(8, 0.5, Boundary.PBC)
    index = parse_pattern(spec, "uduu" + "du" * 6)
    assert sector_of(spec, index) == (-3, 1, 1, 1, 1, 1, 1, 1)
    assert render_pattern(spec, index) == "uduu" + "du" * 6


def test_parse_spin_one_chars():
    spec = LatticeSpec(3, 1.0, Boundary.PBC)
    index = parse_pattern(spec, "d-u0d+")
    digits = spec.digits(index)
    assert digits == (0, 0, 1, 1, 0, 2)


def test_parse_rejects_bad_input():
    spec = LatticeSpec(3, 0.5, Boundary.PBC)
    with pytest.raises(SectorError):
        parse_pattern(spec, "dudu")  # wrong length
    with pytest.raises(SectorError):
        parse_pattern(spec, "dx" * 3)  # bad char
    with pytest.raises(SectorError):
        parse_pattern(spec, "d+" * 3)  # spin-1 char on a spin-1/2 link


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_pattern_round_trip_property(data):
    n_sites = data.draw(st.integers(2, 5))
    spin = data.draw(st.sampled_from([0.5, 1.0]))
    boundary = data.draw(st.sampled_from(list(Boundary)))
    spec = LatticeSpec(n_sites, spin, boundary)
    index = data.draw(st.integers(0, spec.total_dim - 1))
    assert parse_pattern(spec, render_pattern(spec, index)) == index


def test_charge_vacuum():
    spec = LatticeSpec(4, 0.5, Boundary.PBC)
    index = parse_pattern(spec, "du" * 4)
    assert all_charges(spec, index) == (1, 1, 1, 1)
    assert charge_at(spec, index, 2) == 1


def test_charge_defect_triples():
    # local triple (left, matter, right) fixes g = 2*(right-left) - (2m-1)
    spec = LatticeSpec(4, 0.5, Boundary.PBC)
    index = parse_pattern(spec, "uduu" + "du" * 2)
    sec = sector_of(spec, index)
    assert sec[0] == -3  # (1,1,0) triple
    assert sec[1] == 1  # (0,1,1) kink triple


def test_ring_charge_sum_telescopes():
    # on a ring the link contributions cancel pairwise
    for spin in (0.5, 1.0):
        for n_sites in (2, 3, 4):
            spec = LatticeSpec(n_sites, spin, Boundary.PBC)
            for index in range(spec.total_dim):
                total = sum(all_charges(spec, index))
                matter = sum(
                    2 * spec.digits(index)[spec.matter_slot(j)] - 1
                    for j in range(n_sites)
                )
                assert total == -matter


def test_sector_partition():
    spec = LatticeSpec(3, 0.5, Boundary.PBC)
    seen: dict[tuple, int] = {}
    for index in range(spec.total_dim):
        seen[sector_of(spec, index)] = seen.get(sector_of(spec, index), 0) + 1
    assert sum(seen.values()) == spec.total_dim
    for sector, count in seen.items():
        members = enumerate_sector(spec, sector)
        assert len(members) == count
        assert all(sector_of(spec, int(i)) == sector for i in members)


def test_enumerate_sector_empty_for_unreachable():
    spec = LatticeSpec(2, 0.5, Boundary.PBC)
    assert enumerate_sector(spec, (3, 3)).size == 0


def test_z2_of_sector_values():
    assert z2_of_sector((1, -3, 5, -1, 3)) == (1, 1, 1, -1, -1)


def test_z2_matches_mod_four_rule():
    for g in range(-5, 6, 2):
        (s,) = z2_of_sector((g,))
        assert s == (1 if g % 4 == 1 else -1)


def test_sector_string_round_trip():
    sector = (-3, 1, 1, 5)
    assert sector_from_string(sector_to_string(sector)) == sector


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from([-5, -3, -1, 1, 3, 5]), min_size=1, max_size=8))
def test_sector_string_round_trip_property(sector):
    text = sector_to_string(tuple(sector))
    assert sector_from_string(text) == tuple(sector)


def test_spin_one_charge_range():
    spec = LatticeSpec(2, 1.0, Boundary.PBC)
    charges = {charge_at(spec, index, j) for index in range(spec.total_dim) for j in range(2)}
    assert charges == {-5, -3, -1, 1, 3, 5}


def test_obc_wrap_link_is_spectator():
    # the wrap slot exists at OBC but never enters interior charges
    spec = LatticeSpec(4, 0.5, Boundary.OBC)
    base = parse_pattern(spec, "du" * 4)
    flipped = list(spec.digits(base))
    flipped[spec.link_slot(3)] = 0
    other = spec.index_of(flipped)
    for j in (1, 2):
        assert charge_at(spec, base, j) == charge_at(spec, other, j)


def test_invalid_spec_rejected():
    with pytest.raises(ValueError):
        LatticeSpec(0, 0.5, Boundary.PBC)
    with pytest.raises(ValueError):
        LatticeSpec(4, 0.3, Boundary.PBC)
