"""Geometry and basis bookkeeping for a 1D chain of matter sites and gauge links.

The chain interleaves spin-1/2 matter sites with spin-S link variables.
Storage is a little-endian mixed-radix integer: slot 0 is matter site 0,
slot 1 is the link between sites 0 and 1, slot 2 is matter site 1, and so
on around the ring.  All L links are stored even for open boundaries; an
open chain simply has no Hamiltonian terms on the wrap link, which then
acts as a spectator degree of freedom.

Digit conventions, fixed once and used everywhere:

* matter digit 0 means spin down (sigma^z = -1), digit 1 means up.
* link digit k means S^z eigenvalue m = k - S, so tau^z = 2*(k - S).

The local charge at site j is

    g_j = tau^z(j, j+1) - tau^z(j-1, j) - sigma^z_j

which takes odd integer values between -(4S + 1) and 4S + 1.  The
associated cyclic eigenvalue s_j = i * exp(-i pi g_j / 2) is +1 when
g_j = 1 (mod 4) and -1 when g_j = 3 (mod 4).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Boundary",
    "LatticeSpec",
    "SectorError",
    "parse_pattern",
    "render_pattern",
    "charge_at",
    "all_charges",
    "z2_eigenvalue_at",
    "sector_of",
    "z2_of_sector",
    "enumerate_sector",
    "sector_to_string",
    "sector_from_string",
]


class SectorError(ValueError):
    """Raised for malformed patterns, impossible sectors, or bad charge queries."""


class Boundary(enum.Enum):
    PBC = "pbc"
    OBC = "obc"


# Pattern characters for the two gauge representations with a fixed grammar.
# Matter sites always use u/d.  Spin-1/2 links reuse u/d, spin-1 links use
# +/0/-.  Higher link spins have no single-character grammar and must be
# built programmatically.
_MATTER_CHARS = "du"
_GAUGE_CHARS = {2: "du", 3: "-0+"}


@dataclass(frozen=True)
class LatticeSpec:
    """Immutable description of the chain: length, link spin, boundary.

    Parameters
    ----------
    n_sites : int
        Number of matter sites L (and of stored links).
    gauge_spin : float
        Link spin S; 2S must be a positive integer.
    boundary : Boundary
        Ring (PBC) or open chain (OBC).  Open chains still store the wrap
        link; it is just never acted on.
    max_dim : int
        Guard against accidentally huge Hilbert spaces.
    """

    n_sites: int
    gauge_spin: float = 0.5
    boundary: Boundary = Boundary.PBC
    max_dim: int = 1 << 24

    def __post_init__(self) -> None:
        if self.n_sites < 1:
            raise ValueError(f"need at least one site, got {self.n_sites}")
        twice = round(2 * self.gauge_spin)
        if twice < 1 or abs(2 * self.gauge_spin - twice) > 1e-12:
            raise ValueError(f"gauge_spin must be a half-integer >= 1/2, got {self.gauge_spin}")
        if not isinstance(self.boundary, Boundary):
            raise TypeError(f"boundary must be a Boundary, got {self.boundary!r}")
        if self.total_dim > self.max_dim:
            raise ValueError(
                f"Hilbert space dimension {self.total_dim} exceeds cap {self.max_dim}"
            )

    # -- layout -------------------------------------------------------------

    @property
    def twice_spin(self) -> int:
        return round(2 * self.gauge_spin)

    @property
    def gauge_dim(self) -> int:
        return self.twice_spin + 1

    @property
    def n_slots(self) -> int:
        return 2 * self.n_sites

    def matter_slot(self, j: int) -> int:
        return 2 * (j % self.n_sites)

    def link_slot(self, j: int) -> int:
        """Slot of the link joining sites j and j+1 (mod L)."""
        return 2 * (j % self.n_sites) + 1

    def slot_dim(self, slot: int) -> int:
        return 2 if slot % 2 == 0 else self.gauge_dim

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(self.slot_dim(s) for s in range(self.n_slots))

    @property
    def strides(self) -> tuple[int, ...]:
        out = []
        acc = 1
        for d in self.dims:
            out.append(acc)
            acc *= d
        return tuple(out)

    @property
    def total_dim(self) -> int:
        return (2 * self.gauge_dim) ** self.n_sites

    def bonds(self) -> range:
        """Indices j of active bonds (site j, link (j,j+1), site j+1)."""
        if self.boundary is Boundary.PBC:
            return range(self.n_sites)
        return range(self.n_sites - 1)

    # -- single-state digit access ------------------------------------------

    def digits(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.total_dim:
            raise SectorError(f"basis index {index} out of range for dim {self.total_dim}")
        out = []
        for d in self.dims:
            out.append(index % d)
            index //= d
        return tuple(out)

    def index_of(self, digits: Sequence[int]) -> int:
        if len(digits) != self.n_slots:
            raise SectorError(f"expected {self.n_slots} digits, got {len(digits)}")
        idx = 0
        for digit, dim, stride in zip(digits, self.dims, self.strides):
            if not 0 <= digit < dim:
                raise SectorError(f"digit {digit} out of range for local dim {dim}")
            idx += digit * stride
        return idx

    def matter_sz(self, index: int, j: int) -> int:
        """sigma^z of matter site j in basis state `index` (+1 or -1)."""
        digit = (index // self.strides[self.matter_slot(j)]) % 2
        return 2 * digit - 1

    def link_tz(self, index: int, j: int) -> int:
        """tau^z = 2 S^z of link (j, j+1); an integer of parity 2S."""
        slot = self.link_slot(j)
        digit = (index // self.strides[slot]) % self.gauge_dim
        return 2 * digit - self.twice_spin

    def digit_array(self, slot: int, indices: np.ndarray | None = None) -> np.ndarray:
        """Vectorized digit extraction for one slot.

        With `indices` None, acts on the whole space (0 .. total_dim-1).
        """
        if indices is None:
            indices = np.arange(self.total_dim, dtype=np.int64)
        return (indices // self.strides[slot]) % self.slot_dim(slot)


# -- patterns ---------------------------------------------------------------


def _gauge_chars(spec: LatticeSpec) -> str:
    try:
        return _GAUGE_CHARS[spec.gauge_dim]
    except KeyError:
        raise SectorError(
            f"no pattern grammar for link spin {spec.gauge_spin}; "
            "build the state from digits instead"
        ) from None


def parse_pattern(spec: LatticeSpec, text: str) -> int:
    """Convert a pattern string to a basis index.

    The string lists slots in storage order: matter 0, link (0,1),
    matter 1, link (1,2), ...  Matter characters are 'd'/'u'; link
    characters are 'd'/'u' for spin-1/2 and '-'/'0'/'+' for spin-1.
    Whitespace is ignored.
    """
    chars = [c for c in text if not c.isspace()]
    if len(chars) != spec.n_slots:
        raise SectorError(
            f"pattern has {len(chars)} characters, lattice needs {spec.n_slots}"
        )
    gauge = _gauge_chars(spec)
    digits = []
    for slot, c in enumerate(chars):
        alphabet = _MATTER_CHARS if slot % 2 == 0 else gauge
        pos = alphabet.find(c)
        if pos < 0:
            kind = "matter" if slot % 2 == 0 else "link"
            raise SectorError(f"character {c!r} not valid for a {kind} slot")
        digits.append(pos)
    return spec.index_of(digits)


def render_pattern(spec: LatticeSpec, index: int) -> str:
    """Inverse of parse_pattern."""
    gauge = _gauge_chars(spec)
    out = []
    for slot, digit in enumerate(spec.digits(index)):
        alphabet = _MATTER_CHARS if slot % 2 == 0 else gauge
        out.append(alphabet[digit])
    return "".join(out)


# -- charges and sectors ----------------------------------------------------


def charge_at(spec: LatticeSpec, index: int, j: int) -> int:
    """Local charge g_j = tau^z_right - tau^z_left - sigma^z_j (odd integer)."""
    j = j % spec.n_sites
    return (
        spec.link_tz(index, j)
        - spec.link_tz(index, (j - 1) % spec.n_sites)
        - spec.matter_sz(index, j)
    )


def all_charges(spec: LatticeSpec, index: int) -> tuple[int, ...]:
    return tuple(charge_at(spec, index, j) for j in range(spec.n_sites))


def z2_eigenvalue_at(spec: LatticeSpec, index: int, j: int) -> int:
    """Eigenvalue of the cyclic label i * exp(-i pi g_j / 2): +1 or -1."""
    return 1 if charge_at(spec, index, j) % 4 == 1 else -1


def sector_of(spec: LatticeSpec, index: int) -> tuple[int, ...]:
    """The full charge configuration {g_j} of a basis state."""
    return all_charges(spec, index)


def z2_of_sector(sector: Sequence[int]) -> tuple[int, ...]:
    for g in sector:
        if g % 2 == 0:
            raise SectorError(f"charges are odd integers, got {g}")
    return tuple(1 if g % 4 == 1 else -1 for g in sector)


def enumerate_sector(spec: LatticeSpec, sector: Sequence[int]) -> np.ndarray:
    """All basis indices with the given charge configuration, ascending.

    May legitimately be empty: not every odd-integer assignment is
    realizable (the ring constraint sum(g_j) = -sum(sigma^z_j) couples the
    charges to the matter content, and each g_j must be reachable with the
    available link spin).
    """
    sector = tuple(int(g) for g in sector)
    if len(sector) != spec.n_sites:
        raise SectorError(
            f"sector lists {len(sector)} charges, lattice has {spec.n_sites} sites"
        )
    bound = 2 * spec.twice_spin + 1
    for g in sector:
        if g % 2 == 0 or abs(g) > bound:
            raise SectorError(f"charge {g} impossible for link spin {spec.gauge_spin}")
    indices = np.arange(spec.total_dim, dtype=np.int64)
    keep = np.ones(spec.total_dim, dtype=bool)
    for j in range(spec.n_sites):
        right = spec.digit_array(spec.link_slot(j), indices)
        left = spec.digit_array(spec.link_slot((j - 1) % spec.n_sites), indices)
        matter = spec.digit_array(spec.matter_slot(j), indices)
        g = 2 * (right - left) - (2 * matter - 1)
        keep &= g == sector[j]
    return indices[keep]


def sector_to_string(sector: Sequence[int]) -> str:
    return ",".join(str(int(g)) for g in sector)


def sector_from_string(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise SectorError(f"cannot parse sector string {text!r}") from None
