"""State propagation and measurement on the matter/link chain.

The matter occupation number (count of up matter spins) commutes with
every model term and with every drive pulse, so dynamics never leaves the
block of fixed occupation.  A StateSpace is either the whole Hilbert
space or one such block; operators are compiled to sparse matrices over
the member states and refuse to build if any matrix element would leave
the space.

Propagation picks its method by dimension: below `dense_cap` the compiled
operator is diagonalized once and reused, above it a scaled Taylor
expansion of the exponential is applied step by step.  Stroboscopic
driving reuses one propagation plan per distinct frame, so long runs pay
the setup cost only once.

All measured quantities are diagonal in the storage basis: local charges,
their cyclic labels, and the defect/kink densities derived from them.  On
an open chain the charge is only defined where both neighboring links are
active; undefined sites report NaN and drop out of violation averages.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .lattice import (
    Boundary,
    LatticeSpec,
    SectorError,
    parse_pattern,
    render_pattern,
    sector_of,
    z2_of_sector,
)
from .magnus import DriveProtocol, effective_orders
from .operators import ModelParams, OperatorSum, PulseSpec, build_model

__all__ = [
    "EngineError",
    "StateSpace",
    "StateVector",
    "CompiledOperator",
    "compile_operator",
    "apply_operator",
    "apply_pulse",
    "expectation_value",
    "evolve",
    "FloquetStepper",
    "protocol_quench",
    "run_floquet",
    "run_effective",
    "replay_lab_schedule",
    "measure_site",
    "measure_columns",
    "violation_average",
    "defined_charge_sites",
    "TimeSeries",
    "uniform_vacuum_pattern",
    "staggered_vacuum_pattern",
]

log = logging.getLogger(__name__)

_NORM_TOL = 1e-9
_DRIFT_TOL = 1e-8


class EngineError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# state spaces


class StateSpace:
    """The full Hilbert space or one matter-occupation block of it.

    Stores the ascending global basis indices of its members plus cached
    per-slot digit arrays, which every compiled operator, pulse, and
    measurement shares.
    """

    def __init__(self, spec: LatticeSpec, indices: np.ndarray | None, label: str):
        self.spec = spec
        self.indices = indices
        self.label = label
        self.dim = spec.total_dim if indices is None else int(indices.size)
        self._digits: dict[int, np.ndarray] = {}
        self._site_diag: dict[str, np.ndarray] | None = None

    @classmethod
    def full(cls, spec: LatticeSpec) -> "StateSpace":
        return cls(spec, None, "full")

    @classmethod
    def matter_block(cls, spec: LatticeSpec, n_up: int) -> "StateSpace":
        if not 0 <= n_up <= spec.n_sites:
            raise EngineError(f"occupation {n_up} impossible for {spec.n_sites} sites")
        chunk = 1 << 22
        kept = []
        for start in range(0, spec.total_dim, chunk):
            block = np.arange(start, min(start + chunk, spec.total_dim), dtype=np.int64)
            total = np.zeros(block.shape, dtype=np.int64)
            for j in range(spec.n_sites):
                total += spec.digit_array(spec.matter_slot(j), block)
            kept.append(block[total == n_up])
        indices = np.concatenate(kept)
        if indices.size == 0:
            raise EngineError(f"empty block at occupation {n_up}")
        return cls(spec, indices, f"matter={n_up}")

    @classmethod
    def enclosing(cls, spec: LatticeSpec, index: int) -> "StateSpace":
        """The matter block containing one basis state."""
        n_up = sum(
            (index // spec.strides[spec.matter_slot(j)]) % 2 for j in range(spec.n_sites)
        )
        return cls.matter_block(spec, n_up)

    @property
    def member_indices(self) -> np.ndarray:
        if self.indices is None:
            self.indices = np.arange(self.spec.total_dim, dtype=np.int64)
        return self.indices

    def digit_array(self, slot: int) -> np.ndarray:
        if slot not in self._digits:
            self._digits[slot] = self.spec.digit_array(slot, self.member_indices)
        return self._digits[slot]

    def positions_of(self, indices: np.ndarray, what: str = "state") -> np.ndarray:
        """Member positions of global basis indices; error if any is outside."""
        members = self.member_indices
        pos = np.searchsorted(members, indices)
        pos_c = np.minimum(pos, self.dim - 1)
        bad = members[pos_c] != indices
        if np.any(bad):
            raise EngineError(
                f"{what} leaves {self.label} (first escapee: basis index "
                f"{int(np.asarray(indices)[bad][0])})"
            )
        return pos_c

    def __repr__(self) -> str:
        return f"<StateSpace {self.label} dim={self.dim} L={self.spec.n_sites}>"


@dataclass
class StateVector:
    space: StateSpace
    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape != (self.space.dim,):
            raise EngineError(
                f"amplitude vector has shape {self.data.shape}, space dim {self.space.dim}"
            )

    @classmethod
    def from_index(cls, space: StateSpace, index: int) -> "StateVector":
        pos = space.positions_of(np.array([index], dtype=np.int64))
        data = np.zeros(space.dim, dtype=complex)
        data[pos[0]] = 1.0
        return cls(space, data)

    @classmethod
    def from_pattern(cls, space: StateSpace, text: str) -> "StateVector":
        return cls.from_index(space, parse_pattern(space.spec, text))

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def check_norm(self, where: str) -> None:
        if abs(self.norm() - 1.0) > _NORM_TOL:
            raise EngineError(f"{where}: state norm drifted to {self.norm():.12f}")

    def overlap(self, other: "StateVector") -> complex:
        if other.space is not self.space:
            raise EngineError("overlap needs states on the same space")
        return complex(np.vdot(self.data, other.data))


def _uniform_link_digit(spec: LatticeSpec) -> int:
    """A single link level used for every link; any uniform choice carries no flux."""
    return spec.gauge_dim // 2


def uniform_vacuum_pattern(spec: LatticeSpec) -> str:
    """All matter down under uniform links: charge +1 at every defined site."""
    link = _uniform_link_digit(spec)
    digits = [0 if slot % 2 == 0 else link for slot in range(spec.n_slots)]
    return render_pattern(spec, spec.index_of(digits))


def staggered_vacuum_pattern(spec: LatticeSpec) -> str:
    """Alternating matter under uniform links: charges +1, -1, +1, -1, ..."""
    if spec.n_sites % 2:
        raise EngineError("the staggered state needs an even number of sites")
    link = _uniform_link_digit(spec)
    digits = [(slot // 2) % 2 if slot % 2 == 0 else link for slot in range(spec.n_slots)]
    return render_pattern(spec, spec.index_of(digits))


# ---------------------------------------------------------------------------
# compiled operators


class CompiledOperator:
    def __init__(self, space: StateSpace, matrix: scipy.sparse.csr_matrix):
        self.space = space
        self.matrix = matrix
        self._eig: tuple[np.ndarray, np.ndarray] | None = None
        self._onenorm: float | None = None

    @property
    def onenorm(self) -> float:
        if self._onenorm is None:
            self._onenorm = float(np.abs(self.matrix).sum(axis=0).max())
        return self._onenorm

    def hermiticity_defect(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(np.abs(diff).max()) if diff.nnz else 0.0

    def eigensystem(self, dense_cap: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        if self._eig is None:
            if self.space.dim > dense_cap:
                raise EngineError(
                    f"dense diagonalization refused: dim {self.space.dim} > {dense_cap}"
                )
            evals, evecs = scipy.linalg.eigh(self.matrix.toarray())
            self._eig = (evals, evecs)
        return self._eig

    def __matmul__(self, vec: np.ndarray) -> np.ndarray:
        return self.matrix @ vec


def compile_operator(space: StateSpace, op: OperatorSum) -> CompiledOperator:
    """Sparse matrix of an operator over the member states.

    Individual stored terms may connect members to outside states (a
    single Pauli string does not conserve the matter occupation even when
    the summed operator does), so matrix elements leaving the space are
    collected and required to cancel.  A genuine block violation raises.
    """
    if op.spec != space.spec:
        raise EngineError("operator and space live on different lattices")
    members = space.member_indices
    srcs, tgts, amps = [], [], []
    for key, coeff in op.terms.items():
        src, tgt, amp = op.term_action(members, key, coeff)
        if src.size:
            srcs.append(src)
            tgts.append(tgt)
            amps.append(amp)
    if not srcs:
        return CompiledOperator(
            space, scipy.sparse.csr_matrix((space.dim, space.dim), dtype=complex)
        )
    src = np.concatenate(srcs)
    tgt = np.concatenate(tgts)
    amp = np.concatenate(amps)
    if space.indices is None:
        rows, cols = tgt, src
    else:
        pos = np.searchsorted(members, tgt)
        pos_c = np.minimum(pos, space.dim - 1)
        inside = members[pos_c] == tgt
        if not inside.all():
            pair = src[~inside] * np.int64(space.spec.total_dim) + tgt[~inside]
            uniq, inv = np.unique(pair, return_inverse=True)
            sums = np.zeros(uniq.size, dtype=complex)
            np.add.at(sums, inv, amp[~inside])
            worst = float(np.abs(sums).max())
            if worst > 1e-10 * max(1.0, op.coeff_norm1):
                bad = int(uniq[np.argmax(np.abs(sums))])
                raise EngineError(
                    f"operator leaves {space.label}: element "
                    f"{bad // space.spec.total_dim} -> {bad % space.spec.total_dim} "
                    f"survives with weight {worst:.3e}"
                )
        rows = pos_c[inside]
        cols = np.searchsorted(members, src[inside])
        amp = amp[inside]
    matrix = scipy.sparse.coo_matrix(
        (amp, (rows, cols)), shape=(space.dim, space.dim)
    ).tocsr()
    matrix.sum_duplicates()
    return CompiledOperator(space, matrix)


def apply_operator(state: StateVector, op: CompiledOperator) -> StateVector:
    if op.space is not state.space:
        raise EngineError("operator compiled on a different space")
    return StateVector(state.space, op.matrix @ state.data)


def expectation_value(state: StateVector, op: CompiledOperator) -> complex:
    return complex(np.vdot(state.data, op.matrix @ state.data))


def _column_structure(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dim = u.shape[0]
    tgt = np.zeros(dim, dtype=np.int64)
    amp = np.zeros(dim, dtype=complex)
    for c in range(dim):
        rows = np.flatnonzero(np.abs(u[:, c]) > 1e-12)
        if rows.size != 1:
            raise EngineError("pulse unitary is not a phase permutation")
        tgt[c] = rows[0]
        amp[c] = u[rows[0], c]
    return tgt, amp


def apply_pulse(state: StateVector, pulse: PulseSpec) -> StateVector:
    """Instantaneous global product pulse, applied as a phase permutation."""
    space = state.space
    spec = space.spec
    slots = pulse.slots(spec)
    if not slots:
        return StateVector(space, state.data.copy())
    u = pulse.local_unitary(spec.slot_dim(slots[0]))
    tgt, amp = _column_structure(u)
    phase = np.ones(space.dim, dtype=complex)
    shift = np.zeros(space.dim, dtype=np.int64)
    for slot in slots:
        digit = space.digit_array(slot)
        phase = phase * amp[digit]
        shift = shift + (tgt[digit] - digit) * spec.strides[slot]
    pos = space.positions_of(space.member_indices + shift, what="pulse")
    out = np.zeros_like(state.data)
    out[pos] = phase * state.data
    result = StateVector(space, out)
    result.check_norm("apply_pulse")
    return result


# ---------------------------------------------------------------------------
# propagation


def _taylor_apply(step_matrix, n_steps: int, vec: np.ndarray, tol: float) -> np.ndarray:
    for _ in range(n_steps):
        term = vec
        acc = vec.copy()
        for k in range(1, 60):
            term = step_matrix @ term / k
            acc = acc + term
            if np.abs(term).max() <= tol * max(np.abs(acc).max(), 1e-300):
                break
        else:
            raise EngineError("propagator series failed to converge; shrink the step")
        vec = acc
    return vec


def evolve(
    state: StateVector,
    op: CompiledOperator,
    duration: float,
    dense_cap: int = 4096,
    tol: float = 1e-13,
) -> StateVector:
    """exp(-i H duration) applied to the state.

    Dense spectral propagation below `dense_cap`, scaled Taylor expansion
    above it.  The generator must be Hermitian.
    """
    if op.space is not state.space:
        raise EngineError("operator compiled on a different space")
    defect = op.hermiticity_defect()
    if defect > 1e-9:
        raise EngineError(f"refusing to exponentiate a non-Hermitian generator ({defect:.2e})")
    if state.space.dim <= dense_cap:
        evals, evecs = op.eigensystem(dense_cap)
        data = evecs @ (np.exp(-1j * evals * duration) * (evecs.conj().T @ state.data))
    else:
        scaled = (-1j * duration) * op.matrix
        n_steps = max(1, int(np.ceil(np.abs(scaled).sum(axis=0).max())))
        data = _taylor_apply(scaled * (1.0 / n_steps), n_steps, state.data, tol)
    result = StateVector(state.space, data)
    result.check_norm("evolve")
    return result


class FloquetStepper:
    """One-period propagator for a drive, built once and applied many times.

    Each distinct frame Hamiltonian is compiled a single time; below
    `dense_cap` it is diagonalized and the segment becomes two dense
    rotations and a phase, above it the segment is a preplanned scaled
    Taylor exponential.
    """

    def __init__(
        self,
        space: StateSpace,
        protocol: DriveProtocol,
        dense_cap: int = 4096,
        tol: float = 1e-13,
        theta: float = 1.0,
    ):
        if protocol.spec != space.spec:
            raise EngineError("protocol and space live on different lattices")
        self.space = space
        self.protocol = protocol
        self.tol = tol
        compiled: dict[int, CompiledOperator] = {}
        plans = []
        for frame, duration in protocol.segments:
            co = compiled.get(id(frame))
            if co is None:
                co = compile_operator(space, frame)
                defect = co.hermiticity_defect()
                if defect > 1e-9:
                    raise EngineError(f"non-Hermitian frame in {protocol.label} ({defect:.2e})")
                compiled[id(frame)] = co
            if space.dim <= dense_cap:
                evals, evecs = co.eigensystem(dense_cap)
                plans.append(("dense", evecs, np.exp(-1j * evals * duration)))
            else:
                scaled = (-1j * duration) * co.matrix
                n_steps = max(1, int(np.ceil(co.onenorm * duration / theta)))
                plans.append(("taylor", scaled * (1.0 / n_steps), n_steps))
        self.plans = plans
        self.matvecs_per_period = sum(
            0 if plan[0] == "dense" else plan[2] for plan in self.plans
        )
        self._spectral: tuple[np.ndarray, np.ndarray] | None = None

    def step_raw(self, data: np.ndarray) -> np.ndarray:
        for plan in self.plans:
            if plan[0] == "dense":
                _, evecs, phases = plan
                data = evecs @ (phases * (evecs.conj().T @ data))
            else:
                _, matrix, n_steps = plan
                data = _taylor_apply(matrix, n_steps, data, self.tol)
        nrm = np.linalg.norm(data)
        if abs(nrm - 1.0) > _DRIFT_TOL:
            raise EngineError(f"one period drifted the norm to {nrm:.12f}")
        return data / nrm

    def step(self, state: StateVector) -> StateVector:
        return StateVector(self.space, self.step_raw(state.data))

    def is_dense(self) -> bool:
        return all(plan[0] == "dense" for plan in self.plans)

    def period_unitary(self) -> np.ndarray:
        """The full one-period unitary; only for dense plans."""
        if not self.is_dense():
            raise EngineError("one-period matrix only available below the dense cap")
        u = np.eye(self.space.dim, dtype=complex)
        for _, evecs, phases in self.plans:
            u = evecs @ (phases[:, None] * (evecs.conj().T @ u))
        return u

    def spectral_map(self) -> tuple[np.ndarray, np.ndarray]:
        """Unitary eigendecomposition of the one-period map.

        Returns (phases, modes) with modes orthonormal, so the state after
        any number of periods n is modes @ (phases**n * (modes+ @ psi)).
        Lets stroboscopic sampling jump to arbitrary periods at fixed cost.
        """
        if self._spectral is None:
            u = self.period_unitary()
            t, z = scipy.linalg.schur(u, output="complex")
            off = np.abs(t - np.diag(np.diagonal(t))).max()
            if off > 1e-8:
                raise EngineError(
                    f"one-period map is not normal to tolerance (off-diagonal {off:.2e})"
                )
            lam = np.diagonal(t).copy()
            lam = lam / np.abs(lam)
            self._spectral = (lam, z)
        return self._spectral


def protocol_quench(spec: LatticeSpec, params: ModelParams, dt: float = 0.25) -> DriveProtocol:
    """Undriven evolution packaged as a single-segment protocol.

    The 'period' is just the sampling step dt, so the stroboscopic runners
    apply unchanged.
    """
    if dt <= 0:
        raise EngineError("sampling step must be positive")
    model = build_model(spec, params)
    h = model.total(params)
    return DriveProtocol(
        "quench", spec, params, dt, ((h, dt),), h, (("evolve", dt),), dt
    )


# ---------------------------------------------------------------------------
# diagonal observables


def defined_charge_sites(spec: LatticeSpec) -> range:
    """Sites whose local charge uses only active links."""
    if spec.boundary is Boundary.PBC:
        return range(spec.n_sites)
    return range(1, spec.n_sites - 1)


def _site_diagonals(space: StateSpace) -> dict[str, np.ndarray]:
    """Per-site diagonal observable values for every member state.

    Rows: charge g_j, cyclic label s_j, defect density (1 - g_j)/4, kink
    density (occupation restricted to charge +1).  Sites without a defined
    charge hold NaN.
    """
    if space._site_diag is not None:
        return space._site_diag
    spec = space.spec
    n = spec.n_sites
    g = np.full((n, space.dim), np.nan)
    s = np.full((n, space.dim), np.nan)
    nd = np.full((n, space.dim), np.nan)
    nk = np.full((n, space.dim), np.nan)
    for j in defined_charge_sites(spec):
        right = space.digit_array(spec.link_slot(j))
        left = space.digit_array(spec.link_slot((j - 1) % n))
        matter = space.digit_array(spec.matter_slot(j))
        gj = 2.0 * (right - left) - (2.0 * matter - 1.0)
        g[j] = gj
        s[j] = np.where(np.mod(gj, 4) == 1, 1.0, -1.0)
        nd[j] = (1.0 - gj) / 4.0
        nk[j] = np.where(gj == 1, matter.astype(float), 0.0)
    space._site_diag = {"G": g, "S": s, "nd": nd, "nk": nk}
    return space._site_diag


_OBSERVABLES = ("G", "S", "nd", "nk")


def measure_site(state: StateVector, kind: str, j: int) -> float:
    """Expectation of one diagonal site observable: G, S, nd, or nk."""
    if kind not in _OBSERVABLES:
        raise EngineError(f"unknown observable {kind!r}; have {_OBSERVABLES}")
    diag = _site_diagonals(state.space)[kind][j % state.space.spec.n_sites]
    if np.isnan(diag).all():
        raise EngineError(f"observable {kind} undefined at site {j} on this boundary")
    return float(diag @ np.abs(state.data) ** 2)


def measure_columns(space: StateSpace, data: np.ndarray, targets: Sequence[int]) -> dict[str, float]:
    """One full measurement row: every site observable plus both violations."""
    diag = _site_diagonals(space)
    weight = np.abs(data) ** 2
    spec = space.spec
    if len(targets) != spec.n_sites:
        raise EngineError(f"{len(targets)} charge targets for {spec.n_sites} sites")
    row: dict[str, float] = {}
    values = {kind: diag[kind] @ weight for kind in _OBSERVABLES}
    for kind in _OBSERVABLES:
        for j in range(spec.n_sites):
            row[f"{kind}_{j}"] = float(values[kind][j])
    s_targets = z2_of_sector(targets)
    defined = list(defined_charge_sites(spec))
    row["violG"] = float(
        np.mean([abs(values["G"][j] - targets[j]) for j in defined])
    )
    row["violS"] = float(
        np.mean([abs(values["S"][j] - s_targets[j]) for j in defined])
    )
    return row


def violation_average(state: StateVector, targets: Sequence[int]) -> tuple[float, float]:
    """Mean deviations of charges and cyclic labels from a target sector."""
    row = measure_columns(state.space, state.data, targets)
    return row["violG"], row["violS"]


def _infer_targets(state: StateVector) -> tuple[int, ...]:
    hot = np.flatnonzero(np.abs(state.data) > 1e-12)
    if hot.size != 1:
        raise EngineError(
            "charge targets can only be inferred from a basis state; pass targets="
        )
    index = int(state.space.member_indices[hot[0]])
    return sector_of(state.space.spec, index)


# ---------------------------------------------------------------------------
# time series


@dataclass
class TimeSeries:
    steps: np.ndarray
    times: np.ndarray
    columns: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.steps = np.asarray(self.steps, dtype=np.int64)
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.steps.shape != self.times.shape:
            raise EngineError("steps and times must be matching 1D arrays")
        if np.any(np.diff(self.times) <= 0):
            raise EngineError("sample times must increase strictly")
        for name, col in self.columns.items():
            arr = np.asarray(col, dtype=float)
            if arr.shape != self.times.shape:
                raise EngineError(f"column {name!r} length mismatch")
            self.columns[name] = arr

    def __len__(self) -> int:
        return int(self.times.size)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise EngineError(f"no column {name!r}; have {sorted(self.columns)}") from None

    def to_csv(self, path) -> None:
        names = list(self.columns)
        with open(path, "w") as fh:
            fh.write("step,t," + ",".join(names) + "\n")
            for i in range(len(self)):
                cells = [str(int(self.steps[i])), f"{self.times[i]:.12g}"]
                cells += [f"{self.columns[n][i]:.12g}" for n in names]
                fh.write(",".join(cells) + "\n")
        if self.metadata:
            with open(str(path) + ".meta.json", "w") as fh:
                json.dump(self.metadata, fh, indent=2, sort_keys=True, default=str)
                fh.write("\n")

    @classmethod
    def from_csv(cls, path) -> "TimeSeries":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[:2] != ["step", "t"]:
                raise EngineError(f"{path}: not a time-series file")
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
        if body.shape[1] != len(header):
            raise EngineError(f"{path}: ragged rows")
        columns = {name: body[:, k] for k, name in enumerate(header[2:], start=2)}
        return cls(body[:, 0].astype(np.int64), body[:, 1], columns)


def _sample_steps(n_periods: int, stride: int | None) -> int:
    if stride is None:
        stride = max(1, n_periods // 2000)
    if stride < 1:
        raise EngineError("stride must be at least 1")
    return stride


def run_floquet(
    protocol: DriveProtocol,
    initial: StateVector,
    n_periods: int,
    stride: int | None = None,
    targets: Sequence[int] | None = None,
    dense_cap: int = 4096,
    stop_when: Callable[[dict[str, float]], bool] | None = None,
    metadata: Mapping | None = None,
) -> TimeSeries:
    """Stroboscopic drive: measure every `stride` periods at t = n T.

    `stop_when` sees each measured row and may end the run early (the
    triggering row is kept); use it to stop at a decay threshold instead
    of a fixed horizon.
    """
    space = initial.space
    initial.check_norm("run_floquet initial")
    targets = tuple(targets) if targets is not None else _infer_targets(initial)
    stride = _sample_steps(n_periods, stride)
    stepper = FloquetStepper(space, protocol, dense_cap)
    steps, times, rows = [], [], []

    def record(step: int, data: np.ndarray) -> dict[str, float]:
        row = measure_columns(space, data, targets)
        steps.append(step)
        times.append(step * protocol.t_period)
        rows.append(row)
        return row

    sample_at = sorted(set(range(0, n_periods + 1, stride)) | {n_periods})
    if stepper.is_dense():
        # jump straight between samples through the period eigenmodes
        phases, modes = stepper.spectral_map()
        angles = np.angle(phases)
        weights = modes.conj().T @ initial.data
        for step in sample_at:
            data = modes @ (np.exp(1j * angles * step) * weights)
            row = record(step, data)
            if stop_when is not None and stop_when(row) and step > 0:
                log.debug("%s: stopped early at period %d", protocol.label, step)
                break
    else:
        data = initial.data.copy()
        record(0, data)
        for step in range(1, n_periods + 1):
            data = stepper.step_raw(data)
            if step % stride == 0 or step == n_periods:
                row = record(step, data)
                if stop_when is not None and stop_when(row):
                    log.debug("%s: stopped early at period %d", protocol.label, step)
                    break
    columns = {name: np.array([r[name] for r in rows]) for name in rows[0]}
    meta = dict(metadata or {})
    meta.setdefault("protocol", protocol.label)
    meta.setdefault("t_period", protocol.t_period)
    meta.setdefault("targets", list(targets))
    meta.setdefault("space", space.label)
    return TimeSeries(np.array(steps), np.array(times), columns, meta)


def run_effective(
    protocol: DriveProtocol,
    initial: StateVector,
    n_periods: int,
    stride: int | None = None,
    orders: Sequence[int] | None = None,
    targets: Sequence[int] | None = None,
    dense_cap: int = 4096,
    metadata: Mapping | None = None,
) -> TimeSeries:
    """Static evolution under selected expansion orders, sampled on the
    same stroboscopic grid as the driven run."""
    space = initial.space
    initial.check_norm("run_effective initial")
    targets = tuple(targets) if targets is not None else _infer_targets(initial)
    stride = _sample_steps(n_periods, stride)
    chosen = sorted(set(orders if orders is not None else (0, 1, 2)))
    if any(n not in (0, 1, 2) for n in chosen):
        raise EngineError(f"orders must be within 0..2, got {chosen}")
    eff = effective_orders(protocol, max(chosen))
    total = eff[chosen[0]]
    for n in chosen[1:]:
        total = total + eff[n]
    op = compile_operator(space, total)
    defect = op.hermiticity_defect()
    if defect > 1e-9:
        raise EngineError(f"effective generator not Hermitian ({defect:.2e})")

    sample_steps = sorted(set(range(0, n_periods + 1, stride)) | {n_periods})
    steps, times, rows = [], [], []
    if space.dim <= dense_cap:
        evals, evecs = op.eigensystem(dense_cap)
        modes = evecs.conj().T @ initial.data
        for step in sample_steps:
            t = step * protocol.t_period
            data = evecs @ (np.exp(-1j * evals * t) * modes)
            steps.append(step)
            times.append(t)
            rows.append(measure_columns(space, data, targets))
    else:
        data = initial.data.copy()
        last_t = 0.0
        for step in sample_steps:
            t = step * protocol.t_period
            if t > last_t:
                state = evolve(StateVector(space, data), op, t - last_t, dense_cap)
                data = state.data
                last_t = t
            steps.append(step)
            times.append(t)
            rows.append(measure_columns(space, data, targets))
    columns = {name: np.array([r[name] for r in rows]) for name in rows[0]}
    meta = dict(metadata or {})
    meta.setdefault("protocol", protocol.label + f"+orders{chosen}")
    meta.setdefault("t_period", protocol.t_period)
    meta.setdefault("targets", list(targets))
    meta.setdefault("space", space.label)
    return TimeSeries(np.array(steps), np.array(times), columns, meta)


def replay_lab_schedule(
    state: StateVector, protocol: DriveProtocol, dense_cap: int = 4096
) -> StateVector:
    """One period applied literally: physical pulses and bare evolutions.

    Exists to cross-check the toggled-frame propagator; production runs
    use the frames.
    """
    op = compile_operator(state.space, protocol.lab_hamiltonian)
    for event, payload in protocol.lab_schedule:
        if event == "pulse":
            state = apply_pulse(state, payload)
        elif event == "evolve":
            state = evolve(state, op, payload, dense_cap)
        else:
            raise EngineError(f"unknown schedule event {event!r}")
    return state
