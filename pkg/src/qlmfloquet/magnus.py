"""Composite pulse drives and their stroboscopic effective Hamiltonians.

A drive is stored two ways at once.  The toggled-frame form is a
chronological list of (frame Hamiltonian, duration) segments with all
pulses absorbed; this is what the propagator and the Magnus expansion
consume.  The lab form is the literal schedule of instantaneous global
pulses and evolutions under the physical Hamiltonian; tests replay it to
confirm the two descriptions produce the same one-period unitary.

Both protocols are built so that the time-averaged Hamiltonian is exactly
the gauge-invariant hopping term:

* "simple" sandwiches one evolution window between link pulses.  Its
  average retains a detuning leftover at nonzero h, and the first
  correction is i * lambda0 * [hopping, mixing] with
  lambda0 = J (J + K) T / 2 (T the pulse spacing).
* "full" uses four frames over sixteen windows: a palindromic echo that
  kills the first correction outright, chained with the same echo under a
  detuning sign flip, which removes the detuning-linear part of the second
  correction too.  What survives at second order carries the detuning only
  quadratically.

Conventions for the expansion of U(t_period) = exp(-i Q t_period):

    Q0 = (1/T) sum_k H_k d_k
    Q1 = (-i/2T) sum_{k>l} [H_k d_k, H_l d_l]
    Q2 = -(1/6T) { sum_{s>r} (d_s^2 d_r / 2) [H_s,[H_s,H_r]]
                             + (d_s d_r^2 / 2) [H_r,[H_r,H_s]]
                 + sum_{s>q>r} d_s d_q d_r ([H_s,[H_q,H_r]] + [H_r,[H_q,H_s]]) }

with k chronologically later than l.  Truncating after Q1 leaves a defect
scaling as the cube of the period; after Q2, as the fourth power.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .lattice import Boundary, LatticeSpec
from .operators import (
    ModelParams,
    ModelTerms,
    OperatorSum,
    PulseKind,
    PulseSpec,
    build_model,
)

__all__ = [
    "ProtocolError",
    "DriveProtocol",
    "protocol_simple",
    "protocol_full",
    "make_protocol",
    "first_order_weight",
    "EffectiveHamiltonian",
    "effective_orders",
    "magnus_order_check",
    "one_period_unitary",
    "effective_unitary",
    "magnus_defect",
    "OrderScaling",
    "order_scaling",
    "project_onto",
    "second_order_weights",
]


class ProtocolError(RuntimeError):
    pass


LabEvent = tuple[str, object]  # ("pulse", PulseSpec) or ("evolve", float)


@dataclass(frozen=True)
class DriveProtocol:
    label: str
    spec: LatticeSpec
    params: ModelParams
    spacing: float
    segments: tuple[tuple[OperatorSum, float], ...]
    lab_hamiltonian: OperatorSum
    lab_schedule: tuple[LabEvent, ...]
    t_period: float

    def distinct_frames(self) -> list[OperatorSum]:
        seen: list[OperatorSum] = []
        for h, _ in self.segments:
            if not any(h is s for s in seen):
                seen.append(h)
        return seen


def _conj(h: OperatorSum, *kinds: PulseKind) -> OperatorSum:
    for kind in kinds:
        h = h.conjugated(PulseSpec(kind))
    return h


def _check_average(label: str, q0: OperatorSum, expected: OperatorSum) -> None:
    scale = max(1.0, expected.max_abs_coeff)
    dev = (q0 - expected).max_abs_coeff
    if dev > 1e-10 * scale:
        raise ProtocolError(
            f"{label}: time-averaged Hamiltonian off by {dev:.2e}; "
            "the schedule algebra is inconsistent"
        )


def first_order_weight(params: ModelParams, spacing: float) -> float:
    """Coefficient lambda0 of i[hopping, mixing] in Q1 of the simple drive."""
    return 0.5 * params.J * (params.J + params.K) * spacing


def protocol_simple(spec: LatticeSpec, params: ModelParams, spacing: float) -> DriveProtocol:
    if params.K == 0:
        raise ProtocolError("need K != 0 to balance the schedule")
    model = build_model(spec, params)
    h = model.total(params)
    frame = _conj(h, PulseKind.TAU_X, PulseKind.TAU_Z)
    t1 = spacing * (params.J + params.K) / params.K
    t_period = spacing + t1
    segments = ((frame, spacing), (h, t1))

    pz, px = PulseKind.TAU_Z, PulseKind.TAU_X
    schedule: tuple[LabEvent, ...] = (
        ("pulse", PulseSpec(pz, dagger=True)),
        ("pulse", PulseSpec(px, dagger=True)),
        ("evolve", spacing),
        ("pulse", PulseSpec(px)),
        ("pulse", PulseSpec(pz)),
        ("evolve", t1),
    )
    proto = DriveProtocol(
        "simple", spec, params, spacing, segments, h, schedule, t_period
    )
    expected = params.J * model.hopping
    if params.h:
        expected = expected + (
            params.h * params.J / (params.J + 2 * params.K)
        ) * model.detuning
    _check_average("simple", effective_orders(proto, 0)[0], expected)
    return proto


def protocol_full(spec: LatticeSpec, params: ModelParams, spacing: float) -> DriveProtocol:
    """Sixteen-window echo drive cancelling the first correction entirely.

    The first eight windows are a time-symmetric echo over four frames:
    plain H, the link-pulse frame of the simple drive, and two frames using
    the staggered matter pulse.  The second eight replay the same echo with
    every frame's detuning sign reversed (which permutes the four frames
    among themselves).  The palindromic halves cancel Q1; their
    concatenation cancels the detuning-linear part of Q2, leaving only
    detuning-squared symmetry breaking at second order.  Total period
    8 (2 + J/K) T.
    """
    if params.K == 0:
        raise ProtocolError("need K != 0 to balance the schedule")
    if spec.boundary is Boundary.PBC and spec.n_sites % 2:
        raise ProtocolError(
            "the staggered matter pulse needs an even ring; use OBC or even L"
        )
    model = build_model(spec, params)
    h = model.total(params)
    f1 = _conj(h, PulseKind.TAU_X, PulseKind.TAU_Z)
    f2 = _conj(h, PulseKind.SIGMA_Z_ODD, PulseKind.TAU_Z)
    f3 = _conj(h, PulseKind.SIGMA_Z_ODD, PulseKind.TAU_X)
    t1 = spacing * (params.J + params.K) / params.K

    # window names in chronological order; the second half is the first
    # half under detuning reversal (h <-> f2, f1 <-> f3)
    echo = ["h", "f1", "f2", "f3", "f3", "f2", "f1", "h"]
    flipped = {"h": "f2", "f2": "h", "f1": "f3", "f3": "f1"}
    windows = echo + [flipped[n] for n in echo]

    frame_of = {"h": h, "f1": f1, "f2": f2, "f3": f3}
    length_of = {"h": t1, "f1": spacing, "f2": t1, "f3": spacing}
    segments = tuple((frame_of[n], length_of[n]) for n in windows)
    t_period = sum(length_of[n] for n in windows)

    pz, px, ps = PulseKind.TAU_Z, PulseKind.TAU_X, PulseKind.SIGMA_Z_ODD
    pulses_of = {"h": None, "f1": (pz, px), "f2": (pz, ps), "f3": (px, ps)}
    schedule: list[LabEvent] = []
    for name in windows:
        wrap = pulses_of[name]
        if wrap is None:
            schedule.append(("evolve", length_of[name]))
            continue
        outer, inner = wrap
        schedule += [
            ("pulse", PulseSpec(outer)),
            ("pulse", PulseSpec(inner)),
            ("evolve", length_of[name]),
            ("pulse", PulseSpec(inner, dagger=True)),
            ("pulse", PulseSpec(outer, dagger=True)),
        ]

    proto = DriveProtocol(
        "full", spec, params, spacing, segments, h, tuple(schedule), t_period
    )
    q0, q1 = effective_orders(proto, 1)
    _check_average("full", q0, params.J * model.hopping)
    if q1.max_abs_coeff > 1e-10:
        raise ProtocolError(
            f"full: first correction should cancel, found {q1.max_abs_coeff:.2e}"
        )
    return proto


_PROTOCOLS: dict[str, Callable[[LatticeSpec, ModelParams, float], DriveProtocol]] = {
    "simple": protocol_simple,
    "full": protocol_full,
}


def make_protocol(
    name: str, spec: LatticeSpec, params: ModelParams, spacing: float
) -> DriveProtocol:
    try:
        factory = _PROTOCOLS[name.lower()]
    except KeyError:
        raise ProtocolError(f"unknown drive {name!r}; have {sorted(_PROTOCOLS)}") from None
    if spacing <= 0:
        raise ProtocolError(f"pulse spacing must be positive, got {spacing}")
    return factory(spec, params, spacing)


# ---------------------------------------------------------------------------
# Magnus orders


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """Magnus orders of one drive period, as energy-rate operators.

    Behaves like the tuple of orders (iterates, indexes, slices) and also
    remembers the period it belongs to.
    """

    orders: tuple[OperatorSum, ...]
    t_period: float

    def __iter__(self):
        return iter(self.orders)

    def __len__(self) -> int:
        return len(self.orders)

    def __getitem__(self, idx):
        return self.orders[idx]

    def truncated(self, max_order: int | None = None) -> OperatorSum:
        """Sum of the retained orders, still an energy-rate operator."""
        take = self.orders if max_order is None else self.orders[: max_order + 1]
        total = take[0]
        for extra in take[1:]:
            total = total + extra
        return total


def effective_orders(protocol: DriveProtocol, max_order: int = 2) -> EffectiveHamiltonian:
    """Q0 .. Q_max_order of the one-period evolution, as energy-rate operators."""
    if not 0 <= max_order <= 2:
        raise ValueError("orders 0, 1, 2 are implemented")
    segs = protocol.segments
    tf = protocol.t_period
    spec = protocol.spec

    q0 = OperatorSum.zero(spec)
    for h, d in segs:
        q0 = q0 + (d / tf) * h
    out = [q0]
    if max_order == 0:
        return EffectiveHamiltonian(tuple(out), tf)

    # frames repeat across windows, so cache on object identity
    comm_memo: dict[tuple[int, int], OperatorSum] = {}
    dbl_memo: dict[tuple[int, int], OperatorSum] = {}

    def pair(a: int, b: int) -> OperatorSum:
        ha, hb = segs[a][0], segs[b][0]
        if ha is hb:
            return OperatorSum.zero(spec)
        key = (id(ha), id(hb))
        if key not in comm_memo:
            comm_memo[key] = ha.commutator(hb)
        return comm_memo[key]

    def dbl(h: OperatorSum, inner: OperatorSum) -> OperatorSum:
        key = (id(h), id(inner))
        if key not in dbl_memo:
            dbl_memo[key] = h.commutator(inner)
        return dbl_memo[key]

    q1 = OperatorSum.zero(spec)
    n = len(segs)
    for k in range(n):
        dk = segs[k][1]
        for l in range(k):
            dl = segs[l][1]
            q1 = q1 + (-0.5j * dk * dl / tf) * pair(k, l)
    out.append(q1)
    if max_order == 1:
        return EffectiveHamiltonian(tuple(out), tf)

    q2 = OperatorSum.zero(spec)
    for s in range(n):
        hs, ds = segs[s]
        for r in range(s):
            hr, dr = segs[r]
            inner = pair(s, r)
            if len(inner):
                q2 = q2 + (-(ds * ds * dr) / (12 * tf)) * dbl(hs, inner)
                q2 = q2 + (+(ds * dr * dr) / (12 * tf)) * dbl(hr, inner)
            for q in range(r + 1, s):
                hq, dq = segs[q]
                w = -(ds * dq * dr) / (6 * tf)
                mid_r = pair(q, r)
                if len(mid_r):
                    q2 = q2 + w * dbl(hs, mid_r)
                mid_s = pair(q, s)
                if len(mid_s):
                    q2 = q2 + w * dbl(hr, mid_s)
    out.append(q2)
    return EffectiveHamiltonian(tuple(out), tf)


# ---------------------------------------------------------------------------
# dense diagnostics (small systems)


def one_period_unitary(protocol: DriveProtocol, cap: int = 4096) -> np.ndarray:
    """Exact one-period unitary from the frame segments, dense."""
    dim = protocol.spec.total_dim
    if dim > cap:
        raise ValueError(f"dense unitary refused: dim {dim} > cap {cap}")
    u = np.eye(dim, dtype=complex)
    for h, d in protocol.segments:
        u = scipy.linalg.expm(-1j * d * h.to_dense(cap)) @ u
    return u


def effective_unitary(
    protocol: DriveProtocol, max_order: int = 2, cap: int = 4096
) -> np.ndarray:
    total = effective_orders(protocol, max_order).truncated()
    return scipy.linalg.expm(-1j * protocol.t_period * total.to_dense(cap))


def magnus_defect(protocol: DriveProtocol, max_order: int = 2, cap: int = 4096) -> float:
    """Spectral-norm distance between the exact and truncated-effective
    one-period unitaries."""
    diff = one_period_unitary(protocol, cap) - effective_unitary(protocol, max_order, cap)
    return float(np.linalg.norm(diff, 2))


@dataclass
class OrderScaling:
    periods: np.ndarray
    defects: np.ndarray
    slope: float
    intercept: float


def order_scaling(
    make: Callable[[float], DriveProtocol],
    spacings: Sequence[float],
    max_order: int,
    cap: int = 4096,
) -> OrderScaling:
    """Defect vs period on a log-log grid, with the fitted power."""
    tfs, defects = [], []
    for t in spacings:
        proto = make(t)
        tfs.append(proto.t_period)
        defects.append(magnus_defect(proto, max_order, cap))
    logx = np.log(np.asarray(tfs))
    logy = np.log(np.asarray(defects))
    slope, intercept = np.polyfit(logx, logy, 1)
    return OrderScaling(np.asarray(tfs), np.asarray(defects), float(slope), float(intercept))


def magnus_order_check(
    protocol: DriveProtocol,
    spacings: Sequence[float],
    max_order: int = 2,
    cap: int = 4096,
) -> dict[int, OrderScaling]:
    """Defect-vs-period scaling for each truncation order of one drive.

    Rebuilds the protocol at every pulse spacing in the ladder and fits the
    log-log slope of the truncated-propagator defect, one fit per order.
    """

    def make(t: float) -> DriveProtocol:
        return make_protocol(protocol.label, protocol.spec, protocol.params, t)

    return {n: order_scaling(make, spacings, n, cap) for n in range(max_order + 1)}


# ---------------------------------------------------------------------------
# projections onto commutator structures


def project_onto(
    target: OperatorSum, basis: Sequence[OperatorSum]
) -> tuple[np.ndarray, float]:
    """Least-squares weights expressing target over the basis operators.

    Returns (weights, residual) where residual is the largest leftover
    coefficient after subtracting the projection.
    """
    keys = sorted(set().union(target.terms, *(b.terms for b in basis)))
    pos = {k: i for i, k in enumerate(keys)}
    a = np.zeros((len(keys), len(basis)), dtype=complex)
    y = np.zeros(len(keys), dtype=complex)
    for k, c in target.terms.items():
        y[pos[k]] = c
    for col, b in enumerate(basis):
        for k, c in b.terms.items():
            a[pos[k], col] = c
    w, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = float(np.abs(a @ w - y).max()) if len(keys) else 0.0
    return w, resid


def second_order_weights(protocol: DriveProtocol) -> dict[str, float]:
    """Weights of Q2 over the nested commutators of the model terms.

    The basis is [hop,[hop,mix]], [mix,[hop,mix]], [det,[hop,det]],
    [det,[mix,det]].  Returns the real weights plus the projection
    residual; a large residual means Q2 has structure outside this plane.
    """
    model = build_model(protocol.spec, protocol.params)
    hop, mix, det = model.hopping, model.mixing, model.detuning
    hm = hop.commutator(mix)
    basis = [
        hop.commutator(hm),
        mix.commutator(hm),
        det.commutator(hop.commutator(det)),
        det.commutator(mix.commutator(det)),
    ]
    q2 = effective_orders(protocol, 2)[2]
    w, resid = project_onto(q2, basis)
    if np.abs(w.imag).max() > 1e-9:
        raise ProtocolError("second-order weights should be real")
    return {
        "hop_hop_mix": float(w[0].real),
        "mix_hop_mix": float(w[1].real),
        "det_hop_det": float(w[2].real),
        "det_mix_det": float(w[3].real),
        "residual": resid,
    }
