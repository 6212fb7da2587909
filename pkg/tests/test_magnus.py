"""Drive protocols and the stroboscopic effective-Hamiltonian expansion."""

import pathlib

import numpy as np
import pytest

from qlmfloquet import (
    Boundary,
    LatticeSpec,
    ModelParams,
    ProtocolError,
    build_model,
    effective_orders,
    first_order_weight,
    magnus_order_check,
    make_protocol,
    protocol_full,
    protocol_simple,
    second_order_weights,
)
from qlmfloquet.magnus import magnus_defect, one_period_unitary, project_onto
from qlmfloquet.operators import build_z2_generator

DATA = pathlib.Path(__file__).parent / "data"

SPEC = LatticeSpec(3, 0.5, Boundary.OBC)
PARAMS = ModelParams(J=1.0, K=4.0, h=0.0)
PARAMS_H = ModelParams(J=1.0, K=4.0, h=0.6, eps1=1.0, eps2=1.0)

# reference second-order mixture at J=1, K=4, from the closed-form weights
ALPHA1_PER_TF2 = -0.017039609053497964
ALPHA2_PER_TF2 = 0.012860082304526756


def test_first_order_weight_closed_form():
    for J, K, spacing in ((1.0, 4.0, 0.1), (0.7, 3.0, 0.02), (2.0, 2.0, 0.3)):
        params = ModelParams(J=J, K=K, h=0.0)
        lam = first_order_weight(params, spacing)
        assert lam == pytest.approx(0.5 * J * (J + K) * spacing, rel=1e-12)
        t_period = (2.0 + J / K) * spacing
        assert lam == pytest.approx(
            K * J * (J + K) / (2.0 * (2.0 * K + J)) * t_period, rel=1e-12
        )


def test_simple_leading_order_is_rescaled_hopping():
    prot = protocol_simple(SPEC, PARAMS, 0.05)
    eff = effective_orders(prot, 2)
    model = build_model(SPEC, PARAMS)
    diff = eff.orders[0] - model.hopping * PARAMS.J
    assert diff.max_abs_coeff < 1e-12


def test_simple_first_order_is_weighted_commutator():
    spacing = 0.05
    prot = protocol_simple(SPEC, PARAMS, spacing)
    eff = effective_orders(prot, 2)
    model = build_model(SPEC, PARAMS)
    lam = first_order_weight(PARAMS, spacing)
    target = model.hopping.commutator(model.mixing) * (1j * lam)
    diff = eff.orders[1] - target
    assert diff.max_abs_coeff < 1e-12


def test_full_echoes_away_first_order():
    prot = protocol_full(SPEC, PARAMS_H, 0.05)
    eff = effective_orders(prot, 2)
    model = build_model(SPEC, PARAMS_H)
    assert (eff.orders[0] - model.hopping * PARAMS_H.J).max_abs_coeff < 1e-12
    assert eff.orders[1].max_abs_coeff < 1e-10


def test_full_leading_orders_independent_of_detuning():
    a = effective_orders(protocol_full(SPEC, PARAMS, 0.05), 1)
    b = effective_orders(protocol_full(SPEC, PARAMS_H, 0.05), 1)
    assert (a.orders[0] - b.orders[0]).max_abs_coeff < 1e-12
    assert (a.orders[1] - b.orders[1]).max_abs_coeff < 1e-12


def test_full_period_is_sixteen_windows():
    prot = protocol_full(SPEC, PARAMS, 0.05)
    assert len(prot.segments) == 16
    assert prot.t_period == pytest.approx(8 * (2 + 1.0 / 4.0) * 0.05, rel=1e-12)
    total = sum(d for _, d in prot.segments)
    assert total == pytest.approx(prot.t_period, rel=1e-12)


def test_orders_are_hermitian():
    for builder in (protocol_simple, protocol_full):
        eff = effective_orders(builder(SPEC, PARAMS_H, 0.04), 2)
        for order, op in enumerate(eff.orders):
            assert op.is_hermitian(1e-10), f"order {order} not Hermitian"


def test_second_order_commutator_mixture():
    prot = protocol_full(SPEC, PARAMS, 0.03)
    eff = effective_orders(prot, 2)
    model = build_model(SPEC, PARAMS)
    inner = model.hopping.commutator(model.mixing)
    basis = [model.hopping.commutator(inner), model.mixing.commutator(inner)]
    coeffs, residual = project_onto(eff.orders[2], basis)
    tf2 = prot.t_period**2
    assert residual < 1e-8
    assert coeffs[0].real / tf2 == pytest.approx(ALPHA1_PER_TF2, rel=1e-6)
    assert coeffs[1].real / tf2 == pytest.approx(ALPHA2_PER_TF2, rel=1e-6)


def test_second_order_mixture_with_detuning():
    # the detuning contributes only detuning-sandwich commutators, leaving
    # the level-mixing weights unchanged
    prot = protocol_full(SPEC, PARAMS_H, 0.03)
    eff = effective_orders(prot, 2)
    model = build_model(SPEC, PARAMS_H)
    inner = model.hopping.commutator(model.mixing)
    basis = [
        model.hopping.commutator(inner),
        model.mixing.commutator(inner),
        model.detuning.commutator(model.hopping.commutator(model.detuning)),
        model.detuning.commutator(model.mixing.commutator(model.detuning)),
    ]
    coeffs, residual = project_onto(eff.orders[2], basis)
    tf2 = prot.t_period**2
    assert residual < 1e-8
    assert coeffs[0].real / tf2 == pytest.approx(ALPHA1_PER_TF2, rel=1e-6)
    assert coeffs[1].real / tf2 == pytest.approx(ALPHA2_PER_TF2, rel=1e-6)


def test_second_order_preserving_part_commutes_with_cyclic_labels():
    prot = protocol_full(SPEC, PARAMS_H, 0.03)
    eff = effective_orders(prot, 2)
    model = build_model(SPEC, PARAMS_H)
    inner = model.hopping.commutator(model.mixing)
    basis = [model.hopping.commutator(inner), model.mixing.commutator(inner)]
    coeffs, _ = project_onto(eff.orders[2], basis)
    preserving = basis[0] * coeffs[0] + basis[1] * coeffs[1]
    for j in range(SPEC.n_sites):
        s = build_z2_generator(SPEC, j)
        assert preserving.commutator(s).max_abs_coeff < 1e-10


def test_second_order_weights_match_projection():
    prot = protocol_full(SPEC, PARAMS_H, 0.03)
    weights = second_order_weights(prot)
    tf2 = prot.t_period**2
    assert weights["hop_hop_mix"] / tf2 == pytest.approx(ALPHA1_PER_TF2, rel=1e-6)
    assert weights["mix_hop_mix"] / tf2 == pytest.approx(ALPHA2_PER_TF2, rel=1e-6)
    assert weights["residual"] < 1e-8
    assert abs(weights["det_hop_det"]) > 0


def test_magnus_defect_shrinks_with_order():
    prot = protocol_simple(SPEC, PARAMS, 0.02)
    defects = [magnus_defect(prot, order) for order in (0, 1, 2)]
    assert defects[1] < defects[0]
    assert defects[2] < defects[1]


def test_one_period_unitary_is_unitary():
    prot = protocol_full(SPEC, PARAMS_H, 0.05)
    u = one_period_unitary(prot)
    assert np.abs(u @ u.conj().T - np.eye(u.shape[0])).max() < 1e-10


def test_order_scaling_slopes():
    ladder = [0.16 / 2**k for k in range(6)]
    simple = magnus_order_check(protocol_simple(SPEC, PARAMS, 0.1), ladder, max_order=1)
    assert simple[0].slope == pytest.approx(2.0, abs=0.2)
    assert simple[1].slope == pytest.approx(3.0, abs=0.2)
    full = magnus_order_check(protocol_full(SPEC, PARAMS, 0.1), ladder, max_order=0)
    assert full[0].slope == pytest.approx(3.0, abs=0.2)


def test_protocol_serialization_golden():
    prot = protocol_simple(SPEC, PARAMS, 0.125)
    frames = prot.distinct_frames()
    lines = [f"period/T {prot.t_period / prot.spacing:.12g}"]
    for k, (frame, dur) in enumerate(prot.segments):
        fid = next(i for i, f in enumerate(frames) if f is frame)
        lines.append(f"segment {k} frame {fid} duration/T {dur / prot.spacing:.12g}")
    for i, frame in enumerate(frames):
        lines.append(f"frame {i}")
        lines.append(frame.dump())
    text = "\n".join(lines) + "\n"
    assert text == (DATA / "simple_protocol_golden.txt").read_text()


def test_make_protocol_dispatch():
    assert make_protocol("simple", SPEC, PARAMS, 0.1).label == "simple"
    assert make_protocol("full", SPEC, PARAMS, 0.1).label == "full"
    with pytest.raises(ProtocolError):
        make_protocol("nope", SPEC, PARAMS, 0.1)
    with pytest.raises(ProtocolError):
        make_protocol("simple", SPEC, PARAMS, -0.1)
