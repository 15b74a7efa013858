"""Tests for witness evaluation, tightening, task conversion, separation and lifting."""
import numpy as np
import pytest

from models.algebra import (
    Algebra,
    Measurement,
    StateEnsemble,
    StateFunctional,
    basis_measurement,
    ic_povm,
    trace_state,
)
from models.channels import (
    compose,
    from_measurement,
    mix,
    random_channel,
    trivial_channel,
)
from models.witness import DiscriminationTask, WitnessForm
from services.catalog import fourier_mub, measurement_channels, noisy_mub_measurements, xi_cc_clone, xi_mm
from services.compatibility import max_over_compatible, p_post, p_prior, p_prior_given
from services.witnesses import (
    detection_agreement,
    detects,
    evaluate,
    lift_pair,
    lift_witness,
    sample_pairs,
    sampled_minimum,
    task_from_witness,
    tighten,
    witness_from_incompatible_pair,
    witness_from_task,
)
from utils.errors import InputError, ReasonCodes


@pytest.fixture
def mub_witness():
    return xi_mm(2)


@pytest.fixture
def measurement_pair_sampler(rng, qubit):
    """Random pairs of qubit measurement channels with two outcomes each."""
    out = Algebra.abelian(2)

    def sample(count):
        return sample_pairs(qubit, (out, out), rng, count)

    return sample


def test_clone_witness_at_identity(qubit_identity):
    """ξ̃ = d(d+1) − 2d² at the identity pair: −2 for qubits."""
    assert evaluate(xi_cc_clone(2), qubit_identity, qubit_identity) == pytest.approx(-2.0, abs=1e-12)


def test_detects_projective_mub(mub_witness):
    """The MUB witness detects the sharp computational/Fourier pair."""
    c1, c2 = measurement_channels(2, 1.0)

    assert evaluate(mub_witness, c1, c2) < 0
    assert detects(mub_witness, c1, c2)


def test_evaluate_is_affine(mub_witness, measurement_pair_sampler):
    """W is affine in each channel separately."""
    (a, c2), (b, _) = measurement_pair_sampler(2)

    mixed = evaluate(mub_witness, mix(0.3, a, b), c2)

    expected = 0.3 * evaluate(mub_witness, a, c2) + 0.7 * evaluate(mub_witness, b, c2)
    assert mixed == pytest.approx(expected, abs=1e-12)


def test_evaluate_checks_algebras(mub_witness, qubit_identity):
    """Output algebras must match the witness slots."""
    with pytest.raises(InputError) as exc_info:
        evaluate(mub_witness, qubit_identity, qubit_identity)

    assert exc_info.value.reason == ReasonCodes.ALGEBRA_MISMATCH


def test_from_duals_preserves_values(mub_witness, measurement_pair_sampler):
    """Rebuilding a witness from its Choi-space operators keeps every value."""
    rebuilt = WitnessForm.from_duals(
        mub_witness.in_alg,
        mub_witness.out_algs,
        mub_witness.delta0,
        mub_witness.choi_dual(1),
        mub_witness.choi_dual(2),
    )

    for c1, c2 in measurement_pair_sampler(5):
        assert evaluate(rebuilt, c1, c2) == pytest.approx(evaluate(mub_witness, c1, c2), abs=1e-12)


def test_mub_witness_already_tight(mub_witness):
    """The minimum of ξ_mm over compatible pairs is zero."""
    assert max_over_compatible(mub_witness).value == pytest.approx(0.0, abs=1e-6)


def test_tighten_removes_shift(mub_witness):
    """Tightening a shifted witness restores the tight offset."""
    shifted = mub_witness.shifted(0.3)

    tight = tighten(shifted)

    assert tight.delta0 == pytest.approx(mub_witness.delta0, abs=1e-6)


def test_tighten_idempotent(mub_witness):
    """Tightening twice moves δ₀ no further."""
    once = tighten(mub_witness.shifted(-0.1))

    twice = tighten(once)

    assert twice.delta0 == pytest.approx(once.delta0, abs=1e-6)


def test_scaled_witness_same_detection(mub_witness, measurement_pair_sampler):
    """Positive multiples of a witness detect exactly the same pairs."""
    pairs = measurement_pair_sampler(30) + [measurement_channels(2, 1.0)]

    agreement = detection_agreement(mub_witness, mub_witness.scaled(2.0), pairs)

    assert agreement.equivalent
    assert agreement.total == 31


def test_task_from_witness_reproduces_values(mub_witness, measurement_pair_sampler):
    """W(Φ) = α[δ − P_prior(Φ‖task)] on random pairs."""
    out = Algebra.abelian(2)
    built = task_from_witness(mub_witness, ic_povm(out, prefix="a"), ic_povm(out, prefix="b"))

    assert built.residual <= 1e-8
    for c1, c2 in measurement_pair_sampler(20):
        expected = built.alpha * (built.delta - p_prior_given(c1, c2, built.task))
        assert evaluate(mub_witness, c1, c2) == pytest.approx(expected, abs=1e-8 * max(1.0, built.alpha))


def test_task_from_witness_probabilities(mub_witness):
    """For a tight detecting witness, p_post = δ < p_prior."""
    out = Algebra.abelian(2)
    built = task_from_witness(mub_witness, ic_povm(out, prefix="a"), ic_povm(out, prefix="b"))

    post = p_post(built.task)
    prior = p_prior(built.task)

    assert post <= built.delta + 1e-6
    assert post == pytest.approx(built.delta, abs=1e-6)
    assert built.delta < prior


def test_task_roundtrip_detection_equivalent(mub_witness, measurement_pair_sampler):
    """to-task followed by from-task gives W/α, which detects the same pairs."""
    out = Algebra.abelian(2)
    built = task_from_witness(mub_witness, ic_povm(out, prefix="a"), ic_povm(out, prefix="b"))
    pairs = measurement_pair_sampler(20) + [measurement_channels(2, 1.0)]

    back = witness_from_task(built.task)

    for c1, c2 in pairs:
        assert evaluate(back, c1, c2) == pytest.approx(evaluate(mub_witness, c1, c2) / built.alpha, abs=1e-5)
    assert detection_agreement(mub_witness, back, pairs[-1:]).equivalent


def test_task_from_witness_needs_ic(qubit):
    """Readouts that are not informationally complete are refused."""
    w = xi_cc_clone(2)
    mub = fourier_mub(2)

    with pytest.raises(InputError) as exc_info:
        task_from_witness(w, basis_measurement(mub.e, "a"), ic_povm(qubit, prefix="b"))

    assert exc_info.value.reason == ReasonCodes.NOT_INFORMATIONALLY_COMPLETE


def test_task_from_clone_witness(qubit, qubit_identity):
    """The construction also works for quantum outputs."""
    w = xi_cc_clone(2)
    built = task_from_witness(w, ic_povm(qubit, prefix="a"), ic_povm(qubit, prefix="b"))

    expected = built.alpha * (built.delta - p_prior_given(qubit_identity, qubit_identity, built.task))

    assert evaluate(w, qubit_identity, qubit_identity) == pytest.approx(expected, abs=1e-8 * built.alpha)


def test_witness_from_task_bb84(qubit, qubit_identity):
    """The BB84 task yields a tight witness with δ₀ = p_post."""
    mub = fourier_mub(2)
    m1, m2 = basis_measurement(mub.e, "e"), basis_measurement(mub.f, "f")
    labels = m1.outcomes + m2.outcomes
    states = tuple(StateFunctional(qubit, (e.blocks[0] / 4,)) for e in m1.effects + m2.effects)
    ensemble = StateEnsemble(qubit, labels, states)

    w = witness_from_task(DiscriminationTask(ensemble, m1, m2))

    assert w.delta0 == pytest.approx((1 + 1 / np.sqrt(2)) / 2, abs=1e-6)
    assert evaluate(w, qubit_identity, qubit_identity) == pytest.approx(w.delta0 - 1.0, abs=1e-6)
    assert max_over_compatible(w).value == pytest.approx(0.0, abs=1e-6)


def test_witness_from_task_degenerate(qubit):
    """A task whose readouts carry no information cannot witness anything."""
    scalars = Algebra.trivial()
    m1 = Measurement(scalars, ("a0",), (scalars.identity(),))
    m2 = Measurement(scalars, ("b0",), (scalars.identity(),))
    half = trace_state(qubit) * 0.5
    task = DiscriminationTask(StateEnsemble(qubit, ("a0", "b0"), (half, half)), m1, m2)

    with pytest.raises(InputError) as exc_info:
        witness_from_task(task)

    assert exc_info.value.reason == ReasonCodes.DEGENERATE_TASK


def test_task_labels_must_be_disjoint(qubit):
    """Outcome labels of the two readouts may not overlap."""
    m = basis_measurement(np.eye(2), "x")
    ensemble = StateEnsemble(qubit, m.outcomes, tuple(trace_state(qubit) * 0.5 for _ in m.outcomes))

    with pytest.raises(InputError) as exc_info:
        DiscriminationTask(ensemble, m, m)

    assert exc_info.value.reason == ReasonCodes.LABEL_MISMATCH


def test_witness_from_identity_pair(qubit_identity, rng):
    """The dual-derived witness detects (id, id) and is nonnegative on sampled compatible pairs."""
    w = witness_from_incompatible_pair(qubit_identity, qubit_identity, rng, samples=20)

    assert evaluate(w, qubit_identity, qubit_identity) < -1e-4
    assert sampled_minimum(w, rng, samples=20) >= -1e-6
    assert max_over_compatible(w).value == pytest.approx(0.0, abs=1e-6)


def test_witness_from_compatible_pair_refused(rng, qubit):
    """A compatible pair has no separating witness."""
    c = random_channel(qubit, qubit, rng)

    with pytest.raises(InputError) as exc_info:
        witness_from_incompatible_pair(c, trivial_channel(qubit), rng, samples=5)

    assert exc_info.value.reason == ReasonCodes.PAIR_COMPATIBLE


def test_lift_matches_postprocessing(mub_witness, rng, qubit):
    """W_P(Φ₁, Φ₂) = W(Φ₁, P̂∘Φ₂)."""
    p = basis_measurement(fourier_mub(2).f, "f")
    lifted = lift_witness(mub_witness, p, slot=2)
    c1 = random_channel(qubit, Algebra.abelian(2), rng)
    c2 = random_channel(qubit, qubit, rng)

    value = evaluate(lifted, c1, c2)

    assert lifted.out_algs == (Algebra.abelian(2), qubit)
    assert value == pytest.approx(evaluate(mub_witness, c1, compose(from_measurement(p), c2)), abs=1e-12)


def test_lift_first_slot(mub_witness, rng, qubit):
    """Lifting slot 1 leaves slot 2 untouched."""
    p = basis_measurement(np.eye(2), "e")

    lifted = lift_witness(mub_witness, p, slot=1)

    assert lifted.out_algs == (qubit, Algebra.abelian(2))
    assert lifted.phi2 == mub_witness.phi2


def test_lift_requires_projective(mub_witness):
    """Unsharp effects cannot be used for lifting."""
    noisy, _ = noisy_mub_measurements(2, 0.5)

    with pytest.raises(InputError) as exc_info:
        lift_witness(mub_witness, noisy, slot=2)

    assert exc_info.value.reason == ReasonCodes.NON_PROJECTIVE


def test_lift_requires_abelian_slot(qubit):
    """Only ℓ∞ outputs can be lifted."""
    with pytest.raises(InputError) as exc_info:
        lift_witness(xi_cc_clone(2), basis_measurement(np.eye(2)), slot=1)

    assert exc_info.value.reason == ReasonCodes.ALGEBRA_MISMATCH


def test_identity_detected_by_lifted_witness(qubit_identity):
    """Lifting both slots of ξ_mm through the MUB bases detects (id, id)."""
    mub = fourier_mub(2)
    w = lift_witness(lift_witness(xi_mm(2), basis_measurement(mub.e), 1), basis_measurement(mub.f), 2)

    assert detects(w, qubit_identity, qubit_identity)


def test_identity_pair_yields_discriminating_task(qubit, qubit_identity, rng):
    """Separating (id, id) and converting the witness to a task beats p_post on that pair."""
    w = witness_from_incompatible_pair(qubit_identity, qubit_identity, rng, samples=20)
    built = task_from_witness(w, ic_povm(qubit, prefix="a"), ic_povm(qubit, prefix="b"))

    given = p_prior_given(qubit_identity, qubit_identity, built.task)

    assert given > p_post(built.task) + 1e-4


def test_lift_pair_keeps_value(mub_witness):
    """The lifted witness takes the original value on the lifted pair."""
    p = basis_measurement(fourier_mub(2).f, "f")
    pair = measurement_channels(2, 0.9)

    lifted_pair = lift_pair(*pair, p, slot=2)

    assert lifted_pair[1].out_alg == Algebra.full(2)
    assert evaluate(lift_witness(mub_witness, p, 2), *lifted_pair) == pytest.approx(evaluate(mub_witness, *pair), abs=1e-12)
    assert detects(lift_witness(mub_witness, p, 2), *lifted_pair)


def test_lift_pair_first_slot():
    """Lifting slot 1 leaves the second channel untouched."""
    pair = measurement_channels(2, 1.0)

    first, second = lift_pair(*pair, basis_measurement(np.eye(2)), slot=1)

    assert first.out_alg == Algebra.full(2)
    assert second is pair[1]
