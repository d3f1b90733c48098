import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import h2, holevo_direct, mp_entropy, random_ket, random_rho, wootters_eof
from qadditivity import channels as C
from qadditivity import qmat
from qadditivity import quantities as Q
from qadditivity.errors import DimensionError, InvalidStateError

FAST = Q.OptimizerOptions(restarts=8, max_iters=800)
EPR = np.array([1, 0, 0, 1]) / np.sqrt(2)


def _bloch_grid_min(channel, deg=1.0):
    """Minimum output entropy over a Bloch-sphere grid, by direct eigenvalues."""
    theta = np.radians(np.arange(0, 180 + deg / 2, deg))[:, None]
    phi = np.radians(np.arange(0, 360, deg))[None, :]
    v = np.stack(np.broadcast_arrays(np.cos(theta / 2) + 0j, np.exp(1j * phi) * np.sin(theta / 2)), -1)
    v = v.reshape(-1, 2)
    out = np.einsum("kab,nb,nc,kdc->nad", channel.kraus, v, v.conj(), channel.kraus.conj())
    w = np.clip(np.linalg.eigvalsh(out), 1e-300, None)
    i = int(np.argmin(-np.sum(w * np.log2(w), axis=1)))
    return mp_entropy(np.linalg.eigvalsh(out[i]))


def test_ensemble_holevo_examples():
    ch = C.identity_channel(2)
    assert Q.ensemble_holevo(ch, Q.Ensemble([1.0], [[1, 0]])) == 0.0
    basis = Q.Ensemble([0.5, 0.5], np.eye(2))
    assert abs(Q.ensemble_holevo(ch, basis) - 1.0) <= 1e-12
    dep = C.depolarizing_channel(0.5)
    want = holevo_direct(dep.kraus, basis.probs, basis.states)
    assert abs(want - (1 - h2(0.25))) <= 1e-12
    assert abs(Q.ensemble_holevo(dep, basis) - want) <= 1e-12
    with pytest.raises(DimensionError):
        Q.ensemble_holevo(C.identity_channel(3), basis)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(1, 5))
def test_ensemble_holevo_matches_direct_oracle(seed, m):
    rng = np.random.default_rng(seed)
    ch = C.random_channel(3, 2, 3, seed=seed)
    p = rng.dirichlet(np.ones(m))
    states = np.array([random_ket(3, rng) for _ in range(m)])
    val = Q.ensemble_holevo(ch, Q.Ensemble(p, states))
    assert val >= -1e-9
    assert abs(val - holevo_direct(ch.kraus, p, states)) <= 1e-10


def test_ensemble_validation():
    with pytest.raises(InvalidStateError):
        Q.Ensemble([0.5, 0.6], np.eye(2))
    with pytest.raises(InvalidStateError):
        Q.Ensemble([1.0], [[1.0, 1.0]])
    with pytest.raises(DimensionError):
        Q.Ensemble([1.0], np.eye(2))


def test_min_output_entropy_examples():
    est = Q.min_output_entropy(C.identity_channel(2), FAST)
    assert est.bound_direction == Q.UPPER_ON_MIN
    assert est.value <= 1e-9
    dep = C.depolarizing_channel(0.5)
    grid = _bloch_grid_min(dep)
    est = Q.min_output_entropy(dep, FAST)
    assert abs(est.value - grid) <= 1e-6
    assert abs(est.value - h2(0.25)) <= 1e-9
    full = Q.min_output_entropy(C.depolarizing_channel(1.0), FAST)
    assert abs(full.value - 1.0) <= 1e-12


def test_min_output_entropy_against_grid_on_random_qubit_channel():
    ch = C.random_channel(2, 2, 2, seed=17)
    est = Q.min_output_entropy(ch, FAST)
    # the grid cannot beat a converged local search by more than its spacing error
    assert est.value <= _bloch_grid_min(ch, deg=2.0) + 1e-9


def test_min_output_entropy_below_random_samples():
    rng = np.random.default_rng(0)
    ch = C.random_channel(3, 3, 2, seed=5)
    est = Q.min_output_entropy(ch, FAST)
    samples = [Q.output_entropy(ch, random_ket(3, rng)) for _ in range(100)]
    assert est.value <= min(samples) + 1e-9


def test_constrained_chi_examples():
    ident = C.identity_channel(2)
    rho = np.diag([0.75, 0.25])
    est = Q.constrained_chi(ident, rho, FAST)
    assert est.bound_direction == Q.LOWER_ON_MAX
    assert abs(est.value - h2(0.25)) <= 1e-9
    assert np.linalg.norm(est.witness.average() - rho) <= 1e-8
    assert abs(Q.constrained_chi(ident, options=FAST).value - 1.0) <= 1e-9
    dep = Q.constrained_chi(C.depolarizing_channel(0.5), options=FAST)
    assert abs(dep.value - (1 - h2(0.25))) <= 1e-7
    with pytest.raises(DimensionError):
        Q.constrained_chi(ident, np.eye(3) / 3, FAST)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_constrained_chi_respects_constraint_and_free_bound(seed):
    ch = C.random_channel(2, 3, 2, seed=seed)
    rho = random_rho(2, np.random.default_rng(seed))
    con = Q.constrained_chi(ch, rho, FAST)
    free = Q.constrained_chi(ch, options=FAST)
    assert np.linalg.norm(con.witness.average() - rho) <= 1e-8
    assert con.details["constraint_residual"] <= 1e-8
    assert con.value <= free.value + 1e-6


def test_eof_examples():
    est = Q.eof(qmat.DensityMatrix(np.outer(EPR, EPR), (2, 2)), options=FAST)
    assert est.bound_direction == Q.UPPER_ON_MIN
    assert abs(est.value - 1.0) <= 1e-9
    prod = np.kron([1, 0], [0.6, 0.8])
    assert Q.eof(np.outer(prod, prod), (2, 2), FAST).value <= 1e-9
    werner = 0.8 * np.outer(EPR, EPR) + 0.2 * np.eye(4) / 4
    c = (3 * 0.8 - 1) / 2
    closed = h2((1 + np.sqrt(1 - c * c)) / 2)
    assert abs(wootters_eof(werner) - closed) <= 1e-12
    est = Q.eof(werner, (2, 2), FAST)
    assert abs(est.value - closed) <= 1e-6
    assert np.linalg.norm(est.witness.average() - werner) <= 1e-8
    with pytest.raises(DimensionError):
        Q.eof(werner, options=FAST)


@pytest.mark.parametrize("seed", range(4))
def test_eof_matches_wootters_on_random_two_qubit_states(seed):
    rho = random_rho(4, np.random.default_rng(100 + seed), rank=2)
    est = Q.eof(rho, (2, 2), FAST)
    assert abs(est.value - wootters_eof(rho)) <= 1e-6


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_eof_of_pure_state_is_marginal_entropy(seed):
    v = random_ket(6, np.random.default_rng(seed))
    est = Q.eof(np.outer(v, v.conj()), (2, 3), FAST)
    assert abs(est.value - Q.pure_entanglement(v, (2, 3))) <= 1e-6


def test_pure_entanglement_examples():
    assert abs(Q.pure_entanglement(EPR, (2, 2)) - 1.0) <= 1e-12
    assert Q.pure_entanglement(np.kron([1, 0], [0, 1]), (2, 2)) <= 1e-12
    v = np.array([1, 1, 1, 0]) / np.sqrt(3)
    closed = mp_entropy([(3 + np.sqrt(5)) / 6, (3 - np.sqrt(5)) / 6])
    assert abs(closed - 0.550048) <= 1e-6
    assert abs(Q.pure_entanglement(v, (2, 2)) - closed) <= 1e-12
    with pytest.raises(DimensionError):
        Q.pure_entanglement(v)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), a=st.integers(1, 4), b=st.integers(1, 4))
def test_pure_entanglement_swap_symmetry(seed, a, b):
    v = random_ket(a * b, np.random.default_rng(seed))
    swapped = qmat.permute_factors(v, (a, b), (1, 0))
    assert abs(Q.pure_entanglement(v, (a, b)) - Q.pure_entanglement(swapped, (b, a))) <= 1e-10


def test_marginal_product_ensemble_examples():
    corr = Q.Ensemble([0.5, 0.5], [np.kron([1, 0], [1, 0]), np.kron([0, 1], [0, 1])], (2, 2))
    prod = Q.marginal_product_ensemble(corr)
    assert len(prod) == 4
    np.testing.assert_allclose(prod.probs, 0.25)
    again = Q.marginal_product_ensemble(prod)
    assert len(again) == 4
    np.testing.assert_allclose(again.average(), prod.average(), atol=1e-14)
    np.testing.assert_allclose(again.probs, prod.probs, atol=1e-14)
    with pytest.raises(InvalidStateError):
        Q.marginal_product_ensemble(Q.Ensemble([1.0], [EPR], (2, 2)))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(2, 4))
def test_marginal_product_does_not_lower_first_term(seed, m):
    rng = np.random.default_rng(seed)
    states = np.array([np.kron(random_ket(2, rng), random_ket(2, rng)) for _ in range(m)])
    ens = Q.Ensemble(rng.dirichlet(np.ones(m)), states, (2, 2))
    ch = C.tensor_channels(C.random_channel(2, 2, 2, seed=seed), C.random_channel(2, 2, 2, seed=seed + 1))
    first = qmat.von_neumann_entropy(ch(ens.average()), validate=False)
    prod = Q.marginal_product_ensemble(ens)
    first_prod = qmat.von_neumann_entropy(ch(prod.average()), validate=False)
    assert first_prod >= first - 1e-10
    # the per-state term is unchanged by the replacement
    second = sum(p * Q.output_entropy(ch, v) for p, v in zip(ens.probs, ens.states))
    second_prod = sum(p * Q.output_entropy(ch, v) for p, v in zip(prod.probs, prod.states))
    assert abs(second - second_prod) <= 1e-9


def _quad(s1, s2):
    """sigma1 on A1B1 and sigma2 on A2B2, reordered to A1 A2 B1 B2."""
    m = Q.tensor_bipartite(s1, (2, 2), s2, (2, 2)).matrix
    return qmat.DensityMatrix(m, (2, 2, 2, 2))


def test_strong_superadditivity_examples():
    rng = np.random.default_rng(3)
    v1, v2 = random_ket(4, rng), random_ket(4, rng)
    gap = Q.strong_superadditivity_gap(_quad(np.outer(v1, v1.conj()), np.outer(v2, v2.conj())), options=FAST)
    assert abs(gap.gap) <= 2e-3
    prod = np.kron([1, 0], [0, 1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gap = Q.strong_superadditivity_gap(_quad(np.outer(EPR, EPR), np.outer(prod, prod)), options=FAST)
    assert abs(gap.gap) <= 2e-3
    assert abs(gap.first.value - 1.0) <= 1e-9
    with pytest.raises(DimensionError):
        Q.strong_superadditivity_gap(np.eye(16) / 16, (4, 4))


def test_strong_superadditivity_random_rank_two_sign_is_stable():
    rng = np.random.default_rng(9)
    sigma = qmat.DensityMatrix(random_rho(16, rng, rank=2), (2, 2, 2, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = Q.strong_superadditivity_gap(sigma, options=FAST)
        b = Q.strong_superadditivity_gap(sigma, options=FAST.doubled())
    # doubling restarts can only lower each upper bound
    assert b.whole.value <= a.whole.value + 1e-9
    assert np.sign(round(a.gap, 3)) == np.sign(round(b.gap, 3)) or abs(a.gap - b.gap) <= 2e-3


def test_witnesses_reevaluate_to_value():
    ch = C.random_channel(2, 3, 2, seed=12)
    est = Q.min_output_entropy(ch, FAST)
    assert abs(Q.output_entropy(ch, est.witness) - est.value) <= 1e-9
    est = Q.constrained_chi(ch, options=FAST)
    assert abs(Q.ensemble_holevo(ch, est.witness) - est.value) <= 1e-9
    assert abs(holevo_direct(ch.kraus, est.witness.probs, est.witness.states) - est.value) <= 1e-9
    rho = random_rho(4, np.random.default_rng(1), rank=3)
    est = Q.eof(rho, (2, 2), FAST)
    assert abs(Q.ensemble_entanglement(est.witness) - est.value) <= 1e-9


@pytest.mark.parametrize("seed", [0, 1])
def test_chi_easy_superadditivity(seed):
    n1, n2 = C.random_channel(2, 2, 2, seed=seed), C.random_channel(2, 2, 2, seed=seed + 10)
    c1, c2 = Q.constrained_chi(n1, options=FAST), Q.constrained_chi(n2, options=FAST)
    seed_ens = Q.tensor_ensembles(c1.witness, c2.witness)
    joint = Q.constrained_chi(C.tensor_channels(n1, n2), options=Q.OptimizerOptions(restarts=2, max_iters=400),
                              initial=[seed_ens])
    assert joint.value >= c1.value + c2.value - 1e-6


def test_eof_easy_subadditivity():
    rng = np.random.default_rng(4)
    s1, s2 = random_rho(4, rng, rank=2), random_rho(4, rng, rank=2)
    e1, e2 = Q.eof(s1, (2, 2), FAST), Q.eof(s2, (2, 2), FAST)
    joint = Q.eof(Q.tensor_bipartite(s1, (2, 2), s2, (2, 2)), options=Q.OptimizerOptions(restarts=2, max_iters=400),
                  initial=[Q.tensor_ensembles(e1.witness, e2.witness, bipartite=True)])
    assert joint.value <= e1.value + e2.value + 1e-6


def test_search_is_deterministic_and_monotone_in_restarts():
    ch = C.random_channel(3, 2, 3, seed=21)
    opts = Q.OptimizerOptions(restarts=4, max_iters=300, escalate=False)
    a, b = Q.constrained_chi(ch, options=opts), Q.constrained_chi(ch, options=opts)
    assert a.value == b.value
    np.testing.assert_array_equal(a.witness.states, b.witness.states)
    more = Q.constrained_chi(ch, options=Q.OptimizerOptions(restarts=8, max_iters=300, escalate=False))
    # the first four restarts are shared, so the best can only improve
    assert more.value >= a.value - 1e-12


def test_options_validation_and_doubling():
    with pytest.raises(ValueError):
        Q.OptimizerOptions(restarts=0)
    d = Q.OptimizerOptions().doubled()
    assert (d.restarts, d.max_iters) == (64, 4000)


def test_estimate_and_ensemble_json_roundtrip():
    est = Q.constrained_chi(C.depolarizing_channel(0.3), options=FAST)
    data = est.to_json()
    assert data["bound_direction"] == Q.LOWER_ON_MAX
    back = Q.Ensemble.from_json(data["witness"])
    np.testing.assert_allclose(back.states, est.witness.states)
    np.testing.assert_allclose(back.probs, est.witness.probs)
