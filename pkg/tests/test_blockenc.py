"""Block-encoding algebra tests: the defining inequality, purified
encodings, signed pairs, LCU combination (dense machinery against the
composite shortcut), the Laplacian combinations, and the negative-power
sandwich."""

import math

import numpy as np
import pytest

from qlapeig.blockenc import (BlockEncoding,
                              dilate, encode_barL_unit_norm, encode_calL,
                              encode_W_over_n, estimate_trace_D,
                              identity_mixture_encoding, lcu_combine,
                              make_signed_pair, purified_density_encoding,
                              sandwich_negative_power, verify_block_encoding)
from qlapeig.graph import (GraphError, KernelParams, VertexSet, build_graph,
                           build_taylor_weight_matrix)
from qlapeig.sim import operator_norm_distance
from qlapeig.stateprep import (AmplificationStats, build_degree_state,
                               build_phi_state, hadamard_all)


def unit_vs(rng, n, m):
    x = rng.standard_normal((n, m))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return VertexSet.from_vectors(x)


def general_vs(rng, n, m, lo, hi):
    x = rng.standard_normal((n, m))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x *= rng.uniform(lo, hi, size=(n, 1))
    return VertexSet.from_vectors(x)


# ---------------------------------------------------------------------------
# Definition-1 verification

def test_verify_identity_and_self_encoding():
    be = BlockEncoding(1.0, 0, 0.0, 2, backend="dense", unitary=np.eye(2, dtype=complex))
    measured, ok = verify_block_encoding(be, np.eye(2))
    assert measured == 0.0 and ok
    rng = np.random.default_rng(0)
    u, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
    be = BlockEncoding(1.0, 0, 0.0, 4, backend="dense", unitary=u)
    measured, ok = verify_block_encoding(be, u)
    assert measured < 1e-12 and ok


def test_verify_dimension_mismatch():
    be = BlockEncoding(1.0, 0, 0.0, 2, backend="dense", unitary=np.eye(2, dtype=complex))
    with pytest.raises(Exception):
        verify_block_encoding(be, np.eye(3))


def test_rho3_encoding_parameters():
    """(1, 2 log n, 0)-encoding of I/n."""
    enc = identity_mixture_encoding(4)
    assert enc.alpha == 1.0 and enc.ancillas == 4 and enc.epsilon == 0.0
    measured, ok = verify_block_encoding(enc, np.eye(4) / 4)
    assert measured <= 1e-10 and ok


# ---------------------------------------------------------------------------
# purified-density encodings

def test_purified_pure_state_and_bell():
    g = np.eye(4, dtype=complex)  # prepares |00>
    enc = purified_density_encoding(g, 2, 2)
    measured, ok = verify_block_encoding(enc, np.outer([1, 0], [1, 0]))
    assert measured < 1e-12 and ok
    h = hadamard_all(1)
    cnot = np.eye(4)[[0, 1, 3, 2]].astype(complex)
    bell = cnot @ np.kron(h, np.eye(2))
    enc = purified_density_encoding(bell, 2, 2)
    measured, ok = verify_block_encoding(enc, np.eye(2) / 2)
    assert measured < 1e-12 and ok


def test_purified_phi_encoding_exact():
    rng = np.random.default_rng(1)
    vs = unit_vs(rng, 4, 2)
    kp = KernelParams(0.5, 2)
    phi = build_phi_state(vs, kp)
    enc = purified_density_encoding(phi.unitary, phi.system_dim, phi.ancilla_dim)
    measured, ok = verify_block_encoding(enc, phi.rho0.matrix)
    assert measured <= 1e-10 and ok
    a_t = kp.a_tilde_sum
    wp, _ = build_taylor_weight_matrix(vs, kp, absorbed=True)
    target = (wp + a_t * np.eye(4)) / (4 * a_t)
    assert operator_norm_distance(enc.block(), target) <= 1e-9


def test_purified_vector_backend_matches_dense():
    rng = np.random.default_rng(2)
    vs = unit_vs(rng, 4, 2)
    kp = KernelParams(0.5, 2)
    phi = build_phi_state(vs, kp)
    dense = purified_density_encoding(phi.unitary, phi.system_dim, phi.ancilla_dim)
    pure = purified_density_encoding(phi.purification, phi.system_dim,
                                     phi.ancilla_dim)
    assert np.max(np.abs(dense.block() - pure.block())) < 1e-12


# ---------------------------------------------------------------------------
# signed pairs

def test_pair_single_weight():
    pair = make_signed_pair([1.0], beta=1.0)
    assert pair.b == 1 and pair.measured_epsilon_y() < 1e-12
    c, d = pair.columns()
    assert c[0] == pytest.approx(1.0) and d[0] == pytest.approx(1.0)


def test_pair_signed_recovery_and_padding():
    y = np.array([-0.5, 1.0, 0.5])
    pair = make_signed_pair(y, beta=3.0)
    c, d = pair.columns()
    assert np.max(np.abs(3.0 * np.conj(c[:3]) * d[:3] - y)) < 1e-12
    assert abs(np.conj(c[3]) * d[3]) < 1e-15  # unused slot carries no weight
    assert abs(np.linalg.norm(c) - 1) < 1e-12 and abs(np.linalg.norm(d) - 1) < 1e-12
    # unitarity of the completions
    assert np.max(np.abs(pair.P_L.conj().T @ pair.P_L - np.eye(4))) < 1e-12
    assert np.max(np.abs(pair.P_R.conj().T @ pair.P_R - np.eye(4))) < 1e-12


def test_pair_beta_below_norm_rejected():
    with pytest.raises(GraphError):
        make_signed_pair([1.0, -1.0], beta=1.5)


# ---------------------------------------------------------------------------
# LCU combination

def test_lcu_single_term_returns_input():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((4, 4))
    a *= 0.3 / np.linalg.norm(a, 2)
    enc = dilate(a, 1.0)
    pair = make_signed_pair([1.0], beta=1.0)
    out = lcu_combine(pair, [enc])
    assert out.ancillas == enc.ancillas + 1
    assert operator_norm_distance(out.alpha * out.block(), a) < 1e-12


def test_lcu_convex_identical_terms():
    rng = np.random.default_rng(4)
    a = rng.standard_normal((4, 4))
    a *= 0.3 / np.linalg.norm(a, 2)
    enc1, enc2 = dilate(a, 1.0), dilate(a, 1.0)
    pair = make_signed_pair([0.5, 0.5], beta=1.0)
    out = lcu_combine(pair, [enc1, enc2])
    assert operator_norm_distance(out.alpha * out.block(), a) < 1e-12


def test_lcu_dense_machinery_vs_composite_block():
    """The composite-shortcut block equals the materialized circuit's block."""
    rng = np.random.default_rng(5)
    y = np.array([-0.4, 1.0, 0.3])
    mats = [rng.standard_normal((2, 2)) * 0.3 for _ in range(3)]
    encs = [dilate(a, 1.0) for a in mats]
    pair = make_signed_pair(y, beta=2.5)
    dense = lcu_combine(pair, encs)
    assert dense.backend == "dense"
    forced = [BlockEncoding(1.0, e.ancillas, e.epsilon, e.subject_dim,
                            backend="composite", _block=e.block()) for e in encs]
    comp = lcu_combine(pair, forced)
    assert comp.backend == "composite"
    assert np.max(np.abs(dense.block() - comp.block())) < 1e-12
    target = sum(w * a for w, a in zip(y, mats))
    assert operator_norm_distance(dense.alpha * dense.block(), target) < 1e-12


def test_lcu_parameter_law_under_injected_errors():
    from qlapeig.checks import check_lcu_parameter_law
    assert check_lcu_parameter_law(trials=50, seed=9)["violations"] == 0


def test_lcu_requires_matching_dimensions():
    enc2 = dilate(np.eye(2) * 0.5, 1.0)
    enc4 = dilate(np.eye(4) * 0.5, 1.0)
    pair = make_signed_pair([0.5, 0.5], beta=1.0)
    with pytest.raises(GraphError):
        lcu_combine(pair, [enc2, enc4])


# ---------------------------------------------------------------------------
# the Laplacian combination

def test_calL_two_vertices_closed_form():
    vs = VertexSet.from_vectors([[0.5, 0.1], [0.1, 0.45]])
    kp = KernelParams(0.5, 6)
    res = encode_calL(vs, kp)
    blk = res.encoding.alpha * res.encoding.block()
    assert np.max(np.abs(blk - np.array([[0.5, -0.5], [-0.5, 0.5]]))) < 1e-6
    # sub-unit degrees push c above 1; the combination scale widens with it
    assert not res.combo.in_unit_range
    assert res.encoding.alpha == pytest.approx(1.0 + 2.0 * res.combo.c)


def test_calL_beta_three_in_unit_range():
    rng = np.random.default_rng(14)
    vs = general_vs(rng, 8, 2, 0.4, 0.6)
    kp = KernelParams(0.5, 4)
    res = encode_calL(vs, kp)
    assert res.combo.in_unit_range  # 7 weights per row sum above 1 here
    assert res.encoding.alpha == pytest.approx(3.0)
    assert res.encoding.epsilon == pytest.approx(
        res.pair.epsilon_y + 3.0 * 0.0, abs=1e-9)


def test_calL_regular_graph_uniform_diagonal():
    pts = np.array([[0.5, 0.0], [0.0, 0.5], [-0.5, 0.0], [0.0, -0.5]])
    res = encode_calL(VertexSet.from_vectors(pts), KernelParams(0.5, 8))
    blk = res.encoding.alpha * res.encoding.block()
    assert np.allclose(np.diag(blk).real, 0.25, atol=1e-8)


def test_calL_matches_truncated_laplacian():
    rng = np.random.default_rng(6)
    vs = general_vs(rng, 4, 2, 0.3, 0.5)
    kp = KernelParams(0.5, 6)
    res = encode_calL(vs, kp)
    gm = build_graph(vs, kp, truncated=True)
    blk = res.encoding.alpha * res.encoding.block()
    assert operator_norm_distance(blk, gm.L / gm.trace_D) <= 1e-5
    assert np.max(np.abs(blk @ np.ones(4))) <= 1e-5
    assert res.encoding.ancillas == res.combo.l + 2


def test_calL_classical_trace_mode():
    rng = np.random.default_rng(7)
    vs = general_vs(rng, 4, 2, 0.3, 0.5)
    kp = KernelParams(0.5, 6)
    gm = build_graph(vs, kp)
    res = encode_calL(vs, kp, trace_D_estimate=float(np.trace(gm.D)))
    blk = res.encoding.alpha * res.encoding.block()
    assert operator_norm_distance(blk, gm.L / gm.trace_D) <= 1e-5


# ---------------------------------------------------------------------------
# the unit-norm combination

def test_barL_component_identity():
    """d rho0 - e rho3 carries exactly W_p / Tr(D)."""
    rng = np.random.default_rng(8)
    vs = unit_vs(rng, 4, 2)
    kp = KernelParams(0.25, 6)
    res = encode_barL_unit_norm(vs, kp)
    rho0 = res.components["rho_weight"].block()
    rho3 = np.eye(4) / 4
    d_c, e_c = res.combo.d_coef, res.combo.e_coef
    wp, _ = build_taylor_weight_matrix(vs, kp, absorbed=True)
    lhs = d_c * rho0 - e_c * rho3
    assert operator_norm_distance(lhs, wp / res.trace_D) < 1e-9


def test_barL_agrees_with_calL_and_unit_trace():
    rng = np.random.default_rng(9)
    vs = unit_vs(rng, 4, 2)
    kp = KernelParams(0.25, 6)
    a = encode_calL(vs, kp, norm_case="unit")
    b = encode_barL_unit_norm(vs, kp)
    dist = operator_norm_distance(a.encoding.alpha * a.encoding.block(),
                                  b.encoding.alpha * b.encoding.block())
    assert dist <= 1e-5
    blk = b.encoding.alpha * b.encoding.block()
    assert np.trace(blk).real == pytest.approx(1.0, abs=1e-5)


# ---------------------------------------------------------------------------
# W/n

def test_W_over_n_unit_norm_exact():
    rng = np.random.default_rng(10)
    vs = unit_vs(rng, 4, 2)
    kp = KernelParams(0.5, 4)
    res = encode_W_over_n(vs, kp, "unit")
    gm = build_graph(vs, kp, truncated=True)
    blk = res.encoding.alpha * res.encoding.block()
    assert operator_norm_distance(blk, gm.W_p / 4) < 1e-10
    off = blk[~np.eye(4, dtype=bool)]
    assert np.all(off.real > 0)  # Gaussian weights never vanish
    assert np.max(np.abs(blk - blk.T.conj())) < 1e-10


def test_W_over_n_general_norm_diagonal_gap():
    vs = VertexSet.from_vectors([[0.8, 0.0], [0.0, 1.2]])
    kp = KernelParams(0.5, 2)
    res = encode_W_over_n(vs, kp, "general")
    blk = res.encoding.alpha * res.encoding.block()
    wp, diag = build_taylor_weight_matrix(vs, kp)
    psi = res.components["weight_build"]
    ups = psi.stats.Upsilon
    # scalar evaluation: off-diagonal w12/Upsilon, diagonal t_i/Upsilon - 1/n
    assert blk[0, 1].real == pytest.approx(wp[0, 1] / ups, abs=1e-9)
    for i in range(2):
        gap = diag[i] / ups - 0.5
        assert blk[i, i].real == pytest.approx(gap, abs=1e-9)


# ---------------------------------------------------------------------------
# trace estimation

def test_trace_estimate_two_vertices():
    vs = VertexSet.from_vectors([[0.6, 0.0], [0.0, 0.8]])
    kp = KernelParams(0.5, 4)
    deg = build_degree_state(vs, kp)
    w12 = math.exp(-0.5 * (0.36 + 0.64))
    est = estimate_trace_D(deg.stats, 2)
    assert est == pytest.approx(2 * w12, abs=1e-8)


def test_trace_estimate_regular_and_random():
    pts = np.array([[0.5, 0.0], [0.0, 0.5], [-0.5, 0.0], [0.0, -0.5]])
    vs = VertexSet.from_vectors(pts)
    kp = KernelParams(0.5, 4)
    deg = build_degree_state(vs, kp)
    # regular graph: p0 equals the mean weight
    w = build_graph(vs, kp).W
    assert deg.stats.p0 == pytest.approx(w.sum() / 12, abs=1e-10)
    rng = np.random.default_rng(11)
    vs = general_vs(rng, 4, 2, 0.5, 1.0)
    deg = build_degree_state(vs, kp)
    gm = build_graph(vs, kp)
    rel = abs(estimate_trace_D(deg.stats, 4) - gm.trace_D) / gm.trace_D
    assert rel <= 1e-6


def test_trace_estimate_requires_p0():
    with pytest.raises(GraphError):
        estimate_trace_D(AmplificationStats(), 4)


# ---------------------------------------------------------------------------
# negative-power sandwich

def test_sandwich_two_vertices_closed_form():
    vs = VertexSet.from_vectors([[0.5, 0.1], [0.1, 0.45]])
    kp = KernelParams(0.5, 6)
    res = encode_calL(vs, kp)
    enc, params = sandwich_negative_power(res.components["rho2"], res.encoding)
    blk = enc.alpha * enc.block()
    assert np.max(np.abs(blk - np.array([[1.0, -1.0], [-1.0, 1.0]]))) < 1e-6


def test_sandwich_regular_graph_scaling():
    pts = np.array([[0.5, 0.0], [0.0, 0.5], [-0.5, 0.0], [0.0, -0.5]])
    vs = VertexSet.from_vectors(pts)
    kp = KernelParams(0.5, 8)
    res = encode_calL(vs, kp)
    enc, params = sandwich_negative_power(res.components["rho2"], res.encoding)
    cal = res.encoding.alpha * res.encoding.block()
    blk = enc.alpha * enc.block()
    assert operator_norm_distance(blk, 4 * cal) < 1e-8  # rho2 = I/4


def test_sandwich_alpha_law_and_verification():
    rng = np.random.default_rng(12)
    vs = general_vs(rng, 4, 2, 0.3, 0.5)
    kp = KernelParams(0.5, 6)
    res = encode_calL(vs, kp)
    enc, params = sandwich_negative_power(res.components["rho2"], res.encoding,
                                          varsigma1=1e-3)
    assert enc.alpha == pytest.approx(
        4.0 * params.kappa * res.encoding.alpha)  # kappa^{2c} with c = 1/2
    gm = build_graph(vs, kp, truncated=True)
    measured = operator_norm_distance(enc.alpha * enc.block(), gm.L_s)
    assert measured <= enc.epsilon
    assert measured <= 1e-6
    assert params.zeta1 > 0 and params.kappa >= 2


def test_sandwich_spectral_window_violation():
    res_enc = BlockEncoding(1.0, 1, 0.0, 2, backend="composite",
                            _block=np.diag([1.0, 1e-9]))
    other = BlockEncoding(1.0, 1, 0.0, 2, backend="composite",
                          _block=np.eye(2) * 0.4)
    with pytest.raises(GraphError):
        sandwich_negative_power(res_enc, other, kappa=2.0)


# ---------------------------------------------------------------------------
# dilation

def test_dilate_roundtrip():
    rng = np.random.default_rng(13)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    a *= 0.3 / np.linalg.norm(a, 2)
    enc = dilate(a, 2.0)
    assert enc.ancillas == 1
    measured, ok = verify_block_encoding(enc, a)
    assert measured < 1e-10 and ok
