"""Preparation of the purification states that carry the weight and degree
matrices.

Three pipelines:

* ``build_phi_state``    -- unit-norm vertices; coefficient ladder plus
  repeated amplitude-encoding queries; reduced state (W_p + a~ I)/(n a~).
* ``build_psi_state``    -- general norms; norm queries, fixed-point powers,
  the exp(-lam x) gate, a scaled rotation, exact-count amplitude
  amplification, then the amplitude-encoding ladder.
* ``build_degree_state`` -- the eleven-step degree pipeline: distance
  estimation, kernel gate, two rotation/amplification rounds, ending in a
  diagonal reduced state proportional to the degree matrix.

QRAM-style oracles are simulated exactly from the classical data, with an
optional injected per-vector perturbation for the error-budget suites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arith import (ArithmeticError_, exp_neg_lambda_label, multiply_labels,
                    rotation_matrix)
from .graph import (DegenerateGraphError, GraphError, KernelParams,
                    VertexSet)
from .sim import (DensityOperator, FixedPointSpec, Register, RegisterLayout,
                  SimError, SimState, partial_trace)

__all__ = [
    "QramOracle",
    "AmplificationStats",
    "ErrorBudget",
    "EstimatorConfig",
    "PrepConfig",
    "PhiBuild",
    "PsiBuild",
    "DegreeBuild",
    "prepare_coefficient_state",
    "coefficient_unitary",
    "completion_unitary",
    "hadamard_all",
    "sphere_perturb",
    "apply_R_U",
    "build_phi_state",
    "build_psi_state",
    "build_degree_state",
    "distance_estimation",
    "inner_product_estimation",
    "amplitude_amplification",
]


# ---------------------------------------------------------------------------
# small vector helpers

def completion_unitary(first_column: np.ndarray) -> np.ndarray:
    """Any unitary whose first column is the given unit vector.

    Householder reflection after rotating the leading entry onto the real
    axis, so complex columns are handled too.
    """
    v = np.asarray(first_column, dtype=complex)
    dim = len(v)
    if abs(np.linalg.norm(v) - 1.0) > 1e-10:
        raise SimError("state-preparation column must be unit norm")
    phase = 1.0 + 0.0j
    if abs(v[0]) > 1e-14:
        phase = v[0] / abs(v[0])
    vr = np.conj(phase) * v
    e0 = np.zeros(dim, dtype=complex)
    e0[0] = 1.0
    w = vr - e0
    wn = np.linalg.norm(w)
    if wn < 1e-14:
        u = phase * np.eye(dim, dtype=complex)
    else:
        w = w / wn
        u = phase * (np.eye(dim, dtype=complex) - 2.0 * np.outer(w, w.conj()))
    if np.max(np.abs(u[:, 0] - v)) > 1e-10:
        raise SimError("state-preparation completion failed")
    return u


def hadamard_all(qubits: int) -> np.ndarray:
    """H tensor power; maps |0...0> to the uniform superposition."""
    h = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0)
    out = np.array([[1.0]], dtype=complex)
    for _ in range(qubits):
        out = np.kron(out, h)
    return out


def sphere_perturb(vec: np.ndarray, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vector at exact chordal distance eps from ``vec`` (0 <= eps <= 2)."""
    if eps <= 0:
        return np.array(vec, dtype=float)
    v = np.asarray(vec, dtype=float)
    v = v / np.linalg.norm(v)
    g = rng.standard_normal(len(v))
    g = g - np.dot(g, v) * v
    gn = np.linalg.norm(g)
    if gn < 1e-14:
        g = np.roll(v, 1) - np.dot(np.roll(v, 1), v) * v
        gn = np.linalg.norm(g)
    u = g / gn
    angle = 2.0 * math.asin(min(1.0, eps / 2.0))
    return math.cos(angle) * v + math.sin(angle) * u


def _stable_rng(seed, *key: int) -> np.random.Generator:
    ints = [abs(int(seed)) if seed is not None else 0] + [abs(int(k)) for k in key]
    return np.random.default_rng(np.random.SeedSequence(ints))


# ---------------------------------------------------------------------------
# data carriers

@dataclass
class QramOracle:
    """Simulated QRAM access to the vertex data.

    ``unitary_matrix`` realizes |i>|0> -> |i>|x_i> as a dense block unitary on
    the (index, data) registers.  ``norm_label`` is the norm query on a
    fixed-point register.  ``eps_x > 0`` replaces each amplitude-encoded
    vector by one at exact chordal distance eps_x, for the bound suites.
    """

    data: VertexSet
    eps_x: float = 0.0
    seed: int | None = None
    encoded: np.ndarray = field(init=False)

    def __post_init__(self):
        rng = _stable_rng(self.seed, 0xE)
        vecs = []
        for i in range(self.data.n):
            x = self.data.vertices[i]
            nrm = self.data.norms[i]
            if nrm <= 0:
                amp = np.zeros(self.data.m)
                amp[0] = 1.0  # padding vertices encode |0>
            else:
                amp = x / nrm
            if self.eps_x > 0:
                amp = sphere_perturb(amp, self.eps_x, rng)
            vecs.append(amp)
        self.encoded = np.array(vecs)

    def unitary_matrix(self) -> np.ndarray:
        n, m = self.data.n, self.data.m
        u = np.zeros((n * m, n * m), dtype=complex)
        for i in range(n):
            u[i * m:(i + 1) * m, i * m:(i + 1) * m] = completion_unitary(
                self.encoded[i].astype(complex))
        return u

    def norm_label(self, i: int, spec: FixedPointSpec) -> int:
        return spec.encode(float(self.data.norms[i]))


@dataclass
class AmplificationStats:
    initial_amplitude: float = 0.0
    iterations: int = 0
    residual: float = 0.0
    Upsilon: float | None = None
    tau: float | None = None
    p0: float | None = None
    r: float | None = None


@dataclass
class ErrorBudget:
    """Component precisions and the derived state-error budget values."""

    eps_x: float = 0.0
    eps_a: float = 0.0
    eps_a_tilde: float = 0.0
    eps_d: float = 0.0
    delta1: float = 0.05
    delta2: float = 0.05
    eps_y: float = 0.0
    eps_l: float = 0.0
    eps: float = 0.0

    def eps0(self, n: int, p: int) -> float:
        return math.sqrt(n) * p * p * self.eps_x

    def eps1(self, n: int, p: int, a_sum: float, max_norm: float) -> float:
        return math.sqrt(a_sum * n) * p * p * max_norm ** p * self.eps_x

    def eps2(self, lam: float, r: float) -> float:
        return lam * self.eps_d / (2.0 * math.sqrt(r))


@dataclass
class EstimatorConfig:
    """Distance / inner-product estimator behaviour.

    exact mode writes the true value (up to the fixed-point grid); noisy mode
    adds seeded uniform noise of width eps, and with probability 2*delta the
    estimate fails (error lands in (eps, 3eps]).
    """

    mode: str = "exact"
    eps_d: float = 1e-6
    delta1: float = 0.05
    delta2: float = 0.05
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in ("exact", "noisy"):
            raise GraphError(f"unknown estimator mode {self.mode!r}")
        if self.eps_d <= 0:
            raise GraphError("estimator precision must be positive")

    def perturb(self, true_value: float, eps: float, delta: float, key) -> float:
        """Noisy estimate.  The success probability is 1 - delta, strictly
        better than the 1 - 2*delta the estimation primitive guarantees (as a
        median-amplified estimator would be), so the advertised success
        fraction holds with margin under finite sampling."""
        if self.mode == "exact":
            return true_value
        rng = _stable_rng(self.seed, *key)
        if rng.random() < delta:
            err = rng.uniform(eps, 3.0 * eps) * (1.0 if rng.random() < 0.5 else -1.0)
        else:
            err = rng.uniform(-eps, eps)
        return max(0.0, true_value + err)


@dataclass
class PrepConfig:
    """Widths and gate orders for the arithmetic stages."""

    bits: int = 44
    exp_order: int = 24
    coeff_eps: float = 0.0   # injected coefficient-state error
    seed: int | None = None


# ---------------------------------------------------------------------------
# coefficient ladder

def coefficient_unitary(coeffs, dim: int, eps: float = 0.0,
                        rng: np.random.Generator | None = None) -> np.ndarray:
    """Unitary preparing sum_k sqrt(c_k / sum c)|k> on a dim-slot register."""
    c = np.asarray(coeffs, dtype=float)
    if np.any(c < 0):
        raise GraphError("coefficients must be nonnegative")
    tot = c.sum()
    if tot <= 0:
        raise GraphError("coefficients must not all vanish")
    amps = np.zeros(dim)
    amps[: len(c)] = np.sqrt(c / tot)
    if eps > 0:
        amps = sphere_perturb(amps, eps, rng or np.random.default_rng())
    return completion_unitary(amps.astype(complex))


def prepare_coefficient_state(coeffs, precision: float = 0.0, seed=None) -> SimState:
    """Standalone state sum_k sqrt(c_k)|k> over one register."""
    c = np.asarray(coeffs, dtype=float)
    width = max(1, (len(c) - 1).bit_length())
    layout = RegisterLayout([Register("coeff", width, "coefficient")])
    state = SimState(layout)
    u = coefficient_unitary(c, 1 << width, precision, _stable_rng(seed, 0xC))
    state.apply_dense(u, ["coeff"])
    return state


def _coeff_width(p: int) -> int:
    return max(1, (p).bit_length()) if p > 0 else 1


def _desk_scale_guard(cells: int, branches: int, what: str):
    # keep worst-case working memory for the branch set under ~0.5 GB
    if cells * branches > (1 << 25):
        raise GraphError(
            f"{what}: instance needs {cells} dense amplitudes across up to "
            f"{branches} branches, beyond the desk-scale budget; lower the "
            "truncation order or the vertex count")


# ---------------------------------------------------------------------------
# the controlled amplitude-encoding ladder

def apply_R_U(state: SimState, index_reg: str, coeff_reg: str, data_regs,
              oracle_U: QramOracle) -> SimState:
    """Coefficient-controlled ladder: branch |k> loads the amplitude-encoded
    vector into the last k data blocks; the first p-k blocks stay |0>."""
    data_regs = list(data_regs)
    p = len(data_regs)
    lay = state.layout
    for reg in data_regs:
        axis = lay.dense_axis[reg]
        for vec in state.branches.values():
            moved = np.moveaxis(vec, axis, 0)
            if np.max(np.abs(moved[1:])) > 1e-12:
                raise SimError("data register not zeroed before the ladder")
    u = oracle_U.unitary_matrix()
    for k in range(1, p + 1):
        for reg in data_regs[p - k:]:
            state.apply_dense(u, [index_reg, reg], controls={coeff_reg: k})
    return state


def _r_u_matrix(n: int, m: int, p: int, cdim: int, u_block: np.ndarray) -> np.ndarray:
    """Dense matrix of the ladder on idx (x) coeff (x) data^p."""
    sub = n * m ** p
    ops = []
    for k in range(cdim):
        op = np.eye(sub, dtype=complex)
        for j in range(p - min(k, p), p):
            op = _u_on_block(n, m, p, j, u_block) @ op
        ops.append(op)
    dims = (n, cdim, m ** p)
    out = np.zeros((n * cdim * m ** p,) * 2, dtype=complex)
    for k in range(cdim):
        opk = ops[k].reshape(n, m ** p, n, m ** p)
        for i1 in range(n):
            for i0 in range(n):
                r0 = (i1 * cdim + k) * m ** p
                c0 = (i0 * cdim + k) * m ** p
                out[r0:r0 + m ** p, c0:c0 + m ** p] = opk[i1, :, i0, :]
    return out


def _u_on_block(n: int, m: int, p: int, j: int, u_block: np.ndarray) -> np.ndarray:
    """The QRAM query acting on (index, data block j) inside idx (x) data^p."""
    dims = [n] + [m] * p
    tot = n * m ** p
    op = np.zeros((tot, tot), dtype=complex)
    ub = u_block.reshape(n, m, n, m)
    for idx_in in np.ndindex(*dims):
        col = np.ravel_multi_index(idx_in, dims)
        i_in, b_in = idx_in[0], idx_in[1 + j]
        for i_out in range(n):
            for b_out in range(m):
                amp = ub[i_out, b_out, i_in, b_in]
                if amp == 0:
                    continue
                idx_out = list(idx_in)
                idx_out[0], idx_out[1 + j] = i_out, b_out
                op[np.ravel_multi_index(tuple(idx_out), dims), col] += amp
    return op


# ---------------------------------------------------------------------------
# amplitude amplification

def amplitude_amplification(state: SimState, good_predicate, known_amplitude: float):
    """Exact-count Grover amplification toward a flagged subspace.

    Runs floor(pi/(4 theta)) rotations, taking one more only when that
    improves the flagged weight, then post-selects the residual bad weight
    away and records it.  The amplitude is always known exactly in simulation.
    """
    if known_amplitude <= 1e-15:
        raise SimError("cannot amplify a zero amplitude")
    stats = AmplificationStats(initial_amplitude=known_amplitude)
    if known_amplitude >= 1.0 - 1e-12:
        return state, stats
    theta = math.asin(math.sqrt(known_amplitude))
    k = int(math.floor(math.pi / (4.0 * theta)))
    amp_k = math.sin((2 * k + 1) * theta) ** 2
    amp_k1 = math.sin((2 * k + 3) * theta) ** 2
    iters = k + 1 if amp_k1 > amp_k else k
    start = state.copy()
    masks = {}

    def mask_for(labels):
        if labels not in masks:
            masks[labels] = state.predicate_mask(good_predicate, labels)
        return masks[labels]

    for _ in range(iters):
        for labels in list(state.branches):
            m = mask_for(labels)
            state.branches[labels] = np.where(m, -state.branches[labels],
                                              state.branches[labels])
        state.reflect_about(start)
    good_weight = 0.0
    for labels, vec in state.branches.items():
        masked = np.where(mask_for(labels), vec, 0.0)
        good_weight += float(np.vdot(masked, masked).real)
    stats.iterations = iters
    stats.residual = max(0.0, 1.0 - good_weight)
    root = math.sqrt(good_weight)
    if good_weight <= 0:
        raise SimError("amplification annihilated the flagged subspace")
    for labels in list(state.branches):
        state.branches[labels] = np.where(mask_for(labels),
                                          state.branches[labels] / root, 0.0)
    state.prune()
    return state, stats


# ---------------------------------------------------------------------------
# |Phi>: unit-norm weight-state pipeline

@dataclass
class PhiBuild:
    state: SimState
    rho0: DensityOperator
    unitary: np.ndarray | None   # the full preparation G0 (small instances)
    purification: np.ndarray
    layout: RegisterLayout
    system_dim: int
    ancilla_dim: int
    ancilla_qubits: int


def build_phi_state(vs: VertexSet, kp: KernelParams, prep: PrepConfig | None = None,
                    oracle: QramOracle | None = None) -> PhiBuild:
    """Unit-norm pipeline giving |Phi> with rho0 = (W_p + a~ I)/(n a~)."""
    prep = prep or PrepConfig()
    if vs.padded:
        raise GraphError("pipelines require power-of-two inputs without padding")
    if not vs.unit_norms(1e-10) and (oracle is None or oracle.eps_x == 0):
        raise GraphError("vertices must have unit norm; use build_psi_state instead")
    oracle = oracle or QramOracle(vs)
    p = kp.p
    log_n = vs.n.bit_length() - 1
    log_m = vs.m.bit_length() - 1
    cwidth = _coeff_width(p)
    cdim = 1 << cwidth
    _desk_scale_guard(vs.n * cdim * vs.m ** p, 1, "weight-state ladder")
    regs = [Register("idx", log_n, "index"), Register("coeff", cwidth, "coefficient")]
    data = [f"data{j}" for j in range(p)]
    regs += [Register(nm, log_m, "index") for nm in data]
    layout = RegisterLayout(regs)
    state = SimState(layout)

    h_n = hadamard_all(log_n)
    cu = coefficient_unitary(kp.coeffs_a_tilde, cdim, prep.coeff_eps,
                             _stable_rng(prep.seed, 0xA))
    state.apply_dense(h_n, ["idx"])
    state.apply_dense(cu, ["coeff"])
    apply_R_U(state, "idx", "coeff", data, oracle)

    rho0 = partial_trace(state, ["idx"]).validate()

    mp = vs.m ** p
    g0 = None
    if vs.n * cdim * mp <= 2048:
        g0 = np.kron(np.kron(h_n, np.eye(cdim)), np.eye(mp))
        g0 = np.kron(np.kron(np.eye(vs.n), cu), np.eye(mp)) @ g0
        g0 = _r_u_matrix(vs.n, vs.m, p, cdim, oracle.unitary_matrix()) @ g0
    anc_dim = cdim * mp
    pur = state.dense_vector()
    return PhiBuild(state, rho0, g0, pur, layout, vs.n, anc_dim,
                    cwidth + p * log_m + log_n)


# ---------------------------------------------------------------------------
# |Psi>: general-norm weight-state pipeline

@dataclass
class PsiBuild:
    state: SimState
    rho1: DensityOperator
    stats: AmplificationStats
    purification: np.ndarray     # vector over system (x) ancilla
    system_dim: int
    ancilla_dim: int
    ancilla_qubits: int
    fx_values: np.ndarray        # fixed-point v_ik actually rotated in
    rotation_scale: float


def build_psi_state(vs: VertexSet, kp: KernelParams, prep: PrepConfig | None = None,
                    oracle_U: QramOracle | None = None,
                    oracle_O: QramOracle | None = None) -> PsiBuild:
    """General-norm pipeline; reduced state carries (W_p + I_eff)/Upsilon."""
    prep = prep or PrepConfig()
    if vs.padded:
        raise GraphError("pipelines require power-of-two inputs without padding")
    if vs.n < 2:
        raise GraphError("need at least two vertices")
    if np.any(vs.norms <= 0):
        raise GraphError("vertex norms must be positive")
    oracle_U = oracle_U or QramOracle(vs)
    oracle_O = oracle_O or QramOracle(vs)
    p = kp.p
    n, m = vs.n, vs.m
    log_n = n.bit_length() - 1
    log_m = m.bit_length() - 1
    cwidth = _coeff_width(p)
    cdim = 1 << cwidth
    _desk_scale_guard(n * cdim * 2 * m ** p, n * (p + 1),
                      "general-norm weight pipeline")
    max_norm = float(np.max(vs.norms))
    # registers hold ||x||^k, ||x||^2 and exp(..)*||x||^k; size the integer part
    need = max(max_norm ** max(p, 1), max_norm ** 2, 1.0)
    int_bits = max(1, int(math.floor(math.log2(need))) + 2)
    spec = FixedPointSpec(prep.bits, int_bits)

    regs = [Register("idx", log_n, "index"), Register("coeff", cwidth, "coefficient"),
            Register("pw", spec.bits, "arithmetic", spec),
            Register("sq", spec.bits, "arithmetic", spec),
            Register("ex", spec.bits, "arithmetic", spec),
            Register("rot", 1, "flag")]
    data = [f"data{j}" for j in range(p)]
    regs += [Register(nm, log_m, "index") for nm in data]
    layout = RegisterLayout(regs)
    state = SimState(layout)

    # (1) uniform index, coefficient ladder
    state.apply_dense(hadamard_all(log_n), ["idx"])
    state.apply_dense(coefficient_unitary(kp.coeffs_a, cdim, prep.coeff_eps,
                                          _stable_rng(prep.seed, 0xB)), ["coeff"])

    norm_label = {i: oracle_O.norm_label(i, spec) for i in range(n)}
    pw_slot, sq_slot, ex_slot = (layout.arith_slot[r] for r in ("pw", "sq", "ex"))
    one = spec.encode(1.0)

    # (2)-(3) norm queries, then ||x||^k by sequential rounded products
    def powers(dense, labels):
        i, k = dense
        out = list(labels)
        if out[pw_slot] or out[sq_slot]:
            raise ArithmeticError_("arithmetic registers not zeroed")
        lab = one
        for _ in range(min(k, p)):
            lab = multiply_labels(lab, norm_label[i], spec, spec, spec)
        out[pw_slot] = lab
        out[sq_slot] = multiply_labels(norm_label[i], norm_label[i], spec, spec, spec)
        return out

    state.apply_label_map(powers, dense_controls=("idx", "coeff"))

    # (4) kernel gate on the squared norm; input uncomputed via the oracle
    def kernel(dense, labels):
        out = list(labels)
        out[ex_slot] = exp_neg_lambda_label(out[sq_slot], spec, spec,
                                            kp.lam, prep.exp_order)
        out[sq_slot] = 0
        return out

    state.apply_label_map(kernel, dense_controls=("idx",))

    # (5) v = exp(-lam||x||^2) * ||x||^k, then drop the power register
    fx_values = np.zeros((n, p + 1))

    def combine(dense, labels):
        i, k = dense
        out = list(labels)
        v = multiply_labels(out[ex_slot], out[pw_slot], spec, spec, spec)
        if k <= p:
            fx_values[i, k] = spec.decode(v)
        out[ex_slot] = v
        out[pw_slot] = 0
        return out

    state.apply_label_map(combine, dense_controls=("idx", "coeff"))

    # (6) scaled rotation; the scale is the classical maximum over i and k
    scale = float(max(math.exp(-kp.lam * vs.norms[i] ** 2) * vs.norms[i] ** k
                      for i in range(n) for k in range(p + 1)))

    # the p+2 rounded products may push a value a few steps past the real
    # maximum; the guard below only needs to catch a miscomputed scale
    slack = (p + 4) * (1 << spec.int_bits) * spec.resolution / scale

    def rot(labels):
        ratio = spec.decode(labels[ex_slot]) / scale
        if ratio > 1.0 + slack:
            raise ArithmeticError_("rotation scale C was miscomputed")
        return rotation_matrix(min(ratio, 1.0))

    state.apply_branch_dense(rot, ["rot"])

    def clear_ex(dense, labels):
        out = list(labels)
        out[ex_slot] = 0
        return out

    state.apply_label_map(clear_ex, dense_controls=("idx", "coeff"))

    # (7) amplify the rot=|0> branch; amplitude known from the state
    rot_axis = layout.dense_axis["rot"]
    amp = 0.0
    for vec in state.branches.values():
        moved = np.moveaxis(vec, rot_axis, 0)
        amp += float(np.vdot(moved[0], moved[0]).real)
    state, stats = amplitude_amplification(
        state, lambda idx, lab: idx[rot_axis] == 0, amp)

    # (8) amplitude-encoding ladder into the data blocks
    apply_R_U(state, "idx", "coeff", data, oracle_U)

    rho1 = partial_trace(state, ["idx"]).validate()

    # Upsilon from the pre-amplification flag amplitude: amp = Upsilon/(n a C^2)
    stats.Upsilon = n * kp.a_sum * scale * scale * amp

    vec = _dense_over(state, ["idx", "coeff", "rot"] + data)
    anc_dim = vec.size // n
    anc_qubits = cwidth + 1 + p * log_m + log_n
    return PsiBuild(state, rho1, stats, vec, n, anc_dim, anc_qubits,
                    fx_values, scale)


def _dense_over(state: SimState, regs) -> np.ndarray:
    """Flatten the label-free state over the listed dense registers, checking
    that every remaining register sits in |0...0>."""
    if len(state.branches) != 1:
        raise SimError("state still carries nonzero arithmetic labels")
    labels, vec = next(iter(state.branches.items()))
    if any(labels):
        raise SimError("arithmetic registers not uncomputed")
    lay = state.layout
    axes = [lay.dense_axis[r] for r in regs]
    moved = np.moveaxis(vec, axes, range(len(axes)))
    flat = moved.reshape(int(np.prod([vec.shape[a] for a in axes])), -1)
    if flat.shape[1] > 1 and np.max(np.abs(flat[:, 1:])) > 1e-10:
        raise SimError("registers outside the purification are not |0>")
    return flat[:, 0].copy()


# ---------------------------------------------------------------------------
# distance / inner-product estimators

def distance_estimation(state: SimState, i_reg: str, j_reg: str, out_reg: str,
                        oracle_U: QramOracle, oracle_O: QramOracle,
                        est: EstimatorConfig) -> SimState:
    """|i>|j>|0> -> |i>|j>| ||x_i-x_j||^2 > on the fixed-point grid."""
    lay = state.layout
    spec = lay.spec(out_reg)
    slot = lay.arith_slot[out_reg]
    x = oracle_U.data.vertices

    def fn(dense, labels):
        i, j = dense
        out = list(labels)
        if out[slot]:
            raise ArithmeticError_("distance register must be zeroed")
        true = float(np.sum((x[i] - x[j]) ** 2))
        out[slot] = spec.encode(est.perturb(true, est.eps_d, est.delta1, (1, i, j)))
        return out

    state.apply_label_map(fn, dense_controls=(i_reg, j_reg))
    return state


def inner_product_estimation(state: SimState, i_reg: str, out_reg: str,
                             values: dict, est: EstimatorConfig,
                             eps: float) -> SimState:
    """Write the per-index inner product <phi_i|psi_i> into the output
    register with estimator noise of width ``eps``."""
    lay = state.layout
    spec = lay.spec(out_reg)
    slot = lay.arith_slot[out_reg]

    def fn(dense, labels):
        (i,) = dense
        out = list(labels)
        if out[slot]:
            raise ArithmeticError_("inner-product register must be zeroed")
        val = est.perturb(values[i], eps, est.delta2, (2, i))
        out[slot] = spec.encode(min(val, 1.0))
        return out

    state.apply_label_map(fn, dense_controls=(i_reg,))
    return state


# ---------------------------------------------------------------------------
# degree pipeline

@dataclass
class DegreeBuild:
    state: SimState
    rho2: DensityOperator
    stats: AmplificationStats
    purification: np.ndarray
    system_dim: int
    ancilla_dim: int
    ancilla_qubits: int
    degree_estimates: np.ndarray
    trace_estimate: float


def build_degree_state(vs: VertexSet, kp: KernelParams,
                       est: EstimatorConfig | None = None,
                       prep: PrepConfig | None = None) -> DegreeBuild:
    """Eleven-step degree pipeline ending in rho2 = D / Tr(D)."""
    est = est or EstimatorConfig()
    prep = prep or PrepConfig()
    if vs.padded:
        raise GraphError("pipelines require power-of-two inputs without padding")
    if vs.n < 2:
        raise GraphError("need at least two vertices")
    n = vs.n
    log_n = n.bit_length() - 1
    diffs = vs.vertices[:, None, :] - vs.vertices[None, :, :]
    dist_need = float(np.max(np.sum(diffs * diffs, axis=2)))
    int_bits = max(1, int(math.floor(math.log2(max(dist_need, 1.0)))) + 2)
    spec_d = FixedPointSpec(prep.bits, int_bits)
    spec_u = FixedPointSpec(prep.bits, 1)
    _desk_scale_guard(4 * n ** 3, n * n, "degree pipeline")
    regs = [
        Register("flag", 1, "flag"),
        Register("i", log_n, "index"),
        Register("j", log_n, "index"),
        Register("dist", spec_d.bits, "arithmetic", spec_d),
        Register("wv", spec_u.bits, "arithmetic", spec_u),
        Register("rot", 1, "flag"),
        Register("ip", spec_u.bits, "arithmetic", spec_u),
        Register("copy", log_n, "index"),
    ]
    layout = RegisterLayout(regs)
    state = SimState(layout)
    oracle_U, oracle_O = QramOracle(vs), QramOracle(vs)

    # (1) uniform superposition over ordered pairs
    h = hadamard_all(log_n)
    state.apply_dense(h, ["i"])
    state.apply_dense(h, ["j"])

    # (2) squared distances
    distance_estimation(state, "i", "j", "dist", oracle_U, oracle_O, est)

    # (3) kernel gate into wv; the distance register is uncomputed
    d_slot = layout.arith_slot["dist"]
    w_slot = layout.arith_slot["wv"]
    ip_slot = layout.arith_slot["ip"]
    w_fx = {}

    def kernel(dense, labels):
        i, j = dense
        out = list(labels)
        if out[w_slot]:
            raise ArithmeticError_("kernel register must be zeroed")
        lab = exp_neg_lambda_label(out[d_slot], spec_d, spec_u, kp.lam, prep.exp_order)
        w_fx[(i, j)] = spec_u.decode(lab)
        out[w_slot] = lab
        out[d_slot] = 0
        return out

    state.apply_label_map(kernel, dense_controls=("i", "j"))
    if min(w for (i, j), w in w_fx.items() if i != j) <= 0.0:
        raise DegenerateGraphError(
            "a pairwise weight underflowed to zero; the disconnected limit "
            "breaks the amplification cost bound")

    # (4) amplify away the diagonal i = j (kernel value 1 instead of 0 there)
    i_ax, j_ax = layout.dense_axis["i"], layout.dense_axis["j"]
    state, stats4 = amplitude_amplification(
        state, lambda idx, lab: idx[i_ax] != idx[j_ax], (n * n - n) / (n * n))

    # (5) flag superposition
    state.apply_dense(hadamard_all(1), ["flag"])

    # (6) rotate by w_ij on the flag=0 half, then uncompute the kernel value
    def rw(labels):
        r = rotation_matrix(min(spec_u.decode(labels[w_slot]), 1.0))
        u = np.eye(4, dtype=complex)
        u[:2, :2] = r  # basis (flag, rot); acts on the flag=0 sector
        return u

    state.apply_branch_dense(rw, ["flag", "rot"])

    def clear_w(dense, labels):
        out = list(labels)
        out[w_slot] = 0
        return out

    state.apply_label_map(clear_w, dense_controls=("i", "j"))

    # (7) inner products <phi_i|psi_i> = d_ii/(n-1).  The value measured here
    # is the inner product of the actually-prepared (noise-carrying) states;
    # its deviation from the clean degree is the distance-induced error that
    # the lam*eps_d budget accounts for, so no second noise source is added.
    ip_true = {i: sum(w_fx.get((i, j), 0.0) for j in range(n) if j != i) / (n - 1)
               for i in range(n)}
    inner_product_estimation(state, "i", "ip", ip_true,
                             EstimatorConfig(mode="exact", eps_d=est.eps_d), 0.0)

    # (8) sqrt rotation into the copy register's top qubit, then disentangle
    copy_ax = layout.dense_axis["copy"]
    half = n >> 1
    ip_fx = {}

    def rp(labels):
        v = min(spec_u.decode(labels[ip_slot]), 1.0)
        r = rotation_matrix(math.sqrt(v))
        u = np.eye(n, dtype=complex)
        u[0, 0], u[0, half], u[half, 0], u[half, half] = (
            r[0, 0], r[0, 1], r[1, 0], r[1, 1])
        return u

    state.apply_branch_dense(rp, ["copy"])
    _disentangle(state, "i", ["flag", "j", "rot"], clear_arith=["ip"])

    # (9) amplify the top-qubit-0 branch; p0 = Tr(D)/(n(n-1))
    p0 = 0.0
    for vec in state.branches.values():
        moved = np.moveaxis(vec, copy_ax, 0)
        p0 += float(np.vdot(moved[:half], moved[:half]).real)
    state, stats9 = amplitude_amplification(
        state, lambda idx, lab: idx[copy_ax] < half, p0)

    # (10) copy the index into the freed register
    cnot = np.zeros((n * n, n * n))
    for i in range(n):
        for c in range(n):
            cnot[i * n + (c ^ i), i * n + c] = 1.0
    state.apply_dense(cnot.astype(complex), ["i", "copy"])

    # (11) reduced state over the index register
    rho2 = partial_trace(state, ["i"]).validate()

    w_mat = np.zeros((n, n))
    for (i, j), w in w_fx.items():
        if i != j:
            w_mat[i, j] = w
    degrees = w_mat.sum(axis=1)
    r_min = float(min(w for (i, j), w in w_fx.items() if i != j))
    stats = AmplificationStats(
        initial_amplitude=p0, iterations=stats9.iterations,
        residual=stats9.residual, tau=float(degrees.sum()), p0=p0, r=r_min)

    vec = _dense_over(state, ["i", "copy"])
    return DegreeBuild(state, rho2, stats, vec, n, vec.size // n, 2 * log_n,
                       degrees, float(n * (n - 1) * p0))


def _disentangle(state: SimState, control_reg: str, target_regs, clear_arith=()):
    """Return the target registers to |0...0> per value of the control
    register.  Requires the per-value target state to be pure, so a unitary
    uncompute exists; the freed factor keeps its physical (nonnegative)
    amplitude convention."""
    lay = state.layout
    slots = [lay.arith_slot[r] for r in clear_arith]
    if slots:
        def clear(dense, labels):
            out = list(labels)
            for s in slots:
                out[s] = 0
            return out
        state.apply_label_map(clear, dense_controls=(control_reg,))
    if len(state.branches) != 1:
        raise SimError("disentangle expects cleared labels")
    labels, vec = next(iter(state.branches.items()))
    c_ax = lay.dense_axis[control_reg]
    t_axes = [lay.dense_axis[r] for r in target_regs]
    other = [i for i in range(vec.ndim) if i != c_ax and i not in t_axes]
    perm = [c_ax] + t_axes + other
    moved = np.moveaxis(vec, perm, range(vec.ndim))
    cdim = moved.shape[0]
    tdim = int(np.prod(moved.shape[1:1 + len(t_axes)]))
    rest = moved.reshape(cdim, tdim, -1)
    new = np.zeros_like(rest)
    for c in range(cdim):
        mat = rest[c]
        if np.max(np.abs(mat)) == 0:
            continue
        u, s, wt = np.linalg.svd(mat, full_matrices=False)
        if len(s) > 1 and s[1] > 1e-9 * max(s[0], 1e-30):
            raise SimError("target registers entangled beyond the control")
        row = s[0] * wt[0, :]
        k = int(np.argmax(np.abs(row)))
        ph = row[k] / abs(row[k])
        row = row * np.conj(ph)
        if np.max(np.abs(row.imag)) > 1e-9 or np.min(row.real) < -1e-9:
            raise SimError("freed factor is not in the nonnegative convention")
        new[c, 0, :] = row
    back = new.reshape(moved.shape)
    state.branches[labels] = np.moveaxis(back, range(vec.ndim), perm)
    state.prune()
