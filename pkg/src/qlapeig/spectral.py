"""Block-Hamiltonian simulation, phase estimation on the maximally mixed
input, eigenpair extraction, and the end-to-end pipeline.

Two simulation paths: ``oracle_exponential`` exponentiates the verified
encoded block exactly (the contract of optimal block-Hamiltonian simulation,
taken as an oracle), while ``lcu_taylor`` builds the truncated-Taylor linear
combination over controlled queries to the encoding unitary, segmented so one
exact oblivious-amplification round per segment restores unit scale.  The
second path is the one whose query counts are metered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blockenc import BlockEncoding
from .graph import (GraphError, KernelParams, VertexSet, build_graph,
                    classical_eigensolve)
from .sim import SimError, operator_norm_distance
from .stateprep import EstimatorConfig, PrepConfig, completion_unitary

__all__ = [
    "SimulationError",
    "ResolutionError",
    "SimulationConfig",
    "QpeConfig",
    "QpeSamples",
    "SpectralCluster",
    "SpectralResult",
    "PipelineConfig",
    "simulate_hamiltonian",
    "run_qpe",
    "extract_d_smallest",
    "recover_Lr_eigenvectors",
    "full_pipeline",
]


class SimulationError(SimError):
    """Hamiltonian-simulation contract violation."""


class ResolutionError(SimError):
    """Requested more eigenpairs than the phase resolution can separate."""


@dataclass
class SimulationConfig:
    t: float
    eps: float = 1e-6
    path: str = "oracle_exponential"
    truncation_order: int | None = None   # lcu path; chosen from eps when absent
    max_order: int = 12

    def __post_init__(self):
        if self.t < 0:
            raise SimulationError("evolution time must be nonnegative")
        if not (0 < self.eps < 1):
            raise SimulationError("target error must sit in (0, 1)")
        if self.path not in ("oracle_exponential", "lcu_taylor"):
            raise SimulationError(f"unknown simulation path {self.path!r}")


@dataclass
class QpeConfig:
    phase_bits: int
    shots: int
    seed: int | None = None
    time_scale: float = 1.0

    @property
    def resolution(self) -> float:
        return 2.0 ** (-self.phase_bits)


@dataclass
class QpeSamples:
    counts: dict                 # outcome -> shots
    post_states: dict            # outcome -> (n_sys, n_purifier) matrix
    probs: np.ndarray
    phase_bits: int
    time_scale: float
    shots: int


@dataclass
class SpectralCluster:
    eigenvalue: float
    phase: float
    weight: float
    vectors: np.ndarray          # (n, multiplicity), orthonormal columns
    bins: list


@dataclass
class SpectralResult:
    clusters: list
    d: int
    query_count: int | None = None
    fidelities: list = field(default_factory=list)
    reference_eigenvalues: list = field(default_factory=list)

    @property
    def eigenvalues(self):
        return [c.eigenvalue for c in self.clusters]


# ---------------------------------------------------------------------------
# Hamiltonian simulation

def simulate_hamiltonian(be: BlockEncoding, cfg: SimulationConfig) -> BlockEncoding:
    """Encoding of exp(-i H t) for H = alpha * block(be)."""
    h = be.alpha * be.block()
    if np.max(np.abs(h - h.conj().T)) > 1e-8:
        raise SimulationError("encoded block is not Hermitian")
    h = (h + h.conj().T) / 2.0
    if cfg.t == 0:
        return BlockEncoding(1.0, be.ancillas + 2, 0.0, be.subject_dim,
                             backend="composite", _block=np.eye(be.subject_dim),
                             meta={"path": cfg.path, "query_count": 0, "t": 0.0})
    if cfg.path == "oracle_exponential":
        vals, vecs = np.linalg.eigh(h)
        u = vecs @ np.diag(np.exp(-1j * vals * cfg.t)) @ vecs.conj().T
        eps = 2.0 * cfg.t * be.epsilon
        return BlockEncoding(1.0, be.ancillas + 2, max(eps, 1e-12), be.subject_dim,
                             backend="composite", _block=u,
                             meta={"path": cfg.path, "query_count": None,
                                   "t": cfg.t})
    return _lcu_taylor(be, h, cfg)


def _choose_order(segment_x: float, budget: float, max_order: int) -> int:
    for k in range(1, max_order + 1):
        tail = segment_x ** (k + 1) / math.factorial(k + 1)
        tail /= max(1e-12, 1.0 - segment_x / (k + 2))
        if tail <= budget:
            return k
    raise SimulationError("series order bound unreachable; raise max_order")


def _lcu_taylor(be: BlockEncoding, h: np.ndarray, cfg: SimulationConfig) -> BlockEncoding:
    """Segmented truncated-Taylor series over controlled encoding queries."""
    if be.backend != "dense":
        raise SimulationError("the metered path needs an explicit encoding unitary")
    s = be.subject_dim
    a_dim = be.unitary.shape[0] // s
    alpha = be.alpha
    x_total = alpha * cfg.t
    r = max(1, int(math.ceil(x_total / math.log(2.0))))
    tau = cfg.t / r
    x = alpha * tau
    order = cfg.truncation_order
    if order is None:
        order = _choose_order(x, cfg.eps / (6.0 * r), cfg.max_order)
    else:
        tail = x ** (order + 1) / math.factorial(order + 1)
        if tail / max(1e-12, 1.0 - x / (order + 2)) > cfg.eps / (2.0 * r):
            raise SimulationError("requested series order violates the error budget")
    cdim = 1 << max(1, (order + 1).bit_length())
    total_dim = cdim * a_dim ** order * 2 * s
    if total_dim > (1 << 21):
        raise SimulationError("lcu_taylor instance too large to simulate")

    ys = np.array([x ** k / math.factorial(k) for k in range(order + 1)])
    pad = 2.0 - ys.sum()
    if pad < -1e-12:
        raise SimulationError("segment weight exceeded the amplification scale")
    c_col = np.zeros(cdim, dtype=complex)
    d_col = np.zeros(cdim, dtype=complex)
    c_col[: order + 1] = np.sqrt(ys / 2.0)
    d_col[: order + 1] = np.sqrt(ys / 2.0) * (-1j) ** np.arange(order + 1)
    c_col[order + 1] = math.sqrt(max(pad, 0.0) / 2.0)
    d_col[order + 1] = math.sqrt(max(pad, 0.0) / 2.0)
    p_l = completion_unitary(c_col)
    p_r = completion_unitary(d_col)

    shape = (cdim,) + (a_dim,) * order + (2, s)
    u_mat = be.unitary
    ud_mat = be.unitary.conj().T
    queries = 0

    def apply_on(psi, mat, axes):
        moved = np.moveaxis(psi, axes, range(len(axes)))
        lead = int(np.prod([psi.shape[a] for a in axes]))
        flat = moved.reshape(lead, -1)
        flat = mat @ flat
        return np.moveaxis(flat.reshape(moved.shape), range(len(axes)), axes)

    def select(psi, adjoint=False):
        nonlocal queries
        mat = ud_mat if adjoint else u_mat
        js = range(order, 0, -1) if adjoint else range(1, order + 1)
        for j in js:
            queries += 1  # one multi-controlled encoding query per rung
            for k in range(j, order + 1):
                psi[k] = apply_on(psi[k], mat, [j - 1, len(shape) - 2])
        # padding slot: X on the spare flag (block contribution zero)
        psi[order + 1] = np.flip(psi[order + 1], axis=-2)
        return psi

    def a_op(psi, adjoint=False):
        if not adjoint:
            psi = apply_on(psi, p_r, [0])
            psi = select(psi, adjoint=False)
            psi = apply_on(psi, p_l.conj().T, [0])
        else:
            psi = apply_on(psi, p_l, [0])
            psi = select(psi, adjoint=True)
            psi = apply_on(psi, p_r.conj().T, [0])
        return psi

    def reflect_zero(psi):
        flat = psi.reshape(-1, s)
        flat *= -1.0
        flat[0] *= -1.0  # ancilla all-zero row keeps its sign
        return flat.reshape(psi.shape)

    def segment(psi):
        psi = a_op(psi)
        psi = reflect_zero(psi)
        psi = a_op(psi, adjoint=True)
        psi = reflect_zero(psi)
        psi = a_op(psi)
        return -psi

    block = np.zeros((s, s), dtype=complex)
    for col in range(s):
        psi = np.zeros(shape, dtype=complex)
        idx = (0,) * (len(shape) - 1) + (col,)
        psi[idx] = 1.0
        for _ in range(r):
            psi = segment(psi)
        block[:, col] = psi.reshape(-1, s)[0]
    # the counter ran once per extraction column; the circuit itself costs
    # one pass
    queries //= s

    vals, vecs = np.linalg.eigh(h)
    exact = vecs @ np.diag(np.exp(-1j * vals * cfg.t)) @ vecs.conj().T
    measured = operator_norm_distance(exact, block)
    if measured > cfg.eps:
        raise SimulationError(
            f"lcu_taylor error {measured:.3e} exceeds the budget {cfg.eps:.3e}")
    anc = int(round(math.log2(cdim * a_dim ** order * 2)))
    return BlockEncoding(1.0, anc, cfg.eps, s, backend="composite", _block=block,
                         meta={"path": "lcu_taylor", "query_count": queries,
                               "segments": r, "order": order, "t": cfg.t,
                               "measured_error": measured})


# ---------------------------------------------------------------------------
# phase estimation on the maximally mixed input

def run_qpe(u_enc: BlockEncoding, qcfg: QpeConfig,
            lambda_max_bound: float | None = None) -> QpeSamples:
    """Textbook QPE with the purified maximally-mixed input.

    Controlled powers use the adjoint of the encoded evolution so that
    eigenphases come out as +gamma t / 2 pi.
    """
    t = qcfg.time_scale
    if lambda_max_bound is not None and t * lambda_max_bound >= 2.0 * math.pi:
        raise SimulationError("phase wraparound: t * lambda_max >= 2 pi")
    u = u_enc.block().conj().T
    n = u.shape[0]
    pdim = 1 << qcfg.phase_bits
    psi = np.zeros((pdim, n, n), dtype=complex)
    base = np.eye(n) / math.sqrt(n)       # (1/sqrt n) sum_j |j>|j>
    power = np.eye(n, dtype=complex)
    for y in range(pdim):
        psi[y] = power @ base / math.sqrt(pdim)
        power = u @ power
    psi = np.fft.fft(psi, axis=0) / math.sqrt(pdim)
    probs = np.einsum("zij,zij->z", psi, psi.conj()).real
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    rng = np.random.default_rng(qcfg.seed)
    draws = rng.choice(pdim, size=qcfg.shots, p=probs)
    vals, counts = np.unique(draws, return_counts=True)
    counts = {int(z): int(c) for z, c in zip(vals, counts)}
    post = {}
    for z in counts:
        m = psi[z]
        post[z] = m / np.linalg.norm(m)
    return QpeSamples(counts, post, probs, qcfg.phase_bits, t, qcfg.shots)


def _aligned_average(entries):
    """Weighted principal-vector average with largest-component phase fixing."""
    vecs = []
    weights = []
    for w, rho in entries:
        evals, evecs = np.linalg.eigh(rho)
        v = evecs[:, -1]
        k = int(np.argmax(np.abs(v)))
        v = v * np.conj(v[k] / abs(v[k]))
        vecs.append(v)
        weights.append(w)
    avg = sum(w * v for w, v in zip(weights, vecs))
    return avg / np.linalg.norm(avg)


def extract_d_smallest(samples: QpeSamples, d: int, zero_threshold: float | None = None,
                       drop_zero: bool = True, min_count: int | None = None,
                       signed: bool = False) -> SpectralResult:
    """Cluster measured phases, drop the zero mode, return the d smallest.

    With ``signed`` (targets whose spectrum straddles zero, run with
    |lambda| t < pi) phases above one half decode as negative eigenvalues;
    otherwise the full circle is positive except a thin wrap margin next to 1
    that absorbs the numerically-negative tail of the zero mode.  A cluster
    whose Born weight spans several eigenvectors is reported as a subspace.
    """
    pdim = 1 << samples.phase_bits
    t = samples.time_scale
    if zero_threshold is None:
        zero_threshold = 1.5 / pdim
    if min_count is None:
        n = next(iter(samples.post_states.values())).shape[0] if samples.post_states else 2
        min_count = max(3, int(0.05 * samples.shots / n))
    wrap = 0.5 if signed else 1.0 - max(3.0 / pdim, 2.0 * zero_threshold)
    surviving = [(z, c) for z, c in samples.counts.items() if c >= min_count]
    if not surviving:
        raise ResolutionError("no phase bin collected enough shots")
    items = sorted(
        ((z / pdim if z / pdim <= wrap else z / pdim - 1.0), z, c)
        for z, c in surviving)
    clusters = []
    current = [items[0]]
    for entry in items[1:]:
        if entry[0] - current[-1][0] <= 1.8 / pdim:
            current.append(entry)
        else:
            clusters.append(current)
            current = [entry]
    clusters.append(current)

    n = next(iter(samples.post_states.values())).shape[0]
    out = []
    for group in clusters:
        weight = sum(c for _, _, c in group)
        phase = sum(th * c for th, _, c in group) / weight
        gamma = 2.0 * math.pi * phase / t
        frac = weight / samples.shots
        mult = max(1, int(round(frac * n)))
        rhos = []
        for th, z, c in group:
            m = samples.post_states[z]
            rhos.append((c / weight, m @ m.conj().T))
        if mult == 1:
            vecs = _aligned_average(rhos).reshape(n, 1)
        else:
            rho = sum(w * r for w, r in rhos)
            evals, evecs = np.linalg.eigh(rho)
            vecs = evecs[:, -mult:]
        out.append(SpectralCluster(gamma, phase, frac, vecs,
                                   [z for _, z, _ in group]))
    if drop_zero:
        out = [c for c in out if abs(c.phase) > zero_threshold]
    out.sort(key=lambda c: c.eigenvalue)
    if len(out) < d:
        raise ResolutionError(
            f"only {len(out)} nonzero clusters resolvable, {d} requested")
    return SpectralResult(out[:d], d)


def recover_Lr_eigenvectors(result: SpectralResult, rho2_block: np.ndarray,
                            lr_matrix: np.ndarray | None = None,
                            calL_block: np.ndarray | None = None,
                            residual_tol: float = 1e-6):
    """Map eigenvectors of the symmetric normalization to the random-walk one
    through the inverse square root of the degree state, verifying the
    eigenvector residual."""
    rho2 = (rho2_block + rho2_block.conj().T) / 2.0
    vals, vecs = np.linalg.eigh(rho2)
    if np.min(vals) <= 1e-14:
        raise GraphError("degree state is singular")
    inv_sqrt = vecs @ np.diag(vals ** -0.5) @ vecs.conj().T
    if lr_matrix is None:
        if calL_block is None:
            raise GraphError("need either L_r or the Laplacian block")
        lr_matrix = np.linalg.solve(rho2, calL_block)
    recovered = []
    residuals = []
    for cl in result.clusters:
        cols = []
        for k in range(cl.vectors.shape[1]):
            w = inv_sqrt @ cl.vectors[:, k]
            w = w / np.linalg.norm(w)
            # the vector is far sharper than the phase estimate, so the
            # eigen-residual is measured at the least-squares eigenvalue
            mu = complex(np.vdot(w, lr_matrix @ w)).real
            res = float(np.linalg.norm(lr_matrix @ w - mu * w))
            residuals.append(res)
            if res > residual_tol:
                raise SimulationError(
                    f"recovered vector fails the eigen-residual: {res:.3e}")
            cols.append(w)
        recovered.append(np.column_stack(cols))
    return recovered, residuals


# ---------------------------------------------------------------------------
# the end-to-end pipeline

@dataclass
class PipelineConfig:
    target: str = "L"            # L | Ls | Lr | W
    d: int = 1
    norm_case: str = "auto"      # auto | unit | general
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    prep: PrepConfig = field(default_factory=PrepConfig)
    sim_path: str = "oracle_exponential"
    sim_eps: float = 1e-6
    qpe_bits: int = 8
    qpe_shots: int = 4096
    seed: int | None = 7
    trace_mode: str = "quantum"  # quantum | classical
    zero_threshold: float | None = None
    kappa: float | None = None
    varsigma1: float = 1e-3

    def __post_init__(self):
        if self.target not in ("L", "Ls", "Lr", "W"):
            raise GraphError(f"unknown target {self.target!r}")
        if self.trace_mode not in ("quantum", "classical"):
            raise GraphError(f"unknown trace mode {self.trace_mode!r}")


class _Stage:
    """Context tagging exceptions with the pipeline stage they came from."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not str(exc).startswith("[stage:"):
            exc.args = (f"[stage:{self.name}] {exc}",)
        return False


def full_pipeline(vs: VertexSet, kp: KernelParams, cfg: PipelineConfig):
    """graph model -> state preparation -> block-encoding -> simulation ->
    QPE -> extraction, with a verification report at every stage.

    Stage failures propagate with a ``[stage:...]`` tag on the message.
    """
    from .blockenc import (encode_W_over_n, encode_calL, encoding_report,
                           sandwich_negative_power, taylor_consistent_reference)

    norm_case = cfg.norm_case
    if norm_case == "auto":
        norm_case = "unit" if vs.unit_norms(1e-8) else "general"
    with _Stage("graph-model"):
        gm = build_graph(vs, kp, truncated=True)
    report: dict = {
        "target": cfg.target, "n": vs.n, "m": vs.m,
        "lambda": kp.lam, "p": kp.p, "norm_case": norm_case,
        "estimator_mode": cfg.estimator.mode,
    }
    reports = []

    with _Stage("block-encoding"):
        if cfg.target == "W":
            from .blockenc import w_consistent_reference
            res = encode_W_over_n(vs, kp, norm_case, cfg.prep, cfg.estimator)
            subject = gm.W_p / vs.n
            target_enc = res.encoding
            consistent_w = w_consistent_reference(
                vs, kp, res.components["weight_build"])
            reports.append(encoding_report("W_vs_truncated_exact", target_enc,
                                           consistent_w, tol=1e-9))
        else:
            trace_d = float(np.trace(gm.D)) if cfg.trace_mode == "classical" else None
            res = encode_calL(vs, kp, trace_d, cfg.prep, cfg.estimator, norm_case)
            consistent = taylor_consistent_reference(
                vs, kp, res.components["weight_build"],
                res.components["degree_build"], res.trace_D)
            reports.append(encoding_report("calL_vs_model", res.encoding,
                                           gm.L / gm.trace_D, tol=1e-4))
            reports.append(encoding_report("calL_vs_truncated_exact", res.encoding,
                                           consistent, tol=1e-9))
            target_enc = res.encoding
            subject = gm.L / gm.trace_D
            if cfg.target in ("Ls", "Lr"):
                rho2_enc = res.components["rho2"]
                target_enc, np_params = sandwich_negative_power(
                    rho2_enc, res.encoding, 0.5, cfg.kappa, cfg.varsigma1)
                subject = gm.L_s
                report["negative_power"] = {"kappa": np_params.kappa,
                                            "zeta1": np_params.zeta1}
        reports.append(encoding_report(f"target_{cfg.target}", target_enc, subject,
                                       tol=max(1e-4, target_enc.epsilon)))
    report["trace_D_estimate"] = getattr(res, "trace_D", None)
    report["trace_D_classical"] = float(np.trace(gm.D))

    # evolution time from quantum-side Gershgorin bounds
    deg = res.components["degree_build"].degree_estimates \
        if "degree_build" in res.components else gm.D.diagonal()
    if cfg.target == "W":
        bound = 1.1 * float(np.max(deg)) / vs.n
        t = 0.9 * math.pi / bound
    elif cfg.target in ("Ls", "Lr"):
        bound = 2.0
        t = 0.9 * 2.0 * math.pi / bound
    else:
        bound = 2.0 * float(np.max(deg)) / float(np.sum(deg))
        t = 0.9 * 2.0 * math.pi / bound
    with _Stage("simulation"):
        sim_cfg = SimulationConfig(t=t, eps=cfg.sim_eps, path=cfg.sim_path)
        sim_enc = target_enc
        if cfg.sim_path == "lcu_taylor":
            # the metered path needs an explicit unitary; rebuild the verified
            # block as a compact one-ancilla encoding at the same scale
            from .blockenc import dilate
            sim_enc = dilate(target_enc.alpha * target_enc.block(),
                             target_enc.alpha)
        u_enc = simulate_hamiltonian(sim_enc, sim_cfg)
    report["simulation"] = {"path": sim_cfg.path, "eps": sim_cfg.eps,
                            "t": sim_cfg.t,
                            "query_count": u_enc.meta.get("query_count")}

    with _Stage("phase-estimation"):
        qcfg = QpeConfig(cfg.qpe_bits, cfg.qpe_shots, cfg.seed, sim_cfg.t)
        samples = run_qpe(u_enc, qcfg, lambda_max_bound=bound)
    with _Stage("extraction"):
        result = extract_d_smallest(samples, cfg.d, cfg.zero_threshold,
                                    drop_zero=(cfg.target != "W"),
                                    signed=(cfg.target == "W"))
    result.query_count = u_enc.meta.get("query_count")

    # classical reference for the same (truncated) matrix
    if cfg.target == "W":
        ref_vals, ref_vecs = np.linalg.eigh(subject)
    else:
        ref = classical_eigensolve(subject, min(cfg.d, subject.shape[0] - 1))
        ref_vals, ref_vecs = ref.eigenvalues, ref.eigenvectors
    result.reference_eigenvalues = [float(v) for v in ref_vals]
    fidelities = []
    for cl in result.clusters:
        k = int(np.argmin(np.abs(ref_vals - cl.eigenvalue)))
        v = ref_vecs[:, k]
        fid = float(np.linalg.norm(cl.vectors.conj().T @ v) ** 2)
        fidelities.append(fid)
    result.fidelities = fidelities

    if cfg.target == "Lr":
        with _Stage("recovery"):
            rho2_block = res.components["rho2"].block().real
            # the eigen-residual contract is against the random-walk operator
            # the pipeline itself encodes (rho2^-1 calL); agreement with the
            # classical matrix is covered by the eigenvalue and fidelity
            # comparisons
            cal_block = res.encoding.alpha * res.encoding.block()
            recovered, residuals = recover_Lr_eigenvectors(
                result, rho2_block, calL_block=cal_block)
            report["Lr_residuals"] = residuals
            for cl, cols in zip(result.clusters, recovered):
                cl.vectors = cols

    report["eigenvalues"] = [float(v) for v in result.eigenvalues]
    report["reference_eigenvalues"] = result.reference_eigenvalues
    report["fidelities"] = fidelities
    report["encoding_verifications"] = reports
    from .graph import graph_matrices_to_json
    report["graph_matrices"] = graph_matrices_to_json(gm)
    report["qpe"] = {
        "bits": cfg.qpe_bits, "shots": cfg.qpe_shots,
        "histogram": {str(k): v for k, v in sorted(samples.counts.items())},
    }
    return result, report
