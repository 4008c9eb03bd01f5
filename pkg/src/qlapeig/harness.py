"""Batch harness: flat key=value run configuration, report persistence with
deterministic byte-identical serialization, and the machine-readable
verification suite."""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from .checks import run_checks
from .graph import (GraphError, KernelParams, VertexSet, load_vertices_csv,
                    load_vertices_json)
from .spectral import PipelineConfig, full_pipeline
from .stateprep import (EstimatorConfig, PrepConfig, build_phi_state,
                        build_psi_state)

__all__ = ["RunConfig", "run", "verify_suite", "dump_json", "ConfigError"]


class ConfigError(GraphError):
    """Malformed run configuration."""


@dataclass
class RunConfig:
    """Every field has a default; unknown keys in a config file are errors.

    input:            vertex CSV or JSON path ("" means not set)
    target:           L | Ls | Lr | W
    lambda_:          Gaussian kernel width (key "lambda" in files)
    p:                Taylor truncation order
    d:                number of nonzero eigenpairs to extract
    norm_case:        auto | unit | general
    estimator_mode:   exact | noisy
    eps_x, eps_d:     injected oracle / estimator precisions
    delta1, delta2:   estimator failure probabilities
    qpe_bits, qpe_shots, seed: phase-estimation settings
    fixed_point_bits, exp_gate_order: arithmetic widths
    sim_path:         oracle_exponential | lcu_taylor
    sim_eps:          simulation error budget
    trace_mode:       quantum | classical (source of Tr(D) for the weights)
    output:           report path
    """

    input: str = ""
    target: str = "L"
    lambda_: float = 0.5
    p: int = 4
    d: int = 1
    norm_case: str = "auto"
    estimator_mode: str = "exact"
    eps_x: float = 0.0
    eps_d: float = 1e-6
    delta1: float = 0.05
    delta2: float = 0.05
    qpe_bits: int = 8
    qpe_shots: int = 4096
    seed: int = 7
    fixed_point_bits: int = 44
    exp_gate_order: int = 24
    sim_path: str = "oracle_exponential"
    sim_eps: float = 1e-6
    trace_mode: str = "quantum"
    output: str = "report.json"

    _ALIASES = {"lambda": "lambda_"}

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        cfg = cls()
        known = {f.name for f in fields(cls)}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, val = (part.strip() for part in line.split("=", 1))
                key = cls._ALIASES.get(key, key)
                if key not in known or key.startswith("_"):
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                current = getattr(cfg, key)
                try:
                    if isinstance(current, bool):
                        parsed = val.lower() in ("1", "true", "yes")
                    elif isinstance(current, int):
                        parsed = int(val)
                    elif isinstance(current, float):
                        parsed = float(val)
                    else:
                        parsed = val
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
                setattr(cfg, key, parsed)
        return cfg

    def to_file(self, path: str):
        """Write the configuration back out as key=value lines; a file
        written here parses to an identical config."""
        lines = []
        for f in fields(self):
            key = "lambda" if f.name == "lambda_" else f.name
            lines.append(f"{key} = {getattr(self, f.name)}")
        write_atomic(path, "\n".join(lines) + "\n")

    def pipeline_config(self) -> PipelineConfig:
        est = EstimatorConfig(mode=self.estimator_mode, eps_d=self.eps_d,
                              delta1=self.delta1, delta2=self.delta2,
                              seed=self.seed)
        prep = PrepConfig(bits=self.fixed_point_bits,
                          exp_order=self.exp_gate_order, seed=self.seed)
        return PipelineConfig(
            target=self.target, d=self.d, norm_case=self.norm_case,
            estimator=est, prep=prep, sim_path=self.sim_path,
            sim_eps=self.sim_eps, qpe_bits=self.qpe_bits,
            qpe_shots=self.qpe_shots, seed=self.seed,
            trace_mode=self.trace_mode)


# ---------------------------------------------------------------------------
# deterministic JSON with 17-significant-digit floats

def _format(value, out):
    if isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(value):
            if i:
                out.append(",")
            out.append(f'"{key}":')
            _format(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _format(item, out)
        out.append("]")
    elif isinstance(value, bool) or value is None:
        out.append("true" if value else ("null" if value is None else "false"))
    elif isinstance(value, (int, np.integer)):
        out.append(str(int(value)))
    elif isinstance(value, (float, np.floating)):
        v = float(value)
        out.append(f"{v:.17g}" if np.isfinite(v) else f'"{v!r}"')
    else:
        escaped = str(value).replace("\\", "\\\\").replace('"', '\\"')
        out.append(f'"{escaped}"')


def dump_json(obj) -> str:
    out = []
    _format(obj, out)
    return "".join(out)


def write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".report-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# entry points

def load_vertices(path: str) -> VertexSet:
    if path.endswith(".json"):
        return load_vertices_json(path)
    return load_vertices_csv(path)


def run(config: RunConfig, verify_only: bool = False,
        dump_state: str = "") -> int:
    """Execute the pipeline per config.  Returns the process exit code:
    0 ok, 1 verification failure, 2 I/O or configuration error."""
    try:
        if not config.input:
            raise ConfigError("config is missing the input path")
        vs = load_vertices(config.input)
        kp = KernelParams(config.lambda_, config.p)
    except (OSError, GraphError, ValueError) as exc:
        print(f"error: {exc}")
        return 2

    try:
        pcfg = config.pipeline_config()
        if verify_only:
            report = _verify_only_report(vs, kp, pcfg)
            ok = (all(c["pass"] for c in report["checks"])
                  and all(r["pass"] for r in report["encoding_verifications"]))
        else:
            result, report = full_pipeline(vs, kp, pcfg)
            ok = all(r["pass"] for r in report["encoding_verifications"])
            report["verify_only"] = False
        if dump_state:
            write_atomic(dump_state, dump_json(_state_dump(vs, kp, pcfg)))
        write_atomic(config.output, dump_json(report))
    except OSError as exc:
        print(f"error: {exc}")
        return 2
    except GraphError as exc:
        print(f"error: {exc}")
        return 2
    except Exception as exc:  # stage failures carry their stage in the message
        print(f"verification failure: {type(exc).__name__}: {exc}")
        return 1
    return 0 if ok else 1


def _verify_only_report(vs, kp, pcfg) -> dict:
    """Classical matrices and encoding verification for the configured
    input, plus the generic invariant battery; phase estimation skipped."""
    import numpy as np

    from .blockenc import encode_calL, encode_W_over_n, encoding_report
    from .graph import build_graph, graph_matrices_to_json

    norm_case = pcfg.norm_case
    if norm_case == "auto":
        norm_case = "unit" if vs.unit_norms(1e-8) else "general"
    gm = build_graph(vs, kp, truncated=True)
    reports = []
    if pcfg.target == "W":
        res = encode_W_over_n(vs, kp, norm_case, pcfg.prep, pcfg.estimator)
        reports.append(encoding_report("target_W", res.encoding,
                                       gm.W_p / vs.n, tol=1e-4))
    else:
        res = encode_calL(vs, kp, None, pcfg.prep, pcfg.estimator, norm_case)
        reports.append(encoding_report("calL_vs_model", res.encoding,
                                       gm.L / gm.trace_D, tol=1e-4))
        reports.append(encoding_report(
            "rho2", res.components["rho2"], np.diag(np.diag(gm.D)) / gm.trace_D,
            tol=1e-4))
    return {
        "target": pcfg.target, "verify_only": True, "norm_case": norm_case,
        "graph_matrices": graph_matrices_to_json(gm),
        "encoding_verifications": reports,
        "checks": run_checks("small"),
    }


def _state_dump(vs, kp, pcfg) -> dict:
    """Debug dump of the weight-preparation state: labels plus amplitudes."""
    case = pcfg.norm_case
    if case == "auto":
        case = "unit" if vs.unit_norms(1e-8) else "general"
    build = build_phi_state(vs, kp, pcfg.prep) if case == "unit" \
        else build_psi_state(vs, kp, pcfg.prep)
    state = build.state
    branches = []
    for labels, vec in sorted(state.branches.items()):
        branches.append({
            "labels": list(labels),
            "shape": list(vec.shape),
            "re": [float(x) for x in vec.real.ravel()],
            "im": [float(x) for x in vec.imag.ravel()],
        })
    return {
        "registers": [[r.name, r.qubits, r.kind] for r in state.layout.registers],
        "branches": branches,
    }


def verify_suite(size: str = "small", out_path: str | None = None) -> int:
    """Run the invariant battery; one JSON line per check."""
    try:
        results = run_checks(size)
    except ValueError as exc:
        print(f"error: {exc}")
        return 2
    lines = "\n".join(dump_json(r) for r in results) + "\n"
    if out_path:
        try:
            write_atomic(out_path, lines)
        except OSError as exc:
            print(f"error: {exc}")
            return 2
    else:
        print(lines, end="")
    return 0 if all(r["pass"] for r in results) else 1
