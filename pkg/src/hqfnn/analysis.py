"""Batch studies: noise robustness of the membership circuit, expressibility
and entangling capability of the quantum block, and gate/parameter counts.

All studies are deterministic given their seed and emit plain data
structures; the CLI turns them into CSV/JSON.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .model import ModelConfig, ModelParams, init_params, qd_entangler, qmf_gate_schedule

DEFAULT_N_INPUTS = 50
DEFAULT_N_PAIRS = 5000
DEFAULT_N_BINS = 75
DEFAULT_N_ENT_SAMPLES = 1000


# ---------------------------------------------------------------------------
# Noise robustness
# ---------------------------------------------------------------------------

@dataclass
class NoiseSweepResult:
    kind: str
    probability: float
    mean_fidelity: float
    inputs: np.ndarray
    fidelities: np.ndarray


def membership_circuit_angles(n_layers: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed random biases/thetas of one membership circuit."""
    rng = np.random.default_rng(seed)
    biases = rng.uniform(-np.pi, np.pi, size=(n_layers, 3))
    thetas = rng.uniform(-np.pi, np.pi, size=(n_layers, 3))
    return biases, thetas


def noise_sweep(kind: str, p_list, n_inputs: int = DEFAULT_N_INPUTS,
                n_layers: int = 4, seed: int = 0) -> list[NoiseSweepResult]:
    """Fidelity of the noisy membership circuit against the ideal one.

    The circuit is the single-qubit membership stack with fixed seeded
    parameters; the channel is applied after every single-qubit gate. The
    input angle is swept over n_inputs equal intervals of [0, 2pi), and
    fidelities are averaged over inputs only.
    """
    if n_inputs < 2:
        raise ValueError(f"need at least 2 inputs, got {n_inputs}")
    biases, thetas = membership_circuit_angles(n_layers, seed)
    inputs = np.arange(n_inputs) * (2 * np.pi / n_inputs)
    results = []
    for p in p_list:
        channel = qsim.make_channel(kind, p)
        fidelities = np.empty(n_inputs)
        for idx, x in enumerate(inputs):
            ideal = qsim.zero_state(1)
            noisy = qsim.pure_to_density(qsim.zero_state(1))
            for axis, angle in qmf_gate_schedule(float(x), biases, thetas):
                gate = qsim.rotation_gate(axis, angle)
                ideal = qsim.apply_one_qubit(ideal, 0, gate)
                noisy = qsim.apply_channel(qsim.apply_gate_density(noisy, 0, gate), 0, channel)
            fidelities[idx] = qsim.state_fidelity(qsim.pure_to_density(ideal), noisy)
        results.append(NoiseSweepResult(kind=kind, probability=float(p),
                                        mean_fidelity=float(fidelities.mean()),
                                        inputs=inputs, fidelities=fidelities))
    return results


# ---------------------------------------------------------------------------
# Expressibility and entangling capability
# ---------------------------------------------------------------------------

@dataclass
class ExprEntResult:
    n_reuploads: int
    n_qubits: int
    expressibility: float | None = None
    entanglement: float | None = None
    n_pairs: int = 0
    n_bins: int = 0
    n_samples: int = 0
    seed: int = 0


def sample_block_states(n_qubits: int, n_layers: int, angles: np.ndarray) -> np.ndarray:
    """States of the analysis circuit for a batch of angle draws.

    Every qubit carries the six membership-style rotations per layer
    (Rx Ry Rz twice, all angles free). The defuzzifier's clustered-CNOT
    template is applied exactly once, after the first layer: the model
    itself entangles only once, and a template placed after the last
    rotation would cancel out of every pair fidelity, collapsing the
    expressibility study to a product-state one.
    """
    b = angles.shape[0]
    if angles.shape[1:] != (n_layers, n_qubits, 6):
        raise ValueError(f"expected angles (B, {n_layers}, {n_qubits}, 6), got {angles.shape}")
    entangler = qd_entangler(n_qubits)
    states = np.zeros((b, 2**n_qubits), dtype=complex)
    states[:, 0] = 1.0
    axes = ("x", "y", "z", "x", "y", "z")
    for layer in range(n_layers):
        for qubit in range(n_qubits):
            for slot, axis in enumerate(axes):
                gates = qsim.rotation_gates_batch(axis, angles[:, layer, qubit, slot])
                states = qsim.apply_one_qubit_batch(states, qubit, gates)
        if layer == 0:
            for control, target in entangler:
                states = qsim.apply_cnot_batch(states, control, target)
    return states


def _draw_angles(rng: np.random.Generator, count: int, n_layers: int, n_qubits: int) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, size=(count, n_layers, n_qubits, 6))


def haar_bin_masses(n_bins: int, dim: int) -> np.ndarray:
    """Haar fidelity mass per histogram bin on [0, 1]: the density
    (N-1)(1-F)^(N-2) integrates to (1-a)^(N-1) - (1-b)^(N-1) on [a, b]."""
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    cdf_tail = (1.0 - edges) ** (dim - 1)
    return cdf_tail[:-1] - cdf_tail[1:]


def kl_divergence(empirical: np.ndarray, reference: np.ndarray) -> float:
    """KL(empirical || reference); empty empirical bins contribute 0."""
    mask = empirical > 0
    return float(np.sum(empirical[mask] * np.log(empirical[mask] / reference[mask])))


def expressibility_score(n_qubits: int = 6, n_layers: int = 4,
                         n_pairs: int = DEFAULT_N_PAIRS, n_bins: int = DEFAULT_N_BINS,
                         seed: int = 0) -> ExprEntResult:
    """KL divergence between the circuit's pair-fidelity histogram and the
    Haar baseline. Smaller means the sampled states cover state space more
    like Haar-random ones."""
    rng = np.random.default_rng(seed)
    first = sample_block_states(n_qubits, n_layers, _draw_angles(rng, n_pairs, n_layers, n_qubits))
    second = sample_block_states(n_qubits, n_layers, _draw_angles(rng, n_pairs, n_layers, n_qubits))
    fidelities = np.abs(np.einsum("bi,bi->b", first.conj(), second)) ** 2
    counts, _ = np.histogram(fidelities, bins=n_bins, range=(0.0, 1.0))
    empirical = counts / counts.sum()
    score = kl_divergence(empirical, haar_bin_masses(n_bins, 2**n_qubits))
    return ExprEntResult(n_reuploads=n_layers, n_qubits=n_qubits,
                         expressibility=score, n_pairs=n_pairs, n_bins=n_bins, seed=seed)


def entangling_score(n_qubits: int = 6, n_layers: int = 4,
                     n_samples: int = DEFAULT_N_ENT_SAMPLES, seed: int = 0) -> ExprEntResult:
    """Mean Meyer-Wallach measure of the circuit's output states over
    uniformly sampled parameter vectors."""
    if n_qubits < 2:
        raise ValueError(f"entangling capability needs >= 2 qubits, got {n_qubits}")
    rng = np.random.default_rng(seed)
    states = sample_block_states(n_qubits, n_layers, _draw_angles(rng, n_samples, n_layers, n_qubits))
    score = float(np.mean([qsim.meyer_wallach(s) for s in states]))
    return ExprEntResult(n_reuploads=n_layers, n_qubits=n_qubits,
                         entanglement=score, n_samples=n_samples, seed=seed)


# ---------------------------------------------------------------------------
# Gate and parameter counts
# ---------------------------------------------------------------------------

@dataclass
class GateCountReport:
    qmf_gates_per_sample: int      # counted from the instantiated circuits
    qd_rx_gates: int
    qd_cluster_cnots: int
    qd_wraparound_cnots: int
    parameters: dict[str, int] = field(default_factory=dict)
    total_parameters: int = 0


def gate_count_report(config: ModelConfig, params: ModelParams | None = None) -> GateCountReport:
    """Counts taken from instantiated circuits and parameter tensors, not
    from closed-form formulas."""
    if params is None:
        params = init_params(config, seed=0)
    qmf_gates = 0
    for rule in range(config.n_memberships):
        for _feature in range(config.n_features):
            qmf_gates += len(qmf_gate_schedule(0.0, params.qmf_biases[rule], params.qmf_thetas[rule]))

    entangler = qd_entangler(config.n_qd_qubits)
    cluster = 3 * (config.n_qd_qubits // 3)
    groups = {
        "stem": ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "stem_fc_w", "stem_fc_b"),
        "qmf": ("qmf_biases", "qmf_thetas"),
        "rule": ("rule_kernel", "rule_bias"),
        "qd": ("qd_proj_w", "qd_proj_b", "qd_w1", "qd_beta1", "qd_w2", "qd_beta2"),
        "classifier": ("fuse_fc1_w", "fuse_fc1_b", "fuse_fc2_w", "fuse_fc2_b"),
    }
    parameters = {group: sum(getattr(params, name).size for name in names)
                  for group, names in groups.items()}
    return GateCountReport(
        qmf_gates_per_sample=qmf_gates,
        qd_rx_gates=config.n_qd_qubits,
        qd_cluster_cnots=cluster,
        qd_wraparound_cnots=len(entangler) - cluster,
        parameters=parameters,
        total_parameters=sum(parameters.values()),
    )
