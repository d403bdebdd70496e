"""Exact simulator for small qubit registers (dense, <= 12 qubits).

States are plain numpy arrays:
    pure state     : complex vector of length 2**n
    density matrix : complex (2**n, 2**n) matrix

Bit convention: qubit 0 is the least significant bit of the basis index,
so for a 3-qubit register the amplitude at index 0b110 has qubit 0 in |0>
and qubits 1, 2 in |1>.

All operations are pure functions; nothing here holds mutable state, so
values can be shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

CNOT_MATRIX = np.array(
    [[1, 0, 0, 0],
     [0, 1, 0, 0],
     [0, 0, 0, 1],
     [0, 0, 1, 0]], dtype=complex)

CHANNEL_KINDS = ("AD", "DP", "BF", "PF")


def rotation_gate(axis: str, angle: float) -> np.ndarray:
    """2x2 rotation matrix about the x, y or z axis of the Bloch sphere."""
    if not np.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle!r}")
    c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if axis == "z":
        return np.array([[np.exp(-0.5j * angle), 0], [0, np.exp(0.5j * angle)]])
    raise ValueError(f"axis must be one of 'x', 'y', 'z', got {axis!r}")


def zero_state(n_qubits: int) -> np.ndarray:
    """|0...0> on n_qubits."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    state = np.zeros(2**n_qubits, dtype=complex)
    state[0] = 1.0
    return state


def n_qubits_of(state: np.ndarray) -> int:
    n = int(state.shape[-1]).bit_length() - 1
    if 2**n != state.shape[-1]:
        raise ValueError(f"state length {state.shape[-1]} is not a power of two")
    return n


def _check_qubit(qubit: int, n: int) -> None:
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n}-qubit register")


def apply_one_qubit(state: np.ndarray, qubit: int, gate: np.ndarray) -> np.ndarray:
    """Apply a 2x2 gate to one qubit of a pure state."""
    n = n_qubits_of(state)
    _check_qubit(qubit, n)
    if gate.shape != (2, 2):
        raise ValueError(f"expected a 2x2 gate, got shape {gate.shape}")
    # qubit q strides 2**q through the amplitude index
    hi, lo = 2 ** (n - 1 - qubit), 2**qubit
    view = state.reshape(hi, 2, lo)
    return np.einsum("ij,hjl->hil", gate, view).reshape(-1)


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    """Flip `target` on the basis states where `control` is |1>."""
    n = n_qubits_of(state)
    _check_qubit(control, n)
    _check_qubit(target, n)
    if control == target:
        raise ValueError("control and target must differ")
    idx = np.arange(2**n)
    src = np.where((idx >> control) & 1 == 1, idx ^ (1 << target), idx)
    return state[src]


def expectation_z(state: np.ndarray, qubit: int) -> float:
    """<Z> on one qubit, computed exactly from the amplitudes."""
    n = n_qubits_of(state)
    _check_qubit(qubit, n)
    signs = 1.0 - 2.0 * ((np.arange(2**n) >> qubit) & 1)
    return float(np.real(np.vdot(state, signs * state)))


def pure_to_density(state: np.ndarray) -> np.ndarray:
    """rho = |psi><psi|."""
    return np.outer(state, state.conj())


def norm_error(state: np.ndarray) -> float:
    """|sum of |a_i|^2 - 1|, the normalization drift of a pure state."""
    return abs(float(np.real(np.vdot(state, state))) - 1.0)


# ---------------------------------------------------------------------------
# Batched evolution: a stack of pure states as rows of a (B, 2**n) array.
# Used by the model forward pass and the sampling studies, where thousands
# of small circuits run with different angles.
# ---------------------------------------------------------------------------

def rotation_gates_batch(axis: str, angles: np.ndarray) -> np.ndarray:
    """(B,) angles -> (B, 2, 2) rotation matrices about one axis."""
    half = 0.5 * np.asarray(angles)
    gates = np.zeros(half.shape + (2, 2), dtype=complex)
    if axis == "z":
        gates[..., 0, 0] = np.exp(-1j * half)
        gates[..., 1, 1] = np.exp(1j * half)
        return gates
    c, s = np.cos(half), np.sin(half)
    gates[..., 0, 0] = c
    gates[..., 1, 1] = c
    if axis == "x":
        gates[..., 0, 1] = -1j * s
        gates[..., 1, 0] = -1j * s
    elif axis == "y":
        gates[..., 0, 1] = -s
        gates[..., 1, 0] = s
    else:
        raise ValueError(f"axis must be one of 'x', 'y', 'z', got {axis!r}")
    return gates


def apply_one_qubit_batch(states: np.ndarray, qubit: int, gates: np.ndarray) -> np.ndarray:
    """Apply per-row 2x2 gates (B, 2, 2), or one shared gate (2, 2)."""
    b, dim = states.shape
    n = dim.bit_length() - 1
    _check_qubit(qubit, n)
    hi, lo = 2 ** (n - 1 - qubit), 2**qubit
    view = states.reshape(b, hi, 2, lo)
    if gates.ndim == 2:
        out = np.einsum("ij,bhjl->bhil", gates, view)
    else:
        out = np.einsum("bij,bhjl->bhil", gates, view)
    return out.reshape(b, dim)


def apply_cnot_batch(states: np.ndarray, control: int, target: int) -> np.ndarray:
    dim = states.shape[1]
    idx = np.arange(dim)
    src = np.where((idx >> control) & 1 == 1, idx ^ (1 << target), idx)
    return states[:, src]


def expectation_z_batch(states: np.ndarray, qubit: int) -> np.ndarray:
    dim = states.shape[1]
    signs = 1.0 - 2.0 * ((np.arange(dim) >> qubit) & 1)
    return np.einsum("bi,i->b", np.abs(states) ** 2, signs)


# ---------------------------------------------------------------------------
# Noise channels and density-matrix evolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseChannel:
    """A single-qubit channel as a set of Kraus operators.

    kind        : one of "AD", "DP", "BF", "PF"
    probability : channel strength P in [0, 1]
    kraus_ops   : tuple of 2x2 complex matrices with sum K_i^dag K_i = I
    """
    kind: str
    probability: float
    kraus_ops: tuple[np.ndarray, ...]

    def completeness_error(self) -> float:
        acc = sum(k.conj().T @ k for k in self.kraus_ops)
        return float(np.max(np.abs(acc - np.eye(2))))


def make_channel(kind: str, probability: float) -> NoiseChannel:
    """Build one of the four canonical single-qubit channels.

    AD: amplitude damping, DP: depolarizing, BF: bit flip, PF: phase flip.
    """
    if kind not in CHANNEL_KINDS:
        raise ValueError(f"unknown channel kind {kind!r}, expected one of {CHANNEL_KINDS}")
    p = float(probability)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"channel probability must be in [0, 1], got {p}")
    eye = np.eye(2, dtype=complex)
    if kind == "AD":
        k0 = np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex)
        k1 = np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex)
        ops = (k0, k1)
    elif kind == "DP":
        ops = (np.sqrt(1 - 0.75 * p) * eye,
               np.sqrt(0.25 * p) * PAULI_X,
               np.sqrt(0.25 * p) * PAULI_Y,
               np.sqrt(0.25 * p) * PAULI_Z)
    elif kind == "BF":
        ops = (np.sqrt(1 - p) * eye, np.sqrt(p) * PAULI_X)
    else:  # PF
        ops = (np.sqrt(1 - p) * eye, np.sqrt(p) * PAULI_Z)
    return NoiseChannel(kind=kind, probability=p, kraus_ops=ops)


def _apply_kraus(rho: np.ndarray, qubit: int, ops: tuple[np.ndarray, ...] | list[np.ndarray]) -> np.ndarray:
    """rho' = sum_i K_i rho K_i^dag with 2x2 K_i lifted to `qubit`."""
    dim = rho.shape[0]
    n = dim.bit_length() - 1
    _check_qubit(qubit, n)
    hi, lo = 2 ** (n - 1 - qubit), 2**qubit
    view = rho.reshape(hi, 2, lo, hi, 2, lo)
    out = np.zeros(view.shape, dtype=complex)
    for k in ops:
        out += np.einsum("ia,jb,halkbm->hilkjm", k, k.conj(), view)
    return out.reshape(dim, dim)


def apply_channel(rho: np.ndarray, qubit: int, channel: NoiseChannel) -> np.ndarray:
    """Apply a single-qubit noise channel to one qubit of a density matrix."""
    if rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    return _apply_kraus(rho, qubit, channel.kraus_ops)


def apply_gate_density(rho: np.ndarray, qubit: int, gate: np.ndarray) -> np.ndarray:
    """rho -> U rho U^dag for a 2x2 gate on one qubit."""
    return _apply_kraus(rho, qubit, (gate,))


def density_validity_error(rho: np.ndarray) -> tuple[float, float, float]:
    """(hermiticity, trace, positivity) deviations of a density matrix."""
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    trace = abs(float(np.real(np.trace(rho))) - 1.0)
    eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    positivity = max(0.0, -float(eigs.min()))
    return herm, trace, positivity


EIGENVALUE_CLAMP = 1e-9


def _clamped_sqrt(vals: np.ndarray) -> np.ndarray:
    """sqrt of eigenvalues with everything below the round-off floor sent
    to zero; without the floor, spurious eigenvalues of order 1e-16 on
    rank-deficient inputs would inject sqrt-amplified noise of order 1e-8."""
    return np.sqrt(np.where(vals < EIGENVALUE_CLAMP, 0.0, vals))


def state_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity F(rho, sigma) = Tr(sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Matrix square roots are taken by Hermitian eigendecomposition with
    clamped eigenvalues. The result is clamped to [0, 1].
    """
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    vals, vecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    sqrt_rho = (vecs * _clamped_sqrt(vals)) @ vecs.conj().T
    inner = sqrt_rho @ sigma @ sqrt_rho
    inner_vals = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    root_sum = float(np.sum(_clamped_sqrt(inner_vals)))
    return float(np.clip(root_sum**2, 0.0, 1.0))


def single_qubit_marginal(state: np.ndarray, qubit: int) -> np.ndarray:
    """2x2 reduced density matrix of one qubit of a pure state."""
    n = n_qubits_of(state)
    _check_qubit(qubit, n)
    # move the qubit's axis to the front, partial-trace the rest
    tensor = np.moveaxis(state.reshape([2] * n), n - 1 - qubit, 0).reshape(2, -1)
    return tensor @ tensor.conj().T


def meyer_wallach(state: np.ndarray) -> float:
    """Meyer-Wallach entanglement Q = 2 (1 - mean single-qubit purity).

    0 for product states, 1 for e.g. Bell and GHZ states.
    """
    n = n_qubits_of(state)
    if n < 2:
        raise ValueError("Meyer-Wallach measure needs at least 2 qubits")
    purity_sum = 0.0
    for k in range(n):
        marg = single_qubit_marginal(state, k)
        purity_sum += float(np.sum(np.abs(marg) ** 2))
    return 2.0 * (1.0 - purity_sum / n)
