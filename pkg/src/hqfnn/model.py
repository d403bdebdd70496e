"""The hybrid quantum-fuzzy classifier.

Pipeline per batch of images:

    CNN stem -> features v (B, d)
    quantum membership circuits -> memberships (B, m, d) in [0, 1]
    rule convolution over the membership axis -> activations (B, m, d)
    quantum defuzzifier -> one crisp scalar per sample
    concat(v, scalar) -> two-layer classifier -> logits

Quantum parts run on the statevector simulator in `qsim`; their gradients
come from the exact parameter-shift rule (see `backward`), so no
differentiation through amplitudes is ever needed.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import qsim
from .gradients import (
    conv1d_backward,
    conv1d_forward,
    conv2d_backward,
    conv2d_forward,
    linear_backward,
    linear_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
)

SHIFT = np.pi / 2

ROTATION_AXES = ("x", "y", "z")

STEM_CHANNELS = (8, 16)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    n_features    : d, width of the CNN feature vector fed to the fuzzy part
    n_memberships : m, membership functions per feature
    n_reuploads   : L_q, re-uploading layers in each membership circuit
    n_qd_qubits   : q, register width of the defuzzifier
    head_split    : p, size of the first measurement head (default q // 2)
    """
    n_features: int = 16
    n_memberships: int = 3
    n_reuploads: int = 4
    n_qd_qubits: int = 6
    head_split: int | None = None
    hidden_dim: int = 64
    n_classes: int = 10
    image_size: int = 28

    def __post_init__(self):
        if self.head_split is None:
            object.__setattr__(self, "head_split", self.n_qd_qubits // 2)
        if self.n_features < 1 or self.n_memberships < 1 or self.n_reuploads < 1:
            raise ValueError("n_features, n_memberships and n_reuploads must be >= 1")
        if self.n_qd_qubits < 3:
            raise ValueError(f"defuzzifier needs at least 3 qubits, got {self.n_qd_qubits}")
        if self.n_qd_qubits > qsim.MAX_QUBITS:
            raise ValueError(f"defuzzifier register limited to {qsim.MAX_QUBITS} qubits")
        if not 1 <= self.head_split < self.n_qd_qubits:
            raise ValueError(f"head_split must be in [1, {self.n_qd_qubits}), got {self.head_split}")
        if self.image_size % 4 != 0:
            raise ValueError("image_size must be divisible by 4 (two 2x2 pools)")

    @property
    def stem_flat_dim(self) -> int:
        side = self.image_size // 4
        return STEM_CHANNELS[1] * side * side


@dataclass
class ModelParams:
    """All trainable tensors, in checkpoint order."""
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    stem_fc_w: np.ndarray
    stem_fc_b: np.ndarray
    qmf_biases: np.ndarray   # (m, L_q, 3) added to the encoded input angle
    qmf_thetas: np.ndarray   # (m, L_q, 3) trainable rotation angles
    rule_kernel: np.ndarray  # (d out, d in, 3)
    rule_bias: np.ndarray
    qd_proj_w: np.ndarray    # (m*d, q)
    qd_proj_b: np.ndarray
    qd_w1: np.ndarray        # (p,)
    qd_beta1: np.ndarray     # scalar, shape ()
    qd_w2: np.ndarray        # (q - p,)
    qd_beta2: np.ndarray
    fuse_fc1_w: np.ndarray   # (d + 1, hidden)
    fuse_fc1_b: np.ndarray
    fuse_fc2_w: np.ndarray   # (hidden, n_classes)
    fuse_fc2_b: np.ndarray

    @classmethod
    def tensor_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in self.tensor_names()]

    def copy(self) -> "ModelParams":
        return ModelParams(**{name: arr.copy() for name, arr in self.named_tensors()})

    def n_parameters(self) -> int:
        return sum(arr.size for _, arr in self.named_tensors())


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Fresh parameters: angles uniform in [-pi, pi], classical weights
    uniform in +-1/sqrt(fan_in)."""
    rng = np.random.default_rng(seed)
    d, m = config.n_features, config.n_memberships
    layers, q, p = config.n_reuploads, config.n_qd_qubits, config.head_split
    c1, c2 = STEM_CHANNELS
    flat = config.stem_flat_dim
    return ModelParams(
        conv1_w=_uniform(rng, (c1, 1, 3, 3), 9),
        conv1_b=_uniform(rng, (c1,), 9),
        conv2_w=_uniform(rng, (c2, c1, 3, 3), c1 * 9),
        conv2_b=_uniform(rng, (c2,), c1 * 9),
        stem_fc_w=_uniform(rng, (flat, d), flat),
        stem_fc_b=_uniform(rng, (d,), flat),
        qmf_biases=rng.uniform(-np.pi, np.pi, size=(m, layers, 3)),
        qmf_thetas=rng.uniform(-np.pi, np.pi, size=(m, layers, 3)),
        rule_kernel=_uniform(rng, (d, d, 3), d * 3),
        rule_bias=_uniform(rng, (d,), d * 3),
        qd_proj_w=_uniform(rng, (m * d, q), m * d),
        qd_proj_b=_uniform(rng, (q,), m * d),
        qd_w1=_uniform(rng, (p,), p),
        qd_beta1=np.array(rng.uniform(-1.0, 1.0)),
        qd_w2=_uniform(rng, (q - p,), q - p),
        qd_beta2=np.array(rng.uniform(-1.0, 1.0)),
        fuse_fc1_w=_uniform(rng, (d + 1, config.hidden_dim), d + 1),
        fuse_fc1_b=_uniform(rng, (config.hidden_dim,), d + 1),
        fuse_fc2_w=_uniform(rng, (config.hidden_dim, config.n_classes), config.hidden_dim),
        fuse_fc2_b=_uniform(rng, (config.n_classes,), config.hidden_dim),
    )


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.named_tensors()}


# ---------------------------------------------------------------------------
# Quantum membership function
# ---------------------------------------------------------------------------

def qmf_gate_schedule(x: float, rule_biases: np.ndarray, rule_thetas: np.ndarray) -> list[tuple[str, float]]:
    """Gate list of one membership circuit: per layer, Rx/Ry/Rz encoding
    rotations at angle x + bias, then Rx/Ry/Rz at the trainable angles."""
    gates: list[tuple[str, float]] = []
    for layer in range(rule_biases.shape[0]):
        for a, axis in enumerate(ROTATION_AXES):
            gates.append((axis, float(x + rule_biases[layer, a])))
        for a, axis in enumerate(ROTATION_AXES):
            gates.append((axis, float(rule_thetas[layer, a])))
    return gates


def qmf_membership(x: float, rule_index: int, qmf_biases: np.ndarray, qmf_thetas: np.ndarray) -> float:
    """Membership of one feature under one rule: run the single-qubit
    circuit from |0> and map <Z> into [0, 1]."""
    state = qsim.zero_state(1)
    for axis, angle in qmf_gate_schedule(x, qmf_biases[rule_index], qmf_thetas[rule_index]):
        state = qsim.apply_one_qubit(state, 0, qsim.rotation_gate(axis, angle))
    return 0.5 * (qsim.expectation_z(state, 0) + 1.0)


def _rotate_cells(axis: int, angle: np.ndarray, a0: np.ndarray, a1: np.ndarray):
    """One rotation on a grid of independent single-qubit states."""
    half = 0.5 * angle
    if axis == 2:  # z
        return np.exp(-1j * half) * a0, np.exp(1j * half) * a1
    c, s = np.cos(half), np.sin(half)
    if axis == 0:  # x
        return c * a0 - 1j * s * a1, -1j * s * a0 + c * a1
    return c * a0 - s * a1, s * a0 + c * a1  # y


def qmf_forward(features: np.ndarray, qmf_biases: np.ndarray, qmf_thetas: np.ndarray) -> np.ndarray:
    """Memberships (B, m, d): cell [b, i, k] runs rule i's circuit on
    feature k of sample b. Vectorized over all cells at once."""
    b, d = features.shape
    m, layers, _ = qmf_biases.shape
    a0 = np.ones((b, m, d), dtype=complex)
    a1 = np.zeros((b, m, d), dtype=complex)
    x = features[:, None, :]
    for layer in range(layers):
        for axis in range(3):
            a0, a1 = _rotate_cells(axis, x + qmf_biases[None, :, layer, axis, None], a0, a1)
        for axis in range(3):
            angle = np.broadcast_to(qmf_thetas[None, :, layer, axis, None], a0.shape)
            a0, a1 = _rotate_cells(axis, angle, a0, a1)
    return 0.5 * (np.abs(a0) ** 2 - np.abs(a1) ** 2 + 1.0)


def qmf_backward(features: np.ndarray, qmf_biases: np.ndarray, qmf_thetas: np.ndarray,
                 upstream: np.ndarray):
    """Parameter-shift gradients of the membership grid.

    Every angle occurrence is shifted by +-pi/2 for all rules at once;
    that is sound because cell [b, i, k] only ever sees rule i's
    parameters. The encoding shift doubles as the input gradient, since
    the feature enters each encoding rotation as x + bias.
    """
    layers = qmf_biases.shape[1]
    d_bias = np.zeros_like(qmf_biases)
    d_theta = np.zeros_like(qmf_thetas)
    d_x = np.zeros_like(features)
    for layer in range(layers):
        for axis in range(3):
            shifted = qmf_biases.copy()
            shifted[:, layer, axis] += SHIFT
            mu_plus = qmf_forward(features, shifted, qmf_thetas)
            shifted[:, layer, axis] -= 2 * SHIFT
            mu_minus = qmf_forward(features, shifted, qmf_thetas)
            g = 0.5 * (mu_plus - mu_minus) * upstream
            d_bias[:, layer, axis] = g.sum(axis=(0, 2))
            d_x += g.sum(axis=1)

            shifted = qmf_thetas.copy()
            shifted[:, layer, axis] += SHIFT
            mu_plus = qmf_forward(features, qmf_biases, shifted)
            shifted[:, layer, axis] -= 2 * SHIFT
            mu_minus = qmf_forward(features, qmf_biases, shifted)
            g = 0.5 * (mu_plus - mu_minus) * upstream
            d_theta[:, layer, axis] = g.sum(axis=(0, 2))
    return d_x, d_bias, d_theta


# ---------------------------------------------------------------------------
# Rule layer
# ---------------------------------------------------------------------------

def rule_forward(memberships: np.ndarray, rule_kernel: np.ndarray, rule_bias: np.ndarray):
    """Aggregate memberships: permute (B, m, d) -> (B, d, m), slide a
    width-3 kernel along the membership axis (zero padding keeps length m),
    ReLU, permute back."""
    if memberships.ndim != 3 or memberships.shape[1] < 1:
        raise ValueError(f"expected (B, m, d) memberships, got shape {memberships.shape}")
    pre, conv_cache = conv1d_forward(memberships.transpose(0, 2, 1), rule_kernel, rule_bias)
    act, mask = relu_forward(pre)
    return act.transpose(0, 2, 1), (conv_cache, mask)


def rule_backward(upstream: np.ndarray, cache):
    conv_cache, mask = cache
    d_pre = relu_backward(upstream.transpose(0, 2, 1), mask)
    d_perm, d_kernel, d_bias = conv1d_backward(d_pre, conv_cache)
    return d_perm.transpose(0, 2, 1), d_kernel, d_bias


# ---------------------------------------------------------------------------
# Quantum defuzzifier
# ---------------------------------------------------------------------------

def qd_entangler(n_qubits: int) -> list[tuple[int, int]]:
    """Clustered CNOTs: a cyclic triple inside every full cluster of three
    wires, then one wrap-around CNOT from the last qubit of the final full
    cluster to qubit 0 (only if a full cluster exists)."""
    pairs: list[tuple[int, int]] = []
    clusters = n_qubits // 3
    for j in range(clusters):
        a, b, c = 3 * j, 3 * j + 1, 3 * j + 2
        pairs.extend([(a, b), (b, c), (c, a)])
    if clusters >= 1:
        pairs.append((3 * clusters - 1, 0))
    return pairs


def qd_measurements(angles: np.ndarray) -> np.ndarray:
    """Run the defuzzifier register for a batch of angle rows (B, q):
    Rx(angle_j) on qubit j, the clustered CNOTs, then per-qubit
    (<Z> + 1) / 2."""
    b, q = angles.shape
    states = np.zeros((b, 2**q), dtype=complex)
    states[:, 0] = 1.0
    for j in range(q):
        states = qsim.apply_one_qubit_batch(states, j, qsim.rotation_gates_batch("x", angles[:, j]))
    for control, target in qd_entangler(q):
        states = qsim.apply_cnot_batch(states, control, target)
    probs = np.abs(states) ** 2
    out = np.empty((b, q))
    for i in range(q):
        signs = 1.0 - 2.0 * ((np.arange(2**q) >> i) & 1)
        out[:, i] = 0.5 * (probs @ signs + 1.0)
    return out


def qd_forward(rule_acts: np.ndarray, params: ModelParams, n_qubits: int):
    """Crisp output per sample: flatten, project to q rotation angles,
    measure the entangled register, then average the two linear heads."""
    if n_qubits < 3:
        raise ValueError(f"defuzzifier needs at least 3 qubits, got {n_qubits}")
    b = rule_acts.shape[0]
    vec = rule_acts.reshape(b, -1)
    angles = vec @ params.qd_proj_w + params.qd_proj_b
    meas = qd_measurements(angles)
    p = params.qd_w1.shape[0]
    y1 = meas[:, :p] @ params.qd_w1 + params.qd_beta1
    y2 = meas[:, p:] @ params.qd_w2 + params.qd_beta2
    crisp = 0.5 * (y1 + y2)
    return crisp, (vec, angles, meas, rule_acts.shape)


def qd_backward(upstream: np.ndarray, params: ModelParams, cache):
    """Heads and projection are plain linear algebra; the angle gradients
    use one +-pi/2 shift pair per register qubit."""
    vec, angles, meas, acts_shape = cache
    p = params.qd_w1.shape[0]
    q = angles.shape[1]

    half_up = 0.5 * upstream
    d_meas = np.empty_like(meas)
    d_meas[:, :p] = half_up[:, None] * params.qd_w1[None, :]
    d_meas[:, p:] = half_up[:, None] * params.qd_w2[None, :]
    grads = {
        "qd_w1": meas[:, :p].T @ half_up,
        "qd_beta1": np.array(half_up.sum()),
        "qd_w2": meas[:, p:].T @ half_up,
        "qd_beta2": np.array(half_up.sum()),
    }

    d_angles = np.empty_like(angles)
    for j in range(q):
        shifted = angles.copy()
        shifted[:, j] += SHIFT
        meas_plus = qd_measurements(shifted)
        shifted[:, j] -= 2 * SHIFT
        meas_minus = qd_measurements(shifted)
        d_angles[:, j] = (d_meas * 0.5 * (meas_plus - meas_minus)).sum(axis=1)

    grads["qd_proj_w"] = vec.T @ d_angles
    grads["qd_proj_b"] = d_angles.sum(axis=0)
    d_acts = (d_angles @ params.qd_proj_w.T).reshape(acts_shape)
    return d_acts, grads


# ---------------------------------------------------------------------------
# CNN stem and classifier head
# ---------------------------------------------------------------------------

def stem_forward(images: np.ndarray, params: ModelParams):
    """conv 3x3 -> ReLU -> pool, twice, then a linear map to d features."""
    if images.ndim != 4 or images.shape[1] != 1:
        raise ValueError(f"expected images (B, 1, H, W), got shape {images.shape}")
    flat_dim = params.stem_fc_w.shape[0]
    expected = STEM_CHANNELS[1] * (images.shape[2] // 4) * (images.shape[3] // 4)
    if images.shape[2] % 4 or images.shape[3] % 4 or expected != flat_dim:
        raise ValueError(f"image shape {images.shape[2:]} does not match the stem "
                         f"(flattened {expected}, expected {flat_dim})")
    c1, cc1 = conv2d_forward(images, params.conv1_w, params.conv1_b)
    r1, rm1 = relu_forward(c1)
    p1, pc1 = maxpool2x2_forward(r1)
    c2, cc2 = conv2d_forward(p1, params.conv2_w, params.conv2_b)
    r2, rm2 = relu_forward(c2)
    p2, pc2 = maxpool2x2_forward(r2)
    flat = p2.reshape(images.shape[0], -1)
    v, lc = linear_forward(flat, params.stem_fc_w, params.stem_fc_b)
    return v, (cc1, rm1, pc1, cc2, rm2, pc2, p2.shape, lc)


def model_forward(images: np.ndarray, params: ModelParams, config: ModelConfig):
    """Full forward pass; returns (logits, cache)."""
    v, stem_cache = stem_forward(images, params)
    mu = qmf_forward(v, params.qmf_biases, params.qmf_thetas)
    acts, rule_cache = rule_forward(mu, params.rule_kernel, params.rule_bias)
    crisp, qd_cache = qd_forward(acts, params, config.n_qd_qubits)
    fused = np.concatenate([v, crisp[:, None]], axis=1)
    h_pre, fc1_cache = linear_forward(fused, params.fuse_fc1_w, params.fuse_fc1_b)
    h, relu_cache = relu_forward(h_pre)
    logits, fc2_cache = linear_forward(h, params.fuse_fc2_w, params.fuse_fc2_b)
    cache = (v, stem_cache, rule_cache, qd_cache, fc1_cache, relu_cache, fc2_cache)
    return logits, cache


def model_backward(d_logits: np.ndarray, params: ModelParams, config: ModelConfig, cache):
    """Reverse pass producing a gradient for every tensor in ModelParams."""
    v, stem_cache, rule_cache, qd_cache, fc1_cache, relu_cache, fc2_cache = cache
    grads: dict[str, np.ndarray] = {}

    d_h, grads["fuse_fc2_w"], grads["fuse_fc2_b"] = linear_backward(d_logits, fc2_cache)
    d_h_pre = relu_backward(d_h, relu_cache)
    d_fused, grads["fuse_fc1_w"], grads["fuse_fc1_b"] = linear_backward(d_h_pre, fc1_cache)
    d_v = d_fused[:, :-1].copy()
    d_crisp = d_fused[:, -1]

    d_acts, qd_grads = qd_backward(d_crisp, params, qd_cache)
    grads.update(qd_grads)

    d_mu, grads["rule_kernel"], grads["rule_bias"] = rule_backward(d_acts, rule_cache)

    d_v_qmf, grads["qmf_biases"], grads["qmf_thetas"] = qmf_backward(
        v, params.qmf_biases, params.qmf_thetas, d_mu)
    d_v += d_v_qmf

    cc1, rm1, pc1, cc2, rm2, pc2, pooled_shape, lc = stem_cache
    d_flat, grads["stem_fc_w"], grads["stem_fc_b"] = linear_backward(d_v, lc)
    d_p2 = d_flat.reshape(pooled_shape)
    d_r2 = maxpool2x2_backward(d_p2, pc2)
    d_c2 = relu_backward(d_r2, rm2)
    d_p1, grads["conv2_w"], grads["conv2_b"] = conv2d_backward(d_c2, cc2)
    d_r1 = maxpool2x2_backward(d_p1, pc1)
    d_c1 = relu_backward(d_r1, rm1)
    _, grads["conv1_w"], grads["conv1_b"] = conv2d_backward(d_c1, cc1)
    return grads
