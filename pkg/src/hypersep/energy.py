"""Hyperspherical energy of filter banks.

A filter bank is an (N, D) matrix whose rows are treated as points on the
unit sphere S^{D-1} after row normalization. The energy of a bank is a sum
of pairwise repulsion terms over *ordered* pairs (i, k), i != k, so each
unordered pair contributes twice:

    E = sum_{i != k} kernel(dist(u_i, u_k))

where dist is either the chord length ||u_i - u_k|| ("euclidean") or the
great-circle angle arccos(u_i . u_k) ("angular"), and the kernel is
z**(-s) for s in {1, 2} or -log(z) for s = 0. In "half" space each row is
paired with its antipode, i.e. the energy is evaluated on the 2N-row stack
[U; -U]; this treats a filter and its negation as the same direction.

All functions return energies over ordered pairs and analytic gradients
with respect to the *unnormalized* weights (the chain rule through row
normalization is applied here, once). Distances smaller than the config's
``clamp_epsilon`` are clamped before the kernel is applied; clamped pairs
contribute a constant to the energy and nothing to the gradient.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBank, InvalidConfig, NonPositiveDistance, ZeroNormFilter

SPACES = ("full", "half")
DISTANCES = ("euclidean", "angular")
S_POWERS = (0, 1, 2)

# Dot products are kept this far inside [-1, 1] before arccos so the
# derivative 1/sqrt(1 - t^2) stays finite. Pairs that hit the clip bound
# are treated as constants (zero gradient), like distance-clamped pairs.
_DOT_MARGIN = 1e-12

# Cap on the scratch block (in float64 elements) used when forming
# pairwise row differences; keeps peak memory around 32 MB per block.
_BLOCK_BUDGET = 4_000_000


@dataclass(frozen=True)
class MheConfig:
    """Selects one of the 12 energy variants.

    space: "full" uses the N rows as-is, "half" appends each row's antipode.
    distance: "euclidean" chord length or "angular" arc length.
    s_power: kernel exponent; 0 selects the logarithmic kernel.
    clamp_epsilon: distances below this are clamped to it.
    """

    space: str = "full"
    distance: str = "euclidean"
    s_power: int = 0
    clamp_epsilon: float = 1e-12

    def __post_init__(self):
        if self.space not in SPACES:
            raise InvalidConfig(f"space must be one of {SPACES}, got {self.space!r}")
        if self.distance not in DISTANCES:
            raise InvalidConfig(f"distance must be one of {DISTANCES}, got {self.distance!r}")
        if self.s_power not in S_POWERS:
            raise InvalidConfig(f"s_power must be one of {S_POWERS}, got {self.s_power!r}")
        if not self.clamp_epsilon > 0:
            raise InvalidConfig("clamp_epsilon must be positive")

    def label(self) -> str:
        return f"{self.space}/{self.distance}/s{self.s_power}"


def all_configs(clamp_epsilon: float = 1e-12) -> list[MheConfig]:
    """All 12 (space, distance, s_power) combinations."""
    return [
        MheConfig(space, distance, s, clamp_epsilon)
        for space in SPACES
        for distance in DISTANCES
        for s in S_POWERS
    ]


@dataclass
class FilterBank:
    """One layer's filters flattened to an (N, D) float64 matrix.

    For a 1D conv layer with weights (C_out, C_in, K) the bank is the
    C-order reshape to (C_out, C_in * K): N = C_out rows, one per output
    channel, each row the channel's taps laid out channel-major. Biases
    are never part of a bank.
    """

    weights: np.ndarray
    layer_id: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise InvalidConfig(f"bank weights must be a non-empty 2D matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidConfig(f"bank for layer {self.layer_id} contains non-finite entries")
        self.weights = w

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]


@dataclass
class EnergyResult:
    """Energy value, gradient w.r.t. the bank's raw weights, clamp count.

    clamped_pairs counts ordered pairs whose raw distance fell below the
    clamp threshold (coincident or antipodal directions, typically).
    """

    energy: float
    gradient: np.ndarray
    clamped_pairs: int


def project_to_sphere(
    weights: np.ndarray, clamp_epsilon: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize a matrix; returns (unit rows, original row norms).

    Raises ZeroNormFilter naming the first offending row if any norm is
    below clamp_epsilon.
    """
    w = np.asarray(weights, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", w, w))
    small = np.flatnonzero(norms < clamp_epsilon)
    if small.size:
        row = int(small[0])
        raise ZeroNormFilter(row, float(norms[row]))
    return w / norms[:, None], norms


def repulsion(z: float, s_power: int) -> float:
    """Pair repulsion kernel: z**(-s) for s in {1, 2}, -log(z) for s = 0."""
    if not z > 0:
        raise NonPositiveDistance(f"kernel undefined at distance {z!r}")
    if s_power == 0:
        return float(-np.log(z))
    if s_power == 1:
        return 1.0 / z
    if s_power == 2:
        return 1.0 / (z * z)
    raise InvalidConfig(f"s_power must be one of {S_POWERS}, got {s_power!r}")


def pair_distance(a: np.ndarray, b: np.ndarray, distance: str, clamp_epsilon: float = 1e-12) -> float:
    """Distance between two unit vectors under the chosen metric, clamped below."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if distance == "euclidean":
        d = float(np.sqrt(np.sum((a - b) ** 2)))
    elif distance == "angular":
        t = float(np.clip(np.dot(a, b), -1.0 + _DOT_MARGIN, 1.0 - _DOT_MARGIN))
        d = float(np.arccos(t))
    else:
        raise InvalidConfig(f"distance must be one of {DISTANCES}, got {distance!r}")
    return max(d, clamp_epsilon)


def _pairwise_chords(points: np.ndarray) -> np.ndarray:
    """All-pairs euclidean distances via direct row differences.

    Computed blockwise as sqrt(sum((p_i - p_k)^2)) rather than from the
    Gram matrix: the Gram route loses half the significant digits for
    nearly coincident rows, and downstream kernels (1/z^2 especially)
    amplify that loss.
    """
    m, d = points.shape
    out = np.empty((m, m))
    block = max(1, min(m, _BLOCK_BUDGET // max(1, m * d)))
    for start in range(0, m, block):
        diff = points[start : start + block, None, :] - points[None, :, :]
        np.sqrt(np.einsum("ijk,ijk->ij", diff, diff), out=out[start : start + block])
    return out


def _kernel_and_slope(dist: np.ndarray, s_power: int) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise kernel values and derivatives on a (clamped) distance matrix."""
    if s_power == 0:
        return -np.log(dist), -1.0 / dist
    if s_power == 1:
        inv = 1.0 / dist
        return inv, -(inv * inv)
    inv2 = 1.0 / (dist * dist)
    return inv2, -2.0 * inv2 / dist


def layer_energy(bank: FilterBank, config: MheConfig) -> EnergyResult:
    """Ordered-pair energy of one bank plus its analytic weight gradient."""
    unit, norms = project_to_sphere(bank.weights, config.clamp_epsilon)
    n = unit.shape[0]
    if config.space == "half":
        points = np.concatenate([unit, -unit], axis=0)
    else:
        points = unit
    m = points.shape[0]
    if m < 2:
        raise DegenerateBank(bank.layer_id, f"bank for layer {bank.layer_id} has a single direction")

    off_diag = ~np.eye(m, dtype=bool)
    if config.distance == "euclidean":
        raw = _pairwise_chords(points)
        dot_clipped = np.zeros((m, m), dtype=bool)
    else:
        gram = points @ points.T
        dot_clipped = (gram <= -1.0 + _DOT_MARGIN) | (gram >= 1.0 - _DOT_MARGIN)
        raw = np.arccos(np.clip(gram, -1.0 + _DOT_MARGIN, 1.0 - _DOT_MARGIN))

    clamped = (raw < config.clamp_epsilon) & off_diag
    dist = np.maximum(raw, config.clamp_epsilon)
    values, slopes = _kernel_and_slope(dist, config.s_power)
    energy = float(values[off_diag].sum())

    # Each unordered pair appears as (i, k) and (k, i); both contribute the
    # same derivative w.r.t. point i, hence the factor 2 below. Pairs whose
    # distance (or arccos argument) was clamped are constants: zero slope.
    live = off_diag & ~clamped
    if config.distance == "euclidean":
        coef = np.where(live, 2.0 * slopes / dist, 0.0)
        grad_points = coef.sum(axis=1)[:, None] * points - coef @ points
    else:
        live &= ~dot_clipped
        gram_clipped = np.clip(points @ points.T, -1.0 + _DOT_MARGIN, 1.0 - _DOT_MARGIN)
        inv_sin = 1.0 / np.sqrt(1.0 - gram_clipped * gram_clipped)
        coef = np.where(live, 2.0 * slopes * inv_sin, 0.0)
        grad_points = -(coef @ points)

    if config.space == "half":
        grad_unit = grad_points[:n] - grad_points[n:]
    else:
        grad_unit = grad_points

    # Chain rule through row normalization u = w / ||w||: the Jacobian
    # projects out the radial component and divides by the row norm.
    radial = np.einsum("ij,ij->i", unit, grad_unit)
    gradient = (grad_unit - radial[:, None] * unit) / norms[:, None]

    return EnergyResult(energy, gradient, int(np.count_nonzero(clamped)))


def normalized_layer_energy(bank: FilterBank, config: MheConfig) -> EnergyResult:
    """Energy divided by the ordered pair count N'(N'-1), N' = 2N in half space."""
    result = layer_energy(bank, config)
    n_eff = 2 * bank.n_filters if config.space == "half" else bank.n_filters
    scale = 1.0 / (n_eff * (n_eff - 1))
    return EnergyResult(result.energy * scale, result.gradient * scale, result.clamped_pairs)


def mhe_penalty(
    banks: list[FilterBank], config: MheConfig, lambda_h: float
) -> tuple[float, list[np.ndarray]]:
    """Total penalty lambda_h * sum of normalized bank energies, with per-bank gradients.

    A zero lambda_h short-circuits: the penalty is exactly 0.0 and every
    gradient is an exact zero array, with no energy evaluation (so banks
    that would be degenerate do not raise).
    """
    if not banks:
        raise InvalidConfig("mhe_penalty needs at least one filter bank")
    if lambda_h < 0 or not np.isfinite(lambda_h):
        raise InvalidConfig(f"lambda_h must be finite and non-negative, got {lambda_h!r}")
    if lambda_h == 0.0:
        return 0.0, [np.zeros_like(b.weights) for b in banks]
    total = 0.0
    gradients = []
    for bank in banks:
        result = normalized_layer_energy(bank, config)
        total += result.energy
        gradients.append(lambda_h * result.gradient)
    return lambda_h * total, gradients
