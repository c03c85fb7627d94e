"""Free-point energy minimization on the sphere, with analytic references.

This is the validation harness for the energy machinery: N unconstrained
points on S^(d-1) are driven to low energy by projected gradient descent
(step, renormalize, halve the step on any increase), and the result is
compared against exactly known optimal configurations - the antipodal
pair, the equilateral triangle, and the regular tetrahedron, octahedron,
and icosahedron. If the analytic gradients were wrong anywhere, these
optima would be unreachable.
"""

from dataclasses import dataclass

import numpy as np

from .energy import FilterBank, MheConfig, layer_energy
from .errors import IncompatibleShape, InvalidConfig

SHAPES = ("antipodal", "triangle", "tetrahedron", "octahedron", "icosahedron")

_GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0


@dataclass
class PointSet:
    """Unit-row point matrix plus the accepted-energy trace that led to it."""

    points: np.ndarray
    energy_history: list[float]


def reference_coordinates(shape: str) -> np.ndarray:
    """Exact unit coordinates of the named optimal configuration."""
    if shape == "antipodal":
        return np.array([[1.0, 0.0], [-1.0, 0.0]])
    if shape == "triangle":
        thirds = 2.0 * np.pi / 3.0
        return np.array([[np.cos(k * thirds), np.sin(k * thirds)] for k in range(3)])
    if shape == "tetrahedron":
        raw = np.array(
            [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
        )
        return raw / np.sqrt(3.0)
    if shape == "octahedron":
        return np.concatenate([np.eye(3), -np.eye(3)])
    if shape == "icosahedron":
        p = _GOLDEN
        raw = np.array(
            [
                [0.0, 1.0, p], [0.0, -1.0, p], [0.0, 1.0, -p], [0.0, -1.0, -p],
                [1.0, p, 0.0], [-1.0, p, 0.0], [1.0, -p, 0.0], [-1.0, -p, 0.0],
                [p, 0.0, 1.0], [p, 0.0, -1.0], [-p, 0.0, 1.0], [-p, 0.0, -1.0],
            ]
        )
        return raw / np.sqrt(1.0 + p * p)
    raise IncompatibleShape(f"unknown shape {shape!r}; expected one of {SHAPES}")


def reference_energy(shape: str, config: MheConfig) -> float:
    """Ordered-pair energy of the named configuration under `config`."""
    coords = reference_coordinates(shape)
    return layer_energy(FilterBank(coords), config).energy


def shape_for_points(n_points: int) -> str | None:
    """The reference shape with n_points vertices, if one is catalogued."""
    return {2: "antipodal", 3: "triangle", 4: "tetrahedron", 6: "octahedron", 12: "icosahedron"}.get(
        n_points
    )


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def minimize_energy(
    n_points: int,
    dim: int,
    config: MheConfig,
    steps: int = 2000,
    restarts: int = 8,
    step_size: float = 0.1,
    seed: int = 0,
) -> tuple[float, PointSet]:
    """Projected gradient descent from `restarts` Gaussian starts.

    Each trial step moves against the gradient and renormalizes rows; if
    the energy rises the step is halved and retried, so the accepted
    history is non-increasing. Ties across restarts resolve to the lowest
    restart index.
    """
    if n_points < 2 or dim < 2:
        raise InvalidConfig(f"need n_points >= 2 and dim >= 2, got ({n_points}, {dim})")
    if steps < 1 or restarts < 1 or not step_size > 0:
        raise InvalidConfig("steps and restarts must be >= 1 and step_size positive")
    best_energy = np.inf
    best_set: PointSet | None = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        points = _normalize_rows(rng.standard_normal((n_points, dim)))
        result = layer_energy(FilterBank(points), config)
        energy, gradient = result.energy, result.gradient
        history = [energy]
        step = step_size
        for _ in range(steps):
            while True:
                trial = _normalize_rows(points - step * gradient)
                trial_result = layer_energy(FilterBank(trial), config)
                if trial_result.energy <= energy:
                    break
                step *= 0.5
                if step < 1e-18:
                    break
            if trial_result.energy > energy:
                break  # no descent direction left at float resolution
            points = trial
            energy = trial_result.energy
            gradient = trial_result.gradient
            history.append(energy)
            step = min(step * 1.3, step_size)
        if energy < best_energy:
            best_energy = energy
            best_set = PointSet(points, history)
    assert best_set is not None
    return float(best_energy), best_set
