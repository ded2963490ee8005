"""Truncated spectral model of the internally controlled heat equation.

The domain is (0, pi) with Dirichlet boundary, eigenpairs
lambda_j = j^2 and e_j(x) = sqrt(2/pi) sin(jx).  States and controls are
represented by their coefficient vectors in this basis, so Euclidean norms
coincide with L2 norms.  The control acts through the window omega = (l, r)
via the Gram matrix B_{jk} = (2/pi) * int_l^r sin(jx) sin(kx) dx.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "SpectralSystem",
    "PiecewiseControl",
    "build_system",
    "free_flow",
    "terminal_map",
    "slice_weights",
    "control_to_terminal",
    "control_to_terminal_adjoint",
]


def _sine_product_integral(j: int, k: int, l: float, r: float) -> float:
    """Exact antiderivative of int_l^r sin(jx) sin(kx) dx."""
    if j == k:
        return (r - l) / 2.0 - (np.sin(2 * j * r) - np.sin(2 * j * l)) / (4 * j)
    return (np.sin((j - k) * r) - np.sin((j - k) * l)) / (2 * (j - k)) - (
        np.sin((j + k) * r) - np.sin((j + k) * l)) / (2 * (j + k))


@dataclass(frozen=True, eq=False)
class SpectralSystem:
    """Truncated heat dynamics plus the control-coupling Gram matrix."""

    n_modes: int
    eigenvalues: np.ndarray      # lambda_j = j^2, strictly increasing
    omega: tuple[float, float]   # control window (l, r) in (0, pi)
    gram: np.ndarray             # (J, J), symmetric PSD

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.gram.setflags(write=False)

    def to_dict(self) -> dict:
        return {"n_modes": int(self.n_modes), "omega": [float(self.omega[0]), float(self.omega[1])]}


@dataclass(frozen=True)
class PiecewiseControl:
    """Piecewise-constant control: one spectral coefficient vector per slice.

    Slices partition (0, horizon) uniformly; the represented control's
    L-infinity-in-time, L2-in-space norm is the max of the slice norms.
    """

    horizon: float
    slices: np.ndarray   # (n_slices, J)

    def __post_init__(self):
        self.slices.setflags(write=False)

    @property
    def n_slices(self) -> int:
        return self.slices.shape[0]

    @property
    def n_modes(self) -> int:
        return self.slices.shape[1]

    def slice_norms(self) -> np.ndarray:
        return np.linalg.norm(self.slices, axis=1)

    def sup_norm(self) -> float:
        return float(self.slice_norms().max()) if self.n_slices else 0.0

    @staticmethod
    def zero(horizon: float, n_slices: int, n_modes: int) -> "PiecewiseControl":
        return PiecewiseControl(horizon, np.zeros((n_slices, n_modes)))


def build_system(n_modes: int, omega: tuple[float, float]) -> SpectralSystem:
    """Assemble the truncated system for the window omega = (l, r).

    Gram entries use the exact sine-product antiderivatives; no quadrature.
    """
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    l, r = float(omega[0]), float(omega[1])
    if not (0.0 <= l < r <= np.pi + 1e-12):
        raise ValueError(f"invalid control window: need 0 <= l < r <= pi, got ({l}, {r})")
    r = min(r, np.pi)
    J = int(n_modes)
    gram = np.empty((J, J))
    for j in range(1, J + 1):
        for k in range(j, J + 1):
            v = (2.0 / np.pi) * _sine_product_integral(j, k, l, r)
            gram[j - 1, k - 1] = v
            gram[k - 1, j - 1] = v
    eigenvalues = np.arange(1, J + 1, dtype=float) ** 2
    floor = np.linalg.eigvalsh(gram).min()
    if floor < -1e-10:
        raise AssertionError(f"gram not PSD: eigenvalue floor {floor}")
    return SpectralSystem(J, eigenvalues, (l, r), gram)


def free_flow(sys: SpectralSystem, y0: np.ndarray, t: float) -> np.ndarray:
    """Uncontrolled semigroup action: coefficient-wise exp(-lambda_j t)."""
    if t < 0:
        raise ValueError(f"free_flow needs t >= 0, got {t}")
    return np.exp(-sys.eigenvalues * t) * np.asarray(y0, dtype=float)


@lru_cache(maxsize=512)
def _weights_cached(sys: SpectralSystem, horizon: float, n_slices: int):
    lam = sys.eigenvalues
    edges = np.linspace(0.0, horizon, n_slices + 1)
    upper = np.exp(-np.outer(horizon - edges[1:], lam))
    lower = np.exp(-np.outer(horizon - edges[:-1], lam))
    w = (upper - lower) / lam
    w.setflags(write=False)
    # Gram factor of the control-to-state map, used by the least-norm polish:
    # K = sum_i (diag(w_i) B)(diag(w_i) B)^T
    G = np.zeros((sys.n_modes, sys.n_modes))
    B2 = sys.gram @ sys.gram
    for i in range(n_slices):
        G += np.outer(w[i], w[i]) * B2
    G.setflags(write=False)
    return w, G


def slice_weights(sys: SpectralSystem, horizon: float, n_slices: int) -> np.ndarray:
    """Per-slice mode weights w[i, j] = int_slice_i exp(-lambda_j (T - s)) ds."""
    return _weights_cached(sys, float(horizon), int(n_slices))[0]


def control_gram(sys: SpectralSystem, horizon: float, n_slices: int) -> np.ndarray:
    """K = L L* for the control-to-terminal-state map L."""
    return _weights_cached(sys, float(horizon), int(n_slices))[1]


def control_to_terminal(sys: SpectralSystem, w: np.ndarray, slices: np.ndarray) -> np.ndarray:
    """L v = sum_i diag(w_i) B v_i : contribution of the control to y(T)."""
    return (w * (slices @ sys.gram)).sum(axis=0)


def control_to_terminal_adjoint(sys: SpectralSystem, w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """L* z, rows B diag(w_i) z.  B is symmetric."""
    return (w * z) @ sys.gram


def terminal_map(sys: SpectralSystem, y0: np.ndarray, v: PiecewiseControl) -> np.ndarray:
    """Terminal state y(T; y0, v) of the sliced Duhamel formula."""
    if v.horizon <= 0:
        raise ValueError(f"control horizon must be positive, got {v.horizon}")
    if v.n_modes != sys.n_modes:
        raise ValueError(f"slice dimension {v.n_modes} != n_modes {sys.n_modes}")
    w = slice_weights(sys, v.horizon, v.n_slices)
    return free_flow(sys, y0, v.horizon) + control_to_terminal(sys, w, v.slices)
