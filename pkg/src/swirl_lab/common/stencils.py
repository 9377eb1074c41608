#!/usr/bin/env python3
"""Shared grid numerics: quintic ramps, ghost padding and 4-point Lagrange stencils."""
from __future__ import annotations

from enum import Enum

import numpy as np

__all__ = [
    "GHOST",
    "interpolation_matrix",
    "lagrange_weights",
    "pad",
    "Parity",
    "sample_padded",
    "smoothstep",
    "smoothstep_derivative",
    "smoothstep_integral",
    "soft_cutoff"
]

GHOST = 2


class Parity(Enum):
    Even = "even"
    Odd = "odd"

    @property
    def sign(self) -> float:
        return 1.0 if self is Parity.Even else -1.0


def smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


def smoothstep_derivative(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return 30.0 * u ** 2 * (1.0 - u) ** 2


def smoothstep_integral(u: np.ndarray) -> np.ndarray:
    """Antiderivative of the ramp, zero below 0 and growing as u - 1/2 above 1."""
    u = np.asarray(u, dtype=float)
    c = np.clip(u, 0.0, 1.0)
    inner = c ** 4 * (2.5 - 3.0 * c + c ** 2)
    return np.where(u > 1.0, u - 0.5, inner)


def soft_cutoff(eta: np.ndarray, width: float = 0.1) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return smoothstep(eta / width) * smoothstep((1.0 - eta) / width)


def pad(v: np.ndarray, r_parity: Parity = Parity.Even, z_parity: Parity = Parity.Odd) -> np.ndarray:
    """Return v with GHOST layers on every side.

    rho = 0 and both eta ends reflect with the given parities. rho = 1 uses cubic extrapolation.
    """
    g = GHOST
    rows, cols = v.shape
    p = np.zeros((rows + 2 * g, cols + 2 * g))
    p[g:g + rows, g:g + cols] = v

    inner = slice(g, g + cols)
    for k in range(1, g + 1):
        p[g - k, inner] = r_parity.sign * v[k]
    last = g + rows - 1
    for k in range(1, g + 1):
        row = last + k
        p[row, inner] = 4.0 * p[row - 1, inner] - 6.0 * p[row - 2, inner] + 4.0 * p[row - 3, inner] - p[row - 4, inner]

    last = g + cols - 1
    for k in range(1, g + 1):
        p[:, g - k] = z_parity.sign * p[:, g + k]
        p[:, last + k] = z_parity.sign * p[:, last - k]
    return p


def lagrange_weights(xi: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Cubic weights at fractional node positions xi over nodes base-1..base+2."""
    xi = np.asarray(xi, dtype=float)
    base = np.clip(np.floor(xi).astype(int), 0, n - 1)
    t = xi - base
    weights = np.stack([
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0
    ], axis=-1)
    return base, weights


def interpolation_matrix(xi: np.ndarray, n: int) -> np.ndarray:
    """Dense matrix mapping a padded axis of n + 1 + 2 * GHOST values onto positions xi."""
    base, weights = lagrange_weights(xi, n)
    matrix = np.zeros((base.size, n + 1 + 2 * GHOST))
    rows = np.arange(base.size)
    for a in range(4):
        # padded index of node base - 1 + a
        matrix[rows, base + a + GHOST - 1] += weights[:, a]
    return matrix


def sample_padded(padded: np.ndarray, rho: np.ndarray, eta: np.ndarray, n2: int, n1: int) -> np.ndarray:
    """Tensor cubic interpolation of a padded grid at scattered node positions."""
    br, wr = lagrange_weights(rho, n2)
    bz, wz = lagrange_weights(eta, n1)
    out = np.zeros(np.shape(br))
    for a in range(4):
        for b in range(4):
            out += wr[..., a] * wz[..., b] * padded[br + a + GHOST - 1, bz + b + GHOST - 1]
    return out
