"""Dense linear-algebra helpers (LAPACK pivoted LU under the hood)."""

import numpy as np


def logdet(m):
    """Return ``(sign, log|det m|)``.

    The empty 0x0 matrix has determinant 1. An exactly singular matrix gives
    ``(0.0, -inf)``; callers decide whether that is an error.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"logdet needs a square matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        return 1.0, 0.0
    if not np.all(np.isfinite(m)):
        raise ValueError("logdet of a non-finite matrix")
    sign, value = np.linalg.slogdet(m)
    return float(sign), float(value)


def det(m):
    sign, value = logdet(m)
    return sign * np.exp(value)


def batched_logdet(stack):
    """``logdet`` over a (B, k, k) stack; k = 0 yields zeros with sign 1."""
    stack = np.asarray(stack, dtype=float)
    if stack.shape[-1] == 0:
        return np.ones(stack.shape[0]), np.zeros(stack.shape[0])
    return np.linalg.slogdet(stack)


def solve(a, b):
    return np.linalg.solve(a, b)


def inverse(m):
    m = np.asarray(m, dtype=float)
    if m.shape[0] == 0:
        return np.zeros((0, 0))
    return np.linalg.inv(m)

