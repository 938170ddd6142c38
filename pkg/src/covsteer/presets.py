"""Benchmark systems and reference trajectories used by the experiments."""

from __future__ import annotations

import numpy as np

from .system_sim import GroundTruthSystem

PAPER_4STATE = "paper-4state"
PAPER_3STATE = "paper-3state"


def paper_4state() -> GroundTruthSystem:
    """4-state / 2-input / 2-output benchmark with p*ell = n (no reduction)."""
    A = np.array([[0.5, 1.0, 0.0, 0.0],
                  [0.0, 0.5, 0.0, 0.0],
                  [0.0, 0.0, 0.3, 1.0],
                  [0.0, 0.0, 0.0, 0.3]])
    B = np.array([[1.0, -0.7],
                  [0.0, 1.0],
                  [0.5, -0.2],
                  [0.0, 0.5]])
    C = np.array([[1.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 1.0, 0.0]])
    return GroundTruthSystem(A=A, B=B, C=C,
                             Sigma_w=0.1 ** 2 * np.eye(4),
                             Sigma_q=0.2 ** 2 * np.eye(2))


def paper_3state() -> GroundTruthSystem:
    """3-state / 2-input / 2-output benchmark with p*ell > n (rank reduction)."""
    A = 0.55 * np.array([[-0.5, 1.4, 0.4],
                         [-0.9, 0.3, -1.5],
                         [1.1, 1.0, -0.4]])
    B = np.array([[0.1, -0.3],
                  [-0.1, -0.7],
                  [0.7, -1.0]])
    C = np.array([[1.0, 0.0, 0.0],
                  [0.0, 1.0, 0.0]])
    return GroundTruthSystem(A=A, B=B, C=C,
                             Sigma_w=0.1 ** 2 * np.eye(3),
                             Sigma_q=0.1 ** 2 * np.eye(2))


def get_preset(name: str) -> GroundTruthSystem:
    if name == PAPER_4STATE:
        return paper_4state()
    if name == PAPER_3STATE:
        return paper_3state()
    raise ValueError(f"unknown preset {name!r}; expected "
                     f"{PAPER_4STATE!r} or {PAPER_3STATE!r}")


def lissajous_reference(N: int, amplitude: float = 10.0,
                        theta_final: float = 1.6 * np.pi) -> np.ndarray:
    """2-D Lissajous output reference from the origin.

    y_k = amplitude * [sin(2 theta_k), sin(theta_k)] with theta_k sweeping
    linearly to theta_final. The default endpoint at theta = 1.6*pi is
    amplitude * (-0.5878, -0.9511).

    Returns:
        (N+1, 2) array of reference points.
    """
    theta = theta_final * np.arange(N + 1) / N
    return amplitude * np.column_stack([np.sin(2 * theta), np.sin(theta)])
