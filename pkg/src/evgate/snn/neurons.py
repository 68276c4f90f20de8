"""Integrate-and-fire dynamics and the rectangular surrogate gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatchError


@dataclass(frozen=True)
class NeuronParams:
    """LIF/IF membrane parameters.

    ``leak`` is the multiplicative decay applied to the membrane each step:
    1.0 gives integrate-and-fire, values below 1.0 leak toward ``v_rest``.
    ``reset_mode`` picks what happens after a spike: "hard" snaps the
    membrane back to ``v_rest``, "soft" subtracts the threshold.
    """

    v_th: float = 1.0
    v_rest: float = 0.0
    leak: float = 0.9
    reset_mode: str = "hard"

    def __post_init__(self):
        if not self.v_th > self.v_rest:
            raise ValueError(f"v_th {self.v_th} must exceed v_rest {self.v_rest}")
        if not 0.0 < self.leak <= 1.0:
            raise ValueError(f"leak {self.leak} outside (0, 1]")
        if self.reset_mode not in ("hard", "soft"):
            raise ValueError(f"unknown reset mode {self.reset_mode!r}")


@dataclass(frozen=True)
class SurrogateParams:
    """Rectangular surrogate window: height 1/width over |u - v_th| < width/2."""

    width: float = 1.0
    v_th: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"surrogate width {self.width} must be > 0")


def lif_step(state: np.ndarray, input_current: np.ndarray, params: NeuronParams):
    """One membrane update: integrate, threshold, reset.

    Returns (spikes, new_state). Spikes are {0, 1} floats. Fired entries are
    reset (hard: to v_rest, soft: minus v_th); the rest keep the decayed and
    integrated potential.
    """
    state = np.asarray(state, dtype=float)
    input_current = np.asarray(input_current, dtype=float)
    if state.shape != input_current.shape:
        raise ShapeMismatchError(
            f"state {state.shape} vs input {input_current.shape}"
        )
    v = params.leak * state + input_current
    spikes = (v >= params.v_th).astype(v.dtype)
    if params.reset_mode == "hard":
        new_state = np.where(spikes > 0, params.v_rest, v)
    else:
        new_state = np.where(spikes > 0, v - params.v_th, v)
    return spikes, new_state


def surrogate_grad(u, params: SurrogateParams):
    """Backward-pass stand-in for the spike step's derivative.

    1/width inside the window centered on the threshold, zero outside.
    Works elementwise on arrays and on scalars.
    """
    u = np.asarray(u, dtype=float)
    g = (np.abs(u - params.v_th) < params.width / 2.0) / params.width
    return float(g) if g.ndim == 0 else g


def heaviside_spike(u: np.ndarray, v_th: float) -> np.ndarray:
    """Forward spike function: 1 where the membrane reaches threshold."""
    return (u >= v_th).astype(np.asarray(u).dtype)


# Smooth drop-in used by gradient checking ("surrogate-exact" mode): the
# step becomes a steep sigmoid whose analytic derivative is exact, so the
# whole network is differentiable end to end.
EXACT_MODE_TEMPERATURE = 0.2


def sigmoid_spike(u: np.ndarray, v_th: float, temperature: float = EXACT_MODE_TEMPERATURE):
    z = (np.asarray(u, dtype=float) - v_th) / temperature
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid_spike_grad(u: np.ndarray, v_th: float, temperature: float = EXACT_MODE_TEMPERATURE):
    s = sigmoid_spike(u, v_th, temperature)
    return s * (1.0 - s) / temperature
