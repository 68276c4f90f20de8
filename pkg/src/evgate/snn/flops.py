"""Operation counting for spiking layers: accumulate vs multiply-accumulate.

Per layer,

    acc = spikes_in * (kernel_h // stride) * (kernel_w // stride) * c_out
          + timesteps * c_out * h_out * w_out
          + spikes_out
    mac = timesteps * c_out * h_out * w_out

Kernel/stride division uses floor semantics. The spike counts come from a
recorded SpikeTrace of an actual forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

from .layers import LayerActivity
from .network import SpikeTrace


@dataclass(frozen=True)
class LayerFlopSpec:
    kernel_h: int
    kernel_w: int
    stride: int
    c_out: int
    h_out: int
    w_out: int
    timesteps: int
    spikes_in: int
    spikes_out: int

    def __post_init__(self):
        if min(self.kernel_h, self.kernel_w, self.stride, self.c_out,
               self.h_out, self.w_out, self.timesteps) <= 0:
            raise ValueError("layer dimensions must be positive")
        if self.spikes_in < 0 or self.spikes_out < 0:
            raise ValueError("spike counts must be >= 0")


def flops_acc(spec: LayerFlopSpec) -> int:
    fan = (spec.kernel_h // spec.stride) * (spec.kernel_w // spec.stride) * spec.c_out
    static = spec.timesteps * spec.c_out * spec.h_out * spec.w_out
    return spec.spikes_in * fan + static + spec.spikes_out


def flops_mac(spec: LayerFlopSpec) -> int:
    return spec.timesteps * spec.c_out * spec.h_out * spec.w_out


def layer_flop_spec(activity: LayerActivity) -> LayerFlopSpec:
    return LayerFlopSpec(
        kernel_h=activity.kernel_h, kernel_w=activity.kernel_w,
        stride=activity.stride, c_out=activity.c_out,
        h_out=activity.h_out, w_out=activity.w_out,
        timesteps=activity.timesteps,
        spikes_in=activity.spikes_in, spikes_out=activity.spikes_out,
    )


def trace_flops(trace: SpikeTrace) -> tuple[int, int]:
    """(total acc, total mac) over every layer of one forward pass."""
    acc = mac = 0
    for layer in trace.layers:
        spec = layer_flop_spec(layer)
        acc += flops_acc(spec)
        mac += flops_mac(spec)
    return acc, mac


def activation_rate(trace: SpikeTrace) -> float:
    """Fraction of spiking neurons that emitted at least one spike."""
    neurons = trace.total_spiking_neurons()
    if neurons == 0:
        return 0.0
    return trace.total_fired() / neurons
