from .neurons import NeuronParams, SurrogateParams, lif_step, surrogate_grad
from .layers import ForwardContext, LayerActivity
from .network import (
    BUILTIN_SPECS,
    DESK_SPEC,
    GRADCHECK_SPEC,
    NetworkSpec,
    REFERENCE_SPEC,
    SegSNNnet,
    SpikeTrace,
    expected_parameter_count,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
)
from .flops import (
    LayerFlopSpec,
    activation_rate,
    flops_acc,
    flops_mac,
    layer_flop_spec,
    trace_flops,
)
from .train import Adam, TrainHistory, softmax_cross_entropy, train_network, train_step

__all__ = [
    "Adam",
    "BUILTIN_SPECS",
    "DESK_SPEC",
    "ForwardContext",
    "GRADCHECK_SPEC",
    "LayerActivity",
    "LayerFlopSpec",
    "NetworkSpec",
    "NeuronParams",
    "REFERENCE_SPEC",
    "SegSNNnet",
    "SpikeTrace",
    "SurrogateParams",
    "TrainHistory",
    "activation_rate",
    "expected_parameter_count",
    "flops_acc",
    "flops_mac",
    "layer_flop_spec",
    "lif_step",
    "load_checkpoint",
    "parameter_count",
    "save_checkpoint",
    "softmax_cross_entropy",
    "surrogate_grad",
    "trace_flops",
    "train_network",
    "train_step",
]
