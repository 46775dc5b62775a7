"""Spiking networks trained with surrogate gradients, decoded by current mean."""

from .autodiff import SurrogateConfig, Tape, surrogate_grad, surrogate_value
from .network import LayerSpec, NetworkSpec, decode_cmd, decode_rate, direct_encode, forward, init_params
from .neuron import IFConfig, NeuronState, heaviside, if_step, run_layer, synaptic_current

__version__ = "0.1.0"
