"""Decoder banks: K conditional sequence models sharing most parameters."""

from .adapter import AdapterLayer, adapter_forward, init_adapter, relu
from .base import (
    BOS,
    EOS,
    MAX_CONTEXT_LEN,
    MAX_RESPONSE_LEN,
    PAD,
    Sample,
    Vocab,
    validate_sample,
)
from .decoding import DecodeResult, beam_decode, greedy_decode
from .io import load_bank, save_bank
from .neural import (
    SHARED_PARAMS,
    NeuralBank,
    backward,
    grad_step,
    init_neural_bank,
    reset_adapters,
    log_prob,
)
from .tabular import (
    TabularBank,
    init_tabular_bank,
    tabular_bank_from_data,
    tabular_mstep,
)

__all__ = [
    "AdapterLayer",
    "adapter_forward",
    "init_adapter",
    "relu",
    "BOS",
    "EOS",
    "PAD",
    "MAX_CONTEXT_LEN",
    "MAX_RESPONSE_LEN",
    "Sample",
    "Vocab",
    "validate_sample",
    "DecodeResult",
    "beam_decode",
    "greedy_decode",
    "load_bank",
    "save_bank",
    "SHARED_PARAMS",
    "NeuralBank",
    "backward",
    "grad_step",
    "init_neural_bank",
    "reset_adapters",
    "log_prob",
    "TabularBank",
    "init_tabular_bank",
    "tabular_bank_from_data",
    "tabular_mstep",
]
