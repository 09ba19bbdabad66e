"""Python bindings for the flash private inference library."""

from ._flashpi import (
    Ciphertext,
    Client,
    Context,
    FlashError,
    Model,
    Params,
    default_params,
    drot,
    load_model,
    oracle_infer,
    quantize_input,
    run_inference,
)

__all__ = [
    "Ciphertext",
    "Client",
    "Context",
    "FlashError",
    "Model",
    "Params",
    "default_params",
    "drot",
    "load_model",
    "oracle_infer",
    "quantize_input",
    "run_inference",
]
