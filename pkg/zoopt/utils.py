from enum import IntEnum
from typing import Dict

import numpy as np
from pydantic.fields import FieldInfo


class Stream(IntEnum):
    """Purpose tags of the per-run random substreams."""

    SAMPLES = 0
    NOISE = 1
    DIRECTIONS = 2
    OUTPUT = 3


def substream(master_seed: int, seed: int, purpose: Stream) -> np.random.Generator:
    """
    Independent generator for one purpose of one run.

    The key is (seed, purpose) under the master entropy. The sweep point is not
    part of the key, so sweep points share common random numbers and adding a
    point never reshuffles the others.
    """
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(seed, int(purpose)))
    return np.random.default_rng(sequence)


def format_float(value: float) -> str:
    """17 significant digits, enough to replay a float64 bit-exactly."""
    if np.isnan(value):
        return "nan"
    return f"{value:.17g}"


def pydantic_model_fields_to_str(model_fields: Dict[str, FieldInfo]) -> str:
    """ Pydantic model fields to string
    A helper function to convert Pydantic model fields to a string representation to be used in the CLI help.

    Args:
        model_fields: A dictionary of Pydantic model fields

    Returns:
        A string representation of the Pydantic model fields
    """
    field_descriptions = []

    for key, value in model_fields.items():
        value_type = getattr(value.annotation, "__name__", value.annotation)
        value_required = "required" if value.is_required() else f"default {value.default!r}"
        field_descriptions.append(f"{key}: ({value_type}, {value_required})")

    return "\n\n" + "\n\n".join(field_descriptions)
