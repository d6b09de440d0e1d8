from typing import Annotated

import numpy as np
from pydantic import BaseModel, ConfigDict, PlainSerializer, PlainValidator


def _as_float_array(value) -> np.ndarray:
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr


def _as_index_array(value) -> np.ndarray:
    arr = np.array(value, dtype=np.int64).reshape(-1)
    arr.setflags(write=False)
    return arr


# Read-only numpy arrays that serialize as plain lists
FloatArray = Annotated[
    np.ndarray,
    PlainValidator(_as_float_array),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]
IndexArray = Annotated[
    np.ndarray,
    PlainValidator(_as_index_array),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]


class FrozenModel(BaseModel):
    """Immutable value object; safe to share between threads and processes"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)
