"""Base64 array payloads used by the JSON file formats."""

import base64
from typing import List

import numpy as np
from pydantic import BaseModel, Field

_ALLOWED_DTYPES = ("<f8", "<f4", "<i8", "<i4", "|u1", "|b1")


class ArrayPayload(BaseModel):
    """A numpy array stored as little-endian base64 bytes."""

    dtype: str = Field(..., description="numpy dtype string, little-endian")
    shape: List[int] = Field(..., description="Array shape")
    data: str = Field(..., description="Base64 encoded raw bytes")

    def to_numpy(self) -> np.ndarray:
        if self.dtype not in _ALLOWED_DTYPES:
            raise ValueError(f"Unsupported dtype {self.dtype}")
        raw = base64.b64decode(self.data)
        array = np.frombuffer(raw, dtype=np.dtype(self.dtype)).copy()
        return array.reshape(self.shape)


def encode_array(array: np.ndarray) -> ArrayPayload:
    """Encode an array without losing precision."""
    array = np.asarray(array)
    if array.dtype == np.bool_:
        array = array.astype("|b1")
    elif array.dtype.kind == "f":
        array = array.astype("<f8")
    elif array.dtype.kind in "iu" and array.dtype != np.uint8:
        array = array.astype("<i8")
    contiguous = np.ascontiguousarray(array)
    return ArrayPayload(
        dtype=contiguous.dtype.str,
        shape=list(contiguous.shape),
        data=base64.b64encode(contiguous.tobytes()).decode("utf-8"),
    )


def decode_array(payload: ArrayPayload) -> np.ndarray:
    return payload.to_numpy()
