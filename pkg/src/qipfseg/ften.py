"""FTEN binary tensor files.

Layout, all little-endian: magic "FTEN", version u32, rank u32, then
rank u32 dims, then the row-major float64 payload.  Trivial to emit from
any framework, so externally computed feature tensors can replace the
built-in toy model end to end.
"""

import struct

import numpy as np

from .errors import BadMagic, DimensionOverflow, IoFailure, TruncatedFile
from .toymodel import FeatureTensor, _softmax

MAGIC = b"FTEN"
VERSION = 1
_U32_MAX = 2**32 - 1
MAX_RANK = 32


def write_tensor(array, path):
    """Write a float64 ndarray; lossless round-trip with read_tensor."""
    array = np.asarray(array, dtype=np.float64)
    if array.ndim > MAX_RANK or any(dim > _U32_MAX for dim in array.shape):
        raise DimensionOverflow(f"shape {array.shape} does not fit the header")
    header = MAGIC + struct.pack("<II", VERSION, array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(array).astype("<f8").tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_tensor(path):
    """Read an FTEN file back into a float64 ndarray."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 12:
        raise TruncatedFile(f"{path}: header incomplete")
    version, rank = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    if rank > MAX_RANK:
        raise DimensionOverflow(f"{path}: rank {rank} exceeds {MAX_RANK}")
    if len(blob) < 12 + 4 * rank:
        raise TruncatedFile(f"{path}: dims incomplete")
    dims = struct.unpack_from(f"<{rank}I", blob, 12)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    start = 12 + 4 * rank
    if len(blob) < start + 8 * count:
        raise TruncatedFile(f"{path}: payload shorter than header claims")
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
    return data.reshape(dims).copy()


def store_features(ft, path):
    """Persist a FeatureTensor's pre-softmax features (H x W x F)."""
    write_tensor(ft.features, path)


def load_features(path):
    """Rebuild a FeatureTensor from stored pre-softmax features."""
    features = read_tensor(path)
    probs = _softmax(features)
    return FeatureTensor(features, probs, np.argmax(probs, axis=-1))
