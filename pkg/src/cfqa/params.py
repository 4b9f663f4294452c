"""Named trainable parameters with optimizer slots and checkpoint I/O.

Checkpoint layout (version 1, little-endian throughout):

    magic    8 bytes  b"CFQACKP1"
    hash_len u16      length of the config-hash string
    hash     utf-8    config hash of the run that wrote the file
    count    u32      number of parameters
    per parameter:
        name_len u16, name utf-8
        dtype    u8   (0 = float32, 1 = float64)
        ndim     u8
        extents  u32 * ndim
        payload  raw little-endian floats, row-major
"""

from __future__ import annotations

import struct
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import ContractError, DataError
from .optim import AdaDeltaSlot, adadelta_update
from .tensor import Tensor, default_dtype

_MAGIC = b"CFQACKP1"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ParamStore:
    """Insertion-ordered map of named parameter tensors.

    Every parameter owns an AdaDelta slot. Creation order is fixed by the
    model-building code, which makes seeded initialization reproducible.
    """

    def __init__(self, rho: float = 0.95, eps: float = 1e-6):
        self._params: dict[str, Tensor] = {}
        self._slots: dict[str, AdaDeltaSlot] = {}
        self.rho = rho
        self.eps = eps

    def create(self, name: str, shape, rng: np.random.Generator,
               fan_in: Optional[int] = None,
               init: Optional[Callable] = None) -> Tensor:
        """Create one trainable tensor. Default init is uniform +-1/sqrt(fan_in)."""
        if name in self._params:
            raise ContractError(f"parameter {name!r} already exists")
        dtype = default_dtype()
        if init is not None:
            data = np.asarray(init(shape), dtype=dtype)
        elif fan_in == 0:
            data = np.zeros(shape, dtype=dtype)
        else:
            if fan_in is None:
                fan_in = shape[0] if len(shape) > 1 else shape[-1]
            data = uniform_fan_in(rng, shape, fan_in, dtype)
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        self._slots[name] = AdaDeltaSlot(shape, rho=self.rho, eps=self.eps, dtype=dtype)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._params.items())

    def n_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def apply_gradients(self) -> int:
        """One AdaDelta step for every parameter that received a gradient.

        Step sizes come entirely from the accumulator RMS ratio; the rule
        has no learning-rate knob. Returns the number of parameters updated.
        """
        updated = 0
        for name, p in self._params.items():
            if p.grad is None:
                continue
            g = np.asarray(p.grad, dtype=p.data.dtype)
            adadelta_update(p.data, g, self._slots[name])
            p.grad = None
            updated += 1
        return updated

    def state_bytes(self) -> bytes:
        """Concatenated raw parameter payloads, for bit-identity checks."""
        return b"".join(np.ascontiguousarray(p.data).tobytes()
                        for p in self._params.values())


def save_checkpoint(path, store: ParamStore, config_hash: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        encoded = config_hash.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(struct.pack("<I", len(store.names())))
        for name, p in store.items():
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            code = _DTYPE_CODES[np.dtype(p.data.dtype)]
            fh.write(struct.pack("<BB", code, p.data.ndim))
            for extent in p.data.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(np.ascontiguousarray(p.data).astype(
                _CODE_DTYPES[code], copy=False).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    """Read a checkpoint, returning (name -> array, config_hash)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != _MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    off = 8

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, blob, off)
        off += size
        return vals

    (hash_len,) = take("<H")
    config_hash = blob[off:off + hash_len].decode("utf-8")
    off += hash_len
    (count,) = take("<I")
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        code, ndim = take("<BB")
        if code not in _CODE_DTYPES:
            raise DataError(f"{path}: unknown dtype code {code} for {name!r}")
        shape = tuple(take("<I")[0] for _ in range(ndim))
        dtype = _CODE_DTYPES[code]
        n = int(np.prod(shape)) if shape else 1
        payload = np.frombuffer(blob, dtype=dtype, count=n, offset=off).reshape(shape)
        off += n * dtype.itemsize
        params[name] = payload.copy()
    if off != len(blob):
        raise DataError(f"{path}: {len(blob) - off} trailing bytes")
    return params, config_hash


def restore_into(store: ParamStore, params: dict[str, np.ndarray]) -> None:
    """Overwrite a store's values from a loaded checkpoint."""
    missing = set(store.names()) - set(params)
    extra = set(params) - set(store.names())
    if missing or extra:
        raise DataError(
            f"checkpoint does not match model: missing={sorted(missing)}, "
            f"unexpected={sorted(extra)}")
    for name, p in store.items():
        arr = params[name]
        if arr.shape != p.data.shape:
            raise DataError(f"checkpoint shape {arr.shape} for {name!r}, "
                            f"model expects {p.data.shape}")
        p.data = arr.astype(p.data.dtype, copy=True)
