"""Named parameters with gradient and momentum buffers, SGD and checkpoints."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

# Checkpoint layout, all integers little-endian:
#   magic        8 bytes  b"PLCKPT\x00\x01"
#   version      u32
#   count        u64      number of named tensors
#   per tensor:  u32 name length, UTF-8 name, u32 rank,
#                rank x u64 extents, prod(extents) x f64 data (row-major)
MAGIC = b"PLCKPT\x00\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    velocity: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        # np.require keeps 0-d arrays 0-d, unlike ascontiguousarray
        self.value = np.require(np.asarray(self.value, dtype=np.float64), requirements="C")
        self.grad = np.zeros_like(self.value)
        self.velocity = np.zeros_like(self.value)


class ParamSet:
    """Ordered mapping of parameter name to :class:`Param`."""

    def __init__(self, values: Mapping[str, np.ndarray] | None = None) -> None:
        self._params: dict[str, Param] = {}
        for name, value in (values or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray) -> Param:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Param(np.array(value, dtype=np.float64))
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def value(self, name: str) -> np.ndarray:
        return self._params[name].value

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        p = self._params[name]
        if np.shape(grad) != p.grad.shape:
            raise ValueError(f"gradient for {name!r} has shape {np.shape(grad)}, parameter is {p.grad.shape}")
        p.grad += grad

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad.fill(0.0)

    def num_values(self) -> int:
        return sum(p.value.size for p in self._params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self._params.items()}


def sgd_momentum_step(params: ParamSet, lr: float, momentum: float) -> None:
    """``v <- momentum * v + g``; ``w <- w - lr * v``; then zero the gradients."""
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
    for _, p in params.items():
        p.velocity *= momentum
        p.velocity += p.grad
        p.value -= lr * p.velocity
        p.grad.fill(0.0)


def save_tensors(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<IQ", FORMAT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.require(np.asarray(arr, dtype="<f8"), requirements="C")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a pairlock checkpoint (bad magic)")
    pos = 8

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError(f"{path}: truncated checkpoint")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, count = take("<IQ")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = buf[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = take("<I")
        shape = take(f"<{rank}Q") if rank else ()
        n = int(np.prod(shape)) if rank else 1
        if pos + 8 * n > len(buf):
            raise CheckpointError(f"{path}: truncated data for tensor {name!r}")
        data = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).astype(np.float64)
        pos += 8 * n
        out[name] = data.reshape(shape)
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return out
