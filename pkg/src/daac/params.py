"""Named trainable-tensor collections and the on-disk checkpoint format.

A checkpoint directory holds:
  manifest.json — {"magic": "DAAC-CKPT", "version": 1,
                   "params": [{"name", "shape", "offset"}, ...]}
  params.bin    — concatenated 64-bit little-endian floats; `offset` is the
                  byte offset of each tensor's block, in manifest order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import ContractError, FormatError

CKPT_MAGIC = "DAAC-CKPT"
CKPT_VERSION = 1


class ParamStore:
    """Ordered mapping of parameter names to requires-grad tensors."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value)
        t.requires_grad = True
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    def items(self):
        return list(self._params.items())

    def n_params(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]):
        for k, t in self._params.items():
            if k not in values:
                raise FormatError(f"missing parameter {k!r}")
            arr = np.asarray(values[k], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise FormatError(
                    f"parameter {k!r} shape {arr.shape} != expected {t.data.shape}")
            t.data = arr.copy()

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        offset = 0
        blobs = []
        for name, t in self._params.items():
            blob = t.data.astype("<f8").tobytes()
            entries.append({"name": name, "shape": list(t.data.shape),
                            "offset": offset})
            offset += len(blob)
            blobs.append(blob)
        manifest = {"magic": CKPT_MAGIC, "version": CKPT_VERSION, "params": entries}
        (directory / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n")
        (directory / "params.bin").write_bytes(b"".join(blobs))

    @staticmethod
    def read(directory) -> dict[str, np.ndarray]:
        """Read a checkpoint directory into {name: array}."""
        directory = Path(directory)
        mpath = directory / "manifest.json"
        bpath = directory / "params.bin"
        if not mpath.is_file() or not bpath.is_file():
            raise FormatError(f"checkpoint incomplete at {directory}")
        manifest = json.loads(mpath.read_text())
        if manifest.get("magic") != CKPT_MAGIC:
            raise FormatError("bad checkpoint magic")
        if manifest.get("version") != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {manifest.get('version')}")
        raw = bpath.read_bytes()
        out = {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            n = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            end = start + 8 * n
            if end > len(raw):
                raise FormatError(f"checkpoint blob truncated at {entry['name']!r}")
            arr = np.frombuffer(raw[start:end], dtype="<f8").reshape(shape)
            out[entry["name"]] = arr.astype(np.float64)
        return out

    def load(self, directory):
        self.load_values(ParamStore.read(directory))


class Adam:
    """Adam optimizer over a ParamStore; state is plain float64 buffers."""

    def __init__(self, store: ParamStore, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(v.data) for k, v in store.items()}
        self._v = {k: np.zeros_like(v.data) for k, v in store.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.store.items():
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= b1
            m += (1.0 - b1) * p.grad
            v *= b2
            v += (1.0 - b2) * (p.grad * p.grad)
            p.data = p.data - self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
