"""A small differentiable sequence model with a token head and a 3-way class head.

Forward pass for one sequence of token ids ``x`` (length l)::

    e_j = E[x_j]
    c_j = mean(e_0 .. e_j)                   # causal prefix mean
    h_j = tanh(e_j W + c_j U + b)
    token_logits_j = h_j Wo + bo             # next-token scores over the vocabulary
    class_logits   = mean(h_0 .. h_{p-1}) Wc + bc   # p = prompt length

Gradients are written out by hand; ``grad_check`` compares them with finite
differences.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .losses import N_CLASSES, LogitTensor

PARAM_NAMES = ("E", "W", "U", "b", "Wo", "bo", "Wc", "bc")
MAGIC = b"CFTM"


@dataclass
class _Cache:
    ids: np.ndarray
    e: np.ndarray
    c: np.ndarray
    h: np.ndarray
    pooled: np.ndarray
    prompt_len: int


class ToyModel:
    def __init__(self, vocab_size: int, dim: int = 16, seed: int = 0, params: dict | None = None):
        self.vocab_size = int(vocab_size)
        self.dim = int(dim)
        self.seed = int(seed)
        if params is None:
            rng = np.random.default_rng(seed)
            d, V = self.dim, self.vocab_size
            params = {
                "E": rng.normal(0.0, 0.5, (V, d)),
                "W": rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)),
                "U": rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)),
                "b": np.zeros(d),
                "Wo": rng.normal(0.0, 1.0 / np.sqrt(d), (d, V)),
                "bo": np.zeros(V),
                "Wc": rng.normal(0.0, 1.0 / np.sqrt(d), (d, N_CLASSES)),
                "bc": np.zeros(N_CLASSES),
            }
        self.params = {k: np.array(params[k], dtype=np.float64) for k in PARAM_NAMES}
        self._check_shapes()

    def _check_shapes(self):
        d, V = self.dim, self.vocab_size
        want = {"E": (V, d), "W": (d, d), "U": (d, d), "b": (d,), "Wo": (d, V), "bo": (V,),
                "Wc": (d, N_CLASSES), "bc": (N_CLASSES,)}
        for k, shape in want.items():
            if self.params[k].shape != shape:
                raise ValueError(f"parameter {k} has shape {self.params[k].shape}, expected {shape}")

    # -- parameters

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in PARAM_NAMES])

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.n_params:
            raise ValueError("flat parameter vector has wrong size")
        off = 0
        for k in PARAM_NAMES:
            p = self.params[k]
            self.params[k] = theta[off:off + p.size].reshape(p.shape).copy()
            off += p.size

    def copy(self) -> "ToyModel":
        return ToyModel(self.vocab_size, self.dim, self.seed, {k: v.copy() for k, v in self.params.items()})

    # -- computation

    def forward(self, input_ids, prompt_len: int | None = None, return_cache: bool = False):
        P = self.params
        ids = np.asarray(input_ids, dtype=np.int64)
        l = ids.size
        p = l if prompt_len is None else int(prompt_len)
        e = P["E"][ids]
        c = np.cumsum(e, axis=0) / np.arange(1, l + 1)[:, None]
        h = np.tanh(e @ P["W"] + c @ P["U"] + P["b"])
        pooled = h[:p].mean(axis=0)
        out = LogitTensor(h @ P["Wo"] + P["bo"], pooled @ P["Wc"] + P["bc"])
        if return_cache:
            return out, _Cache(ids, e, c, h, pooled, p)
        return out

    def backward(self, cache: _Cache, d_token: np.ndarray, d_class: np.ndarray, grads: dict | None = None) -> dict:
        """Accumulate parameter gradients into ``grads`` (created if None)."""
        P = self.params
        if grads is None:
            grads = {k: np.zeros_like(v) for k, v in P.items()}
        h, e, c, p = cache.h, cache.e, cache.c, cache.prompt_len
        l = h.shape[0]
        grads["Wo"] += h.T @ d_token
        grads["bo"] += d_token.sum(axis=0)
        dh = d_token @ P["Wo"].T
        grads["Wc"] += np.outer(cache.pooled, d_class)
        grads["bc"] += d_class
        dh[:p] += (P["Wc"] @ d_class) / p
        da = dh * (1.0 - h * h)
        grads["W"] += e.T @ da
        grads["U"] += c.T @ da
        grads["b"] += da.sum(axis=0)
        de = da @ P["W"].T
        dc = (da @ P["U"].T) / np.arange(1, l + 1)[:, None]
        de += np.cumsum(dc[::-1], axis=0)[::-1]
        np.add.at(grads["E"], cache.ids, de)
        return grads

    def predict_class(self, input_ids, prompt_len: int) -> int:
        out = self.forward(np.asarray(input_ids)[:prompt_len], prompt_len)
        return int(np.argmax(out.class_logits))

    def generate(self, prompt_ids, max_new_tokens: int, eos_id: int | None = None) -> list[int]:
        """Greedy continuation of ``prompt_ids``."""
        seq = [int(t) for t in prompt_ids]
        out = []
        for _ in range(max_new_tokens):
            logits = self.forward(seq).token_logits[-1]
            nxt = int(np.argmax(logits))
            if eos_id is not None and nxt == eos_id:
                break
            out.append(nxt)
            seq.append(nxt)
        return out

    # -- persistence

    def save(self, path: str | Path, extra_header: dict | None = None) -> int:
        """Flat little-endian float64 payload preceded by a JSON header.

        Layout: ``b"CFTM"`` + uint32 header length + header JSON + payload.
        """
        theta = self.flat().astype("<f8")
        header = {
            "format": "cotforge.toy_model",
            "version": 1,
            "vocab_size": self.vocab_size,
            "dim": self.dim,
            "seed": self.seed,
            "params": [{"name": k, "shape": list(self.params[k].shape)} for k in PARAM_NAMES],
            "payload_sha256": hashlib.sha256(theta.tobytes()).hexdigest(),
        }
        if extra_header:
            header.update(extra_header)
        hb = json.dumps(header, sort_keys=True).encode("utf-8")
        blob = MAGIC + struct.pack("<I", len(hb)) + hb + theta.tobytes()
        Path(path).write_bytes(blob)
        return len(blob)

    @classmethod
    def load(cls, path: str | Path) -> tuple["ToyModel", dict]:
        blob = Path(path).read_bytes()
        if blob[:4] != MAGIC:
            raise ValueError(f"{path} is not a toy model file")
        (n,) = struct.unpack("<I", blob[4:8])
        header = json.loads(blob[8:8 + n].decode("utf-8"))
        theta = np.frombuffer(blob[8 + n:], dtype="<f8").astype(np.float64)
        if hashlib.sha256(blob[8 + n:]).hexdigest() != header["payload_sha256"]:
            raise ValueError(f"{path}: payload checksum mismatch")
        model = cls(header["vocab_size"], header["dim"], header["seed"])
        model.set_flat(theta)
        return model, header
