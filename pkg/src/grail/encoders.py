"""GNN encoders over binary or relaxed weighted adjacencies.

Both encoder kinds run the same code path for binary and weighted inputs
and are differentiable w.r.t. the adjacency, node features, and their own
parameters, which is what lets evasion attacks backpropagate through the
deployed model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import kernels as K
from .autodiff import Tensor, as_tensor, lift
from .errors import ValidationError
from .seeding import derive_rng

GCN = "gcn"
GIN = "gin"


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = GCN
    num_layers: int = 2
    hidden_dim: int = 64
    dropout: float = 0.0
    activation: str = "relu"  # relu | prelu
    readout: str = "mean"  # mean | sum

    def __post_init__(self):
        if self.kind not in (GCN, GIN):
            raise ValidationError(f"unknown encoder kind {self.kind!r}")
        if self.num_layers < 1:
            raise ValidationError("num_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)")
        if self.activation not in ("relu", "prelu"):
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.readout not in ("mean", "sum"):
            raise ValidationError(f"unknown readout {self.readout!r}")


class EncoderModel:
    """Encoder parameters plus the config that shapes them.

    ``params`` maps stable names to leaf tensors; iteration order is the
    training/update/serialization order.
    """

    def __init__(self, config: EncoderConfig, in_dim: int, seed: int = 0):
        self.config = config
        self.in_dim = in_dim
        self.params: dict[str, Tensor] = {}
        rng = derive_rng(seed, "encoder-init")
        d_in = in_dim
        for layer in range(config.num_layers):
            d_out = config.hidden_dim
            if config.kind == GCN:
                self._add_linear(rng, f"layer{layer}", d_in, d_out)
            else:
                self._add_linear(rng, f"layer{layer}.mlp0", d_in, d_out)
                self._add_linear(rng, f"layer{layer}.mlp1", d_out, d_out)
            if config.activation == "prelu":
                self.params[f"layer{layer}.alpha"] = Tensor(np.full((1, 1), 0.25),
                                                            requires_grad=True)
            d_in = d_out

    def _add_linear(self, rng, name: str, d_in: int, d_out: int) -> None:
        scale = np.sqrt(2.0 / (d_in + d_out))
        self.params[f"{name}.weight"] = Tensor(rng.normal(0.0, scale, (d_in, d_out)),
                                               requires_grad=True)
        self.params[f"{name}.bias"] = Tensor(np.zeros((1, d_out)), requires_grad=True)

    @property
    def out_dim(self) -> int:
        return self.config.hidden_dim

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def checksum(self) -> str:
        """Digest of all parameter bytes; used to verify the evasion contract."""
        return checksum_params(self.params)


def checksum_params(params: dict[str, Tensor]) -> str:
    digest = hashlib.sha256()
    for name in sorted(params):
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(params[name].data).tobytes())
    return digest.hexdigest()


def normalize_adjacency(W) -> Tensor:
    """Differentiable ``D^-1/2 (W + I) D^-1/2`` with row-sum degrees of ``W + I``."""
    w = as_tensor(W)
    N, s = K.normalize_adjacency_forward(w.data)
    return lift(N, ((w, lambda g: K.normalize_adjacency_vjp(g, w.data, s)),))


def relaxed_adjacency(A: np.ndarray, rows: np.ndarray, cols: np.ndarray, p) -> Tensor:
    """Binary adjacency with candidate pairs moved toward their complement.

    Entry ``(r, c)`` (and its mirror) becomes ``A[r, c] + (1 - 2 A[r, c]) * p_e``,
    so weight 0 keeps the entry and weight 1 flips it.  Gradients w.r.t. the
    weights gather both symmetric entries, which is exactly the symmetrized
    adjacency gradient the flip constraint calls for.
    """
    p = as_tensor(p)
    flat = np.ascontiguousarray(p.data.reshape(-1))
    data = K.assemble_relaxed(A, rows, cols, flat)

    def vjp(g):
        return K.pair_flip_grads(g, A, rows, cols).reshape(p.data.shape)

    return lift(data, ((p, vjp),))


def _activate(model: EncoderModel, layer: int, Z: Tensor) -> Tensor:
    if model.config.activation == "prelu":
        alpha = model.params[f"layer{layer}.alpha"]
        return ad.relu(Z) + alpha * (Z - ad.relu(Z))
    return ad.relu(Z)


def _dropout(H: Tensor, rate: float, rng) -> Tensor:
    mask = (rng.random(H.data.shape) >= rate) / (1.0 - rate)
    return H * Tensor(mask)


def encode_nodes(model: EncoderModel, W, X, train_mode: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    """Node representations ``H`` (n x q).

    GCN layers compute ``act(norm(W) @ H @ weight + bias)``; GIN layers
    compute ``MLP(H + W @ H)`` (epsilon fixed to 0, two-layer ReLU MLP).
    Dropout is applied to each layer input only in ``train_mode`` and
    needs an explicit ``rng`` so training stays reproducible.
    """
    cfg = model.config
    W, H = as_tensor(W), as_tensor(X)
    if W.data.shape[0] != H.data.shape[0]:
        raise ValidationError(
            f"adjacency ({W.data.shape}) and features ({H.data.shape}) disagree on n")
    use_dropout = train_mode and cfg.dropout > 0.0
    if use_dropout and rng is None:
        raise ValidationError("train-mode dropout requires an rng")
    norm = normalize_adjacency(W) if cfg.kind == GCN else None
    for layer in range(cfg.num_layers):
        if use_dropout:
            H = _dropout(H, cfg.dropout, rng)
        if cfg.kind == GCN:
            Z = norm @ H @ model.params[f"layer{layer}.weight"] \
                + model.params[f"layer{layer}.bias"]
            H = _activate(model, layer, Z)
        else:
            M = H + ad.weighted_message_pass(W, H)
            hidden = ad.relu(M @ model.params[f"layer{layer}.mlp0.weight"]
                             + model.params[f"layer{layer}.mlp0.bias"])
            H = hidden @ model.params[f"layer{layer}.mlp1.weight"] \
                + model.params[f"layer{layer}.mlp1.bias"]
    return H


def readout(H, kind: str) -> Tensor:
    """Column-wise mean or sum over nodes, shape (1, q)."""
    H = as_tensor(H)
    if kind == "mean":
        return ad.tmean(H, axis=0, keepdims=True)
    if kind == "sum":
        return ad.tsum(H, axis=0, keepdims=True)
    raise ValidationError(f"unknown readout {kind!r}")


def dgi_summary(H) -> Tensor:
    """Graph summary ``sigmoid(mean of node representations)``, shape (1, q)."""
    return ad.sigmoid(ad.tmean(as_tensor(H), axis=0, keepdims=True))


def save_params(params: dict[str, Tensor], meta: dict, stem: str | Path) -> None:
    """Write ``<stem>.json`` (manifest) and ``<stem>.bin`` (little-endian f8 blob)."""
    stem = Path(stem)
    manifest = {"meta": meta, "params": []}
    blob = bytearray()
    for name, tensor in params.items():
        arr = np.ascontiguousarray(tensor.data, dtype="<f8")
        manifest["params"].append({"name": name, "shape": list(arr.shape),
                                   "offset": len(blob)})
        blob.extend(arr.tobytes())
    stem.with_suffix(".json").write_text(json.dumps(manifest, indent=1))
    stem.with_suffix(".bin").write_bytes(bytes(blob))


def load_params(stem: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    blob = stem.with_suffix(".bin").read_bytes()
    arrays = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return arrays, manifest["meta"]


def save_encoder(model: EncoderModel, stem: str | Path) -> None:
    meta = {"type": "encoder", "config": asdict(model.config), "in_dim": model.in_dim}
    save_params(model.params, meta, stem)


def load_encoder(stem: str | Path) -> EncoderModel:
    arrays, meta = load_params(stem)
    if meta.get("type") != "encoder":
        raise ValidationError(f"{stem}: not an encoder checkpoint")
    model = EncoderModel(EncoderConfig(**meta["config"]), meta["in_dim"], seed=0)
    if set(arrays) != set(model.params):
        raise ValidationError(f"{stem}: parameter names do not match config")
    for name, arr in arrays.items():
        if arr.shape != model.params[name].data.shape:
            raise ValidationError(f"{stem}: shape mismatch for {name}")
        model.params[name] = Tensor(arr, requires_grad=True)
    return model
