"""The FOG-Transformer: a time-distributed convolutional block feeding a
transformer encoder and an MLP head, plus its weight archive format."""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from . import seeding
from .errors import CompatibilityError, ContractError, IntegrityError
from .neural.layers import (Conv1D, Dense, Dropout, EncoderBlock, GlobalAveragePool1D, Layer,
                            MaxPool1D, ReLU, Sequential, Sigmoid, TimeDistributed)
from .neural.training import predict_proba

REFERENCE_PARAMETER_TARGET = 87_825
ARCHIVE_MAGIC = b"FOGWARC1"
ARCHIVE_SCHEMA = 1


def default_architecture(n_prev: int = 3) -> dict:
    return {
        "n_prev": n_prev,
        "n_bins": 64,
        "n_channels": 3,
        "conv_filters": [128, 64, 32],
        "kernel_size": 4,
        "n_blocks": 3,
        "heads": 3,
        "head_dim": 32,
        "ff_dim": 16,
        "encoder_dropout": 0.25,
        "mlp_units": [80, 40],
        "mlp_dropout": 0.4,
        # "time": average the encoder output over time steps (D features);
        # "features": average over features (T values)
        "head_pool": "time",
    }


def spec_hash(arch: dict) -> str:
    blob = json.dumps(arch, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class FogTransformer(Sequential):
    def __init__(self, layers, arch: dict, seed: int):
        super().__init__(layers, name="")
        self.arch = arch
        self.seed = seed

    @property
    def n_steps(self) -> int:
        return self.arch["n_prev"] + 1

    @property
    def conv_block(self) -> TimeDistributed:
        return self.layers[0]

    def embed(self, x) -> np.ndarray:
        """Per-time-step conv-block features, (N, T, conv_filters[-1])."""
        return self.conv_block.forward(np.asarray(x, dtype=float), record=False)


def _round_to_float32(model: Layer) -> None:
    for _, layer, key in model.named_parameters():
        layer.params[key] = layer.params[key].astype(np.float32).astype(np.float64)


def build_fog_transformer(n_prev: int = 3, seed: int = 0, **overrides) -> FogTransformer:
    """Build a freshly initialised FOG-Transformer for T = n_prev + 1 steps.

    Initial weights are rounded to float32-representable values so a saved
    archive reproduces the model exactly.
    """
    if n_prev not in (1, 2, 3):
        raise ContractError(f"n_prev must be 1, 2 or 3, got {n_prev}")
    arch = default_architecture(n_prev)
    unknown = set(overrides) - set(arch)
    if unknown:
        raise ContractError(f"unknown architecture fields {sorted(unknown)}")
    arch.update(overrides)
    if arch["head_pool"] not in ("time", "features"):
        raise ContractError("head_pool must be 'time' or 'features'")

    def r(name):
        return seeding.rng(seed, "init", name)

    f1, f2, f3 = arch["conv_filters"]
    k = arch["kernel_size"]
    conv = Sequential([
        # pool before ReLU: identical output (ReLU is monotone) on half the data
        Conv1D(arch["n_channels"], f1, k, rng=r("conv1"), name="conv1", input_grad=False),
        MaxPool1D("pool1"), ReLU("relu1"),
        Conv1D(f1, f2, k, rng=r("conv2"), name="conv2"), MaxPool1D("pool2"), ReLU("relu2"),
        Conv1D(f2, f3, k, rng=r("conv3"), name="conv3"), ReLU("relu3"), GlobalAveragePool1D(1, "gap"),
    ], name="conv_block")
    layers: list[Layer] = [TimeDistributed(conv, name="td")]
    for b in range(arch["n_blocks"]):
        layers.append(EncoderBlock(f3, arch["heads"], arch["head_dim"], arch["ff_dim"],
                                   arch["encoder_dropout"], rng=r(f"encoder{b + 1}"),
                                   name=f"encoder{b + 1}"))
    if arch["head_pool"] == "time":
        layers.append(GlobalAveragePool1D(1, "gap_time"))
        width = f3
    else:
        layers.append(GlobalAveragePool1D(2, "gap_features"))
        width = n_prev + 1
    for i, units in enumerate(arch["mlp_units"], start=1):
        layers += [Dense(width, units, rng=r(f"dense{i}"), name=f"dense{i}"), ReLU(f"dense{i}_relu"),
                   Dropout(arch["mlp_dropout"], name=f"dense{i}_dropout")]
        width = units
    out = len(arch["mlp_units"]) + 1
    layers += [Dense(width, 1, rng=r(f"dense{out}"), name=f"dense{out}"), Sigmoid("output")]
    model = FogTransformer(layers, arch, seed)
    _round_to_float32(model)
    return model


def count_trainable_parameters(model: Layer) -> tuple[int, "OrderedDict[str, int]"]:
    """Total trainable parameters and a per-layer breakdown."""
    breakdown: OrderedDict[str, int] = OrderedDict()
    for name, layer, key in model.named_parameters():
        parts = name.split(".")
        if parts[0] == "td":
            group = parts[2]  # td.conv_block.convN
        elif parts[0].startswith("encoder"):
            group = ".".join(parts[:2])
        else:
            group = parts[0]
        breakdown[group] = breakdown.get(group, 0) + layer.params[key].size
    return sum(breakdown.values()), breakdown


def parameter_report(model: FogTransformer) -> str:
    total, breakdown = count_trainable_parameters(model)
    lines = [f"{name:<22}{n:>8,}" for name, n in breakdown.items()]
    delta = total - REFERENCE_PARAMETER_TARGET
    lines.append(f"{'total':<22}{total:>8,}")
    lines.append(f"{'reference target':<22}{REFERENCE_PARAMETER_TARGET:>8,}  "
                 f"(delta {delta:+,}, {100.0 * delta / REFERENCE_PARAMETER_TARGET:+.2f}%)")
    return "\n".join(lines)


def predict(model: FogTransformer, batch) -> np.ndarray:
    """Inference-mode FOG probabilities for (N, T, 64, 3) standardised input."""
    x = np.asarray(batch, dtype=float)
    expected = (model.n_steps, model.arch["n_bins"], model.arch["n_channels"])
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ContractError(f"expected input (N, {expected[0]}, {expected[1]}, {expected[2]}), got {x.shape}")
    return predict_proba(model, x)


# --- weight archive -------------------------------------------------------

def save_weights(model: FogTransformer, path, extra: dict | None = None) -> None:
    """Manifest JSON followed by named little-endian float32 arrays.

    Layout: 8-byte magic, uint64 LE manifest length, manifest, payload.
    """
    entries, chunks, offset = [], [], 0
    for name, layer, key in model.named_parameters():
        a = np.ascontiguousarray(layer.params[key], dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset, "length": int(a.size)})
        chunks.append(a.tobytes())
        offset += a.size
    payload = b"".join(chunks)
    manifest = {
        "schema_version": ARCHIVE_SCHEMA,
        "model_name": "fog_transformer",
        "architecture": model.arch,
        "spec_hash": spec_hash(model.arch),
        "creation_seed": int(model.seed),
        "dtype": "float32-le",
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "arrays": entries,
    }
    if extra:
        manifest["extra"] = extra
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def read_archive(path) -> tuple[dict, dict]:
    """(manifest, name -> float64 array), with integrity checks."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != ARCHIVE_MAGIC:
        raise IntegrityError(f"{path}: not a weight archive")
    (mlen,) = struct.unpack("<Q", data[8:16])
    if 16 + mlen > len(data):
        raise IntegrityError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[16:16 + mlen])
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IntegrityError(f"{path}: corrupt manifest ({exc})") from exc
    payload = data[16 + mlen:]
    expected = sum(e["length"] for e in manifest["arrays"])
    if len(payload) != 4 * expected:
        raise IntegrityError(f"{path}: payload holds {len(payload) // 4} values, manifest lists {expected}")
    if hashlib.sha256(payload).hexdigest() != manifest.get("payload_sha256"):
        raise IntegrityError(f"{path}: payload checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f4")
    arrays = {}
    for e in manifest["arrays"]:
        if int(np.prod(e["shape"], dtype=np.int64)) != e["length"]:
            raise IntegrityError(f"{path}: array {e['name']} shape {e['shape']} != length {e['length']}")
        arrays[e["name"]] = flat[e["offset"]:e["offset"] + e["length"]].reshape(e["shape"]).astype(np.float64)
    return manifest, arrays


def load_weights(path, into: FogTransformer | None = None) -> FogTransformer:
    """Load an archive, into ``into`` if given (architectures must match)."""
    manifest, arrays = read_archive(path)
    arch = manifest["architecture"]
    if spec_hash(arch) != manifest["spec_hash"]:
        raise IntegrityError(f"{path}: spec hash does not match the stored architecture")
    if into is None:
        into = build_fog_transformer(seed=manifest["creation_seed"], **arch)
    elif spec_hash(into.arch) != manifest["spec_hash"]:
        raise CompatibilityError(f"{path}: archive architecture {manifest['spec_hash']} does not "
                                 f"match the target model {spec_hash(into.arch)}")
    names = {name for name, _, _ in into.named_parameters()}
    if names != set(arrays):
        raise CompatibilityError(f"{path}: parameter names differ from the target model")
    for name, layer, key in into.named_parameters():
        if arrays[name].shape != layer.params[key].shape:
            raise CompatibilityError(f"{path}: {name} has shape {arrays[name].shape}")
        layer.params[key] = arrays[name].copy()
    return into
