"""Network weight format: JSON manifest + little-endian float32 binary.

Conv weights are stored [out-channel][in-channel][kernel-row][kernel-col] with
the bias appended per layer; byte offsets live in the manifest.  An optional
sha256 checksum of the whole binary payload is verified on load.  Values are
widened to float64 on load.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .models import ACTIVATIONS, POOL_KINDS, ConvLayer, NetworkSpec, PoolLayer

FORMAT_NAME = "convstack-weights-v1"


class NetworkFormatError(ValueError):
    """Raised when a manifest or weight binary is malformed or inconsistent."""


def _checksum(payload: bytes) -> str:
    return "sha256:" + hashlib.sha256(payload).hexdigest()


def save_network(net: NetworkSpec, manifest_path, weights_path, source: str = "divsynth") -> None:
    """Write a weighted network to the manifest + binary pair."""
    net.validate()
    if net.weights is None:
        raise NetworkFormatError("cannot save a network without weights")
    chunks: list[bytes] = []
    offset = 0
    layer_entries = []
    for layer, pair in zip(net.layers, net.weights):
        if isinstance(layer, ConvLayer):
            w, b = pair
            wbytes = np.ascontiguousarray(w, dtype="<f4").tobytes()
            bbytes = np.ascontiguousarray(b, dtype="<f4").tobytes()
            entry = {
                "kind": "conv",
                "out_channels": layer.out_channels,
                "in_channels": int(w.shape[1]),
                "kernel": list(layer.kernel),
                "stride": layer.stride,
                "padding": layer.padding,
                "activation": layer.activation,
                "weights_offset": offset,
                "weights_bytes": len(wbytes),
                "bias_offset": offset + len(wbytes),
                "bias_bytes": len(bbytes),
            }
            chunks.append(wbytes)
            chunks.append(bbytes)
            offset += len(wbytes) + len(bbytes)
        else:
            entry = {
                "kind": "pool",
                "pool": layer.kind,
                "size": layer.size,
                "stride": layer.effective_stride,
            }
        layer_entries.append(entry)
    payload = b"".join(chunks)
    manifest = {
        "format": FORMAT_NAME,
        "source": source,
        "input_channels": net.input_channels,
        "layers": layer_entries,
        "total_bytes": len(payload),
        "checksum": _checksum(payload),
    }
    Path(weights_path).write_bytes(payload)
    Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_floats(payload: bytes, offset: int, nbytes: int, shape, what: str) -> np.ndarray:
    if offset < 0 or offset + nbytes > len(payload):
        raise NetworkFormatError(f"{what}: byte range [{offset}, {offset + nbytes}) "
                                 f"outside payload of {len(payload)} bytes")
    expected = 4 * int(np.prod(shape))
    if nbytes != expected:
        raise NetworkFormatError(f"{what}: {nbytes} bytes do not match shape {tuple(shape)} "
                                 f"({expected} bytes)")
    arr = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset)
    return arr.astype(np.float64).reshape(shape)


def load_network(manifest_path, weights_path) -> NetworkSpec:
    """Load a manifest + binary pair back into a weighted NetworkSpec."""
    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"malformed manifest JSON: {exc}") from exc
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT_NAME:
        raise NetworkFormatError(f"manifest format is not {FORMAT_NAME!r}")
    payload = Path(weights_path).read_bytes()
    total = manifest.get("total_bytes")
    if total is not None and total != len(payload):
        raise NetworkFormatError(f"weight binary is {len(payload)} bytes, "
                                 f"manifest declares {total}")
    declared = manifest.get("checksum")
    if declared is not None and declared != _checksum(payload):
        raise NetworkFormatError("checksum mismatch: weight binary does not match manifest")

    layers: list = []
    weights: list = []
    channels = manifest.get("input_channels")
    if not isinstance(channels, int) or channels < 1:
        raise NetworkFormatError("manifest input_channels must be a positive int")
    cursor = -1
    for i, entry in enumerate(manifest.get("layers", [])):
        kind = entry.get("kind")
        if kind == "conv":
            activation = entry.get("activation", "linear")
            if activation not in ACTIVATIONS:
                raise NetworkFormatError(f"layer {i}: unsupported activation {activation!r}")
            kernel = tuple(entry["kernel"])
            out_ch = entry["out_channels"]
            in_ch = entry.get("in_channels", channels)
            if in_ch != channels:
                raise NetworkFormatError(f"layer {i}: expects {in_ch} input channels, "
                                         f"preceding stack provides {channels}")
            for off_key in ("weights_offset", "bias_offset"):
                if entry[off_key] <= cursor:
                    raise NetworkFormatError(f"layer {i}: {off_key} not strictly ascending")
                cursor = entry[off_key]
            w = _read_floats(payload, entry["weights_offset"], entry["weights_bytes"],
                             (out_ch, in_ch, *kernel), f"layer {i} weights")
            b = _read_floats(payload, entry["bias_offset"], entry["bias_bytes"],
                             (out_ch,), f"layer {i} bias")
            layers.append(ConvLayer(out_ch, kernel, entry.get("stride", 1),
                                    entry.get("padding", 0), activation))
            weights.append((w, b))
            channels = out_ch
        elif kind == "pool":
            pool = entry.get("pool", "max")
            if pool not in POOL_KINDS:
                raise NetworkFormatError(f"layer {i}: unsupported pool kind {pool!r}")
            layers.append(PoolLayer(pool, entry["size"], entry.get("stride")))
            weights.append(None)
        else:
            raise NetworkFormatError(f"layer {i}: unsupported layer kind {kind!r}")
    if not layers:
        raise NetworkFormatError("manifest declares no layers")
    net = NetworkSpec(manifest["input_channels"], layers, weights)
    try:
        net.validate()
    except ValueError as exc:
        raise NetworkFormatError(str(exc)) from exc
    return net
