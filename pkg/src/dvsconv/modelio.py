"""
Model files: a versioned JSON document.

    {
      "format": "dvsconv-model",
      "version": 1,
      "arch": {"input_shape": [36, 36, 1], "layers": [{"type": "Conv", ...}, ...]},
      "flatten_order": "row-major (y, x, c), channel-last",
      "layers": [
        {"index": 0, "weight_shape": [5, 5, 1, 4], "weight": [...], "bias_shape": [4], "bias": [...]},
        ...
      ],
      "conversion": {            # only in converted models
        "lambdas": [...], "threshold": 1.0, "percentile": 99.9,
        "calibration_fingerprint": "..."
      }
    }

Arrays are flattened row-major and written as decimal numbers (shortest
round-trip representation, so a save/load cycle is lossless). Axis order is
channel-last: conv weights ``(kh, kw, C_in, C_out)``, dense ``(D_in, D_out)``.
The ``layers`` entries always hold the trained, *unscaled* parameters; a
converted model is rebuilt from them and the stored scales.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ann import ArchSpec, NetworkParams
from .convert import ScaleFactors, SpikingNetwork, build_spiking, rescale
from .errors import ParseError

FORMAT = "dvsconv-model"
VERSION = 1


def params_to_dict(params: NetworkParams) -> dict:
    layers = []
    for i in params.param_layers():
        w = np.asarray(params.weights[i], dtype=np.float64)
        b = np.asarray(params.biases[i], dtype=np.float64)
        layers.append({
            "index": i,
            "weight_shape": list(w.shape),
            "weight": w.ravel().tolist(),
            "bias_shape": list(b.shape),
            "bias": b.ravel().tolist(),
        })
    return {
        "format": FORMAT,
        "version": VERSION,
        "arch": params.arch.to_dict(),
        "flatten_order": params.flatten_order,
        "layers": layers,
    }


def params_from_dict(doc: dict) -> NetworkParams:
    if doc.get("format") != FORMAT:
        raise ParseError("not a model file")
    if doc.get("version") != VERSION:
        raise ParseError(f"unsupported model file version {doc.get('version')}")
    try:
        arch = ArchSpec.from_dict(doc["arch"])
        n = len(arch.layers)
        weights, biases = [None] * n, [None] * n
        expected = arch.param_shapes()
        for entry in doc["layers"]:
            i = int(entry["index"])
            w = np.array(entry["weight"], dtype=np.float64).reshape(entry["weight_shape"])
            b = np.array(entry["bias"], dtype=np.float64).reshape(entry["bias_shape"])
            if expected[i] is None or (w.shape, b.shape) != tuple(tuple(s) for s in expected[i]):
                raise ParseError(f"layer {i}: array shapes do not match the architecture")
            weights[i], biases[i] = w, b
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model file: {exc}") from exc
    if any((w is None) != (s is None) for w, s in zip(weights, expected)):
        raise ParseError("model file is missing parameter layers")
    return NetworkParams(arch, weights, biases, doc.get("flatten_order"))


def save_params(params: NetworkParams, path) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params)) + "\n")


def _read_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: not a model file")
    return doc


def load_params(path) -> NetworkParams:
    return params_from_dict(_read_json(path))


def save_spiking(net: SpikingNetwork, original: NetworkParams, path) -> None:
    """Store the unscaled ``original`` parameters plus the conversion section."""
    doc = params_to_dict(original)
    doc["conversion"] = {
        "lambdas": list(net.scales.lambdas),
        "threshold": net.threshold,
        "percentile": net.scales.percentile,
        "calibration_fingerprint": net.meta.get("calibration_fingerprint", ""),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_spiking(path) -> tuple[SpikingNetwork, NetworkParams]:
    """Rebuild the converted network; returns (network, unscaled parameters)."""
    doc = _read_json(path)
    params = params_from_dict(doc)
    conv = doc.get("conversion")
    if conv is None:
        raise ParseError(f"{path} holds an unconverted model (no conversion section)")
    scales = ScaleFactors([float(v) for v in conv["lambdas"]], float(conv["percentile"]))
    net = build_spiking(rescale(params, scales), float(conv["threshold"]), scales)
    net.meta.update(percentile=scales.percentile, calibration_fingerprint=conv.get("calibration_fingerprint", ""))
    return net, params
