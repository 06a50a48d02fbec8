"""Versioned text checkpoint container shared by every workflow step.

A checkpoint is a JSON document holding named network architectures plus
parameters, an optional center vector, and free-form metadata. Floats are
serialized via repr, so save/load round-trips are exact.
"""

from __future__ import annotations

import json

import numpy as np

from .nn import LayerSpec, Network

FORMAT = "adashift-checkpoint"
VERSION = 1


def network_to_dict(net: Network) -> dict:
    return {
        "input_dim": net.input_dim,
        "layers": [{"units": s.units, "activation": s.activation} for s in net.specs()],
        "weights": [layer.weight.data.tolist() for layer in net.layers],
        "biases": [layer.bias.data.tolist() for layer in net.layers],
    }


def network_from_dict(doc: dict) -> Network:
    from .nn import Layer

    layers = []
    for spec, w, b in zip(doc["layers"], doc["weights"], doc["biases"]):
        LayerSpec(spec["units"], spec["activation"])  # validates
        layers.append(Layer(np.asarray(w), np.asarray(b), spec["activation"]))
    return Network(doc["input_dim"], layers)


def save(path, networks: dict[str, Network], center: np.ndarray | None = None,
         meta: dict | None = None) -> None:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "networks": {name: network_to_dict(net) for name, net in sorted(networks.items())},
        "center": None if center is None else [float(v) for v in center],
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load(path) -> tuple[dict[str, Network], np.ndarray | None, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path}: not an {FORMAT} file")
    if doc.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    networks = {name: network_from_dict(nd) for name, nd in doc["networks"].items()}
    center = None if doc["center"] is None else np.asarray(doc["center"], dtype=np.float64)
    return networks, center, doc.get("meta", {})
