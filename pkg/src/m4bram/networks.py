"""Benchmark network shapes and the JSON network file format.

File layout::

    {"name": "...", "layers": [
        {"kind": "conv", "C": 3, "K": 64, "H": 224, "W": 224, "R": 3, "S": 3, "stride": 1, "padding": 1},
        {"kind": "fc", "in": 4096, "out": 1000},
        {"kind": "matmul", "M": 768, "N": 768, "L": 197}]}

Conv entries give the input feature-map size; output size follows from
stride and padding.  Any layer may carry an optional "name".
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .hetero_dla import LayerKind, LayerShape, convert_matmul_to_conv, fc_layer


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkDesc:
    name: str
    layers: tuple[LayerShape, ...]

    def __post_init__(self):
        if not self.layers:
            raise NetworkError(f"network {self.name!r} has no layers")

    @property
    def macs(self) -> int:
        return sum(l.macs for l in self.layers)


def conv(c, k, hw, r, stride=1, padding=None, name=""):
    pad = r // 2 if padding is None else padding
    out = (hw + 2 * pad - r) // stride + 1
    return LayerShape(c=c, k=k, p=out, q=out, r=r, s=r, stride=stride, padding=pad, name=name)


def alexnet() -> NetworkDesc:
    layers = [
        conv(3, 64, 224, 11, stride=4, padding=2, name="conv1"),
        conv(64, 192, 27, 5, name="conv2"),
        conv(192, 384, 13, 3, name="conv3"),
        conv(384, 256, 13, 3, name="conv4"),
        conv(256, 256, 13, 3, name="conv5"),
        fc_layer(9216, 4096, "fc6"),
        fc_layer(4096, 4096, "fc7"),
        fc_layer(4096, 1000, "fc8"),
    ]
    return NetworkDesc("alexnet", tuple(layers))


def vgg16() -> NetworkDesc:
    plan = [(64, 2, 224), (128, 2, 112), (256, 3, 56), (512, 3, 28), (512, 3, 14)]
    layers, cin = [], 3
    for stage, (ch, n, hw) in enumerate(plan, start=1):
        for j in range(n):
            layers.append(conv(cin, ch, hw, 3, name=f"conv{stage}_{j + 1}"))
            cin = ch
    layers += [fc_layer(25088, 4096, "fc6"), fc_layer(4096, 4096, "fc7"), fc_layer(4096, 1000, "fc8")]
    return NetworkDesc("vgg16", tuple(layers))


def _resnet(name: str, blocks) -> NetworkDesc:
    layers = [conv(3, 64, 224, 7, stride=2, padding=3, name="conv1")]
    cin, hw = 64, 56
    for stage, (ch, n) in enumerate(zip((64, 128, 256, 512), blocks), start=1):
        for b in range(n):
            stride = 2 if (b == 0 and stage > 1) else 1
            tag = f"layer{stage}.{b}"
            layers.append(conv(cin, ch, hw, 3, stride=stride, name=f"{tag}.conv1"))
            out_hw = layers[-1].p
            layers.append(conv(ch, ch, out_hw, 3, name=f"{tag}.conv2"))
            if stride != 1 or cin != ch:
                layers.append(conv(cin, ch, hw, 1, stride=stride, padding=0, name=f"{tag}.downsample"))
            cin, hw = ch, out_hw
    layers.append(fc_layer(512, 1000, "fc"))
    return NetworkDesc(name, tuple(layers))


def resnet18() -> NetworkDesc:
    return _resnet("resnet18", (2, 2, 2, 2))


def resnet34() -> NetworkDesc:
    return _resnet("resnet34", (3, 4, 6, 3))


def vit_base_attention(tokens: int = 197, heads: int = 12, head_dim: int = 64) -> NetworkDesc:
    """One multi-head self-attention module, projections included."""
    d = heads * head_dim
    layers = [convert_matmul_to_conv(3 * d, d, tokens, "qkv")]
    for h in range(heads):
        layers.append(convert_matmul_to_conv(tokens, head_dim, tokens, f"head{h}.qk"))
        layers.append(convert_matmul_to_conv(head_dim, tokens, tokens, f"head{h}.av"))
    layers.append(convert_matmul_to_conv(d, d, tokens, "proj"))
    return NetworkDesc("vit_base_attention", tuple(layers))


BUILTINS = {
    "alexnet": alexnet,
    "vgg16": vgg16,
    "resnet18": resnet18,
    "resnet34": resnet34,
    "vit_base_attention": vit_base_attention,
}
BENCHMARKS = tuple(BUILTINS)


def builtin(name: str) -> NetworkDesc:
    try:
        return BUILTINS[name.lower().replace("-", "_")]()
    except KeyError:
        raise NetworkError(f"unknown built-in network {name!r}; choose from {', '.join(BUILTINS)}") from None


def reference_macs() -> dict[str, int]:
    text = resources.files("m4bram").joinpath("data/network_macs.json").read_text()
    return {k: v["macs"] for k, v in json.loads(text)["networks"].items()}


_FIELDS = {
    "conv": ("C", "K", "H", "W", "R", "S"),
    "fc": ("in", "out"),
    "matmul": ("M", "N", "L"),
}


def _int_field(entry: dict, key: str, where: str, errors: list, default=None, minimum=1):
    if key not in entry:
        if default is None:
            errors.append(f"{where}: missing field {key!r}")
            return None
        return default
    v = entry[key]
    if not isinstance(v, int) or isinstance(v, bool):
        errors.append(f"{where}: field {key!r} must be an integer, got {v!r}")
        return None
    if v < minimum:
        errors.append(f"{where}: field {key!r}={v} must be >= {minimum}")
        return None
    return v


def _layer_from_dict(entry, i: int, errors: list) -> LayerShape | None:
    where = f"layer {i}"
    if not isinstance(entry, dict):
        errors.append(f"{where}: expected an object")
        return None
    kind = entry.get("kind")
    if kind not in _FIELDS:
        errors.append(f"{where}: kind must be one of {sorted(_FIELDS)}, got {kind!r}")
        return None
    name = entry.get("name", "")
    if kind == "fc":
        n_in = _int_field(entry, "in", where, errors)
        n_out = _int_field(entry, "out", where, errors)
        return None if None in (n_in, n_out) else fc_layer(n_in, n_out, name)
    if kind == "matmul":
        m, n, l = (_int_field(entry, f, where, errors) for f in ("M", "N", "L"))
        return None if None in (m, n, l) else convert_matmul_to_conv(m, n, l, name)
    vals = {f: _int_field(entry, f, where, errors) for f in _FIELDS["conv"]}
    stride = _int_field(entry, "stride", where, errors, default=1)
    pad = _int_field(entry, "padding", where, errors, default=0, minimum=0)
    if None in vals.values() or stride is None or pad is None:
        return None
    p = (vals["H"] + 2 * pad - vals["R"]) // stride + 1
    q = (vals["W"] + 2 * pad - vals["S"]) // stride + 1
    if p < 1 or q < 1:
        errors.append(f"{where}: filter larger than padded input")
        return None
    return LayerShape(c=vals["C"], k=vals["K"], p=p, q=q, r=vals["R"], s=vals["S"],
                      stride=stride, padding=pad, name=name)


def network_from_dict(data, source: str = "<dict>") -> NetworkDesc:
    if not isinstance(data, dict) or "layers" not in data:
        raise NetworkError(f"{source}: expected an object with 'name' and 'layers'")
    if not isinstance(data["layers"], list) or not data["layers"]:
        raise NetworkError(f"{source}: 'layers' must be a non-empty list")
    errors: list[str] = []
    layers = [_layer_from_dict(e, i, errors) for i, e in enumerate(data["layers"])]
    if errors:
        raise NetworkError(f"{source}: invalid layers:\n  " + "\n  ".join(errors))
    return NetworkDesc(str(data.get("name", Path(source).stem)), tuple(layers))


def load_network(path) -> NetworkDesc:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return network_from_dict(data, str(path))


def resolve_network(spec: str) -> NetworkDesc:
    """Built-in name or path to a network file."""
    if spec.lower().replace("-", "_") in BUILTINS:
        return builtin(spec)
    return load_network(spec)


def layer_to_dict(l: LayerShape) -> dict:
    if l.kind is LayerKind.FC:
        d = {"kind": "fc", "in": l.c, "out": l.k}
    elif l.kind is LayerKind.MATMUL:
        d = {"kind": "matmul", "M": l.k, "N": l.c, "L": l.q}
    else:
        # smallest input size that reproduces the output size
        h = max(1, (l.p - 1) * l.stride + l.r - 2 * l.padding)
        w = max(1, (l.q - 1) * l.stride + l.s - 2 * l.padding)
        d = {"kind": "conv", "C": l.c, "K": l.k, "H": h, "W": w, "R": l.r, "S": l.s,
             "stride": l.stride, "padding": l.padding}
    if l.name:
        d["name"] = l.name
    return d


def network_to_json(net: NetworkDesc) -> str:
    return json.dumps({"name": net.name, "layers": [layer_to_dict(l) for l in net.layers]}, indent=1) + "\n"


def save_network(net: NetworkDesc, path) -> None:
    from .io_utils import atomic_write

    atomic_write(path, network_to_json(net))
