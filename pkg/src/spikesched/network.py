"""Network descriptions: layer chain, parameter counts, file parsing.

The on-disk format is line oriented.  Header lines set global fields,
``layer`` lines declare one layer each with explicit input/output dims so
that nothing is inferred.  Example::

    name mnist
    timesteps 8
    batch 32
    input 28x28x1
    layer conv1 conv in=28x28x1 kernel=3 filters=8 pad=1 out=28x28x8
    layer pool1 maxpool in=28x28x8 window=2 out=14x14x8
    layer fc1 fc in=392 out=128
    layer out output in=128 out=10

The parser validates that each layer's declared input matches the previous
layer's output, that conv output dims follow from kernel/padding, and that
the last (and only the last) layer is an ``output`` layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import NetworkParseError, StructuralError

LAYER_KINDS = ("conv", "maxpool", "fc", "output")


@dataclass(frozen=True)
class LifConstants:
    """Neuron constants shared by all hidden layers of a network."""

    c: float = 4.0
    lam: float = 0.25
    v_th: float = 0.5
    alpha: float = 0.5


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    # conv / maxpool spatial dims
    in_h: int = 0
    in_w: int = 0
    in_c: int = 0
    out_h: int = 0
    out_w: int = 0
    out_c: int = 0
    kernel: int = 0
    pad: int = 0
    window: int = 0
    # fc / output widths
    in_features: int = 0
    out_features: int = 0

    @property
    def param_count(self) -> int:
        """Weights plus one bias per output channel; maxpool has none."""
        if self.kind == "conv":
            return self.kernel * self.kernel * self.in_c * self.out_c + self.out_c
        if self.kind in ("fc", "output"):
            return self.in_features * self.out_features + self.out_features
        return 0

    @property
    def out_size(self) -> int:
        """Number of output values per timestep per sample."""
        if self.kind in ("fc", "output"):
            return self.out_features
        return self.out_h * self.out_w * self.out_c

    @property
    def in_size(self) -> int:
        if self.kind in ("fc", "output"):
            return self.in_features
        return self.in_h * self.in_w * self.in_c


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    timesteps: int
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]  # (h, w, c); fc-only nets use (1, 1, features)
    batch_default: int = 1
    lif: LifConstants = field(default_factory=LifConstants)

    def __post_init__(self):
        _validate_chain(self)

    @property
    def total_params(self) -> int:
        return sum(l.param_count for l in self.layers)

    def costed_layers(self) -> list[LayerSpec]:
        """Layers that occupy the systolic array (maxpool contributes nothing)."""
        return [l for l in self.layers if l.kind != "maxpool"]

    def weighted_layers(self) -> list[LayerSpec]:
        return self.costed_layers()


def _validate_chain(net: NetworkSpec) -> None:
    if net.timesteps < 1:
        raise StructuralError(f"network {net.name!r}: timesteps must be >= 1")
    if not net.layers:
        raise StructuralError(f"network {net.name!r}: empty layer list")
    if net.layers[-1].kind != "output":
        raise StructuralError(f"network {net.name!r}: last layer must be an output layer")
    for l in net.layers[:-1]:
        if l.kind == "output":
            raise StructuralError(
                f"network {net.name!r}: output layer {l.name!r} is not last"
            )

    h, w, c = net.input_shape
    flat = h * w * c
    spatial = True
    for l in net.layers:
        if l.kind == "conv":
            if not spatial:
                raise StructuralError(f"layer {l.name!r}: conv after flatten")
            if (l.in_h, l.in_w, l.in_c) != (h, w, c):
                raise StructuralError(
                    f"layer {l.name!r}: declared input {l.in_h}x{l.in_w}x{l.in_c} "
                    f"does not match incoming {h}x{w}x{c}"
                )
            exp_h = l.in_h + 2 * l.pad - l.kernel + 1
            exp_w = l.in_w + 2 * l.pad - l.kernel + 1
            if exp_h < 1 or exp_w < 1:
                raise StructuralError(f"layer {l.name!r}: kernel larger than padded input")
            if (l.out_h, l.out_w) != (exp_h, exp_w):
                raise StructuralError(
                    f"layer {l.name!r}: declared output {l.out_h}x{l.out_w} does not "
                    f"match computed {exp_h}x{exp_w}"
                )
            h, w, c = l.out_h, l.out_w, l.out_c
        elif l.kind == "maxpool":
            if not spatial:
                raise StructuralError(f"layer {l.name!r}: maxpool after flatten")
            if (l.in_h, l.in_w, l.in_c) != (h, w, c):
                raise StructuralError(
                    f"layer {l.name!r}: declared input {l.in_h}x{l.in_w}x{l.in_c} "
                    f"does not match incoming {h}x{w}x{c}"
                )
            if l.in_h % l.window or l.in_w % l.window:
                raise StructuralError(
                    f"layer {l.name!r}: spatial dims {l.in_h}x{l.in_w} not divisible "
                    f"by window {l.window}"
                )
            if (l.out_h, l.out_w, l.out_c) != (l.in_h // l.window, l.in_w // l.window, c):
                raise StructuralError(f"layer {l.name!r}: declared output inconsistent")
            h, w, c = l.out_h, l.out_w, l.out_c
        elif l.kind in ("fc", "output"):
            incoming = h * w * c if spatial else flat
            if l.in_features != incoming:
                raise StructuralError(
                    f"layer {l.name!r}: declared input width {l.in_features} does not "
                    f"match incoming {incoming}"
                )
            spatial = False
            flat = l.out_features
        else:
            raise StructuralError(f"layer {l.name!r}: unknown kind {l.kind!r}")


# ---------------------------------------------------------------------------
# file format


def _parse_dims(text: str, line_no: int) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise NetworkParseError(f"expected HxWxC dims, got {text!r}", line_no)
    try:
        h, w, c = (int(p) for p in parts)
    except ValueError:
        raise NetworkParseError(f"non-integer dims in {text!r}", line_no) from None
    return h, w, c


def _parse_kv(tokens: list[str], line_no: int) -> dict[str, str]:
    kv = {}
    for tok in tokens:
        if "=" not in tok:
            raise NetworkParseError(f"expected key=value, got {tok!r}", line_no)
        key, _, value = tok.partition("=")
        kv[key] = value
    return kv


def _require(kv: dict, key: str, line_no: int) -> str:
    if key not in kv:
        raise NetworkParseError(f"missing field {key!r}", line_no)
    return kv.pop(key)


def _int_field(kv: dict, key: str, line_no: int) -> int:
    raw = _require(kv, key, line_no)
    try:
        return int(raw)
    except ValueError:
        raise NetworkParseError(f"field {key!r} must be an integer, got {raw!r}", line_no) from None


def parse_network_text(text: str) -> NetworkSpec:
    name = None
    timesteps = None
    batch = 1
    input_shape = None
    lif_kwargs = {}
    layers: list[LayerSpec] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        head = tokens[0]
        if head == "name":
            if len(tokens) != 2:
                raise NetworkParseError("name takes exactly one value", line_no)
            name = tokens[1]
        elif head == "timesteps":
            try:
                timesteps = int(tokens[1])
            except (IndexError, ValueError):
                raise NetworkParseError("timesteps takes one integer", line_no) from None
        elif head == "batch":
            try:
                batch = int(tokens[1])
            except (IndexError, ValueError):
                raise NetworkParseError("batch takes one integer", line_no) from None
        elif head == "input":
            if len(tokens) != 2:
                raise NetworkParseError("input takes HxWxC dims", line_no)
            input_shape = _parse_dims(tokens[1], line_no)
        elif head == "lif":
            kv = _parse_kv(tokens[1:], line_no)
            mapping = {"c": "c", "lambda": "lam", "vth": "v_th", "alpha": "alpha"}
            for key, value in kv.items():
                if key not in mapping:
                    raise NetworkParseError(f"unknown lif field {key!r}", line_no)
                try:
                    lif_kwargs[mapping[key]] = float(value)
                except ValueError:
                    raise NetworkParseError(f"lif field {key!r} must be a number", line_no) from None
        elif head == "layer":
            if len(tokens) < 3:
                raise NetworkParseError("layer needs a name and a kind", line_no)
            lname, kind = tokens[1], tokens[2]
            if kind not in LAYER_KINDS:
                raise NetworkParseError(f"unknown layer kind {kind!r}", line_no)
            kv = _parse_kv(tokens[3:], line_no)
            if kind == "conv":
                in_h, in_w, in_c = _parse_dims(_require(kv, "in", line_no), line_no)
                out_h, out_w, out_c = _parse_dims(_require(kv, "out", line_no), line_no)
                layer = LayerSpec(
                    name=lname, kind="conv",
                    in_h=in_h, in_w=in_w, in_c=in_c,
                    out_h=out_h, out_w=out_w,
                    out_c=_int_field(kv, "filters", line_no),
                    kernel=_int_field(kv, "kernel", line_no),
                    pad=_int_field(kv, "pad", line_no),
                )
                if layer.out_c != out_c:
                    raise NetworkParseError(
                        f"filters={layer.out_c} disagrees with out channels {out_c}", line_no
                    )
            elif kind == "maxpool":
                in_h, in_w, in_c = _parse_dims(_require(kv, "in", line_no), line_no)
                out_h, out_w, out_c = _parse_dims(_require(kv, "out", line_no), line_no)
                layer = LayerSpec(
                    name=lname, kind="maxpool",
                    in_h=in_h, in_w=in_w, in_c=in_c,
                    out_h=out_h, out_w=out_w, out_c=out_c,
                    window=_int_field(kv, "window", line_no),
                )
            else:
                layer = LayerSpec(
                    name=lname, kind=kind,
                    in_features=_int_field(kv, "in", line_no),
                    out_features=_int_field(kv, "out", line_no),
                )
            if kv:
                raise NetworkParseError(f"unknown fields {sorted(kv)}", line_no)
            layers.append(layer)
        else:
            raise NetworkParseError(f"unknown directive {head!r}", line_no)

    if name is None:
        raise NetworkParseError("missing 'name' line")
    if timesteps is None:
        raise NetworkParseError("missing 'timesteps' line")
    if input_shape is None:
        raise NetworkParseError("missing 'input' line")
    return NetworkSpec(
        name=name,
        timesteps=timesteps,
        layers=tuple(layers),
        input_shape=input_shape,
        batch_default=batch,
        lif=LifConstants(**lif_kwargs),
    )


def parse_network(path) -> NetworkSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_network_text(fh.read())


def serialize_network(net: NetworkSpec) -> str:
    lines = [
        f"name {net.name}",
        f"timesteps {net.timesteps}",
        f"batch {net.batch_default}",
        "input {}x{}x{}".format(*net.input_shape),
        f"lif c={net.lif.c} lambda={net.lif.lam} vth={net.lif.v_th} alpha={net.lif.alpha}",
    ]
    for l in net.layers:
        if l.kind == "conv":
            lines.append(
                f"layer {l.name} conv in={l.in_h}x{l.in_w}x{l.in_c} kernel={l.kernel} "
                f"filters={l.out_c} pad={l.pad} out={l.out_h}x{l.out_w}x{l.out_c}"
            )
        elif l.kind == "maxpool":
            lines.append(
                f"layer {l.name} maxpool in={l.in_h}x{l.in_w}x{l.in_c} "
                f"window={l.window} out={l.out_h}x{l.out_w}x{l.out_c}"
            )
        else:
            lines.append(f"layer {l.name} {l.kind} in={l.in_features} out={l.out_features}")
    return "\n".join(lines) + "\n"
