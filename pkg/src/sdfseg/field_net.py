"""The dual-head field network: sine trunk, SDF head, segmentation head.

The trunk is a five-layer sine network (3 -> W x5, first layer frequency 30,
hidden frequency 1) with a linear SDF projection. Features tapped after the
third sine layer, concatenated with the raw coordinates, feed one of four
segmentation-head variants. Input gradients are built as an explicit
differentiable chain of layer Jacobian products on the same tape as the
forward pass, so losses of the gradient differentiate correctly with respect
to parameters without nested autodiff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "HEAD_VARIANTS",
    "FieldNetwork",
    "ForwardResult",
    "init",
    "forward",
    "input_gradient",
    "trunk_activations",
    "expected_param_shapes",
    "save_checkpoint",
    "load_checkpoint",
]

HEAD_VARIANTS = ("relu", "siren", "hybrid", "deep_skip")

_MAGIC = b"SDFSEGN1"
_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForwardResult:
    sdf: np.ndarray
    logits: np.ndarray
    features: np.ndarray


@dataclass(frozen=True)
class FieldNetwork:
    """Parameter container; immutable layout, arrays mutated only by training."""

    params: dict
    head_variant: str
    num_parts: int
    trunk_width: int = 256
    omega_first: float = 30.0
    omega_hidden: float = 1.0
    feature_tap: int = 2
    dropout_p: float = 0.2

    @property
    def dtype(self) -> np.dtype:
        return self.params["trunk.w0"].dtype

    def parameter_tensors(self) -> dict:
        return {name: Tensor(arr, requires_grad=True) for name, arr in self.params.items()}

    def astype(self, dtype) -> "FieldNetwork":
        return replace(self, params={k: v.astype(dtype) for k, v in self.params.items()})

    def num_parameters(self, prefix: str = "") -> int:
        return sum(v.size for k, v in self.params.items() if k.startswith(prefix))

    # Field protocol used by the curvature losses and the extractor.
    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distance only; skips the segmentation head (grid queries)."""
        pts, single = _prepare_points(self, points)
        sdf, _, _ = trunk_graph(self, _constant_params(self), Tensor(pts))
        out = sdf.data[:, 0]
        return float(out[0]) if single else out

    def sdf_gradient(self, points: np.ndarray) -> np.ndarray:
        return input_gradient(self, points)


def expected_param_shapes(head_variant: str, num_parts: int, trunk_width: int = 256) -> dict:
    """Canonical parameter names and shapes; also fixes the init draw order."""
    if head_variant not in HEAD_VARIANTS:
        raise ValueError(f"unknown head variant {head_variant!r}; options: {HEAD_VARIANTS}")
    if num_parts < 1:
        raise ValueError("num_parts must be >= 1")
    w = trunk_width
    shapes = {"trunk.w0": (3, w), "trunk.b0": (w,)}
    for i in range(1, 5):
        shapes[f"trunk.w{i}"] = (w, w)
        shapes[f"trunk.b{i}"] = (w,)
    shapes["sdf.w"] = (w, 1)
    shapes["sdf.b"] = (1,)

    seg_in = w + 3
    hidden2 = max(w // 2, 1)
    k = num_parts
    if head_variant in ("relu", "siren", "hybrid"):
        shapes["head.w1"] = (seg_in, w)
        shapes["head.b1"] = (w,)
        shapes["head.w2"] = (w, hidden2)
        shapes["head.b2"] = (hidden2,)
        shapes["head.w3"] = (hidden2, k)
        shapes["head.b3"] = (k,)
    else:  # deep_skip: four sine layers, coord concat after layer 1, skip 1 -> 3
        shapes["head.w1"] = (seg_in, w)
        shapes["head.b1"] = (w,)
        shapes["head.w2"] = (w + 3, w)
        shapes["head.b2"] = (w,)
        shapes["head.skip"] = (w, w)
        shapes["head.w3"] = (w, w)
        shapes["head.b3"] = (w,)
        shapes["head.w4"] = (w, w)
        shapes["head.b4"] = (w,)
        shapes["head.out_w"] = (w, k)
        shapes["head.out_b"] = (k,)
    return shapes


def _sine_layer_init(rng, fan_in, fan_out, omega, first):
    if first:
        bound = 1.0 / fan_in
    else:
        bound = np.sqrt(6.0 / fan_in) / omega
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=(fan_out,))
    return w, b


def init(head_variant: str, num_parts: int, seed: int, trunk_width: int = 256,
         dtype=np.float64) -> FieldNetwork:
    """Create a freshly initialized network, deterministic per seed.

    The trunk and the head draw from independent seed-derived streams, so two
    variants initialized with the same seed share identical trunk parameters.
    """
    shapes = expected_param_shapes(head_variant, num_parts, trunk_width)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    trunk_rng, head_rng = (np.random.default_rng(c) for c in ss.spawn(2))
    w = trunk_width
    params: dict = {}

    pw, pb = _sine_layer_init(trunk_rng, 3, w, 30.0, first=True)
    params["trunk.w0"], params["trunk.b0"] = pw, pb
    for i in range(1, 5):
        pw, pb = _sine_layer_init(trunk_rng, w, w, 1.0, first=False)
        params[f"trunk.w{i}"], params[f"trunk.b{i}"] = pw, pb
    params["sdf.w"] = trunk_rng.uniform(-1e-5, 1e-5, size=(w, 1))
    params["sdf.b"] = trunk_rng.uniform(-1e-5, 1e-5, size=(1,))

    seg_in = w + 3
    hidden2 = max(w // 2, 1)
    k = num_parts
    if head_variant == "relu":
        params["head.w1"] = head_rng.normal(0.0, np.sqrt(2.0 / seg_in), size=(seg_in, w))
        params["head.b1"] = np.zeros(w)
        params["head.w2"] = head_rng.normal(0.0, np.sqrt(2.0 / w), size=(w, hidden2))
        params["head.b2"] = np.zeros(hidden2)
        params["head.w3"] = head_rng.uniform(-1e-3, 1e-3, size=(hidden2, k))
        params["head.b3"] = head_rng.uniform(-1e-3, 1e-3, size=(k,))
    elif head_variant == "siren":
        params["head.w1"], params["head.b1"] = _sine_layer_init(head_rng, seg_in, w, 30.0, False)
        params["head.w2"], params["head.b2"] = _sine_layer_init(head_rng, w, hidden2, 1.0, False)
        params["head.w3"] = head_rng.uniform(-1e-3, 1e-3, size=(hidden2, k))
        params["head.b3"] = head_rng.uniform(-1e-3, 1e-3, size=(k,))
    elif head_variant == "hybrid":
        params["head.w1"], params["head.b1"] = _sine_layer_init(head_rng, seg_in, w, 30.0, False)
        params["head.w2"] = head_rng.normal(0.0, np.sqrt(2.0 / w), size=(w, hidden2))
        params["head.b2"] = np.zeros(hidden2)
        params["head.w3"] = head_rng.uniform(-1e-3, 1e-3, size=(hidden2, k))
        params["head.b3"] = head_rng.uniform(-1e-3, 1e-3, size=(k,))
    else:  # deep_skip
        params["head.w1"], params["head.b1"] = _sine_layer_init(head_rng, seg_in, w, 30.0, False)
        params["head.w2"], params["head.b2"] = _sine_layer_init(head_rng, w + 3, w, 1.0, False)
        params["head.skip"] = head_rng.uniform(
            -np.sqrt(6.0 / w), np.sqrt(6.0 / w), size=(w, w)
        )
        params["head.w3"], params["head.b3"] = _sine_layer_init(head_rng, w, w, 1.0, False)
        params["head.w4"], params["head.b4"] = _sine_layer_init(head_rng, w, w, 1.0, False)
        params["head.out_w"] = head_rng.uniform(-1e-3, 1e-3, size=(w, k))
        params["head.out_b"] = head_rng.uniform(-1e-3, 1e-3, size=(k,))

    params = {name: params[name].astype(dtype) for name in shapes}
    return FieldNetwork(
        params=params,
        head_variant=head_variant,
        num_parts=num_parts,
        trunk_width=trunk_width,
    )


# ---------------------------------------------------------------------------
# Graph construction (shared by inference and training)
# ---------------------------------------------------------------------------


def trunk_graph(net: FieldNetwork, p: dict, x: Tensor):
    """Sine trunk plus SDF projection. Returns (sdf (N,1), features, preacts)."""
    h = x
    zs = []
    feats = None
    for i in range(5):
        omega = net.omega_first if i == 0 else net.omega_hidden
        z = ad.mul(ad.add(ad.matmul(h, p[f"trunk.w{i}"]), p[f"trunk.b{i}"]), omega)
        zs.append(z)
        h = ad.sin(z)
        if i == net.feature_tap:
            feats = h
    sdf = ad.add(ad.matmul(h, p["sdf.w"]), p["sdf.b"])
    return sdf, feats, zs


def gradient_chain(net: FieldNetwork, p: dict, zs: list) -> Tensor:
    """d(sdf)/d(input) via layer-wise Jacobian products, on the tape.

    Each sine layer contributes a diagonal cos factor times its frequency;
    the chain stays differentiable with respect to all trunk parameters.
    """
    g = ad.transpose(p["sdf.w"])  # (1, W), broadcasts over the batch
    for i in range(4, -1, -1):
        omega = net.omega_first if i == 0 else net.omega_hidden
        g = ad.mul(g, ad.mul(ad.cos(zs[i]), omega))
        g = ad.matmul(g, ad.transpose(p[f"trunk.w{i}"]))
    return g  # (N, 3)


def head_graph(net: FieldNetwork, p: dict, feats: Tensor, x: Tensor,
               training: bool = False, rng=None) -> Tensor:
    """Segmentation logits from [features; coordinates].

    Dropout (relu variant only, after the first layer) requires ``rng`` when
    ``training`` is set; inference is deterministic.
    """
    seg_in = ad.concat([feats, x], axis=1)
    variant = net.head_variant
    w0, w1 = net.omega_first, net.omega_hidden
    if variant == "relu":
        h = ad.relu(ad.add(ad.matmul(seg_in, p["head.w1"]), p["head.b1"]))
        if training and net.dropout_p > 0.0:
            if rng is None:
                raise ValueError("training forward with dropout requires an rng")
            keep = (rng.random(h.data.shape) >= net.dropout_p) / (1.0 - net.dropout_p)
            h = ad.mul(h, ad.constant(keep.astype(h.dtype)))
        h = ad.relu(ad.add(ad.matmul(h, p["head.w2"]), p["head.b2"]))
        return ad.add(ad.matmul(h, p["head.w3"]), p["head.b3"])
    if variant == "siren":
        h = ad.sin(ad.mul(ad.add(ad.matmul(seg_in, p["head.w1"]), p["head.b1"]), w0))
        h = ad.sin(ad.mul(ad.add(ad.matmul(h, p["head.w2"]), p["head.b2"]), w1))
        return ad.add(ad.matmul(h, p["head.w3"]), p["head.b3"])
    if variant == "hybrid":
        h = ad.sin(ad.mul(ad.add(ad.matmul(seg_in, p["head.w1"]), p["head.b1"]), w0))
        h = ad.relu(ad.add(ad.matmul(h, p["head.w2"]), p["head.b2"]))
        return ad.add(ad.matmul(h, p["head.w3"]), p["head.b3"])
    # deep_skip
    a1 = ad.sin(ad.mul(ad.add(ad.matmul(seg_in, p["head.w1"]), p["head.b1"]), w0))
    h2 = ad.sin(ad.mul(ad.add(ad.matmul(ad.concat([a1, x], axis=1), p["head.w2"]),
                              p["head.b2"]), w1))
    pre3 = ad.add(ad.add(ad.matmul(h2, p["head.w3"]), ad.matmul(a1, p["head.skip"])),
                  p["head.b3"])
    h3 = ad.sin(ad.mul(pre3, w1))
    h4 = ad.sin(ad.mul(ad.add(ad.matmul(h3, p["head.w4"]), p["head.b4"]), w1))
    return ad.add(ad.matmul(h4, p["head.out_w"]), p["head.out_b"])


def _constant_params(net: FieldNetwork) -> dict:
    return {name: Tensor(arr) for name, arr in net.params.items()}


def _prepare_points(net: FieldNetwork, x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=net.dtype)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 3:
        raise ValueError(f"expected 3d points, got shape {np.shape(x)}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts, single


def forward(net: FieldNetwork, x, training: bool = False, rng=None) -> ForwardResult:
    """Evaluate sdf, segmentation logits, and tapped features at ``x``.

    With ``training`` unset the evaluation is deterministic (no dropout).
    """
    pts, single = _prepare_points(net, x)
    p = _constant_params(net)
    xc = Tensor(pts)
    sdf, feats, _ = trunk_graph(net, p, xc)
    logits = head_graph(net, p, feats, xc, training=training, rng=rng)
    sdf_out = sdf.data[:, 0]
    if single:
        return ForwardResult(sdf=float(sdf_out[0]), logits=logits.data[0],
                             features=feats.data[0])
    return ForwardResult(sdf=sdf_out, logits=logits.data, features=feats.data)


def input_gradient(net: FieldNetwork, x) -> np.ndarray:
    """Analytic d(sdf)/d(x), shaped like the input points."""
    pts, single = _prepare_points(net, x)
    p = _constant_params(net)
    _, _, zs = trunk_graph(net, p, Tensor(pts))
    g = gradient_chain(net, p, zs)
    return g.data[0] if single else g.data


def trunk_activations(net: FieldNetwork, x) -> list:
    """Per-layer sine activations (diagnostic)."""
    pts, single = _prepare_points(net, x)
    p = _constant_params(net)
    _, _, zs = trunk_graph(net, p, Tensor(pts))
    acts = [np.sin(z.data) for z in zs]
    return [a[0] for a in acts] if single else acts


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(net: FieldNetwork, path) -> None:
    """Versioned binary container: JSON header + raw little-endian arrays."""
    header = {
        "format_version": _FORMAT_VERSION,
        "head_variant": net.head_variant,
        "num_parts": net.num_parts,
        "trunk_width": net.trunk_width,
        "omega_first": net.omega_first,
        "omega_hidden": net.omega_hidden,
        "feature_tap": net.feature_tap,
        "dropout_p": net.dropout_p,
        "dtype": str(np.dtype(net.dtype)),
        "params": [[name, list(arr.shape)] for name, arr in net.params.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii")
    wire_dtype = np.dtype(net.dtype).newbyteorder("<")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint64(len(blob)).tobytes())
        fh.write(blob)
        for _, arr in net.params.items():
            fh.write(np.ascontiguousarray(arr, dtype=wire_dtype).tobytes())


def load_checkpoint(path) -> FieldNetwork:
    """Read a checkpoint, validating parameter shapes before use."""
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a field-network checkpoint")
        (blob_len,) = np.frombuffer(fh.read(8), dtype=np.uint64)
        header = json.loads(fh.read(int(blob_len)).decode("ascii"))
        if header.get("format_version") != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version")
        expected = expected_param_shapes(
            header["head_variant"], header["num_parts"], header["trunk_width"]
        )
        declared = {name: tuple(shape) for name, shape in header["params"]}
        if declared != expected:
            raise ValueError(f"{path}: checkpoint parameter shapes do not match architecture")
        dtype = np.dtype(header["dtype"])
        params = {}
        for name, shape in header["params"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise ValueError(f"{path}: truncated parameter data for {name}")
            params[name] = np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(
                dtype
            ).reshape(shape)
    return FieldNetwork(
        params=params,
        head_variant=header["head_variant"],
        num_parts=header["num_parts"],
        trunk_width=header["trunk_width"],
        omega_first=header["omega_first"],
        omega_hidden=header["omega_hidden"],
        feature_tap=header["feature_tap"],
        dropout_p=header["dropout_p"],
    )
