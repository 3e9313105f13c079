"""The five training loss terms and their weighted total.

Every term is exposed as a plain function over numpy values (returning a
float) and is also assembled on the autodiff tape by ``total_graph`` for
training. The curvature term shares one arithmetic combinator between both
routes: the mixed second derivative u^T H v is approximated with the
symmetric four-point stencil

    [f(p+hu+hv) - f(p+hu-hv) - f(p-hu+hv) + f(p-hu-hv)] / (4 h^2)

and divided by |grad f(p)|. Shell points where the gradient vanishes are
skipped and counted, never clamped.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import field_net
from .autodiff import Tensor
from .field_net import FieldNetwork
from .sampler import SampleBatch

__all__ = [
    "LossWeights",
    "LossReport",
    "loss_dm",
    "loss_dnm",
    "loss_eik",
    "loss_seg",
    "cross_entropy",
    "s12",
    "s12_batch",
    "loss_odw",
    "loss_total",
    "total_graph",
]

GRAD_NORM_FLOOR = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Term weights, the off-surface decay constant, and the stencil step."""

    lam_dm: float = 7000.0
    lam_dnm: float = 600.0
    lam_eik: float = 50.0
    lam_odw: float = 10.0
    lam_seg: float = 100.0
    alpha: float = 100.0
    stencil_h: float = 1e-3

    def __post_init__(self):
        for name in ("lam_dm", "lam_dnm", "lam_eik", "lam_odw", "lam_seg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.stencil_h <= 0:
            raise ValueError("stencil_h must be positive")


@dataclass(frozen=True)
class LossReport:
    dm: float
    dnm: float
    eik: float
    odw: float
    seg: float
    total: float
    odw_skipped: int = 0

    def as_dict(self) -> dict:
        return {
            "dm": self.dm, "dnm": self.dnm, "eik": self.eik, "odw": self.odw,
            "seg": self.seg, "total": self.total, "odw_skipped": self.odw_skipped,
        }


def _require_nonempty(values, what: str):
    if np.size(values if not isinstance(values, Tensor) else values.data) == 0:
        raise ValueError(f"{what} must be non-empty")


def loss_dm(sdf_values) -> float:
    """Mean |f| over on-surface samples."""
    _require_nonempty(sdf_values, "manifold sdf values")
    if isinstance(sdf_values, Tensor):
        return ad.reduce_mean(ad.absolute(sdf_values))
    return float(np.mean(np.abs(np.asarray(sdf_values, dtype=np.float64))))


def loss_dnm(sdf_values, alpha: float) -> float:
    """Mean exp(-alpha |f|) over off-surface samples."""
    _require_nonempty(sdf_values, "non-manifold sdf values")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if isinstance(sdf_values, Tensor):
        return ad.reduce_mean(ad.exp(ad.mul(ad.absolute(sdf_values), -alpha)))
    v = np.asarray(sdf_values, dtype=np.float64)
    return float(np.mean(np.exp(-alpha * np.abs(v))))


def loss_eik(gradients) -> float:
    """Mean (|grad|^2 - 1)^2 over domain samples."""
    _require_nonempty(gradients, "gradients")
    if isinstance(gradients, Tensor):
        sq_norm = ad.reduce_sum(ad.square(gradients), axis=1)
        return ad.reduce_mean(ad.square(sq_norm - 1.0))
    g = np.asarray(gradients, dtype=np.float64).reshape(-1, 3)
    return float(np.mean((np.sum(g * g, axis=1) - 1.0) ** 2))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy, stabilized by a detached row-max shift."""
    labels = np.asarray(labels)
    shift = ad.constant(logits.data.max(axis=1, keepdims=True))
    z = logits - shift
    lse = ad.log(ad.reduce_sum(ad.exp(z), axis=1))
    picked = ad.take_pairs(z, np.arange(len(labels)), labels)
    return ad.reduce_mean(lse - picked)


def loss_seg(logits, labels) -> float:
    """Mean cross-entropy of the part logits against integer labels."""
    _require_nonempty(labels, "labeled set")
    labels = np.asarray(labels)
    k = logits.data.shape[1] if isinstance(logits, Tensor) else np.asarray(logits).shape[1]
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    if isinstance(logits, Tensor):
        return cross_entropy(logits, labels)
    return float(cross_entropy(ad.constant(np.asarray(logits, dtype=np.float64)), labels).data)


# ---------------------------------------------------------------------------
# Curvature (off-diagonal Weingarten) term
# ---------------------------------------------------------------------------


def _stencil_points(points: np.ndarray, u: np.ndarray, v: np.ndarray, h: float) -> np.ndarray:
    """The four stencil corners, stacked as one (4N, 3) block."""
    hu, hv = h * u, h * v
    return np.concatenate([
        points + hu + hv,
        points + hu - hv,
        points - hu + hv,
        points - hu - hv,
    ], axis=0)


def _s12_from_evals(f_pp, f_pm, f_mp, f_mm, grad_norm, h: float):
    """Shared combinator; works on arrays and on tape tensors alike."""
    num = ((f_pp - f_pm) - (f_mp - f_mm)) / (4.0 * h * h)
    return num / grad_norm


def s12_batch(field, points: np.ndarray, u: np.ndarray, v: np.ndarray, h: float):
    """Stencil S12 at many points. Returns (values, valid_mask).

    ``field`` needs ``sdf(points) -> (N,)`` and ``sdf_gradient(points) -> (N, 3)``;
    any analytic field or a :class:`FieldNetwork` qualifies. Entries of
    ``values`` where ``valid_mask`` is False are zero-filled placeholders.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    n = len(points)
    f = np.asarray(field.sdf(_stencil_points(points, u, v, h)), dtype=np.float64)
    f_pp, f_pm, f_mp, f_mm = f[:n], f[n:2 * n], f[2 * n:3 * n], f[3 * n:]
    grad = np.asarray(field.sdf_gradient(points), dtype=np.float64).reshape(n, 3)
    norm = np.linalg.norm(grad, axis=1)
    valid = norm > GRAD_NORM_FLOOR
    safe = np.where(valid, norm, 1.0)
    values = np.where(valid, _s12_from_evals(f_pp, f_pm, f_mp, f_mm, safe, h), 0.0)
    return values, valid


def s12(field, p, frame, h: float) -> float:
    """Off-diagonal Weingarten entry at one point in one tangent frame."""
    values, valid = s12_batch(field, p, frame.u, frame.v, h)
    if not valid[0]:
        raise ValueError("gradient vanishes at the query point")
    return float(values[0])


def loss_odw(field, points, u, v, h: float) -> float:
    """Mean |S12| over shell points with non-degenerate gradients."""
    _require_nonempty(points, "shell")
    values, valid = s12_batch(field, points, u, v, h)
    if not valid.any():
        raise ValueError("all shell points skipped (vanishing gradients)")
    return float(np.mean(np.abs(values[valid])))


# ---------------------------------------------------------------------------
# Weighted total
# ---------------------------------------------------------------------------


def total_graph(net: FieldNetwork, batch: SampleBatch, weights: LossWeights,
                training: bool = False, rng=None):
    """Build the weighted objective on the tape.

    Returns (report, total_tensor, param_tensors). Terms with zero weight are
    skipped entirely (reported as 0) so they contribute neither arithmetic
    nor graph edges; this keeps trunk updates bit-identical across head
    variants when the segmentation weight is zero.
    """
    p = net.parameter_tensors()
    dtype = net.dtype
    n_man = len(batch.manifold_points)
    terms = {"dm": 0.0, "dnm": 0.0, "eik": 0.0, "odw": 0.0, "seg": 0.0}
    lam = {
        "dm": weights.lam_dm, "dnm": weights.lam_dnm, "eik": weights.lam_eik,
        "odw": weights.lam_odw, "seg": weights.lam_seg,
    }
    odw_skipped = 0

    need_z = lam["dm"] != 0 or lam["dnm"] != 0 or lam["eik"] != 0 or lam["seg"] != 0
    if need_z:
        z_pts = np.ascontiguousarray(batch.eikonal_points, dtype=dtype)
        xc = ad.constant(z_pts)
        sdf_z, feats_z, zs = field_net.trunk_graph(net, p, xc)

        if lam["dm"] != 0:
            terms["dm"] = loss_dm(sdf_z[:n_man, 0])
        if lam["dnm"] != 0:
            terms["dnm"] = loss_dnm(sdf_z[n_man:, 0], weights.alpha)
        if lam["eik"] != 0:
            grads = field_net.gradient_chain(net, p, zs)
            terms["eik"] = loss_eik(grads)
        if lam["seg"] != 0:
            labels = np.asarray(batch.manifold_labels)
            if labels.size == 0:
                warnings.warn("no labeled manifold samples; segmentation term disabled")
                lam["seg"] = 0.0
            else:
                logits = field_net.head_graph(
                    net, p, feats_z[:n_man], xc[:n_man], training=training, rng=rng
                )
                terms["seg"] = loss_seg(logits, labels)

    if lam["odw"] != 0:
        h = weights.stencil_h
        shell = np.ascontiguousarray(batch.shell_points, dtype=dtype)
        n_shell = len(shell)
        stencil = _stencil_points(shell, batch.shell_u, batch.shell_v, h).astype(dtype)
        sdf_s, _, _ = field_net.trunk_graph(net, p, ad.constant(stencil))
        _, _, zs_p = field_net.trunk_graph(net, p, ad.constant(shell))
        grad_p = field_net.gradient_chain(net, p, zs_p)
        norm = ad.sqrt(ad.reduce_sum(ad.square(grad_p), axis=1, keepdims=True))
        valid = norm.data[:, 0] > GRAD_NORM_FLOOR
        odw_skipped = int(n_shell - valid.sum())
        if odw_skipped == n_shell:
            raise ValueError("all shell points skipped (vanishing gradients)")
        idx = np.nonzero(valid)[0]
        s12_vals = _s12_from_evals(
            ad.take_rows(sdf_s, idx),
            ad.take_rows(sdf_s, idx + n_shell),
            ad.take_rows(sdf_s, idx + 2 * n_shell),
            ad.take_rows(sdf_s, idx + 3 * n_shell),
            ad.take_rows(norm, idx),
            h,
        )
        terms["odw"] = ad.reduce_mean(ad.absolute(s12_vals))

    total = None
    for name, term in terms.items():
        if isinstance(term, Tensor) and lam[name] != 0:
            weighted = ad.mul(term, lam[name])
            total = weighted if total is None else ad.add(total, weighted)
    if total is None:
        total = ad.constant(np.zeros((), dtype=dtype))

    report = LossReport(
        dm=_scalar(terms["dm"]), dnm=_scalar(terms["dnm"]), eik=_scalar(terms["eik"]),
        odw=_scalar(terms["odw"]), seg=_scalar(terms["seg"]),
        total=float(total.data), odw_skipped=odw_skipped,
    )
    return report, total, p


def _scalar(term) -> float:
    return float(term.data) if isinstance(term, Tensor) else float(term)


def loss_total(net: FieldNetwork, batch: SampleBatch, weights: LossWeights,
               training: bool = False, rng=None) -> LossReport:
    """Evaluate all weighted terms on a batch (no gradients retained)."""
    report, _, _ = total_graph(net, batch, weights, training=training, rng=rng)
    return report
