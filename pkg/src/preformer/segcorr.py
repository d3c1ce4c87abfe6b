"""Segment-correlation attention kernels.

A sequence is cut into contiguous fixed-length segments; the similarity of a
query segment and a key segment is their scaled elementwise dot product, and
each output segment is the softmax-weighted sum of value segments.  Three
kernels build on that:

* :func:`sc_forward` -- single-scale segment correlation, optionally in the
  predictive paradigm where the weight computed against key segment j
  multiplies value segment j+1 and output segment i is queried by segment
  i-1 (the first output wraps around to the final query segment).
* :func:`mssc_fuse` -- multi-scale fusion: segment lengths grow as 2^l * l0
  and the per-scale outputs are combined with weights 2^l / (2^(lmax+1) - 1).
* :func:`mssc_forward` -- the multi-head layer: learned q/k/v projections,
  per-head fusion, head concat, output projection.

All scoring and aggregation flows through the active kernel backend
(:mod:`preformer.backends`).  Every kernel tallies its scalar
multiply-accumulates into an :class:`OpCounter`, which is what the
complexity benchmarks compare.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from math import prod

import numpy as np

from . import autodiff as ad
from . import backends
from .autodiff import Tensor, apply_op
from .errors import InvalidConfig, ShapeMismatch, TooFewSegments

FLOAT_BYTES = 8


@dataclass
class SegCorrConfig:
    """Settings that fully determine one attention kernel."""

    l0: int
    d_model: int
    n_heads: int
    predictive: bool
    multiscale: bool
    alpha_descending: bool = False

    def __post_init__(self):
        if self.l0 < 1:
            raise InvalidConfig(f"initial segment length must be >= 1, got {self.l0}")
        if self.d_model < 1 or self.n_heads < 1:
            raise InvalidConfig("d_model and n_heads must be positive")
        if self.d_model % self.n_heads != 0:
            raise InvalidConfig(
                f"n_heads={self.n_heads} must divide d_model={self.d_model}"
            )


@dataclass
class OpCounter:
    """Monotone tally of scalar multiply-accumulates in one forward pass."""

    mul_adds: int = 0

    def add(self, n: int) -> None:
        if n < 0:
            raise ValueError("op counts only grow")
        self.mul_adds += int(n)


@dataclass
class MsscParams:
    """Projection weights of one multi-head segment-correlation layer."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor

    def named(self, prefix: str):
        return [
            (f"{prefix}.wq", self.wq),
            (f"{prefix}.wk", self.wk),
            (f"{prefix}.wv", self.wv),
            (f"{prefix}.wo", self.wo),
        ]


def xavier_uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_mssc_params(rng: np.random.Generator, d_model: int) -> MsscParams:
    def w():
        return Tensor(xavier_uniform(rng, d_model, d_model), requires_grad=True)

    return MsscParams(wq=w(), wk=w(), wv=w(), wo=w())


# -- segmentation ------------------------------------------------------------


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def segment(x: Tensor, l_seg: int) -> list[Tensor]:
    """Cut an (L, d) series into ceil(L/l_seg) segments, zero-padding the tail."""
    if l_seg < 1:
        raise InvalidConfig(f"segment length must be >= 1, got {l_seg}")
    data = x.data
    length, width = data.shape
    m = _ceil_div(length, l_seg)
    padded = np.zeros((m * l_seg, width))
    padded[:length] = data
    return [Tensor(padded[i * l_seg : (i + 1) * l_seg].copy()) for i in range(m)]


def correlation(qi: Tensor, kj: Tensor) -> float:
    """Scaled elementwise dot product of two equally shaped segments."""
    if qi.data.shape != kj.data.shape:
        raise ShapeMismatch(
            f"segments differ in shape: {qi.data.shape} vs {kj.data.shape}"
        )
    l_seg, width = qi.data.shape
    return float(np.sum(qi.data * kj.data) / (width * l_seg))


def _pad_segments(x: Tensor, l_seg: int) -> tuple[Tensor, int]:
    """Reshape (..., L, d) to (..., m, l_seg*d) with a zero-padded tail."""
    shape = x.data.shape
    length, width = shape[-2], shape[-1]
    m = _ceil_div(length, l_seg)
    if m * l_seg != length:
        pad = Tensor(np.zeros(shape[:-2] + (m * l_seg - length, width)))
        x = ad.concat([x, pad], axis=-2)
    return ad.reshape(x, shape[:-2] + (m, l_seg * width)), m


# -- backend-dispatched batched matmuls with gradients -----------------------


def _bmm_nt(a: Tensor, b: Tensor) -> Tensor:
    ad_, bd = a.data, b.data

    def bwd(g):
        ga = backends.bmm_nn(g, bd) if a.requires_grad else None
        gb = backends.bmm_nn(np.swapaxes(g, -1, -2), ad_) if b.requires_grad else None
        return ga, gb

    return apply_op(backends.bmm_nt(ad_, bd), (a, b), bwd)


def _bmm_nn(a: Tensor, b: Tensor) -> Tensor:
    ad_, bd = a.data, b.data

    def bwd(g):
        ga = backends.bmm_nt(g, bd) if a.requires_grad else None
        gb = backends.bmm_nn(np.swapaxes(ad_, -1, -2), g) if b.requires_grad else None
        return ga, gb

    return apply_op(backends.bmm_nn(ad_, bd), (a, b), bwd)


# -- kernels -----------------------------------------------------------------


def sc_forward(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    l_seg: int,
    predictive: bool,
    counter: OpCounter,
) -> Tensor:
    """Single-scale segment-correlation attention over (..., L, d) inputs.

    Leading axes are treated as independent batch entries.  Sequences are
    zero-padded to a segment multiple and the output is truncated back to the
    query length.
    """
    if l_seg < 1:
        raise InvalidConfig(f"segment length must be >= 1, got {l_seg}")
    if q.data.shape[-1] != k.data.shape[-1] or k.data.shape != v.data.shape:
        raise ShapeMismatch(
            f"q/k/v shapes incompatible: {q.data.shape}, {k.data.shape}, {v.data.shape}"
        )
    if q.data.shape[:-2] != k.data.shape[:-2]:
        raise ShapeMismatch("q and k/v must share batch dimensions")

    batch = q.data.shape[:-2]
    lq, width = q.data.shape[-2], q.data.shape[-1]
    qs, m = _pad_segments(q, l_seg)
    ks, n = _pad_segments(k, l_seg)
    vs, _ = _pad_segments(v, l_seg)

    if predictive:
        if n < 2:
            raise TooFewSegments(
                f"predictive aggregation needs >= 2 key segments, got {n}"
            )
        # output i is queried by segment i-1; the first wraps to the last
        qs = ad.concat([ad.narrow(qs, -2, m - 1, 1), ad.narrow(qs, -2, 0, m - 1)], -2)
        ks = ad.narrow(ks, -2, 0, n - 1)
        vs = ad.narrow(vs, -2, 1, n - 1)
        n_eff = n - 1
    else:
        n_eff = n

    pair_cost = prod(batch) * m * n_eff * l_seg * width
    scores = _bmm_nt(qs, ks) * (1.0 / (width * l_seg))
    counter.add(pair_cost)
    weights = ad.softmax(scores, axis=-1)
    out_segments = _bmm_nn(weights, vs)
    counter.add(pair_cost)

    out = ad.reshape(out_segments, batch + (m * l_seg, width))
    if m * l_seg != lq:
        out = ad.narrow(out, -2, 0, lq)
    return out


def max_scale_level(length: int, l0: int) -> int:
    """floor(log2(length / l0)) for length >= l0."""
    return (length // l0).bit_length() - 1


def alpha_weights_exact(l_max: int, descending: bool = False) -> list[Fraction]:
    """Per-scale fusion weights 2^l / (2^(l_max+1) - 1); they sum to one."""
    total = 2 ** (l_max + 1) - 1
    weights = [Fraction(2**level, total) for level in range(l_max + 1)]
    return weights[::-1] if descending else weights


def alpha_weights(l_max: int, descending: bool = False) -> list[float]:
    return [float(w) for w in alpha_weights_exact(l_max, descending)]


def mssc_fuse(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    l0: int,
    counter: OpCounter,
    multiscale: bool = True,
    predictive: bool = False,
    alpha_descending: bool = False,
) -> Tensor:
    """Fuse segment-correlation outputs across exponentially growing scales.

    With ``multiscale`` off this is a single run at segment length ``l0``.
    In the predictive paradigm, scales whose segment length reaches the full
    key length are dropped (a lone key segment cannot be delayed) and the
    fusion weights renormalize over the remaining prefix of scales.
    """
    lq, lk = q.data.shape[-2], k.data.shape[-2]
    if l0 > min(lq, lk):
        raise InvalidConfig(
            f"initial segment length {l0} exceeds min sequence length {min(lq, lk)}"
        )
    if not multiscale:
        return sc_forward(q, k, v, l0, predictive, counter)

    levels = list(range(max_scale_level(min(lq, lk), l0) + 1))
    if predictive:
        levels = [level for level in levels if (2**level) * l0 < lk]
        if not levels:
            raise TooFewSegments(
                f"no scale yields >= 2 key segments for key length {lk}, l0 {l0}"
            )
    alphas = alpha_weights(len(levels) - 1, descending=alpha_descending)

    out = None
    for level, alpha in zip(levels, alphas):
        term = sc_forward(q, k, v, (2**level) * l0, predictive, counter) * alpha
        out = term if out is None else out + term
    return out


def mssc_forward(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    params: MsscParams,
    cfg: SegCorrConfig,
    counter: OpCounter,
) -> Tensor:
    """Multi-head segment-correlation layer over (..., L, d_model) inputs."""
    d_model, heads = cfg.d_model, cfg.n_heads
    if q.data.shape[-1] != d_model:
        raise ShapeMismatch(
            f"expected feature dim {d_model}, got {q.data.shape[-1]}"
        )
    d_head = d_model // heads

    def split_heads(x: Tensor) -> Tensor:
        shape = x.data.shape
        x = ad.reshape(x, shape[:-1] + (heads, d_head))
        return ad.swapaxes(x, -3, -2)  # (..., heads, L, d_head)

    qh = split_heads(ad.matmul(q, params.wq))
    kh = split_heads(ad.matmul(k, params.wk))
    vh = split_heads(ad.matmul(v, params.wv))

    fused = mssc_fuse(
        qh,
        kh,
        vh,
        cfg.l0,
        counter,
        multiscale=cfg.multiscale,
        predictive=cfg.predictive,
        alpha_descending=cfg.alpha_descending,
    )
    merged = ad.swapaxes(fused, -3, -2)
    merged = ad.reshape(merged, merged.data.shape[:-2] + (d_model,))
    return ad.matmul(merged, params.wo)


def full_attention(q: Tensor, k: Tensor, v: Tensor, counter: OpCounter) -> Tensor:
    """Point-wise softmax attention with 1/d score scaling (comparison baseline)."""
    if q.data.shape[-1] != k.data.shape[-1] or k.data.shape != v.data.shape:
        raise ShapeMismatch("q/k/v shapes incompatible for full attention")
    batch = q.data.shape[:-2]
    width = q.data.shape[-1]
    pair_cost = prod(batch) * q.data.shape[-2] * k.data.shape[-2] * width
    scores = _bmm_nt(q, k) * (1.0 / width)
    counter.add(pair_cost)
    weights = ad.softmax(scores, axis=-1)
    out = _bmm_nn(weights, v)
    counter.add(pair_cost)
    return out


# -- deterministic workspace accounting --------------------------------------
#
# The benchmark reports "memory" as the bytes of transient buffers a kernel
# materializes (segment copies, score/weight matrices, output), computed in
# closed form from the shapes.  This is portable and reproducible, unlike
# process RSS.


def sc_workspace_bytes(
    lq: int, lk: int, width: int, l_seg: int, predictive: bool = False
) -> int:
    m, n = _ceil_div(lq, l_seg), _ceil_div(lk, l_seg)
    n_eff = n - 1 if predictive else n
    segment_buffers = (m + 2 * n) * l_seg * width
    score_buffers = 2 * m * n_eff
    output = m * l_seg * width
    return FLOAT_BYTES * (segment_buffers + score_buffers + output)


def mssc_workspace_bytes(
    lq: int,
    lk: int,
    width: int,
    l0: int,
    multiscale: bool = True,
    predictive: bool = False,
) -> int:
    if not multiscale:
        return sc_workspace_bytes(lq, lk, width, l0, predictive)
    levels = range(max_scale_level(min(lq, lk), l0) + 1)
    if predictive:
        levels = [level for level in levels if (2**level) * l0 < lk]
    per_scale = max(
        sc_workspace_bytes(lq, lk, width, (2**level) * l0, predictive)
        for level in levels
    )
    return per_scale + FLOAT_BYTES * lq * width  # running accumulator


def full_attention_workspace_bytes(lq: int, lk: int, width: int) -> int:
    return FLOAT_BYTES * (2 * lq * lk + lq * width)
