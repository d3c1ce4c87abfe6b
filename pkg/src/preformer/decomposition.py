"""Trend/seasonal series decomposition and decoder-input assembly.

The decomposition is a centered moving average (trend) plus the residual
(seasonal); the two always reconstruct the input exactly.  Decoder inputs
extend the latter half of the history with placeholders: zeros on the
seasonal stream, the per-feature half-window mean on the trend stream.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import OddInputLength


@dataclass
class Decomposed:
    trend: Tensor
    seasonal: Tensor


def decompose(x: Tensor, kernel: int) -> Decomposed:
    """Split (..., L, d) into moving-average trend and seasonal residual."""
    trend = ad.avg_pool_1d(x, kernel)
    return Decomposed(trend=trend, seasonal=x - trend)


def build_decoder_inputs(x: Tensor, tau: int, kernel: int) -> tuple[Tensor, Tensor]:
    """Assemble the seasonal and trend decoder input streams.

    ``x`` is the (..., t0, d) encoder-side value window with t0 even.  Both
    returned streams have length t0/2 + tau: the decomposed latter half of
    ``x`` followed by ``tau`` placeholder rows (zeros / half-window mean).
    """
    t0 = x.data.shape[-2]
    if t0 % 2 != 0:
        raise OddInputLength(f"history length {t0} must be even")
    half = t0 // 2
    x_half = ad.narrow(x, -2, half, half)
    parts = decompose(x_half, kernel)

    placeholder_shape = x.data.shape[:-2] + (tau,) + x.data.shape[-1:]
    zeros = Tensor(np.zeros(placeholder_shape))
    seasonal_in = ad.concat([parts.seasonal, zeros], axis=-2)

    mean_row = x_half.mean(axis=-2, keepdims=True)
    trend_in = ad.concat(
        [parts.trend, ad.broadcast_to(mean_row, placeholder_shape)], axis=-2
    )
    return seasonal_in, trend_in
