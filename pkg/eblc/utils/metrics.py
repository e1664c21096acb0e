"""
Loss-quantification metrics: MSE, RMSE, PSNR and SSIM, per frame and per segment.

MSE, RMSE and PSNR are computed over all three channels. SSIM uses the luma
plane with the usual 11x11 Gaussian window (sigma 1.5) and K1=0.01, K2=0.03;
only windows that lie completely inside the frame contribute to the mean.
"""
import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .exceptions import DimensionMismatch, FrameTooSmall, EmptySequence
from .frame import Frame, MAXVAL

INFINITE = math.inf

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
# radius = int(truncate * sigma + 0.5) = 5, i.e. an 11x11 window
_SSIM_TRUNCATE = 3.5
_SSIM_PAD = SSIM_WINDOW // 2


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    rmse: float
    ssim: float
    frame_count: int

    def to_dict(self):
        _report = asdict(self)
        if math.isinf(self.psnr):
            _report['psnr'] = "Infinity"
        return _report


def _check_dimensions(a: Frame, b: Frame) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(
            f"Frames differ in size: {a.width}x{a.height} vs {b.width}x{b.height}.",
            stage='metrics'
        )


def mse(a: Frame, b: Frame) -> float:
    """
    Mean squared sample difference over all width*height*3 samples.

    :param a: first frame
    :type a: Frame
    :param b: second frame
    :type b: Frame
    :return: mean squared error
    :rtype: float
    """
    _check_dimensions(a, b)
    _diff = a.data.astype(np.float64) - b.data.astype(np.float64)
    return float(np.mean(_diff * _diff))


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return INFINITE
    return 10.0 * math.log10(MAXVAL * MAXVAL / value)


def psnr(a: Frame, b: Frame) -> float:
    """
    Peak signal-to-noise ratio in decibels; :data:`INFINITE` for identical frames.

    :param a: first frame
    :type a: Frame
    :param b: second frame
    :type b: Frame
    :return: PSNR in dB
    :rtype: float
    """
    return psnr_from_mse(mse(a, b))


def rmse(a: Frame, b: Frame) -> float:
    return math.sqrt(mse(a, b))


def ssim(a: Frame, b: Frame) -> float:
    """
    Mean structural similarity of the luma planes.

    :param a: first frame
    :type a: Frame
    :param b: second frame
    :type b: Frame
    :return: SSIM in [-1, 1]
    :rtype: float
    :raises FrameTooSmall: if either side is shorter than the 11 pixel window
    """
    _check_dimensions(a, b)
    if min(a.width, a.height) < SSIM_WINDOW:
        raise FrameTooSmall(
            f"SSIM needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, "
            f"got {a.width}x{a.height}.",
            stage='metrics'
        )
    c1 = (SSIM_K1 * MAXVAL) ** 2
    c2 = (SSIM_K2 * MAXVAL) ** 2
    x = a.luma()
    y = b.luma()

    def _filter(plane):
        return gaussian_filter(plane, sigma=SSIM_SIGMA, truncate=_SSIM_TRUNCATE)

    mu_x = _filter(x)
    mu_y = _filter(y)
    sigma_xx = _filter(x * x) - mu_x * mu_x
    sigma_yy = _filter(y * y) - mu_y * mu_y
    sigma_xy = _filter(x * y) - mu_x * mu_y

    ssim_map = (
        (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)
    ) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_xx + sigma_yy + c2)
    )
    _valid = ssim_map[_SSIM_PAD:a.height - _SSIM_PAD, _SSIM_PAD:a.width - _SSIM_PAD]
    return float(np.clip(np.mean(_valid), -1.0, 1.0))


def segment_quality(
    original: Sequence[Frame], degraded: Sequence[Frame], with_ssim: bool = True
) -> QualityReport:
    """
    Aggregate quality of a degraded frame sequence.

    PSNR is the arithmetic mean of the finite per-frame values; it is
    :data:`INFINITE` only when every frame pair is identical. RMSE and SSIM are
    plain per-frame means. Reduction runs in frame order.

    :param original: reference frames
    :type original: Sequence[Frame]
    :param degraded: frames to compare against the reference
    :type degraded: Sequence[Frame]
    :param with_ssim: compute SSIM as well (NaN when disabled)
    :type with_ssim: bool
    :return: quality report
    :rtype: QualityReport
    """
    if len(original) == 0:
        raise EmptySequence("Cannot compute quality of an empty sequence.", stage='metrics')
    if len(original) != len(degraded):
        raise DimensionMismatch(
            f"Sequences differ in length: {len(original)} vs {len(degraded)}.", stage='metrics'
        )
    _psnr, _rmse, _ssim = [], [], []
    for a, b in zip(original, degraded):
        _mse = mse(a, b)
        _value = psnr_from_mse(_mse)
        if not math.isinf(_value):
            _psnr.append(_value)
        _rmse.append(math.sqrt(_mse))
        if with_ssim:
            _ssim.append(ssim(a, b))
    return QualityReport(
        psnr=math.fsum(_psnr) / len(_psnr) if _psnr else INFINITE,
        rmse=math.fsum(_rmse) / len(_rmse),
        ssim=math.fsum(_ssim) / len(_ssim) if with_ssim else math.nan,
        frame_count=len(original),
    )
