"""Image fidelity metrics.

SSIM convention: grayscale by channel mean, 11x11 Gaussian window with
sigma 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.0, averaged over the valid
window positions (no padding). PSNR is capped at ``cap_db`` for identical
images.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..core.tensor import Tensor
from ..errors import ContractError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0
PSNR_CAP_DB = 100.0


def _array(x) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)


def _matching(op: str, a, b):
    a, b = _array(a), _array(b)
    if a.shape != b.shape:
        raise ContractError(op, f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized (size, size) Gaussian weights."""
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def to_gray(image: np.ndarray) -> np.ndarray:
    """Channel mean of a (C, H, W) image; 2-D input passes through."""
    if image.ndim == 2:
        return image
    if image.ndim != 3:
        raise ContractError(
            "to_gray", f"expected (C, H, W) or (H, W), got {image.shape}"
        )
    return image.mean(axis=0)


def ssim_map(a, b) -> np.ndarray:
    """Local SSIM at every valid window position."""
    x, y = _matching("ssim", a, b)
    x, y = to_gray(x), to_gray(y)
    if min(x.shape) < SSIM_WINDOW:
        raise ContractError(
            "ssim",
            f"image {x.shape} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
        )
    w = gaussian_window()

    def filt(img: np.ndarray) -> np.ndarray:
        return np.tensordot(sliding_window_view(img, w.shape), w, axes=([2, 3], [0, 1]))

    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x**2
    var_y = filt(y * y) - mu_y**2
    cov = filt(x * y) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return num / den


def ssim(a, b) -> float:
    """Mean local SSIM; 1.0 for identical images.

    Raises:
        ContractError: If shapes differ or the image is smaller than the window
    """
    return float(np.mean(ssim_map(a, b)))


def psnr(a, b, peak: float = DYNAMIC_RANGE, cap_db: float = PSNR_CAP_DB) -> float:
    """10·log10(peak² / MSE), or ``cap_db`` when the images are identical.

    Raises:
        ContractError: If shapes differ
    """
    x, y = _matching("psnr", a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return cap_db
    return min(cap_db, 10.0 * float(np.log10(peak * peak / mse)))
