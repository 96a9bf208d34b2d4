"""BT.601 RGB <-> YCbCr in the studio-swing form used by SR benchmarks (MATLAB rgb2ycbcr)."""
import numpy as np

from ..errors import ShapeError

_M = np.array(
    [
        [65.481, 128.553, 24.966],
        [-37.797, -74.203, 112.0],
        [112.0, -93.786, -18.214],
    ]
) / 255.0
_OFFSET = np.array([16.0, 128.0, 128.0]) / 255.0
_M_INV = np.linalg.inv(_M)


def _check(img):
    img = np.asarray(img)
    if img.ndim < 3 or img.shape[-3] != 3:
        raise ShapeError("color conversion input", "[..., 3, H, W]", img.shape)
    return img


def rgb_to_ycbcr(img: np.ndarray) -> np.ndarray:
    """``[..., 3, H, W]`` RGB in [0, 1] -> YCbCr in [0, 1] (Y in [16/255, 235/255])."""
    img = _check(img)
    out = np.einsum("ij,...jhw->...ihw", _M, img) + _OFFSET[:, None, None]
    return out.astype(img.dtype if img.dtype.kind == "f" else np.float32)


def ycbcr_to_rgb(img: np.ndarray) -> np.ndarray:
    img = _check(img)
    out = np.einsum("ij,...jhw->...ihw", _M_INV, img - _OFFSET[:, None, None])
    return out.astype(img.dtype if img.dtype.kind == "f" else np.float32)


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """Luminance only, keeping a singleton channel axis: ``[..., 1, H, W]``."""
    return rgb_to_ycbcr(img)[..., :1, :, :]
