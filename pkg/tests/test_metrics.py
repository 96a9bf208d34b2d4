import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lfsafa.data import LightField
from lfsafa.errors import LightFieldError, ShapeError
from lfsafa.metrics import EvalReport, evaluate_lf, format_comparison, gaussian_window, psnr, quantize8, ssim


def naive_ssim(a, b, size=11, sigma=1.5):
    """Scalar loop over every valid window position."""
    g = gaussian_window(size, sigma)
    w = np.outer(g, g)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    vals = []
    for y in range(a.shape[0] - size + 1):
        for x in range(a.shape[1] - size + 1):
            pa, pb = a[y:y + size, x:x + size], b[y:y + size, x:x + size]
            ma, mb = (w * pa).sum(), (w * pb).sum()
            va = (w * (pa - ma) ** 2).sum()
            vb = (w * (pb - mb) ** 2).sum()
            cov = (w * (pa - ma) * (pb - mb)).sum()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_psnr_closed_form():
    ref = np.full((1, 16, 16), 0.5)
    val = psnr(ref, ref + 16 / 255)
    assert val == pytest.approx(10 * math.log10(255 ** 2 / 256), abs=1e-9)
    assert val == pytest.approx(24.05, abs=0.01)


def test_psnr_identical_and_symmetry():
    a = np.random.default_rng(0).random((1, 8, 8))
    b = np.random.default_rng(1).random((1, 8, 8))
    assert psnr(a, a) == math.inf
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(ShapeError):
        psnr(a, b[:, :4])


def test_psnr_monotone_in_noise():
    rng = np.random.default_rng(3)
    ref = rng.random((32, 32))
    noise = rng.standard_normal((32, 32))
    vals = [psnr(ref, ref + amp * noise) for amp in (0.01, 0.02, 0.05, 0.1, 0.2)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_quantized_psnr():
    ref = np.full((8, 8), 100 / 255)
    assert psnr(ref, ref + 0.4 / 255, quantize=True) == math.inf
    np.testing.assert_array_equal(quantize8(np.array([-0.1, 1.2])), [0.0, 1.0])


def test_ssim_identical_is_one_and_symmetric():
    a = np.random.default_rng(0).random((20, 24))
    b = np.clip(a + 0.05 * np.random.default_rng(1).standard_normal(a.shape), 0, 1)
    assert ssim(a, a) == 1.0
    assert ssim(a, b) == ssim(b, a)
    assert -1 <= ssim(a, b) < 1


@pytest.mark.parametrize("c,d", [(0.2, 0.1), (0.5, -0.3), (0.0, 0.05)])
def test_ssim_constant_closed_form(c, d):
    c1 = 0.01 ** 2
    expect = (2 * c * (c + d) + c1) / (c ** 2 + (c + d) ** 2 + c1)
    assert ssim(np.full((16, 16), c), np.full((16, 16), c + d)) == pytest.approx(expect, abs=1e-9)


def test_ssim_matches_naive_windows():
    rng = np.random.default_rng(5)
    a = rng.random((14, 17))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-10)


def test_ssim_too_small():
    with pytest.raises(ShapeError):
        ssim(np.zeros((10, 20)), np.zeros((10, 20)))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 0.1), st.integers(0, 100))
def test_ssim_shift_invariance(c, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((16, 16)) * 0.8
    b = np.clip(a + 0.05 * rng.standard_normal(a.shape), 0, 0.9)
    assert abs(ssim(a + c, b + c) - ssim(a, b)) < 1e-3


def _lf(seed, a=2, c=3, hw=16):
    return LightField(np.random.default_rng(seed).random((a, a, c, hw, hw)).astype(np.float32), "RGB")


def test_evaluate_identical():
    lf = _lf(0)
    rep = evaluate_lf(lf, lf)
    assert all(v.psnr == math.inf and v.ssim == 1.0 for v in rep.per_view)
    assert rep.mean_psnr == math.inf
    assert rep.border_crop == 2 and rep.scale == 2
    assert '"inf"' in rep.to_json()
    assert "inf" in rep.to_table()


def test_evaluate_single_view_and_means():
    hr, sr = _lf(0, a=1), _lf(1, a=1)
    rep = evaluate_lf(sr, hr, border_crop=1)
    assert len(rep.per_view) == 1
    assert rep.mean_psnr == rep.per_view[0].psnr


def test_evaluate_matches_independent_path():
    hr, sr = _lf(2, a=2), _lf(3, a=2)
    rep = evaluate_lf(sr, hr, border_crop=2)
    # independent: Y by the explicit affine formula, MSE by hand
    coef = np.array([65.481, 128.553, 24.966]) / 255
    y = lambda v: np.tensordot(coef, v.astype(np.float64), axes=(0, 0)) + 16 / 255
    vals = []
    for u in range(2):
        for v in range(2):
            d = y(hr.views[u, v])[2:-2, 2:-2] - y(sr.views[u, v])[2:-2, 2:-2]
            vals.append(10 * math.log10(1 / np.mean(d ** 2)))
    assert rep.mean_psnr == pytest.approx(np.mean(vals), abs=1e-4)
    assert isinstance(rep, EvalReport)
    assert rep.mean_ssim == pytest.approx(np.mean([v.ssim for v in rep.per_view]))


def test_evaluate_mismatch():
    with pytest.raises(LightFieldError):
        evaluate_lf(_lf(0, a=2), _lf(0, a=3))
    with pytest.raises(LightFieldError):
        evaluate_lf(_lf(0, hw=16), _lf(0, hw=16), border_crop=8)


def test_format_comparison_layout():
    table = format_comparison({"Bicubic": {"EPFL": (29.5, 0.935)}, "Ours": {"EPFL": (30.1, 0.94), "HCI": (31, 0.9)}},
                              title="x2")
    lines = table.splitlines()
    assert lines[0] == "x2"
    assert "29.50/0.935" in lines[3]
    assert lines[3].rstrip().endswith("-")
