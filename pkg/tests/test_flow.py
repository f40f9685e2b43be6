import numpy as np
import pytest
from scipy import ndimage

from prognoscope.errors import DataError
from prognoscope.video import RawVideo, farneback_flow, flow_to_color


def broadband_texture(h=80, w=80, seed=7):
    rng = np.random.default_rng(seed)
    tex = ndimage.gaussian_filter(rng.random((h, w)), 0.8)
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return (tex * 255).astype(np.uint8)


def shifted(img, dr, dc):
    return np.roll(np.roll(img, dr, axis=0), dc, axis=1)


def pair(f1, f2):
    return RawVideo(frames=np.stack([f1, f2]), fps=30.0)


def interior_median(field):
    inner = field.vectors[0, 12:-12, 12:-12]
    return np.median(inner.reshape(-1, 2), axis=0)


def test_zero_motion_flow_vanishes():
    tex = broadband_texture()
    field = farneback_flow(pair(tex, tex))
    assert field.vectors.shape == (1, 80, 80, 2)
    assert field.magnitude.max() < 0.05


@pytest.mark.parametrize("shift", [(2, 0), (0, 3), (-2, 1)])
def test_integer_shift_recovered(shift):
    tex = broadband_texture()
    field = farneback_flow(pair(tex, shifted(tex, *shift)))
    med = interior_median(field)
    assert abs(med[0] - shift[0]) < 0.5
    assert abs(med[1] - shift[1]) < 0.5


def test_frame_reversal_negates_flow():
    tex = broadband_texture(seed=9)
    fwd = interior_median(farneback_flow(pair(tex, shifted(tex, 2, 0))))
    rev = interior_median(farneback_flow(pair(shifted(tex, 2, 0), tex)))
    assert np.all(np.abs(fwd + rev) < 0.5)


def test_one_field_per_frame_pair():
    tex = broadband_texture()
    frames = np.stack([shifted(tex, i, 0) for i in range(5)])
    field = farneback_flow(RawVideo(frames=frames, fps=30.0))
    assert field.vectors.shape[0] == 4


def test_too_small_or_too_short_rejected():
    tiny = RawVideo(frames=np.zeros((2, 4, 4), dtype=np.uint8), fps=30.0)
    with pytest.raises(DataError):
        farneback_flow(tiny)
    single = RawVideo(frames=np.zeros((1, 32, 32), dtype=np.uint8), fps=30.0)
    with pytest.raises(DataError):
        farneback_flow(single)


# ---------------------------------------------------------------------------
# direction-color rendering


def test_zero_flow_renders_black():
    tex = broadband_texture()
    colored = flow_to_color(farneback_flow(pair(tex, tex)))
    assert colored.frames.shape == (1, 80, 80, 3)
    assert colored.frames.max() == 0


def test_uniform_flow_single_hue():
    tex = broadband_texture()
    colored = flow_to_color(farneback_flow(pair(tex, shifted(tex, 0, 3))))
    inner = colored.frames[0, 12:-12, 12:-12].reshape(-1, 3).astype(float)
    bright = inner[inner.sum(axis=1) > 0.5 * inner.sum(axis=1).max()]
    # a single direction means one dominating hue: low channel-wise spread
    assert len(bright) > 100
    assert bright.std(axis=0).max() < 40


def test_opposite_directions_are_complementary_hues():
    from matplotlib.colors import rgb_to_hsv

    tex = broadband_texture()
    right = flow_to_color(farneback_flow(pair(tex, shifted(tex, 0, 3))))
    left = flow_to_color(farneback_flow(pair(tex, shifted(tex, 0, -3))))

    def dominant_hue(video):
        inner = video.frames[0, 12:-12, 12:-12].reshape(-1, 3) / 255.0
        sums = inner.sum(axis=1)
        hsv = rgb_to_hsv(inner[sums > 0.5 * sums.max()])
        return np.median(hsv[:, 0])

    dh = abs(dominant_hue(right) - dominant_hue(left))
    dh = min(dh, 1.0 - dh) * 360.0
    assert abs(dh - 180.0) < 15.0
