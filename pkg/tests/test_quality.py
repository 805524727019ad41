import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from rendergov.configspace import PassDescriptor, PassRoster, RenderingConfiguration
from rendergov.quality import (
    ErrorModel,
    ErrorRatioTable,
    FrameImage,
    calibrate_ratios,
    estimate_error,
    quality_error,
    ssim,
    update_worst_errors,
)
from rendergov.simgpu import FrameSynthesizer, PassDegradation, render_frame



def _pattern(size=16, shift=0.0):
    y, x = np.mgrid[0:size, 0:size].astype(float)
    return np.clip(0.5 + 0.3 * np.sin(x / 2.0 + shift) * np.cos(y / 3.0), 0.0, 1.0)


def test_ssim_identical_images_is_exactly_one():
    img = FrameImage(_pattern())
    assert ssim(img, img) == 1.0


def test_ssim_constant_image_self_similarity():
    img = FrameImage(np.full((16, 16), 0.4))
    assert ssim(img, img) == 1.0


def test_ssim_negative_image_below_one():
    a = _pattern()
    assert ssim(FrameImage(a), FrameImage(1.0 - a)) < 1.0


def test_ssim_matches_naive_reference_on_blurred_pattern(naive_ssim):
    from scipy.ndimage import uniform_filter

    a = _pattern(16)
    b = uniform_filter(a, size=3)
    assert abs(ssim(FrameImage(a), FrameImage(b)) - naive_ssim(a, b)) <= 1e-9


def test_ssim_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        ssim(FrameImage(np.zeros((16, 16))), FrameImage(np.zeros((16, 20))))
    with pytest.raises(ValueError):
        ssim(FrameImage(np.zeros((8, 8))), FrameImage(np.zeros((8, 8))))


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=20, deadline=None)
@seed(13)
def test_ssim_symmetry(rng_seed):
    rng = np.random.default_rng(rng_seed)
    a = FrameImage(rng.uniform(0, 1, (16, 16)))
    b = FrameImage(rng.uniform(0, 1, (16, 16)))
    assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12


def test_quality_error_identical_frames_is_zero():
    img = FrameImage(_pattern())
    assert quality_error(img, img) == 0.0


def test_quality_error_orders_with_degradation_magnitude():
    rng = np.random.default_rng(3)
    a = _pattern(32)
    noise = rng.normal(0.0, 1.0, a.shape)
    small = FrameImage(np.clip(a + 0.03 * noise, 0, 1))
    large = FrameImage(np.clip(a + 0.12 * noise, 0, 1))
    ref = FrameImage(a)
    e_small = quality_error(ref, small)
    e_large = quality_error(ref, large)
    assert 0.0 < e_small < e_large


def _ratio_roster(levels=3):
    return PassRoster(
        (
            PassDescriptor("a", levels, uses_fragments=True),
            PassDescriptor("b", levels, uses_fragments=True),
        )
    )


def test_calibrate_ratios_level_independent_degradation_gives_unit_ratios():
    roster = _ratio_roster()
    base = _pattern(32)
    corrupted = np.clip(base + 0.2 * np.sin(np.arange(32) / 1.3), 0, 1)

    def render(config, frame):
        if any(lvl > 0 for lvl in config):
            return FrameImage(corrupted)
        return FrameImage(base)

    table = calibrate_ratios(render, roster, [0, 1])
    for row in table.ratios:
        assert row[1] == pytest.approx(1.0, abs=1e-12)
        assert row[2] == 1.0


def test_calibrate_ratios_flags_inert_pass():
    roster = _ratio_roster()
    base = _pattern(32)

    def render(config, frame):
        if config[0] > 0:
            return FrameImage(np.clip(base + 0.1, 0, 1))
        return FrameImage(base)  # pass 1 never changes anything

    table = calibrate_ratios(render, roster, [0])
    assert not table.inert[0]
    assert table.inert[1]
    assert all(r == 0.0 for r in table.ratios[1])


def test_calibrate_ratios_rejects_empty_calibration():
    roster = _ratio_roster()
    with pytest.raises(ValueError):
        calibrate_ratios(lambda c, f: FrameImage(_pattern()), roster, [])


def test_calibrate_ratios_linear_area_degradation_matches_strength_ratios():
    roster = PassRoster(
        (
            PassDescriptor("cover", 3, uses_fragments=True),
            PassDescriptor("other", 2, uses_fragments=True),
        )
    )
    synth = FrameSynthesizer(
        roster=roster,
        degradations=(
            PassDegradation("area_noise", (0.0, 0.4, 0.8), amplitude=0.3),
            PassDegradation("noise", (0.0, 0.1)),
        ),
        height=128,
        width=128,
        seed=5,
    )
    table = calibrate_ratios(
        lambda c, f: render_frame(synth, c, f), roster, [11, 57, 203]
    )
    want = 0.4 / 0.8
    assert table.ratios[0][1] == pytest.approx(want, rel=0.1)
    assert table.ratios[0][2] == 1.0


def _error_model():
    ratios = ErrorRatioTable(((0.0, 0.5, 1.0), (0.0, 0.25, 1.0), (0.0, 0.5, 1.0)))
    return ErrorModel((0.04, 0.03, 0.02), ratios, (10, 10, 10))


def test_update_worst_errors_is_incremental():
    em = _error_model()
    ref = FrameImage(_pattern(32))
    rng = np.random.default_rng(8)
    bg = FrameImage(np.clip(_pattern(32) + rng.normal(0, 0.1, (32, 32)), 0, 1))
    updated = update_worst_errors(em, ref, {1: bg}, ref_frame=50)
    assert updated.e_worst[0] == em.e_worst[0]
    assert updated.e_worst[2] == em.e_worst[2]
    assert updated.e_worst[1] == pytest.approx(quality_error(ref, bg))
    assert updated.ref_frames == (10, 50, 10)
    assert updated.staleness(60) == (50, 10, 50)


def test_update_worst_errors_identical_background_gives_zero():
    em = _error_model()
    ref = FrameImage(_pattern(32))
    updated = update_worst_errors(em, ref, {0: ref}, ref_frame=5)
    assert updated.e_worst[0] == 0.0


def test_estimate_error_best_config_is_zero():
    em = _error_model()
    assert estimate_error(em, RenderingConfiguration((0, 0, 0))) == 0.0


def test_estimate_error_worked_additivity_example():
    # pass 0 fully degraded (ratio 1, worst error 0.04) plus pass 2 at a
    # mid level whose ratio-scaled error is 0.01
    ratios = ErrorRatioTable(((0.0, 0.5, 1.0), (0.0, 0.5, 1.0), (0.0, 0.5, 1.0)))
    em = ErrorModel((0.04, 0.1, 0.02), ratios, (0, 0, 0))
    e = estimate_error(em, RenderingConfiguration((2, 0, 1)))
    assert e == pytest.approx(0.05, abs=1e-12)


def test_estimate_error_worst_level_recovers_e_worst_exactly():
    em = _error_model()
    assert estimate_error(em, RenderingConfiguration((2, 0, 0))) == em.e_worst[0]
    assert estimate_error(em, RenderingConfiguration((0, 2, 0))) == em.e_worst[1]


def test_estimate_error_monotone_in_ratio_scaled_contribution():
    em = _error_model()
    low = estimate_error(em, RenderingConfiguration((1, 0, 0)))
    high = estimate_error(em, RenderingConfiguration((2, 0, 0)))
    assert high >= low


def test_error_model_initial_is_all_zero_and_never_updated():
    em = ErrorModel.initial(ErrorRatioTable(((0.0, 1.0),)))
    assert em.e_worst == (0.0,)
    assert em.staleness(100) == (-1,)
