"""SSIM-based quality error and its extrapolation to the whole configuration space.

Computing the error of every configuration by rendering it is unaffordable, so
the error model keeps one computed worst-level error per pass and scales it to
intermediate levels with pre-calibrated ratios; a configuration's error is the
sum of its degraded passes' contributions. The sum may exceed 1 -- only its
ordering matters to the selection step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import correlate1d

from .configspace import (
    PassRoster,
    RenderingConfiguration,
    single_degradation_config,
)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_DYNAMIC_RANGE = 1.0

# Errors below this are treated as "the pass did nothing in this frame" during
# ratio calibration.
INERT_ERROR_FLOOR = 1e-6


@dataclass(frozen=True)
class FrameImage:
    """Row-major grayscale frame with intensities in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2-D array")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _gaussian_taps(window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (window - 1) / 2.0
    x = np.arange(window) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _windowed_mean(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # Separable Gaussian, then crop to windows fully inside the image.
    half = len(taps) // 2
    out = correlate1d(img, taps, axis=0, mode="constant")
    out = correlate1d(out, taps, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(reference: FrameImage, candidate: FrameImage) -> float:
    """Mean local structural similarity over Gaussian-weighted 11x11 windows."""
    if reference.pixels.shape != candidate.pixels.shape:
        raise ValueError(
            f"image dimensions differ: {reference.pixels.shape} vs {candidate.pixels.shape}"
        )
    if min(reference.pixels.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW} pixels on each side")
    x = reference.pixels
    y = candidate.pixels
    taps = _gaussian_taps()

    mu_x = _windowed_mean(x, taps)
    mu_y = _windowed_mean(y, taps)
    var_x = _windowed_mean(x * x, taps) - mu_x * mu_x
    var_y = _windowed_mean(y * y, taps) - mu_y * mu_y
    cov = _windowed_mean(x * y, taps) - mu_x * mu_y

    c1 = (SSIM_K1 * SSIM_DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_DYNAMIC_RANGE) ** 2
    ssim_map = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return float(ssim_map.mean())


def quality_error(reference: FrameImage, candidate: FrameImage) -> float:
    """1 - SSIM, clamped at zero."""
    return max(0.0, 1.0 - ssim(reference, candidate))


@dataclass(frozen=True)
class ErrorRatioTable:
    """Per pass and level, the error relative to that pass's worst level.

    ``ratios[i][0]`` is 0 (no degradation); ``ratios[i][level_count-1]`` is
    exactly 1. The ratios are a property of the rendering engine, not of the
    scene, so they are calibrated once.
    """

    ratios: tuple[tuple[float, ...], ...]
    inert: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        ratios = tuple(tuple(float(r) for r in row) for row in self.ratios)
        for i, row in enumerate(ratios):
            if any(r < 0 for r in row):
                raise ValueError(f"pass {i}: ratios must be nonnegative")
        object.__setattr__(self, "ratios", ratios)
        inert = self.inert or tuple(False for _ in ratios)
        if len(inert) != len(ratios):
            raise ValueError("inert flags must match the pass count")
        object.__setattr__(self, "inert", tuple(bool(b) for b in inert))


@dataclass(frozen=True)
class ErrorModel:
    """Computed worst-level errors plus the ratio table, as one snapshot.

    ``ref_frames[i]`` records which scene frame pass i's error was computed
    from (-1 if never); staleness is measured against it.
    """

    e_worst: tuple[float, ...]
    ratios: ErrorRatioTable
    ref_frames: tuple[int, ...]

    def __post_init__(self) -> None:
        e = tuple(float(v) for v in self.e_worst)
        if any(v < 0 for v in e):
            raise ValueError("worst-level errors cannot be negative")
        if len(e) != len(self.ratios.ratios) or len(e) != len(self.ref_frames):
            raise ValueError("error model sections disagree on pass count")
        object.__setattr__(self, "e_worst", e)
        object.__setattr__(self, "ref_frames", tuple(int(f) for f in self.ref_frames))

    @staticmethod
    def initial(ratios: ErrorRatioTable) -> "ErrorModel":
        n = len(ratios.ratios)
        return ErrorModel(tuple(0.0 for _ in range(n)), ratios, tuple(-1 for _ in range(n)))

    def staleness(self, current_frame: int) -> tuple[int, ...]:
        return tuple(
            -1 if rf < 0 else current_frame - rf for rf in self.ref_frames
        )


def calibrate_ratios(
    render,
    roster: PassRoster,
    calibration_frames,
) -> ErrorRatioTable:
    """Measure per-level error ratios by exhaustive single-pass degradations.

    ``render(config, frame_index)`` must produce a FrameImage. For each pass
    and level the ratio is the mean over calibration frames of
    e(level) / e(worst level); frames where the worst level itself produces no
    error are skipped, and a pass with no usable frame at all is marked inert
    with zero ratios.
    """
    calibration_frames = list(calibration_frames)
    if not calibration_frames:
        raise ValueError("calibration needs at least one frame")

    ratios: list[tuple[float, ...]] = []
    inert: list[bool] = []
    for i, p in enumerate(roster.passes):
        lmax = p.level_count - 1
        if lmax == 0:
            ratios.append((0.0,))
            inert.append(True)
            continue
        per_level_sums = [0.0] * (lmax + 1)
        usable = 0
        for frame in calibration_frames:
            reference = render(roster.best_config(), frame)
            worst = quality_error(
                reference, render(single_degradation_config(roster, i, lmax), frame)
            )
            if worst < INERT_ERROR_FLOOR:
                continue
            usable += 1
            for lvl in range(1, lmax):
                e = quality_error(
                    reference, render(single_degradation_config(roster, i, lvl), frame)
                )
                per_level_sums[lvl] += e / worst
        if usable == 0:
            ratios.append(tuple(0.0 for _ in range(lmax + 1)))
            inert.append(True)
            continue
        row = [0.0] * (lmax + 1)
        for lvl in range(1, lmax):
            row[lvl] = per_level_sums[lvl] / usable
        row[lmax] = 1.0
        ratios.append(tuple(row))
        inert.append(False)
    return ErrorRatioTable(tuple(ratios), tuple(inert))


def update_worst_errors(
    error_model: ErrorModel,
    reference: FrameImage,
    backgrounds: dict[int, FrameImage],
    ref_frame: int,
) -> ErrorModel:
    """Refresh e_worst for the passes whose background renders arrived.

    ``backgrounds`` maps pass index to the frame rendered with that pass fully
    degraded; entries not supplied keep their previous value and age.
    """
    e_worst = list(error_model.e_worst)
    ref_frames = list(error_model.ref_frames)
    for i, bg in backgrounds.items():
        e_worst[i] = quality_error(reference, bg)
        ref_frames[i] = ref_frame
    return replace(
        error_model, e_worst=tuple(e_worst), ref_frames=tuple(ref_frames)
    )


def estimate_error(error_model: ErrorModel, config: RenderingConfiguration) -> float:
    """Additive error estimate: sum of ratio-scaled worst errors of degraded passes."""
    total = 0.0
    for i, lvl in enumerate(config):
        if lvl > 0:
            total += error_model.ratios.ratios[i][lvl] * error_model.e_worst[i]
    return total
