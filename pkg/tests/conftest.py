from pathlib import Path

import numpy as np
import pytest

from rendergov.scenario import load_scenario

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def demo_scenario():
    return load_scenario(SCENARIO_DIR / "demo.json")


@pytest.fixture(scope="session")
def mini_scenario():
    return load_scenario(SCENARIO_DIR / "mini.json")


@pytest.fixture(scope="session")
def regime_scenario():
    return load_scenario(SCENARIO_DIR / "regime_change.json")


def _naive_ssim(a: np.ndarray, b: np.ndarray, window=11, sigma=1.5, k1=0.01, k2=0.03, L=1.0):
    """Independent per-window SSIM reference: explicit patch loops, no filtering."""
    half = window // 2
    yy, xx = np.mgrid[-half : half + 1, -half : half + 1].astype(float)
    w = np.exp(-(xx * xx + yy * yy) / (2.0 * sigma * sigma))
    w /= w.sum()
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    h, wd = a.shape
    vals = []
    for i in range(half, h - half):
        for j in range(half, wd - half):
            pa = a[i - half : i + half + 1, j - half : j + half + 1]
            pb = b[i - half : i + half + 1, j - half : j + half + 1]
            mu_a = (w * pa).sum()
            mu_b = (w * pb).sum()
            var_a = (w * pa * pa).sum() - mu_a * mu_a
            var_b = (w * pb * pb).sum() - mu_b * mu_b
            cov = (w * pa * pb).sum() - mu_a * mu_b
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(vals))


@pytest.fixture(scope="session")
def naive_ssim():
    return _naive_ssim
