"""PGD, evaluation, band-limited noise and accuracy-map similarity."""

import numpy as np
import pytest

from adanca.errors import ConfigError, ContractError, InputError, RangeError, ShapeError
from adanca.numerics import functional as F
from adanca.numerics.fft import nyquist, radial_frequency
from adanca.numerics.module import Module
from adanca.numerics.rng import Rng
from adanca.numerics.tensor import Parameter
from adanca.robustness import (AccuracyMap, PgdConfig, accuracy_map_similarity, band_mask, band_noise,
                               compared_cells, default_bands, evaluate, noise_sensitivity_map,
                               pgd_attack, predict)
from adanca.vit import HostModel, VitConfig


class LinearProbe(Module):
    """Logits ``flatten(x) @ W``; a transparent model for attack tests."""

    def __init__(self, weight):
        super().__init__()
        self.weight = Parameter(np.asarray(weight, dtype=np.float32))

    def forward(self, x):
        x = F.reshape(x, (x.shape[0], -1))
        return F.matmul(x, self.weight)


class ConstantModel(Module):
    def forward(self, x):
        return F.mul(F.sum(F.reshape(x, (x.shape[0], -1)), axis=1, keepdims=True), np.zeros((1, 10), np.float32))


def images(n, size=8, seed=0):
    return np.random.default_rng(seed).random((n, 3, size, size)).astype(np.float32)


@pytest.fixture(scope="module")
def small_host():
    m = HostModel(VitConfig(image_size=8, patch_size=2, embed_dim=8, depth=2, heads=2, num_classes=4), Rng(0))
    g = np.random.default_rng(1)
    for p in m.parameters():
        p.data = p.data + g.normal(0, 0.3, p.shape).astype(np.float32)
    m.eval()
    return m


# -- PGD ------------------------------------------------------------------------------

def test_pgd_zero_steps_is_identity(small_host):
    x = images(4)
    adv = pgd_attack(small_host, x, np.zeros(4, int), PgdConfig(0.1, 0.05, 0))
    assert adv.tobytes() == x.tobytes()


@pytest.mark.parametrize("w", [2.0, -3.0])
def test_pgd_single_step_logistic(w):
    # logits [0, w*x] give the logistic loss; for label 0, d loss/dx = w*sigmoid(w*x)
    W = np.zeros((3, 2), np.float32)
    W[:, 1] = w
    model = LinearProbe(W)
    model.eval()
    x = np.full((1, 3, 1, 1), 0.5, np.float32)
    adv = pgd_attack(model, x, np.array([0]), PgdConfig(0.1, 0.04, 1))
    np.testing.assert_allclose(adv, x + 0.04 * np.sign(w), atol=1e-7)


def test_pgd_respects_ball_and_pixel_range(small_host):
    x = images(6, seed=2)
    x[0] = 0.0
    x[1] = 1.0
    eps = 8 / 255
    adv = pgd_attack(small_host, x, np.arange(6) % 4, PgdConfig.from_255(8, 2, 7), batch_size=4)
    assert adv.dtype == np.float32
    assert np.all(np.abs(adv.astype(np.float64) - x) <= eps + 1e-7)
    assert adv.min() >= 0.0 and adv.max() <= 1.0


def test_pgd_increases_loss(small_host):
    x, y = images(16, seed=3), np.arange(16) % 4
    adv = pgd_attack(small_host, x, y, PgdConfig.from_255(8, 2, 5))
    loss = lambda z: float(F.cross_entropy(small_host(z), y).data)  # noqa: E731
    assert loss(adv) > loss(x)


def test_pgd_requires_test_mode(small_host):
    small_host.train()
    try:
        with pytest.raises(ContractError):
            pgd_attack(small_host, images(1), np.zeros(1, int), PgdConfig(0.1, 0.1, 1))
        with pytest.raises(ContractError):
            evaluate(small_host, images(1), np.zeros(1, int))
    finally:
        small_host.eval()


@pytest.mark.parametrize("args", [(0.1, 0.2, 1), (0.1, 0.05, -1), (-0.1, -0.2, 1)])
def test_pgd_config_validation(args):
    with pytest.raises(ConfigError):
        PgdConfig(*args)


def test_pgd_from_255():
    assert PgdConfig.from_255(1, 0.5, 5) == PgdConfig(1 / 255, 0.5 / 255, 5)


# -- evaluation -------------------------------------------------------------------------

def test_evaluate_matches_argmax_labels(small_host):
    x = images(20, seed=4)
    assert evaluate(small_host, x, predict(small_host, x)) == 100.0


def test_constant_logits_tie_to_class_zero():
    model = ConstantModel()
    model.eval()
    labels = np.arange(30) % 10
    assert evaluate(model, images(30), labels) == 10.0


def test_evaluate_permutation_invariant(small_host):
    x, y = images(25, seed=5), np.arange(25) % 4
    perm = np.random.default_rng(0).permutation(25)
    assert evaluate(small_host, x, y, batch_size=7) == evaluate(small_host, x[perm], y[perm])


def test_evaluate_errors(small_host):
    with pytest.raises(InputError):
        evaluate(small_host, images(0), np.zeros(0, int))
    with pytest.raises(ShapeError):
        evaluate(small_host, images(3), np.zeros(2, int))


# -- band-limited noise ---------------------------------------------------------------------

def test_zero_magnitude_leaves_images():
    x = images(3, 16)
    assert band_noise(x, 0.0, (1.0, 4.0), Rng(0)).tobytes() == x.tobytes()


@pytest.mark.parametrize("band", default_bands(32, 6))
def test_band_energy_inside_annulus(band):
    x = np.full((4, 3, 32, 32), 0.5, np.float32)
    _, noise = band_noise(x, 0.05, band, Rng(1), return_noise=True)
    power = np.abs(np.fft.fft2(noise)) ** 2
    fy = np.fft.fftfreq(32) * 32
    r = np.hypot(fy[:, None], fy[None, :])
    inside = r >= band[0]
    if band[1] < nyquist(32, 32):
        inside &= r < band[1]
    assert power[..., inside].sum() / power.sum() >= 0.9
    np.testing.assert_allclose(noise.reshape(4, -1).std(axis=1), 0.05, rtol=1e-6)


def test_full_band_std_close_to_magnitude():
    x = np.full((2, 3, 32, 32), 0.5, np.float32)
    noisy = band_noise(x, 0.04, (0.0, nyquist(32, 32)), Rng(2))
    assert abs((noisy - x).std() - 0.04) / 0.04 < 0.02


def test_full_band_mask_is_identity():
    assert band_mask(16, 16, (0.0, nyquist(16, 16))).all()
    r = radial_frequency(16, 16)
    assert band_mask(16, 16, (2.0, 4.0)).sum() == ((r >= 2) & (r < 4)).sum()


@pytest.mark.parametrize("band", [(-1.0, 2.0), (3.0, 3.0), (1.0, 100.0)])
def test_invalid_band(band):
    with pytest.raises(RangeError):
        band_noise(images(1, 16), 0.1, band, Rng(0))


def test_default_bands_cover_one_to_nyquist():
    b = default_bands(32, 6)
    assert len(b) == 6 and b[0][0] == 1.0 and b[-1][1] == 16.0
    assert all(hi == lo2 for (_, hi), (lo2, _) in zip(b[:-1], b[1:]))


# -- accuracy map ---------------------------------------------------------------------------

def test_noise_map_zero_row_equals_clean_and_reproducible(small_host):
    x, y = images(12, seed=6), np.arange(12) % 4
    bands = default_bands(8, 2)
    A = noise_sensitivity_map(small_host, x, y, [0.0, 0.2], bands, Rng(3))
    clean = evaluate(small_host, x, y)
    assert np.all(A.values[0] == clean)
    B = noise_sensitivity_map(small_host, x, y, [0.0, 0.2], bands, Rng(3))
    assert A.values.tobytes() == B.values.tobytes()


def test_constant_model_map_is_flat():
    model = ConstantModel()
    model.eval()
    y = np.arange(20) % 10
    A = noise_sensitivity_map(model, images(20, 16), y, [0.0, 0.1, 0.3], default_bands(16, 3), Rng(0))
    assert np.all(A.values == 10.0)


def grid(values):
    values = np.asarray(values, dtype=np.float64)
    mags = [0.0, 0.02, 0.04, 0.08, 0.16, 0.32][:values.shape[0]]
    return AccuracyMap(mags, default_bands(32, values.shape[1]), values)


def test_gamma_identical_and_offset():
    a = grid(np.random.default_rng(0).uniform(20, 90, (6, 6)))
    assert accuracy_map_similarity(a, a) == 100.0
    b = grid(a.values + 5.0)
    assert accuracy_map_similarity(b, a) == pytest.approx(95.0, abs=1e-12)


def test_gamma_ignores_skipped_levels():
    a = grid(np.full((6, 6), 50.0))
    v = a.values.copy()
    v[:2] = 0.0
    assert accuracy_map_similarity(grid(v), a, skip_levels=2) == 100.0
    assert accuracy_map_similarity(grid(v), a, skip_levels=0) < 100.0


def test_compared_cell_count():
    # a 9-level, 3-band grid leaves 21 cells after dropping two levels
    mags = [0, 0.02, 0.04, 0.06, 0.08, 0.12, 0.16, 0.24, 0.32]
    A = AccuracyMap(mags, default_bands(32, 3), np.zeros((9, 3)))
    assert compared_cells(A, 2) == 21


def test_gamma_grid_mismatch_and_range():
    a = grid(np.zeros((6, 6)))
    with pytest.raises(ShapeError):
        accuracy_map_similarity(a, grid(np.zeros((5, 6))))
    with pytest.raises(RangeError):
        accuracy_map_similarity(a, a, skip_levels=6)


def test_accuracy_map_csv_round_trip():
    a = grid(np.round(np.random.default_rng(1).uniform(0, 100, (6, 4)), 2))
    b = AccuracyMap.from_csv(a.to_csv())
    np.testing.assert_allclose(b.values, a.values, rtol=1e-6)
    assert b.magnitudes == a.magnitudes
    np.testing.assert_allclose(b.bands, a.bands, rtol=1e-5)
    assert a.to_csv().startswith("magnitude,band_lo,band_hi,accuracy\n")


def test_accuracy_map_shape_check():
    with pytest.raises(ShapeError):
        AccuracyMap([0.0], [(1.0, 2.0)], np.zeros((2, 1)))
    with pytest.raises(ShapeError):
        AccuracyMap.from_csv("magnitude,band_lo,band_hi,accuracy\n0,1,2,50\n0.1,2,3,40\n")
