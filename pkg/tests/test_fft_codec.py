"""Spectral baseline: transform contracts and top-k selection behavior."""

import numpy as np
import pytest

from depthnav.errors import ShapeError
from depthnav.fft_codec import FftPlan, fft2, fft_topk_reconstruct, ifft2, topk_coefficient_mask


def _cosine(h, w, fu, fv, amp=0.2, phase=0.0):
    uu, vv = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return amp * np.cos(2 * np.pi * (fu * uu / h + fv * vv / w) + phase)


def test_round_trip_on_random_non_power_of_two_grid():
    rng = np.random.default_rng(0)
    x = rng.random((60, 80))
    err = np.abs(ifft2(fft2(x)).real - x).max()
    assert err < 1e-5


def test_parseval_identity():
    rng = np.random.default_rng(1)
    x = rng.random((27, 35))  # odd mixed-radix sizes
    spectrum = fft2(x)
    lhs = np.sum(np.abs(x) ** 2)
    rhs = np.sum(np.abs(spectrum) ** 2) / x.size
    assert abs(lhs - rhs) / lhs < 1e-4


def test_constant_grid_has_single_dc_coefficient():
    x = np.full((12, 18), 0.7)
    spectrum = fft2(x)
    assert abs(spectrum[0, 0] - 0.7 * 12 * 18) < 1e-9
    spectrum[0, 0] = 0
    assert np.abs(spectrum).max() < 1e-9


def test_pure_cosine_occupies_two_conjugate_bins():
    x = _cosine(24, 32, 3, 5)
    spectrum = fft2(x)
    mags = np.abs(spectrum)
    nonzero = np.argwhere(mags > 1e-9 * mags.max() + 1e-12)
    assert len(nonzero) == 2
    (u1, v1), (u2, v2) = nonzero
    assert (u1 + u2) % 24 == 0 and (v1 + v2) % 32 == 0


def test_rejects_non_finite_input():
    bad = np.zeros((4, 4))
    bad[0, 0] = np.nan
    with pytest.raises(ShapeError):
        fft2(bad)


def test_sum_of_cosines_reconstructed_exactly_within_budget():
    # k/2 cosines plus DC fit comfortably in a k-selection budget
    h, w, k = 30, 40, 16
    rng = np.random.default_rng(2)
    x = np.full((h, w), 0.5)
    freqs = {(2, 3), (5, 1), (0, 7), (4, 4), (7, 0), (1, 6), (6, 2), (3, 5)}
    for fu, fv in freqs:  # 8 = k/2 cosines
        x = x + _cosine(h, w, fu, fv, amp=0.04, phase=rng.uniform(0, 2 * np.pi))
    assert x.min() > 0 and x.max() < 1  # clamping stays inert
    out = fft_topk_reconstruct(x, k)
    assert np.abs(out - x).max() < 1e-5


def test_k_equal_to_grid_size_is_identity():
    rng = np.random.default_rng(3)
    x = rng.random((15, 17))
    out = fft_topk_reconstruct(x, 15 * 17)
    assert np.abs(out - x).max() < 1e-5


def test_fairness_bookkeeping_64_complex_is_128_reals():
    plan = FftPlan(270, 480, 64)
    assert plan.real_value_budget == 128


def test_mask_keeps_conjugate_partners_together():
    rng = np.random.default_rng(4)
    x = rng.random((20, 26))
    mask = topk_coefficient_mask(fft2(x), 10)
    h, w = mask.shape
    for u in range(h):
        for v in range(w):
            assert mask[u, v] == mask[(h - u) % h, (w - v) % w]


def test_output_is_real_with_tiny_imaginary_residue():
    rng = np.random.default_rng(5)
    x = rng.random((33, 21))
    out = fft_topk_reconstruct(x, 9)
    assert out.dtype.kind == "f"
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_error_monotone_in_k_preclamp_and_on_rendered_frame():
    # orthogonality argument: pre-clamp error is exactly the dropped energy
    rng = np.random.default_rng(6)
    x = rng.random((24, 30))
    errors = []
    for k in (4, 16, 64, 24 * 30):
        out = fft_topk_reconstruct(x, k, clamp_output=False)
        errors.append(float(((out - x) ** 2).sum()))
    assert all(errors[i + 1] <= errors[i] + 1e-9 for i in range(len(errors) - 1))
    assert errors[-1] < 1e-9

    # and the clamped pipeline on an actual rendered cluttered frame
    from depthnav.camera import CameraModel, render
    from depthnav.world import desk_world_params, generate_world, hover_state

    world = generate_world(desk_world_params("dense", seed=3))
    state = hover_state([16.0, 7.5, 1.0])
    frame = render(world, CameraModel(), state.position, state.yaw)
    sweep = []
    for k in (16, 64, 256):
        out = fft_topk_reconstruct(frame.x.astype(np.float64), k)
        valid = frame.valid > 0
        sweep.append(float(((out - frame.x) ** 2)[valid].sum()))
    assert sweep[0] > sweep[1] > sweep[2]
