import numpy as np
import pytest

import dcdsm


def test_wavelet_round_trip():
    x = np.random.default_rng(0).standard_normal((3, 16, 16))
    bands = dcdsm.dwt2(x)
    assert bands[0].shape == (3, 8, 8)
    np.testing.assert_allclose(dcdsm.idwt2(*bands), x, atol=1e-12)


def test_fft_matches_numpy():
    x = np.random.default_rng(1).standard_normal((2, 8, 16))
    re, im = dcdsm.fft2(x)
    ref = np.fft.fft2(x)
    np.testing.assert_allclose(re, ref.real, atol=1e-9)
    np.testing.assert_allclose(im, ref.imag, atol=1e-9)
    np.testing.assert_allclose(dcdsm.ifft2(re, im), x, atol=1e-9)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        dcdsm.fft2(np.zeros((3, 12, 16)))


def test_schedule_and_posterior_mean():
    s = dcdsm.NoiseSchedule.linear(200)
    assert s.steps == 200
    assert s.alpha_bar(0) == 1.0
    rng = np.random.default_rng(2)
    x0 = rng.uniform(-1, 1, (3, 8, 8))
    eps = rng.standard_normal((3, 8, 8))
    xt = dcdsm.forward_sample(x0, 1, eps, s)
    for exact in (False, True):
        np.testing.assert_allclose(dcdsm.posterior_mean(xt, 1, eps, s, exact), x0, atol=1e-8)


def test_loss_fixed_points():
    z = np.zeros((3, 8, 8))
    x = np.random.default_rng(3).standard_normal((3, 8, 8))
    assert dcdsm.wfen_loss(x, x, z, z, x, x) == 2.0
    assert dcdsm.diffusion_loss(x, x, x, x) == 0.0
    assert dcdsm.total_loss(1.0, 2.0, 3.0) == 5.0


def test_metrics_and_ppm():
    s1, s2, mix = dcdsm.make_sample("dataset.size = 16", "test", 3)
    assert mix.shape == (3, 16, 16)
    assert dcdsm.psnr(s1, s1) == 100.0
    assert dcdsm.ssim(s1, s1) == pytest.approx(1.0)
    data = dcdsm.encode_ppm(mix)
    assert data.startswith(b"P6")
    back = dcdsm.decode_ppm(data)
    assert np.max(np.abs(back - mix)) <= 1.0 / 255.0 + 1e-12


def test_config_rejects_unknown_key():
    assert "gamma = 3" in dcdsm.config_text("")
    with pytest.raises(ValueError):
        dcdsm.config_text("no_such_key = 1")


def test_gradcheck_wfca():
    err, ok = dcdsm.gradcheck("wfca")
    assert ok and err < 1e-4


def test_train_and_separate(tmp_path):
    cfg = "\n".join([
        "dataset.train = 8", "dataset.test = 2", "dataset.size = 16", "schedule.T = 5",
        "model.base_width = 4", "model.time_embed_dim = 8", "wfen.feature_channels = 4",
        "wfen.unet_width = 4", "wfca.grid_h = 2", "wfca.grid_w = 2", "batch_size = 4",
        "max_iterations = 2", "val_interval = 1", "val_count = 2",
    ])
    ckpt = tmp_path / "m.ckpt"
    history = dcdsm.train(cfg, ckpt)
    assert [it for it, _ in history] == [1, 2]
    _, _, mix = dcdsm.make_sample("dataset.size = 16", "test", 0)
    a, b = dcdsm.separate(ckpt, mix)
    assert a.shape == mix.shape and b.shape == mix.shape
    assert np.all(np.abs(a) <= 1.0)
