import numpy as np
import numpy.testing as npt
import pytest

from fairdiffusion.autodiff import Tensor
from fairdiffusion.diffusion import (add_noise, add_noise_batch, ancestral_sample,
                                     diffusion_loss, predict_noise, reconstruct_latent)
from fairdiffusion.errors import ContractError
from fairdiffusion.networks import DenoiserNet
from fairdiffusion.schedule import NoiseSchedule, build_schedule


class StubSchedule:
    """Duck-typed schedule with pinned alpha_bar values for limit cases."""

    def __init__(self, abar):
        self._abar = abar
        self.num_steps = 1

    def alpha_bar(self, t):
        return self._abar


def test_add_noise_signal_limit():
    z0 = Tensor([1.0, -0.5])
    eps = Tensor([2.0, 2.0])
    out = add_noise(z0, eps, 1, StubSchedule(1.0))
    npt.assert_allclose(out.data, z0.data, atol=1e-12)


def test_add_noise_noise_limit():
    z0 = Tensor([1.0, -0.5])
    eps = Tensor([2.0, 2.0])
    out = add_noise(z0, eps, 1, StubSchedule(0.0))
    npt.assert_allclose(out.data, eps.data, atol=1e-12)


def test_add_noise_direct_value():
    out = add_noise(Tensor([1.0]), Tensor([0.0]), 1, StubSchedule(0.64))
    npt.assert_allclose(out.data, [0.8], atol=1e-7)


def test_add_noise_shape_mismatch():
    with pytest.raises(ContractError):
        add_noise(Tensor(np.ones(3)), Tensor(np.ones(4)), 1, StubSchedule(0.5))
    with pytest.raises(ContractError):
        add_noise_batch(np.ones((2, 3)), np.ones((2, 3)), [1, 99], build_schedule(10))


def test_add_noise_preserves_unit_variance():
    # var(z_t) = abar + (1 - abar) = 1 for standard-normal z0 and eps
    rng = np.random.default_rng(8)
    sched = build_schedule(200, 1e-4, 0.02)
    z0 = rng.standard_normal((200, 784)).astype(np.float32)
    eps = rng.standard_normal((200, 784)).astype(np.float32)
    for t in (1, 100, 200):
        z_t = add_noise_batch(z0, eps, np.full(200, t), sched)
        assert abs(z_t.var() - 1.0) < 0.02


def test_reconstruct_identity_for_perfect_prediction():
    rng = np.random.default_rng(0)
    for _ in range(200):
        z0 = Tensor(rng.standard_normal(16), dtype=np.float32)
        eps = Tensor(rng.standard_normal(16), dtype=np.float32)
        out = reconstruct_latent(z0, eps, eps)
        npt.assert_array_equal(out.data, z0.data)


def test_reconstruct_with_zero_prediction():
    z0 = Tensor([1.0, 2.0])
    eps = Tensor([0.25, -0.5])
    out = reconstruct_latent(z0, eps, Tensor([0.0, 0.0]))
    npt.assert_allclose(out.data, [1.25, 1.5], atol=1e-7)


def test_reconstruct_direct_value():
    out = reconstruct_latent(Tensor([1.0, 2.0]), Tensor([0.5, -0.5]), Tensor([0.1, 0.1]))
    npt.assert_allclose(out.data, [1.4, 1.4], atol=1e-6)


def test_diffusion_loss_examples():
    eps = Tensor(np.ones((2, 3)))
    assert diffusion_loss(eps, eps).data == 0.0
    zero = Tensor(np.zeros((2, 3)))
    assert diffusion_loss(eps, zero).data == pytest.approx(1.0)
    assert diffusion_loss(Tensor([[1.0, 0.0]]), Tensor([[0.0, 0.0]])).data == pytest.approx(0.5)


def test_diffusion_loss_nonnegative_and_zero_iff_equal():
    rng = np.random.default_rng(4)
    a = Tensor(rng.standard_normal((3, 5)))
    b = Tensor(rng.standard_normal((3, 5)))
    assert diffusion_loss(a, b).data > 0
    assert diffusion_loss(a, a).data == 0.0


def test_zero_initialized_denoiser_predicts_zero():
    net = DenoiserNet(input_width=16, time_width=4, cond_width=4, hidden_width=8, num_steps=5)
    for t in net.params.tensors():
        t.data[...] = 0.0
    out = predict_noise(net, Tensor(np.ones((3, 16), dtype=np.float32)), 2,
                        Tensor(np.ones(4, dtype=np.float32)))
    npt.assert_array_equal(out.data, np.zeros((3, 16)))


def test_predict_noise_is_deterministic():
    net = DenoiserNet(input_width=16, time_width=4, cond_width=4, hidden_width=8,
                      num_steps=5, rng=np.random.default_rng(2))
    z = Tensor(np.random.default_rng(3).standard_normal((2, 16), dtype=np.float32))
    c = Tensor(np.ones(4, dtype=np.float32))
    a = predict_noise(net, z, 3, c)
    b = predict_noise(net, z, 3, c)
    assert a.data.tobytes() == b.data.tobytes()


def test_predict_noise_checkpoint_roundtrip_exact(tmp_path):
    from fairdiffusion.checkpoint import load_checkpoint, save_checkpoint

    net = DenoiserNet(input_width=16, time_width=4, cond_width=4, hidden_width=8,
                      num_steps=5, rng=np.random.default_rng(7))
    z = Tensor(np.random.default_rng(9).standard_normal((2, 16), dtype=np.float32))
    c = Tensor(np.zeros(4, dtype=np.float32))
    before = predict_noise(net, z, 1, c).data
    assert np.all(np.isfinite(before))

    save_checkpoint(tmp_path / "net", {n: t.data for n, t in net.params.items()}, {"kind": "test"})
    arrays, _ = load_checkpoint(tmp_path / "net")
    restored = DenoiserNet(input_width=16, time_width=4, cond_width=4, hidden_width=8, num_steps=5)
    for name, t in restored.params.items():
        t.data = arrays[name]
    after = predict_noise(restored, z, 1, c).data
    assert before.tobytes() == after.tobytes()


def test_sampler_is_deterministic():
    net = DenoiserNet(input_width=16, time_width=4, cond_width=4, hidden_width=8,
                      num_steps=6, rng=np.random.default_rng(5))
    sched = build_schedule(6, 1e-3, 0.1)
    cond = np.zeros(4, dtype=np.float32)
    a = ancestral_sample(net, sched, cond, 4, seed=11)
    b = ancestral_sample(net, sched, cond, 4, seed=11)
    assert a.tobytes() == b.tobytes()


def test_single_step_sampler_matches_hand_computed_posterior():
    # zero denoiser at T=1: x0 = x1 / sqrt(alpha_1), no noise term, then clamp
    net = DenoiserNet(input_width=8, time_width=4, cond_width=2, hidden_width=4, num_steps=1)
    for t in net.params.tensors():
        t.data[...] = 0.0
    beta = 0.04
    sched = NoiseSchedule([beta])
    seed = 21
    out = ancestral_sample(net, sched, np.zeros(2, dtype=np.float32), 3, seed=seed)

    rng = np.random.default_rng(seed)
    x1 = rng.standard_normal((3, 8), dtype=np.float32)
    expected = np.clip(x1 / float(np.sqrt(1.0 - beta)), -1.0, 1.0)
    npt.assert_array_equal(out, expected)


def test_sampler_shape_and_range_contract():
    net = DenoiserNet(input_width=784, hidden_width=16, num_steps=4, rng=np.random.default_rng(1))
    sched = build_schedule(4, 1e-3, 0.02)
    out = ancestral_sample(net, sched, np.zeros(16, dtype=np.float32), 3, seed=0)
    assert out.shape == (3, 784)
    assert out.min() >= -1.0 and out.max() <= 1.0
    with pytest.raises(ContractError):
        ancestral_sample(net, sched, np.zeros(16, dtype=np.float32), 0, seed=0)
