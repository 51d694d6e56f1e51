"""Adaptive-kernel sizing and the phase-gated skip connection."""

import numpy as np
import pytest

from phaseformer.errors import ConfigurationError, DomainError
from phaseformer.skip import PhaseGate, adaptive_kernel_size, oa_ablation, opab
from phaseformer.tensor import Tensor, backward

from oracles import conv1d_loops, numeric_gradient, pem_direct, relative_error


def gate_oracle(u, kernel, use_phase=True):
    """Step-by-step composition: pem, mean pool, loop conv1d, sigmoid, scale."""
    n, c = u.shape[:2]
    feats = pem_direct(u) if use_phase else u
    pooled = feats.mean(axis=(2, 3)).reshape(n, 1, c)
    conv = conv1d_loops(pooled, kernel)
    gate = 1.0 / (1.0 + np.exp(-conv)).reshape(n, c, 1, 1)
    return u * gate


class TestAdaptiveKernelSize:
    @pytest.mark.parametrize("c,k", [(16, 3), (64, 3), (256, 5)])
    def test_stated_values(self, c, k):
        assert adaptive_kernel_size(c) == k

    def test_table_is_odd_and_nondecreasing(self):
        ks = [adaptive_kernel_size(c) for c in (8, 16, 32, 64, 128, 256, 512)]
        assert all(k % 2 == 1 for k in ks)
        assert ks == sorted(ks)

    def test_minimum_is_one(self):
        assert adaptive_kernel_size(1) == 1

    def test_domain_error(self):
        with pytest.raises(DomainError):
            adaptive_kernel_size(0)


def make_kernel(channels, rng=None, zeros=False):
    k = adaptive_kernel_size(channels)
    if zeros:
        return Tensor(np.zeros((1, 1, k)))
    return Tensor((rng or np.random.default_rng(0)).standard_normal((1, 1, k)))


class TestOpab:
    def test_zero_kernel_halves_input(self, rng):
        u = Tensor(rng.standard_normal((1, 16, 8, 8)))
        out = opab(u, make_kernel(16, zeros=True))
        np.testing.assert_array_equal(out.data, 0.5 * u.data)

    def test_output_bounded_by_input(self, rng):
        u = Tensor(rng.standard_normal((1, 16, 8, 8)))
        out = opab(u, make_kernel(16, rng))
        assert (np.abs(out.data) <= np.abs(u.data) + 1e-12).all()

    def test_matches_compositional_oracle(self, rng):
        u = rng.standard_normal((1, 16, 8, 8))
        kernel = make_kernel(16, rng)
        got = opab(Tensor(u), kernel).data
        expected = gate_oracle(u, kernel.data)
        assert np.abs(got - expected).max() < 1e-6

    def test_positive_scale_equivariance_exact_power_of_two(self, rng):
        u = rng.standard_normal((1, 8, 8, 8))
        kernel = make_kernel(8, rng)
        left = opab(Tensor(2.0 * u), kernel).data
        right = 2.0 * opab(Tensor(u), kernel).data
        np.testing.assert_array_equal(left, right)

    def test_positive_scale_equivariance_general(self, rng):
        u = rng.standard_normal((2, 16, 8, 8))
        kernel = make_kernel(16, rng)
        for a in (0.3, 2.5, 17.0):
            left = opab(Tensor(a * u), kernel).data
            right = a * opab(Tensor(u), kernel).data
            assert np.abs(left - right).max() < 1e-6

    def test_kernel_length_validated(self, rng):
        u = Tensor(rng.standard_normal((1, 16, 4, 4)))
        with pytest.raises(ConfigurationError):
            opab(u, Tensor(np.zeros((1, 1, 5))))

    def test_gradient_through_gate(self, rng):
        u_arr = rng.standard_normal((1, 8, 4, 4))
        k_arr = np.random.default_rng(2).standard_normal((1, 1, adaptive_kernel_size(8)))
        u = Tensor(u_arr, requires_grad=True)
        kernel = Tensor(k_arr, requires_grad=True)
        weight = rng.standard_normal((1, 8, 4, 4))
        backward((opab(u, kernel) * Tensor(weight)).sum())

        def scalar(uu, kk):
            return float((gate_oracle(uu, kk) * weight).sum())

        for i, t in enumerate([u, kernel]):
            expected = numeric_gradient(lambda uu, kk: scalar(uu, kk), [u_arr, k_arr], i)
            assert relative_error(t.grad, expected) < 1e-4


class TestOaAblation:
    def test_constant_channels_pool_to_constants(self):
        u_vals = np.arange(1.0, 9.0)
        u = Tensor(np.broadcast_to(u_vals[None, :, None, None], (1, 8, 4, 4)).copy())
        kernel = make_kernel(8, zeros=True)
        # with the zero kernel the gate is 0.5 regardless; check the pooled
        # path by using an identity-like kernel instead
        k = adaptive_kernel_size(8)
        ident = np.zeros((1, 1, k))
        ident[0, 0, k // 2] = 1.0
        out = oa_ablation(u, Tensor(ident)).data
        expected = u.data * (1.0 / (1.0 + np.exp(-u_vals)))[None, :, None, None]
        np.testing.assert_allclose(out, expected, rtol=1e-6)

    def test_differs_from_phase_gate(self, rng):
        u = Tensor(rng.standard_normal((1, 16, 8, 8)))
        kernel = make_kernel(16, rng)
        assert np.abs(opab(u, kernel).data - oa_ablation(u, kernel).data).max() > 1e-6

    def test_matches_oracle_without_pem(self, rng):
        u = rng.standard_normal((1, 16, 8, 8))
        kernel = make_kernel(16, rng)
        got = oa_ablation(Tensor(u), kernel).data
        expected = gate_oracle(u, kernel.data, use_phase=False)
        assert np.abs(got - expected).max() < 1e-6

    def test_not_scale_equivariant(self, rng):
        u = rng.standard_normal((1, 16, 8, 8))
        kernel = make_kernel(16, rng)
        left = oa_ablation(Tensor(3.0 * u), kernel).data
        right = 3.0 * oa_ablation(Tensor(u), kernel).data
        assert np.abs(left - right).max() > 1e-6


class TestPhaseGateModule:
    def test_owns_correct_kernel_length(self):
        gate = PhaseGate(64, np.random.default_rng(0))
        assert gate.kernel.shape == (1, 1, 3)

    def test_forward_matches_functional(self, rng):
        gate = PhaseGate(16, np.random.default_rng(1), dtype=np.float64)
        u = Tensor(rng.standard_normal((1, 16, 4, 4)))
        np.testing.assert_array_equal(gate.forward(u).data, opab(u, gate.kernel).data)
