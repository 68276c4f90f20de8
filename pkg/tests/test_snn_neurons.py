import numpy as np
import pytest

from evgate.errors import ShapeMismatchError
from evgate.snn.neurons import (
    NeuronParams,
    SurrogateParams,
    lif_step,
    sigmoid_spike,
    sigmoid_spike_grad,
    surrogate_grad,
)


class TestLifStep:
    def test_two_step_charge_and_hard_reset(self):
        p = NeuronParams(v_th=1.0, v_rest=0.0, leak=0.5, reset_mode="hard")
        v = np.array([0.0])
        s, v = lif_step(v, np.array([0.8]), p)
        assert s[0] == 0 and v[0] == pytest.approx(0.8)
        s, v = lif_step(v, np.array([0.8]), p)
        assert s[0] == 1 and v[0] == 0.0  # 0.4 + 0.8 = 1.2 >= 1 -> spike, hard reset

    def test_zero_input_decays_never_spikes(self):
        p = NeuronParams(leak=0.5)
        v = np.array([0.9])
        prev = v[0]
        for _ in range(20):
            s, v = lif_step(v, np.zeros(1), p)
            assert s[0] == 0
            assert v[0] <= prev  # monotone toward rest
            prev = v[0]
        assert v[0] == pytest.approx(0.0, abs=1e-5)

    def test_soft_reset_subtracts_threshold(self):
        p = NeuronParams(v_th=1.0, leak=1.0, reset_mode="soft")
        s, v = lif_step(np.array([0.0]), np.array([1.3]), p)
        assert s[0] == 1 and v[0] == pytest.approx(0.3)

    def test_leak_one_is_integrate_and_fire(self):
        p = NeuronParams(leak=1.0)
        v = np.array([0.4])
        s, v = lif_step(v, np.array([0.3]), p)
        assert v[0] == pytest.approx(0.7)  # no decay

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            lif_step(np.zeros(3), np.zeros(4), NeuronParams())

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            NeuronParams(v_th=0.0, v_rest=0.0)
        with pytest.raises(ValueError):
            NeuronParams(leak=0.0)
        with pytest.raises(ValueError):
            NeuronParams(reset_mode="bounce")


class TestSurrogateGrad:
    def test_center_of_window(self):
        assert surrogate_grad(1.0, SurrogateParams(width=1.0, v_th=1.0)) == 1.0

    def test_outside_window(self):
        p = SurrogateParams(width=1.0, v_th=1.0)
        assert surrogate_grad(1.0 + 1.0, p) == 0.0
        assert surrogate_grad(1.0 - 1.0, p) == 0.0

    def test_boundary_values(self):
        p = SurrogateParams(width=0.5, v_th=1.0)
        assert surrogate_grad(1.24, p) == pytest.approx(2.0)
        assert surrogate_grad(1.26, p) == 0.0

    def test_pointwise_matches_formula_on_grid(self):
        # direct evaluation of the rectangular window on a 1e-3 grid
        width, v_th = 1.0, 1.0
        p = SurrogateParams(width=width, v_th=v_th)
        grid = v_th - width + 1e-3 * np.arange(int(2 * width / 1e-3) + 1)
        got = surrogate_grad(grid, p)
        expected = (np.abs(grid - v_th) < width / 2.0).astype(float) / width
        assert (got == expected).all()

    def test_integrates_to_one(self):
        # midpoint quadrature over [v_th - width, v_th + width]; the window
        # boundaries fall on cell edges so the only error is roundoff
        width, v_th = 0.7, 1.0
        p = SurrogateParams(width=width, v_th=v_th)
        n = 4_000_000
        h = 2 * width / n
        u = v_th - width + (np.arange(n) + 0.5) * h
        integral = surrogate_grad(u, p).sum() * h
        assert abs(integral - 1.0) <= 1e-6

    def test_width_must_be_positive(self):
        with pytest.raises(ValueError):
            SurrogateParams(width=0.0)


class TestSigmoidSpike:
    def test_matches_reference_sigmoid(self):
        u = np.linspace(-3, 5, 41)
        z = (u - 1.0) / 0.2
        ref = 1.0 / (1.0 + np.exp(-z))
        assert np.allclose(sigmoid_spike(u, 1.0), ref, atol=1e-12)

    def test_grad_matches_finite_difference(self):
        u = np.linspace(0.2, 1.8, 17)
        h = 1e-6
        fd = (sigmoid_spike(u + h, 1.0) - sigmoid_spike(u - h, 1.0)) / (2 * h)
        assert np.allclose(sigmoid_spike_grad(u, 1.0), fd, atol=1e-8)
