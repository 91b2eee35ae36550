"""Backend contract tests: the compiled and NumPy kernels must agree."""
import numpy as np
import pytest

from ecgdenoise import _kernels
from ecgdenoise._kernels import _mcsharry_np
from ecgdenoise.errors import IntegrationDivergedError
from ecgdenoise.simulate import DEFAULT_PARAMS


def _batch_args(n=3, h=1.0 / 2000.0, n_steps=4000, stride=4):
    p = DEFAULT_PARAMS
    rng = np.random.default_rng(7)
    a = np.tile(p.a, (n, 1)) * rng.uniform(0.9, 1.1, (n, 1))
    b = np.tile(p.b, (n, 1))
    theta = np.tile(p.theta, (n, 1))
    x0 = np.zeros(n)
    omega = np.full(n, p.omega)
    u0 = rng.uniform(-1.0, 1.0, n)
    v0 = rng.uniform(-1.0, 1.0, n)
    xi = rng.uniform(-0.05, 0.05, n)
    return (a, b, theta, x0, omega, u0, v0, xi, h, n_steps, stride)


def _native_or_skip():
    if "native" not in _kernels.available_backends():
        pytest.skip("compiled kernel not built")
    from ecgdenoise._kernels import _mcsharry_cy

    return _mcsharry_cy


class TestBackendParity:
    def test_traces_agree(self):
        native = _native_or_skip()
        args = _batch_args()
        for got, want in zip(native.rk4_mcsharry(*args),
                             _mcsharry_np.rk4_mcsharry(*args)):
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-14)

    def test_output_shape_includes_initial_state(self):
        args = _batch_args(n=2, n_steps=400, stride=4)
        u, v, x = _mcsharry_np.rk4_mcsharry(*args)
        assert u.shape == v.shape == x.shape == (2, 101)
        np.testing.assert_array_equal(u[:, 0], args[5])

    def test_backend_selected(self):
        assert _kernels.BACKEND in ("native", "python")
        assert "python" in _kernels.available_backends()


class TestDivergence:
    @pytest.mark.parametrize("impl_name", ["native", "python"])
    def test_nonfinite_state_raises_with_step(self, impl_name):
        if impl_name == "native":
            impl = _native_or_skip()
        else:
            impl = _mcsharry_np
        args = list(_batch_args(n=2, n_steps=100, stride=1))
        args[7] = np.array([0.0, np.nan])  # poison trace 1
        with pytest.raises(IntegrationDivergedError) as err:
            impl.rk4_mcsharry(*args)
        assert err.value.step >= 1
        assert err.value.trace_index == 1
        assert "step" in str(err.value)

    @pytest.mark.parametrize("impl_name", ["native", "python"])
    def test_bad_stride_rejected(self, impl_name):
        if impl_name == "native":
            impl = _native_or_skip()
        else:
            impl = _mcsharry_np
        args = list(_batch_args(n=1, n_steps=10, stride=4))
        with pytest.raises(ValueError):
            impl.rk4_mcsharry(*args)
