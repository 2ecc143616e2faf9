import numpy as np
import pytest

from rotorengine import kernels
from rotorengine.kernels import _sde_py


def _random_state(batch, steps, seed=3, backaction=False):
    rng = np.random.Generator(np.random.Philox(key=seed))
    dt = 1e-4
    phi = rng.normal(np.pi / 2, 0.3, batch)
    lz = rng.normal(0.0, 2.0, batch)
    n = rng.exponential(1.0, batch)
    dw = rng.standard_normal((batch, steps)) * np.sqrt(dt)
    du = rng.standard_normal((batch, steps)) * np.sqrt(dt) if backaction \
        else None
    return phi, lz, n, dw, du, dt


@pytest.mark.parametrize("milstein", [False, True])
@pytest.mark.parametrize("backaction", [False, True])
def test_backends_agree(milstein, backaction):
    if kernels._sde_cy is None:
        pytest.skip("compiled kernel not built")
    phi, lz, n, dw, du, dt = _random_state(64, 500, backaction=backaction)
    a = (phi.copy(), lz.copy(), n.copy())
    b = (phi.copy(), lz.copy(), n.copy())
    _sde_py.advance_block(*a, dw, du, dt, 1.0, 100.0, 1.0, 0.0,
                          milstein, backaction)
    kernels._sde_cy.advance_block(*b, dw, du, dt, 1.0, 100.0, 1.0, 0.0,
                                  milstein, backaction)
    # libm vs numpy cos can differ by 1 ulp, so tolerance not bitwise
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-10)


def test_kernel_deterministic():
    phi, lz, n, dw, du, dt = _random_state(16, 200)
    a = (phi.copy(), lz.copy(), n.copy())
    b = (phi.copy(), lz.copy(), n.copy())
    for state in (a, b):
        kernels.advance_block(*state, dw, du, dt, 1.0, 100.0, 1.0, 0.0,
                              True, False)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_intensity_stays_nonnegative():
    phi, lz, n, dw, du, dt = _random_state(64, 2000, seed=11)
    kernels.advance_block(phi, lz, n, dw, du, dt, 1.0, 100.0, 1.0, 0.0,
                          True, False)
    assert (n >= 0.0).all()
    assert np.isfinite(phi).all() and np.isfinite(lz).all()


def test_env_var_selects_python_backend(monkeypatch):
    import importlib
    import rotorengine.kernels as km
    monkeypatch.setenv("ROTORENGINE_PURE_PYTHON", "1")
    try:
        km = importlib.reload(km)
        assert km.BACKEND == "python"
    finally:
        monkeypatch.delenv("ROTORENGINE_PURE_PYTHON")
        importlib.reload(km)
