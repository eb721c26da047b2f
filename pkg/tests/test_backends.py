"""The compiled kernels must agree with the numpy reference implementations."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivercontrol import _kernels, _pykernels
from rivercontrol import sparse_grid as sg
from rivercontrol.numerics import UniformGrid1D
from rivercontrol.reservoir import ReservoirParams, _bounds, published_chain
from rivercontrol.sediment import SedimentParams, _operator_data, default_dt

core = _kernels.backends().get("compiled")
needs_core = pytest.mark.skipif(core is None, reason="compiled extension not built")


def test_backend_listing():
    found = _kernels.backends()
    assert found["python"] is _pykernels
    assert _kernels.BACKEND in found


@needs_core
@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(7, 60))
def test_weno(seed, n):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    h = 1.0 / (n - 1)
    for a, b in zip(core.weno5_derivatives(v, h), _pykernels.weno5_derivatives(v, h)):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    xq = np.concatenate([rng.uniform(0, 1, 50), np.linspace(0, 1, n)])
    assert np.allclose(
        core.weno3_interpolate(v, 0.0, h, xq), _pykernels.weno3_interpolate(v, 0.0, h, xq), rtol=1e-12, atol=1e-12
    )


@needs_core
def test_thomas():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 40))
        sub, sup = rng.normal(size=max(n - 1, 0)), rng.normal(size=max(n - 1, 0))
        diag = 3.0 + np.abs(rng.normal(size=n))
        rhs = rng.normal(size=n)
        xa, ba = core.thomas(sub, diag, sup, rhs, 1e-14)
        xb, bb = _pykernels.thomas(sub, diag, sup, rhs, 1e-14)
        assert ba == bb == -1
        assert np.allclose(xa, xb, rtol=1e-13, atol=1e-13)
    _, bad = core.thomas(np.ones(2), np.array([1.0, 1.0, 1.0]), np.ones(2), np.ones(3), 1e-14)
    assert bad == 1 == _pykernels.thomas(np.ones(2), np.array([1.0, 1.0, 1.0]), np.ones(2), np.ones(3), 1e-14)[1]


@needs_core
@settings(max_examples=200, deadline=None)
@given(
    Q=st.floats(0.0, 5.0), a=st.floats(0.0, 2.0), p=st.floats(-10.0, 10.0),
    lo=st.floats(0.0, 1.0), width=st.floats(0.0, 5.0),
)
def test_reservoir_pointwise(Q, a, p, lo, width):
    hi = lo + width
    qa = core.reservoir_qstar(Q, 0.5, a, lo, hi, p)
    assert qa == pytest.approx(_pykernels.reservoir_qstar(Q, 0.5, a, lo, hi, p), abs=1e-14)
    assert core.reservoir_gain(Q, 0.5, a, qa, p) == pytest.approx(
        _pykernels.reservoir_gain(Q, 0.5, a, qa, p), rel=1e-14, abs=1e-14
    )


@needs_core
@pytest.mark.parametrize("order", [1, 5])
def test_reservoir_sweeps(order):
    params = ReservoirParams(chain=published_chain())
    grid = UniformGrid1D(0.0, 1.0, 41)
    Qn, lo, hi = _bounds(params, grid)
    c = params.scale
    fy = np.ascontiguousarray(params.f(grid.nodes))
    rates = np.ascontiguousarray(params.chain.rates)
    out = []
    for impl in (core, _pykernels):
        phi = np.zeros((len(Qn), grid.n_nodes))
        res = impl.reservoir_sweeps(phi, Qn, params.env_flow * c, params.weight, lo, hi, fy, rates,
                                    params.discount, grid.spacing, 1e-10, 20, order, 1e-6)
        out.append((phi, *res))
    (pa, sa, ha, qa, ta), (pb, sb, hb, qb, tb) = out
    assert sa == sb and ta == tb
    assert np.allclose(pa, pb, rtol=1e-11, atol=1e-12)
    assert np.allclose(ha, hb, rtol=1e-9, atol=1e-14)
    assert np.allclose(qa, qb, rtol=1e-11, atol=1e-12)


@needs_core
def test_sediment_kernels():
    params = SedimentParams()
    grid = UniformGrid1D(0.0, 1.0, 101)
    dt = default_dt(grid.spacing)
    foot, chi, repl = _operator_data(params, grid, dt)
    args = (grid.spacing, dt, params.intensity, params.discount)
    phi = np.random.default_rng(1).uniform(0, 5, grid.n_nodes)
    assert np.allclose(core.sediment_apply(phi, foot, chi, repl, *args),
                       _pykernels.sediment_apply(phi, foot, chi, repl, *args), rtol=1e-13, atol=1e-13)
    pa, pb = np.zeros(grid.n_nodes), np.zeros(grid.n_nodes)
    ra = core.sediment_iterate(pa, foot, chi, repl, *args, 1e-10, 2000)
    rb = _pykernels.sediment_iterate(pb, foot, chi, repl, *args, 1e-10, 2000)
    assert ra[0] == rb[0] and ra[2] == rb[2]
    assert np.array_equal(ra[1], rb[1])
    assert np.allclose(pa, pb, rtol=1e-11, atol=1e-12)


@needs_core
@pytest.mark.parametrize("dim,level", [(1, 6), (2, 7), (3, 8)])
def test_sparse_grid_kernels(dim, level):
    grid = sg.build(dim, level)
    rng = np.random.default_rng(level)
    x = np.concatenate([rng.uniform(size=(300, dim)), grid.points])
    x[:10, 0] = 0.0
    x[10:20, -1] = 1.0
    a = rng.normal(size=grid.n_points)
    n_sub = len(grid.levels)
    ea = core.sg_evaluate(x, a, grid.levels, grid.offsets, n_sub)
    eb = _pykernels.sg_evaluate(x, a, grid.levels, grid.offsets, n_sub)
    assert np.allclose(ea, eb, rtol=1e-13, atol=1e-13)
    ca = core.sg_basis_coo(x, grid.levels, grid.offsets, n_sub)
    cb = _pykernels.sg_basis_coo(x, grid.levels, grid.offsets, n_sub)
    ka = np.lexsort((ca[1], ca[0]))
    kb = np.lexsort((cb[1], cb[0]))
    assert np.array_equal(np.asarray(ca[0])[ka], np.asarray(cb[0])[kb])
    assert np.array_equal(np.asarray(ca[1])[ka], np.asarray(cb[1])[kb])
    assert np.allclose(np.asarray(ca[2])[ka], np.asarray(cb[2])[kb], rtol=1e-14, atol=1e-15)
