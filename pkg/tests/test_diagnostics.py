import json

import numpy as np
import pytest

from xdiff import models
from xdiff.core import GridField
from xdiff.diagnostics import (
    bump,
    check_refinement,
    decomposition_observables,
    entropy_integrand,
    envelope_violations,
    gronwall_fit,
    hl2_lower_bound,
    hl2_pointwise,
    hl2_sharp_bound,
    perturb,
    relative_entropy,
    twin_experiment,
)
from xdiff.exceptions import BoundaryReference, ConfigMismatch, DegenerateSeries, InvalidParameter
from xdiff.io import read_csv
from xdiff.solver import SolverConfig, profile_field, prolong, simulate

# mpmath, 30 digits: 0.6 log(1.2) + 0.4 log(0.8)
H_06_05 = 0.020135513550688873


def const(value, cells=4):
    return GridField.constant(np.atleast_1d(value), cells)


def test_relative_entropy_constant_fields():
    u, v = const(0.6), const(0.5)
    assert relative_entropy(u, v) == pytest.approx(H_06_05, abs=1e-15)
    assert hl2_lower_bound(u, v) == pytest.approx(0.01, abs=1e-15)
    assert relative_entropy(v, v) == 0.0


def test_relative_entropy_allows_boundary_u_but_not_v():
    assert relative_entropy(const(1.0), const(0.5)) == pytest.approx(np.log(2), abs=1e-15)
    with pytest.raises(BoundaryReference):
        relative_entropy(const(0.5), const(0.0))
    with pytest.raises(InvalidParameter):
        relative_entropy(const(0.5, 4), const(0.5, 8))


def test_bound_chain_on_fields():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.dirichlet(np.ones(3), size=12)
        b = rng.dirichlet(np.ones(3), size=12)
        u, v = GridField(a[:, 1:]), GridField(b[:, 1:])
        H = relative_entropy(u, v)
        assert H >= hl2_sharp_bound(u, v) - 1e-15
        assert hl2_sharp_bound(u, v) >= hl2_lower_bound(u, v) - 1e-15


def test_pointwise_bounds():
    y = np.linspace(0, 1, 101)
    z = np.full_like(y, 0.3)
    sharp, plain = hl2_pointwise(y, z)
    f = entropy_integrand(y, z)
    assert np.all(f >= sharp - 1e-15) and np.all(sharp >= plain - 1e-15)
    assert entropy_integrand(0.0, 0.3) == pytest.approx(0.3)


def test_gronwall_fit_exact_exponential():
    t = np.linspace(0, 1, 11)
    series = list(zip(t, 2.0 * np.exp(0.7 * t)))
    C = gronwall_fit(series)
    assert C == pytest.approx(0.7, abs=1e-12)
    assert envelope_violations(series, C) == 0
    # fault injection: a smaller constant must register violations
    assert envelope_violations(series, 0.5) == 10


def test_gronwall_fit_decaying_series_is_negative():
    t = np.linspace(0, 1, 5)
    assert gronwall_fit(list(zip(t, np.exp(-t)))) == pytest.approx(-1.0)


@pytest.mark.parametrize(
    "series",
    [[], [(0.0, 0.0), (1.0, 1.0)], [(0.0, 1.0)], [(0.5, 1.0), (1.0, 1.0)]],
)
def test_gronwall_fit_degenerate(series):
    with pytest.raises(DegenerateSeries):
        gronwall_fit(series)


def test_bump_has_zero_mean_and_perturb_keeps_masses():
    x = (np.arange(64) + 0.5) / 64
    assert abs(bump(x, 1.0).mean()) <= 1e-16
    f = profile_field(2, 64)
    g, clipped = perturb(f, 1e-2)
    assert not clipped
    np.testing.assert_allclose(g.mass(), f.mass(), atol=1e-16)
    np.testing.assert_array_equal(g.values[:, 1], f.values[:, 1])
    assert perturb(f, 0.0)[0] is f
    with pytest.raises(InvalidParameter):
        perturb(f, -1.0)


def test_perturb_clips_at_margin():
    f = GridField.constant([0.01], 16)
    g, clipped = perturb(f, 0.5)
    assert clipped and g.values.min() >= 1e-6 and g.solvent.min() >= 1e-6 - 1e-16


def test_decomposition_signs(catalog):
    for name, m in catalog.items():
        u = profile_field(m.n, 32, amplitude=0.1)
        v = profile_field(m.n, 32, amplitude=0.05)
        I1, I2 = decomposition_observables(m, u, v)
        assert I1 <= 1e-14, name
        # equal fields: both vanish
        assert decomposition_observables(m, v, v) == (0.0, 0.0), name


def test_check_refinement():
    cfg = SolverConfig(tau=0.01, T=0.1, cells=16)
    assert check_refinement(cfg, cfg) == (1, 1)
    assert check_refinement(cfg, cfg.replace(tau=0.0025, cells=32)) == (4, 2)
    for bad in (
        cfg.replace(tau=0.005, cells=32),
        cfg.replace(tau=0.0025, cells=24),
        cfg.replace(tau=0.0025, cells=16),
        cfg.replace(tau=0.0025, cells=32, T=0.2),
    ):
        with pytest.raises(ConfigMismatch):
            check_refinement(cfg, bad)


def _twin(m, delta, identical=True, cells=16, T=0.05, tau=0.005, **kw):
    cfg = SolverConfig(tau=tau, T=T, cells=cells)
    fine = cfg if identical else cfg.replace(tau=tau / 4, cells=cells * 2)
    return twin_experiment(m, profile_field(m.n, cells), delta, cfg, fine, **kw)


def test_twin_zero_perturbation_identical_config(catalog):
    for name, m in catalog.items():
        res = _twin(m, 0.0)
        assert max(res.H) == 0.0, name
        assert res.fitted_C is None
        assert res.to_dict()["fitted_C"] == "not-applicable"


def test_twin_initial_entropy_is_quadratic_in_delta(catalog):
    m = catalog["tumor"]
    a = _twin(m, 1e-2, identical=False, T=0.01)
    b = _twin(m, 1e-3, identical=False, T=0.01)
    assert a.H0 / b.H0 == pytest.approx(100.0, rel=1e-3)


def test_twin_series_invariants(catalog):
    for name, m in catalog.items():
        res = _twin(m, 1e-2)
        H, low = np.array(res.H), np.array(res.lower_bound)
        assert np.all(H >= np.array(res.lower_bound_sharp) - 1e-16), name
        assert np.all(np.array(res.lower_bound_sharp) >= low - 1e-16), name
        assert np.all(low >= 0)
        assert res.envelope_violations == 0
        assert all(i <= 1e-14 for i in res.I1)
        assert res.q_min > 0 and not res.clipped


def test_growth_constant_does_not_grow_as_delta_shrinks(catalog):
    m = catalog["maxwell_stefan"]
    runs = [_twin(m, d) for d in (1e-1, 1e-2, 1e-3)]
    Cs = np.array([r.fitted_C for r in runs])
    # one constant serves every delta
    single = Cs.max()
    assert all(envelope_violations(r.H_series, single) == 0 for r in runs)
    # no blow-up: C* settles to its small-delta limit
    assert np.ptp(Cs) <= 1e-2 * np.abs(Cs).max()
    assert abs(Cs[2] - Cs[1]) < abs(Cs[1] - Cs[0])


def test_twin_reuses_reference_and_validates_it(catalog):
    m = catalog["scalar"]
    cfg = SolverConfig(tau=0.005, T=0.02, cells=8)
    fine = cfg.replace(tau=0.00125, cells=16)
    init = profile_field(1, 8)
    ref = simulate(m, prolong(init, 16), fine)
    a = twin_experiment(m, init, 1e-2, cfg, fine, reference=ref)
    b = twin_experiment(m, init, 1e-2, cfg, fine)
    assert a.H == b.H
    with pytest.raises(ConfigMismatch):
        twin_experiment(m, init, 1e-2, cfg, fine, reference=simulate(m, init, cfg))
    with pytest.raises(InvalidParameter):
        twin_experiment(m, profile_field(1, 16), 1e-2, cfg, fine)


def test_twin_exports(tmp_path, catalog):
    res = _twin(catalog["scalar"], 1e-2, T=0.01)
    res.to_json(tmp_path / "twin.json", {"seed": 3})
    doc = json.loads((tmp_path / "twin.json").read_text())
    assert doc["seed"] == 3 and doc["series"]["H"] == res.H
    res.to_csv(tmp_path / "twin.csv", ["hello"])
    header, rows = read_csv(tmp_path / "twin.csv")
    assert header == ["t", "H", "lower_bound", "I1", "I2"]
    assert [float(r[1]) for r in rows] == res.H
