import numpy as np
import pytest

from xdiff import models
from xdiff.core import augment_composition, hessian
from xdiff.exceptions import InvalidParameter, InvalidReaction
from xdiff.hypotheses import check_H3, estimate_CR
from xdiff.mobility import augmented_mobility, model_g_matrix

from conftest import interior_points


def test_scalar_model_examples():
    m0 = models.scalar_model(0.0)
    np.testing.assert_allclose(m0.diffusion([0.5]), [[0.5]])
    m1 = models.scalar_model(1.0)
    np.testing.assert_allclose(hessian([0.5]) @ m1.diffusion([0.5]), [[1.0]], rtol=1e-15)
    assert m1.s == 1.0 and m0.s == 0.5
    assert models.scalar_model(0.5).s == 0.75
    for bad in (-0.1, 1.5):
        with pytest.raises(InvalidParameter):
            models.scalar_model(bad)


def test_multiphase_examples():
    m = models.multiphase_model(1.0, 1.0, 1.0)
    u = interior_points(2, 5000, seed=1)[:, 1:]
    M = m.entropy_product(u)
    S = 0.5 * (M + np.swapaxes(M, -1, -2))
    assert np.linalg.det(S).min() >= 3.75 - 1e-12
    np.testing.assert_allclose(m.entropy_product(np.zeros(2)), [[2.0, 0.0], [0.0, 2.0]])
    with pytest.raises(InvalidParameter):
        models.multiphase_model(1.0, 5.0, 1.0)


def test_multiphase_closed_form_matches_product():
    m = models.multiphase_model(0.7, 1.3, 1.1)
    u = interior_points(2, 1000, seed=2)[:, 1:]
    assert np.abs(hessian(u) @ m.diffusion(u) - m.entropy_product(u)).max() <= 1e-11


def test_tumor_examples():
    m = models.tumor_model(1.0, 1.0)
    u = np.array([0.3, 0.4])
    np.testing.assert_allclose(hessian(u) @ m.diffusion(u), [[2.0, 0.0], [0.4, 2.6]], atol=1e-12)
    pts = interior_points(2, 1000, seed=3)[:, 1:]
    assert np.abs(hessian(pts) @ m.diffusion(pts) - m.entropy_product(pts)).max() <= 1e-11
    with pytest.raises(InvalidParameter):
        models.tumor_model(1.0, 5.0)


def test_busenberg_travis_examples():
    m = models.busenberg_travis_model(np.eye(2))
    np.testing.assert_allclose(
        m.diffusion([0.25, 0.25]), [[0.1875, -0.0625], [-0.0625, 0.1875]], atol=1e-16
    )
    P = np.array([[1.5, 0.5, 0.2], [0.5, 1.5, 0.1], [0.2, 0.1, 1.0]])
    m3 = models.busenberg_travis_model(P)
    u = interior_points(3, 1000, seed=4)[:, 1:]
    assert np.abs(hessian(u) @ m3.diffusion(u) - P).max() <= 1e-12
    # the u_i prefactor kills row i on the face u_i = 0
    np.testing.assert_allclose(m.diffusion([0.0, 0.4])[0], [0.0, 0.0])
    with pytest.raises(InvalidParameter):
        models.busenberg_travis_model([[1.0, 0.5], [0.4, 1.0]])
    with pytest.raises(InvalidParameter):
        models.busenberg_travis_model([[1.0, 2.0], [2.0, 1.0]])


def test_maxwell_stefan_examples():
    for d in (0.5, 2.0):
        m = models.maxwell_stefan_2(d, d, d)
        u = interior_points(2, 200, seed=5)[:, 1:]
        np.testing.assert_allclose(m.diffusion(u), np.broadcast_to(np.eye(2) / d, (200, 2, 2)), atol=1e-14)
    assert models.ms_denominator([0.5, 0.25, 0.25], 1.0, 2.0, 3.0) == pytest.approx(3.25, abs=1e-15)
    assert models.maxwell_stefan_2().s == 0.5
    with pytest.raises(InvalidParameter):
        models.maxwell_stefan_2(1.0, 0.0, 3.0)


def test_thin_film_examples():
    m = models.thin_film_model(np.ones((3, 3)))
    bar_u = augment_composition([0.25, 0.25])
    Bbar = augmented_mobility(m, [0.25, 0.25])
    assert Bbar[1, 2] == pytest.approx(-0.0625, abs=1e-15)
    assert Bbar[1, 1] == pytest.approx(0.1875, abs=1e-15)
    assert m.s == 0.5
    pts = interior_points(2, 5000, seed=6)
    assert np.abs(model_g_matrix(m, pts[:, 1:])).max() <= 1.0 + 1e-12
    np.testing.assert_allclose(bar_u[:, None] * m.reduced_mobility(bar_u), Bbar, atol=1e-15)
    with pytest.raises(InvalidParameter):
        models.thin_film_model([[0, 1, 2], [1, 0, 1], [1, 1, 0]])
    with pytest.raises(InvalidParameter):
        models.thin_film_model([[0, 1, -1], [1, 0, 1], [-1, 1, 0]])


def test_ion_channel_examples():
    m = models.ion_channel_model([2.0, 3.0])
    Bbar = augmented_mobility(m, [0.2, 0.3])
    assert Bbar[0, 0] == pytest.approx(1.3, abs=1e-15)
    np.testing.assert_allclose(Bbar[0, 1:], [-0.4, -0.9], atol=1e-15)
    np.testing.assert_allclose(Bbar[1:, 0], [-0.4, -0.9], atol=1e-15)
    assert m.improved_lemma and m.s == 0.5
    with pytest.raises(InvalidParameter):
        models.ion_channel_model([1.0, -2.0])


def test_reduced_mobility_consistency_all_models(catalog):
    for name, m in catalog.items():
        bar_u = interior_points(m.n, 10_000, seed=10, margin=1e-6)
        direct = augmented_mobility(m, bar_u[:, 1:])
        factored = bar_u[:, :, None] * m.reduced_mobility(bar_u)
        # the direct product cancels O(1) terms when u_0 is tiny
        scale = np.maximum(1.0, np.abs(factored).max(axis=(1, 2)))
        assert (np.abs(direct - factored).max(axis=(1, 2)) / scale).max() <= 1e-12, name


def test_reduced_mobility_finite_on_boundary(catalog):
    for name, m in catalog.items():
        if name == "ion_channel":
            continue  # rho_00 = sum d_i u_i / u_0 is genuinely singular
        rng = np.random.default_rng(0)
        bar_u = rng.dirichlet(np.ones(m.n + 1), size=200)
        bar_u[:, 1] = 0.0
        bar_u /= bar_u.sum(axis=1, keepdims=True)
        assert np.all(np.isfinite(m.reduced_mobility(bar_u))), name


def test_entropy_product_closed_forms(catalog):
    for name, m in catalog.items():
        if m.entropy_product is None:
            continue
        u = interior_points(m.n, 1000, seed=12)[:, 1:]
        assert np.abs(hessian(u) @ m.diffusion(u) - m.entropy_product(u)).max() <= 1e-11, name


def test_stated_s_gives_positive_h3_infimum(catalog):
    for name, m in catalog.items():
        rep = check_H3(m, samples=2000, seed=0, polish=False)
        assert rep.statistic > 0, name


def test_zero_reaction_has_zero_constant():
    m = models.with_reaction(models.scalar_model(1.0), lambda u: np.zeros_like(np.asarray(u, dtype=float)))
    rep = estimate_CR(m, samples=2000)
    assert rep.statistic == 0.0 and rep.passed


def test_reaction_must_vanish_on_faces():
    with pytest.raises(InvalidReaction):
        models.with_reaction(models.scalar_model(1.0), lambda u: np.ones_like(np.asarray(u, dtype=float)))
    with pytest.raises(InvalidReaction):
        models.with_reaction(models.scalar_model(1.0), lambda u: np.ones(3))
    with pytest.raises(InvalidParameter):
        models.with_reaction(models.scalar_model(1.0), models.logistic_reaction(), C_R_hint=-1.0)


def test_reaction_augmented_closes_the_sum():
    m = models.with_reaction(models.maxwell_stefan_2(), models.logistic_reaction(1.0))
    u = interior_points(2, 100, seed=1)[:, 1:]
    r = m.reaction_augmented(u)
    np.testing.assert_allclose(r.sum(axis=1), 0.0, atol=1e-16)
    np.testing.assert_allclose(r[:, 1:], u * (1 - u.sum(axis=1, keepdims=True) - 0.5))
    assert m.name.endswith("+reaction")


def test_identical_states_give_zero_condition_sides():
    from xdiff.hypotheses import _reaction_ratio

    m = models.with_reaction(models.scalar_model(1.0), models.logistic_reaction())
    bar = interior_points(1, 10, seed=2)
    lhs, rhs = _reaction_ratio(m, bar, bar)
    np.testing.assert_array_equal(lhs, 0.0)
    np.testing.assert_array_equal(rhs, 0.0)


def test_build_model_and_catalog():
    assert set(models.catalog()) == {
        "scalar", "multiphase", "tumor", "busenberg_travis", "maxwell_stefan", "thin_film", "ion_channel"
    }
    assert models.build_model("scalar", alpha=0.5).params["alpha"] == 0.5
    with pytest.raises(InvalidParameter):
        models.build_model("nope")
    with pytest.raises(InvalidParameter):
        models.ModelSpec("x", 1, 1.5, None, None)
