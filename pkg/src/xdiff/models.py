"""Catalog of volume-filling cross-diffusion models.

Each constructor returns an immutable :class:`ModelSpec`.  Evaluators are
vectorised: ``diffusion(u)`` maps ``(..., n)`` to ``(..., n, n)`` and
``reduced_mobility(bar_u)`` maps ``(..., n+1)`` to ``(..., n+1, n+1)``.

The reduced mobility ``rho_ij = Bbar_ij / u_i`` is written in factored form
so it stays finite on the simplex boundary.  For models whose product
``D = h''(u) A(u)`` is a bounded closed form (s = 1) it follows from
``Bbar_ij = u_i u_j Dbar_ij`` with :func:`_augmented_core`.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import augment_composition, solvent_fraction
from .exceptions import InvalidParameter, InvalidReaction


@dataclass(frozen=True)
class ModelSpec:
    name: str
    n: int
    s: float
    diffusion: Callable
    reduced_mobility: Optional[Callable]
    params: dict = field(default_factory=dict)
    reaction: Optional[Callable] = None
    # closed form of h''(u) A(u) where the model has one
    entropy_product: Optional[Callable] = None
    # routes the auditor to the sharper positivity lemma of the ion model
    improved_lemma: bool = False
    C_R_hint: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise InvalidParameter(f"entropy exponent s={self.s} must lie in (0, 1]")
        if self.n < 1:
            raise InvalidParameter("a model needs at least one species")

    def reaction_augmented(self, u):
        """Reaction rates ``(r_0, r_1, ..., r_n)`` with ``r_0 = -sum r_i``."""
        u = np.asarray(u, dtype=float)
        if self.reaction is None:
            return np.zeros(u.shape[:-1] + (self.n + 1,))
        r = np.asarray(self.reaction(u), dtype=float)
        return np.concatenate([-r.sum(axis=-1, keepdims=True), r], axis=-1)


def _species(u):
    u = np.asarray(u, dtype=float)
    return u, solvent_fraction(u)


def _augmented_core(D, u):
    """Dbar with ``Bbar_ij = u_i u_j Dbar_ij`` for ``B = h''^-1 D h''^-1``.

    Index 0 is the solvent.  Expanding ``(diag u - u u^T) D (diag u - u u^T)``
    gives for species i, j::

        Dbar_ij = D_ij - (Du)_i - (u^T D)_j + u^T D u

    and the solvent row/column follow from zero row and column sums.
    """
    Du = np.einsum("...ij,...j->...i", D, u)
    uD = np.einsum("...i,...ij->...j", u, D)
    uDu = np.einsum("...i,...i->...", u, Du)
    n = u.shape[-1]
    out = np.empty(u.shape[:-1] + (n + 1, n + 1))
    out[..., 1:, 1:] = D - Du[..., :, None] - uD[..., None, :] + uDu[..., None, None]
    out[..., 0, 1:] = -(uD - uDu[..., None])
    out[..., 1:, 0] = -(Du - uDu[..., None])
    out[..., 0, 0] = uDu
    return out


def _rho_from_core(core_fn):
    def rho(bar_u):
        bar_u = np.asarray(bar_u, dtype=float)
        u = bar_u[..., 1:]
        return core_fn(u) * bar_u[..., None, :]

    return rho


def scalar_model(alpha=1.0):
    """``d_t u_1 = div(u_1^alpha (1 - u_1) grad u_1)`` with ``s = (alpha+1)/2``."""
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameter(f"alpha={alpha} must lie in [0, 1]")

    def diffusion(u):
        u, u0 = _species(u)
        return (u0 * u[..., 0] ** alpha)[..., None, None]

    def reduced_mobility(bar_u):
        bar_u = np.asarray(bar_u, dtype=float)
        u0, u1 = bar_u[..., 0], bar_u[..., 1]
        top = u0 * u1 ** (alpha + 1)
        bottom = u0**2 * u1**alpha
        return np.stack([np.stack([top, -top], -1), np.stack([-bottom, bottom], -1)], -2)

    def entropy_product(u):
        u = np.asarray(u, dtype=float)
        return (u[..., 0] ** (alpha - 1))[..., None, None]

    return ModelSpec(
        name="scalar",
        n=1,
        s=(alpha + 1) / 2,
        diffusion=diffusion,
        reduced_mobility=reduced_mobility,
        params={"alpha": alpha},
        entropy_product=entropy_product,
    )


def multiphase_model(q11=1.0, q12=1.0, q22=1.0):
    """Two-phase tissue model with pressures ``q_1 = q11 u1 + q12 u1 u2`` and
    ``q_2 = q12 u1 u2 + q22 u2``."""
    q11, q12, q22 = float(q11), float(q12), float(q22)
    if min(q11, q12, q22) <= 0:
        raise InvalidParameter("multiphase coefficients must be positive")
    if not 16 * q11 * q22 > q12**2:
        raise InvalidParameter(f"need 16 q11 q22 > q12^2, got {16 * q11 * q22} <= {q12 ** 2}")

    def diffusion(u):
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        q1 = q11 * u1 + q12 * u1 * u2
        q2 = q12 * u1 * u2 + q22 * u2
        a11 = u1 * (2 * q11 + q12 * u2 * (2 - u2) - 2 * q1)
        a12 = u1 * (q12 * u1 * (1 - u1) - 2 * q2)
        a21 = u2 * (q12 * u2 * (1 - u2) - 2 * q1)
        a22 = u2 * (2 * q22 + q12 * u1 * (2 - u1) - 2 * q2)
        return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2)

    def entropy_product(u):
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        return np.stack(
            [
                np.stack([2 * q11 + 2 * q12 * u2, q12 * u1], -1),
                np.stack([q12 * u2, 2 * q22 + 2 * q12 * u1], -1),
            ],
            -2,
        )

    return ModelSpec(
        name="multiphase",
        n=2,
        s=1.0,
        diffusion=diffusion,
        reduced_mobility=_rho_from_core(lambda u: _augmented_core(entropy_product(u), u)),
        params={"q11": q11, "q12": q12, "q22": q22},
        entropy_product=entropy_product,
    )


def tumor_model(beta=1.0, theta=1.0):
    """Jackson--Byrne tumour growth model (tumour cells, extracellular matrix)."""
    beta, theta = float(beta), float(theta)
    if beta <= 0 or theta <= 0:
        raise InvalidParameter("beta and theta must be positive")
    if not theta < 4 / np.sqrt(beta):
        raise InvalidParameter(f"need theta < 4/sqrt(beta) = {4 / np.sqrt(beta)}")

    def diffusion(u):
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        a11 = 2 * u1 * (1 - u1) - beta * theta * u1 * u2**2
        a12 = -2 * beta * u1 * u2 * (1 + theta * u1)
        a21 = -2 * u1 * u2 + beta * theta * (1 - u2) * u2**2
        a22 = 2 * beta * u2 * (1 - u2) * (1 + theta * u1)
        return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2)

    def entropy_product(u):
        u = np.asarray(u, dtype=float)
        u1, u2 = u[..., 0], u[..., 1]
        zero = np.zeros_like(u1)
        return np.stack(
            [
                np.stack([2 + zero, zero], -1),
                np.stack([beta * theta * u2, 2 * beta * (1 + theta * u1)], -1),
            ],
            -2,
        )

    return ModelSpec(
        name="tumor",
        n=2,
        s=1.0,
        diffusion=diffusion,
        reduced_mobility=_rho_from_core(lambda u: _augmented_core(entropy_product(u), u)),
        params={"beta": beta, "theta": theta},
        entropy_product=entropy_product,
    )


def busenberg_travis_model(P):
    """Modified Busenberg--Travis model (delta = 1) with SPD interaction matrix P."""
    P = np.array(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidParameter("P must be a square matrix")
    if np.max(np.abs(P - P.T)) > 1e-12:
        raise InvalidParameter("P must be symmetric")
    if np.linalg.eigvalsh(P).min() <= 0:
        raise InvalidParameter("P must be positive definite")
    P.setflags(write=False)
    n = P.shape[0]

    def diffusion(u):
        u = np.asarray(u, dtype=float)
        p = np.einsum("jk,...k->...j", P, u)
        return u[..., :, None] * (P - p[..., None, :])

    def entropy_product(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(P, u.shape[:-1] + (n, n)).copy()

    return ModelSpec(
        name="busenberg_travis",
        n=n,
        s=1.0,
        diffusion=diffusion,
        reduced_mobility=_rho_from_core(lambda u: _augmented_core(entropy_product(u), u)),
        params={"P": P.tolist()},
        entropy_product=entropy_product,
    )


def ms_denominator(bar_u, d01, d02, d12):
    """``a(u) = d01 d02 u0 + d01 d12 u1 + d02 d12 u2`` of the ternary mixture."""
    bar_u = np.asarray(bar_u, dtype=float)
    return d01 * d02 * bar_u[..., 0] + d01 * d12 * bar_u[..., 1] + d02 * d12 * bar_u[..., 2]


def maxwell_stefan_2(d01=1.0, d02=2.0, d12=3.0):
    """Ternary Maxwell--Stefan mixture written for the two species u1, u2."""
    d01, d02, d12 = float(d01), float(d02), float(d12)
    if min(d01, d02, d12) <= 0:
        raise InvalidParameter("Maxwell-Stefan coefficients must be positive")
    d = np.array([[0.0, d01, d02], [d01, 0.0, d12], [d02, d12, 0.0]])

    def a_of(bar_u):
        return ms_denominator(bar_u, d01, d02, d12)

    def diffusion(u):
        bar_u = augment_composition(u)
        u1, u2 = bar_u[..., 1], bar_u[..., 2]
        a = a_of(bar_u)
        a11 = d02 + (d12 - d02) * u1
        a12 = (d12 - d01) * u1
        a21 = (d12 - d02) * u2
        a22 = d01 + (d12 - d01) * u2
        return np.stack([np.stack([a11, a12], -1), np.stack([a21, a22], -1)], -2) / a[..., None, None]

    def reduced_mobility(bar_u):
        # Bbar_ij = u_i u_j (S - d_ik - d_jk) / a for i != j, k the third index,
        # with S = d12 u0 + d02 u1 + d01 u2; diagonal from zero row sums.
        bar_u = np.asarray(bar_u, dtype=float)
        a = a_of(bar_u)
        S = d12 * bar_u[..., 0] + d02 * bar_u[..., 1] + d01 * bar_u[..., 2]
        rho = np.zeros(bar_u.shape[:-1] + (3, 3))
        for i in range(3):
            for j in range(3):
                if i != j:
                    k = 3 - i - j
                    rho[..., i, j] = bar_u[..., j] * (S - d[i, k] - d[j, k]) / a
        for i in range(3):
            rho[..., i, i] = -(rho[..., i, :].sum(axis=-1) - rho[..., i, i])
        return rho

    return ModelSpec(
        name="maxwell_stefan",
        n=2,
        s=0.5,
        diffusion=diffusion,
        reduced_mobility=reduced_mobility,
        params={"d01": d01, "d02": d02, "d12": d12},
    )


def thin_film_model(a):
    """Thin-film solar-cell model with symmetric hopping rates ``a`` of shape (n+1, n+1).

    Index 0 is the void.  Diagonal entries of ``a`` are ignored.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
        raise InvalidParameter("a must be a square table of size n+1 >= 2")
    off = ~np.eye(a.shape[0], dtype=bool)
    if np.max(np.abs(a - a.T)[off]) > 1e-12:
        raise InvalidParameter("thin-film coefficients must be symmetric")
    if np.any(a[off] <= 0):
        raise InvalidParameter("thin-film off-diagonal coefficients must be positive")
    a = np.where(off, a, 0.0)
    a.setflags(write=False)
    n = a.shape[0] - 1

    def diffusion(u):
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape[:-1] + (n, n))
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                if i == j:
                    acc = a[i, 0] + np.zeros(u.shape[:-1])
                    for k in range(1, n + 1):
                        if k != i:
                            acc = acc + (a[i, k] - a[i, 0]) * u[..., k - 1]
                    out[..., i - 1, i - 1] = acc
                else:
                    out[..., i - 1, j - 1] = -(a[i, j] - a[i, 0]) * u[..., i - 1]
        return out

    def reduced_mobility(bar_u):
        bar_u = np.asarray(bar_u, dtype=float)
        rho = -a * bar_u[..., None, :]
        diag = np.einsum("ik,...k->...i", a, bar_u)
        idx = np.arange(n + 1)
        rho[..., idx, idx] = diag
        return rho

    return ModelSpec(
        name="thin_film",
        n=n,
        s=0.5,
        diffusion=diffusion,
        reduced_mobility=reduced_mobility,
        params={"a": a.tolist()},
    )


def ion_channel_model(d=(1.0, 2.0)):
    """Ion transport with Bikerman excess potential; mobility ``B = diag(d_i u_i)``.

    The diffusion matrix is ``A_ij = d_i (delta_ij + u_i / u_0)``, which is what
    the flux ``-d_i (grad u_i - u_i grad log u_0)`` gives and what reproduces
    the diagonal mobility.  (H4) and (H5) fail in the solvent entry.
    """
    d = np.array(d, dtype=float).ravel()
    if d.size < 1 or np.any(d <= 0):
        raise InvalidParameter("ion diffusivities must be positive")
    d.setflags(write=False)
    n = d.size

    def diffusion(u):
        u, u0 = _species(u)
        return d[:, None] * (np.eye(n) + (u / u0[..., None])[..., :, None])

    def reduced_mobility(bar_u):
        bar_u = np.asarray(bar_u, dtype=float)
        u0, u = bar_u[..., 0], bar_u[..., 1:]
        rho = np.zeros(bar_u.shape[:-1] + (n + 1, n + 1))
        rho[..., 1:, 1:] = np.diag(d)
        rho[..., 1:, 0] = -d
        rho[..., 0, 1:] = -d * u / u0[..., None]
        rho[..., 0, 0] = (d * u).sum(axis=-1) / u0
        return rho

    return ModelSpec(
        name="ion_channel",
        n=n,
        s=0.5,
        diffusion=diffusion,
        reduced_mobility=reduced_mobility,
        params={"d": d.tolist()},
        improved_lemma=True,
    )


def logistic_reaction(rate=1.0):
    """``r_i(u) = rate * u_i * (u_0 - 1/2)``: growth while the void exceeds one half."""
    rate = float(rate)

    def reaction(u):
        u, u0 = _species(u)
        return rate * u * (u0 - 0.5)[..., None]

    return reaction


def decay_reaction(rate=1.0):
    """``r_i(u) = -rate * u_i``: linear removal of every species into the solvent."""
    rate = float(rate)
    if rate < 0:
        raise InvalidParameter("decay rate must be non-negative")

    def reaction(u):
        return -rate * np.asarray(u, dtype=float)

    return reaction


REACTIONS = {"logistic": logistic_reaction, "decay": decay_reaction}


def with_reaction(model, reaction, C_R_hint=None, *, check_samples=256, seed=0):
    """Attach reaction rates to ``model``.

    ``reaction`` must vanish in species i wherever ``u_i = 0``; this is
    checked on random points of the faces of the simplex.
    """
    rng = np.random.default_rng(seed)
    n = model.n
    pts = rng.dirichlet(np.ones(n + 1), size=check_samples)[:, 1:]
    for i in range(n):
        face = pts.copy()
        face[:, i] = 0.0
        r = np.asarray(reaction(face), dtype=float)
        if r.shape != face.shape:
            raise InvalidReaction(f"reaction must return shape {face.shape}, got {r.shape}")
        if np.max(np.abs(r[:, i])) > 1e-14:
            raise InvalidReaction(f"reaction for species {i + 1} does not vanish where u_{i + 1} = 0")
    if C_R_hint is not None and C_R_hint <= 0:
        raise InvalidParameter("C_R_hint must be positive")
    return replace(model, reaction=reaction, C_R_hint=C_R_hint, name=model.name + "+reaction")


# Default parameter sets; every one satisfies its constructor's preconditions.
PRESETS = {
    "scalar": (scalar_model, {"alpha": 1.0}),
    "multiphase": (multiphase_model, {"q11": 1.0, "q12": 1.0, "q22": 1.0}),
    "tumor": (tumor_model, {"beta": 1.0, "theta": 1.0}),
    "busenberg_travis": (busenberg_travis_model, {"P": (np.eye(2) + 0.5 * np.ones((2, 2))).tolist()}),
    "maxwell_stefan": (maxwell_stefan_2, {"d01": 1.0, "d02": 2.0, "d12": 3.0}),
    "thin_film": (thin_film_model, {"a": np.ones((3, 3)).tolist()}),
    "ion_channel": (ion_channel_model, {"d": [1.0, 2.0]}),
}


def build_model(name, **params):
    """Construct a catalog model by name; missing parameters take preset values."""
    try:
        ctor, defaults = PRESETS[name]
    except KeyError:
        raise InvalidParameter(f"unknown model {name!r}; choose from {sorted(PRESETS)}") from None
    kwargs = dict(defaults)
    kwargs.update(params)
    return ctor(**kwargs)


def catalog():
    """All seven preset models, keyed by name."""
    return {name: build_model(name) for name in PRESETS}
