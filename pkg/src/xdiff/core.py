"""Volume fractions on the Gibbs simplex and the Boltzmann entropy calculus.

Compositions are plain arrays whose last axis holds the ``n`` species
fractions ``u_1..u_n``; the solvent fraction ``u_0 = 1 - sum(u)`` is derived.
Augmented arrays carry ``n + 1`` entries with the solvent at index 0.
Every function broadcasts over leading axes.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import BoundaryComposition

# Slack for the simplex membership check; fractions come from float arithmetic.
SIMPLEX_TOL = 1e-12


def check_composition(u, *, interior=False, name="u"):
    """Validate an array of compositions and return it as a float array.

    With ``interior=True`` every species fraction and the solvent must be
    strictly positive, otherwise :class:`BoundaryComposition` is raised.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        raise ValueError(f"{name} must have at least one axis (species)")
    if u.shape[-1] < 1:
        raise ValueError(f"{name} must hold at least one species")
    if not np.all(np.isfinite(u)):
        raise ValueError(f"{name} contains non-finite values")
    u0 = solvent_fraction(u)
    if np.any(u < -SIMPLEX_TOL) or np.any(u > 1 + SIMPLEX_TOL) or np.any(u0 < -SIMPLEX_TOL):
        raise ValueError(f"{name} lies outside the closed Gibbs simplex")
    if interior and (np.any(u <= 0) or np.any(u0 <= 0)):
        raise BoundaryComposition(f"{name} touches the simplex boundary")
    return u


def check_augmented(bar_u, *, interior=False, name="bar_u"):
    bar_u = np.asarray(bar_u, dtype=float)
    if bar_u.ndim == 0 or bar_u.shape[-1] < 2:
        raise ValueError(f"{name} needs a solvent entry and at least one species")
    if np.any(bar_u < -SIMPLEX_TOL) or np.any(np.abs(bar_u.sum(axis=-1) - 1) > 1e-10):
        raise ValueError(f"{name} is not a point of the closed augmented simplex")
    if interior and np.any(bar_u <= 0):
        raise BoundaryComposition(f"{name} has a vanishing entry")
    return bar_u


def solvent_fraction(u):
    u = np.asarray(u, dtype=float)
    return 1.0 - u.sum(axis=-1)


def augment_composition(u):
    """Return ``(u_0, u_1, ..., u_n)``."""
    u = np.asarray(u, dtype=float)
    return np.concatenate([solvent_fraction(u)[..., None], u], axis=-1)


def species_part(bar_u):
    return np.asarray(bar_u, dtype=float)[..., 1:]


def entropy_density(u):
    """Boltzmann entropy ``sum_{i=0}^n u_i (log u_i - 1)`` with ``0 log 0 = 0``."""
    bar_u = augment_composition(check_composition(u))
    bar_u = np.clip(bar_u, 0.0, None)
    return np.sum(xlogy(bar_u, bar_u) - bar_u, axis=-1)


def to_entropy_vars(u):
    """Entropy variables ``w_i = log(u_i / u_0)``; undefined on the boundary."""
    u = check_composition(u, interior=True)
    return np.log(u) - np.log(solvent_fraction(u))[..., None]


def from_entropy_vars(w):
    """Invert :func:`to_entropy_vars`.

    Uses a max-shift so that large ``|w|`` neither overflows nor rounds a
    fraction to exactly 0 or 1 before the solvent is formed.
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("entropy variables must be finite")
    shift = np.maximum(0.0, w.max(axis=-1, keepdims=True))
    e = np.exp(w - shift)
    e0 = np.exp(-shift)
    denom = e0 + e.sum(axis=-1, keepdims=True)
    u = e / denom
    # keep strict interiority when exp underflows to zero
    u = np.maximum(u, np.finfo(float).tiny)
    # the true solvent fraction can lie below the spacing of doubles near 1
    full = u.sum(axis=-1, keepdims=True) >= 1.0
    if np.any(full):
        u = np.where(full, u * (1.0 - 4.0 * u.shape[-1] * np.finfo(float).eps), u)
    return u


def hessian_inverse(u):
    """Entries ``delta_ij u_i - u_i u_j``; valid on the closed simplex."""
    u = check_composition(u)
    return np.einsum("...i,ij->...ij", u, np.eye(u.shape[-1])) - u[..., :, None] * u[..., None, :]


def hessian(u):
    """Entropy Hessian ``delta_ij / u_i + 1 / u_0``."""
    u = check_composition(u, interior=True)
    n = u.shape[-1]
    u0 = solvent_fraction(u)
    return np.einsum("...i,ij->...ij", 1.0 / u, np.eye(n)) + (1.0 / u0)[..., None, None]


@dataclass(frozen=True)
class GridField:
    """Cell values of a composition on a uniform 1-D grid.

    ``values`` has shape ``(M, n)``; cell ``k`` is centred at ``(k + 1/2) dx``.
    """

    values: np.ndarray
    length: float = 1.0

    def __post_init__(self):
        values = check_composition(self.values, name="GridField.values")
        if values.ndim != 2:
            raise ValueError("GridField.values must have shape (M, n)")
        if values.shape[0] < 2:
            raise ValueError("a grid needs at least two cells")
        if not self.length > 0:
            raise ValueError("domain length must be positive")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "length", float(self.length))

    @property
    def cells(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]

    @property
    def dx(self):
        return self.length / self.cells

    @property
    def x(self):
        return (np.arange(self.cells) + 0.5) * self.dx

    @property
    def solvent(self):
        return solvent_fraction(self.values)

    @property
    def augmented(self):
        return augment_composition(self.values)

    def mass(self):
        """Per-species discrete mass ``sum_k u_i dx``."""
        return self.values.sum(axis=0) * self.dx

    def is_interior(self):
        return bool(np.all(self.values > 0) and np.all(self.solvent > 0))

    @classmethod
    def from_function(cls, func, cells, length=1.0):
        """Sample ``func(x) -> (M, n)`` at cell centres."""
        x = (np.arange(cells) + 0.5) * (length / cells)
        return cls(np.asarray(func(x), dtype=float).reshape(cells, -1), length)

    @classmethod
    def constant(cls, u, cells, length=1.0):
        u = np.asarray(u, dtype=float)
        return cls(np.tile(u, (cells, 1)), length)


def entropy_functional(field):
    """Midpoint-rule integral of :func:`entropy_density` over the grid."""
    return float(entropy_density(field.values).sum() * field.dx)


class EntropyVariableTransformer(TransformerMixin, BaseEstimator):
    """Map compositions to entropy variables and back.

    Stateless apart from remembering ``n_features_in_``; ``fit`` only checks
    the input so the transformer can sit inside an sklearn pipeline.
    """

    def fit(self, X, y=None):
        X = check_composition(np.atleast_2d(X), interior=True, name="X")
        self.n_features_in_ = X.shape[-1]
        return self

    def transform(self, X):
        X = np.atleast_2d(X)
        self._check_width(X)
        return to_entropy_vars(X)

    def inverse_transform(self, W):
        W = np.atleast_2d(W)
        self._check_width(W)
        return from_entropy_vars(W)

    def _check_width(self, X):
        if not hasattr(self, "n_features_in_"):
            from sklearn.exceptions import NotFittedError

            raise NotFittedError("EntropyVariableTransformer is not fitted yet")
        if X.shape[-1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} species, got {X.shape[-1]}")
