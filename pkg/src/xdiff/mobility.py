"""Mobility-matrix algebra on the augmented simplex.

Index 0 is the solvent throughout.  All functions broadcast over leading axes.
"""

import numpy as np

from .core import augment_composition, check_augmented, check_composition, hessian_inverse


def mobility_matrix(model, u):
    """``B(u) = A(u) h''(u)^-1`` using the closed-form Hessian inverse."""
    u = check_composition(u)
    return np.asarray(model.diffusion(u), dtype=float) @ hessian_inverse(u)


def augment(B):
    """Border ``B`` with a solvent row and column so every row and column sums to zero."""
    B = np.asarray(B, dtype=float)
    n = B.shape[-1]
    out = np.empty(B.shape[:-2] + (n + 1, n + 1))
    out[..., 1:, 1:] = B
    out[..., 0, 1:] = -B.sum(axis=-2)
    out[..., 1:, 0] = -B.sum(axis=-1)
    out[..., 0, 0] = B.sum(axis=(-2, -1))
    return out


def augmented_mobility(model, u):
    return augment(mobility_matrix(model, u))


def factored_augmented_mobility(model, bar_u):
    """``Bbar_ij = u_i rho_ij`` from the model's reduced mobility."""
    bar_u = np.asarray(bar_u, dtype=float)
    return bar_u[..., :, None] * model.reduced_mobility(bar_u)


def g_matrix(Bbar, bar_u):
    """``G_ij = Bbar_ij / sqrt(u_i u_j)``; needs every augmented entry positive."""
    bar_u = check_augmented(bar_u, interior=True)
    r = np.sqrt(bar_u)
    return np.asarray(Bbar, dtype=float) / (r[..., :, None] * r[..., None, :])


def model_g_matrix(model, u):
    u = check_composition(u, interior=True)
    return g_matrix(augmented_mobility(model, u), augment_composition(u))


def project_L(bar_u, y):
    """Orthogonal projection onto ``L = {y : sqrt(bar_u) . y = 0}``.

    Evaluated pairwise, ``z_i = sum_j r_j (r_j y_i - r_i y_j)`` with
    ``r = sqrt(bar_u)``; this equals ``y - r (r . y)`` when the entries sum
    to one but avoids the cancellation in ``1 - u_i`` when ``u_i`` is near 1.
    """
    r = np.sqrt(np.asarray(bar_u, dtype=float))
    y = np.asarray(y, dtype=float)
    cross = r[..., None, :] * y[..., :, None] - r[..., :, None] * y[..., None, :]
    return np.sum(r[..., None, :] * cross, axis=-1)


def project_Lperp(bar_u, y):
    r = np.sqrt(np.asarray(bar_u, dtype=float))
    y = np.asarray(y, dtype=float)
    return r * np.sum(r * y, axis=-1, keepdims=True)


def projector_L(bar_u):
    """Matrix of :func:`project_L`: ``I - sqrt(u) sqrt(u)^T``."""
    r = np.sqrt(np.asarray(bar_u, dtype=float))
    return np.eye(r.shape[-1]) - r[..., :, None] * r[..., None, :]


def projector_Lperp(bar_u):
    r = np.sqrt(np.asarray(bar_u, dtype=float))
    return r[..., :, None] * r[..., None, :]


def subspace_quadratic_form(G, z, bar_u=None):
    """``z^T G z``; when ``bar_u`` is given, ``z`` is first projected into L."""
    z = np.asarray(z, dtype=float)
    if bar_u is not None:
        z = project_L(bar_u, z)
    return np.einsum("...i,...ij,...j->...", z, np.asarray(G, dtype=float), z)


def lemma_lower_bound(bar_u, z, c_A, s):
    """``c_A sum_{i>=1} u_i^(2s-1) z_i^2`` (the species part only)."""
    bar_u = np.asarray(bar_u, dtype=float)
    z = np.asarray(z, dtype=float)
    return c_A * np.sum(bar_u[..., 1:] ** (2 * s - 1) * z[..., 1:] ** 2, axis=-1)


def change_of_variables(bar_u, z):
    """Return ``(xi, eta)`` with ``xi_i = z_0/sqrt(u_0) - z_i/sqrt(u_i)`` and
    ``eta_i = -sqrt(u_i) z_i``.  For ``z`` in L, ``h''(u)^-1 xi = eta``."""
    bar_u = np.asarray(bar_u, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.sqrt(bar_u)
    xi = (z[..., :1] / r[..., :1]) - z[..., 1:] / r[..., 1:]
    eta = -r[..., 1:] * z[..., 1:]
    return xi, eta
