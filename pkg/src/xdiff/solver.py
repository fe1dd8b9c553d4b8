"""Implicit Euler in entropy variables on a uniform 1-D grid.

Each step solves for cell values ``w`` of the entropy variables

    (u(w) - u_prev) - tau/dx [G_{k+1/2} - G_{k-1/2}] + tau eps w - tau r(u(w)) = 0,

with face fluxes ``G = B_face (w_{k+1} - w_k)/dx + eps (w_{k+1} - w_k)/dx``,
``B_face`` the arithmetic mean of the mobility ``B = A h''^-1`` in the two
adjacent cells, and zero flux through both domain ends.  The ``eps`` terms
are the H^1 regularisation ``b(w, phi)``.  Compositions are recovered
cellwise from ``w``, so every state is strictly inside the simplex.

Testing the scheme with ``phi = w`` and using convexity of the entropy gives
the discrete inequality recorded by :class:`EntropyLedger`::

    E_k + tau (P_k + eps b(w_k, w_k)) <= E_{k-1} + tau int r(u_k) . w_k
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import (
    GridField,
    check_composition,
    entropy_functional,
    from_entropy_vars,
    to_entropy_vars,
)
from .exceptions import BoundaryComposition, InvalidParameter, NewtonDiverged
from .io import atomic_write_text, csv_text, dumps
from .mobility import augmented_mobility

# mixing weight towards the barycentre for initial data on the boundary
INTERIOR_PROJECTION = 1e-8
MAX_HALVINGS = 40


@dataclass(frozen=True)
class SolverConfig:
    tau: float
    T: float
    eps: float = 1e-6
    cells: int = 128
    length: float = 1.0
    newton_tol: float = 1e-12
    newton_max_iter: int = 30
    linesearch: float = 0.5
    m_reg: int = 1

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidParameter("tau must be positive")
        if not self.T >= self.tau * (1 - 1e-12):
            raise InvalidParameter("T must be at least tau")
        if not self.eps >= 0:
            raise InvalidParameter("eps must be non-negative")
        if not self.newton_tol > 0:
            raise InvalidParameter("newton_tol must be positive")
        if int(self.newton_max_iter) < 1:
            raise InvalidParameter("newton_max_iter must be at least 1")
        if not 0 < self.linesearch < 1:
            raise InvalidParameter("linesearch factor must lie in (0, 1)")
        if int(self.cells) < 2:
            raise InvalidParameter("need at least two cells")
        if not self.length > 0:
            raise InvalidParameter("length must be positive")
        if self.m_reg != 1:
            raise InvalidParameter("only first-order regularisation (m_reg = 1) is implemented")
        ratio = self.T / self.tau
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise InvalidParameter(f"T / tau = {ratio} is not an integer number of steps")

    @property
    def steps(self):
        return int(round(self.T / self.tau))

    @property
    def dx(self):
        return self.length / self.cells

    def replace(self, **changes):
        kw = self.to_dict()
        kw.update(changes)
        return SolverConfig(**kw)

    def to_dict(self):
        return {
            "tau": float(self.tau),
            "T": float(self.T),
            "eps": float(self.eps),
            "cells": int(self.cells),
            "length": float(self.length),
            "newton_tol": float(self.newton_tol),
            "newton_max_iter": int(self.newton_max_iter),
            "linesearch": float(self.linesearch),
            "m_reg": int(self.m_reg),
        }


@dataclass
class EntropyLedger:
    """Per-stamp bookkeeping; index 0 is the initial state."""

    times: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    production: list = field(default_factory=list)
    production_chain_rule: list = field(default_factory=list)
    regularization: list = field(default_factory=list)
    reaction_work: list = field(default_factory=list)
    newton_iterations: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    # mass change per step caused by the zeroth-order regularisation term
    regularization_mass_change: list = field(default_factory=list)
    tau: float = 0.0
    failed_step: object = None

    def record(self, t, entropy, production, chain, reg, reaction, iters, residual, mass, reg_mass):
        self.times.append(float(t))
        self.entropy.append(float(entropy))
        self.production.append(float(production))
        self.production_chain_rule.append(float(chain))
        self.regularization.append(float(reg))
        self.reaction_work.append(float(reaction))
        self.newton_iterations.append(int(iters))
        self.residual.append(float(residual))
        self.mass.append(np.asarray(mass, dtype=float).copy())
        self.regularization_mass_change.append(np.asarray(reg_mass, dtype=float).copy())

    def __len__(self):
        return len(self.times)

    def dissipated(self):
        """Accumulated ``tau (P + eps b - reaction work)`` after each stamp."""
        d = self.tau * (
            np.asarray(self.production) + np.asarray(self.regularization) - np.asarray(self.reaction_work)
        )
        d[0] = 0.0
        return np.cumsum(d)

    def inequality_slack(self):
        """``E_0 - (E_k + accumulated dissipation)``; non-negative up to Newton slack."""
        e = np.asarray(self.entropy)
        return e[0] - (e + self.dissipated())

    def satisfies_inequality(self, tol):
        return bool(np.all(self.inequality_slack() >= -tol))

    def mass_drift(self):
        """Per-species ``|mass_k - mass_0|`` maximised over stamps."""
        m = np.asarray(self.mass)
        return np.max(np.abs(m - m[0]), axis=0)

    def to_dict(self):
        return {
            "tau": self.tau,
            "failed_step": self.failed_step,
            "columns": {
                "t": self.times,
                "entropy": self.entropy,
                "production": self.production,
                "production_chain_rule": self.production_chain_rule,
                "regularization": self.regularization,
                "reaction_work": self.reaction_work,
                "newton_iterations": self.newton_iterations,
                "residual": self.residual,
                "mass": [m.tolist() for m in self.mass],
                "regularization_mass_change": [m.tolist() for m in self.regularization_mass_change],
            },
            "inequality_slack": self.inequality_slack().tolist() if self.times else [],
        }


@dataclass
class TrajectoryField:
    times: list
    states: list
    ledger: EntropyLedger
    model: str = ""
    config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.states[-1]

    def state_at(self, t):
        """Piecewise constant in time: the state of the first stamp ``>= t``."""
        times = np.asarray(self.times)
        k = int(np.searchsorted(times, t - 1e-12 * max(1.0, abs(t)), side="left"))
        return self.states[min(k, len(self.states) - 1)]

    def masses(self):
        return np.array([s.mass() for s in self.states])

    def csv_rows(self):
        for t, state in zip(self.times, self.states):
            u0 = state.solvent
            for k, x in enumerate(state.x):
                yield [float(t), float(x), *map(float, state.values[k]), float(u0[k])]

    def csv_header(self):
        n = self.states[0].n
        return ["t", "x", *[f"u{i}" for i in range(1, n + 1)], "u0"]

    def to_csv(self, path, comments=()):
        return atomic_write_text(path, csv_text(self.csv_header(), self.csv_rows(), comments))

    def ledger_json(self, path, header=None):
        doc = dict(header or {})
        doc.update({"model": self.model, "solver": self.config, "ledger": self.ledger.to_dict()})
        return atomic_write_text(path, dumps(doc))


class _StepSystem:
    """Residual and banded Jacobian of one implicit step."""

    def __init__(self, model, u_prev, cfg):
        self.model = model
        self.u_prev = u_prev
        self.cfg = cfg
        self.M, self.n = u_prev.shape
        self.dx = cfg.dx
        self.tau = cfg.tau
        self.eps = cfg.eps

    def fluxes(self, w, u):
        B = cell_mobility(self.model, u)
        Bf = 0.5 * (B[:-1] + B[1:])
        dw = (w[1:] - w[:-1]) / self.dx
        return np.einsum("kij,kj->ki", Bf, dw) + self.eps * dw, Bf, dw

    def residual(self, w):
        u = from_entropy_vars(w)
        G, _, _ = self.fluxes(w, u)
        div = np.zeros_like(w)
        div[:-1] += G
        div[1:] -= G
        R = (u - self.u_prev) - (self.tau / self.dx) * div + self.tau * self.eps * w
        if self.model.reaction is not None:
            R -= self.tau * np.asarray(self.model.reaction(u), dtype=float)
        return R

    def jacobian_banded(self, w, R0):
        """Forward-difference Jacobian in LAPACK banded storage.

        Unknowns are ordered cell-major (``k * n + i``); a cell couples only
        to its neighbours, so ``3n`` grouped perturbations recover every
        column and the half bandwidth is ``2n - 1``.
        """
        n, M = self.n, self.M
        N = n * M
        half = 2 * n - 1
        ab = np.zeros((2 * half + 1, N))
        flat = w.reshape(-1)
        h = np.sqrt(np.finfo(float).eps) * (1.0 + np.abs(flat))
        col_cell = np.arange(N) // n
        r0 = R0.reshape(-1)
        for colour in range(3 * n):
            cols = np.arange(colour, N, 3 * n)
            wp = flat.copy()
            wp[cols] += h[cols]
            dR = (self.residual(wp.reshape(M, n)).reshape(-1) - r0)
            for d in range(-half, half + 1):
                rows = cols + d
                ok = (rows >= 0) & (rows < N)
                ok[ok] &= np.abs(rows[ok] // n - col_cell[cols[ok]]) <= 1
                ab[half + d, cols[ok]] = dR[rows[ok]] / h[cols[ok]]
        return ab, half

    def solve(self, w0):
        cfg = self.cfg
        w = np.array(w0, dtype=float)
        R = self.residual(w)
        norm = float(np.max(np.abs(R)))
        iters = 0
        while norm > cfg.newton_tol:
            if iters >= cfg.newton_max_iter:
                raise NewtonDiverged(
                    f"Newton residual {norm:.3e} above tolerance after {iters} iterations", norm
                )
            ab, half = self.jacobian_banded(w, R)
            delta = solve_banded((half, half), ab, -R.reshape(-1)).reshape(w.shape)
            if not np.all(np.isfinite(delta)):
                raise NewtonDiverged("Newton update is not finite", norm)
            lam = 1.0
            for _ in range(MAX_HALVINGS + 1):
                trial = w + lam * delta
                R_trial = self.residual(trial)
                n_trial = float(np.max(np.abs(R_trial)))
                if n_trial < norm:
                    break
                lam *= cfg.linesearch
            else:
                raise NewtonDiverged(
                    f"line search found no decrease of residual {norm:.3e}", norm
                )
            w, R, norm = trial, R_trial, n_trial
            iters += 1
        return w, iters, norm


def cell_mobility(model, u):
    """``B = A(u) h''(u)^-1`` per cell, without re-validating ``u``."""
    hinv = -u[:, :, None] * u[:, None, :]
    idx = np.arange(u.shape[1])
    hinv[:, idx, idx] += u
    return np.asarray(model.diffusion(u), dtype=float) @ hinv


def interior_projection(field, eta=INTERIOR_PROJECTION):
    """Mix boundary-touching data towards the barycentre; interior data pass through."""
    if field.is_interior():
        return field
    n = field.n
    vals = (1.0 - eta) * field.values + eta / (n + 1)
    return GridField(vals, field.length)


def _face_production(Bf, dw, dx):
    return float(np.einsum("ki,kij,kj->", dw, Bf, dw) * dx)


def _regularization(w, dw, dx):
    return float((np.sum(dw * dw) + np.sum(w * w)) * dx)


def discrete_entropy_production(m, f):
    """Chain-rule evaluation of the entropy production of a grid field.

    Computes ``(1/s^2) sum_ij Bbar_ij / (u_i^s u_j^s) grad u_i^s grad u_j^s``
    over the augmented indices with ``grad u^s = s u^(s-1) grad u`` and
    ``grad u`` from second-order differences, integrated by the midpoint rule.
    """
    if not f.is_interior():
        raise BoundaryComposition("entropy production needs a strictly interior field")
    bar_u = f.augmented
    s = m.s
    grad = np.gradient(bar_u, f.dx, axis=0)
    grad_s = s * bar_u ** (s - 1) * grad
    Bbar = augmented_mobility(m, f.values)
    us = bar_u**s
    K = Bbar / (us[:, :, None] * us[:, None, :])
    return float(np.einsum("ki,kij,kj->", grad_s, K, grad_s) * f.dx / s**2)


def log_gradient_production(m, f):
    """The same quantity as ``sum_ij Bbar_ij grad log u_i grad log u_j``."""
    if not f.is_interior():
        raise BoundaryComposition("entropy production needs a strictly interior field")
    bar_u = f.augmented
    g = np.gradient(bar_u, f.dx, axis=0) / bar_u
    Bbar = augmented_mobility(m, f.values)
    return float(np.einsum("ki,kij,kj->", g, Bbar, g) * f.dx)


def _check_grid(init, cfg):
    if init.cells != cfg.cells:
        raise InvalidParameter(f"field has {init.cells} cells, config asks for {cfg.cells}")
    if abs(init.length - cfg.length) > 1e-12 * cfg.length:
        raise InvalidParameter("field and config disagree on the domain length")


def _step_state(model, w_prev, u_prev, cfg):
    system = _StepSystem(model, u_prev, cfg)
    w, iters, res = system.solve(w_prev)
    u = from_entropy_vars(w)
    _, Bf, dw = system.fluxes(w, u)
    info = {
        "iterations": iters,
        "residual": res,
        "production": _face_production(Bf, dw, cfg.dx),
        "regularization": _regularization(w, dw, cfg.dx),
        "reaction_work": 0.0,
        "reg_mass": -cfg.tau * cfg.eps * w.sum(axis=0) * cfg.dx,
    }
    if model.reaction is not None:
        r = np.asarray(model.reaction(u), dtype=float)
        info["reaction_work"] = float(np.sum(r * w) * cfg.dx)
    return w, u, info


def step(m, prev, cfg):
    """Advance ``prev`` by one implicit Euler step of size ``cfg.tau``."""
    _check_grid(prev, cfg)
    prev = interior_projection(prev)
    _, u, _ = _step_state(m, to_entropy_vars(prev.values), prev.values, cfg)
    return GridField(u, prev.length)


def simulate(m, init, cfg, *, progress=None):
    """Run ``cfg.steps`` implicit steps from ``init`` and fill the ledger.

    On Newton failure the exception carries the 1-based failing step index
    and the partially filled trajectory as ``exc.trajectory``.
    """
    _check_grid(init, cfg)
    state = interior_projection(init)
    w = to_entropy_vars(state.values)
    u = state.values
    ledger = EntropyLedger(tau=cfg.tau)
    ledger.record(
        0.0,
        entropy_functional(state),
        0.0,
        discrete_entropy_production(m, state),
        0.0,
        0.0,
        0,
        0.0,
        state.mass(),
        np.zeros(m.n),
    )
    traj = TrajectoryField([0.0], [state], ledger, model=m.name, config=cfg.to_dict())
    for k in range(1, cfg.steps + 1):
        try:
            w, u, info = _step_state(m, w, u, cfg)
        except NewtonDiverged as exc:
            exc.step_index = k
            ledger.failed_step = k
            exc.trajectory = traj
            raise
        state = GridField(u, cfg.length)
        t = k * cfg.tau
        ledger.record(
            t,
            entropy_functional(state),
            info["production"],
            discrete_entropy_production(m, state),
            info["regularization"] * cfg.eps,
            info["reaction_work"],
            info["iterations"],
            info["residual"],
            state.mass(),
            info["reg_mass"],
        )
        traj.times.append(t)
        traj.states.append(state)
        if progress is not None:
            progress(k, t)
    return traj


def profile_field(n, cells, length=1.0, profile="cosine", amplitude=0.1, base=None):
    """Smooth or piecewise initial data around a base composition.

    The species pattern alternates ``+1, -0.6``; ``cosine`` uses
    ``cos(pi x / L)`` (zero discrete mean, so masses equal the base),
    ``step`` uses +1 on the left half and -1 on the right.
    """
    base = np.full(n, 1.0 / (n + 1)) if base is None else np.asarray(base, dtype=float)
    if base.shape != (n,):
        raise InvalidParameter(f"base composition needs {n} entries")
    pattern = np.where(np.arange(n) % 2 == 0, 1.0, -0.6)
    x = (np.arange(cells) + 0.5) * (length / cells)
    if profile == "cosine":
        shape = np.cos(np.pi * x / length)
    elif profile == "step":
        shape = np.where(x < 0.5 * length, 1.0, -1.0)
    elif profile == "constant":
        shape = np.zeros(cells)
    else:
        raise InvalidParameter(f"unknown profile {profile!r}")
    vals = base + amplitude * shape[:, None] * pattern
    field = GridField(vals, length)
    if not field.is_interior():
        raise InvalidParameter("initial profile leaves the open simplex; lower the amplitude")
    return field


def restrict(field, cells):
    """Cell-average a field onto a coarser grid whose cell count divides it."""
    if field.cells % cells:
        raise InvalidParameter(f"{cells} cells do not divide {field.cells}")
    r = field.cells // cells
    vals = field.values.reshape(cells, r, field.n).mean(axis=1)
    return GridField(vals, field.length)


def prolong(field, cells):
    """Piecewise-constant injection onto a finer grid (restriction inverts it)."""
    if cells % field.cells:
        raise InvalidParameter(f"{field.cells} cells do not divide {cells}")
    return GridField(np.repeat(field.values, cells // field.cells, axis=0), field.length)


def l2_distance(a, b):
    """Discrete L2 norm of the difference of two fields on the same grid."""
    if a.cells != b.cells:
        raise InvalidParameter("fields live on different grids")
    return float(np.sqrt(np.sum((a.values - b.values) ** 2) * a.dx))


def self_convergence(m, init_func, cfg, levels=3, reference_tau=16, reference_cells=4):
    """Terminal L2 errors of runs ``(tau / 2^l, M 2^l)``, ``l < levels``, against a
    ``(tau / reference_tau, reference_cells M)`` reference, compared on the coarse grid.

    ``init_func(x) -> (cells, n)`` supplies the initial data on each grid.
    """
    def run(tau, cells):
        c = cfg.replace(tau=tau, cells=cells)
        init = GridField.from_function(init_func, cells, cfg.length)
        return simulate(m, init, c).final

    ref = restrict(run(cfg.tau / reference_tau, cfg.cells * reference_cells), cfg.cells)
    errors = []
    for level in range(levels):
        f = 2**level
        if f > reference_cells:
            raise InvalidParameter("refinement level exceeds the reference grid")
        errors.append(l2_distance(restrict(run(cfg.tau / f, cfg.cells * f), cfg.cells), ref))
    return errors


class CrossDiffusionSolver(BaseEstimator):
    """Estimator-style wrapper: ``fit`` runs a simulation, ``predict`` samples it.

    ``fit`` accepts a :class:`GridField` or an ``(M, n)`` array of initial
    fractions and stores the trajectory in ``trajectory_``.
    """

    def __init__(
        self,
        model="scalar",
        model_params=None,
        tau=1e-3,
        T=0.1,
        eps=1e-6,
        length=1.0,
        newton_tol=1e-12,
        newton_max_iter=30,
        linesearch=0.5,
    ):
        self.model = model
        self.model_params = model_params
        self.tau = tau
        self.T = T
        self.eps = eps
        self.length = length
        self.newton_tol = newton_tol
        self.newton_max_iter = newton_max_iter
        self.linesearch = linesearch

    def _model(self):
        from .models import ModelSpec, build_model

        if isinstance(self.model, ModelSpec):
            return self.model
        return build_model(self.model, **(self.model_params or {}))

    def fit(self, X, y=None):
        if not isinstance(X, GridField):
            X = GridField(check_composition(X, name="X"), self.length)
        model = self._model()
        if X.n != model.n:
            raise ValueError(f"model has {model.n} species, data has {X.n}")
        cfg = SolverConfig(
            tau=self.tau,
            T=self.T,
            eps=self.eps,
            cells=X.cells,
            length=X.length,
            newton_tol=self.newton_tol,
            newton_max_iter=self.newton_max_iter,
            linesearch=self.linesearch,
        )
        self.trajectory_ = simulate(model, X, cfg)
        self.n_features_in_ = X.n
        return self

    def predict(self, t):
        """Fractions at time(s) ``t``; shape ``(M, n)`` or ``(len(t), M, n)``."""
        if not hasattr(self, "trajectory_"):
            raise NotFittedError("CrossDiffusionSolver is not fitted yet")
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        end = self.trajectory_.times[-1]
        if np.any(ts < 0) or np.any(ts > end * (1 + 1e-12)):
            raise ValueError(f"times must lie in [0, {end}]")
        out = np.stack([self.trajectory_.state_at(x).values for x in ts])
        return out[0] if np.ndim(t) == 0 else out

    def score(self, X=None, y=None):
        """Negative final entropy (larger is closer to equilibrium)."""
        if not hasattr(self, "trajectory_"):
            raise NotFittedError("CrossDiffusionSolver is not fitted yet")
        return -self.trajectory_.ledger.entropy[-1]
