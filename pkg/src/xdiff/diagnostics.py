"""Relative entropy between grid fields and the twin-run stability experiment.

A twin experiment runs the scheme twice: once from perturbed initial data
(the coarse run ``u``) and once, unperturbed, on a refined configuration
that stands in for a strong solution ``v``.  The relative entropy
``H(u|v)`` is tracked at the shared time stamps together with its L2 lower
bound and the two observables ``I1``, ``I2`` whose sum drives its growth.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import xlogy

from .core import GridField
from .exceptions import (
    BoundaryComposition,
    BoundaryReference,
    ConfigMismatch,
    DegenerateSeries,
    InvalidParameter,
)
from .io import atomic_write_text, csv_text, dumps
from .mobility import augmented_mobility
from .solver import l2_distance, prolong, restrict, simulate

# below this H(0) the Gronwall fit is undefined
DEGENERATE_H0 = 1e-14
ENVELOPE_RTOL = 1e-12
PERTURBATION_MARGIN = 1e-6


def _same_grid(u, v):
    if u.cells != v.cells or u.n != v.n or abs(u.length - v.length) > 1e-12 * u.length:
        raise InvalidParameter("fields live on different grids")


def entropy_integrand(y, z):
    """``y log(y/z) - y + z`` with ``0 log 0 = 0``; ``z`` must be positive."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return xlogy(y, y) - xlogy(y, z) - y + z


def hl2_pointwise(y, z):
    """The two lower bounds ``(|y-z|^2 / (2 max(y,z)), |y-z|^2 / 2)`` of
    :func:`entropy_integrand` for ``y, z`` in ``(0, 1]``."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    d2 = (y - z) ** 2
    return 0.5 * d2 / np.maximum(y, z), 0.5 * d2


def relative_entropy(u, v):
    """``sum_{i=0}^n int u_i log(u_i/v_i) - u_i + v_i`` including the solvent."""
    _same_grid(u, v)
    if not v.is_interior():
        raise BoundaryReference("the reference field touches the simplex boundary")
    a = np.clip(u.augmented, 0.0, None)
    return float(entropy_integrand(a, v.augmented).sum() * u.dx)


def hl2_lower_bound(u, v):
    """``1/2 sum_{i=0}^n int |u_i - v_i|^2``."""
    _same_grid(u, v)
    return float(0.5 * np.sum((u.augmented - v.augmented) ** 2) * u.dx)


def hl2_sharp_bound(u, v):
    """``1/2 sum_{i=0}^n int |u_i - v_i|^2 / max(u_i, v_i)``; lies between the two."""
    _same_grid(u, v)
    a, b = u.augmented, v.augmented
    sharp, _ = hl2_pointwise(a, np.where(np.maximum(a, b) > 0, b, 1.0))
    return float(sharp.sum() * u.dx)


def _log_gradients(f):
    bar = f.augmented
    return np.gradient(bar, f.dx, axis=0) / bar


def _reduced(m, bar_u):
    if m.reduced_mobility is not None:
        return np.asarray(m.reduced_mobility(bar_u), dtype=float)
    return augmented_mobility(m, bar_u[:, 1:]) / bar_u[:, :, None]


def decomposition_observables(m, u, v):
    """Instantaneous integrands of the two terms bounding ``dH(u|v)/dt``.

    ``I1 = -sum_ij int Bbar_ij(u) grad log(u_j/v_j) grad log(u_i/v_i)`` and
    ``I2 = -sum_ij int (rho_ij(u) - rho_ij(v)) u_i grad log v_j grad log(u_i/v_i)``
    with the reduced mobility ``rho_ij = Bbar_ij / u_i``.
    """
    _same_grid(u, v)
    if not (u.is_interior() and v.is_interior()):
        raise BoundaryComposition("decomposition needs strictly interior fields")
    bu, bv = u.augmented, v.augmented
    gu, gv = _log_gradients(u), _log_gradients(v)
    gdiff = gu - gv
    Bu = augmented_mobility(m, u.values)
    I1 = -np.einsum("ki,kij,kj->", gdiff, Bu, gdiff) * u.dx
    drho = _reduced(m, bu) - _reduced(m, bv)
    I2 = -np.einsum("kij,ki,kj,ki->", drho, bu, gv, gdiff) * u.dx
    return float(I1), float(I2)


def gronwall_fit(series):
    """Smallest ``C`` with ``H(t) <= H(0) exp(C t)`` at every stamp.

    ``series`` is a sequence of ``(t, H)`` pairs starting at ``t = 0``.
    """
    data = np.asarray(series, dtype=float).reshape(-1, 2)
    if data.shape[0] == 0:
        raise DegenerateSeries("empty series")
    t, H = data[:, 0], data[:, 1]
    if t[0] != 0.0:
        raise DegenerateSeries("series must start at t = 0")
    H0 = H[0]
    if not H0 > DEGENERATE_H0:
        raise DegenerateSeries(f"H(0) = {H0:.3e} is too small for a growth fit")
    later = t > 0
    if not np.any(later):
        raise DegenerateSeries("series needs a stamp with t > 0")
    with np.errstate(divide="ignore"):
        slopes = np.log(np.maximum(H[later], 0.0) / H0) / t[later]
    return float(np.max(slopes))


def envelope_violations(series, C):
    data = np.asarray(series, dtype=float).reshape(-1, 2)
    t, H = data[:, 0], data[:, 1]
    env = H[0] * np.exp(C * t)
    return int(np.sum(H > env * (1 + ENVELOPE_RTOL) + 1e-300))


def bump(x, length, centre=0.5, width=0.5):
    """Zero-mean raised cosine: a bump on ``|x - c L| < w L / 2`` minus its cell mean."""
    c, w = centre * length, width * length
    r = np.abs(x - c) / (0.5 * w)
    b = np.where(r < 1, 0.5 * (1 + np.cos(np.pi * np.minimum(r, 1))), 0.0)
    return b - b.mean()


def perturb(field, delta, species=0, margin=PERTURBATION_MARGIN):
    """Add ``delta * bump`` to one species; the solvent absorbs the change.

    The bump has zero discrete mean, so every species mass is unchanged
    unless the margin clip activates.  Returns ``(field, clipped)``.
    """
    if delta < 0:
        raise InvalidParameter("perturbation size must be non-negative")
    if delta == 0:
        return field, False
    vals = np.array(field.values)
    add = delta * bump(field.x, field.length)
    target = vals[:, species] + add
    solvent = field.solvent - add
    lo = margin
    hi = vals[:, species] + field.solvent - margin
    clipped = bool(np.any(target < lo) or np.any(solvent < margin))
    vals[:, species] = np.clip(target, lo, hi)
    return GridField(vals, field.length), clipped


@dataclass
class TwinExperimentResult:
    delta: float
    times: list
    H: list
    lower_bound: list
    lower_bound_sharp: list
    I1: list
    I2: list
    fitted_C: Optional[float]
    envelope_violations: int
    q_min: float
    max_grad_log_v: float
    model: str = ""
    config: dict = field(default_factory=dict)
    fine_config: dict = field(default_factory=dict)
    clipped: bool = False
    # entropy change of the perturbed run over the whole horizon
    entropy_drift: float = 0.0
    terminal_error: float = 0.0

    @property
    def H_series(self):
        return list(zip(self.times, self.H))

    @property
    def lower_bound_series(self):
        return list(zip(self.times, self.lower_bound))

    @property
    def H0(self):
        return self.H[0]

    def to_dict(self):
        return {
            "model": self.model,
            "delta": self.delta,
            "fitted_C": "not-applicable" if self.fitted_C is None else self.fitted_C,
            "envelope_violations": self.envelope_violations,
            "q_min": self.q_min,
            "max_grad_log_v": self.max_grad_log_v,
            "clipped": self.clipped,
            "entropy_drift": self.entropy_drift,
            "terminal_error": self.terminal_error,
            "config": self.config,
            "fine_config": self.fine_config,
            "series": {
                "t": self.times,
                "H": self.H,
                "lower_bound": self.lower_bound,
                "lower_bound_sharp": self.lower_bound_sharp,
                "I1": self.I1,
                "I2": self.I2,
            },
        }

    def to_json(self, path, header=None):
        doc = dict(header or {})
        doc.update(self.to_dict())
        return atomic_write_text(path, dumps(doc))

    def to_csv(self, path, comments=()):
        rows = zip(self.times, self.H, self.lower_bound, self.I1, self.I2)
        return atomic_write_text(path, csv_text(["t", "H", "lower_bound", "I1", "I2"], rows, comments))


def check_refinement(cfg, cfg_fine):
    """``cfg_fine`` must equal ``cfg`` or refine it by >= 4x in tau and >= 2x in cells,
    with integer ratios and the same final time and domain."""
    if cfg_fine == cfg:
        return 1, 1
    if abs(cfg_fine.T - cfg.T) > 1e-12 * cfg.T or abs(cfg_fine.length - cfg.length) > 1e-12 * cfg.length:
        raise ConfigMismatch("fine run must share T and the domain length")
    rt = cfg.tau / cfg_fine.tau
    if rt < 4 - 1e-9 or abs(rt - round(rt)) > 1e-9 * rt:
        raise ConfigMismatch(f"fine tau must divide tau by an integer >= 4, got ratio {rt}")
    if cfg_fine.cells < 2 * cfg.cells or cfg_fine.cells % cfg.cells:
        raise ConfigMismatch("fine grid must be an integer multiple >= 2 of the coarse grid")
    return int(round(rt)), cfg_fine.cells // cfg.cells


def twin_experiment(m, init, delta, cfg, cfg_fine, *, reference=None):
    """Perturbed coarse run against an unperturbed reference run.

    ``reference`` may pass a trajectory already computed with ``cfg_fine``
    from ``init`` (it is only reused, never modified).
    """
    if delta < 0:
        raise InvalidParameter("perturbation size must be non-negative")
    rt, _ = check_refinement(cfg, cfg_fine)
    if init.cells != cfg.cells:
        raise InvalidParameter("initial field does not match the coarse grid")
    start, clipped = perturb(init, delta)
    coarse = simulate(m, start, cfg)
    if reference is None:
        reference = simulate(m, prolong(init, cfg_fine.cells), cfg_fine)
    elif len(reference.states) != cfg_fine.steps + 1 or reference.states[0].cells != cfg_fine.cells:
        raise ConfigMismatch("reference trajectory does not match the fine configuration")

    times, H, low, sharp, I1, I2 = [], [], [], [], [], []
    for k, (t, u) in enumerate(zip(coarse.times, coarse.states)):
        v = restrict(reference.states[k * rt], cfg.cells)
        times.append(t)
        H.append(relative_entropy(u, v))
        low.append(hl2_lower_bound(u, v))
        sharp.append(hl2_sharp_bound(u, v))
        a, b = decomposition_observables(m, u, v)
        I1.append(a)
        I2.append(b)

    q_min = min(float(s.augmented.min()) for s in reference.states)
    grad = max(float(np.abs(_log_gradients(s)).max()) for s in reference.states)
    series = list(zip(times, H))
    try:
        C = gronwall_fit(series)
        violations = envelope_violations(series, C)
    except DegenerateSeries:
        C, violations = None, 0
    return TwinExperimentResult(
        delta=float(delta),
        times=times,
        H=H,
        lower_bound=low,
        lower_bound_sharp=sharp,
        I1=I1,
        I2=I2,
        fitted_C=C,
        envelope_violations=violations,
        q_min=q_min,
        max_grad_log_v=grad,
        model=m.name,
        config=cfg.to_dict(),
        fine_config=cfg_fine.to_dict(),
        clipped=clipped,
        entropy_drift=coarse.ledger.entropy[-1] - coarse.ledger.entropy[0],
        terminal_error=l2_distance(coarse.final, restrict(reference.final, cfg.cells)),
    )
