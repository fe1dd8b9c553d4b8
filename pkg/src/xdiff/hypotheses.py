"""Sampling-based audit of the structural hypotheses of a cross-diffusion model.

Every checker is a pure function of ``(model, samples, seed)`` and returns a
:class:`HypothesisReport`.  Boundedness and Lipschitz checks run on a ladder
of boundary margins and compare the suprema: stable suprema pass, suprema
growing more than tenfold per refinement fail, anything else is
inconclusive.  Sampling can never certify an infimum or supremum; the
reports say what was observed.
"""

import json
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from .core import from_entropy_vars, hessian, to_entropy_vars
from .exceptions import MissingReaction, MissingReducedMobility, SamplerExhausted, WrongModel
from .mobility import (
    augmented_mobility,
    factored_augmented_mobility,
    change_of_variables,
    g_matrix,
    lemma_lower_bound,
    project_L,
    projector_L,
)

MARGINS = (1e-2, 1e-4, 1e-6)
STABLE_RATIO = 1.1
DIVERGENT_RATIO = 10.0
# growth changes below this are sampling round-off, not acceleration
ACCELERATION_TOL = 1e-6
DENOMINATOR_GUARD = 1e-14
LEMMA_SLACK = 1e-9
DEFAULT_SAMPLES = 10_000


class Verdict(str, Enum):
    PASS = "PASS"
    FAIL = "FAIL"
    INCONCLUSIVE = "INCONCLUSIVE"


class Hypothesis(str, Enum):
    H3 = "H3"
    H4i = "H4i"
    H4ii = "H4ii"
    H5 = "H5"
    H5prime = "H5prime"
    LemG = "LemG"
    GPL = "GPL"
    Reaction = "Reaction"
    IonLemma = "IonLemma"


@dataclass
class HypothesisReport:
    hypothesis: Hypothesis
    verdict: Verdict
    statistic: float
    witness: dict
    samples: int
    margin: float
    seed: int
    model: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict is Verdict.PASS

    def to_dict(self):
        out = asdict(self)
        out["hypothesis"] = self.hypothesis.value
        out["verdict"] = self.verdict.value
        return _jsonable(out)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, Enum):
        return obj.value
    return obj


@dataclass(frozen=True)
class SimplexSampler:
    """Uniform points of the augmented simplex with every entry at least ``margin``."""

    n: int
    margin: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 <= self.margin < 0.49:
            raise ValueError("margin must lie in [0, 0.49)")

    def sample(self, count):
        return sample_simplex(self, count)


def sample_simplex(sampler, count):
    """Draw ``count`` augmented compositions, shape ``(count, n + 1)``.

    Uniform points come from normalised exponentials.  The margin constraint
    is applied by the affine map ``x -> m + (1 - (n+1) m) x``, which has the
    same law as rejection sampling (uniform on the shrunken simplex) without
    the rejection cost.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    k = sampler.n + 1
    if sampler.margin * k >= 1:
        raise SamplerExhausted(
            f"margin {sampler.margin} leaves no room in a simplex with {k} entries"
        )
    rng = np.random.default_rng(sampler.seed)
    e = rng.exponential(size=(count, k))
    x = e / e.sum(axis=1, keepdims=True)
    return _shrink(x, sampler.margin)


def _shrink(x, margin):
    k = x.shape[-1]
    return margin + (1.0 - k * margin) * x


def _audit_points(n, margin, count, rng):
    """Half uniform, half concentrated near faces and vertices (Dirichlet 0.1)."""
    k = n + 1
    half = count // 2
    uniform = rng.dirichlet(np.ones(k), size=count - half)
    edgy = rng.dirichlet(np.full(k, 0.1), size=half)
    # Dirichlet(0.1) draws can underflow to exact zeros; the shrink lifts them.
    return _shrink(np.concatenate([uniform, edgy]), margin)


def _near_pairs(points, margin, rng):
    """Partners for ``points`` from multiplicative perturbations of log-uniform size.

    Pairs that leave the margin region are dropped.
    """
    k = points.shape[1]
    half = len(points) // 2
    scale = 10.0 ** rng.uniform(-5, 0, size=(len(points), 1))
    v = points * np.exp(scale * rng.standard_normal(points.shape))
    v /= v.sum(axis=1, keepdims=True)
    # second half: independent far partners
    far = _shrink(rng.dirichlet(np.full(k, 0.3), size=len(points) - half), margin)
    v[half:] = far
    keep = np.all(v >= margin, axis=1)
    return points[keep], v[keep]


def _ladder_verdict(suprema):
    """Classify cumulative suprema taken on successively finer margins.

    PASS when the last refinement moves the supremum by at most 10% and the
    growth is not accelerating; FAIL when every refinement multiplies it by
    more than 10; INCONCLUSIVE otherwise (e.g. logarithmic growth).
    """
    s = np.asarray(suprema, dtype=float)
    if not np.all(np.isfinite(s)):
        return Verdict.FAIL
    if s[-1] == 0.0:
        return Verdict.PASS
    growth = s[1:] / np.maximum(s[:-1], np.finfo(float).tiny)
    if growth[-1] <= STABLE_RATIO and np.all(np.diff(growth) <= ACCELERATION_TOL):
        return Verdict.PASS
    if np.all(growth > DIVERGENT_RATIO):
        return Verdict.FAIL
    return Verdict.INCONCLUSIVE


def _entropy_product(model, u):
    return hessian(u) @ np.asarray(model.diffusion(u), dtype=float)


def _h3_min_eig(model, u):
    """Smallest eigenvalue of ``W^-1/2 sym(h''A) W^-1/2`` with ``W = diag(u^(2s-2))``.

    That is the minimum over ``z`` of the ratio audited by (H3) at ``u``.
    Returns the eigenvalues and the minimising ``z`` per point.
    """
    M = _entropy_product(model, u)
    S = 0.5 * (M + np.swapaxes(M, -1, -2))
    scale = u ** (1.0 - model.s)  # W^-1/2
    K = scale[..., :, None] * S * scale[..., None, :]
    vals, vecs = np.linalg.eigh(K)
    z = scale * vecs[..., :, 0]
    return vals[..., 0], z


def check_H3(model, samples=DEFAULT_SAMPLES, seed=0, margin=1e-6, polish=True):
    """Empirical ``c_A``: the infimum over samples of
    ``z^T h''(u)A(u) z / sum u_i^(2s-2) z_i^2``.

    For each sampled ``u`` the minimum over ``z`` is taken exactly (it is a
    generalised eigenvalue), so only ``u`` is sampled.  The worst points are
    then refined by a local search in entropy variables.
    """
    rng = np.random.default_rng(seed)
    bar_u = _audit_points(model.n, margin, samples, rng)
    u = bar_u[:, 1:]
    lam, z = _h3_min_eig(model, u)
    worst = int(np.argmin(lam))
    best_val, best_u, best_z = float(lam[worst]), u[worst], z[worst]
    polished = None
    if polish:
        for idx in np.argsort(lam)[:5]:
            val, uu = _polish_h3(model, u[idx], margin)
            if val < best_val:
                best_val, best_u = val, uu
                best_z = _h3_min_eig(model, uu[None, :])[1][0]
                polished = val
    verdict = Verdict.PASS if best_val > 0 else Verdict.FAIL
    return HypothesisReport(
        hypothesis=Hypothesis.H3,
        verdict=verdict,
        statistic=best_val,
        witness={"u": best_u, "z": best_z},
        samples=samples,
        margin=margin,
        seed=seed,
        model=model.name,
        details={
            "s": model.s,
            "c_A": best_val - LEMMA_SLACK,
            "sampled_min": float(lam[worst]),
            "polished_min": polished,
        },
    )


def _polish_h3(model, u_start, margin):
    def objective(w):
        u = from_entropy_vars(w)
        bar = np.concatenate([[1.0 - u.sum()], u])
        if np.any(bar < margin):
            return 1e300
        return float(_h3_min_eig(model, u[None, :])[0][0])

    res = minimize(
        objective,
        to_entropy_vars(u_start),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000},
    )
    u = from_entropy_vars(res.x)
    return float(objective(res.x)), u


def empirical_c_A(model, samples=DEFAULT_SAMPLES, seed=0, margin=1e-6):
    """Minimum sampled (H3) ratio minus the documented slack."""
    return check_H3(model, samples, seed, margin).details["c_A"]


def _h4_values(model, variant, bar_u):
    u = bar_u[:, 1:]
    s = model.s
    if variant == "i":
        M = _entropy_product(model, u)
        w = u ** (1.0 - s)
        return np.abs(M * w[:, :, None] * w[:, None, :])
    Bbar = augmented_mobility(model, u)
    w = bar_u**s
    return np.abs(Bbar / (w[:, :, None] * w[:, None, :]))


def check_H4(model, variant="ii", samples=DEFAULT_SAMPLES, seed=0, margins=MARGINS):
    """Boundedness of ``(h''A)_ij u_i^(1-s) u_j^(1-s)`` (variant ``i``) or of
    ``Bbar_ij / (u_i^s u_j^s)`` (variant ``ii``) under margin refinement."""
    if variant not in ("i", "ii"):
        raise ValueError("variant must be 'i' or 'ii'")
    hyp = Hypothesis.H4i if variant == "i" else Hypothesis.H4ii
    rng = np.random.default_rng(seed)
    ladder = _EntryLadder()
    for margin in margins:
        bar_u = _audit_points(model.n, margin, samples, rng)
        ladder.update(_h4_values(model, variant, bar_u), bar_u)
    return ladder.report(
        hyp, model, samples * len(margins), margins, seed, {"variant": variant}
    )


class _EntryLadder:
    """Cumulative entrywise suprema over a margin ladder, with witnesses."""

    def __init__(self):
        self.entry_suprema = []
        self.current = None
        self.best = (-np.inf, None, None, None)

    def update(self, values, points, partners=None):
        if values.size:
            local = values.max(axis=0)
            k = int(np.argmax(values.reshape(len(values), -1).max(axis=1)))
            top = float(values[k].max())
            if top > self.best[0]:
                entry = np.unravel_index(int(np.argmax(values[k])), values.shape[1:])
                partner = None if partners is None else partners[k]
                self.best = (top, points[k], partner, entry)
        else:
            local = None
        if self.current is None:
            self.current = np.zeros(values.shape[1:]) if local is None else local
        elif local is not None:
            self.current = np.maximum(self.current, local)
        self.entry_suprema.append(self.current.copy())

    def report(self, hyp, model, samples, margins, seed, extra):
        stack = np.array(self.entry_suprema)
        suprema = [float(x) for x in stack.reshape(len(stack), -1).max(axis=1)]
        verdicts = np.empty(stack.shape[1:], dtype=object)
        for idx in np.ndindex(*stack.shape[1:]):
            verdicts[idx] = _ladder_verdict(stack[(slice(None),) + idx]).value
        witness = {
            "bar_u": self.best[1],
            "entry": None if self.best[3] is None else [int(e) for e in self.best[3]],
        }
        if self.best[2] is not None:
            witness["bar_v"] = self.best[2]
        details = {
            "margins": list(margins),
            "suprema": suprema,
            "entry_suprema": stack[-1],
            "entry_verdicts": verdicts.tolist(),
        }
        details.update(extra)
        return HypothesisReport(
            hypothesis=hyp,
            verdict=_ladder_verdict(suprema),
            statistic=suprema[-1],
            witness=witness,
            samples=samples,
            margin=margins[-1],
            seed=seed,
            model=model.name,
            details=details,
        )


def check_H5(model, variant="H5", gamma=None, samples=DEFAULT_SAMPLES, seed=0, margins=MARGINS):
    """Lipschitz (``H5``) or Hoelder-type (``H5prime`` with exponent ``gamma``)
    continuity of the reduced mobility ``rho_ij = Bbar_ij / u_i``."""
    if model.reduced_mobility is None:
        raise MissingReducedMobility(f"model {model.name!r} has no factored reduced mobility")
    if variant not in ("H5", "H5prime"):
        raise ValueError("variant must be 'H5' or 'H5prime'")
    if variant == "H5prime":
        if gamma is None or not 0 < gamma <= 1:
            raise ValueError("H5prime needs an exponent gamma in (0, 1]")
        hyp, g = Hypothesis.H5prime, float(gamma)
    else:
        hyp, g = Hypothesis.H5, 1.0
    rng = np.random.default_rng(seed)
    ladder = _EntryLadder()
    total = 0
    for margin in margins:
        pts = _audit_points(model.n, margin, samples, rng)
        a, b = _near_pairs(pts, margin, rng)
        num = np.abs(model.reduced_mobility(a) - model.reduced_mobility(b))
        den = np.sum(np.abs(a**g - b**g), axis=1)
        ok = den >= DENOMINATOR_GUARD
        total += int(ok.sum())
        ladder.update(num[ok] / den[ok, None, None], a[ok], b[ok])
    return ladder.report(hyp, model, total, margins, seed, {"gamma": g})


def _lemma_samples(model, samples, seed, margin):
    rng = np.random.default_rng(seed)
    bar_u = _audit_points(model.n, margin, samples, rng)
    z = project_L(bar_u, rng.standard_normal(bar_u.shape))
    # the factored form uses u_0 as sampled; rebuilding it as 1 - sum(u)
    # costs ~|log10 u_0| digits near the solvent-depleted face
    if model.reduced_mobility is not None:
        Bbar = factored_augmented_mobility(model, bar_u)
    else:
        Bbar = augmented_mobility(model, bar_u[:, 1:])
    G = g_matrix(Bbar, bar_u)
    q = np.einsum("ki,kij,kj->k", z, G, z)
    return bar_u, z, q


def check_lemma_G(model, c_A, samples=DEFAULT_SAMPLES, seed=0, margin=1e-6):
    """``z^T G z >= c_A sum_{i>=1} u_i^(2s-1) z_i^2`` for ``z`` in L.

    The statistic is the smallest relative slack ``(q - rhs) / rhs``; the
    check passes when it is at least ``-1e-9``.
    """
    bar_u, z, q = _lemma_samples(model, samples, seed, margin)
    rhs = lemma_lower_bound(bar_u, z, c_A, model.s)
    slack = (q - rhs) / np.maximum(np.abs(rhs), DENOMINATOR_GUARD)
    k = int(np.argmin(slack))
    verdict = Verdict.PASS if slack[k] >= -LEMMA_SLACK else Verdict.FAIL
    # change-of-variables identity behind the lemma, checked on the same draws
    xi, eta = change_of_variables(bar_u, z)
    u = bar_u[:, 1:]
    hinv_xi = u * xi - u * np.sum(u * xi, axis=1, keepdims=True)
    cov_err = float(np.max(np.abs(hinv_xi - eta)))
    return HypothesisReport(
        hypothesis=Hypothesis.LemG,
        verdict=verdict,
        statistic=float(slack[k]),
        witness={"bar_u": bar_u[k], "z": z[k], "zGz": q[k], "bound": rhs[k]},
        samples=samples,
        margin=margin,
        seed=seed,
        model=model.name,
        details={"c_A": c_A, "s": model.s, "change_of_variables_error": cov_err},
    )


def check_gpl(model, samples=DEFAULT_SAMPLES, seed=0, margin=1e-6, augmented=None):
    """``P_L G = G P_L = G`` at sampled interior points.

    ``augmented`` overrides how ``Bbar`` is built from ``u`` (for fault injection).
    """
    build = augmented or (lambda u: augmented_mobility(model, u))
    rng = np.random.default_rng(seed)
    bar_u = _audit_points(model.n, margin, samples, rng)
    G = g_matrix(build(bar_u[:, 1:]), bar_u)
    P = projector_L(bar_u)
    dev = np.maximum(np.abs(P @ G - G).max(axis=(1, 2)), np.abs(G @ P - G).max(axis=(1, 2)))
    gnorm = np.abs(G).sum(axis=2).max(axis=1)
    rel = dev / (1.0 + gnorm)
    k = int(np.argmax(rel))
    verdict = Verdict.PASS if rel[k] <= 1e-11 else Verdict.FAIL
    return HypothesisReport(
        hypothesis=Hypothesis.GPL,
        verdict=verdict,
        statistic=float(rel[k]),
        witness={"bar_u": bar_u[k], "deviation": dev[k]},
        samples=samples,
        margin=margin,
        seed=seed,
        model=model.name,
    )


def _reaction_ratio(model, a, b):
    ra = model.reaction_augmented(a[:, 1:])
    rb = model.reaction_augmented(b[:, 1:])
    lhs = np.sum((ra - rb) * (np.log(a) - np.log(b)), axis=1)
    rhs = np.sum(a * np.log(a / b) - a + b, axis=1)
    return lhs, rhs


def estimate_CR(model, samples=DEFAULT_SAMPLES, seed=0, margins=MARGINS):
    """Largest sampled ratio of the reaction condition's two sides.

    Pairs whose relative entropy is below ``1e-14`` are skipped.  A
    non-positive statistic means the condition holds with ``C_R = 0``.
    """
    if model.reaction is None:
        raise MissingReaction(f"model {model.name!r} has no reaction terms")
    rng = np.random.default_rng(seed)
    suprema, best = [], (-np.inf, None, None)
    total = 0
    for margin in margins:
        pts = _audit_points(model.n, margin, samples, rng)
        a, b = _near_pairs(pts, margin, rng)
        lhs, rhs = _reaction_ratio(model, a, b)
        ok = rhs >= DENOMINATOR_GUARD
        total += int(ok.sum())
        if ok.any():
            ratio = lhs[ok] / rhs[ok]
            k = int(np.argmax(ratio))
            if ratio[k] > best[0]:
                best = (float(ratio[k]), a[ok][k], b[ok][k])
        suprema.append(best[0])
    stat = suprema[-1]
    if stat <= 0:
        verdict = Verdict.PASS
    else:
        verdict = _ladder_verdict(np.maximum(suprema, 0.0))
    return HypothesisReport(
        hypothesis=Hypothesis.Reaction,
        verdict=verdict,
        statistic=max(stat, 0.0),
        witness={"bar_u": best[1], "bar_v": best[2]},
        samples=total,
        margin=margins[-1],
        seed=seed,
        model=model.name,
        details={"margins": list(margins), "suprema": suprema, "C_R_hint": model.C_R_hint},
    )


def check_ion_lemma(model, samples=DEFAULT_SAMPLES, seed=0, margin=1e-6):
    """``z^T G z >= min(d) (sum_{i>=1} z_i^2 + z_0^2 / u_0)`` for ``z`` in L."""
    if not model.improved_lemma:
        raise WrongModel(f"model {model.name!r} has no improved positivity lemma")
    c_A = float(np.min(model.params["d"]))
    bar_u, z, q = _lemma_samples(model, samples, seed, margin)
    rhs = c_A * (np.sum(z[:, 1:] ** 2, axis=1) + z[:, 0] ** 2 / bar_u[:, 0])
    slack = (q - rhs) / np.maximum(np.abs(rhs), DENOMINATOR_GUARD)
    k = int(np.argmin(slack))
    verdict = Verdict.PASS if slack[k] >= -LEMMA_SLACK else Verdict.FAIL
    return HypothesisReport(
        hypothesis=Hypothesis.IonLemma,
        verdict=verdict,
        statistic=float(slack[k]),
        witness={"bar_u": bar_u[k], "z": z[k]},
        samples=samples,
        margin=margin,
        seed=seed,
        model=model.name,
        details={"c_A": c_A},
    )


def run_check(model, name, samples=DEFAULT_SAMPLES, seed=0, **options):
    """Dispatch a check by its report name (``H3``, ``H4i``, ``H4ii``, ``H5``,
    ``H5prime``, ``LemG``, ``GPL``, ``Reaction``, ``IonLemma``)."""
    hyp = Hypothesis(name)
    if hyp is Hypothesis.H3:
        return check_H3(model, samples, seed)
    if hyp in (Hypothesis.H4i, Hypothesis.H4ii):
        return check_H4(model, "i" if hyp is Hypothesis.H4i else "ii", samples, seed)
    if hyp is Hypothesis.H5:
        return check_H5(model, "H5", samples=samples, seed=seed)
    if hyp is Hypothesis.H5prime:
        return check_H5(model, "H5prime", gamma=options.get("gamma"), samples=samples, seed=seed)
    if hyp is Hypothesis.LemG:
        c_A = options.get("c_A")
        if c_A is None:
            c_A = empirical_c_A(model, samples, seed)
        return check_lemma_G(model, c_A, samples, seed + 1)
    if hyp is Hypothesis.GPL:
        return check_gpl(model, samples, seed)
    if hyp is Hypothesis.Reaction:
        return estimate_CR(model, samples, seed)
    return check_ion_lemma(model, samples, seed)
