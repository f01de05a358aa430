"""Exponent algebra for the admissibility of the coupling power.

The growth exponent gamma and the dimension determine a threshold on the
coupling exponent alpha below which the iteration gains enough integrability
to close.  Feasibility of a given alpha is witnessed by a tuple of fourteen
exponents subject to ten equality constraints and a family of strict
inequalities.  Four of the quantities (upsilon, theta, beta0, zeta) are
genuinely free; all the others follow in closed form, so the search is a
dense scan plus local refinement over a 4-d box, and every candidate is
re-checked by an independent residual evaluator that transcribes each
constraint directly.

`alpha_formula` evaluates the explicit rational lower bound for the
threshold; `alpha_max` re-derives the threshold by bisection on witness
feasibility and must land at or above the formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

__all__ = [
    "ExponentWitness",
    "WitnessSearchResult",
    "Admissibility",
    "kappa",
    "r_n",
    "ab_upsilon",
    "r_of_p",
    "witness_residuals",
    "find_witness",
    "alpha_formula",
    "alpha_max",
    "check_admissible",
]

EQUALITY_TOL = 1e-9
STRICT_SLACK = 1e-9


def _check_domain(gamma: float, d: int):
    if d <= 2 or int(d) != d:
        raise ValueError(f"d must be an integer > 2, got {d}")
    lo = 1.0 + 1.0 / (d + 1)
    if not (lo < gamma < 2.0):
        raise ValueError(f"gamma = {gamma} outside ({lo}, 2) for d = {d}")


def kappa(q: float, theta: float, d: int) -> float:
    """(d + 2q - dq) / (q ((theta-1) d + 2)); requires q < d/(d-2)."""
    if q <= 0:
        raise ValueError(f"q must be > 0, got {q}")
    if theta <= 1:
        raise ValueError(f"theta must be > 1, got {theta}")
    if d <= 2:
        raise ValueError(f"d must be > 2, got {d}")
    value = (d + 2.0 * q - d * q) / (q * ((theta - 1.0) * d + 2.0))
    if value <= 0:
        raise ValueError(
            f"kappa({q}, {theta}, {d}) = {value} <= 0; needs q < d/(d-2) = {d/(d-2)}"
        )
    return value


def r_n(r: float, theta: float, n: int) -> float:
    """Partial geometric sum r (theta^n - 1)/(theta - 1)."""
    if theta <= 1:
        raise ValueError(f"theta must be > 1, got {theta}")
    if n < 0 or int(n) != n:
        raise ValueError(f"n must be a nonnegative integer, got {n}")
    return r * (theta**n - 1.0) / (theta - 1.0)


def ab_upsilon(alpha: float, beta0: float, theta: float, d: int, upsilon: float):
    """Interpolation pair (a_u, b_u); upsilon = 1 returns (inf, theta*beta0)."""
    if not (0.0 <= upsilon <= 1.0):
        raise ValueError(f"upsilon must be in [0, 1], got {upsilon}")
    b = d * (alpha + 1.0) * beta0 * theta / (
        (alpha + 1.0) * d * upsilon + theta * beta0 * (d - 2.0) * (1.0 - upsilon)
    )
    if upsilon == 1.0:
        return math.inf, b
    return (alpha + 1.0) / (1.0 - upsilon), b


def r_of_p(p: float, theta: float, d: int) -> float:
    """Time exponent paired with p: p (d(theta-1)+2)/(2p-d); needs p > d/2."""
    if theta <= 1:
        raise ValueError(f"theta must be > 1, got {theta}")
    if p <= d / 2.0:
        raise ValueError(f"p must be > d/2 = {d/2}, got {p}")
    return p * (d * (theta - 1.0) + 2.0) / (2.0 * p - d)


def alpha_formula(gamma: float, d: int) -> float:
    """Explicit rational lower bound for the admissibility threshold."""
    _check_domain(gamma, d)
    g = gamma
    num = -4.0 * (-4.0 + g) ** 2 * (-1.0 + g) * g**2 + 2.0 * d * (
        -4.0 + (-2.0 + g) * g
    ) * (-4.0 + (-4.0 + g) * (-2.0 + g) * g)
    den = (
        (-2.0 + d)
        * (-4.0 + g)
        * (-1.0 + g)
        * g
        * (-2.0 * (-4.0 + g) * g + d * (-4.0 + (-2.0 + g) * g))
    )
    if abs(den) < 1e-14:
        raise ValueError(f"degenerate denominator at (gamma, d) = ({gamma}, {d})")
    return num / den


@dataclass(frozen=True)
class ExponentWitness:
    """The full exponent tuple; G_exp is the time-integrability exponent
    (distinct from the coupling antiderivative)."""

    lam: float
    zeta: float
    upsilon: float
    a_upsilon: float
    b_upsilon: float
    r: float
    r_tilde: float
    p: float
    p_tilde: float
    theta: float
    F: float
    G_exp: float
    beta0: float
    q: float

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "zeta": self.zeta,
            "upsilon": self.upsilon,
            "a_upsilon": self.a_upsilon,
            "b_upsilon": self.b_upsilon,
            "r": self.r,
            "r_tilde": self.r_tilde,
            "p": self.p,
            "p_tilde": self.p_tilde,
            "theta": self.theta,
            "F": self.F,
            "G": self.G_exp,
            "beta0": self.beta0,
            "q": self.q,
        }


def _eq_residual(lhs: float, rhs: float) -> float:
    """|LHS - RHS| scaled by the magnitude of the larger side beyond 1."""
    if math.isinf(lhs) or math.isinf(rhs):
        return 0.0 if lhs == rhs else math.inf
    return abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs))


def witness_residuals(w: ExponentWitness, gamma: float, d: int, alpha: float) -> dict:
    """Independent transcription of every constraint.

    Equality entries report the scaled residual |LHS - RHS|/max(1, |LHS|,
    |RHS|) under key "eq:*"; inequality entries report the slack (positive =
    satisfied) under key "ineq:*".  A witness is feasible iff all equality
    residuals are <= 1e-9 and all slacks exceed the strict margin.
    """
    res: dict = {}
    u, th, b0, z = w.upsilon, w.theta, w.beta0, w.zeta
    a, b, p, r, lam = w.a_upsilon, w.b_upsilon, w.p, w.r, w.lam

    # definitions of the interpolation pair
    if u < 1.0:
        res["eq:a_upsilon"] = _eq_residual(a, (alpha + 1.0) / (1.0 - u))
    else:
        res["eq:a_upsilon"] = 0.0 if math.isinf(a) else math.inf
    res["eq:b_upsilon"] = _eq_residual(
        b,
        d * (alpha + 1.0) * b0 * th
        / ((alpha + 1.0) * d * u + th * b0 * (d - 2.0) * (1.0 - u)),
    )
    # time exponent paired with p
    res["eq:r_of_p"] = _eq_residual(r, p * (d * (th - 1.0) + 2.0) / (2.0 * p - d))
    # q conjugate to p
    res["eq:conjugate"] = _eq_residual(1.0 / p + 1.0 / w.q, 1.0)
    # harmonic means defining the tilde pair
    inv_pt = (1.0 - z) * alpha * (d - 2.0) / ((alpha + 1.0) * d) + z * alpha / b
    inv_rt = (1.0 - z) * alpha / (alpha + 1.0) + z * (0.0 if math.isinf(a) else alpha / a)
    res["eq:p_tilde"] = _eq_residual(1.0 / w.p_tilde, inv_pt)
    res["eq:r_tilde"] = _eq_residual(1.0 / w.r_tilde, inv_rt)
    # interpolation identities tying lambda to (r, F) and (p, G)
    invF = 0.0 if math.isinf(w.F) else 1.0 / w.F
    invG = 1.0 / w.G_exp
    res["eq:lambda_F"] = _eq_residual(
        1.0 / (2.0 * (gamma - 1.0) * r), lam / gamma + (1.0 - lam) * invF
    )
    res["eq:lambda_G"] = _eq_residual(
        1.0 / (2.0 * (gamma - 1.0) * p), lam / gamma + (1.0 - lam) * invG
    )
    # the F and G exponents track the coupling norms
    res["eq:F_pair"] = _eq_residual(w.F / gamma, math.inf if math.isinf(a) else a / alpha)
    res["eq:G_pair"] = _eq_residual(w.G_exp / gamma, b / alpha)

    # ranges
    res["ineq:upsilon_low"] = u
    res["ineq:upsilon_high"] = 1.0 - u if u < 1.0 else 0.0
    res["ineq:theta"] = th - 1.0
    res["ineq:lambda_low"] = lam
    res["ineq:lambda_high"] = 1.0 - lam
    res["ineq:zeta_low"] = z
    res["ineq:zeta_high"] = 1.0 - z
    res["ineq:beta0_low"] = b0 - 1.0
    res["ineq:beta0_high"] = d / (d - 2.0) - b0
    res["ineq:p"] = p - d / 2.0
    res["ineq:q_low"] = w.q - 1.0
    res["ineq:q_high"] = d / (d - 2.0) - w.q
    # heat-kernel integrability of the interpolation pair
    res["ineq:ab_heat"] = (b / a) * ((a - alpha) / alpha) - d / 2.0 if not math.isinf(a) else math.inf
    res["ineq:tilde_heat"] = w.p_tilde * (w.r_tilde - 1.0) / w.r_tilde - d / 2.0
    # the two closing products must be strictly below one
    weight = r * u * alpha * (1.0 - 1.0 / th) / (b0 * (th - 1.0))
    prod1 = (1.0 - lam) * (gamma - 1.0) * (4.0 - gamma) * z / (2.0 - gamma) * weight
    prod2 = (1.0 - lam) * (gamma - 1.0) * (2.0 + gamma * z) / gamma * weight
    res["ineq:product_1"] = 1.0 - prod1
    res["ineq:product_2"] = 1.0 - prod2
    return res


def residuals_feasible(res: dict, strict: float = STRICT_SLACK) -> bool:
    for key, value in res.items():
        if not math.isfinite(value) and not (key.startswith("ineq:") and value == math.inf):
            return False
        if key.startswith("eq:") and value > EQUALITY_TOL:
            return False
        if key.startswith("ineq:") and value <= strict:
            return False
    return True


@dataclass
class WitnessSearchResult:
    feasible: bool
    witness: Optional[ExponentWitness]
    best_candidate: Optional[ExponentWitness]
    worst_violation: float

    def __bool__(self):
        return self.feasible


def _closed_form(gamma, d, alpha, U, TH, B0, Z):
    """Vectorized closed-form completion of the witness from the free box.

    Returns a dict of arrays including a feasibility mask and the margin of
    the binding inequalities.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = (alpha + 1.0) / (1.0 - U)
        b = d * (alpha + 1.0) * B0 * TH / (
            (alpha + 1.0) * d * U + TH * B0 * (d - 2.0) * (1.0 - U)
        )
        X = gamma / (2.0 * (gamma - 1.0))
        S = d * (TH - 1.0) + 2.0
        aa = alpha / a
        ab = alpha / b
        p = X * (S * (1.0 - aa) + d * (1.0 - ab)) / (
            2.0 * X * (1.0 - ab) - S * (aa - ab)
        )
        r = p * S / (2.0 * p - d)
        lam = 1.0 - (1.0 - X / p) / (1.0 - ab)
        inv_pt = (1.0 - Z) * alpha * (d - 2.0) / ((alpha + 1.0) * d) + Z * ab
        inv_rt = (1.0 - Z) * alpha / (alpha + 1.0) + Z * aa
        pt = 1.0 / inv_pt
        rt = 1.0 / inv_rt
        weight = r * U * alpha * (1.0 - 1.0 / TH) / (B0 * (TH - 1.0))
        prod1 = (1.0 - lam) * (gamma - 1.0) * (4.0 - gamma) * Z / (2.0 - gamma) * weight
        prod2 = (1.0 - lam) * (gamma - 1.0) * (2.0 + gamma * Z) / gamma * weight
        s_heat = (b / a) * ((a - alpha) / alpha) - d / 2.0
        s_tilde = pt * (rt - 1.0) / rt - d / 2.0

    slacks = [
        p - d / 2.0,
        lam,
        1.0 - lam,
        s_heat,
        s_tilde,
        rt - 1.0,
        1.0 - prod1,
        1.0 - prod2,
    ]
    margin = np.full(U.shape, np.inf)
    finite = np.isfinite(p) & np.isfinite(lam) & np.isfinite(r)
    finite &= np.isfinite(pt) & np.isfinite(rt) & np.isfinite(prod1) & np.isfinite(prod2)
    for s in slacks:
        margin = np.minimum(margin, np.where(np.isfinite(s), s, -np.inf))
    margin = np.where(finite, margin, -np.inf)
    return {"a": a, "b": b, "p": p, "r": r, "lam": lam, "pt": pt, "rt": rt,
            "margin": margin}


def _assemble(gamma, d, alpha, u, th, b0, z) -> ExponentWitness:
    vals = _closed_form(
        gamma, d, alpha,
        np.asarray(u), np.asarray(th), np.asarray(b0), np.asarray(z),
    )
    a = float((alpha + 1.0) / (1.0 - u))
    b = float(vals["b"])
    p = float(vals["p"])
    return ExponentWitness(
        lam=float(vals["lam"]),
        zeta=float(z),
        upsilon=float(u),
        a_upsilon=a,
        b_upsilon=b,
        r=float(vals["r"]),
        r_tilde=float(vals["rt"]),
        p=p,
        p_tilde=float(vals["pt"]),
        theta=float(th),
        F=gamma * a / alpha,
        G_exp=gamma * b / alpha,
        beta0=float(b0),
        q=p / (p - 1.0),
    )


def _scan_box(gamma, d, alpha, lo, hi, shape):
    axes = [np.linspace(a, b, s) for (a, b), s in zip(zip(lo, hi), shape)]
    U, TH, B0, Z = np.meshgrid(*axes, indexing="ij")
    vals = _closed_form(gamma, d, alpha, U, TH, B0, Z)
    idx = np.unravel_index(np.argmax(vals["margin"]), U.shape)
    return (
        float(vals["margin"][idx]),
        (float(U[idx]), float(TH[idx]), float(B0[idx]), float(Z[idx])),
        axes,
        idx,
    )


def find_witness(
    gamma: float,
    d: int,
    alpha: float,
    grid_points: int = 28,
    refinements: int = 4,
    theta_max: float = 8.0,
) -> WitnessSearchResult:
    """Search the free box (upsilon, theta, beta0, zeta) for a witness.

    Dense scan followed by local grid refinement around the best margin.
    Any returned witness has been re-validated by `witness_residuals`; an
    infeasible outcome carries the least-violated candidate found.
    """
    _check_domain(gamma, d)
    if alpha <= 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    tiny = 1e-7
    lo = [0.0, 1.0 + 1e-4, 1.0, 0.0]
    hi = [1.0 - tiny, theta_max, d / (d - 2.0) - 1e-6, 1.0]
    shape = (grid_points,) * 4
    best_margin, best_point, axes, idx = _scan_box(gamma, d, alpha, lo, hi, shape)
    for _ in range(refinements):
        new_lo, new_hi = [], []
        for axis, (a_lo, a_hi), i in zip(axes, zip(lo, hi), idx):
            width = (a_hi - a_lo) / (len(axis) - 1)
            new_lo.append(max(a_lo, axis[i] - 1.5 * width))
            new_hi.append(min(a_hi, axis[i] + 1.5 * width))
        lo, hi = new_lo, new_hi
        margin, point, axes, idx = _scan_box(gamma, d, alpha, lo, hi, shape)
        if margin > best_margin:
            best_margin, best_point = margin, point

    candidate = _assemble(gamma, d, alpha, *best_point)
    res = witness_residuals(candidate, gamma, d, alpha)
    if residuals_feasible(res):
        return WitnessSearchResult(True, candidate, candidate, 0.0)
    violation = max(
        max((v for k, v in res.items() if k.startswith("eq:")), default=0.0),
        max((STRICT_SLACK - v for k, v in res.items() if k.startswith("ineq:")), default=0.0),
    )
    return WitnessSearchResult(False, None, candidate, float(violation))


def alpha_max(
    gamma: float,
    d: int,
    bracket_tol: float = 1e-3,
    alpha_hi: float = 64.0,
    grid_points: int = 28,
) -> float:
    """Largest feasible coupling exponent found by bisection.

    The exact threshold exceeds `alpha_formula`; this numerical re-derivation
    must land within bracket_tol below it or better.
    """
    _check_domain(gamma, d)

    def feasible(al: float) -> bool:
        return find_witness(gamma, d, al, grid_points=grid_points).feasible

    lo = 0.5 * min(2.0 / (d - 2.0), 1.0)
    if not feasible(lo):
        raise RuntimeError(
            f"bracket failure: alpha = {lo} infeasible at (gamma, d) = ({gamma}, {d})"
        )
    hi = alpha_hi
    while feasible(hi):
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("bracket failure: no infeasible upper bound found")
    while hi - lo > bracket_tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class Admissibility:
    """Feasibility summary for one (gamma, d, alpha) triple."""

    gamma: float
    d: int
    alpha: float
    feasible: bool
    witness: Optional[ExponentWitness]
    formula_bound: float
    alpha_max_estimate: Optional[float] = None


def check_admissible(
    gamma: float,
    d: int,
    alpha: float,
    with_alpha_max: bool = False,
) -> Admissibility:
    result = find_witness(gamma, d, alpha)
    est = alpha_max(gamma, d) if with_alpha_max else None
    return Admissibility(
        gamma=gamma,
        d=d,
        alpha=alpha,
        feasible=result.feasible,
        witness=result.witness,
        formula_bound=alpha_formula(gamma, d),
        alpha_max_estimate=est,
    )
