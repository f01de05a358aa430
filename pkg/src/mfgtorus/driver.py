"""Damped Picard coupling of the backward and forward sweeps.

One iteration freezes the density, applies the smoothed coupling as the
source of the backward value sweep, feeds the resulting feedback drift to
the forward density sweep, and relaxes the density with factor omega.  The
residual is the sup norm over space-time of the density update.
Non-convergence is reported, not raised; the admissibility frontier in the
coupling exponent is exactly what parameter studies probe.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .coupling import CouplingParams, Mollifier, g_eps_array
from .grid import Field, Trajectory, grad_arrays
from .hamiltonian import HamiltonianModel
from .solvers import FpConfig, HjbConfig, solve_fp, solve_hjb

__all__ = [
    "MfgProblem",
    "FixedPointConfig",
    "MfgSolution",
    "ContinuationRung",
    "ContinuationResult",
    "solve_mfg",
    "eps_continuation",
    "scheme_residuals",
]


@dataclass(frozen=True)
class MfgProblem:
    """Grid, Hamiltonian data, coupling parameters and boundary data."""

    model: HamiltonianModel
    coupling: CouplingParams
    u_terminal: Field
    m_initial: Field

    def __post_init__(self):
        grid = self.model.grid
        if self.u_terminal.grid != grid or self.m_initial.grid != grid:
            raise ValueError("model, terminal data and initial density must share one grid")
        if self.m_initial.min() <= 0:
            raise ValueError(
                f"initial density must be strictly positive (min = {self.m_initial.min()})"
            )
        mass = self.m_initial.integral()
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"initial density mass {mass} != 1; renormalize on load")

    @property
    def grid(self):
        return self.model.grid

    def with_eps(self, eps: float) -> "MfgProblem":
        return MfgProblem(
            self.model,
            CouplingParams(self.coupling.alpha, eps),
            self.u_terminal,
            self.m_initial,
        )


@dataclass(frozen=True)
class FixedPointConfig:
    """Damping on the density update, stopping rule, continuation ladder."""

    omega: float = 0.5
    tol: float = 1e-8
    max_iters: int = 200
    cfl: float = 0.5
    eps_ladder: tuple = ()

    def __post_init__(self):
        if not (0.0 < self.omega <= 1.0):
            raise ValueError(f"omega must be in (0, 1], got {self.omega}")
        if self.tol <= 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        ladder = tuple(float(e) for e in self.eps_ladder)
        if ladder:
            if any(b >= a for a, b in zip(ladder, ladder[1:])):
                raise ValueError(f"eps ladder must be strictly decreasing: {ladder}")
            if ladder[-1] < 0:
                raise ValueError("eps ladder entries must be >= 0")
        object.__setattr__(self, "eps_ladder", ladder)


@dataclass
class MfgSolution:
    u: Trajectory
    m: Trajectory
    iterations: int
    residuals: list
    converged: bool

    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")


def _coupling_source(moll, params, m_frames) -> np.ndarray:
    out = np.empty_like(m_frames)
    for j in range(m_frames.shape[0]):
        out[j] = g_eps_array(moll, params, m_frames[j])
    return out


def _drift_provider(model, u_traj):
    h = u_traj.grid.h

    def drift(j):
        du = grad_arrays(u_traj.frames[j], h)
        return [Field(u_traj.grid, c) for c in model.dp_arrays(du)]

    return drift


def solve_mfg(
    problem: MfgProblem,
    fp_cfg: FixedPointConfig,
    m_init: Optional[Trajectory] = None,
) -> MfgSolution:
    """Damped Picard iteration; see the module docstring.

    The returned value trajectory is the exact backward solve against the
    returned density, so the discrete value equation holds to roundoff on
    the output pair.
    """
    grid = problem.grid
    _warn_if_inadmissible(problem)
    moll = Mollifier(grid, problem.coupling.eps)
    if m_init is not None:
        if m_init.grid != grid:
            raise ValueError("warm-start trajectory lives on a different grid")
        m_frames = m_init.frames.copy()
    else:
        m_frames = Trajectory.constant_in_time(problem.m_initial).frames.copy()

    fpc = FpConfig(problem.m_initial, cfl=fp_cfg.cfl)
    residuals: list = []
    converged = False
    u_traj = None
    for _ in range(fp_cfg.max_iters):
        source = Trajectory(grid, _coupling_source(moll, problem.coupling, m_frames))
        u_traj = solve_hjb(HjbConfig(source, problem.u_terminal, cfl=fp_cfg.cfl), problem.model)
        m_new = solve_fp(fpc, _drift_provider(problem.model, u_traj))
        updated = (1.0 - fp_cfg.omega) * m_frames + fp_cfg.omega * m_new.frames
        if not np.all(np.isfinite(updated)):
            raise RuntimeError("NaN/Inf in the density update; solve aborted")
        residual = float(np.abs(updated - m_frames).max())
        residuals.append(residual)
        m_frames = updated
        if residual <= fp_cfg.tol:
            converged = True
            break

    m_traj = Trajectory(grid, m_frames)
    # re-solve the value equation against the final density so the output
    # pair satisfies the discrete backward equation exactly
    source = Trajectory(grid, _coupling_source(moll, problem.coupling, m_frames))
    u_traj = solve_hjb(HjbConfig(source, problem.u_terminal, cfl=fp_cfg.cfl), problem.model)
    return MfgSolution(
        u=u_traj,
        m=m_traj,
        iterations=len(residuals),
        residuals=residuals,
        converged=converged,
    )


def _warn_if_inadmissible(problem: MfgProblem):
    d = problem.grid.d
    if d <= 2:
        return  # no admissibility ceiling below three dimensions
    from .exponents import alpha_formula

    try:
        bound = alpha_formula(problem.model.gamma, d)
    except ValueError:
        return
    if problem.coupling.alpha >= bound:
        warnings.warn(
            f"alpha = {problem.coupling.alpha} is at or above the proven admissible "
            f"bound {bound:.4f} for (gamma, d) = ({problem.model.gamma}, {d}); "
            "attempting the solve anyway",
            stacklevel=3,
        )


@dataclass
class ContinuationRung:
    eps: float
    solution: MfgSolution
    delta_u: Optional[float]
    delta_m: Optional[float]


@dataclass
class ContinuationResult:
    rungs: list = dc_field(default_factory=list)
    failure: Optional[str] = None


def eps_continuation(problem: MfgProblem, fp_cfg: FixedPointConfig) -> ContinuationResult:
    """Solve along the decreasing mollifier ladder, warm-starting each rung.

    Reports sup-norm deltas of u and m between consecutive rungs.  A failing
    rung stops the ladder; the rungs solved so far are returned.
    """
    if not fp_cfg.eps_ladder:
        raise ValueError("eps ladder is empty")
    result = ContinuationResult()
    prev: Optional[MfgSolution] = None
    for eps in fp_cfg.eps_ladder:
        rung_problem = problem.with_eps(eps)
        try:
            sol = solve_mfg(rung_problem, fp_cfg, m_init=prev.m if prev else None)
        except Exception as exc:  # propagate per rung, keep partial results
            result.failure = f"eps={eps}: {exc}"
            return result
        if prev is None:
            result.rungs.append(ContinuationRung(eps, sol, None, None))
        else:
            du = float(np.abs(sol.u.frames - prev.u.frames).max())
            dm = float(np.abs(sol.m.frames - prev.m.frames).max())
            result.rungs.append(ContinuationRung(eps, sol, du, dm))
        prev = sol
    return result


def scheme_residuals(problem: MfgProblem, solution: MfgSolution) -> tuple:
    """Max-norm residuals of the discrete equations on an output pair.

    Both are scaled by 1/dt so they are comparable to time-derivative terms.
    """
    from .grid import diffuse_backward_euler_array, heat_evolve_array
    from .solvers import _upwind_advection

    grid = problem.grid
    dt, h = grid.dt, grid.h
    moll = Mollifier(grid, problem.coupling.eps)
    u, m = solution.u.frames, solution.m.frames
    res_hjb = 0.0
    res_fp = 0.0
    for j in range(grid.steps):
        f_j = g_eps_array(moll, problem.coupling, m[j])
        du_next = grad_arrays(u[j + 1], h)
        predicted_u = heat_evolve_array(u[j + 1], grid, dt) + dt * (
            f_j - problem.model.h_arrays(du_next)
        )
        res_hjb = max(res_hjb, float(np.abs(u[j] - predicted_u).max()) / dt)
        du_j = grad_arrays(u[j], h)
        b_j = problem.model.dp_arrays(du_j)
        predicted_m = diffuse_backward_euler_array(
            m[j] + dt * _upwind_advection(m[j], b_j, h), grid, dt
        )
        res_fp = max(res_fp, float(np.abs(m[j + 1] - predicted_m).max()) / dt)
    return res_hjb, res_fp
