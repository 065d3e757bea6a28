"""Initial-value control: sample-average cost and two descent methods.

The control ``U`` shifts the initial velocity, u(0) = u0 + U, and lives in
the span of the first ``m`` modes (ordered by eigenvalue) of each velocity
component, so a control is a vector of ``2 m`` coefficients.  Every cost
evaluation reuses the same noise paths (one per entry of ``seed_set``), which
makes the estimated cost a deterministic function of ``U``.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import ContractError, quad, synthesize
from .noise import NoiseModel, draw_path_noise, path_rng
from .stepper import DivergenceError, simulate_with_noise

METHODS = ("fd_gradient", "coordinate_search")


@dataclass(frozen=True, eq=False)
class CostSpec:
    """L(t, u, U) = w_track |u - u_ref(t)|^2 + w_reg |U|^2, with k(U) = w_reg |U|^2.

    ``u_ref`` maps t to a nodal vector field, or is None for a zero target.
    """

    w_track: float = 1.0
    w_reg: float = 1e-2
    u_ref: object = None

    def __post_init__(self):
        problems = []
        if not (np.isfinite(self.w_track) and self.w_track >= 0):
            problems.append("w_track >= 0")
        if not (np.isfinite(self.w_reg) and self.w_reg > 0):
            problems.append("w_reg > 0 (coercivity of k)")
        if problems:
            raise ValueError("invalid CostSpec: " + "; ".join(problems))

    def density(self, u, u_ref, U):
        """Pointwise L for vectors with the component axis last."""
        u, u_ref, U = (np.asarray(a, dtype=float) for a in (u, u_ref, U))
        return self.w_track * np.sum((u - u_ref) ** 2, axis=-1) + self.k(U)

    def k(self, U):
        return self.w_reg * np.sum(np.asarray(U, dtype=float) ** 2, axis=-1)


def control_modes(domain, m):
    """Indices (j, k) of the ``m`` lowest modes, ties broken by (j, k)."""
    lam = domain.eigenvalues
    idx = sorted(np.ndindex(lam.shape), key=lambda jk: (lam[jk], jk))
    if not 1 <= m <= len(idx):
        raise ContractError(f"control_modes must lie in 1..{len(idx)}")
    return idx[:m]


@dataclass(frozen=True, eq=False)
class ControlProblem:
    u0: np.ndarray
    z0: np.ndarray
    control_modes: int
    control_bound: float
    cost: CostSpec
    params: object
    sim: object
    noise: NoiseModel = None
    seed_set: tuple = (0,)

    def __post_init__(self):
        control_modes(self.params.domain, self.control_modes)
        if not self.control_bound > 0:
            raise ValueError("control_bound > 0")
        if len(self.seed_set) < 1:
            raise ValueError("seed_set must not be empty")
        object.__setattr__(self, "seed_set", tuple(int(s) for s in self.seed_set))

    @property
    def ensemble_size(self):
        return len(self.seed_set)

    @property
    def dim(self):
        return 2 * self.control_modes

    def to_modal(self, U):
        U = np.asarray(U, dtype=float)
        if U.shape[-1] != self.dim:
            raise ContractError(f"control has {U.shape[-1]} coefficients, expected {self.dim}")
        out = np.zeros(U.shape[:-1] + (2,) + self.params.domain.modal_shape)
        m = self.control_modes
        for i, (j, k) in enumerate(control_modes(self.params.domain, m)):
            out[..., 0, j, k] = U[..., i]
            out[..., 1, j, k] = U[..., m + i]
        return out

    def project(self, U):
        """Radial projection onto the ball |U|^2 <= control_bound."""
        U = np.asarray(U, dtype=float)
        n2 = float(np.sum(U * U))
        if n2 <= self.control_bound:
            return U.copy()
        out = U * np.sqrt(self.control_bound / n2)
        # guard the last ulp
        while np.sum(out * out) > self.control_bound:
            out = out * (1 - 1e-15)
        return out

    def path_noises(self):
        c = self.sim
        noise = self.noise or NoiseModel()
        return [draw_path_noise(c.n_steps, c.dt, noise.wiener, noise.jumps, path_rng(s, 0),
                                self.params.domain) for s in self.seed_set]


def _tracking(records, prob):
    """Per-path int_0^T int |u - u_ref|^2 dx dt (trapezoid in time)."""
    dom = prob.params.domain
    ref = prob.cost.u_ref
    out = []
    for tr in records:
        nodal = synthesize(tr.u, dom)
        if ref is not None:
            nodal = nodal - np.stack([np.asarray(ref(t), dtype=float) for t in tr.times])
        e = np.sum(quad(nodal * nodal, dom), axis=-1)
        out.append(np.sum(0.5 * (e[1:] + e[:-1]) * np.diff(tr.times)))
    return np.array(out)


def evaluate_costs(Us, prob, noises=None):
    """Batched cost estimates for a list of controls: arrays (J, stderr)."""
    Us = np.atleast_2d(np.asarray(Us, dtype=float))
    T = prob.sim.n_steps * prob.sim.dt
    reg = prob.cost.w_reg * np.sum(Us * Us, axis=1) * T
    n = prob.ensemble_size
    if prob.cost.w_track == 0:
        return reg, np.zeros(len(Us))
    noises = prob.path_noises() if noises is None else noises
    c = prob.sim.replace(record_stride=1, store_states=True)
    u_init = np.asarray(prob.u0, dtype=float) + prob.to_modal(Us)
    starts = np.repeat(u_init, n, axis=0)
    try:
        recs = simulate_with_noise(starts, prob.z0, prob.params, c, prob.noise, list(noises) * len(Us))
    except DivergenceError as exc:
        seeds = sorted({prob.seed_set[i % n] for i in exc.paths})
        raise DivergenceError(exc.step, seeds, exc.record) from exc
    track = prob.cost.w_track * _tracking(recs, prob).reshape(len(Us), n)
    per_path = track + reg[:, None]
    J = per_path.mean(axis=1)
    se = per_path.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(len(Us))
    return J, se


def evaluate_cost(U, prob):
    """(J_hat, stderr) for one control, after projection onto the admissible ball."""
    U = prob.project(U)
    J, se = evaluate_costs(U[None], prob)
    return float(J[0]), float(se[0])


def check_admissibility(cost, samples=1000, seed=0, rays=(1.0, 10.0, 100.0, 1000.0)):
    """L >= k(U) on random points and quadratic growth of k along rays."""
    rng = np.random.default_rng(seed)
    u = rng.normal(0, 3, (samples, 2))
    ur = rng.normal(0, 3, (samples, 2))
    U = rng.normal(0, 3, (samples, 2))
    gap = cost.density(u, ur, U) - cost.k(U)
    lower_ok = bool(np.all(gap >= 0))
    direction = rng.normal(size=2)
    ratios = [float(cost.k(s * direction) / s**2) for s in rays]
    coercive = bool(ratios[0] > 0 and np.allclose(ratios, ratios[0], rtol=1e-12))
    return {
        "lower_bound_ok": lower_ok,
        "min_gap": float(gap.min()),
        "coercivity_ratios": ratios,
        "coercive": coercive,
        "satisfied": lower_ok and coercive,
    }


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


@dataclass
class OptimizationTrace:
    method: str
    iterates: list = field(default_factory=list)
    best: tuple = None
    evaluations: int = 0
    budget_exhausted: bool = False
    converged: bool = False

    def accept(self, U, J, se, info):
        self.iterates.append({"U": np.asarray(U).tolist(), "J": float(J), "stderr": float(se),
                              "info": info})
        self.best = (np.asarray(U).copy(), float(J))

    def values(self):
        return np.array([it["J"] for it in self.iterates])

    def to_dict(self):
        return {
            "method": self.method,
            "iterates": self.iterates,
            "best": {"U": self.best[0].tolist(), "J": self.best[1]} if self.best else None,
            "evaluations": self.evaluations,
            "budget_exhausted": self.budget_exhausted,
            "converged": self.converged,
        }


class _Evaluator:
    def __init__(self, prob, budget, trace):
        self.prob = prob
        self.budget = budget
        self.trace = trace
        self.noises = prob.path_noises() if prob.cost.w_track != 0 else None

    @property
    def left(self):
        return self.budget - self.trace.evaluations

    def __call__(self, Us):
        Us = np.atleast_2d(Us)
        if len(Us) > self.left:
            raise _OutOfBudget
        self.trace.evaluations += len(Us)
        return evaluate_costs(Us, self.prob, self.noises)


class _OutOfBudget(Exception):
    pass


def optimize(prob, method="fd_gradient", budget=100, U_init=None, step=0.25, min_step=1e-9,
             max_backtracks=40, grad_tol=1e-12):
    """Minimise the sample-average cost; ``budget`` counts cost evaluations.

    Only decreases of the estimated cost are accepted, so the accepted values
    never increase.  Running out of budget returns the best iterate with
    ``budget_exhausted`` set.
    """
    if method not in METHODS:
        raise ContractError(f"method must be one of {METHODS}")
    if budget < 1:
        raise ContractError("budget must be >= 1")
    trace = OptimizationTrace(method)
    ev = _Evaluator(prob, budget, trace)
    U = prob.project(np.zeros(prob.dim) if U_init is None else U_init)
    J, se = ev(U)
    trace.accept(U, J[0], se[0], {"kind": "start"})
    J = float(J[0])
    try:
        if method == "fd_gradient":
            _fd_gradient(prob, ev, trace, U, J, max_backtracks, grad_tol)
        else:
            _coordinate_search(prob, ev, trace, U, J, step, min_step)
    except _OutOfBudget:
        trace.budget_exhausted = True
    return trace


def _fd_gradient(prob, ev, trace, U, J, max_backtracks, grad_tol):
    n = prob.dim
    prev = None
    while True:
        h = 1e-4 * (1.0 + np.abs(U))
        probes = np.concatenate([U + np.diag(h), U - np.diag(h)])
        vals, _ = ev(probes)
        g = (vals[:n] - vals[n:]) / (2 * h)
        gn = float(np.linalg.norm(g))
        if gn <= grad_tol:
            trace.converged = True
            return
        if prev is None:
            s = 1.0
        else:
            dU, dg = U - prev[0], g - prev[1]
            denom = float(dg @ dg)
            s = abs(float(dU @ dg)) / denom if denom > 0 else 1.0
            if not np.isfinite(s) or s <= 0:
                s = 1.0
        for k in range(max_backtracks):
            cand = prob.project(U - s * g)
            Jc, sec = ev(cand)
            if Jc[0] < J:
                prev = (U, g)
                U, J = cand, float(Jc[0])
                trace.accept(U, J, sec[0], {"kind": "step", "step": s, "grad_norm": gn,
                                            "backtracks": k})
                break
            s *= 0.5
        else:
            trace.converged = True
            return


def _coordinate_search(prob, ev, trace, U, J, step, min_step):
    n = prob.dim
    while step >= min_step:
        improved = False
        for i in range(n):
            for sign in (1.0, -1.0):
                cand = U.copy()
                cand[i] += sign * step
                cand = prob.project(cand)
                Jc, sec = ev(cand)
                if Jc[0] < J:
                    U, J = cand, float(Jc[0])
                    trace.accept(U, J, sec[0], {"kind": "coord", "index": i, "sign": sign,
                                                "step": step})
                    improved = True
                    break
        if not improved:
            step *= 0.5
    trace.converged = True


def brute_force_1d(prob, grid, index=0):
    """Cost over a grid of values of one coefficient (others zero); returns (grid, J)."""
    grid = np.asarray(grid, dtype=float)
    Us = np.zeros((len(grid), prob.dim))
    Us[:, index] = grid
    J, _ = evaluate_costs(Us, prob)
    return grid, J
