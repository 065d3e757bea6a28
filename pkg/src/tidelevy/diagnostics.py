"""Ensemble checks of the energy bounds, martingale channels and path regularity.

Everything here reads finished trajectory records; nothing re-simulates
except :func:`h1_blowup_probe`, which runs its own ensemble.
"""

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import kernels
from .grid import ContractError, DomainSpec, grad_nodal, quad, sq_norm
from .noise import NoiseModel
from .stepper import simulate_ensemble

BDG_CONSTANT = 4.0


def _same_config(trajs):
    if len(trajs) == 0:
        raise ContractError("empty ensemble")
    c0 = trajs[0].config
    for tr in trajs[1:]:
        if tr.config != c0:
            raise ContractError("trajectories come from different configurations")
    return c0


def _channel(trajs, name):
    return np.stack([tr.channels[name] for tr in trajs])


def _time_integral(fn, times):
    """Trapezoid integral of a scalar function sampled at ``times``."""
    vals = np.array([fn(t) for t in times])
    if len(times) < 2:
        return 0.0
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times)))


# ---------------------------------------------------------------------------
# energy estimates
# ---------------------------------------------------------------------------


@dataclass
class EnergyReport:
    ensemble_size: int
    lhs_sup: float
    lhs_dissipation: float
    gronwall_bound: float
    constants: dict
    satisfied: bool
    extras: dict = field(default_factory=dict)

    @property
    def lhs(self):
        return self.lhs_sup + self.lhs_dissipation

    def recompute_satisfied(self):
        return bool(self.lhs_sup + self.lhs_dissipation <= self.gronwall_bound)

    def to_dict(self):
        d = asdict(self)
        d["lhs"] = self.lhs
        return d


def data_integrals(p, times):
    """(int ||w0||_L4^4 dt, int ||f||^2 dt) over the sampled time grid."""
    dom = p.domain

    def w4(t):
        w = p.w0(t)
        return 0.0 if w is None else float(sq_norm(w, "L4", dom, vector=True) ** 2)

    def f2(t):
        f = p.f(t)
        return 0.0 if f is None else float(np.sum(f * f))

    return _time_integral(w4, times), _time_integral(f2, times)


def energy_constants(p, noise, T, C3=BDG_CONSTANT, C4=BDG_CONSTANT):
    noise = noise or NoiseModel()
    K = noise.K
    C = max(1.0 + p.M + p.r / p.eps, 2 * p.g**2 / p.alpha + 2 * p.mu**2 / p.alpha + p.M)
    Cp = 2.0 * (C + (C3 * K) ** 2 + (C4 * K) ** 2 + 3 * K)
    Cpp = 2.0 * ((C3 * K) ** 2 + (C4 * K) ** 2 + 3 * K)
    return {
        "C": C, "C_prime": Cp, "C_dprime": Cpp, "K": K, "C3": C3, "C4": C4,
        "r_over_eps": p.r / p.eps, "mu": p.mu, "M": p.M, "g": p.g, "alpha": p.alpha, "T": T,
    }


def energy_path_terms(trajs, alpha):
    """Per-path sup(|u|^2 + |z|^2) and 2 alpha int |u|_H10^2; their means form the energy LHS."""
    c = _same_config(trajs)
    l2 = _channel(trajs, "l2_sq")
    zl2 = _channel(trajs, "z_l2_sq")
    h10 = _channel(trajs, "h10_sq")
    return np.max(l2 + zl2, axis=1), 2 * alpha * (c.dt * np.sum(h10[:, 1:], axis=1))


def energy_estimate_check(trajs, p, noise=None, C3=BDG_CONSTANT, C4=BDG_CONSTANT):
    """Empirical E[sup(|u|^2+|z|^2)] + 2 alpha E int |u|_H10^2 against the Gronwall bound.

    Bound: D exp(C' T) with
    D = (2r/eps) int |w0|_L4^4 + 2 int |f|^2 + C'' T + 2 (|u0|^2 + |z0|^2).
    """
    c = _same_config(trajs)
    T = c.n_steps * c.dt
    l2 = _channel(trajs, "l2_sq")
    zl2 = _channel(trajs, "z_l2_sq")
    h10 = _channel(trajs, "h10_sq")
    if len(trajs) > 1 and not (np.all(l2[:, 0] == l2[0, 0]) and np.all(zl2[:, 0] == zl2[0, 0])):
        raise ContractError("trajectories start from different initial data")
    sup_e, diss = energy_path_terms(trajs, p.alpha)
    lhs_sup, lhs_diss = float(np.mean(sup_e)), float(np.mean(diss))
    k = energy_constants(p, noise, T, C3, C4)
    w4, f2 = data_integrals(p, trajs[0].step_times)
    init = float(l2[0, 0] + zl2[0, 0])
    D = 2 * k["r_over_eps"] * w4 + 2 * f2 + k["C_dprime"] * T + 2 * init
    log_bound = math.log(D) + k["C_prime"] * T if D > 0 else -math.inf
    bound = math.exp(log_bound) if log_bound < 709.0 else math.inf
    k.update(data_D=D, log_bound=log_bound, int_w0_L4_4=w4, int_f_sq=f2, initial_energy=init)
    extras = {}
    if noise is not None and noise.jumps is not None:
        # expected jump quadratic variation against int K_H (1 + |u|^2), raw and doubled
        qv = float(np.mean(_channel(trajs, "jump_qv")[:, -1]))
        comp = noise.jumps.K * float(np.mean(c.dt * np.sum(1 + l2[:, :-1], axis=1)))
        extras = {"jump_qv_mean": qv, "jump_qv_bound_raw": comp, "jump_qv_bound_factor2": 2 * comp}
    lhs = lhs_sup + lhs_diss
    return EnergyReport(len(trajs), lhs_sup, lhs_diss, bound, k, bool(lhs <= bound), extras)


def lp_energy_check(trajs, p, exponent_p, multiple=100.0):
    """p-th moment energy with an empirical constant.

    LHS = E[sup(|u|^p + |z|^p)] + alpha p E int |u|^(p-2) |u|_H10^2 dt and
    data = 1 + |u0|^p + |z0|^p + int (|f|^p + |w0|_H10^p) dt.  The flag is
    LHS <= multiple * data; ``empirical_constant`` = LHS / data.
    """
    if not exponent_p > 2:
        raise ContractError("exponent_p must be > 2")
    c = _same_config(trajs)
    q = 0.5 * exponent_p
    l2 = _channel(trajs, "l2_sq")
    zl2 = _channel(trajs, "z_l2_sq")
    h10 = _channel(trajs, "h10_sq")
    sup_u = np.max(l2**q, axis=1)
    lhs_sup = float(np.mean(np.max(l2**q + zl2**q, axis=1)))
    diss = p.alpha * exponent_p * c.dt * np.sum(l2[:, 1:] ** (q - 1) * h10[:, 1:], axis=1)
    lhs_diss = float(np.mean(diss))
    dom = p.domain

    def fp(t):
        f = p.f(t)
        return 0.0 if f is None else float(np.sum(f * f)) ** q

    def wp(t):
        w = p.w0(t)
        if w is None:
            return 0.0
        g1, g2 = grad_nodal(w, dom)
        return float(np.sum(quad(g1 * g1 + g2 * g2, dom))) ** q

    times = trajs[0].step_times
    data = 1.0 + l2[0, 0] ** q + zl2[0, 0] ** q + _time_integral(fp, times) + _time_integral(wp, times)
    bound = multiple * data
    lhs = lhs_sup + lhs_diss
    extras = {
        "exponent_p": exponent_p,
        "sup_moment_u": float(np.mean(sup_u)),
        "empirical_constant": lhs / data,
        "data_norm": float(data),
        "multiple": multiple,
        "finite": bool(np.isfinite(lhs)),
    }
    return EnergyReport(len(trajs), lhs_sup, lhs_diss, float(bound), {"alpha": p.alpha},
                        bool(np.isfinite(lhs) and lhs <= bound), extras)


# ---------------------------------------------------------------------------
# uniqueness
# ---------------------------------------------------------------------------


def stability_bound(p, noise, T):
    """exp((C + L) T) with C = 2g^2/alpha + 2 mu^2/alpha + M."""
    noise = noise or NoiseModel()
    C = 2 * p.g**2 / p.alpha + 2 * p.mu**2 / p.alpha + p.M
    return {"C": C, "L": noise.L, "growth": math.exp(min((C + noise.L) * T, 709.0))}


def pair_stability_check(pairs, p, noise=None, slack=1.5):
    """E|w(T)|^2 <= slack exp((C+L)T) |w(0)|^2 over common-noise pairs."""
    a0, b0 = pairs[0]
    c = a0.config
    T = c.n_steps * c.dt
    w0 = float(np.sum((a0.u[0] - b0.u[0]) ** 2))
    wT = np.array([np.sum((a.u[-1] - b.u[-1]) ** 2) for a, b in pairs])
    k = stability_bound(p, noise, T)
    rhs = slack * k["growth"] * w0
    lhs = float(np.mean(wT))
    return {"lhs": lhs, "rhs": rhs, "w0_sq": w0, "satisfied": bool(lhs <= rhs), **k,
            "slack": slack, "ensemble_size": len(pairs)}


# ---------------------------------------------------------------------------
# martingale channels
# ---------------------------------------------------------------------------


def martingale_mean_check(trajs, n_se=4.0):
    """Ensemble mean of each stochastic-integral channel at T versus its standard error."""
    out = {}
    for name in ("mart_wiener", "mart_jump"):
        x = _channel(trajs, name)[:, -1]
        mean = float(np.mean(x))
        se = float(np.std(x, ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0
        ok = bool(abs(mean) <= n_se * se) if se > 0 else bool(mean == 0.0)
        out[name] = {"mean": mean, "stderr": se, "satisfied": ok}
    out["satisfied"] = all(v["satisfied"] for v in out.values())
    out["ensemble_size"] = len(trajs)
    return out


# ---------------------------------------------------------------------------
# H10 regularity probe
# ---------------------------------------------------------------------------


@dataclass
class BlowupTable:
    thresholds: list
    horizons: list
    probabilities: np.ndarray
    degenerate: list
    monotone: bool
    smallest_max: float
    small: float
    satisfied: bool
    ensemble: int

    def to_dict(self):
        d = asdict(self)
        d["probabilities"] = self.probabilities.tolist()
        return d


def probe_admissible(noise):
    """The regularity probe needs state-independent noise with an H10-bounded spectrum."""
    problems = []
    if noise is None:
        return problems
    if not noise.additive:
        problems.append("noise must be additive (c1 = c3 = 0)")
    w = noise.wiener
    if w is not None and not (w.decay is not None and w.decay > 2):
        problems.append("Wiener spectrum needs a recorded decay exponent > 2")
    return problems


def h1_functional(tr, n_steps, alpha):
    """sup_{m<=n}(|u|_H10^2 + |z|_H10^2) + alpha/2 sum dt |Lap u|^2, and its t=0 value."""
    ch = tr.channels
    e = ch["h10_sq"][: n_steps + 1] + ch["z_h10_sq"][: n_steps + 1]
    lap = tr.config.dt * np.sum(ch["lap_sq"][1: n_steps + 1])
    return float(e.max() + 0.5 * alpha * lap), float(e[0])


def h1_blowup_probe(p, c, thresholds, horizons, ensemble, noise=None, u0=None, z0=None,
                    small=0.05):
    """Exceedance probabilities P(Q_T > (N - 1) + Q_0) over a grid of N and T.

    All horizons are prefixes of one ensemble run to the largest horizon, so
    each column uses the same paths.  Cells with N <= 1 are flagged
    degenerate and left out of the monotonicity and smallness checks.
    """
    problems = probe_admissible(noise)
    if problems:
        raise ContractError("regularity probe refused: " + "; ".join(problems))
    horizons = sorted(horizons, reverse=True)
    steps = []
    for T in horizons:
        r = T / c.dt
        if abs(r - round(r)) > 1e-9 * r or round(r) < 1:
            raise ContractError(f"horizon {T} is not a positive multiple of dt")
        steps.append(int(round(r)))
    dom = p.domain
    u0 = np.zeros((2,) + dom.modal_shape) if u0 is None else u0
    run_c = c.replace(horizon_T=horizons[0], store_states=False)
    trajs = simulate_ensemble(u0, z0, p, run_c, noise, ensemble)
    probs = np.zeros((len(thresholds), len(horizons)))
    for j, n in enumerate(steps):
        q = np.array([h1_functional(tr, n, p.alpha) for tr in trajs])
        for i, N in enumerate(thresholds):
            probs[i, j] = np.mean(q[:, 0] > (N - 1) + q[:, 1])
    degenerate = [bool(N <= 1) for N in thresholds]
    live = ~np.array(degenerate)
    monotone = bool(np.all(np.diff(probs[live], axis=1) <= 0)) if live.any() else True
    smallest = float(probs[live, -1].max()) if live.any() else 0.0
    return BlowupTable(list(thresholds), horizons, probs, degenerate, monotone, smallest, small,
                       bool(monotone and smallest <= small), ensemble)


# ---------------------------------------------------------------------------
# cadlag modulus
# ---------------------------------------------------------------------------


def hminus1_distances(values, domain):
    """Pairwise H^-1 distances between modal snapshots ``(n, 2, m1, m2)``."""
    y = np.asarray(values, dtype=float) / np.sqrt(domain.eigenvalues)
    y = y.reshape(y.shape[0], -1)
    return cdist(y, y)


def modulus_from_distances(times, dist, delta):
    """Min over grid partitions with cells [t_a, t_b), t_b - t_a >= delta, of
    the max cell diameter; the path is the step function through the samples.
    """
    times = np.asarray(times, dtype=float)
    T = times[-1] - times[0]
    if not 0 < delta < T:
        raise ContractError(f"delta must lie in (0, {T})")
    diam = kernels.cell_diameters(np.ascontiguousarray(dist, dtype=float))
    return float(kernels.partition_modulus(diam, times, float(delta)))


def modulus_bruteforce(times, dist, delta):
    """Exhaustive search over every subset of interior grid points."""
    times = np.asarray(times, dtype=float)
    n = len(times)
    T = times[-1] - times[0]
    if not 0 < delta < T:
        raise ContractError(f"delta must lie in (0, {T})")
    if n > 16:
        raise ContractError("brute force is limited to 16 grid points")
    best = math.inf
    for r in range(n - 1):
        for cut in itertools.combinations(range(1, n - 1), r):
            pts = (0,) + cut + (n - 1,)
            if any(times[b] - times[a] < delta for a, b in zip(pts, pts[1:])):
                continue
            worst = 0.0
            for a, b in zip(pts, pts[1:]):
                for i in range(a, b):
                    for j in range(i + 1, b):
                        worst = max(worst, dist[i, j])
            best = min(best, worst)
    return float(best)


def cadlag_modulus(traj, delta, domain=None):
    """Modulus of the recorded velocity path in H^-1.

    Without ``domain`` the unit square with the record's mode counts is assumed.
    """
    if traj.u is None:
        raise ContractError("trajectory has no stored states")
    if domain is None:
        m1, m2 = traj.u.shape[-2:]
        domain = DomainSpec(1.0, 1.0, m1, m2, 2 * m1 + 1, 2 * m2 + 1)
    if not delta < traj.config.horizon_T:
        raise ContractError("delta must be < horizon_T")
    dist = hminus1_distances(traj.u, domain)
    return modulus_from_distances(traj.times, dist, delta)


# ---------------------------------------------------------------------------
# tightness
# ---------------------------------------------------------------------------


@dataclass
class TightnessReport:
    sup_l2: float
    integral_h10: float
    modulus_curve: list
    aldous_moment: dict
    increments: list

    def to_dict(self):
        return asdict(self)


def increment_moments(trajs, theta_grid, domain):
    """max over grid tau of E|u(tau+theta) - u(tau)|^2_H^-1, per theta."""
    tr0 = trajs[0]
    h = tr0.times[1] - tr0.times[0]
    inv = 1.0 / domain.eigenvalues
    U = np.stack([tr.u for tr in trajs])
    out = []
    for th in theta_grid:
        s = th / h
        if abs(s - round(s)) > 1e-9 * s or round(s) < 1 or round(s) >= len(tr0.times):
            raise ContractError(f"theta {th} is not a multiple of the snapshot spacing below T")
        s = int(round(s))
        d = U[:, s:] - U[:, :-s]
        m = np.mean(np.sum(inv * d * d, axis=(-3, -2, -1)), axis=0)
        out.append(float(m.max()))
    return out


def fit_power_law(theta, moment):
    """Least-squares fit of log m = log C + beta log theta; returns (beta, C_fit, C_envelope)."""
    if len(theta) < 2:
        raise ContractError("a power-law fit needs at least two theta values")
    lt = np.log(np.asarray(theta, dtype=float))
    lm = np.log(np.asarray(moment, dtype=float))
    beta, logc = np.polyfit(lt, lm, 1)
    env = float(np.max(np.exp(lm - beta * lt)))
    return float(beta), float(np.exp(logc)), env


def tightness_probe(trajs, delta_grid, theta_grid, domain):
    """Uniform bounds, modulus curve and the increment power law of the ensemble."""
    _same_config(trajs)
    sup_l2 = float(np.mean(np.sqrt(np.max(_channel(trajs, "l2_sq"), axis=1))))
    c = trajs[0].config
    int_h10 = float(np.mean(c.dt * np.sum(_channel(trajs, "h10_sq")[:, 1:], axis=1)))
    dists = [hminus1_distances(tr.u, domain) for tr in trajs]
    curve = []
    for d in sorted(delta_grid):
        w = max(modulus_from_distances(trajs[0].times, D, d) for D in dists)
        curve.append((float(d), w))
    m = increment_moments(trajs, theta_grid, domain)
    if min(m) > 0:
        beta, c_fit, c_env = fit_power_law(theta_grid, m)
    else:
        beta, c_fit, c_env = math.inf, 0.0, 0.0
    return TightnessReport(sup_l2, int_h10, curve,
                           {"alpha": 2.0, "beta": beta, "C": c_fit, "C_envelope": c_env},
                           list(zip(map(float, theta_grid), m)))
