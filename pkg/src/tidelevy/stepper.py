"""Semi-implicit Euler-Maruyama stepping of the Galerkin tide system.

One step from (t_m, u_m, z_m) with increments dW, jump marks z_i:

    E   = -B(u_m) - G(z_m) + f(t_m)
    S   = sigma(u_m) dW + (sum_i z_i - dt lam E[z]) (c2 psi + c3 u_m)
    (I + dt alpha Lambda + dt beta Rot) u_{m+1} = u_m + dt E + S
    z_{m+1} = z_m - dt Div(h u_{m+1})

Diffusion and rotation are implicit (a 2x2 solve per mode); everything else
is explicit.  All paths of an ensemble advance together as one batch.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import ContractError, grad_nodal, quad, sq_norm
from .noise import NoiseModel, draw_path_noise, jump_direction, path_rng
from .operators import apply_B, divergence_flux, modal_inner, pressure_gradient

SCHEMES = ("semi_implicit",)
ELEVATION_UPDATES = ("new", "old")


class DivergenceError(RuntimeError):
    """A path left the finite range; carries the step index and partial record."""

    def __init__(self, step, paths, record=None):
        self.step = step
        self.paths = list(paths)
        self.record = record
        super().__init__(f"state diverged at step {step} on path(s) {self.paths}")


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon_T: float
    record_stride: int = 1
    scheme: str = "semi_implicit"
    seed: int = 0
    p_moment: float = 4.0
    elevation_update: str = "new"
    divergence_threshold: float = 1e12
    store_states: bool = True
    batch_size: int = 32

    def __post_init__(self):
        problems = []
        if not (np.isfinite(self.dt) and self.dt > 0):
            problems.append("dt > 0")
        if not (np.isfinite(self.horizon_T) and self.horizon_T > 0):
            problems.append("horizon_T > 0")
        elif self.dt > self.horizon_T:
            problems.append("dt <= horizon_T")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            problems.append("record_stride >= 1")
        if self.scheme not in SCHEMES:
            problems.append(f"scheme in {SCHEMES}")
        if self.elevation_update not in ELEVATION_UPDATES:
            problems.append(f"elevation_update in {ELEVATION_UPDATES}")
        if self.batch_size < 1:
            problems.append("batch_size >= 1")
        if not problems:
            ratio = self.horizon_T / self.dt
            if ratio > 2**31:
                problems.append("horizon_T/dt exceeds 2**31 steps")
            elif abs(ratio - round(ratio)) > 1e-9 * ratio:
                problems.append("horizon_T must be an integer multiple of dt")
        if problems:
            raise ValueError("invalid SimConfig: " + "; ".join(problems))

    @property
    def n_steps(self):
        return int(round(self.horizon_T / self.dt))

    def replace(self, **changes):
        kw = dict(self.__dict__)
        kw.update(changes)
        return SimConfig(**kw)

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class State:
    t: float
    u: np.ndarray
    zhat: np.ndarray


# channels recorded at every step (index 0 is the initial state)
CHANNELS = (
    "l2_sq",        # ||u||^2
    "h10_sq",       # ||u||_H10^2
    "z_l2_sq",      # ||zhat||^2
    "z_h10_sq",     # ||grad zhat||^2
    "lap_sq",       # ||Laplacian u||^2
    "mart_wiener",  # running sum of (sigma(u_m) dW, u_m)
    "mart_jump",    # running sum of (compensated jump increment, u_m)
    "jump_qv",      # running sum over jumps of ||H(u_m, z)||^2
)


@dataclass
class TrajectoryRecord:
    """History of one path.

    ``channels`` holds per-step scalar series (length ``n_steps + 1``);
    ``times``/``u``/``zhat`` hold snapshots every ``record_stride`` steps.
    """

    times: np.ndarray
    u: np.ndarray
    zhat: np.ndarray
    channels: dict
    jump_counts: np.ndarray
    seed: int
    path_index: int
    config: SimConfig
    step_times: np.ndarray = field(repr=False, default=None)

    @property
    def energies(self):
        """Snapshot energies: (||u||^2, ||u||_H10^2, ||zhat||^2, ||u||^p)."""
        idx = np.arange(0, self.config.n_steps + 1, self.config.record_stride)
        idx = idx[: len(self.times)]
        l2 = self.channels["l2_sq"][idx]
        return {
            "l2_sq": l2,
            "h10_sq": self.channels["h10_sq"][idx],
            "z_l2_sq": self.channels["z_l2_sq"][idx],
            "u_lp": l2 ** (0.5 * self.config.p_moment),
        }

    @property
    def final(self):
        if self.u is None:
            raise ContractError("record was made with store_states=False")
        return State(float(self.times[-1]), self.u[-1], self.zhat[-1])

    def states(self):
        if self.u is None:
            raise ContractError("record was made with store_states=False")
        return [State(float(t), u, z) for t, z, u in zip(self.times, self.zhat, self.u)]

    def prefix(self, n_steps):
        """Channel values restricted to the first ``n_steps`` steps."""
        return {k: v[: n_steps + 1] for k, v in self.channels.items()}


# ---------------------------------------------------------------------------
# the scheme
# ---------------------------------------------------------------------------


def _increment(u, z, t, dW, msum, p, c, noise):
    """Right-hand side u_m + dt E + S plus the two martingale increments."""
    dt = c.dt
    rhs = u - dt * (apply_B(u, t, p) + pressure_gradient(z, p))
    f = p.f(t)
    if f is not None:
        rhs = rhs + dt * f
    n = u.shape[0]
    mw = np.zeros(n)
    mj = np.zeros(n)
    dqv = None
    if noise is not None and noise.wiener is not None:
        w = noise.wiener
        s = (w.sigma_add + w.sigma_mult * u) * dW
        rhs = rhs + s
        mw = modal_inner(s, u)
    if noise is not None and noise.jumps is not None:
        jp = noise.jumps
        d = jump_direction(u, jp)
        coef = msum - dt * jp.intensity * jp.mean_mark
        sj = coef[:, None, None, None] * d
        rhs = rhs + sj
        mj = modal_inner(sj, u)
        dqv = np.sum(d * d, axis=(-3, -2, -1))
    return rhs, mw, mj, dqv


def _solve_linear(rhs, p, dt):
    a = dt * p.alpha * p.domain.eigenvalues
    b = dt * p.beta
    x1, x2 = kernels.rotation_solve(rhs[:, 0], rhs[:, 1], a, b)
    return np.stack([x1, x2], axis=1)


def _advance(u, z, t, dW, msum, p, c, noise):
    rhs, mw, mj, dqv = _increment(u, z, t, dW, msum, p, c, noise)
    u_new = _solve_linear(rhs, p, c.dt)
    src = u_new if c.elevation_update == "new" else u
    z_new = z - c.dt * divergence_flux(src, p)
    return u_new, z_new, mw, mj, dqv


def step(s, draw, p, c, noise=None):
    """Advance a single state by one step with the given NoiseDraw."""
    u = np.asarray(s.u, dtype=float)[None]
    z = np.asarray(s.zhat, dtype=float)[None]
    dW = np.asarray(draw.wiener_increment, dtype=float)[None]
    msum = np.array([draw.mark_sum])
    u1, z1, _, _, _ = _advance(u, z, s.t, dW, msum, p, c, noise)
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(z1))):
        raise DivergenceError(0, [0])
    return State(s.t + c.dt, u1[0], z1[0])


def _energies(u, z, p):
    dom = p.domain
    lam = dom.eigenvalues
    l2 = sq_norm(u, "L2", dom, vector=True)
    h10 = sq_norm(u, "H10", dom, vector=True)
    lap = np.sum(lam * lam * u * u, axis=(-3, -2, -1))
    zl2 = quad(z * z, dom)
    g1, g2 = grad_nodal(z, dom)
    zh10 = quad(g1 * g1 + g2 * g2, dom)
    return l2, h10, zl2, zh10, lap


def _run_batch(u0, z0, noises, p, c, noise, seed, path_ids):
    """Advance a batch of paths; ``noises[i]`` is the PathNoise of path i."""
    n = c.n_steps
    nb = u0.shape[0]
    stride = c.record_stride
    snap_idx = np.arange(0, n + 1, stride)
    ch = {k: np.zeros((nb, n + 1)) for k in CHANNELS}
    if c.store_states:
        us = np.empty((nb, len(snap_idx)) + u0.shape[1:])
        zs = np.empty((nb, len(snap_idx)) + z0.shape[1:])
    u, z = u0.copy(), z0.copy()
    e = _energies(u, z, p)
    for k, v in zip(CHANNELS[:5], e):
        ch[k][:, 0] = v
    if c.store_states:
        us[:, 0], zs[:, 0] = u, z
    dW_all = np.stack([pn.dW for pn in noises], axis=1)
    ms_all = np.stack([pn.mark_sums for pn in noises], axis=1)
    msq_all = np.stack([pn.mark_sq_sums for pn in noises], axis=1)
    counts = np.stack([pn.jump_counts for pn in noises])
    thr = c.divergence_threshold**2
    mw_acc = np.zeros(nb)
    mj_acc = np.zeros(nb)
    qv_acc = np.zeros(nb)
    snap = 1
    for m in range(n):
        t = m * c.dt
        u_new, z_new, mw, mj, dqv = _advance(u, z, t, dW_all[m], ms_all[m], p, c, noise)
        mw_acc += mw
        mj_acc += mj
        if dqv is not None:
            qv_acc += msq_all[m] * dqv
        u, z = u_new, z_new
        e = _energies(u, z, p)
        bad = ~(np.isfinite(e[0]) & np.isfinite(e[2]) & (e[0] <= thr) & (e[2] <= thr))
        if bad.any():
            partial = _records(ch, us[:, :snap] if c.store_states else None,
                               zs[:, :snap] if c.store_states else None,
                               snap_idx[:snap] * c.dt, counts[:, : m + 1], c, seed, path_ids, m + 1)
            raise DivergenceError(m + 1, [path_ids[i] for i in np.nonzero(bad)[0]], partial)
        for k, v in zip(CHANNELS[:5], e):
            ch[k][:, m + 1] = v
        ch["mart_wiener"][:, m + 1] = mw_acc
        ch["mart_jump"][:, m + 1] = mj_acc
        ch["jump_qv"][:, m + 1] = qv_acc
        if c.store_states and (m + 1) % stride == 0:
            us[:, snap], zs[:, snap] = u, z
            snap += 1
    times = snap_idx * c.dt
    return _records(ch, us if c.store_states else None, zs if c.store_states else None,
                    times, counts, c, seed, path_ids, n)


def _records(ch, us, zs, times, counts, c, seed, path_ids, n_done):
    out = []
    step_times = np.arange(n_done + 1) * c.dt
    for i, pid in enumerate(path_ids):
        out.append(TrajectoryRecord(
            times=times,
            u=None if us is None else us[i],
            zhat=None if zs is None else zs[i],
            channels={k: v[i, : n_done + 1] for k, v in ch.items()},
            jump_counts=counts[i],
            seed=seed,
            path_index=pid,
            config=c,
            step_times=step_times,
        ))
    return out


def _as_batch(u0, z0, p, n):
    u0 = np.asarray(u0, dtype=float)
    z0 = np.zeros(p.domain.nodal_shape) if z0 is None else np.asarray(z0, dtype=float)
    if u0.shape[-3:] != (2,) + p.domain.modal_shape:
        raise ContractError(f"u0 shape {u0.shape} does not match the domain")
    if z0.shape[-2:] != p.domain.nodal_shape:
        raise ContractError(f"z0 shape {z0.shape} does not match the domain")
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(z0))):
        raise ContractError("initial data must be finite")
    return np.broadcast_to(u0, (n,) + u0.shape[-3:]).copy(), np.broadcast_to(z0, (n,) + z0.shape[-2:]).copy()


def path_noise(p, c, noise, index, seed=None):
    """The PathNoise consumed by ensemble member ``index``."""
    seed = c.seed if seed is None else seed
    noise = noise or NoiseModel()
    return draw_path_noise(c.n_steps, c.dt, noise.wiener, noise.jumps, path_rng(seed, index), p.domain)


def simulate_ensemble(u0, z0, p, c, noise=None, n_paths=1, first_path=0):
    """Run ``n_paths`` independent paths seeded from ``c.seed``.

    Path ``i`` always uses ``path_rng(c.seed, i)``, so results do not depend
    on the batch size.
    """
    out = []
    ids = list(range(first_path, first_path + n_paths))
    for start in range(0, n_paths, c.batch_size):
        chunk = ids[start: start + c.batch_size]
        noises = [path_noise(p, c, noise, i) for i in chunk]
        ub, zb = _as_batch(u0, z0, p, len(chunk))
        out.extend(_run_batch(ub, zb, noises, p, c, noise, c.seed, chunk))
    return out


def simulate_with_noise(u0, z0, p, c, noise, path_noises, ids=None):
    """Run one path per entry of ``path_noises``; ``u0`` may carry a batch axis."""
    ids = list(range(len(path_noises))) if ids is None else list(ids)
    u0 = np.asarray(u0, dtype=float)
    out = []
    for start in range(0, len(path_noises), c.batch_size):
        sl = slice(start, start + c.batch_size)
        chunk = path_noises[sl]
        ub, zb = _as_batch(u0 if u0.ndim == 3 else u0[sl], z0, p, len(chunk))
        out.extend(_run_batch(ub, zb, chunk, p, c, noise, c.seed, ids[sl]))
    return out


def simulate(u0, z0, p, c, noise=None, path_index=0):
    """One path; deterministic given ``c.seed`` and ``path_index``."""
    return simulate_ensemble(u0, z0, p, c, noise, 1, path_index)[0]


def simulate_pair(u0_a, u0_b, z0, p, c, noise=None, path_index=0):
    """Two initial states driven by the same noise path."""
    pn = path_noise(p, c, noise, path_index)
    ua, za = _as_batch(u0_a, z0, p, 1)
    ub, zb = _as_batch(u0_b, z0, p, 1)
    ra = _run_batch(ua, za, [pn], p, c, noise, c.seed, [path_index])[0]
    rb = _run_batch(ub, zb, [pn], p, c, noise, c.seed, [path_index])[0]
    return ra, rb


def simulate_pairs(u0_a, u0_b, z0, p, c, noise=None, n_paths=1):
    """Common-noise pairs for ``n_paths`` noise paths, batched."""
    out = []
    for start in range(0, n_paths, max(1, c.batch_size // 2)):
        chunk = list(range(start, min(n_paths, start + max(1, c.batch_size // 2))))
        noises = []
        for i in chunk:
            pn = path_noise(p, c, noise, i)
            noises += [pn, pn]
        ua, za = _as_batch(u0_a, z0, p, len(chunk))
        ub, zb = _as_batch(u0_b, z0, p, len(chunk))
        u = np.empty((2 * len(chunk),) + ua.shape[1:])
        z = np.empty((2 * len(chunk),) + za.shape[1:])
        u[0::2], u[1::2] = ua, ub
        z[0::2], z[1::2] = za, zb
        recs = _run_batch(u, z, noises, p, c, noise, c.seed, [i for i in chunk for _ in (0, 1)])
        out.extend(zip(recs[0::2], recs[1::2]))
    return out


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------


def _embed(u, shape):
    """Zero-pad or truncate modal coefficients to ``shape`` (m1, m2)."""
    out = np.zeros(u.shape[:-2] + shape)
    m1 = min(shape[0], u.shape[-2])
    m2 = min(shape[1], u.shape[-1])
    out[..., :m1, :m2] = u[..., :m1, :m2]
    return out


def refinement_study(u0, z0_fn, make_params, c, mode_levels, dt_levels, noise=None,
                     n_paths=1, domain_fn=None):
    """Distances between consecutive resolution levels under common noise.

    ``mode_levels`` must be nondecreasing and ``dt_levels`` nonincreasing
    (a single entry is broadcast).  Noise is drawn once on the finest level
    and each coarser level receives it summed over steps and restricted to
    its modes.  The distance between levels a and b is the L2(0,T; L2) norm
    of u_a - u_b sampled on level a's time grid, averaged over paths in the
    mean-square sense.
    """
    from .grid import DomainSpec

    modes = list(mode_levels)
    dts = list(dt_levels)
    if len(modes) == 1:
        modes = modes * len(dts)
    if len(dts) == 1:
        dts = dts * len(modes)
    if len(modes) != len(dts) or len(modes) < 2:
        raise ContractError("need at least two levels of matching length")
    if any(b < a for a, b in zip(modes, modes[1:])):
        raise ContractError("mode_levels must be nondecreasing")
    if any(b > a for a, b in zip(dts, dts[1:])):
        raise ContractError("dt_levels must be nonincreasing")
    domain_fn = domain_fn or (lambda m: DomainSpec.square(m))
    fine_dt = dts[-1]
    factors = []
    for dt in dts:
        f = dt / fine_dt
        if abs(f - round(f)) > 1e-9 * f:
            raise ContractError(f"dt {dt} is not an integer multiple of {fine_dt}")
        factors.append(int(round(f)))
    for f_a, f_b in zip(factors, factors[1:]):
        if f_a % f_b:
            raise ContractError("consecutive dt levels must nest")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape[-2] < modes[-1] or u0.shape[-1] < modes[-1]:
        raise ContractError("u0 must be given on at least the finest mode level")

    fine_dom = domain_fn(modes[-1])
    fine_c = c.replace(dt=fine_dt, record_stride=1, store_states=True)
    fine_p = make_params(fine_dom)
    fine_noise = noise.restrict(fine_dom) if noise is not None else NoiseModel()

    levels = []
    for m, dt, fac in zip(modes, dts, factors):
        dom = domain_fn(m)
        levels.append(dict(domain=dom, params=make_params(dom), config=c.replace(
            dt=dt, record_stride=1, store_states=True), factor=fac,
            noise=noise.restrict(dom) if noise is not None else None))

    runs = [[] for _ in levels]
    for i in range(n_paths):
        base = path_noise(fine_p, fine_c, fine_noise, i)
        for lv, out in zip(levels, runs):
            pn = base.coarsen(lv["factor"], lv["domain"])
            ub, zb = _as_batch(_embed(u0, lv["domain"].modal_shape), z0_fn(lv["domain"]), lv["params"], 1)
            out.append(_run_batch(ub, zb, [pn], lv["params"], lv["config"], lv["noise"], c.seed, [i])[0])

    rows = []
    for a in range(len(levels) - 1):
        la, lb = levels[a], levels[a + 1]
        stride = la["factor"] // lb["factor"]
        shape = lb["domain"].modal_shape
        sq = 0.0
        for ra, rb in zip(runs[a], runs[a + 1]):
            ua = _embed(ra.u, shape)[1:]
            ub = rb.u[stride::stride]
            sq += la["config"].dt * np.sum((ua - ub) ** 2)
        rows.append(dict(
            level=a, modes=(modes[a], modes[a + 1]), dt=(dts[a], dts[a + 1]),
            distance=float(np.sqrt(sq / n_paths)),
        ))
    for r0, r1 in zip(rows, rows[1:]):
        r1["ratio"] = r0["distance"] / r1["distance"] if r1["distance"] > 0 else np.inf
    return rows


def linear_decay_factor(p, c, steps=None):
    """Per-mode amplification of the scheme with B, G, f and noise all off."""
    steps = c.n_steps if steps is None else steps
    return (1.0 + c.dt * p.alpha * p.domain.eigenvalues) ** (-steps)
