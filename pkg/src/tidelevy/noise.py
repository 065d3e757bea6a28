"""Driving noise: truncated Q-Wiener increments and compound-Poisson jumps.

Built-in coefficient families, per mode m = (component, j, k):

* diffusion   sigma(t, u) dW  =  (c0 + c1 u_m) dW_m,   dW_m ~ N(0, q_m dt)
* jumps       H(u, z)         =  z (c2 psi + c3 u)
* compensator int H(u, z) lambda(dz) = lambda_tot E[z] (c2 psi + c3 u)

The mark space is a bounded interval or a finite set and the jump intensity
is finite, so every moment used below has a closed form.

Per-path generators come from ``path_rng(master_seed, index)``, which
spawns ``SeedSequence(master_seed, spawn_key=(index,))``.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import ContractError, DomainSpec, random_modal, sq_norm
from .operators import OperatorReport


def path_rng(master_seed, index):
    """Generator for ensemble member ``index`` of a run seeded with ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index),))
    return np.random.default_rng(ss)


# ---------------------------------------------------------------------------
# Q-Wiener part
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WienerSpec:
    """Covariance spectrum ``q`` (shape ``(2, m1, m2)``) and sigma = c0 + c1 u."""

    q: np.ndarray
    sigma_add: float = 1.0
    sigma_mult: float = 0.0
    decay: float = None

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        if q.ndim != 3 or q.shape[0] != 2:
            raise ValueError(f"q must have shape (2, m1, m2), got {q.shape}")
        if not np.all(np.isfinite(q)) or q.min() < 0:
            raise ValueError("q eigenvalues must be finite and >= 0")
        if not (np.isfinite(self.sigma_add) and np.isfinite(self.sigma_mult)):
            raise ValueError("sigma coefficients must be finite")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def power_law(cls, domain, q0=1.0, decay=1.5, sigma_add=1.0, sigma_mult=0.0):
        """q_jk = q0 (lambda_min / lambda_jk)^decay, same for both components.

        Normalised so the gravest mode carries variance ``q0``; ``decay > 1``
        keeps the trace bounded as the truncation grows.
        """
        q1 = q0 * (domain.lambda_min / domain.eigenvalues) ** decay
        return cls(np.stack([q1, q1]), sigma_add, sigma_mult, decay)

    @property
    def trace(self):
        return float(self.q.sum())

    @property
    def K(self):
        """Growth constant: ||sigma(u)||_LQ^2 <= K (1 + ||u||^2)."""
        return 2.0 * max(self.sigma_add**2, self.sigma_mult**2) * self.trace

    @property
    def L(self):
        """Lipschitz constant: ||sigma(u) - sigma(v)||_LQ^2 <= L ||u - v||^2."""
        return self.sigma_mult**2 * self.trace

    def restrict(self, domain):
        return WienerSpec(self.q[:, : domain.modes_x1, : domain.modes_x2],
                          self.sigma_add, self.sigma_mult, self.decay)


def sample_wiener(dt, spec, rng, size=()):
    """Per-mode increments, mode m ~ N(0, q_m dt), independent."""
    if not dt > 0:
        raise ContractError("dt must be > 0")
    size = (size,) if np.isscalar(size) else tuple(size)
    z = rng.standard_normal(size + spec.q.shape)
    return np.sqrt(spec.q * dt) * z


def apply_sigma(t, u, dW, spec):
    """sigma(t, u) dW for the built-in family (t is unused: time-homogeneous)."""
    return (spec.sigma_add + spec.sigma_mult * np.asarray(u)) * dW


def sigma_lq_sq(u, spec):
    """||sigma(t, u)||_{L_Q}^2 = sum_m q_m (c0 + c1 u_m)^2."""
    s = spec.sigma_add + spec.sigma_mult * np.asarray(u)
    return np.sum(spec.q * s * s, axis=(-3, -2, -1))


# ---------------------------------------------------------------------------
# jumps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JumpSpec:
    """Finite-intensity jump measure with marks and H(u, z) = z (c2 psi + c3 u).

    ``marks`` is ``("uniform", low, high)`` or ``("discrete", values, probs)``.
    """

    intensity: float
    marks: tuple
    amp_add: float
    amp_mult: float
    shape: np.ndarray

    def __post_init__(self):
        problems = []
        if not (np.isfinite(self.intensity) and self.intensity >= 0):
            problems.append("intensity >= 0")
        kind = self.marks[0]
        if kind == "uniform":
            _, lo, hi = self.marks
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                problems.append("uniform marks need finite low < high")
            marks = ("uniform", float(lo), float(hi))
        elif kind == "discrete":
            _, vals, probs = self.marks
            vals = tuple(float(v) for v in vals)
            probs = tuple(float(v) for v in probs)
            if len(vals) != len(probs) or not vals:
                problems.append("discrete marks need matching values/probs")
            elif min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
                problems.append("discrete probabilities must be >= 0 and sum to 1")
            if not all(np.isfinite(vals)):
                problems.append("discrete mark values must be finite")
            marks = ("discrete", vals, probs)
        else:
            problems.append(f"unknown mark distribution {kind!r}")
            marks = self.marks
        shape = np.array(self.shape, dtype=float)
        if shape.ndim != 3 or shape.shape[0] != 2:
            problems.append("shape must be a vector modal field (2, m1, m2)")
        if problems:
            raise ValueError("invalid JumpSpec: " + "; ".join(problems))
        shape.setflags(write=False)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "shape", shape)

    def mark_moment(self, p, absolute=False):
        """E[z^p] (or E|z|^p) under the mark distribution."""
        if self.marks[0] == "discrete":
            v = np.array(self.marks[1])
            w = np.array(self.marks[2])
            return float(np.sum(w * (np.abs(v) ** p if absolute else v**p)))
        _, a, b = self.marks
        if not absolute:
            return (b ** (p + 1) - a ** (p + 1)) / ((p + 1) * (b - a))
        if a >= 0:
            num = b ** (p + 1) - a ** (p + 1)
        elif b <= 0:
            num = (-a) ** (p + 1) - (-b) ** (p + 1)
        else:
            num = (-a) ** (p + 1) + b ** (p + 1)
        return num / ((p + 1) * (b - a))

    @property
    def mean_mark(self):
        return self.mark_moment(1)

    @property
    def shape_l2(self):
        return float(np.sqrt(np.sum(self.shape**2)))

    @property
    def K(self):
        """int ||H(u,z)||^2 lambda(dz) <= K (1 + ||u||^2)."""
        m2 = self.mark_moment(2)
        return 2.0 * self.intensity * m2 * max(self.amp_add**2 * self.shape_l2**2, self.amp_mult**2)

    @property
    def L(self):
        return self.intensity * self.mark_moment(2) * self.amp_mult**2

    def moment_constant(self, p):
        """M with int ||H(u,z)||^p lambda(dz) <= M (1 + ||u||^p)."""
        mp = self.mark_moment(p, absolute=True)
        base = max(abs(self.amp_add) ** p * self.shape_l2**p, abs(self.amp_mult) ** p)
        return 2.0 ** (p - 1) * self.intensity * mp * base

    def sample_marks(self, n, rng):
        if self.marks[0] == "uniform":
            return rng.uniform(self.marks[1], self.marks[2], size=n)
        vals = np.array(self.marks[1])
        return vals[rng.choice(len(vals), size=n, p=np.array(self.marks[2]))]

    def restrict(self, domain):
        return JumpSpec(self.intensity, self.marks, self.amp_add, self.amp_mult,
                        self.shape[:, : domain.modes_x1, : domain.modes_x2])


def sample_jumps(dt, spec, rng):
    """Jump events in one step: list of (time offset in (0, dt), mark), sorted."""
    if not dt > 0:
        raise ContractError("dt must be > 0")
    if spec.intensity == 0:
        return []
    n = rng.poisson(spec.intensity * dt)
    if n == 0:
        return []
    times = dt - rng.uniform(0.0, dt, size=n)  # in (0, dt]
    times = np.where(times >= dt, np.nextafter(dt, 0.0), times)
    marks = spec.sample_marks(n, rng)
    order = np.argsort(times, kind="stable")
    return [(float(times[i]), float(marks[i])) for i in order]


def jump_direction(u, spec):
    """c2 psi + c3 u, the common factor of every H(u, z)."""
    return spec.amp_add * spec.shape + spec.amp_mult * np.asarray(u)


def apply_H(u, z, spec):
    return z * jump_direction(u, spec)


def compensator(u, spec):
    return spec.intensity * spec.mean_mark * jump_direction(u, spec)


def H_moment(u, spec, p=2):
    """Exact int ||H(u, z)||^p lambda(dz) for the built-in family."""
    d = np.sqrt(np.sum(jump_direction(u, spec) ** 2, axis=(-3, -2, -1)))
    return spec.intensity * spec.mark_moment(p, absolute=True) * d**p


# ---------------------------------------------------------------------------
# per-step draws
# ---------------------------------------------------------------------------


@dataclass
class NoiseDraw:
    """Realised noise over one step [t, t + dt]."""

    wiener_increment: np.ndarray
    jump_events: list = field(default_factory=list)

    @property
    def mark_sum(self):
        return float(sum(z for _, z in self.jump_events))


def draw_step(dt, wiener, jumps, rng, domain):
    dW = sample_wiener(dt, wiener, rng) if wiener is not None else np.zeros((2,) + domain.modal_shape)
    events = sample_jumps(dt, jumps, rng) if jumps is not None else []
    return NoiseDraw(dW, events)


@dataclass
class PathNoise:
    """All increments for one path, drawn up front.

    ``mark_sums[i]`` is the sum of marks of the jumps in step ``i``; because
    H is linear in the mark this is all the stepper needs.  ``mark_sq_sums``
    feeds the jump quadratic-variation channel.
    """

    dW: np.ndarray
    jump_counts: np.ndarray
    mark_sums: np.ndarray
    mark_sq_sums: np.ndarray

    @property
    def n_steps(self):
        return self.jump_counts.shape[0]

    def coarsen(self, factor, domain):
        """Noise for a level with ``factor``-times larger step and fewer modes."""
        n = self.n_steps
        if n % factor:
            raise ContractError(f"{n} steps not divisible by {factor}")
        m1, m2 = domain.modes_x1, domain.modes_x2
        if m1 > self.dW.shape[-2] or m2 > self.dW.shape[-1]:
            raise ContractError("coarse level has more modes than the fine noise")
        dW = self.dW[..., :m1, :m2].reshape((n // factor, factor) + self.dW.shape[1:2] + (m1, m2))
        return PathNoise(
            dW.sum(axis=1),
            self.jump_counts.reshape(-1, factor).sum(axis=1),
            self.mark_sums.reshape(-1, factor).sum(axis=1),
            self.mark_sq_sums.reshape(-1, factor).sum(axis=1),
        )


def draw_path_noise(n_steps, dt, wiener, jumps, rng, domain):
    """Draw a full path of increments: Wiener block, then counts, then marks."""
    if not dt > 0:
        raise ContractError("dt must be > 0")
    shape = (n_steps, 2) + domain.modal_shape
    if wiener is not None:
        dW = np.sqrt(wiener.q * dt) * rng.standard_normal(shape)
    else:
        dW = np.zeros(shape)
    if jumps is not None and jumps.intensity > 0:
        counts = rng.poisson(jumps.intensity * dt, size=n_steps)
        marks = jumps.sample_marks(int(counts.sum()), rng)
        owner = np.repeat(np.arange(n_steps), counts)
        sums = np.bincount(owner, weights=marks, minlength=n_steps)
        sq_sums = np.bincount(owner, weights=marks * marks, minlength=n_steps)
    else:
        counts = np.zeros(n_steps, dtype=np.int64)
        sums = np.zeros(n_steps)
        sq_sums = np.zeros(n_steps)
    return PathNoise(dW, counts, sums, sq_sums)


# ---------------------------------------------------------------------------
# hypothesis checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Diffusion and jump parts together; either may be None (switched off)."""

    wiener: WienerSpec = None
    jumps: JumpSpec = None

    @property
    def is_off(self):
        w_off = self.wiener is None or (self.wiener.trace == 0 or
                                        (self.wiener.sigma_add == 0 and self.wiener.sigma_mult == 0))
        j_off = self.jumps is None or self.jumps.intensity == 0 or (
            self.jumps.amp_add == 0 and self.jumps.amp_mult == 0)
        return w_off and j_off

    @property
    def K(self):
        return (self.wiener.K if self.wiener else 0.0) + (self.jumps.K if self.jumps else 0.0)

    @property
    def L(self):
        return (self.wiener.L if self.wiener else 0.0) + (self.jumps.L if self.jumps else 0.0)

    def moment_constant(self, p):
        return self.jumps.moment_constant(p) if self.jumps else 0.0

    @property
    def additive(self):
        """No state dependence in either coefficient."""
        return (self.wiener is None or self.wiener.sigma_mult == 0) and (
            self.jumps is None or self.jumps.amp_mult == 0)

    def restrict(self, domain):
        return NoiseModel(self.wiener.restrict(domain) if self.wiener else None,
                          self.jumps.restrict(domain) if self.jumps else None)

    def constants(self):
        out = {"K": self.K, "L": self.L}
        if self.wiener is not None:
            out.update(trace_Q=self.wiener.trace, K_sigma=self.wiener.K, L_sigma=self.wiener.L)
        if self.jumps is not None:
            out.update(K_H=self.jumps.K, L_H=self.jumps.L, M_4=self.jumps.moment_constant(4))
        return out


def hypothesis_checks(noise, domain, samples, seed, p=4, tol=1e-12):
    """Check growth, Lipschitz and p-th moment bounds on random states."""
    rng = np.random.default_rng(seed)
    u = random_modal(rng, domain, samples, smoothness=0.0, scale=3.0)
    v = random_modal(rng, domain, samples, smoothness=0.0, scale=3.0)
    nu2 = sq_norm(u, "L2", domain, vector=True)
    nd2 = sq_norm(u - v, "L2", domain, vector=True)
    growth = np.zeros(samples)
    lip = np.zeros(samples)
    if noise.wiener is not None:
        growth += sigma_lq_sq(u, noise.wiener)
        diff = apply_sigma(0.0, u, 1.0, noise.wiener) - apply_sigma(0.0, v, 1.0, noise.wiener)
        lip += np.sum(noise.wiener.q * diff**2, axis=(-3, -2, -1))
    pth = np.zeros(samples)
    if noise.jumps is not None:
        growth += H_moment(u, noise.jumps, 2)
        d = jump_direction(u, noise.jumps) - jump_direction(v, noise.jumps)
        lip += noise.jumps.intensity * noise.jumps.mark_moment(2) * np.sum(d**2, axis=(-3, -2, -1))
        pth = H_moment(u, noise.jumps, p)
    K, L, M = noise.K, noise.L, noise.moment_constant(p)
    out = []
    for i in range(samples):
        out.append(OperatorReport.make("growth", growth[i], K * (1 + nu2[i]), tol * (1 + growth[i])))
        out.append(OperatorReport.make("lipschitz", lip[i], L * nd2[i], tol * (1 + lip[i])))
        out.append(OperatorReport.make(f"moment_p{p}", pth[i], M * (1 + nu2[i] ** (p / 2)),
                                       tol * (1 + pth[i])))
    return out


def default_noise(domain, q0=0.05, decay=1.5, c0=1.0, c1=0.1, intensity=2.0,
                  marks=("uniform", -1.0, 1.0), c2=0.2, c3=0.05):
    """The package's reference noise configuration (state-dependent, zero-mean marks)."""
    psi = np.zeros((2,) + domain.modal_shape)
    psi[0, 0, 0] = 1.0
    return NoiseModel(
        WienerSpec.power_law(domain, q0, decay, c0, c1),
        JumpSpec(intensity, marks, c2, c3, psi),
    )


__all__ = [
    "DomainSpec",
    "JumpSpec",
    "NoiseDraw",
    "NoiseModel",
    "PathNoise",
    "WienerSpec",
    "apply_H",
    "apply_sigma",
    "compensator",
    "default_noise",
    "draw_path_noise",
    "draw_step",
    "H_moment",
    "hypothesis_checks",
    "path_rng",
    "sample_jumps",
    "sample_wiener",
    "sigma_lq_sq",
]
