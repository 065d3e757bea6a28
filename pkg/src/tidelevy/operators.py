"""Spatial operators of the tide model on the Galerkin span.

Linear parts (diffusion + Coriolis rotation) act mode by mode.  The
friction ``gamma |v + w0| (v + w0)``, the flux divergence and the pressure
pairing are evaluated on the node grid and projected back.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import (
    DomainSpec,
    grad_nodal,
    norm,
    poincare_constant,
    project,
    quad,
    random_modal,
    sq_norm,
    synthesize,
    synthesize_dx1,
    synthesize_dx2,
)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Physical coefficients and fields.

    ``depth`` is a nodal array.  ``background_flow`` maps ``t`` to a nodal
    vector field and ``forcing`` maps ``t`` to a modal vector field; either
    may be ``None`` for an identically zero field.

    Derived constants (``eps``, ``mu``, ``grad_h_max``, ``gamma``, ``C1``,
    ``C2``, ``C_P``) are fixed at construction.
    """

    domain: DomainSpec
    alpha: float
    beta: float = 0.0
    g: float = 0.0
    r: float = 0.0
    depth: np.ndarray = None
    background_flow: object = None
    forcing: object = None
    eps: float = field(init=False)
    mu: float = field(init=False)
    grad_h_max: float = field(init=False)
    gamma: np.ndarray = field(init=False, repr=False)
    grad_h: tuple = field(init=False, repr=False)

    def __post_init__(self):
        dom = self.domain
        problems = []
        if not self.alpha > 0:
            problems.append("alpha > 0")
        if self.g < 0:
            problems.append("g >= 0")
        if self.r < 0:
            problems.append("r >= 0")
        depth = self.depth
        if depth is None:
            depth = np.ones(dom.nodal_shape)
        depth = np.array(depth, dtype=float)
        if depth.shape != dom.nodal_shape:
            problems.append(f"depth shape {depth.shape} != {dom.nodal_shape}")
        elif not np.all(np.isfinite(depth)) or depth.min() <= 0:
            problems.append("depth.min > 0")
        if problems:
            raise ValueError("invalid ModelParams: " + "; ".join(problems))
        depth.setflags(write=False)
        g1, g2 = grad_nodal(depth, dom)
        gamma = self.r / depth
        gamma.setflags(write=False)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "eps", float(depth.min()))
        object.__setattr__(self, "mu", float(depth.max()))
        object.__setattr__(self, "grad_h", (g1, g2))
        object.__setattr__(self, "grad_h_max", float(np.sqrt(g1**2 + g2**2).max()))
        object.__setattr__(self, "gamma", gamma)

    @property
    def M(self):
        return self.grad_h_max

    @property
    def C_P(self):
        return poincare_constant(self.domain)

    @property
    def C1(self):
        # alpha + |beta| C_P^2 is the honest continuity constant on H10;
        # it reduces to alpha + |beta| whenever C_P <= 1
        return self.alpha + abs(self.beta) * max(1.0, self.C_P**2)

    @property
    def C2(self):
        return float(self.gamma.max())

    def w0(self, t):
        if self.background_flow is None:
            return None
        return np.asarray(self.background_flow(t), dtype=float)

    def f(self, t):
        if self.forcing is None:
            return None
        return np.asarray(self.forcing(t), dtype=float)

    def constants(self):
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "g": self.g,
            "r": self.r,
            "eps": self.eps,
            "mu": self.mu,
            "M": self.M,
            "r_over_eps": self.r / self.eps,
            "C1": self.C1,
            "C2": self.C2,
            "C_P": self.C_P,
        }

    def replace(self, **changes):
        kw = dict(
            domain=self.domain, alpha=self.alpha, beta=self.beta, g=self.g, r=self.r,
            depth=self.depth, background_flow=self.background_flow, forcing=self.forcing,
        )
        kw.update(changes)
        return ModelParams(**kw)


@dataclass(frozen=True)
class OperatorReport:
    name: str
    lhs: float
    rhs: float
    satisfied: bool
    margin: float
    tol: float = 0.0

    @classmethod
    def make(cls, name, lhs, rhs, tol=0.0):
        lhs = float(lhs)
        rhs = float(rhs)
        return cls(name, lhs, rhs, bool(lhs <= rhs + tol), rhs - lhs, tol)


# ---------------------------------------------------------------------------
# linear part
# ---------------------------------------------------------------------------


def apply_A(u, p):
    lam = p.domain.eigenvalues
    u = np.asarray(u, dtype=float)
    u1, u2 = u[..., 0, :, :], u[..., 1, :, :]
    out1 = p.alpha * lam * u1 - p.beta * u2
    out2 = p.beta * u1 + p.alpha * lam * u2
    return np.stack([out1, out2], axis=-3)


def bilinear_a(u, v, p):
    """a(u, v) with the full-gradient diffusion part."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lam = p.domain.eigenvalues
    diff = p.alpha * np.sum(lam * (u * v), axis=(-3, -2, -1))
    rot = np.sum(u[..., 0, :, :] * v[..., 1, :, :] - u[..., 1, :, :] * v[..., 0, :, :], axis=(-2, -1))
    return diff + p.beta * rot


def modal_inner(u, v):
    """L2 inner product of two vector modal fields."""
    return np.sum(np.asarray(u) * np.asarray(v), axis=(-3, -2, -1))


# ---------------------------------------------------------------------------
# friction
# ---------------------------------------------------------------------------


def friction_nodal(v, gamma):
    """Pointwise gamma |v| v for a nodal vector field ``(..., 2, n1, n2)``."""
    v = np.asarray(v, dtype=float)
    b1, b2 = kernels.friction(v[..., 0, :, :], v[..., 1, :, :], gamma)
    return np.stack([b1, b2], axis=-3)


def apply_B(u, t, p, nodal=False):
    """Projected friction B(u) = P[gamma |u + w0| (u + w0)].

    With ``nodal=True`` returns ``(modal, nodal_values)``.
    """
    v = synthesize(u, p.domain)
    w0 = p.w0(t)
    if w0 is not None:
        v = v + w0
    bn = friction_nodal(v, p.gamma)
    bm = project(bn, p.domain)
    return (bm, bn) if nodal else bm


# ---------------------------------------------------------------------------
# pressure and flux divergence
# ---------------------------------------------------------------------------


def pressure_gradient(zhat, p):
    """Modal vector G with G . v = -g (zhat, Div v) for every basis vector v."""
    dom = p.domain
    wz = np.asarray(zhat, dtype=float) * dom.weights
    g1 = dom.dsine_x1.T @ wz @ dom.sine_x2
    g2 = dom.sine_x1.T @ wz @ dom.dsine_x2
    return -p.g * np.stack([g1, g2], axis=-3)


def divergence(u, domain):
    """Nodal Div u from analytic basis derivatives."""
    u = np.asarray(u, dtype=float)
    return synthesize_dx1(u[..., 0, :, :], domain) + synthesize_dx2(u[..., 1, :, :], domain)


def divergence_flux(u, p):
    """Nodal Div(h u) = h Div u + grad h . u."""
    dom = p.domain
    uu = synthesize(u, dom)
    gh1, gh2 = p.grad_h
    return p.depth * divergence(u, dom) + gh1 * uu[..., 0, :, :] + gh2 * uu[..., 1, :, :]


# ---------------------------------------------------------------------------
# inequality suites
# ---------------------------------------------------------------------------


def random_depth(rng, domain, low=0.5, high=2.0, modes=3):
    """Smooth positive depth field with values inside [low, high]."""
    x1 = domain.x1[:, None] / domain.length_x1
    x2 = domain.x2[None, :] / domain.length_x2
    s = np.zeros(domain.nodal_shape)
    for _ in range(modes):
        a, b = rng.uniform(0.5, 3.0, size=2)
        ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
        s += rng.standard_normal() * np.cos(a * np.pi * x1 + ph1) * np.cos(b * np.pi * x2 + ph2)
    s = (s - s.min()) / (np.ptp(s) + 1e-300)
    return low + (high - low) * s


def random_background(rng, domain, amplitude=1.0):
    """Smooth nodal vector field, nonzero on the walls."""
    x1 = domain.x1[:, None] / domain.length_x1
    x2 = domain.x2[None, :] / domain.length_x2
    out = np.empty((2,) + domain.nodal_shape)
    for c in range(2):
        a0, a1, a2 = amplitude * rng.standard_normal(3)
        out[c] = a0 + a1 * np.cos(np.pi * x1 + x2) + a2 * np.sin(2 * np.pi * x2 - x1)
    return out


def monotonicity_pairing(u, v, t, p):
    """Quadrature of <B(u) - B(v), u - v>; batched over leading axes."""
    dom = p.domain
    _, bu = apply_B(u, t, p, nodal=True)
    _, bv = apply_B(v, t, p, nodal=True)
    diff = synthesize(np.asarray(u) - np.asarray(v), dom)
    return np.sum(quad((bu - bv) * diff, dom), axis=-1)


def monotonicity_checks(samples, seed, domain=None, chunk=500, tol=1e-9):
    """<B(u)-B(v), u-v> >= -tol on random pairs with random gamma and w0.

    Every chunk draws a fresh depth and background flow.
    """
    domain = domain or DomainSpec.square(16)
    rng = np.random.default_rng(seed)
    reports = []
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        depth = random_depth(rng, domain)
        w0 = random_background(rng, domain, amplitude=rng.uniform(0.1, 2.0))
        p = ModelParams(domain, alpha=1.0, r=rng.uniform(0.1, 5.0), depth=depth,
                        background_flow=lambda t, w0=w0: w0)
        u = random_modal(rng, domain, n, scale=rng.uniform(0.1, 3.0))
        v = random_modal(rng, domain, n, scale=rng.uniform(0.1, 3.0))
        # some pairs close together, where cancellation is worst
        v[: n // 4] = u[: n // 4] + 1e-3 * v[: n // 4]
        vals = monotonicity_pairing(u, v, 0.0, p)
        reports.extend(OperatorReport.make("monotonicity", -x, 0.0, tol) for x in vals)
        done += n
    return reports


def bilinear_checks(samples, seed, p, tol=1e-10):
    """Coercivity identity and continuity bound of a(.,.) on random pairs."""
    rng = np.random.default_rng(seed)
    dom = p.domain
    u = random_modal(rng, dom, samples, smoothness=0.5)
    v = random_modal(rng, dom, samples, smoothness=0.5)
    h10u = sq_norm(u, "H10", dom, vector=True)
    h10v = sq_norm(v, "H10", dom, vector=True)
    auu = bilinear_a(u, u, p)
    auv = bilinear_a(u, v, p)
    reports = []
    for i in range(samples):
        reports.append(OperatorReport.make(
            "coercivity", abs(auu[i] - p.alpha * h10u[i]), tol * h10u[i]))
        reports.append(OperatorReport.make(
            "continuity", abs(auv[i]), p.C1 * np.sqrt(h10u[i] * h10v[i])))
    return reports


def b_bound_checks(samples, seed, p=None, tol=1e-12):
    """Growth ||B(v)|| <= C2 ||v+w0||_L4^2 and the Lipschitz-type bound on B(u) - B(v).

    Norms of B are taken on the node values before projection.
    """
    rng = np.random.default_rng(seed)
    if p is None:
        dom = DomainSpec.square(8)
        w0 = random_background(rng, dom, 0.5)
        p = ModelParams(dom, alpha=1.0, r=1.0, depth=random_depth(rng, dom),
                        background_flow=lambda t, w0=w0: w0)
    dom = p.domain
    u = random_modal(rng, dom, samples, scale=2.0)
    v = random_modal(rng, dom, samples, scale=2.0)
    v[0] = u[0]
    w0 = p.w0(0.0)
    su = synthesize(u, dom)
    sv = synthesize(v, dom)
    au = su if w0 is None else su + w0
    av = sv if w0 is None else sv + w0
    bu = friction_nodal(au, p.gamma)
    bv = friction_nodal(av, p.gamma)
    C2 = p.C2
    l4u = norm(au, "L4", dom, vector=True)
    l4v = norm(av, "L4", dom, vector=True)
    l4d = norm(su - sv, "L4", dom, vector=True)
    nb = norm(bu, "L2", dom, vector=True)
    nbd = norm(bu - bv, "L2", dom, vector=True)
    reports = []
    for i in range(samples):
        reports.append(OperatorReport.make("b_growth", nb[i], C2 * l4u[i] ** 2, tol * (1 + nb[i])))
        reports.append(OperatorReport.make(
            "b_lipschitz", nbd[i], C2 * (l4u[i] + l4v[i]) * l4d[i], tol * (1 + nbd[i])))
    return reports


def ladyzhenskaya_checks(samples, seed, domain=None, tol=1e-8):
    """||phi||_L4^4 <= 2 ||phi||_L2^2 ||grad phi||_L2^2 for random scalar trig polynomials."""
    domain = domain or DomainSpec.square(8)
    rng = np.random.default_rng(seed)
    c = random_modal(rng, domain, samples, vector=False, smoothness=rng.uniform(0.0, 2.0))
    # a few sparse ones: single modes and pairs are the extremal cases
    for i in range(min(samples, 20)):
        c[i] = 0.0
        c[i, rng.integers(domain.modes_x1), rng.integers(domain.modes_x2)] = 1.0
    f = synthesize(c, domain)
    l4 = sq_norm(f, "L4", domain) ** 2
    l2 = sq_norm(c, "L2", domain)
    h1 = sq_norm(c, "H10", domain)
    return [OperatorReport.make("ladyzhenskaya", l4[i], 2 * l2[i] * h1[i], tol) for i in range(samples)]


def pressure_hminus1(zhat, p):
    """||G(zhat)||_H^-1 for the modal pressure vector G."""
    G = pressure_gradient(zhat, p)
    return np.sqrt(np.sum(G * G / p.domain.eigenvalues, axis=(-3, -2, -1)))


def pressure_bound_checks(samples, seed, p, rough=False, rel_tol=0.0):
    """||G(zhat)||_H^-1 <= g ||zhat||_L2 on random elevations.

    Smooth samples are low-order trigonometric fields that do not vanish on
    the walls; ``rough=True`` draws independent node values instead.
    """
    rng = np.random.default_rng(seed)
    dom = p.domain
    if rough:
        z = rng.standard_normal((samples,) + dom.nodal_shape)
    else:
        z = np.stack([random_background(rng, dom)[0] for _ in range(samples)])
    lhs = pressure_hminus1(z, p)
    rhs = p.g * np.sqrt(quad(z * z, dom))
    return [OperatorReport.make("pressure_hminus1", lhs[i], rhs[i], rel_tol * rhs[i]) for i in range(samples)]
