"""Rectangular basin, Dirichlet sine basis, modal/nodal transforms and norms.

Layout conventions used everywhere in the package:

* scalar modal field   ``(..., modes_x1, modes_x2)``
* vector modal field   ``(..., 2, modes_x1, modes_x2)``
* scalar nodal field   ``(..., grid_x1 + 1, grid_x2 + 1)``
* vector nodal field   ``(..., 2, grid_x1 + 1, grid_x2 + 1)``

``grid_x1``/``grid_x2`` count grid *intervals*; nodes include both walls.
Leading ``...`` axes are batch axes (ensemble members, samples).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class DimensionError(ValueError):
    """Array shape does not match the domain."""


class ContractError(ValueError):
    """Precondition of an operation violated."""


@dataclass(frozen=True)
class DomainSpec:
    length_x1: float = 1.0
    length_x2: float = 1.0
    modes_x1: int = 8
    modes_x2: int = 8
    grid_x1: int = 17
    grid_x2: int = 17

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self):
        out = []
        for name in ("length_x1", "length_x2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                out.append(f"{name} must be > 0")
        for name in ("modes_x1", "modes_x2", "grid_x1", "grid_x2"):
            v = getattr(self, name)
            if int(v) != v or v <= 0:
                out.append(f"{name} must be a positive integer")
        if not out:
            if self.grid_x1 < 2 * self.modes_x1 + 1:
                out.append("grid_x1 >= 2*modes_x1+1 (dealiasing)")
            if self.grid_x2 < 2 * self.modes_x2 + 1:
                out.append("grid_x2 >= 2*modes_x2+1 (dealiasing)")
        return out

    @classmethod
    def square(cls, modes, length=1.0, grid=None):
        grid = 2 * modes + 1 if grid is None else grid
        return cls(length, length, modes, modes, grid, grid)

    # -- geometry ---------------------------------------------------------

    @property
    def modal_shape(self):
        return (self.modes_x1, self.modes_x2)

    @property
    def nodal_shape(self):
        return (self.grid_x1 + 1, self.grid_x2 + 1)

    @cached_property
    def x1(self):
        return _frozen(np.linspace(0.0, self.length_x1, self.grid_x1 + 1))

    @cached_property
    def x2(self):
        return _frozen(np.linspace(0.0, self.length_x2, self.grid_x2 + 1))

    @property
    def spacing(self):
        return self.length_x1 / self.grid_x1, self.length_x2 / self.grid_x2

    @cached_property
    def weights(self):
        """Trapezoid weights on the node grid."""
        h1, h2 = self.spacing
        w1 = np.full(self.grid_x1 + 1, h1)
        w1[[0, -1]] *= 0.5
        w2 = np.full(self.grid_x2 + 1, h2)
        w2[[0, -1]] *= 0.5
        return _frozen(np.outer(w1, w2))

    # -- basis tables -----------------------------------------------------

    @cached_property
    def wavenumbers(self):
        k1 = np.arange(1, self.modes_x1 + 1) * np.pi / self.length_x1
        k2 = np.arange(1, self.modes_x2 + 1) * np.pi / self.length_x2
        return _frozen(k1), _frozen(k2)

    @cached_property
    def eigenvalues(self):
        """lambda_jk = pi^2 (j^2/L1^2 + k^2/L2^2), shape modal_shape."""
        k1, k2 = self.wavenumbers
        return _frozen(k1[:, None] ** 2 + k2[None, :] ** 2)

    @property
    def lambda_min(self):
        return float(self.eigenvalues[0, 0])

    @cached_property
    def _tables(self):
        k1, k2 = self.wavenumbers
        c1 = np.sqrt(2.0 / self.length_x1)
        c2 = np.sqrt(2.0 / self.length_x2)
        a1 = np.outer(self.x1, k1)
        a2 = np.outer(self.x2, k2)
        s1 = c1 * np.sin(a1)
        s2 = c2 * np.sin(a2)
        # exact zeros on the walls
        s1[[0, -1]] = 0.0
        s2[[0, -1]] = 0.0
        d1 = c1 * k1 * np.cos(a1)
        d2 = c2 * k2 * np.cos(a2)
        return tuple(_frozen(t) for t in (s1, s2, d1, d2))

    @property
    def sine_x1(self):
        return self._tables[0]

    @property
    def sine_x2(self):
        return self._tables[1]

    @property
    def dsine_x1(self):
        return self._tables[2]

    @property
    def dsine_x2(self):
        return self._tables[3]


def _frozen(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# point evaluation and transforms
# ---------------------------------------------------------------------------


def basis_eval(domain, j, k, x):
    """Value of phi_jk at the point ``x = (x1, x2)``.

    phi_jk = 2/sqrt(L1 L2) sin(j pi x1/L1) sin(k pi x2/L2).
    """
    if not (1 <= j <= domain.modes_x1 and 1 <= k <= domain.modes_x2):
        raise IndexError(f"mode ({j}, {k}) outside 1..{domain.modes_x1} x 1..{domain.modes_x2}")
    x1, x2 = x
    tol = 1e-12
    if not (-tol <= x1 <= domain.length_x1 + tol and -tol <= x2 <= domain.length_x2 + tol):
        raise ContractError(f"point {x} outside the closed rectangle")
    if x1 in (0.0, domain.length_x1) or x2 in (0.0, domain.length_x2):
        return 0.0
    amp = 2.0 / np.sqrt(domain.length_x1 * domain.length_x2)
    return float(
        amp
        * np.sin(j * np.pi * x1 / domain.length_x1)
        * np.sin(k * np.pi * x2 / domain.length_x2)
    )


def _check_trailing(a, shape, what):
    if a.shape[-2:] != shape:
        raise DimensionError(f"{what}: trailing shape {a.shape[-2:]} != {shape}")


def synthesize(c, domain):
    """Nodal values of sum_jk c_jk phi_jk (works for scalar or vector, batched)."""
    c = np.asarray(c, dtype=float)
    _check_trailing(c, domain.modal_shape, "synthesize")
    return domain.sine_x1 @ c @ domain.sine_x2.T


def synthesize_dx1(c, domain):
    """Nodal values of d/dx1 of the modal field."""
    c = np.asarray(c, dtype=float)
    _check_trailing(c, domain.modal_shape, "synthesize_dx1")
    return domain.dsine_x1 @ c @ domain.sine_x2.T


def synthesize_dx2(c, domain):
    c = np.asarray(c, dtype=float)
    _check_trailing(c, domain.modal_shape, "synthesize_dx2")
    return domain.sine_x1 @ c @ domain.dsine_x2.T


def project(f, domain):
    """Orthogonal projection onto the span: c_jk = quadrature of f * phi_jk."""
    f = np.asarray(f, dtype=float)
    _check_trailing(f, domain.nodal_shape, "project")
    h1, h2 = domain.spacing
    # walls carry no weight: the basis vanishes there
    return (h1 * h2) * (domain.sine_x1.T @ f @ domain.sine_x2)


def quad(f, domain):
    """Trapezoid integral over the basin of a nodal field (batched)."""
    f = np.asarray(f, dtype=float)
    _check_trailing(f, domain.nodal_shape, "quad")
    return np.sum(f * domain.weights, axis=(-2, -1))


def grad_nodal(f, domain):
    """Centered finite-difference gradient, one-sided on the walls."""
    f = np.asarray(f, dtype=float)
    _check_trailing(f, domain.nodal_shape, "grad_nodal")
    h1, h2 = domain.spacing
    g1 = np.gradient(f, h1, axis=-2)
    g2 = np.gradient(f, h2, axis=-1)
    return g1, g2


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

NORMS = ("L2", "L4", "H10", "Hminus1")


def sq_norm(x, which, domain, vector=False):
    """Squared norm (for L4: the square of the L4 norm)."""
    x = np.asarray(x, dtype=float)
    if which not in NORMS:
        raise ContractError(f"unknown norm {which!r}")
    tail = x.shape[-2:]
    modal = tail == domain.modal_shape
    nodal = tail == domain.nodal_shape
    if not (modal or nodal):
        raise DimensionError(f"shape {x.shape} is neither modal nor nodal")
    if vector and (x.ndim < 3 or x.shape[-3] != 2):
        raise DimensionError("vector field needs a component axis of length 2")
    comp_axes = (-3, -2, -1) if vector else (-2, -1)

    if which == "L4":
        if not nodal:
            raise ContractError("L4 norm needs a nodal field; synthesize first")
        mag2 = np.sum(x * x, axis=-3) if vector else x * x
        return np.sqrt(quad(mag2 * mag2, domain))
    if which == "L2":
        if modal:
            return np.sum(x * x, axis=comp_axes)
        s = quad(x * x, domain)
        return np.sum(s, axis=-1) if vector else s
    if not modal:
        raise ContractError(f"{which} norm needs modal coefficients")
    lam = domain.eigenvalues
    w = lam if which == "H10" else 1.0 / lam
    return np.sum(w * x * x, axis=comp_axes)


def norm(x, which, domain, vector=False):
    """L2, L4 (nodal), H10 or Hminus1 (modal) norm; batched over leading axes."""
    return np.sqrt(sq_norm(x, which, domain, vector=vector))


def poincare_constant(domain):
    """C_P with ||u||_L2 <= C_P ||u||_H10 on the span."""
    return float(1.0 / np.sqrt(domain.lambda_min))


def random_modal(rng, domain, size=(), vector=True, smoothness=1.0, scale=1.0):
    """Random coefficients with spectrum decaying like (lambda_min/lambda)^smoothness.

    ``size`` is the batch shape.  Used for property checks and test data.
    """
    size = (size,) if np.isscalar(size) else tuple(size)
    shape = size + ((2,) if vector else ()) + domain.modal_shape
    decay = (domain.lambda_min / domain.eigenvalues) ** (0.5 * smoothness)
    return scale * rng.standard_normal(shape) * decay
