"""Hot inner loops, each with a numba version and a pure-numpy version.

The public names (``friction``, ``rotation_solve``, ``cell_diameters``,
``partition_modulus``) dispatch to numba unless ``TIDELEVY_NUMBA=0``.
Both variants are importable directly (``*_np`` / ``*_nb``) so the test
suite and the benchmark can compare them.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, njit

# ---------------------------------------------------------------------------
# pointwise quadratic friction  gamma * |v| * v
# ---------------------------------------------------------------------------


def _friction_np(v1, v2, gamma):
    speed = np.sqrt(v1 * v1 + v2 * v2)
    gs = gamma * speed
    return gs * v1, gs * v2


@njit
def _friction_nb_flat(v1, v2, gamma):
    nb, npts = v1.shape
    o1 = np.empty_like(v1)
    o2 = np.empty_like(v2)
    for i in range(nb):
        for k in range(npts):
            a = v1[i, k]
            b = v2[i, k]
            gs = gamma[k] * np.sqrt(a * a + b * b)
            o1[i, k] = gs * a
            o2[i, k] = gs * b
    return o1, o2


def _friction_nb(v1, v2, gamma):
    v1, v2 = np.broadcast_arrays(np.asarray(v1, float), np.asarray(v2, float))
    shape = v1.shape
    gshape = np.shape(gamma)
    npts = int(np.prod(gshape)) if gshape else 1
    g = np.broadcast_to(np.asarray(gamma, float), shape[len(shape) - len(gshape):])
    flat1 = np.ascontiguousarray(v1).reshape(-1, npts)
    flat2 = np.ascontiguousarray(v2).reshape(-1, npts)
    o1, o2 = _friction_nb_flat(flat1, flat2, np.ascontiguousarray(g).reshape(npts))
    return o1.reshape(shape), o2.reshape(shape)


# ---------------------------------------------------------------------------
# per-mode 2x2 solve  [[1+a, -b], [b, 1+a]] x = r
# ---------------------------------------------------------------------------


def _rotation_solve_np(r1, r2, a, b):
    d = 1.0 + a
    det = d * d + b * b
    return (d * r1 + b * r2) / det, (d * r2 - b * r1) / det


@njit
def _rotation_solve_nb_flat(r1, r2, a, b):
    nb, nm = r1.shape
    x1 = np.empty_like(r1)
    x2 = np.empty_like(r2)
    for k in range(nm):
        d = 1.0 + a[k]
        det = d * d + b * b
        for i in range(nb):
            x1[i, k] = (d * r1[i, k] + b * r2[i, k]) / det
            x2[i, k] = (d * r2[i, k] - b * r1[i, k]) / det
    return x1, x2


def _rotation_solve_nb(r1, r2, a, b):
    a = np.asarray(a, float)
    shape = np.broadcast_shapes(np.shape(r1), np.shape(r2))
    nm = a.size
    flat1 = np.ascontiguousarray(np.broadcast_to(r1, shape)).reshape(-1, nm)
    flat2 = np.ascontiguousarray(np.broadcast_to(r2, shape)).reshape(-1, nm)
    x1, x2 = _rotation_solve_nb_flat(flat1, flat2, a.reshape(nm), float(b))
    return x1.reshape(shape), x2.reshape(shape)


# ---------------------------------------------------------------------------
# cadlag modulus: cell diameters and partition dynamic programme
# ---------------------------------------------------------------------------


def _cell_diameters_np(dist):
    # diam[a, b] = max dist[i, j] over a <= i, j <= b
    n = dist.shape[0]
    diam = np.zeros((n, n))
    for length in range(1, n):
        a = np.arange(n - length)
        b = a + length
        diam[a, b] = np.maximum(
            np.maximum(diam[a + 1, b], diam[a, b - 1]), dist[a, b]
        )
    return diam


@njit
def _cell_diameters_nb(dist):
    n = dist.shape[0]
    diam = np.zeros((n, n))
    for length in range(1, n):
        for a in range(n - length):
            b = a + length
            v = diam[a + 1, b]
            if diam[a, b - 1] > v:
                v = diam[a, b - 1]
            if dist[a, b] > v:
                v = dist[a, b]
            diam[a, b] = v
    return diam


def _partition_modulus_np(diam, times, delta):
    # best[b]: optimal max-oscillation over partitions of [t_0, t_b]
    # whose cells are [t_a, t_b) with t_b - t_a >= delta
    n = times.shape[0]
    best = np.full(n, np.inf)
    best[0] = 0.0
    for b in range(1, n):
        a = np.nonzero(times[b] - times[:b] >= delta)[0]
        if a.size == 0:
            continue
        cand = np.maximum(best[a], diam[a, b - 1])
        best[b] = cand.min()
    return best[n - 1]


@njit
def _partition_modulus_nb(diam, times, delta):
    n = times.shape[0]
    best = np.full(n, np.inf)
    best[0] = 0.0
    for b in range(1, n):
        v = np.inf
        for a in range(b):
            if times[b] - times[a] < delta:
                break
            c = best[a]
            if diam[a, b - 1] > c:
                c = diam[a, b - 1]
            if c < v:
                v = c
        best[b] = v
    return best[n - 1]


if NUMBA_ENABLED:
    friction = _friction_nb
    rotation_solve = _rotation_solve_nb
    cell_diameters = _cell_diameters_nb
    partition_modulus = _partition_modulus_nb
else:
    friction = _friction_np
    rotation_solve = _rotation_solve_np
    cell_diameters = _cell_diameters_np
    partition_modulus = _partition_modulus_np

BACKEND = "numba" if NUMBA_ENABLED else "numpy"
