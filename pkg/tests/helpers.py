"""Independent evaluators used as oracles by the tests."""

import numpy as np


def eval_poly(fr, vec, J, point):
    """Value at ``point`` of the dx^J coefficient stored in a frame-layout vector."""
    j = fr.J_index[tuple(J)]
    block = np.asarray(vec[j * fr.M : (j + 1) * fr.M], dtype=float)
    point = np.asarray(point, dtype=float)
    return sum(c * np.prod(point ** np.array(e)) for c, e in zip(block, fr.monos) if c != 0)


def simplex_points(n, count, rng):
    """Uniform random points of the standard simplex in R^n."""
    w = rng.dirichlet(np.ones(n + 1), size=count)
    return w[:, 1:]


def bch_matrix_product(hat, vee, a, b):
    """log(exp(hat a) exp(hat b)) through scipy matrix functions."""
    from scipy.linalg import expm, logm

    return vee(np.real(logm(expm(hat(a)) @ expm(hat(b)))))


def so3_hat(a):
    x, y, z = a
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def heis_hat(a):
    # e1 -> E12, e2 -> E23, e3 -> E13, so [e1, e2] = e3
    m = np.zeros((3, 3))
    m[0, 1], m[1, 2], m[0, 2] = a
    return m


def heis_vee(m):
    return np.array([m[0, 1], m[1, 2], m[0, 2]])
