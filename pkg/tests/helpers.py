"""Shared test data: the three-compartment example and random system factories."""

import numpy as np

from sensorselect.sysmodel import LtiSystem

COMP_A = np.array(
    [
        [-0.5, 0.25, 0.2],
        [0.0, -0.9, 0.1],
        [0.0, -0.9, 0.1],
    ]
)
COMP_C1 = np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 0]])
COMP_C2 = np.array([[0.0, 0, 0], [0, 1, 0], [0, 0, 1]])
# det(sI - A) = s (s + 0.5) (s + 0.8), factored by hand
COMP_SPECTRAL_RADIUS = 0.8


def compartmental_system():
    return LtiSystem(A=COMP_A, B=np.ones((3, 1)), C=np.eye(3), output_names=("x1", "x2", "x3"))


def random_stable(rng, n, radius=None):
    A = rng.standard_normal((n, n))
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    target = rng.uniform(0.3, 0.95) if radius is None else radius
    return A * (target / rho)


def random_system(rng, n, m, p, radius=None, with_d=False, b_scale=1.0):
    A = random_stable(rng, n, radius)
    B = b_scale * rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m)) if with_d else None
    return LtiSystem(A=A, B=B, C=C, D=D)
