"""Shared model fixtures for the test suite."""
import numpy as np
import pytest

import alloc_lab as al


REF_CORR = np.array([
    [1.0, 1.0 / 3.0, 2.0 / 3.0],
    [1.0 / 3.0, 1.0, 1.0 / 3.0],
    [2.0 / 3.0, 1.0 / 3.0, 1.0],
])

LOMAX_CORRS = {
    "m1": np.array([[1.0, 0.8, 0.5], [0.8, 1.0, 0.8], [0.5, 0.8, 1.0]]),
    "m2": np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]]),
    "m3": np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.0], [0.5, 0.0, 1.0]]),
    "m4": np.array([[1.0, -0.5, 0.5], [-0.5, 1.0, -0.5], [0.5, -0.5, 1.0]]),
}


@pytest.fixture(scope="session")
def t5_elliptical():
    """Trivariate t5 with the reference dispersion matrix."""
    return al.EllipticalModel(np.zeros(3), al.DispersionMatrix(REF_CORR),
                              al.StudentTGen(5.0))


@pytest.fixture(scope="session")
def t5_joint(t5_elliptical):
    return al.EllipticalJoint(t5_elliptical)


def lomax_t_model(corr):
    """Three Lomax margins coupled by a t5 copula."""
    margins = [al.Lomax(2.5, 5.0), al.Lomax(2.75, 5.0), al.Lomax(3.0, 5.0)]
    return al.MarginCopula(margins, al.StudentTCopula(5.0, corr))


@pytest.fixture(scope="session")
def m1_model():
    return lomax_t_model(LOMAX_CORRS["m1"])


@pytest.fixture(scope="session")
def m4_model():
    return lomax_t_model(LOMAX_CORRS["m4"])


def normal_joint(sigma, mu=None):
    sigma = np.asarray(sigma, dtype=float)
    mu = np.zeros(sigma.shape[0]) if mu is None else np.asarray(mu, dtype=float)
    return al.EllipticalJoint(
        al.EllipticalModel(mu, al.DispersionMatrix(sigma), al.NormalGen()))


def crossed_box_model():
    """Star-shaped but non-convex shape set: two crossed boxes around 0."""
    from alloc_lab.conditional import HomotheticModel

    boxes = [((-2.0, -1.0), (2.0, 1.0)), ((-1.0, -2.0), (1.0, 2.0))]
    return HomotheticModel(boxes, a=1.0 / (2.0 * np.sqrt(3.0)))
