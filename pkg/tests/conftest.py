import numpy as np
import pytest

import chartbeam as cb
from chartbeam.channel import Rectangle


@pytest.fixture(scope="session")
def small_dataset():
    """80-UE two-BS scene, small enough for fast unit tests."""
    scene = cb.SceneConfig(
        bs_positions=((0.0, 10.0, 8.0), (35.0, 10.0, 8.0)),
        bs_orientations=(0.0, np.pi),
        ue_area=Rectangle(8.0, 28.0, 2.0, 18.0),
        n_ue=80,
        n_scatterers=3,
        scatterer_area=Rectangle(-5.0, 40.0, -8.0, 28.0),
        rng_seed=1234,
    )
    array = cb.ArrayConfig(4, 4)
    ul = cb.CarrierConfig(3.5e9, 20e6, 4)
    dl = cb.CarrierConfig(28e9, 20e6, 4)
    return cb.build_dataset(scene, array, ul, dl, 0.8)


def procrustes_residual(reference, embedding):
    """RMS error after the optimal rigid alignment (rotation/reflection plus
    translation) of embedding onto reference."""
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(embedding, dtype=np.float64)
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    u, _, vt = np.linalg.svd(b.T @ a)
    aligned = b @ (u @ vt)
    return float(np.sqrt(np.mean(np.sum((aligned - a) ** 2, axis=1))))
