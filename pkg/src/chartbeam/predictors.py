"""Beam and precoder predictors behind uniform fit/predict interfaces.

Backends: trained networks (RFF or MLP), 1-nearest-neighbour baselines in
pseudo-location space, and the codebook-classifier route that turns any beam
predictor into a precoder predictor by looking the beam up in the codebook.

Tie rules are deterministic everywhere: argmax over probabilities and argmin
over distances both resolve to the lowest index, and duplicate reference
points keep their lowest-index entry.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.neighbors import BallTree

from . import neural
from .validation import as_real_matrix


def _standardize_fit(z):
    offset = z.mean(axis=0)
    scale = z.std(axis=0)
    scale = np.where(scale < 1e-12, 1.0, scale)
    return offset, scale


class _NetworkPredictorBase(BaseEstimator):
    def _fit_net(self, z, targets, head, output_size):
        z = as_real_matrix(z, "z")
        net = neural.init_network(
            self.input_kind,
            head,
            z.shape[1],
            self.n_frequencies,
            self.hidden_size,
            output_size,
            sigma=self.sigma,
            seed=self.seed,
        )
        if self.standardize:
            net.input_offset, net.input_scale = _standardize_fit(z)
        config = neural.TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            rng_seed=self.seed,
        )
        self.net_, self.loss_history_ = neural.train(net, z, targets, config)
        return self


class BeamClassifier(_NetworkPredictorBase, ClassifierMixin):
    """Beam-index classifier on pseudo-locations (RFF or MLP variant).

    Outputs a probability vector over the codebook; ``predict`` takes its
    argmax. Inputs are standardized per dimension by default so the RFF
    frequency scale ``sigma`` has a scene-independent meaning.
    """

    def __init__(self, input_kind="rff", n_frequencies=200, hidden_size=64, n_beams=None,
                 sigma=1.0, epochs=150, batch_size=64, learning_rate=1e-3, seed=0,
                 standardize=True):
        self.input_kind = input_kind
        self.n_frequencies = n_frequencies
        self.hidden_size = hidden_size
        self.n_beams = n_beams
        self.sigma = sigma
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.standardize = standardize

    def fit(self, z, y):
        y = np.asarray(y, dtype=np.int64).ravel()
        n_beams = self.n_beams if self.n_beams is not None else int(y.max()) + 1
        if y.min() < 0 or y.max() >= n_beams:
            raise ValueError(f"labels must lie in [0, {n_beams})")
        self.classes_ = np.arange(n_beams)
        return self._fit_net(z, y, "classification", n_beams)

    def predict_proba(self, z):
        return neural.forward_batch(self.net_, as_real_matrix(z, "z"))

    def predict(self, z):
        return np.argmax(self.predict_proba(z), axis=1)


class PrecoderRegressor(_NetworkPredictorBase, RegressorMixin):
    """Unconstrained precoder regressor: maps a pseudo-location to a
    unit-norm complex precoder, trained on the negated normalized
    correlation with the central-subcarrier downlink channel."""

    def __init__(self, input_kind="rff", n_frequencies=200, hidden_size=64,
                 sigma=1.0, epochs=150, batch_size=64, learning_rate=1e-3, seed=0,
                 standardize=True):
        self.input_kind = input_kind
        self.n_frequencies = n_frequencies
        self.hidden_size = hidden_size
        self.sigma = sigma
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.standardize = standardize

    def fit(self, z, channels):
        g = np.asarray(channels, dtype=np.complex128)
        if g.ndim != 2:
            raise ValueError("channels must be (n_samples, n_antennas) complex")
        return self._fit_net(z, g, "regression", g.shape[1])

    def predict(self, z):
        return neural.forward_batch(self.net_, as_real_matrix(z, "z"))


def _dedupe_lowest_index(points):
    """Indices of first occurrences, in ascending order."""
    _, first = np.unique(points, axis=0, return_index=True)
    return np.sort(first)


class _Nearest1Base(BaseEstimator):
    """Shared 1-NN machinery: brute-force linear scan by default, with an
    optional ball-tree mode that must return the same neighbours (verified
    by tests on tie-free queries)."""

    def _fit_refs(self, z):
        z = as_real_matrix(z, "reference_z")
        if z.shape[0] == 0:
            raise ValueError("reference set is empty")
        keep = _dedupe_lowest_index(z)
        self._keep_ = keep
        self.reference_z_ = z[keep]
        if self.algorithm == "ball_tree":
            self._tree_ = BallTree(self.reference_z_)
        elif self.algorithm != "brute":
            raise ValueError(f"algorithm must be 'brute' or 'ball_tree', got {self.algorithm!r}")
        return keep

    def _nearest(self, z):
        z = as_real_matrix(z, "z")
        if self.algorithm == "ball_tree":
            return self._tree_.query(z, k=1, return_distance=False)[:, 0]
        # linear scan; argmin resolves ties to the lowest reference index
        d2 = (
            np.sum(z**2, axis=1)[:, None]
            - 2.0 * z @ self.reference_z_.T
            + np.sum(self.reference_z_**2, axis=1)[None, :]
        )
        return np.argmin(d2, axis=1)


class NearestBeamPredictor(_Nearest1Base, ClassifierMixin):
    """1-NN baseline: the predicted beam is the stored best-beam label of
    the nearest reference pseudo-location."""

    def __init__(self, algorithm="brute"):
        self.algorithm = algorithm

    def fit(self, reference_z, labels):
        labels = np.asarray(labels, dtype=np.int64).ravel()
        if len(labels) != np.asarray(reference_z).shape[0]:
            raise ValueError("reference_z and labels lengths differ")
        keep = self._fit_refs(reference_z)
        self.labels_ = labels[keep]
        return self

    def predict(self, z):
        return self.labels_[self._nearest(z)]


class NearestPrecoderPredictor(_Nearest1Base):
    """1-NN baseline: the predicted precoder is the unit-normalized
    central-subcarrier downlink channel of the nearest reference point."""

    def __init__(self, algorithm="brute"):
        self.algorithm = algorithm

    def fit(self, reference_z, channels):
        g = np.asarray(channels, dtype=np.complex128)
        if g.ndim != 2 or g.shape[0] != np.asarray(reference_z).shape[0]:
            raise ValueError("channels must be (n_references, n_antennas)")
        norms = np.linalg.norm(g, axis=1)
        if np.any(norms == 0.0):
            raise ValueError("reference channels must be non-zero")
        keep = self._fit_refs(reference_z)
        self.precoders_ = (g / norms[:, None])[keep]
        return self

    def predict(self, z):
        return self.precoders_[self._nearest(z)]


class CodebookClassifierPrecoder:
    """Precoder backend built from any beam predictor: returns the codebook
    row of the predicted beam index."""

    def __init__(self, beam_predictor, codebook):
        self.beam_predictor = beam_predictor
        self.codebook = codebook

    def predict(self, z):
        idx = np.asarray(self.beam_predictor.predict(z), dtype=np.int64)
        return self.codebook.beams[idx]


def nn1_build(reference_z, labels_or_channels, algorithm="brute"):
    """Build the 1-NN backend matching the reference payload: integer labels
    give a beam predictor, complex channels a precoder predictor."""
    values = np.asarray(labels_or_channels)
    if np.iscomplexobj(values):
        return NearestPrecoderPredictor(algorithm=algorithm).fit(reference_z, values)
    return NearestBeamPredictor(algorithm=algorithm).fit(reference_z, values)


def predict_beam(predictor, z):
    """Beam index for a single pseudo-location."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    return int(predictor.predict(z)[0])


def predict_precoder(predictor, z):
    """Unit-norm complex precoder for a single pseudo-location."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    w = np.asarray(predictor.predict(z)[0])
    norm = np.linalg.norm(w)
    if not np.isclose(norm, 1.0, atol=1e-9):
        raise RuntimeError(f"backend returned a non-unit precoder (norm {norm})")
    return w
