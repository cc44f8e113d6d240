"""Oversampled 2D-DFT beam codebooks, exhaustive best-beam search and
correlation metrics.

A codebook is the Kronecker product of two oversampled 1D-DFT matrices
(vertical x horizontal), scaled so every beam has unit norm. Beam scoring
follows the mean normalized correlation over subcarriers; all scores are
computed in float64 regardless of the channel storage dtype so rankings
stay stable near ties.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_positive, check_unit_norm


@dataclass(frozen=True)
class Codebook:
    """Beam codebook: ``beams`` is an (n_beams, n_antennas) complex matrix."""

    beams: np.ndarray
    n_v: int
    n_h: int
    o_v: int
    o_h: int

    @property
    def n_beams(self):
        return self.beams.shape[0]

    @property
    def n_antennas(self):
        return self.beams.shape[1]


@dataclass(frozen=True)
class BeamRanking:
    """All beam indices of one codebook sorted by decreasing score.

    ``indices[0]`` is the best beam; ties are broken towards the lowest
    beam index. ``scores`` is the matching non-increasing score vector.
    """

    indices: np.ndarray
    scores: np.ndarray

    def top(self, k):
        return self.indices[:k]


def dft_1d(n, o=1):
    """Oversampled 1D-DFT codebook matrix of shape (o*n, n).

    Entry (m, k) equals exp(j*2*pi*m*k / (o*n)). The first row is all ones.
    """
    check_positive(n, "n")
    check_positive(o, "o")
    m = np.arange(o * n)[:, None]
    k = np.arange(n)[None, :]
    return np.exp(2j * np.pi * m * k / (o * n))


def build_codebook(n_v, n_h, o_v=2, o_h=2):
    """Kronecker 2D-DFT codebook with o_v*o_h*n_v*n_h unit-norm beams.

    Beam index m decomposes as m = m_v * (o_h * n_h) + m_h and antenna
    index a as a = i_v * n_h + i_h, i.e. vertical-major on both axes.
    """
    psi_v = dft_1d(n_v, o_v)
    psi_h = dft_1d(n_h, o_h)
    beams = np.kron(psi_v, psi_h) / np.sqrt(n_v * n_h)
    return Codebook(beams=beams, n_v=n_v, n_h=n_h, o_v=o_v, o_h=o_h)


def beam_scores(codebook, downlink):
    """Mean normalized correlation of every beam with a downlink channel.

    ``downlink`` has shape (n_antennas, n_subcarriers); the score of beam i
    is mean_s |c_i^H g_s|^2 / ||g_s||^2, which lies in [0, 1] because the
    beams have unit norm.
    """
    g = np.asarray(downlink, dtype=np.complex128)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[0] != codebook.n_antennas:
        raise ValueError(
            f"downlink has {g.shape[0]} antennas, codebook expects {codebook.n_antennas}"
        )
    sub_energy = np.einsum("as,as->s", g.conj(), g).real
    if np.any(sub_energy == 0.0):
        raise ValueError("downlink channel has a zero-norm subcarrier")
    proj = codebook.beams.conj() @ g  # (n_beams, n_subcarriers)
    return np.mean(np.abs(proj) ** 2 / sub_energy[None, :], axis=1)


def rank_beams(codebook, downlink):
    """Exhaustively rank all codebook beams for one downlink channel."""
    scores = beam_scores(codebook, downlink)
    order = np.argsort(-scores, kind="stable")  # ties -> lowest beam index
    return BeamRanking(indices=order, scores=scores[order])


def batch_beam_scores(codebook, downlink_batch):
    """beam_scores over a batch of (n, n_antennas, n_subcarriers) channels,
    returned as an (n, n_beams) matrix."""
    g = np.asarray(downlink_batch, dtype=np.complex128)
    if g.ndim != 3 or g.shape[1] != codebook.n_antennas:
        raise ValueError("expected (n, n_antennas, n_subcarriers) downlink tensors")
    sub_energy = np.einsum("nas,nas->ns", g.conj(), g).real
    if np.any(sub_energy == 0.0):
        raise ValueError("a downlink channel has a zero-norm subcarrier")
    proj = np.einsum("ba,nas->nbs", codebook.beams.conj(), g)
    return np.mean(np.abs(proj) ** 2 / sub_energy[:, None, :], axis=2)


def best_beam(codebook, downlink):
    """Index of the single best beam (argmax of the mean correlation)."""
    return int(rank_beams(codebook, downlink).indices[0])


def precoder_correlation(w, downlink_central):
    """Normalized correlation |w^H g|^2 / ||g||^2 of a unit-norm precoder
    with the central-subcarrier downlink channel. Returns a value in [0, 1]."""
    w = np.asarray(w, dtype=np.complex128)
    g = np.asarray(downlink_central, dtype=np.complex128)
    check_unit_norm(w, name="precoder")
    energy = np.vdot(g, g).real
    if energy == 0.0:
        raise ValueError("downlink channel has zero norm")
    return float(np.abs(np.vdot(w, g)) ** 2 / energy)


def central_subcarrier(n_subcarriers):
    """Index of the central subcarrier used for precoder evaluation."""
    return n_subcarriers // 2
