"""Synthetic multi-BS MIMO channel generation and the CBDS dataset format.

Channels follow a geometric line-of-sight plus single-bounce model: every
path contributes gain * steering_vector(angle of arrival) * per-subcarrier
delay phase. Amplitudes decay as 1/distance, bounce paths carry an extra
loss factor and a per-scatterer reflection phase drawn once from the scene
seed, so the whole dataset is a deterministic function of its configuration.

Scatterer reflection phases are scene-level (not re-drawn per user) and the
remaining path phase comes from the absolute subcarrier frequencies, which
keeps nearby users' channels correlated; charting depends on that.
"""

from dataclasses import dataclass, field
import struct

import numpy as np

from .validation import check_positive

SPEED_OF_LIGHT = 299792458.0
SCATTER_LOSS = 0.3
MIN_BS_UE_DISTANCE = 0.1

SPLIT_CALIBRATION = 0
SPLIT_TEST = 1

_MAGIC = b"CBDS"
_VERSION = 1
_HEADER = struct.Struct("<4sH6I3dQ")

# named sub-streams of the scene seed
_STREAM_UE = 0
_STREAM_SCATTERER = 1
_STREAM_SPLIT = 2


class DatasetFormatError(ValueError):
    """Raised when a CBDS file is malformed or truncated."""


def _rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned ground-plane rectangle [x_min, x_max] x [y_min, y_max]."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"rectangle must have positive area: {self}")

    def sample(self, rng, n):
        x = rng.uniform(self.x_min, self.x_max, size=n)
        y = rng.uniform(self.y_min, self.y_max, size=n)
        return np.column_stack([x, y])


@dataclass(frozen=True)
class SceneConfig:
    """Geometry of one synthetic scene.

    Heights are not part of the published scenario descriptions, so they are
    explicit, documented defaults here: users at ``ue_height`` and scatterers
    at ``scatterer_height`` above the ground plane. User and scatterer
    positions are drawn uniformly from their rectangles using ``rng_seed``.
    """

    bs_positions: tuple
    bs_orientations: tuple
    ue_area: Rectangle
    n_ue: int
    n_scatterers: int
    scatterer_area: Rectangle
    rng_seed: int
    ue_height: float = 1.5
    scatterer_height: float = 5.0

    def __post_init__(self):
        if self.n_ue < 1:
            raise ValueError("n_ue must be >= 1")
        if self.n_scatterers < 0:
            raise ValueError("n_scatterers must be >= 0")
        positions = [tuple(p) for p in self.bs_positions]
        if len(set(positions)) != len(positions):
            raise ValueError("bs_positions must be distinct")
        if len(self.bs_orientations) != len(positions):
            raise ValueError("need one boresight azimuth per BS")
        object.__setattr__(self, "bs_positions", tuple(positions))
        object.__setattr__(self, "bs_orientations", tuple(float(a) for a in self.bs_orientations))

    @property
    def n_bs(self):
        return len(self.bs_positions)


@dataclass(frozen=True)
class CarrierConfig:
    center_frequency: float
    bandwidth: float
    n_subcarriers: int

    def __post_init__(self):
        check_positive(self.center_frequency, "center_frequency")
        check_positive(self.bandwidth, "bandwidth")
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be >= 1")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.center_frequency


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform planar array: n_v x n_h elements. ``element_spacing`` of None
    means half a wavelength at whichever carrier the array is used with."""

    n_v: int
    n_h: int
    element_spacing: float | None = None

    def __post_init__(self):
        if self.n_v < 1 or self.n_h < 1:
            raise ValueError("antenna counts must be >= 1")

    @property
    def n_antennas(self):
        return self.n_v * self.n_h

    def spacing_at(self, wavelength):
        return self.element_spacing if self.element_spacing is not None else wavelength / 2.0


@dataclass(frozen=True)
class ChannelSample:
    """Per-user view: uplink tensor at BS1, downlink tensors at every BS,
    true position and split tag."""

    uplink: np.ndarray
    downlink: np.ndarray
    position: np.ndarray
    split: int


@dataclass
class Dataset:
    """In-memory dataset with bulk per-user channel tensors.

    ``uplink`` is (n_ue, n_antennas, n_subcarriers) complex64 at the uplink
    carrier, seen by BS1 only. ``downlink`` is (n_ue, n_bs, n_antennas,
    n_subcarriers) complex64 at the downlink carrier. The originating
    SceneConfig is kept when the dataset was built in-process; it is not part
    of the persisted format.
    """

    n_bs: int
    array: ArrayConfig
    ul_carrier: CarrierConfig
    dl_carrier: CarrierConfig
    seed: int
    positions: np.ndarray
    split: np.ndarray
    uplink: np.ndarray
    downlink: np.ndarray
    scene: SceneConfig | None = field(default=None, compare=False)

    @property
    def n_samples(self):
        return self.positions.shape[0]

    @property
    def vector_dim(self):
        """D = n_antennas * n_subcarriers of the vectorized uplink."""
        return self.array.n_antennas * self.ul_carrier.n_subcarriers

    def uplink_vectorized(self):
        return self.uplink.reshape(self.n_samples, self.vector_dim)

    def indices_of(self, split_tag):
        return np.flatnonzero(self.split == split_tag)

    def sample(self, i):
        return ChannelSample(
            uplink=self.uplink[i],
            downlink=self.downlink[i],
            position=self.positions[i],
            split=int(self.split[i]),
        )

    def validate(self):
        n = self.n_samples
        na, ns = self.array.n_antennas, self.ul_carrier.n_subcarriers
        if self.uplink.shape != (n, na, ns):
            raise ValueError(f"uplink shape {self.uplink.shape} != {(n, na, ns)}")
        if self.downlink.shape != (n, self.n_bs, na, self.dl_carrier.n_subcarriers):
            raise ValueError("downlink shape mismatch")
        if self.split.shape != (n,) or not np.all(np.isin(self.split, [SPLIT_CALIBRATION, SPLIT_TEST])):
            raise ValueError("split tags must cover all samples")
        for name, arr in (("uplink", self.uplink), ("downlink", self.downlink)):
            if not np.all(np.isfinite(arr.view(np.float32))):
                raise ValueError(f"{name} contains non-finite entries")
        return self


def subcarrier_frequencies(carrier):
    """Absolute subcarrier frequencies, symmetric about the carrier center:
    f_s = f_c + (s - (N_s - 1)/2) * bandwidth / N_s."""
    s = np.arange(carrier.n_subcarriers, dtype=np.float64)
    return carrier.center_frequency + (s - (carrier.n_subcarriers - 1) / 2.0) * (
        carrier.bandwidth / carrier.n_subcarriers
    )


def steering_vector(array, azimuth, elevation, wavelength):
    """UPA steering vector of length n_antennas with entries of modulus
    1/sqrt(n_antennas).

    Ordering matches the codebook Kronecker convention: antenna index
    a = i_v * n_h + i_h. Azimuth/elevation are relative to boresight.
    """
    if not (np.isfinite(azimuth) and np.isfinite(elevation)):
        raise ValueError("angles must be finite")
    check_positive(wavelength, "wavelength")
    spacing = array.spacing_at(wavelength)
    k = 2.0 * np.pi / wavelength
    horiz = np.sin(azimuth) * np.cos(elevation)
    vert = np.sin(elevation)
    phase_h = k * spacing * horiz * np.arange(array.n_h)
    phase_v = k * spacing * vert * np.arange(array.n_v)
    v = np.exp(1j * (phase_v[:, None] + phase_h[None, :])).reshape(-1)
    return v / np.sqrt(array.n_antennas)


def scene_layout(scene):
    """Deterministic 3D user/scatterer positions and per-scatterer
    reflection phases derived from the scene seed."""
    ue_rng = _rng(scene.rng_seed, _STREAM_UE)
    ue_xy = scene.ue_area.sample(ue_rng, scene.n_ue)
    ue_pos = np.column_stack([ue_xy, np.full(scene.n_ue, scene.ue_height)])

    sc_rng = _rng(scene.rng_seed, _STREAM_SCATTERER)
    sc_xy = scene.scatterer_area.sample(sc_rng, scene.n_scatterers)
    sc_pos = np.column_stack([sc_xy, np.full(scene.n_scatterers, scene.scatterer_height)])
    sc_phase = sc_rng.uniform(0.0, 2.0 * np.pi, size=scene.n_scatterers)
    return ue_pos, sc_pos, sc_phase


def _arrival_angles(bs_position, bs_orientation, point):
    vec = np.asarray(point, dtype=np.float64) - np.asarray(bs_position, dtype=np.float64)
    dist = float(np.linalg.norm(vec))
    azimuth = np.arctan2(vec[1], vec[0]) - bs_orientation
    elevation = np.arcsin(vec[2] / dist)
    return azimuth, elevation, dist


def synthesize_channel(scene, array, carrier, bs_index, ue_index):
    """Channel tensor (n_antennas, n_subcarriers) between one BS and one UE.

    Sum of the LoS path and one bounce per scatterer; pure function of its
    arguments, so identical calls return bit-identical tensors.
    """
    if not 0 <= bs_index < scene.n_bs:
        raise ValueError(f"bs_index {bs_index} out of range [0, {scene.n_bs})")
    if not 0 <= ue_index < scene.n_ue:
        raise ValueError(f"ue_index {ue_index} out of range [0, {scene.n_ue})")
    ue_pos, sc_pos, sc_phase = scene_layout(scene)
    return _synthesize(
        scene, array, carrier, bs_index, ue_pos[ue_index], sc_pos, sc_phase
    )


def _synthesize(scene, array, carrier, bs_index, ue_position, sc_pos, sc_phase):
    bs_pos = np.asarray(scene.bs_positions[bs_index], dtype=np.float64)
    bs_azimuth = scene.bs_orientations[bs_index]
    wavelength = carrier.wavelength

    az, el, r_los = _arrival_angles(bs_pos, bs_azimuth, ue_position)
    if r_los < MIN_BS_UE_DISTANCE:
        raise ValueError(
            f"UE at {ue_position} is within {MIN_BS_UE_DISTANCE} m of BS {bs_index}"
        )

    gains = [1.0 / r_los + 0.0j]
    steering = [steering_vector(array, az, el, wavelength)]
    delays = [r_los / SPEED_OF_LIGHT]

    for s in range(sc_pos.shape[0]):
        az_s, el_s, r_bs_sc = _arrival_angles(bs_pos, bs_azimuth, sc_pos[s])
        r_total = r_bs_sc + float(np.linalg.norm(ue_position - sc_pos[s]))
        gains.append(SCATTER_LOSS / r_total * np.exp(1j * sc_phase[s]))
        steering.append(steering_vector(array, az_s, el_s, wavelength))
        delays.append(r_total / SPEED_OF_LIGHT)

    gains = np.asarray(gains, dtype=np.complex128)
    steering = np.asarray(steering, dtype=np.complex128)  # (paths, n_antennas)
    freqs = subcarrier_frequencies(carrier)
    delay_phase = np.exp(-2j * np.pi * np.outer(delays, freqs))  # (paths, n_sub)
    return np.einsum("p,pa,ps->as", gains, steering, delay_phase)


def build_dataset(scene, array, ul_carrier, dl_carrier, calibration_fraction=0.8):
    """Full dataset: uplink channels at BS1 and downlink channels at every BS,
    with a seeded calibration/test split."""
    if not 0.0 < calibration_fraction < 1.0:
        raise ValueError("calibration_fraction must lie strictly between 0 and 1")
    if ul_carrier.n_subcarriers != dl_carrier.n_subcarriers:
        raise ValueError("uplink and downlink must use the same subcarrier count")
    if ul_carrier.bandwidth != dl_carrier.bandwidth:
        raise ValueError("uplink and downlink must use the same bandwidth")

    ue_pos, sc_pos, sc_phase = scene_layout(scene)
    n, b = scene.n_ue, scene.n_bs
    na, ns = array.n_antennas, ul_carrier.n_subcarriers

    uplink = np.empty((n, na, ns), dtype=np.complex64)
    downlink = np.empty((n, b, na, dl_carrier.n_subcarriers), dtype=np.complex64)
    for u in range(n):
        uplink[u] = _synthesize(scene, array, ul_carrier, 0, ue_pos[u], sc_pos, sc_phase)
        for bs in range(b):
            downlink[u, bs] = _synthesize(
                scene, array, dl_carrier, bs, ue_pos[u], sc_pos, sc_phase
            )

    n_cal = int(round(calibration_fraction * n))
    order = _rng(scene.rng_seed, _STREAM_SPLIT).permutation(n)
    split = np.full(n, SPLIT_TEST, dtype=np.uint8)
    split[order[:n_cal]] = SPLIT_CALIBRATION

    return Dataset(
        n_bs=b,
        array=array,
        ul_carrier=ul_carrier,
        dl_carrier=dl_carrier,
        seed=scene.rng_seed,
        positions=ue_pos,
        split=split,
        uplink=uplink,
        downlink=downlink,
        scene=scene,
    ).validate()


def dataset_from_arrays(positions, split, uplink, downlink, array, ul_carrier, dl_carrier, seed=0):
    """Converter entry point: wrap pre-vectorized channel dumps (any source)
    into a Dataset so they can be persisted as CBDS.

    ``uplink``/``downlink`` accept either tensor form (n, n_a, n_s) /
    (n, b, n_a, n_s) or vectorized rows that reshape to it.
    """
    n = len(positions)
    na, ns = array.n_antennas, ul_carrier.n_subcarriers
    uplink = np.asarray(uplink, dtype=np.complex64).reshape(n, na, ns)
    downlink = np.asarray(downlink, dtype=np.complex64)
    b = downlink.size // (n * na * dl_carrier.n_subcarriers)
    downlink = downlink.reshape(n, b, na, dl_carrier.n_subcarriers)
    return Dataset(
        n_bs=b,
        array=array,
        ul_carrier=ul_carrier,
        dl_carrier=dl_carrier,
        seed=seed,
        positions=np.asarray(positions, dtype=np.float64).reshape(n, 3),
        split=np.asarray(split, dtype=np.uint8),
        uplink=uplink,
        downlink=downlink,
    ).validate()


def save_dataset(dataset, path):
    """Write a dataset in the little-endian CBDS layout (bit-exact round-trip)."""
    dataset.validate()
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        dataset.n_bs,
        dataset.array.n_antennas,
        dataset.ul_carrier.n_subcarriers,
        dataset.array.n_v,
        dataset.array.n_h,
        dataset.n_samples,
        dataset.ul_carrier.center_frequency,
        dataset.dl_carrier.center_frequency,
        dataset.ul_carrier.bandwidth,
        dataset.seed,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for i in range(dataset.n_samples):
            fh.write(dataset.positions[i].astype("<f8").tobytes())
            fh.write(struct.pack("<B", int(dataset.split[i])))
            fh.write(dataset.uplink[i].astype("<c8").tobytes())
            fh.write(dataset.downlink[i].astype("<c8").tobytes())


def load_dataset(path):
    """Read a CBDS file. Raises DatasetFormatError on bad magic, version or
    truncated payload."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError("file too short for CBDS header")
    magic, version, b, na, ns, nv, nh, n_ue, f_ul, f_dl, bw, seed = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise DatasetFormatError(f"unsupported CBDS version {version}")
    if nv * nh != na:
        raise DatasetFormatError("inconsistent antenna geometry in header")

    block = na * ns
    record = 24 + 1 + 8 * block * (1 + b)
    expected = _HEADER.size + n_ue * record
    if len(raw) != expected:
        raise DatasetFormatError(f"payload size {len(raw)} != expected {expected}")

    positions = np.empty((n_ue, 3), dtype=np.float64)
    split = np.empty(n_ue, dtype=np.uint8)
    uplink = np.empty((n_ue, na, ns), dtype=np.complex64)
    downlink = np.empty((n_ue, b, na, ns), dtype=np.complex64)
    off = _HEADER.size
    for i in range(n_ue):
        positions[i] = np.frombuffer(raw, dtype="<f8", count=3, offset=off)
        off += 24
        split[i] = raw[off]
        off += 1
        uplink[i] = np.frombuffer(raw, dtype="<c8", count=block, offset=off).reshape(na, ns)
        off += 8 * block
        downlink[i] = np.frombuffer(raw, dtype="<c8", count=b * block, offset=off).reshape(b, na, ns)
        off += 8 * b * block

    array = ArrayConfig(n_v=nv, n_h=nh)
    ul = CarrierConfig(center_frequency=f_ul, bandwidth=bw, n_subcarriers=ns)
    dl = CarrierConfig(center_frequency=f_dl, bandwidth=bw, n_subcarriers=ns)
    return Dataset(
        n_bs=b,
        array=array,
        ul_carrier=ul,
        dl_carrier=dl,
        seed=seed,
        positions=positions,
        split=split,
        uplink=uplink,
        downlink=downlink,
    ).validate()
