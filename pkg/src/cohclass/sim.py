"""Synthetic interferograms with known per-pixel coherence.

A scene is a wrapped phase field (Gaussian bubbles plus phase offsets
inside road and building footprints) and a true-coherence field gamma.
The noisy observation mixes the clean unit-amplitude signal with circular
complex Gaussian noise:

    z = gamma * exp(j*phase) + sqrt(1 - gamma^2) * n,   E|n|^2 = 1

so the expected windowed coherence of (clean, noisy) equals gamma and the
expected power of z is 1 everywhere. Ground truth classes use the same
0.6 threshold the evaluation uses.
"""

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from . import raster
from .errors import ParameterError

TRUTH_GAMMA_THRESHOLD = 0.6

# Randomization ranges for generate_dataset; tunable, see random_scene.
BUBBLE_COUNT = (3, 10)
BUBBLE_SIGMA = (10.0, 60.0)
BUBBLE_AMPLITUDE = (np.pi, 6 * np.pi)
ROAD_COUNT = (0, 3)
ROAD_WIDTH = (2.0, 8.0)
BUILDING_COUNT = (0, 5)
BUILDING_SIDE = (10, 40)
PHASE_OFFSET = (0.5 * np.pi, np.pi)
# The background stays solidly coherent (the 7x7 estimator has sd about
# (1-g^2)/sqrt(98), so g >= 0.8 clears the 0.6 class threshold even after
# the few-percent loss from correlating against the denoised rather than
# clean image). Blob gammas reach up to 0.55: the 0.45..0.6 estimate band
# is where plain thresholding speckles with false positives while the
# whole region is still truly incoherent, so spatial smoothing pays off
# without betting against the ground truth.
BLOB_COVERAGE = (0.2, 0.5)
BLOB_GAMMA = (0.0, 0.55)
BACKGROUND_GAMMA = (0.8, 0.95)


@dataclass(frozen=True)
class Bubble:
    row: float
    col: float
    sigma: float
    amplitude: float


@dataclass(frozen=True)
class Road:
    r0: float
    c0: float
    r1: float
    c1: float
    width: float
    phase_offset: float


@dataclass(frozen=True)
class Building:
    r0: int
    c0: int
    r1: int
    c1: int
    phase_offset: float


@dataclass(frozen=True)
class GammaRect:
    r0: int
    c0: int
    r1: int
    c1: int
    gamma: float


@dataclass(frozen=True)
class GammaBlob:
    row: float
    col: float
    radius: float
    gamma: float


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    bubbles: tuple = ()
    roads: tuple = ()
    buildings: tuple = ()
    coherence_regions: tuple = ()
    background_gamma: float = 0.9
    seed: int = 0


@dataclass
class SimSample:
    clean: np.ndarray
    noisy: np.ndarray
    gamma_true: np.ndarray
    truth_mask: np.ndarray
    spec: SceneSpec


def wrap_phase(phase: np.ndarray) -> np.ndarray:
    """Wrap to (-pi, pi]."""
    wrapped = np.mod(phase, 2.0 * np.pi)
    wrapped[wrapped > np.pi] -= 2.0 * np.pi
    return wrapped


def _check_inside(value, low, high, what):
    if not low <= value <= high:
        raise ParameterError(f"{what} {value} outside [{low}, {high}]")


def _segment_mask(rows, cols, road: Road) -> np.ndarray:
    # distance from each pixel to the segment (r0,c0)-(r1,c1)
    dr = road.r1 - road.r0
    dc = road.c1 - road.c0
    length_sq = dr * dr + dc * dc
    if length_sq == 0:
        dist_sq = (rows - road.r0) ** 2 + (cols - road.c0) ** 2
    else:
        t = ((rows - road.r0) * dr + (cols - road.c0) * dc) / length_sq
        t = np.clip(t, 0.0, 1.0)
        dist_sq = (rows - (road.r0 + t * dr)) ** 2 + (cols - (road.c0 + t * dc)) ** 2
    return dist_sq <= (road.width / 2.0) ** 2


def generate_scene(spec: SceneSpec):
    """Render (wrapped phase, gamma_true) for a scene description."""
    h, w = spec.height, spec.width
    if h < 1 or w < 1:
        raise ParameterError(f"empty scene {w}x{h}")
    _check_inside(spec.background_gamma, 0.0, 1.0, "background_gamma")
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)

    phase = np.zeros((h, w), dtype=np.float64)
    for b in spec.bubbles:
        _check_inside(b.row, 0, h - 1, "bubble row")
        _check_inside(b.col, 0, w - 1, "bubble col")
        if b.sigma <= 0:
            raise ParameterError(f"bubble sigma must be positive, got {b.sigma}")
        r_sq = (rows - b.row) ** 2 + (cols - b.col) ** 2
        phase += b.amplitude * np.exp(-r_sq / (2.0 * b.sigma**2))
    for road in spec.roads:
        for v, what in ((road.r0, "road row"), (road.r1, "road row")):
            _check_inside(v, 0, h - 1, what)
        for v, what in ((road.c0, "road col"), (road.c1, "road col")):
            _check_inside(v, 0, w - 1, what)
        phase[_segment_mask(rows, cols, road)] += road.phase_offset
    for b in spec.buildings:
        if not (0 <= b.r0 <= b.r1 <= h and 0 <= b.c0 <= b.c1 <= w):
            raise ParameterError(f"building {b} outside the {w}x{h} scene")
        phase[b.r0 : b.r1, b.c0 : b.c1] += b.phase_offset
    phase = wrap_phase(phase)

    gamma = np.full((h, w), spec.background_gamma, dtype=np.float64)
    for region in spec.coherence_regions:
        _check_inside(region.gamma, 0.0, 1.0, "region gamma")
        if isinstance(region, GammaRect):
            if not (0 <= region.r0 <= region.r1 <= h and 0 <= region.c0 <= region.c1 <= w):
                raise ParameterError(f"region {region} outside the {w}x{h} scene")
            gamma[region.r0 : region.r1, region.c0 : region.c1] = region.gamma
        elif isinstance(region, GammaBlob):
            _check_inside(region.row, 0, h - 1, "blob row")
            _check_inside(region.col, 0, w - 1, "blob col")
            mask = (rows - region.row) ** 2 + (cols - region.col) ** 2 <= region.radius**2
            gamma[mask] = region.gamma
        else:
            raise ParameterError(f"unknown coherence region type {type(region).__name__}")
    return phase, gamma


def synthesize_interferogram(phase, gamma_true, seed) -> np.ndarray:
    """Mix the clean signal with unit-power circular Gaussian noise."""
    phase = np.asarray(phase, dtype=np.float64)
    gamma = np.asarray(gamma_true, dtype=np.float64)
    if phase.shape != gamma.shape:
        raise ParameterError(f"shape mismatch: {phase.shape} vs {gamma.shape}")
    if gamma.min() < 0.0 or gamma.max() > 1.0:
        raise ParameterError("gamma_true must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    noise = (
        rng.standard_normal(phase.shape) + 1j * rng.standard_normal(phase.shape)
    ) / np.sqrt(2.0)
    z = gamma * np.exp(1j * phase) + np.sqrt(1.0 - gamma**2) * noise
    return z.astype(np.complex64)


def truth_mask(gamma_true) -> np.ndarray:
    return (np.asarray(gamma_true) >= TRUTH_GAMMA_THRESHOLD).astype(np.uint8)


def render_sample(spec: SceneSpec) -> SimSample:
    phase, gamma = generate_scene(spec)
    clean = np.exp(1j * phase).astype(np.complex64)
    noisy = synthesize_interferogram(phase, gamma, spec.seed)
    return SimSample(clean, noisy, gamma.astype(np.float32), truth_mask(gamma), spec)


def random_scene(width: int, height: int, rng, seed: int = 0) -> SceneSpec:
    """Draw a scene from the documented randomization ranges."""
    def u(lo_hi):
        return float(rng.uniform(*lo_hi))

    bubbles = tuple(
        Bubble(
            row=float(rng.uniform(0, height - 1)),
            col=float(rng.uniform(0, width - 1)),
            sigma=u(BUBBLE_SIGMA),
            amplitude=u(BUBBLE_AMPLITUDE),
        )
        for _ in range(int(rng.integers(BUBBLE_COUNT[0], BUBBLE_COUNT[1] + 1)))
    )
    roads = tuple(
        Road(
            r0=float(rng.uniform(0, height - 1)),
            c0=float(rng.uniform(0, width - 1)),
            r1=float(rng.uniform(0, height - 1)),
            c1=float(rng.uniform(0, width - 1)),
            width=u(ROAD_WIDTH),
            phase_offset=u(PHASE_OFFSET) * (1 if rng.random() < 0.5 else -1),
        )
        for _ in range(int(rng.integers(ROAD_COUNT[0], ROAD_COUNT[1] + 1)))
    )
    buildings = []
    for _ in range(int(rng.integers(BUILDING_COUNT[0], BUILDING_COUNT[1] + 1))):
        side_r = int(rng.integers(BUILDING_SIDE[0], BUILDING_SIDE[1] + 1))
        side_c = int(rng.integers(BUILDING_SIDE[0], BUILDING_SIDE[1] + 1))
        r0 = int(rng.integers(0, max(1, height - side_r)))
        c0 = int(rng.integers(0, max(1, width - side_c)))
        buildings.append(
            Building(r0, c0, min(r0 + side_r, height), min(c0 + side_c, width),
                     u(PHASE_OFFSET) * (1 if rng.random() < 0.5 else -1))
        )

    # add low-coherence blobs until they cover the target area fraction
    target = u(BLOB_COVERAGE)
    covered = np.zeros((height, width), dtype=bool)
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    regions = []
    # large blobs keep the boundary fraction low relative to region area
    min_radius = min(width, height) / 12.0
    max_radius = min(width, height) / 5.0
    for _ in range(64):
        if covered.mean() >= target:
            break
        blob = GammaBlob(
            row=float(rng.uniform(0, height - 1)),
            col=float(rng.uniform(0, width - 1)),
            radius=float(rng.uniform(min_radius, max_radius)),
            gamma=u(BLOB_GAMMA),
        )
        regions.append(blob)
        covered |= (rows - blob.row) ** 2 + (cols - blob.col) ** 2 <= blob.radius**2

    return SceneSpec(
        width=width,
        height=height,
        bubbles=bubbles,
        roads=roads,
        buildings=tuple(buildings),
        coherence_regions=tuple(regions),
        background_gamma=u(BACKGROUND_GAMMA),
        seed=seed,
    )


def generate_dataset(n: int, size: int, seed) -> list:
    """n independent samples of size x size, deterministic per seed."""
    if n < 1:
        raise ParameterError(f"need at least one sample, got {n}")
    samples = []
    for child in np.random.SeedSequence(seed).spawn(n):
        rng = np.random.default_rng(child)
        noise_seed = int(rng.integers(2**63))
        spec = random_scene(size, size, rng, seed=noise_seed)
        samples.append(render_sample(spec))
    return samples


# ---------------------------------------------------------------------------
# on-disk layout: four raster files plus a JSON manifest per sample
# ---------------------------------------------------------------------------

_FILES = {
    "clean": "clean.igrm",
    "noisy": "noisy.igrm",
    "gamma_true": "gamma_true.rast",
    "truth_mask": "truth_mask.rast",
}


def _spec_to_dict(spec: SceneSpec) -> dict:
    d = dataclasses.asdict(spec)
    d["coherence_regions"] = [
        {"type": type(r).__name__, **dataclasses.asdict(r)}
        for r in spec.coherence_regions
    ]
    d["bubbles"] = [dataclasses.asdict(b) for b in spec.bubbles]
    d["roads"] = [dataclasses.asdict(r) for r in spec.roads]
    d["buildings"] = [dataclasses.asdict(b) for b in spec.buildings]
    return d


def _spec_from_dict(d: dict) -> SceneSpec:
    regions = []
    for r in d.get("coherence_regions", []):
        r = dict(r)
        kind = r.pop("type")
        regions.append({"GammaRect": GammaRect, "GammaBlob": GammaBlob}[kind](**r))
    return SceneSpec(
        width=d["width"],
        height=d["height"],
        bubbles=tuple(Bubble(**b) for b in d.get("bubbles", [])),
        roads=tuple(Road(**r) for r in d.get("roads", [])),
        buildings=tuple(Building(**b) for b in d.get("buildings", [])),
        coherence_regions=tuple(regions),
        background_gamma=d["background_gamma"],
        seed=d["seed"],
    )


def save_sample(sample: SimSample, dirpath) -> None:
    os.makedirs(dirpath, exist_ok=True)
    raster.write_raster(os.path.join(dirpath, _FILES["clean"]), sample.clean)
    raster.write_raster(os.path.join(dirpath, _FILES["noisy"]), sample.noisy)
    raster.write_raster(os.path.join(dirpath, _FILES["gamma_true"]), sample.gamma_true)
    raster.write_raster(
        os.path.join(dirpath, _FILES["truth_mask"]), sample.truth_mask.astype(np.float32)
    )
    manifest = {
        "files": dict(_FILES),
        "scene": _spec_to_dict(sample.spec),
        "truth_gamma_threshold": TRUTH_GAMMA_THRESHOLD,
    }
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_sample(dirpath) -> SimSample:
    with open(os.path.join(dirpath, "manifest.json")) as fh:
        manifest = json.load(fh)
    files = manifest["files"]
    arrays = {
        key: raster.read_raster(os.path.join(dirpath, files[key])) for key in _FILES
    }
    return SimSample(
        clean=arrays["clean"],
        noisy=arrays["noisy"],
        gamma_true=arrays["gamma_true"],
        truth_mask=arrays["truth_mask"].astype(np.uint8),
        spec=_spec_from_dict(manifest["scene"]),
    )
