"""
Seedable simulation generators for Models 1–10.

Each model is a SimulationModel subclass holding its covariance variant,
noise cases and coefficient pattern. MODELS maps the model id to its
instance. sample_dataset() draws X, ε and β* from independent child
streams of one SeedSequence, so a (model, case, n, p, seed) tuple always
reproduces the same Dataset bit for bit.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import LinAlgError, cholesky
from scipy.spatial.distance import cdist

from penalty import GroupPartition
from rct_base import DecompositionError, ParameterError, debug_print, require_nonnegative, require_positive
from risk import Dataset

JITTER_LEVELS = (0.0, 1e-10, 1e-8, 1e-6)
CASES = ('a', 'b', 'c')


# ==================== LATTICE ====================

def lattice(grid_side):
    """grid_side² points of the uniform lattice on [−1,1]², row-major: s_{r·side+c} = (x_r, x_c)."""
    require_positive('grid_side', grid_side)
    xs = np.linspace(-1.0, 1.0, grid_side) if grid_side > 1 else np.zeros(1)
    rows, cols = np.meshgrid(xs, xs, indexing='ij')
    return np.column_stack([rows.ravel(), cols.ravel()])


def _regions_per_side(grid_side, regions):
    per_side = int(round(np.sqrt(regions)))
    if per_side * per_side != regions:
        raise ParameterError(f"regions must be a perfect square, got {regions}")
    if grid_side % per_side:
        raise ParameterError(f"grid side {grid_side} does not split into {per_side}x{per_side} regions")
    return per_side


def region_labels(grid_side, regions):
    """Region index of every lattice point; regions are numbered row-major."""
    per_side = _regions_per_side(grid_side, regions)
    width = grid_side // per_side
    r, c = np.divmod(np.arange(grid_side * grid_side), grid_side)
    return (r // width) * per_side + (c // width)


def region_partition(grid_side, regions):
    """The square sub-regions of the lattice as a GroupPartition (blocks are not contiguous)."""
    labels = region_labels(grid_side, regions)
    return GroupPartition([np.flatnonzero(labels == b) for b in range(regions)], p=grid_side * grid_side)


def _gp_kernel(points, scale):
    sq = np.sum(points * points, axis=1)
    return np.exp(-sq[:, None] - sq[None, :] - scale * cdist(points, points, 'sqeuclidean'))


def _grid_side(p):
    side = int(round(np.sqrt(p)))
    if side * side != p:
        raise ParameterError(f"grid models need p to be a perfect square, got {p}")
    return side


# ==================== COVARIANCE VARIANTS ====================

@dataclass(frozen=True)
class AR1:
    rho: float

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ParameterError(f"AR1 rho must lie in (0, 1), got {self.rho}")

    def matrix(self, p):
        idx = np.arange(p)
        return self.rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


@dataclass(frozen=True)
class CompoundSymmetry:
    rho: float

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ParameterError(f"CS rho must lie in (0, 1), got {self.rho}")

    def matrix(self, p):
        return np.full((p, p), self.rho) + (1.0 - self.rho) * np.eye(p)


@dataclass(frozen=True)
class GPGrid:
    """exp(−‖s_i‖² − ‖s_j‖² − scale·‖s_i − s_j‖²) on the grid_side² lattice."""

    scale: float
    grid_side: int

    def __post_init__(self):
        require_positive('scale', self.scale)
        require_positive('grid_side', self.grid_side)

    def matrix(self, p):
        if p != self.grid_side ** 2:
            raise ParameterError(f"GPGrid with side {self.grid_side} needs p={self.grid_side ** 2}, got {p}")
        return _gp_kernel(lattice(self.grid_side), self.scale)


@dataclass(frozen=True)
class BlockGP:
    """
    GP kernel inside each square region plus shared region means.

    The region means follow N(0, Γ) with Γ = 1 on the diagonal and
    between_corr elsewhere. Within a region the kernel is evaluated on the
    region's own lattice rescaled to [−1,1]².
    """

    scale: float
    grid_side: int
    regions: int = 25
    between_corr: float = 0.9

    def __post_init__(self):
        require_positive('scale', self.scale)
        _regions_per_side(self.grid_side, self.regions)
        if not 0 <= self.between_corr < 1:
            raise ParameterError(f"between_corr must lie in [0, 1), got {self.between_corr}")

    @property
    def region_side(self):
        return self.grid_side // _regions_per_side(self.grid_side, self.regions)

    def local_matrix(self):
        return _gp_kernel(lattice(self.region_side), self.scale)

    def between_matrix(self):
        return np.full((self.regions, self.regions), self.between_corr) + (1.0 - self.between_corr) * np.eye(self.regions)

    def local_positions(self):
        """Position of every lattice point inside its region's local lattice."""
        width = self.region_side
        r, c = np.divmod(np.arange(self.grid_side ** 2), self.grid_side)
        return (r % width) * width + (c % width)

    def matrix(self, p):
        if p != self.grid_side ** 2:
            raise ParameterError(f"BlockGP with side {self.grid_side} needs p={self.grid_side ** 2}, got {p}")
        labels = region_labels(self.grid_side, self.regions)
        local = self.local_positions()
        same_region = labels[:, None] == labels[None, :]
        within = np.where(same_region, self.local_matrix()[local[:, None], local[None, :]], 0.0)
        return within + self.between_matrix()[labels[:, None], labels[None, :]]


def build_covariance(spec, p):
    """Covariance matrix of the given variant at dimension p."""
    require_positive('p', p)
    return spec.matrix(int(p))


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    lower: np.ndarray
    jitter: float


def cholesky_factor(sigma, jitter_base=1.0):
    """
    Lower factor L with L·Lᵀ = Σ + jitter·I.

    Jitter escalates through {0, 1e−10, 1e−8, 1e−6}·mean(diag Σ)·jitter_base
    until the factorization succeeds.

    Raises:
        DecompositionError: Σ is not positive definite even at the largest jitter.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ParameterError(f"covariance must be square, got shape {sigma.shape}")
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12):
        raise ParameterError("covariance must be symmetric")
    require_nonnegative('jitter_base', jitter_base)

    unit = float(np.mean(np.diag(sigma))) * jitter_base
    for level in JITTER_LEVELS:
        jitter = level * unit
        try:
            lower = cholesky(sigma + jitter * np.eye(sigma.shape[0]), lower=True)
        except LinAlgError:
            debug_print(f"cholesky failed at jitter {jitter:.3g}")
            continue
        if jitter:
            debug_print(f"cholesky succeeded with jitter {jitter:.3g}")
        return CholeskyFactor(lower=lower, jitter=jitter)
    raise DecompositionError(f"covariance of size {sigma.shape[0]} is not positive definite at jitter {jitter:.3g}")


@lru_cache(maxsize=16)
def _cached_factor(spec, p):
    return cholesky_factor(build_covariance(spec, p))


# ==================== NOISE ====================

@dataclass(frozen=True)
class NoiseSpec:
    """Mixture (1−c)·N(0, σ₁²) + c·N(0, σ₂²)."""

    sigma1_sq: float
    sigma2_sq: float
    contamination: float = 0.1

    def __post_init__(self):
        require_positive('sigma1_sq', self.sigma1_sq)
        require_positive('sigma2_sq', self.sigma2_sq)
        if self.sigma2_sq < self.sigma1_sq:
            raise ParameterError(f"sigma2_sq ({self.sigma2_sq}) must be at least sigma1_sq ({self.sigma1_sq})")
        if not 0 <= self.contamination <= 1:
            raise ParameterError(f"contamination must lie in [0, 1], got {self.contamination}")

    @property
    def variance(self):
        return (1.0 - self.contamination) * self.sigma1_sq + self.contamination * self.sigma2_sq


def sample_noise(spec, n, rng):
    """Per-observation Bernoulli(contamination) choice between the two normal components."""
    base = rng.standard_normal(n) * np.sqrt(spec.sigma1_sq)
    heavy = rng.standard_normal(n) * np.sqrt(spec.sigma2_sq)
    return np.where(rng.random(n) < spec.contamination, heavy, base)


# ==================== COEFFICIENT PATTERNS ====================

@dataclass(frozen=True)
class DenseHead:
    count: int = 20
    value: float = 1.0

    def draw(self, p, rng):
        if not 0 < self.count <= p:
            raise ParameterError(f"support size must lie in [1, {p}], got {self.count}")
        beta = np.zeros(p)
        beta[:self.count] = self.value
        return beta


def _disk_members(points, center, radius, candidates):
    inside = candidates[np.linalg.norm(points[candidates] - center, axis=1) <= radius]
    if inside.size == 0:
        nearest = np.argmin(np.linalg.norm(points[candidates] - center, axis=1))
        inside = candidates[[nearest]]
    return inside


@dataclass(frozen=True)
class Disk:
    """One disk with a uniformly placed center; values drawn from U[value_low, value_high]."""

    grid_side: int
    radius: float = 0.1
    value_low: float = 0.5
    value_high: float = 1.0

    def draw(self, p, rng):
        if p != self.grid_side ** 2:
            raise ParameterError(f"Disk pattern with side {self.grid_side} needs p={self.grid_side ** 2}, got {p}")
        points = lattice(self.grid_side)
        center = rng.uniform(-0.5, 0.5, size=2)
        members = _disk_members(points, center, self.radius, np.arange(p))
        beta = np.zeros(p)
        beta[members] = rng.uniform(self.value_low, self.value_high, size=members.size)
        return beta


@dataclass(frozen=True)
class RegionDisks:
    """Disks centered on `count` randomly chosen regions, clipped to those regions."""

    grid_side: int
    regions: int = 25
    count: int = 2
    radius: float = 0.13
    value: float = 2.0

    def draw(self, p, rng):
        if p != self.grid_side ** 2:
            raise ParameterError(f"RegionDisks with side {self.grid_side} needs p={self.grid_side ** 2}, got {p}")
        points = lattice(self.grid_side)
        labels = region_labels(self.grid_side, self.regions)
        chosen = rng.choice(self.regions, size=self.count, replace=False)
        beta = np.zeros(p)
        for region in sorted(int(b) for b in chosen):
            candidates = np.flatnonzero(labels == region)
            center = points[candidates].mean(axis=0)
            beta[_disk_members(points, center, self.radius, candidates)] = self.value
        return beta


def build_pattern(pattern, p, rng):
    return pattern.draw(int(p), rng)


# ==================== SIMULATION MODELS ====================

class SimulationModel:
    """
    Base class for one simulation model.

    Subclasses set the covariance family and override covariance_spec(),
    pattern() and, when the model carries a group structure, groups().
    """

    family = ''
    default_n = 100
    default_p = 2000
    sigma2_sq = 10.0
    sigma1_by_case = {'a': 1.0, 'b': 2.0, 'c': 3.0}

    def __init__(self, model_id):
        self.model_id = model_id

    def covariance_spec(self, p):
        raise NotImplementedError

    def pattern(self, p, support_size=None):
        return DenseHead(count=support_size or 20, value=1.0)

    def groups(self, p):
        return None

    def noise_spec(self, case):
        if case not in self.sigma1_by_case:
            raise ParameterError(f"case must be one of {CASES}, got {case!r}")
        return NoiseSpec(sigma1_sq=self.sigma1_by_case[case], sigma2_sq=self.sigma2_sq)

    def design(self, n, p, rng):
        """n rows L·z with standard normal z; returns (X, jitter)."""
        factor = _cached_factor(self.covariance_spec(p), p)
        z = rng.standard_normal((n, p))
        return z @ factor.lower.T, factor.jitter

    def __repr__(self):
        return f"{type(self).__name__}(model_id={self.model_id})"


class AutoregressiveModel(SimulationModel):
    family = 'AR1'

    def __init__(self, model_id, rho):
        super().__init__(model_id)
        self.rho = rho

    def covariance_spec(self, p):
        return AR1(self.rho)


class CompoundSymmetryModel(SimulationModel):
    family = 'CS'
    sigma2_sq = 3.0
    sigma1_by_case = {'a': 0.1, 'b': 0.3, 'c': 1.0}

    def __init__(self, model_id, rho):
        super().__init__(model_id)
        self.rho = rho

    def covariance_spec(self, p):
        return CompoundSymmetry(self.rho)


class GaussianProcessModel(SimulationModel):
    family = 'GP'
    default_n = 500
    default_p = 2500
    sigma2_sq = 30.0
    sigma1_by_case = {'a': 2.0, 'b': 4.0, 'c': 8.0}

    def __init__(self, model_id, scale):
        super().__init__(model_id)
        self.scale = scale

    def covariance_spec(self, p):
        return GPGrid(self.scale, _grid_side(p))

    def pattern(self, p, support_size=None):
        return Disk(grid_side=_grid_side(p))


class RegionGaussianProcessModel(GaussianProcessModel):
    family = 'GP25'

    def __init__(self, model_id, scale, regions=25, between_corr=0.9):
        super().__init__(model_id, scale)
        self.regions = regions
        self.between_corr = between_corr

    def covariance_spec(self, p):
        return BlockGP(self.scale, _grid_side(p), self.regions, self.between_corr)

    def pattern(self, p, support_size=None):
        return RegionDisks(grid_side=_grid_side(p), regions=self.regions)

    def groups(self, p):
        return region_partition(_grid_side(p), self.regions)

    def design(self, n, p, rng):
        """Within-region GP draws plus region means shared by every point of a region."""
        spec = self.covariance_spec(p)
        local = _cached_local_factors(spec)
        within = rng.standard_normal((n, self.regions, local.local.lower.shape[0])) @ local.local.lower.T
        means = rng.standard_normal((n, self.regions)) @ local.between.lower.T

        labels = region_labels(spec.grid_side, self.regions)
        positions = spec.local_positions()
        x = within[:, labels, positions] + means[:, labels]
        return x, max(local.local.jitter, local.between.jitter)


@dataclass(frozen=True, eq=False)
class _RegionFactors:
    local: CholeskyFactor
    between: CholeskyFactor


@lru_cache(maxsize=8)
def _cached_local_factors(spec):
    return _RegionFactors(local=cholesky_factor(spec.local_matrix()), between=cholesky_factor(spec.between_matrix()))


MODELS = {
    1: AutoregressiveModel(1, 0.5),
    2: AutoregressiveModel(2, 0.6),
    3: AutoregressiveModel(3, 0.7),
    4: CompoundSymmetryModel(4, 0.4),
    5: CompoundSymmetryModel(5, 0.5),
    6: CompoundSymmetryModel(6, 0.6),
    7: GaussianProcessModel(7, 10.0),
    8: GaussianProcessModel(8, 5.0),
    9: RegionGaussianProcessModel(9, 10.0),
    10: RegionGaussianProcessModel(10, 5.0),
}


def get_model(model_id):
    try:
        return MODELS[int(model_id)]
    except (KeyError, ValueError, TypeError):
        raise ParameterError(f"model must be one of 1..10, got {model_id!r}")


def parse_model_case(label):
    """'3a' → (3, 'a')."""
    label = str(label).strip().lower()
    if len(label) < 2 or label[-1] not in CASES:
        raise ParameterError(f"model label must look like '3a', got {label!r}")
    return get_model(label[:-1]).model_id, label[-1]


# ==================== DATASET SAMPLING ====================

def sample_dataset(model_id, case, n=None, p=None, seed=0, support_size=None):
    """
    Draw one Dataset from a simulation model.

    X, ε and β* come from independent children of SeedSequence(seed), so
    changing n does not reshuffle the coefficient pattern.
    """
    model = get_model(model_id)
    noise = model.noise_spec(case)
    n = model.default_n if n is None else int(n)
    p = model.default_p if p is None else int(p)
    require_positive('n', n)
    require_positive('p', p)

    x_stream, noise_stream, pattern_stream = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    design, jitter = model.design(n, p, x_stream)
    pattern = model.pattern(p, support_size)
    truth = build_pattern(pattern, p, pattern_stream)
    response = design @ truth + sample_noise(noise, n, noise_stream)
    groups = model.groups(p)

    meta = {
        'model': model.model_id,
        'case': case,
        'seed': int(seed),
        'n': n,
        'p': p,
        'family': model.family,
        'covariance': {'type': type(model.covariance_spec(p)).__name__, **vars(model.covariance_spec(p))},
        'noise': {'sigma1_sq': noise.sigma1_sq, 'sigma2_sq': noise.sigma2_sq, 'contamination': noise.contamination},
        'pattern': {'type': type(pattern).__name__, **vars(pattern)},
        'support': [int(j) for j in np.flatnonzero(truth)],
        'jitter': float(jitter),
    }
    debug_print(f"sampled model {model.model_id}{case}: n={n} p={p} seed={seed} support={len(meta['support'])}")
    return Dataset(design=design, response=response, truth=truth, groups=groups, meta=meta)
