"""
Group structure, the group penalty λ Σ_b ‖β_b‖₂, its prox and the ℓ2-ball projection.
"""

import numpy as np

from rct_base import ParameterError, ShapeError, require_nonnegative, require_positive


# ==================== GROUP PARTITION ====================

class GroupPartition:
    """
    Disjoint index blocks covering {0..p−1}.

    Blocks are explicit index arrays, so non-contiguous regions (image
    sub-regions laid out in row-major order) are representable. `labels[j]`
    is the block that owns coordinate j.
    """

    def __init__(self, blocks, p=None):
        blocks = [np.asarray(block, dtype=np.intp).ravel() for block in blocks]
        if not blocks:
            raise ParameterError("a group partition needs at least one block")
        if any(block.size == 0 for block in blocks):
            raise ParameterError("every block must be nonempty")

        all_idx = np.concatenate(blocks)
        if p is None:
            p = int(all_idx.max()) + 1
        if all_idx.min() < 0 or all_idx.max() >= p:
            raise ParameterError(f"block indices must lie in [0, {p - 1}]")
        counts = np.bincount(all_idx, minlength=p)
        if (counts > 1).any():
            raise ParameterError(f"blocks overlap at index {int(np.argmax(counts > 1))}")
        if (counts == 0).any():
            raise ParameterError(f"blocks do not cover index {int(np.argmax(counts == 0))}")

        self.blocks = tuple(blocks)
        self.p = int(p)
        self.labels = np.empty(self.p, dtype=np.intp)
        for b, block in enumerate(self.blocks):
            self.labels[block] = b
        self.sizes = np.array([block.size for block in self.blocks], dtype=np.intp)

    @property
    def n_groups(self):
        return len(self.blocks)

    @classmethod
    def singletons(cls, p):
        """B = p singleton blocks: the group penalty becomes λ‖β‖₁."""
        return cls([[j] for j in range(p)], p=p)

    @classmethod
    def contiguous(cls, p, size):
        """Consecutive blocks of `size` indices (the last may be shorter)."""
        require_positive('group size', size)
        return cls([range(start, min(start + size, p)) for start in range(0, p, size)], p=p)

    @classmethod
    def from_lists(cls, lists, p=None):
        return cls(lists, p=p)

    def to_lists(self):
        return [[int(j) for j in block] for block in self.blocks]

    def block_norms(self, v):
        """ℓ2 norm of v restricted to every block, in block order."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.p,):
            raise ShapeError(f"vector has shape {v.shape}, partition covers {self.p} coordinates")
        return np.sqrt(np.bincount(self.labels, weights=v * v, minlength=self.n_groups))

    def active(self, v):
        """Indices of blocks with at least one nonzero coordinate."""
        v = np.asarray(v, dtype=float)
        hits = np.bincount(self.labels, weights=(v != 0).astype(float), minlength=self.n_groups)
        return [int(b) for b in np.flatnonzero(hits)]

    def __eq__(self, other):
        if not isinstance(other, GroupPartition):
            return NotImplemented
        return self.p == other.p and self.to_lists() == other.to_lists()

    def __repr__(self):
        return f"GroupPartition(p={self.p}, groups={self.n_groups})"


# ==================== PENALTY, PROX, PROJECTION ====================

def penalty_value(beta, groups, lam):
    """λ · Σ_b ‖β_b‖₂."""
    require_nonnegative('lambda', lam)
    return float(lam * np.sum(groups.block_norms(beta)))


def group_soft_threshold(xi, groups, t):
    """
    Group-wise soft thresholding S_t(ξ)_b = ξ_b (‖ξ_b‖₂ − t)_+ / ‖ξ_b‖₂.

    Blocks with ‖ξ_b‖₂ ≤ t come back as exact (+0.0) zeros; zero-norm blocks
    never reach the division.
    """
    require_nonnegative('threshold', t)
    xi = np.asarray(xi, dtype=float)
    norms = groups.block_norms(xi)
    keep = norms > t
    scale = np.zeros_like(norms)
    scale[keep] = (norms[keep] - t) / norms[keep]
    coord_scale = scale[groups.labels]
    return np.where(coord_scale > 0, xi * coord_scale, 0.0)


def project_l2_ball(beta, radius):
    """
    Projection onto {‖β‖₂ ≤ r}.

    The rescaled vector is nudged down by ulps if rounding leaves it outside
    the ball, so the result is feasible and a second projection is a no-op.
    """
    require_positive('radius', radius)
    beta = np.asarray(beta, dtype=float)
    norm = np.linalg.norm(beta)
    if norm <= radius:
        return beta.copy()
    factor = radius / norm
    projected = beta * factor
    while np.linalg.norm(projected) > radius:
        factor = np.nextafter(factor, 0.0)
        projected = beta * factor
    return projected
