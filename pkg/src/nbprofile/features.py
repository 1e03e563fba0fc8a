"""Feature vectors per neighborhood.

For every (instance, frame) a neighborhood contributes four columns: the two
isometric log-ratio coordinates of its (improve, worsen, nothing)
composition and the aggregation scores of its improvement and worsening
magnitudes.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregate import FrameRatios, FrameScores

COLUMN_KINDS = ("z1", "z2", "rho_improve", "rho_worsen")
_SQRT_HALF = math.sqrt(0.5)
_SQRT_TWO_THIRDS = math.sqrt(2.0 / 3.0)


def replace_zeros(c: Sequence[float], epsilon: float) -> np.ndarray:
    """Multiplicative replacement: zeros become ``epsilon`` and the nonzero
    parts shrink proportionally so the total stays 1."""
    x = np.asarray(c, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)) or abs(x.sum() - 1.0) > 1e-12:
        raise ValueError(f"not a composition: {c}")
    zeros = x == 0
    nz = int(zeros.sum())
    if nz == 0:
        return x
    if epsilon <= 0:
        raise ValueError("zero parts need a positive replacement epsilon")
    if nz * epsilon >= 1:
        raise ValueError(f"epsilon {epsilon} too large for {nz} zero parts")
    return np.where(zeros, epsilon, x * (1.0 - nz * epsilon))


def ilr(c: Sequence[float], epsilon: float = 0.0) -> tuple[float, float]:
    """Balance coordinates of a 3-part composition.

    ``z1`` contrasts parts 1 and 2, ``z2`` contrasts their geometric mean
    with part 3.  The barycenter maps to the origin.
    """
    x1, x2, x3 = replace_zeros(c, epsilon)
    z1 = _SQRT_HALF * math.log(x1 / x2)
    z2 = _SQRT_TWO_THIRDS * (0.5 * (math.log(x1) + math.log(x2)) - math.log(x3))
    return z1, z2


def ilr_inverse(z1: float, z2: float) -> np.ndarray:
    # rows of the contrast matrix used by ilr()
    psi = np.array([
        [_SQRT_HALF, -_SQRT_HALF, 0.0],
        [1.0 / math.sqrt(6.0), 1.0 / math.sqrt(6.0), -2.0 / math.sqrt(6.0)],
    ])
    clr = np.array([z1, z2]) @ psi
    x = np.exp(clr - clr.max())
    return x / x.sum()


@dataclass
class FeatureMatrix:
    values: np.ndarray  # (n_rows, n_cols)
    row_ids: tuple[str, ...]
    labels: tuple[str, ...]
    missing: np.ndarray  # bool, same shape as values
    shift: np.ndarray | None = field(default=None)
    scale: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.missing = np.asarray(self.missing, dtype=bool)
        if self.values.shape != (len(self.row_ids), len(self.labels)) or self.missing.shape != self.values.shape:
            raise ValueError("feature matrix dimensions do not match its labels")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def columns_for(self, instance_id: str) -> list[int]:
        return [j for j, lab in enumerate(self.labels) if lab.split(":", 1)[0] == instance_id]

    def to_text(self, comments: Sequence[str] = ()) -> str:
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        buf.write("neighborhood\t" + "\t".join(self.labels) + "\n")
        for rid, row in zip(self.row_ids, self.values):
            buf.write(rid + "\t" + "\t".join(format(v, ".17g") for v in row) + "\n")
        return buf.getvalue()


def default_epsilon(n_iters: float) -> float:
    """Pseudo-count floor used for zero ratios: half an observation."""
    return 0.5 / n_iters


def instance_block(ratios: FrameRatios, scores: FrameScores) -> tuple[np.ndarray, np.ndarray]:
    """(values, missing) of shape (m, 4 * n_frames) for one instance.

    Missing compositions are imputed by the mean ILR coordinates of the
    neighborhoods observed in that frame (origin if none was).
    """
    m, F = ratios.n_iters.shape
    vals = np.zeros((m, 4 * F))
    miss = np.zeros((m, 4 * F), dtype=bool)
    for f in range(F):
        z = np.full((m, 2), np.nan)
        for k in range(m):
            n = ratios.n_iters[k, f]
            if n > 0:
                z[k] = ilr(ratios.composition(k, f), default_epsilon(n))
        absent = np.isnan(z[:, 0])
        fill = z[~absent].mean(axis=0) if np.any(~absent) else np.zeros(2)
        z[absent] = fill
        c = 4 * f
        vals[:, c: c + 2] = z
        vals[:, c + 2] = scores.rho_improve[:, f]
        vals[:, c + 3] = scores.rho_worsen[:, f]
        miss[:, c: c + 2] = absent[:, None]
        miss[:, c + 2: c + 4] = absent[:, None] | scores.empty_frames[f]
    return vals, miss


def assemble(
    per_instance: Sequence[tuple[str, Sequence[str], FrameRatios, FrameScores]],
) -> FeatureMatrix:
    """Concatenate instance blocks column-wise.

    ``per_instance`` holds ``(instance_id, neighborhood_ids, ratios, scores)``
    tuples; every instance must cover the same neighborhoods (rows follow
    the first instance's order).
    """
    if not per_instance:
        raise ValueError("no instances to assemble")
    row_ids = tuple(per_instance[0][1])
    blocks, masks, labels = [], [], []
    for inst_id, nids, ratios, scores in per_instance:
        if sorted(nids) != sorted(row_ids) or len(nids) != len(row_ids):
            raise ValueError(f"instance {inst_id!r} covers a different neighborhood set")
        perm = [list(nids).index(r) for r in row_ids]
        vals, miss = instance_block(ratios, scores)
        blocks.append(vals[perm])
        masks.append(miss[perm])
        F = ratios.n_iters.shape[1]
        labels += [f"{inst_id}:f{f + 1}:{kind}" for f in range(F) for kind in COLUMN_KINDS]
    return FeatureMatrix(np.hstack(blocks), row_ids, tuple(labels), np.hstack(masks))


def standardize(fm: FeatureMatrix) -> FeatureMatrix:
    """Zero-mean, unit-variance columns; constant columns become 0."""
    X = fm.values
    if X.shape[0] < 2:
        raise ValueError("standardize needs at least two rows")
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    const = sd <= 1e-12 * np.maximum(1.0, np.abs(mu))
    scale = np.where(const, 1.0, sd)
    Z = (X - mu) / scale
    Z[:, const] = 0.0
    return FeatureMatrix(Z, fm.row_ids, fm.labels, fm.missing, shift=mu, scale=scale)
