"""Phase two: turn anchor distance estimates into coordinates."""
from __future__ import annotations

import numpy as np

from .distances import _positions_for
from .types import DistanceEstimates, Placement

COND_LIMIT = 1e8


def _cond_2x2(a, b, d):
    """Condition number of symmetric PSD matrices [[a, b], [b, d]] (vectorized)."""
    tr = a + d
    disc = np.sqrt(np.maximum(((a - d) / 2.0) ** 2 + b * b, 0.0))
    lmax = tr / 2.0 + disc
    lmin = tr / 2.0 - disc
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lmin > 0, lmax / lmin, np.inf)
    # all-zero matrices are singular too
    return np.where(lmax > 0, cond, np.inf)


def solve_normal_2x2(ata: np.ndarray, atb: np.ndarray, cond_limit: float = COND_LIMIT):
    """Solve stacked 2x2 normal equations; rows above ``cond_limit`` become NaN.

    ``ata`` has shape ``(m, 3)`` holding ``(a11, a12, a22)``, ``atb`` ``(m, 2)``.
    Returns ``(x, ok)``.
    """
    a, b, d = ata[:, 0], ata[:, 1], ata[:, 2]
    ok = _cond_2x2(a, b, d) <= cond_limit
    det = a * d - b * b
    x = np.full((len(a), 2), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        x[:, 0] = (d * atb[:, 0] - b * atb[:, 1]) / det
        x[:, 1] = (a * atb[:, 1] - b * atb[:, 0]) / det
    x[~ok] = np.nan
    return x, ok


def lateration(est: DistanceEstimates, anchor_positions, min_anchors: int = 3,
               cond_limit: float = COND_LIMIT) -> Placement:
    """Linearized least-squares multilateration for every node.

    The circle equation of each node's last (highest-id) known anchor is
    subtracted from the others, giving ``2 (p_j - p_r) . x = |p_j|^2 - |p_r|^2
    - d_j^2 + d_r^2``.  Nodes with too few anchors or an ill-conditioned
    system stay unpositioned and are tallied in ``diagnostics``.
    """
    ids = est.anchors
    pos = _positions_for(ids, anchor_positions)
    n, k = est.est.shape
    known = est.known()
    count = known.sum(axis=1)
    out = Placement.empty(n)
    diag = {"too_few_anchors": 0, "ill_conditioned": 0}

    cand = np.flatnonzero(count >= min_anchors)
    if len(cand):
        kn = known[cand]
        d = np.where(kn, est.est[cand], 0.0)
        ref = k - 1 - np.argmax(kn[:, ::-1], axis=1)
        p_ref = pos[ref]  # (m, 2)
        d_ref = d[np.arange(len(cand)), ref]
        q = pos[None, :, :] - p_ref[:, None, :]  # (m, k, 2)
        # reference-centred frame: rhs = |p_j - p_r|^2 - d_j^2 + d_r^2
        rhs = (q ** 2).sum(axis=2) - d ** 2 + (d_ref ** 2)[:, None]
        w = kn.astype(float)
        ata = np.stack([
            4 * (w * q[:, :, 0] ** 2).sum(axis=1),
            4 * (w * q[:, :, 0] * q[:, :, 1]).sum(axis=1),
            4 * (w * q[:, :, 1] ** 2).sum(axis=1),
        ], axis=1)
        atb = 2 * np.stack([(w * q[:, :, 0] * rhs).sum(axis=1), (w * q[:, :, 1] * rhs).sum(axis=1)], axis=1)
        x, ok = solve_normal_2x2(ata, atb, cond_limit)
        out.coords[cand] = x + p_ref
        diag["ill_conditioned"] = int((~ok).sum())
    diag["too_few_anchors"] = _short_of_anchors(count, min_anchors, ids)
    _pin_anchors(out, ids, pos)
    out.diagnostics = diag
    return out


def min_max_box(est: DistanceEstimates, anchor_positions, min_anchors: int = 3) -> Placement:
    """Center of the intersection of per-anchor squares of half-side ``d``.

    An empty intersection keeps the clipped bounds (possibly inverted) and
    still reports their center.
    """
    ids = est.anchors
    pos = _positions_for(ids, anchor_positions)
    n, _ = est.est.shape
    known = est.known()
    count = known.sum(axis=1)
    out = Placement.empty(n)
    cand = np.flatnonzero(count >= min_anchors)
    if len(cand):
        d = est.est[cand]
        kn = known[cand]
        lo = np.where(kn[:, :, None], pos[None] - d[:, :, None], -np.inf).max(axis=1)
        hi = np.where(kn[:, :, None], pos[None] + d[:, :, None], np.inf).min(axis=1)
        out.coords[cand] = (lo + hi) / 2.0
    out.diagnostics = {"too_few_anchors": _short_of_anchors(count, min_anchors, ids)}
    _pin_anchors(out, ids, pos)
    return out


def _short_of_anchors(count: np.ndarray, min_anchors: int, ids: np.ndarray) -> int:
    # anchors are pinned afterwards, so they never count as missing a fix
    short = count < min_anchors
    short[ids[ids < len(short)]] = False
    return int(short.sum())


def _pin_anchors(out: Placement, ids: np.ndarray, pos: np.ndarray) -> None:
    # anchors can be positions-only entries when est has extra rows for them
    inside = ids < out.n
    out.coords[ids[inside]] = pos[inside]
