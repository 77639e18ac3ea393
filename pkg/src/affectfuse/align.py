"""Dynamic time warping and iterative multi-sequence alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RaterSet, standardize_values
from .errors import ParameterError

__all__ = ["WarpPath", "AlignmentResult", "dtw", "multi_align", "warp_to_reference"]


@dataclass(frozen=True)
class WarpPath:
    """Monotone alignment path between a source and a reference sequence.

    ``pairs`` has shape (P, 2) with columns (source_index, reference_index),
    starting at (0, 0), ending at (n-1, m-1), each step advancing one or both
    indices by exactly 1. ``cost`` is the sum of local distances along the
    path.
    """

    pairs: np.ndarray
    cost: float

    def __post_init__(self) -> None:
        pairs = np.asarray(self.pairs, dtype=np.int64)
        object.__setattr__(self, "pairs", pairs)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 1:
            raise ParameterError("warp path must be a (P, 2) index array")
        if pairs[0, 0] != 0 or pairs[0, 1] != 0:
            raise ParameterError("warp path must start at (0, 0)")
        steps = np.diff(pairs, axis=0)
        if steps.size and (steps.min() < 0 or steps.max() > 1 or steps.sum(axis=1).min() < 1):
            raise ParameterError("warp path steps must advance one or both indices by 1")


@dataclass(frozen=True)
class AlignmentResult:
    """Outcome of aligning several equal-length traces to a common reference."""

    warped: np.ndarray  # (n_raters, grid_length)
    paths: tuple[WarpPath, ...]
    reference: np.ndarray
    iterations: int
    converged: bool


def dtw(a, b, band: int | None = None) -> WarpPath:
    """Optimal-cost DTW path between 1-d sequences ``a`` (source) and ``b`` (reference).

    Local cost is ``|a[i] - b[j]|``. With ``band`` given, cells outside the
    Sakoe-Chiba band ``|i - j| <= band`` are unreachable; the band must be at
    least ``|len(a) - len(b)|`` or no path exists. Ties during traceback
    (up to a relative tolerance that absorbs float rounding between
    equal-cost alternatives) prefer the diagonal step, then the
    source-advancing step, then the reference-advancing step, so the
    returned path is deterministic and stable under affine input maps.

    Returns
    -------
    WarpPath
        Path pairs plus the cost recomputed as the sum of local distances
        along the traced path.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise ParameterError("dtw inputs must be non-empty 1-d sequences")
    n, m = a.size, b.size
    if band is not None:
        band = int(band)
        if band < 0:
            raise ParameterError("band must be >= 0")
        if band < abs(n - m):
            raise ParameterError(
                f"band {band} < length difference {abs(n - m)}: no feasible path"
            )

    # Padded cost-to-reach table; row i column j = best cost ending at
    # sample pair (i-1, j-1). Row recurrence D[i,j] = c + min(diag, up, left)
    # is evaluated with the left-dependency folded into a running minimum:
    # D[i,j] = S[j] + accmin(A + c - S)[j] where S is the in-row cumsum of c.
    dmat = np.full((n + 1, m + 1), np.inf)
    dmat[0, 0] = 0.0
    for i in range(1, n + 1):
        jlo = 1 if band is None else max(1, i - band)
        jhi = m if band is None else min(m, i + band)
        if jlo > jhi:
            continue
        crow = np.abs(a[i - 1] - b[jlo - 1 : jhi])
        best_prev = np.minimum(dmat[i - 1, jlo - 1 : jhi], dmat[i - 1, jlo : jhi + 1])
        scan = np.cumsum(crow)
        dmat[i, jlo : jhi + 1] = scan + np.minimum.accumulate(best_prev + crow - scan)
    if not np.isfinite(dmat[n, m]):
        raise ParameterError("no feasible warp path under the given band")

    # Traceback with deterministic tie-breaking: diagonal, then source
    # advance, then reference advance. Ties are judged with a small relative
    # tolerance: alternative paths that cost the same in exact arithmetic sum
    # the same local distances in different orders, so their table values
    # round apart by ~1e-16, and a strict comparison would let that noise
    # pick different paths for inputs equal up to an affine map. Integer
    # inputs keep exact table values, so the tolerance never fires there.
    i, j = n, m
    rev = [(i - 1, j - 1)]
    while i > 1 or j > 1:
        options = (
            (dmat[i - 1, j - 1], i - 1, j - 1),
            (dmat[i - 1, j], i - 1, j),
            (dmat[i, j - 1], i, j - 1),
        )
        best = min(opt[0] for opt in options)
        tol = 1e-9 * max(1.0, abs(best))
        for val, pi, pj in options:
            if val <= best + tol:
                i, j = pi, pj
                break
        rev.append((i - 1, j - 1))
    pairs = np.asarray(rev[::-1], dtype=np.int64)
    cost = float(np.abs(a[pairs[:, 0]] - b[pairs[:, 1]]).sum())
    return WarpPath(pairs=pairs, cost=cost)


def warp_to_reference(values: np.ndarray, path: WarpPath, grid_length: int) -> np.ndarray:
    """Project ``values`` onto the reference grid of ``path``.

    Source samples mapped to the same reference index are averaged, so the
    output always has ``grid_length`` samples with no holes.
    """
    src = path.pairs[:, 0]
    ref = path.pairs[:, 1]
    if ref.max() >= grid_length:
        raise ParameterError("path reference indices exceed the target grid")
    totals = np.bincount(ref, weights=np.asarray(values, dtype=np.float64)[src], minlength=grid_length)
    counts = np.bincount(ref, minlength=grid_length)
    if counts.min() == 0:
        raise ParameterError("warp path does not cover the full reference grid")
    return totals / counts


def default_band(length: int) -> int:
    """Default Sakoe-Chiba radius: 10% of the sequence length, at least 1."""
    return max(1, int(round(0.1 * length)))


def multi_align(
    rater_set: RaterSet,
    *,
    max_iter: int = 20,
    tol: float = 1e-4,
    band: int | None = None,
    reference: str | int = "mean",
) -> AlignmentResult:
    """Align all traces of a rater set onto one common time grid.

    Iterative reference-based scheme: the reference starts as the mean of the
    (defensively re-standardized) traces; every trace is DTW-warped onto the
    reference grid, the reference becomes the mean of the warped traces, and
    the loop repeats until the largest reference change drops below ``tol``
    or ``max_iter`` rounds have run. The grid keeps the input length, so the
    warped traces line up with the original label grid.

    ``reference=k`` (an integer rater index) skips the iteration and warps
    every trace once onto rater k's trace.

    ``band`` defaults to 10% of the sequence length.
    """
    if len(rater_set) < 2:
        raise ParameterError("multi_align needs at least 2 traces")
    if max_iter < 1:
        raise ParameterError("max_iter must be >= 1")
    if tol <= 0:
        raise ParameterError("tol must be positive")
    length = rater_set.n_samples
    if band is None:
        band = default_band(length)
    traces = np.stack([standardize_values(t.values)[0] for t in rater_set.traces])

    if isinstance(reference, (int, np.integer)):
        if not 0 <= reference < len(rater_set):
            raise ParameterError(f"reference rater index {reference} out of range")
        ref = traces[int(reference)]
        paths = tuple(dtw(tr, ref, band=band) for tr in traces)
        warped = np.stack([warp_to_reference(tr, p, length) for tr, p in zip(traces, paths)])
        return AlignmentResult(warped=warped, paths=paths, reference=ref, iterations=1, converged=True)
    if reference != "mean":
        raise ParameterError("reference must be 'mean' or a rater index")

    ref = traces.mean(axis=0)
    warped = traces
    paths: tuple[WarpPath, ...] = ()
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        paths = tuple(dtw(tr, ref, band=band) for tr in traces)
        warped = np.stack([warp_to_reference(tr, p, length) for tr, p in zip(traces, paths)])
        new_ref = warped.mean(axis=0)
        delta = float(np.max(np.abs(new_ref - ref)))
        ref = new_ref
        if delta < tol:
            converged = True
            break
    return AlignmentResult(
        warped=warped, paths=paths, reference=ref, iterations=iterations, converged=converged
    )
