"""Independent brute-force verifiers backing the acceptance suite.

Nothing here reuses the main pipeline's evaluation paths: complex
logarithms are assembled from ln|.| and atan2, compositions are evaluated
with cmath in plain loops, and box counting sees only point clouds.
Disagreement between an oracle and the pipeline is a failure of the run,
not of the oracle.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, NumericError
from .loglift import MapFamily
from .numerics import TWO_PI, chunked_fsum
from .tractgeom import GSet, GeometryBudget, Rect, SquareSpec

# ---------------------------------------------------------------------------
# Box counting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxCountEstimate:
    scales: tuple
    counts: tuple
    slope: float
    residual: float


def box_counting_dim(points, scales: Sequence[float]) -> BoxCountEstimate:
    """Least-squares box-counting dimension of a 2-d point cloud.

    The grid is anchored at the bounding-box corner (single anchor, no
    averaging) so the estimate is deterministic.  Needs at least 1e4
    points and 5 scales spanning two decades relative to the cloud
    diameter.
    """
    pts = np.asarray(points)
    if np.iscomplexobj(pts):
        xy = np.column_stack([pts.real, pts.imag])
    else:
        xy = np.asarray(pts, dtype=float).reshape(-1, 2)
    if xy.shape[0] < 10_000:
        raise ConfigError(f"box counting needs >= 1e4 points, got {xy.shape[0]}")
    lo = xy.min(axis=0)
    hi = xy.max(axis=0)
    diam = float(np.hypot(*(hi - lo)))
    if diam == 0.0:
        raise ConfigError("degenerate point cloud (zero diameter)")
    scales = sorted(float(s) for s in scales)
    if len(scales) < 5:
        raise ConfigError("need at least 5 scales")
    if scales[-1] / scales[0] < 100.0:
        raise ConfigError("scales must span at least two decades")
    counts = []
    for eps in scales:
        ij = np.floor((xy - lo) / eps).astype(np.int64)
        counts.append(int(np.unique(ij[:, 0] * (2 ** 31) + ij[:, 1]).size))
    x = np.log(1.0 / np.asarray(scales))
    y = np.log(np.asarray(counts, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return BoxCountEstimate(scales=tuple(scales), counts=tuple(counts),
                            slope=float(slope), residual=resid)


def cantor_middle_thirds(count: int = 100_000, depth: int = 35,
                         seed: int = 7) -> np.ndarray:
    """Random points of the middle-thirds set on [0, 1], as complex values."""
    rng = np.random.default_rng(seed)
    digits = 2 * rng.integers(0, 2, size=(count, depth))
    weights = 3.0 ** -np.arange(1, depth + 1)
    xs = digits @ weights
    return xs.astype(complex)


# ---------------------------------------------------------------------------
# Brute-force pressure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BrutePressure:
    n: int
    t: float
    value: float            # (1/n) log sum over words of |word derivative|^t
    slack_log: float        # per-level distortion allowance ln C
    n_words: int


def brute_force_pressure_similarity(weights: Sequence[float], n: int, t: float) -> float:
    """(1/n) log sum over n-words of similarity systems (exact ratios).

    Similarities have no distortion, so the value is independent of n.
    """
    weights = [float(w) for w in weights]
    if len(weights) ** n > 1_000_000:
        raise ConfigError(f"{len(weights)}^{n} words exceed the brute-force budget")
    terms = []
    for word in itertools.product(weights, repeat=n):
        prod = 1.0
        for w in word:
            prod *= w
        terms.append(prod ** t)
    return math.log(chunked_fsum(terms)) / n


def _branch_point(family: MapFamily, s: int, zeta: complex) -> complex:
    # independent principal log: ln|.| + i atan2
    w = zeta - family.log_lam
    return complex(math.log(abs(w)), math.atan2(w.imag, w.real)) + TWO_PI * 1j * s


def _branch_deriv(family: MapFamily, zeta: complex) -> complex:
    return 1.0 / (zeta - family.log_lam)


def brute_force_pressure(family: MapFamily, letters: Sequence, spec: SquareSpec,
                         n: int, t: float, distortion_c: float = 1.0) -> BrutePressure:
    """(1/n) log sum over all n-words of |(g^word)'(center Q)|^t.

    The word norm is approximated by the derivative at the center of Q;
    the distortion slack C^n is returned separately, never folded in.
    Refuses budgets beyond 1e6 words.
    """
    letters = [(int(u), int(s)) for (u, s) in letters]
    if len(letters) ** n > 1_000_000:
        raise ConfigError(f"{len(letters)}^{n} words exceed the brute-force budget")
    if family.kind != "exponential":
        raise ConfigError("the brute-force oracle covers the exponential family")
    z0 = spec.outer.center
    terms = []
    for word in itertools.product(letters, repeat=n):
        z = z0
        deriv = complex(1.0)
        for (u, s) in reversed(word):
            first = _branch_point(family, s, z)
            d = _branch_deriv(family, z) * _branch_deriv(family, first)
            z = _branch_point(family, u, first)
            deriv *= d
        terms.append(abs(deriv) ** t)
    total = chunked_fsum(terms)
    return BrutePressure(n=n, t=t, value=math.log(total) / n,
                         slack_log=math.log(distortion_c), n_words=len(terms))


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def fd_derivative_check(op: Callable, samples: Sequence[complex],
                        rel_step: float = 1e-5) -> float:
    """Worst relative error of closed-form derivatives against central differences.

    op maps a complex point to (value, derivative).  The step is relative
    to the sample magnitude.  Raises if op is undefined at a perturbed
    point.
    """
    worst = 0.0
    for z in samples:
        z = complex(z)
        h = rel_step * max(1.0, abs(z))
        _, d_closed = op(z)
        vp, _ = op(z + h)
        vm, _ = op(z - h)
        d_fd = (vp - vm) / (2.0 * h)
        denom = max(abs(d_closed), 1e-300)
        worst = max(worst, abs(d_fd - d_closed) / denom)
    return worst


# ---------------------------------------------------------------------------
# Containment recheck
# ---------------------------------------------------------------------------

def _independent_two_level(family: MapFamily, u, s, pts: np.ndarray) -> np.ndarray:
    """cell map images via the ln|.| + atan2 evaluation path."""
    c = family.log_lam
    w = pts - c
    first = 0.5 * np.log(w.real ** 2 + w.imag ** 2) + 1j * np.arctan2(w.imag, w.real) \
        + TWO_PI * 1j * np.asarray(s, dtype=float)
    w2 = first - c
    return 0.5 * np.log(w2.real ** 2 + w2.imag ** 2) + 1j * np.arctan2(w2.imag, w2.real) \
        + TWO_PI * 1j * np.asarray(u, dtype=float)


def containment_recheck(family: MapFamily, u: int, s: int, spec: SquareSpec,
                        budget: GeometryBudget, density: int = 10,
                        recorded_verdict: Optional[str] = None) -> str:
    """Repeat one containment decision at density x boundary sampling.

    Uses an independent evaluation path and its own Lipschitz padding.
    When a recorded verdict is supplied, disagreement raises NumericError.
    """
    if family.kind != "exponential":
        raise ConfigError("the recheck oracle covers the exponential family")
    n = budget.boundary_samples * density
    pts = spec.outer.boundary_points(n)
    imgs = _independent_two_level(family, u, s, pts)
    # independent Lipschitz bound from the sampled boundary derivative
    c = family.log_lam
    d_first = np.abs(pts - c)
    xi = np.abs(0.5 * np.log((pts - c).real ** 2 + (pts - c).imag ** 2)
                + 1j * np.arctan2((pts - c).imag, (pts - c).real)
                + TWO_PI * 1j * float(s) - c)
    lip = float(np.max(1.0 / (xi * d_first))) * 1.25  # sampled sup padded by 25%
    spacing = spec.outer.perimeter / n
    delta = budget.margin + lip * spacing
    inside = bool(np.all(spec.outer.contains(imgs, margin=delta)))
    near = bool(np.all(spec.outer.contains(imgs, margin=0.0)))
    verdict = "inside" if inside else ("borderline" if near else "outside")
    if recorded_verdict is not None:
        agree = (verdict == recorded_verdict
                 or (verdict == "borderline" and recorded_verdict == "outside"))
        if not agree:
            raise NumericError(
                f"containment recheck disagrees at (u,s)=({u},{s}): "
                f"recorded {recorded_verdict}, recheck {verdict}")
    return verdict


@dataclass(frozen=True)
class RecheckReport:
    n_checked: int
    n_densely_sampled: int
    n_flagged: int
    flagged: tuple
    min_margin: float          # worst enclosure margin over all rechecked cells


def recheck_gset(family: MapFamily, gset: GSet, spec: SquareSpec,
                 budget: GeometryBudget, density: int = 10,
                 dense_sample: int = 2000, seed: int = 20210) -> RecheckReport:
    """Recheck every explicit member of G with independent evaluations.

    All cells pass through an independent vectorized certificate (exact
    per-index interval enclosures recomputed with atan2/hypot arithmetic);
    a deterministic subsample additionally gets the full density x
    boundary-sampled recheck.
    """
    if family.kind != "exponential":
        raise ConfigError("the recheck oracle covers the exponential family")
    flagged = []
    n_checked = 0
    min_margin = math.inf
    c = family.log_lam
    rect = spec.outer
    # independent envelope constants from a dense boundary grid of Q
    bpts = rect.boundary_points(4096)
    w = bpts - c
    log_first = 0.5 * np.log(w.real ** 2 + w.imag ** 2) + 1j * np.arctan2(w.imag, w.real)
    b_ind = float(np.max(np.abs(log_first - c))) * (1.0 + 1e-9)
    for win in gset.windows:
        for start in range(win.s_lo, win.s_hi + 1, 1 << 20):
            end = min(start + (1 << 20) - 1, win.s_hi)
            ss = np.arange(start, end + 1, dtype=np.int64)
            n_checked += ss.size
            two_pi_s = TWO_PI * np.abs(ss).astype(float)
            lo_re = np.log(two_pi_s - b_ind)
            hi_re = np.log(two_pi_s + b_ind)
            dev = np.arcsin(np.minimum(1.0, b_ind / (two_pi_s - b_ind)))
            mid = TWO_PI * win.u + np.sign(ss) * 0.5 * math.pi
            margin = np.minimum.reduce([
                lo_re - (rect.re_lo + budget.margin),
                (rect.re_hi - budget.margin) - hi_re,
                (mid - dev) - (rect.im_lo + budget.margin),
                (rect.im_hi - budget.margin) - (mid + dev),
            ])
            min_margin = min(min_margin, float(np.min(margin)))
            bad = np.nonzero(margin < 0)[0]
            for i in bad:
                # enclosure inconclusive: fall through to dense sampling
                v = containment_recheck(family, win.u, int(ss[i]), spec, budget,
                                        density=density)
                if v == "outside":
                    flagged.append((win.u, int(ss[i])))
    # deterministic dense-sampled subsample
    rng = np.random.default_rng(seed)
    n_dense = 0
    if gset.n_explicit:
        take = min(dense_sample, gset.n_explicit)
        ranks = np.sort(rng.choice(gset.n_explicit, size=take, replace=False))
        us, ss = gset.letters_from_ranks(ranks)
        for u, s in zip(us, ss):
            v = containment_recheck(family, int(u), int(s), spec, budget, density=density)
            n_dense += 1
            if v == "outside":
                flagged.append((int(u), int(s)))
    return RecheckReport(n_checked=n_checked, n_densely_sampled=n_dense,
                         n_flagged=len(flagged), flagged=tuple(flagged[:64]),
                         min_margin=min_margin)
