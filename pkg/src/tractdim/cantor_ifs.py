"""The conformal iterated function system generated by the admissible cells.

Each admissible pair (u, s) defines a contraction of Q into itself,

    g_{u,s}(z) = F_inv_u(F_inv_s(z)),

and finite words over the admissible alphabet define cylinder maps by
composition.  The attractor is sampled through random words; the lift F
acts on the samples as the two-step left shift, which is what the
invariance check verifies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConstructionError, NumericError
from .loglift import MapFamily
from .numerics import TWO_PI
from .tractgeom import GSet, SquareSpec

# exp overflows past this; plane projections switch to log-polar records
_EXP_OVERFLOW_RE = 700.0


def _as_word(word) -> np.ndarray:
    arr = np.asarray(word, dtype=np.int64)
    if arr.ndim == 1 and arr.size == 2:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ConstructionError("a word is a nonempty sequence of (u, s) pairs")
    return arr


def _letters_in_gset(word: np.ndarray, gset: GSet) -> bool:
    for u, s in word:
        ok = any(w.u == u and w.s_lo <= s <= w.s_hi for w in gset.windows)
        if not ok:
            return False
    return True


def cylinder_eval(family: MapFamily, word, z, spec: Optional[SquareSpec] = None,
                  gset: Optional[GSet] = None):
    """Evaluate the cylinder map of a word at z, with its derivative.

    Letters are applied right to left.  When spec is given, every
    intermediate point is required to stay in Q; leaving Q means some
    letter is not admissible and is flagged as an invariant breach.
    """
    word = _as_word(word)
    if gset is not None and not _letters_in_gset(word, gset):
        raise ConstructionError("word contains a letter outside the admissible set")
    val = np.asarray(z, dtype=complex)
    scalar = val.ndim == 0
    val = np.atleast_1d(val)
    deriv = np.ones_like(val)
    if spec is not None and not np.all(spec.outer.contains(val)):
        raise ConstructionError("evaluation point outside Q")
    for u, s in word[::-1]:
        first = np.asarray(family.inv0(val)) + TWO_PI * 1j * int(s)
        if np.any(np.real(first) <= family.ln_r0):
            raise ConstructionError(
                f"intermediate point leaves the half plane at letter ({u},{s})")
        d = np.asarray(family.inv0_deriv(val)) * np.asarray(family.inv0_deriv(first))
        val = np.asarray(family.inv0(first)) + TWO_PI * 1j * int(u)
        deriv = deriv * d
        if spec is not None and not np.all(spec.outer.contains(val)):
            raise ConstructionError(
                f"cylinder image leaves Q at letter ({u},{s}); letter not in G?")
    if scalar:
        return complex(val[0]), complex(deriv[0])
    return val, deriv


def cylinder_fixed_point(family: MapFamily, word, spec: SquareSpec,
                         tol: float = 1e-12, max_iter: int = 1000):
    """Fixed point of the cylinder map and the multiplier of the return map.

    Iterates from the center of Q; contraction makes convergence
    geometric.  The multiplier is the derivative of the expanding return
    composition at the fixed point, the reciprocal of the cylinder
    derivative, so |multiplier| > 1.
    """
    word = _as_word(word)
    z = spec.outer.center
    for _ in range(max_iter):
        nxt, _ = cylinder_eval(family, word, z, spec=spec)
        if abs(nxt - z) < tol:
            z = nxt
            break
        z = nxt
    else:
        raise NumericError(f"fixed-point iteration did not converge in {max_iter} steps")
    _, deriv = cylinder_eval(family, word, z, spec=spec)
    if deriv == 0:
        raise NumericError("degenerate cylinder derivative at the fixed point")
    return z, 1.0 / deriv


@dataclass(frozen=True)
class LimitSample:
    """Sampled attractor points with their generating words.

    `points` are the depth-step images of the center of Q; `levels[k]`
    holds the images under the word suffix starting at letter k, so
    levels[0] is `points` and levels[k] drops the first k letters (used
    by the shift-invariance check).
    """

    points: np.ndarray
    words_u: np.ndarray       # (count, depth)
    words_s: np.ndarray       # (count, depth)
    depth: int
    seed: int
    levels: tuple             # depth + 1 arrays of sampled suffix images
    word_ranks: np.ndarray

    @property
    def count(self) -> int:
        return int(self.points.size)


def sample_limit_set(family: MapFamily, gset: GSet, spec: SquareSpec,
                     depth: int = 8, count: int = 10000, seed: int = 42) -> LimitSample:
    """Sample the attractor with uniform random words over the explicit letters.

    Deterministic for a fixed seed; rows are ordered by word rank
    (lexicographic in the flat letter ranks), so output order does not
    depend on how the evaluation was scheduled.
    """
    if gset.n_explicit == 0:
        raise ConstructionError("cannot sample: no explicit letters in G")
    if depth < 1:
        raise ConstructionError("depth must be >= 1")
    rng = np.random.default_rng(seed)
    ranks = rng.integers(0, gset.n_explicit, size=(count, depth), dtype=np.int64)
    order = np.lexsort(tuple(ranks[:, k] for k in range(depth - 1, -1, -1)))
    ranks = ranks[order]
    u, s = gset.letters_from_ranks(ranks.ravel())
    words_u = u.reshape(count, depth)
    words_s = s.reshape(count, depth)
    levels = [None] * (depth + 1)
    z = np.full(count, spec.outer.center, dtype=complex)
    levels[depth] = z.copy()
    for k in range(depth - 1, -1, -1):
        first = np.asarray(family.inv0(z)) + TWO_PI * 1j * words_s[:, k]
        if np.any(np.real(first) <= family.ln_r0):
            raise ConstructionError("sampled intermediate point left the half plane")
        z = np.asarray(family.inv0(first)) + TWO_PI * 1j * words_u[:, k]
        levels[k] = z.copy()
        if not np.all(spec.outer.contains(z)):
            raise ConstructionError("sampled point left Q; letters outside G?")
    return LimitSample(points=levels[0], words_u=words_u, words_s=words_s,
                       depth=depth, seed=seed, levels=tuple(levels),
                       word_ranks=np.arange(count, dtype=np.int64))


@dataclass(frozen=True)
class PlaneProjection:
    """Exponential projection of a lifted sample to the dynamical plane.

    Rows with lifted real part beyond the exp range are emitted in
    log-polar form: `log_polar` marks them and for those rows `points`
    stores ln|.| + i*arg instead of the plane value.
    """

    points: np.ndarray
    log_polar: np.ndarray
    image_points: np.ndarray      # projections of the F-images
    image_log_polar: np.ndarray
    conjugacy_residual: float


def project_to_plane(family: MapFamily, sample: LimitSample) -> PlaneProjection:
    """Project sampled points (and their F-images) by exp, minus the offset.

    Also verifies the conjugacy f(exp z) = exp(F z) on the non-overflowing
    rows at relative tolerance 1e-9.
    """
    z = sample.points
    pts, logp = _project(z, family.offset)
    fz = np.asarray(family.lift(z))
    ipts, ilogp = _project(fz, family.offset)
    ok = ~logp & ~ilogp
    resid = 0.0
    if np.any(ok):
        lhs = np.asarray(family.plane_map(np.exp(z[ok])))
        rhs = np.exp(fz[ok])
        resid = float(np.max(np.abs(lhs - rhs) / (1.0 + np.abs(rhs))))
        if resid > 1e-9:
            raise ConstructionError(f"conjugacy residual {resid:.3g} exceeds 1e-9")
    if np.any(~logp) and np.any(pts[~logp] == 0):
        raise ConstructionError("plane projection produced 0")
    return PlaneProjection(points=pts, log_polar=logp, image_points=ipts,
                           image_log_polar=ilogp, conjugacy_residual=resid)


def _project(z: np.ndarray, offset: complex):
    logp = np.real(z) > _EXP_OVERFLOW_RE
    out = np.empty_like(z)
    safe = ~logp
    out[safe] = np.exp(z[safe]) - offset
    # log-polar record: modulus as ln|.|, angle wrapped to (-pi, pi]
    wrapped = np.mod(np.imag(z[logp]) + math.pi, TWO_PI) - math.pi
    out[logp] = np.real(z[logp]) + 1j * wrapped
    return out, logp


@dataclass(frozen=True)
class InvarianceReport:
    max_shift_residual: float
    shift_tolerance: float
    branch_residual: float
    all_images_in_tracts: bool
    passed: bool


def check_invariance(family: MapFamily, sample: LimitSample, gset: GSet,
                     spec: SquareSpec) -> InvarianceReport:
    """Verify the two-step return dynamics on a sample.

    F^2 applied to a sampled point must reproduce the point generated by
    the word with its first letter dropped (within the contraction-tail
    tolerance), F of the point must land in a lifted tract, and the
    first-level branch index must be recoverable from the word.
    """
    z = sample.points
    fz = np.asarray(family.lift(z))
    in_tracts = bool(np.all(np.real(fz) > family.ln_r0))
    ffz = np.asarray(family.lift(fz))
    target = sample.levels[1]
    resid_pts = np.abs(ffz - target)
    # analytic part: cells at depth d-1 have diameter <= diam(Q) * ratio^(d-1);
    # floating part: round-off in z is amplified by |F'(z)| |F'(F z)| |z|
    ratio = _worst_ratio(family, gset, spec)
    tail = spec.outer.diam * ratio ** max(sample.depth - 1, 1)
    eps = np.finfo(float).eps
    amp = np.abs(np.asarray(family.lift_deriv(z))) \
        * np.abs(np.asarray(family.lift_deriv(fz))) * (np.abs(z) + 1.0)
    tol_pts = tail + 64.0 * eps * (amp + np.abs(ffz) + 1.0)
    resid = float(np.max(resid_pts))
    tol = float(np.max(tol_pts))
    # branch recovery: F(z) should be the branch-s1 preimage of F^2(z)
    s1 = sample.words_s[:, 0]
    rec = np.asarray(family.inv0(ffz)) + TWO_PI * 1j * s1
    branch_resid = float(np.max(np.abs(rec - fz)))
    passed = in_tracts and bool(np.all(resid_pts <= tol_pts)) and branch_resid <= tol
    if not passed:
        bad = int(np.argmax(resid_pts - tol_pts))
        raise ConstructionError(
            f"invariance failure: residual {resid:.3g} (tol {tol:.3g}) at word "
            f"{list(zip(sample.words_u[bad], sample.words_s[bad]))}")
    return InvarianceReport(max_shift_residual=resid, shift_tolerance=tol,
                            branch_residual=branch_resid,
                            all_images_in_tracts=in_tracts, passed=passed)


def _worst_ratio(family: MapFamily, gset: GSet, spec: SquareSpec) -> float:
    if not family.has_tail_model or not gset.windows:
        return 0.5
    model = family.tail_model()
    env = model.envelope(spec.outer.bounds())
    sig_min = min(math.log(TWO_PI) + math.log(min(abs(w.s_lo), abs(w.s_hi)))
                  for w in gset.windows)
    _, log_hi = model.log_weight_bounds(sig_min, env)
    return min(0.99, float(np.exp(log_hi)))
