import math

import numpy as np
import pytest

import tractdim as td
from tractdim.cantor_ifs import LimitSample
from tractdim.numerics import TWO_PI


def test_cylinder_single_letter_is_cell_center(fam):
    spec = td.build_squares(100.0, 25.0)
    dist = td.distortion_constant(100.0, 1.0)
    val, _ = td.cylinder_eval(fam, [(0, 64)], 100.0 + 0j)
    cell = td.cell_image(fam, 0, 64, spec, dist)
    assert val == pytest.approx(cell.center, rel=1e-12)
    assert val.real == pytest.approx(5.9968, abs=1e-4)
    assert val.imag == pytest.approx(1.5593, abs=1e-4)


def test_cylinder_composition_associative(mini):
    letters = mini.gset.letters_by_weight(3)
    word = [letters[0], letters[1], letters[2]]
    z = mini.spec.outer.center
    v_once, d_once = td.cylinder_eval(mini.family, word + word, z, spec=mini.spec)
    mid, d1 = td.cylinder_eval(mini.family, word, z, spec=mini.spec)
    v_twice, d2 = td.cylinder_eval(mini.family, word, mid, spec=mini.spec)
    assert abs(v_once - v_twice) <= 1e-12 * (1.0 + abs(v_once))
    assert abs(d_once - d1 * d2) <= 1e-12 * abs(d_once)


def test_cylinder_rejects_alien_letter(mini):
    with pytest.raises(td.ConstructionError):
        td.cylinder_eval(mini.family, [(5, 7)], mini.spec.outer.center,
                         spec=mini.spec, gset=mini.gset)


def test_cylinder_derivative_against_finite_differences(mini):
    letters = mini.gset.letters_by_weight(4)
    word = [letters[0], letters[2], letters[1]]
    z0 = mini.spec.outer.center
    rng = np.random.default_rng(9)
    samples = z0 + 0.3 * (rng.random(50) - 0.5) + 0.3j * (rng.random(50) - 0.5)
    worst = td.fd_derivative_check(
        lambda z: td.cylinder_eval(mini.family, word, z), samples)
    assert worst <= 1e-5


def test_fixed_point_and_multiplier(mini):
    letters = mini.gset.letters_by_weight(2)
    z, mult = td.cylinder_fixed_point(mini.family, [letters[0]], mini.spec)
    img, _ = td.cylinder_eval(mini.family, [letters[0]], z)
    assert abs(img - z) <= 1e-10
    assert abs(mult) > 1.0


def test_fixed_point_of_repeated_word(mini):
    letters = mini.gset.letters_by_weight(2)
    word = [letters[0], letters[1]]
    z1, _ = td.cylinder_fixed_point(mini.family, word, mini.spec)
    z2, _ = td.cylinder_fixed_point(mini.family, word * 3, mini.spec)
    assert abs(z1 - z2) <= 1e-9 * (1.0 + abs(z1))


def test_sampling_deterministic(small):
    a = td.sample_limit_set(small.family, small.gset, small.spec,
                            depth=5, count=500, seed=3)
    b = td.sample_limit_set(small.family, small.gset, small.spec,
                            depth=5, count=500, seed=3)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.words_s, b.words_s)


def test_sampling_points_in_disjoint_cells(small):
    sample = td.sample_limit_set(small.family, small.gset, small.spec,
                                 depth=4, count=200, seed=1)
    # distinct first letters put points in disjoint cells: cross distances
    # exceed within-cell diameters
    first = list(zip(sample.words_u[:, 0].tolist(), sample.words_s[:, 0].tolist()))
    for i in range(0, 50):
        for j in range(i + 1, 50):
            if first[i] != first[j]:
                cell_i = td.cell_image(small.family, *first[i], small.spec, small.dist)
                d = abs(sample.points[i] - sample.points[j])
                assert d > 0
                assert abs(sample.points[i] - complex(cell_i.center_re, cell_i.center_im)) \
                    <= cell_i.diam_bound


def test_sampling_depth_refinement(small):
    """A depth-d point and any refinement of its word stay within the
    contraction-tail bound of the shared depth-d cell."""
    d = 4
    a = td.sample_limit_set(small.family, small.gset, small.spec,
                            depth=d, count=40, seed=12)
    model = small.family.tail_model()
    env = model.envelope(small.spec.outer.bounds())
    sig_min = min(math.log(TWO_PI) + math.log(min(abs(w.s_lo), abs(w.s_hi)))
                  for w in small.gset.windows)
    ratio = float(np.exp(model.log_weight_bounds(sig_min, env)[1]))
    tail = small.spec.outer.diam * ratio ** d + 1e-12
    extra = small.gset.letters_by_weight(1)[0]
    z0 = small.spec.outer.center
    for i in range(a.count):
        word = list(zip(a.words_u[i].tolist(), a.words_s[i].tolist()))
        deeper, _ = td.cylinder_eval(small.family, word + [extra], z0)
        assert abs(a.points[i] - deeper) <= tail


def test_projection_conjugacy_and_bookkeeping(small):
    sample = td.sample_limit_set(small.family, small.gset, small.spec,
                                 depth=4, count=300, seed=2)
    proj = td.project_to_plane(small.family, sample)
    assert proj.conjugacy_residual <= 1e-9
    assert not np.any(proj.log_polar)
    assert np.all(proj.points != 0)


def test_projection_log_polar_for_huge_real_parts(small):
    pts = np.array([4000.0 + 0.5j, 6.0 + 1.5j])
    fake = LimitSample(points=pts, words_u=np.zeros((2, 1), dtype=np.int64),
                       words_s=np.full((2, 1), 65, dtype=np.int64), depth=1,
                       seed=0, levels=(pts, pts), word_ranks=np.arange(2))
    proj = td.project_to_plane(small.family, fake)
    assert bool(proj.log_polar[0]) and not bool(proj.log_polar[1])
    assert proj.points[0].real == pytest.approx(4000.0)  # ln modulus
    assert -math.pi < proj.points[0].imag <= math.pi
    assert bool(proj.image_log_polar[0])


def test_projection_restores_offset():
    off = 0.25 + 0.1j
    f = td.MapFamily(kind="exponential", lam=1.0, r0=math.e, offset=off)
    pts = np.array([2.0 + 0.3j])
    fake = LimitSample(points=pts, words_u=np.zeros((1, 1), dtype=np.int64),
                       words_s=np.full((1, 1), 65, dtype=np.int64), depth=1,
                       seed=0, levels=(pts, pts), word_ranks=np.arange(1))
    proj = td.project_to_plane(f, fake)
    assert proj.points[0] == pytest.approx(np.exp(2.0 + 0.3j) - off, rel=1e-12)


def test_invariance_shift_and_branch(small):
    sample = td.sample_limit_set(small.family, small.gset, small.spec,
                                 depth=3, count=500, seed=4)
    rep = td.check_invariance(small.family, sample, small.gset, small.spec)
    assert rep.passed
    assert rep.max_shift_residual <= rep.shift_tolerance
    assert rep.all_images_in_tracts


def test_invariance_depth1_lands_in_square(small):
    sample = td.sample_limit_set(small.family, small.gset, small.spec,
                                 depth=1, count=200, seed=5)
    ffz = np.asarray(small.family.lift(np.asarray(small.family.lift(sample.points))))
    assert np.all(small.spec.outer.contains(ffz, margin=-1e-6))


def test_invariance_detects_corruption(small):
    sample = td.sample_limit_set(small.family, small.gset, small.spec,
                                 depth=3, count=100, seed=6)
    sample.points[0] += 1.0
    with pytest.raises(td.ConstructionError):
        td.check_invariance(small.family, sample, small.gset, small.spec)
