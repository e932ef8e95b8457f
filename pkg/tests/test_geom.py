"""Geometric kernel tests: transforms, boxes, rays, overlap conventions."""

import math

import numpy as np
import pytest

from mmnav.geom import (
    Box3,
    Pose2,
    Pose3,
    Ray,
    box_corners,
    box_distance,
    box_from_center,
    boxes_corners,
    boxes_overlap,
    boxes_overlap_arrays,
    points_to_frame,
    quat_conj,
    quat_from_axis_angle,
    quat_from_yaw,
    quat_identity,
    quat_mul,
    quat_rotate,
    quat_to_matrix,
    ray_box_intersect,
    rays_boxes_intersect,
    transform_from_frame,
    transform_to_frame,
    wrap_angle,
)

Z = np.array([0.0, 0.0, 1.0])


def random_pose(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Pose3(position=rng.uniform(-5, 5, size=3),
                 orientation=quat_from_axis_angle(axis, rng.uniform(-math.pi, math.pi)))


# -- angles / quaternions ----------------------------------------------------

def test_wrap_angle_range_and_fixed_points():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)  # (-pi, pi] convention
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-0.5) == pytest.approx(-0.5)
    rng = np.random.default_rng(0)
    for a in rng.uniform(-50, 50, size=200):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-12)
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)


def test_quat_rotation_matches_matrix():
    rng = np.random.default_rng(1)
    for _ in range(100):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        q = quat_from_axis_angle(axis, rng.uniform(-math.pi, math.pi))
        m = quat_to_matrix(q)
        p = rng.normal(size=3)
        np.testing.assert_allclose(quat_rotate(q, p), m @ p, atol=1e-12)
        # conjugate inverts
        np.testing.assert_allclose(quat_rotate(quat_conj(q), quat_rotate(q, p)), p, atol=1e-12)


def test_quat_yaw_composition():
    q = quat_mul(quat_from_yaw(0.3), quat_from_yaw(0.4))
    np.testing.assert_allclose(quat_rotate(q, np.array([1.0, 0, 0])),
                               [math.cos(0.7), math.sin(0.7), 0.0], atol=1e-12)
    np.testing.assert_allclose(quat_mul(quat_identity(), q), q, atol=1e-15)


# -- frame transforms ---------------------------------------------------------

def test_transform_to_frame_identity_and_translation():
    p = np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(transform_to_frame(p, Pose3()), p, atol=1e-12)
    frame = Pose3(position=np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(transform_to_frame(p, frame), [0, 0, 0], atol=1e-12)


def test_transform_to_frame_rotation():
    # frame rotated +90 deg about z: world +y is the frame's +x axis
    frame = Pose3(orientation=quat_from_yaw(math.pi / 2))
    np.testing.assert_allclose(transform_to_frame(np.array([0.0, 1.0, 0.0]), frame),
                               [1, 0, 0], atol=1e-12)


def test_transform_round_trip_fuzzed():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        frame = random_pose(rng)
        p = rng.uniform(-10, 10, size=3)
        back = transform_to_frame(transform_from_frame(p, frame), frame)
        np.testing.assert_allclose(back, p, atol=1e-9)


def test_points_to_frame_matches_scalar():
    rng = np.random.default_rng(3)
    frame = random_pose(rng)
    pts = rng.uniform(-5, 5, size=(50, 3))
    batched = points_to_frame(pts, frame)
    for i in range(50):
        np.testing.assert_allclose(batched[i], transform_to_frame(pts[i], frame), atol=1e-12)


# -- boxes --------------------------------------------------------------------

def test_box_corners_canonical_order():
    got = box_corners(Box3([0, 0, 0], [1, 1, 1]))
    want = [(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1),
            (1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 1)]
    np.testing.assert_array_equal(got, want)
    # min-to-max lexicographic means the list is already sorted
    assert sorted(map(tuple, got)) == list(map(tuple, got))


def test_box_corners_degenerate_and_mixed():
    got = box_corners(Box3([2, 2, 2], [2, 2, 2]))
    assert got.shape == (8, 3)
    np.testing.assert_array_equal(got, np.full((8, 3), 2.0))
    got = box_corners(Box3([-1, 0, 0], [1, 2, 0.5]))
    assert set(got[:, 0]) == {-1, 1} and set(got[:, 1]) == {0, 2} and set(got[:, 2]) == {0, 0.5}


def test_boxes_corners_batched():
    arr = np.array([[0, 0, 0, 1, 1, 1], [1, 2, 3, 4, 5, 6.0]])
    got = boxes_corners(arr)
    assert got.shape == (2, 8, 3)
    np.testing.assert_array_equal(got[0], box_corners(Box3([0, 0, 0], [1, 1, 1])))
    np.testing.assert_array_equal(got[1], box_corners(Box3([1, 2, 3], [4, 5, 6])))


def test_box_validation_rejects_inverted():
    with pytest.raises(ValueError):
        Box3([1, 0, 0], [0, 1, 1])


def test_boxes_overlap_conventions():
    a = Box3([0, 0, 0], [1, 1, 1])
    assert boxes_overlap(a, Box3([0.5, 0.5, 0.5], [1.5, 1.5, 1.5]))
    assert not boxes_overlap(a, Box3([2, 2, 2], [3, 3, 3]))
    assert boxes_overlap(a, Box3([1, 0, 0], [2, 1, 1]))  # touching face counts
    assert boxes_overlap(a, a)  # reflexive


def test_boxes_overlap_symmetric_fuzzed():
    rng = np.random.default_rng(4)
    for _ in range(300):
        lo = rng.uniform(-2, 2, size=(2, 3))
        hi = lo + rng.uniform(0, 2, size=(2, 3))
        a, b = Box3(lo[0], hi[0]), Box3(lo[1], hi[1])
        assert boxes_overlap(a, b) == boxes_overlap(b, a)


def test_boxes_overlap_arrays_matches_scalar():
    rng = np.random.default_rng(5)
    lo = rng.uniform(-2, 2, size=(40, 3))
    arr = np.concatenate([lo, lo + rng.uniform(0.1, 1.5, size=(40, 3))], axis=1)
    got = boxes_overlap_arrays(arr[:20], arr[20:])
    for i in range(20):
        for j in range(20):
            want = boxes_overlap(Box3(arr[i, :3], arr[i, 3:]),
                                 Box3(arr[20 + j, :3], arr[20 + j, 3:]))
            assert got[i, j] == want


def test_box_distance_and_from_center():
    b = box_from_center(np.array([1.0, 1.0, 1.0]), np.array([2.0, 2.0, 2.0]))
    np.testing.assert_array_equal(b.lo, [0, 0, 0])
    np.testing.assert_array_equal(b.hi, [2, 2, 2])
    a = Box3([0, 0, 0], [1, 1, 1])
    assert box_distance(a, Box3([2, 0, 0], [3, 1, 1])) == pytest.approx(1.0)
    assert box_distance(a, Box3([0.5, 0.5, 0.5], [2, 2, 2])) == 0.0
    assert box_distance(a, Box3([2, 2, 0], [3, 3, 1])) == pytest.approx(math.sqrt(2))


# -- rays ----------------------------------------------------------------------

def test_ray_box_basic_cases():
    box = Box3([1, -0.5, -0.5], [2, 0.5, 0.5])
    ray = Ray(np.zeros(3), np.array([1.0, 0, 0]))
    assert ray_box_intersect(ray, box) == pytest.approx(1.0)
    off = Box3([1, 1.0 + 1e-9, -0.5], [2, 3, 0.5])
    assert ray_box_intersect(ray, off) is None
    cube = Box3([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5])
    assert ray_box_intersect(ray, cube) == 0.0  # origin inside


def test_ray_box_behind_and_axis_parallel():
    box = Box3([-3, -1, -1], [-2, 1, 1])
    assert ray_box_intersect(Ray(np.zeros(3), np.array([1.0, 0, 0])), box) is None
    # ray parallel to a slab, origin inside that slab's interval
    box = Box3([1, -1, 0.2], [2, 1, 0.4])
    assert ray_box_intersect(Ray(np.array([0, 0, 0.3]), np.array([1.0, 0, 0])),
                             box) == pytest.approx(1.0)
    # parallel and outside the slab: miss regardless of x extent
    assert ray_box_intersect(Ray(np.zeros(3), np.array([1.0, 0, 0])), box) is None


def test_ray_box_dense_sampling_oracle():
    # the returned t is on the boundary and no smaller t >= 0 is inside
    rng = np.random.default_rng(6)
    hits = 0
    for k in range(1000):
        lo = rng.uniform(-3, 3, size=3)
        box = Box3(lo, lo + rng.uniform(0.2, 2.0, size=3))
        origin = rng.uniform(-4, 4, size=3)
        if k % 2 == 0:
            d = rng.normal(size=3)  # unbiased direction, mostly misses
        else:
            d = box.center - origin + rng.normal(scale=0.3, size=3)  # aimed
        d /= np.linalg.norm(d)
        ray = Ray(origin, d)
        t = ray_box_intersect(ray, box)
        inside = lambda p: np.all(p >= box.lo - 1e-12) and np.all(p <= box.hi + 1e-12)
        if t is None:
            for ts in np.linspace(0, 15, 1501):
                assert not (np.all(ray.origin + ts * d >= box.lo + 1e-7)
                            and np.all(ray.origin + ts * d <= box.hi - 1e-7))
            continue
        hits += 1
        p = ray.origin + t * d
        if t == 0.0:
            assert inside(ray.origin)
        else:
            on_face = np.any(np.isclose(p, box.lo, atol=1e-7) | np.isclose(p, box.hi, atol=1e-7))
            assert on_face and inside(p)
            for ts in np.linspace(0, max(t - 1e-6, 0), 200):
                q = ray.origin + ts * d
                assert not (np.all(q >= box.lo + 1e-7) and np.all(q <= box.hi - 1e-7))
    assert hits > 50  # the fuzz distribution must actually exercise hits


def test_rays_boxes_intersect_matches_scalar():
    rng = np.random.default_rng(7)
    origins = rng.uniform(-3, 3, size=(30, 3))
    dirs = rng.normal(size=(30, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    lo = rng.uniform(-3, 3, size=(10, 3))
    arr = np.concatenate([lo, lo + rng.uniform(0.2, 2.0, size=(10, 3))], axis=1)
    got = rays_boxes_intersect(origins, dirs, arr)
    assert got.shape == (30, 10)
    for i in range(30):
        for j in range(10):
            want = ray_box_intersect(Ray(origins[i], dirs[i]), Box3(arr[j, :3], arr[j, 3:]))
            if want is None:
                assert np.isinf(got[i, j])
            else:
                assert got[i, j] == pytest.approx(want, abs=1e-12)


# -- pose types -----------------------------------------------------------------

def test_pose2_normalizes_theta():
    assert Pose2(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)
    assert -math.pi < Pose2(0, 0, -math.pi).theta <= math.pi


def test_pose3_unit_quaternion_enforced():
    p = Pose3(orientation=np.array([2.0, 0, 0, 0]))  # renormalized
    np.testing.assert_allclose(p.orientation, [1, 0, 0, 0], atol=1e-12)
    with pytest.raises(ValueError):
        Pose3(orientation=np.array([0.0, 0, 0, 0]))


def test_ray_direction_normalized():
    r = Ray(np.zeros(3), np.array([2.0, 0, 0]))
    np.testing.assert_allclose(r.direction, [1, 0, 0], atol=1e-12)
    with pytest.raises(ValueError):
        Ray(np.zeros(3), np.zeros(3))
