"""Network tests: set-encoder invariances, gradient correctness vs finite
differences, recurrence bookkeeping, checkpoint round trips, obs builders."""

import math

import numpy as np
import pytest
import torch

from mmnav.errors import CheckpointError
from mmnav.policy import (ActorCritic, DepthEncoder, PointNetEncoder,
                          SlotMLPEncoder, VectorEncoder, build_policy,
                          gaussian_entropy, gaussian_logp, load_policy,
                          load_tensors, sample_gaussian, save_policy,
                          save_tensors)
from mmnav.policy.obs import (DepthObs, MappingObs, PickObs, ScandotObs,
                              SlotObs)
from mmnav.world import VecEnv, generate_scene
from mmnav.world.scenes import Difficulty, Scenario, generate_pick_scene

torch.manual_seed(0)


def _rand_points(g, n=2, p=12):
    pts = torch.randn(n, p, 3, generator=g)
    mask = torch.rand(n, p, generator=g) > 0.3
    return pts, mask


# ---------------------------------------------------------------------------
# set encoder invariances
# ---------------------------------------------------------------------------

def test_pointnet_permutation_invariance_exact():
    g = torch.Generator().manual_seed(1)
    enc = PointNetEncoder()
    pts, mask = _rand_points(g)
    z = enc((pts, mask))
    for _ in range(5):
        perm = torch.randperm(pts.shape[1], generator=g)
        z2 = enc((pts[:, perm], mask[:, perm]))
        assert torch.equal(z, z2)


def test_pointnet_empty_set_is_zero():
    enc = PointNetEncoder()
    pts = torch.randn(3, 7, 3)
    mask = torch.zeros(3, 7, dtype=torch.bool)
    mask[1, 2] = True  # row 1 sees one point, rows 0/2 see nothing
    z = enc((pts, mask))
    assert torch.equal(z[0], torch.zeros(16))
    assert torch.equal(z[2], torch.zeros(16))
    assert not torch.equal(z[1], torch.zeros(16))


def test_pointnet_duplicate_point_idempotent():
    enc = PointNetEncoder()
    p = torch.randn(1, 1, 3).repeat(1, 6, 1)
    once = torch.zeros(1, 6, dtype=torch.bool)
    once[0, 0] = True
    single = enc((p, once))
    repeated = enc((p, torch.ones(1, 6, dtype=torch.bool)))
    assert torch.equal(single, repeated)


def test_pointnet_masked_points_have_no_influence():
    g = torch.Generator().manual_seed(2)
    enc = PointNetEncoder()
    pts, mask = _rand_points(g)
    z = enc((pts, mask))
    tampered = pts.clone()
    tampered[~mask] = 1e3
    assert torch.equal(z, enc((tampered, mask)))


def test_slot_encoder_not_permutation_invariant():
    g = torch.Generator().manual_seed(3)
    enc = SlotMLPEncoder(slots=4)
    x = torch.randn(1, 96, generator=g)
    swapped = x.reshape(1, 4, 24)[:, [1, 0, 2, 3]].reshape(1, 96)
    assert not torch.allclose(enc(x), enc(swapped))
    zero = enc(torch.zeros(2, 96))
    assert torch.equal(zero[0], zero[1])  # bias-determined constant


# ---------------------------------------------------------------------------
# gradient correctness (autograd vs central finite differences)
# ---------------------------------------------------------------------------

def _fd_check(model, loss_fn, n_coords=40, eps=1e-4, seed=0, rtol=1e-4,
              min_valid=20):
    """Compare analytic grads with central differences on sampled coords.

    Central differences only estimate the derivative where the loss is C1
    across [theta-eps, theta+eps]; a ReLU kink inside the interval biases
    the estimate by O(eps).  Coordinates where the eps and eps/2 estimates
    disagree are therefore skipped as invalid rather than compared.
    """
    model.double()
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    params = [p for p in model.parameters() if p.requires_grad]
    assert all(p.grad is not None for p in params), "loss must cover all params"
    valid = 0
    for _ in range(n_coords):
        p = params[rng.integers(len(params))]
        idx = tuple(rng.integers(s) for s in p.shape)
        with torch.no_grad():
            orig = p[idx].item()

            def at(x):
                p[idx] = x
                return loss_fn().item()

            fd = (at(orig + eps) - at(orig - eps)) / (2 * eps)
            fd_half = (at(orig + eps / 2) - at(orig - eps / 2)) / eps
            p[idx] = orig
        scale = max(abs(fd), abs(fd_half), 1e-6)
        if abs(fd - fd_half) / scale > 1e-6:
            continue  # kink inside the interval: estimator invalid here
        an = p.grad[idx].item()
        denom = max(abs(fd), abs(an), 1e-6)
        assert abs(fd - an) / denom <= rtol, (fd, an, idx)
        valid += 1
    assert valid >= min_valid


def test_gradients_pointnet_match_finite_differences():
    torch.manual_seed(10)
    enc = PointNetEncoder()
    pts = torch.randn(3, 9, 3, dtype=torch.double)
    mask = torch.rand(3, 9) > 0.25
    target = torch.randn(3, 16, dtype=torch.double)
    _fd_check(enc, lambda: ((enc((pts, mask)) - target) ** 2).sum(), seed=1)


def test_gradients_depth_encoder_match_finite_differences():
    torch.manual_seed(11)
    enc = DepthEncoder(height=29, width=44)
    img = torch.rand(2, 1, 29, 44, dtype=torch.double)
    target = torch.randn(2, 16, dtype=torch.double)
    _fd_check(enc, lambda: ((enc(img) - target) ** 2).sum(), seed=2)


def test_gradients_recurrent_unroll_match_finite_differences():
    torch.manual_seed(12)
    pol = ActorCritic(VectorEncoder(4), proprio_dim=5, task_dim=2,
                      action_dim=3, hidden_dim=16)
    t_len, n = 3, 2
    pro = torch.randn(t_len, n, 5, dtype=torch.double)
    perc = torch.randn(t_len, n, 4, dtype=torch.double)
    task = torch.randn(t_len, n, 2, dtype=torch.double)
    resets = torch.zeros(t_len, n, dtype=torch.double)
    resets[0] = 1.0
    resets[2, 0] = 1.0  # mid-sequence episode boundary on env 0
    acts = torch.randn(t_len, n, 3, dtype=torch.double)

    def loss():
        h0 = pol.initial_hidden(n)
        means, values = pol.unroll(pro, perc, task, resets, h0)
        logp = gaussian_logp(means, pol.clamped_log_std(), acts)
        return (means ** 2).sum() + (values ** 2).sum() + logp.sum()

    _fd_check(pol, loss, n_coords=40, seed=3, min_valid=35)


# ---------------------------------------------------------------------------
# recurrent policy behavior
# ---------------------------------------------------------------------------

def _tiny_policy(seed=4):
    torch.manual_seed(seed)
    return ActorCritic(VectorEncoder(4), proprio_dim=5, task_dim=2,
                       action_dim=3, hidden_dim=16)


def test_step_deterministic_and_finite():
    pol = _tiny_policy()
    pro, perc, task = torch.randn(2, 5), torch.randn(2, 4), torch.randn(2, 2)
    h = pol.initial_hidden(2)
    out1 = pol.step(pro, perc, task, h)
    out2 = pol.step(pro, perc, task, h)
    for a, b in zip(out1[:3], out2[:3]):
        assert torch.equal(a, b)
        assert torch.isfinite(a).all()


def test_hidden_state_carries_information():
    pol = _tiny_policy(5)
    pro, perc, task = torch.randn(1, 5), torch.randn(1, 4), torch.randn(1, 2)
    h0 = pol.initial_hidden(1)
    _, _, _, h1 = pol.step(pro, perc, task, h0)
    carried = pol.step(pro, perc, task, h1)[0]
    reset = pol.step(pro, perc, task, h0)[0]
    assert not torch.allclose(carried, reset)


def test_unroll_matches_manual_step_loop():
    pol = _tiny_policy(6)
    t_len, n = 6, 3
    pro = torch.randn(t_len, n, 5)
    perc = torch.randn(t_len, n, 4)
    task = torch.randn(t_len, n, 2)
    resets = (torch.rand(t_len, n) < 0.3).float()
    resets[0] = 1.0
    h0 = pol.initial_hidden(n)
    means_u, values_u = pol.unroll(pro, perc, task, resets, h0)
    h = h0
    for t in range(t_len):
        h.reset_rows(resets[t].bool())
        mean, _, value, h = pol.step(pro[t], perc[t], task[t], h)
        assert torch.allclose(mean, means_u[t], atol=1e-6)
        assert torch.allclose(value, values_u[t], atol=1e-6)


def test_zero_weights_give_bias_outputs():
    pol = _tiny_policy(7)
    with torch.no_grad():
        for p in pol.parameters():
            p.zero_()
        pol.v_head.bias.fill_(0.625)
    mean, _, value, _ = pol.step(torch.randn(2, 5), torch.randn(2, 4),
                                 torch.randn(2, 2), pol.initial_hidden(2))
    assert torch.equal(mean, torch.zeros(2, 3))
    assert torch.equal(value, torch.full((2,), 0.625))


def test_log_std_clamped_to_limits():
    pol = _tiny_policy(8)
    with torch.no_grad():
        pol.log_std.fill_(-10.0)
    assert (pol.clamped_log_std() == -5.0).all()
    with torch.no_grad():
        pol.log_std.fill_(3.0)
    assert (pol.clamped_log_std() == 1.0).all()


def test_share_trunk_mode():
    torch.manual_seed(9)
    pol = ActorCritic(VectorEncoder(4), proprio_dim=5, task_dim=2,
                      action_dim=3, hidden_dim=16, share_trunk=True)
    assert pol.critic_cell is None
    mean, _, value, h = pol.step(torch.randn(1, 5), torch.randn(1, 4),
                                 torch.randn(1, 2), pol.initial_hidden(1))
    assert torch.isfinite(mean).all() and torch.isfinite(value).all()
    assert torch.equal(h.ha, h.hc)


# ---------------------------------------------------------------------------
# action distribution
# ---------------------------------------------------------------------------

def test_logp_unit_gaussian_closed_form():
    mean = torch.zeros(1, 1)
    log_std = torch.zeros(1)
    lp = gaussian_logp(mean, log_std, torch.zeros(1, 1))
    assert lp.item() == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-7)
    assert lp.item() == pytest.approx(-0.9189385, abs=1e-6)


def test_entropy_matches_torch_distribution():
    log_std = torch.tensor([-1.0, 0.3, 0.0])
    want = torch.distributions.Normal(torch.zeros(3), log_std.exp()).entropy().sum()
    assert gaussian_entropy(log_std).item() == pytest.approx(want.item(), rel=1e-6)


def test_sampling_tightness_and_reproducibility():
    mean = torch.zeros(64, 10)
    tight = sample_gaussian(mean, torch.full((10,), -5.0),
                            torch.Generator().manual_seed(0))
    assert tight.abs().max() < 0.05  # sigma ~ 6.7e-3
    a = sample_gaussian(mean, torch.zeros(10), torch.Generator().manual_seed(42))
    b = sample_gaussian(mean, torch.zeros(10), torch.Generator().manual_seed(42))
    assert torch.equal(a, b)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_tensor_file_round_trip_and_stability(tmp_path):
    rng = np.random.default_rng(21)
    tensors = {"a.weight": rng.standard_normal((3, 4)).astype(np.float32),
               "b": np.float32(2.5), "c.long_name": rng.standard_normal(7).astype(np.float32)}
    p1, p2 = tmp_path / "x.ckpt", tmp_path / "y.ckpt"
    save_tensors(p1, tensors)
    save_tensors(p2, tensors)
    assert p1.read_bytes() == p2.read_bytes()
    back = load_tensors(p1)
    assert set(back) == set(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], np.asarray(tensors[k], dtype=np.float32))


def test_checkpoint_rejects_corruption(tmp_path):
    path = tmp_path / "p.ckpt"
    save_tensors(path, {"w": np.ones(3, dtype=np.float32)})
    raw = bytearray(path.read_bytes())
    raw[0] = ord("X")
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_tensors(bad)
    trunc = tmp_path / "trunc.ckpt"
    trunc.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointError):
        load_tensors(trunc)


@pytest.mark.parametrize("meta", [
    {"encoder": "pointnet", "task": "nav"},
    {"encoder": "slots", "task": "nav", "slots": 8},
    {"encoder": "depth", "task": "nav", "depth_hw": [29, 44]},
    {"encoder": "vector", "task": "pick", "perc_dim": 4},
])
def test_policy_checkpoint_round_trip_bit_exact(tmp_path, meta):
    torch.manual_seed(33)
    model = build_policy(meta)
    path = tmp_path / "m.ckpt"
    save_policy(path, model, meta)
    clone, meta2 = load_policy(path)
    assert meta2 == meta
    for (ka, va), (kb, vb) in zip(sorted(model.state_dict().items()),
                                  sorted(clone.state_dict().items())):
        assert ka == kb
        assert torch.equal(va, vb)
    if meta["encoder"] == "vector":
        perc = torch.randn(2, 4)
    elif meta["encoder"] == "slots":
        perc = torch.randn(2, 192)
    elif meta["encoder"] == "depth":
        perc = torch.rand(2, 1, 29, 44)
    else:
        perc = (torch.randn(2, 9, 3), torch.rand(2, 9) > 0.5)
    pro = torch.randn(2, 21)
    task = torch.randn(2, 3)
    with torch.no_grad():
        a = model.step(pro, perc, task, model.initial_hidden(2))
        b = clone.step(pro, perc, task, clone.initial_hidden(2))
    for x, y in zip(a[:3], b[:3]):
        assert torch.equal(x, y)


def test_policy_checkpoint_shape_mismatch_rejected(tmp_path):
    meta = {"encoder": "vector", "task": "pick", "perc_dim": 4}
    model = build_policy(meta)
    path = tmp_path / "m.ckpt"
    save_policy(path, model, meta)
    tensors = load_tensors(path)
    tensors["mu_head.bias"] = np.zeros(11, dtype=np.float32)
    save_tensors(path, tensors)
    with pytest.raises(CheckpointError):
        load_policy(path)


# ---------------------------------------------------------------------------
# observation builders
# ---------------------------------------------------------------------------

def _nav_env(n=3):
    scenes = [generate_scene(Difficulty.MEDIUM, Scenario.STRAIGHT_CORRIDOR, s)
              for s in range(3)]
    return VecEnv(scenes, num_envs=n, seed=11)


def test_scandot_obs_masked_subset_of_full():
    env = _nav_env()
    full = ScandotObs(env, masked=False)
    masked = ScandotObs(env, masked=True)
    _, (pf, mf), _ = full()
    _, (pm, mm), _ = masked()
    np.testing.assert_allclose(pf, pm)
    assert not (mm & ~mf).any()       # frustum gate only removes points
    assert mf.sum() >= mm.sum()


def test_scandot_obs_full_is_range_ball():
    env = _nav_env()
    _, (pts, mask), _ = ScandotObs(env, masked=False)()
    cam_pos, _ = env.camera_poses()
    world = env.solid_corners().reshape(env.n, -1, 3)
    d = np.linalg.norm(world - cam_pos[:, None, :], axis=2)
    real = np.repeat(np.arange(env.solid.shape[1])[None, :]
                     < env.solid_counts[:, None], 8, axis=1)
    np.testing.assert_array_equal(mask, (d <= 2.0 + 1e-12) & real)


def test_scandot_obs_range_override():
    env = _nav_env()
    near = ScandotObs(env, masked=False, max_range=1.0)
    far = ScandotObs(env, masked=False, max_range=5.0)
    _, (_, mn), _ = near()
    _, (_, mfar), _ = far()
    assert mn.sum() < mfar.sum()
    assert not (mn & ~mfar).any()


def test_slot_obs_keeps_nearest_boxes_in_order():
    env = _nav_env()
    slots = 8
    _, flat, _ = SlotObs(env, slots=slots)()
    pts, vis = ScandotObs(env, masked=True).points_and_mask()
    for i in range(env.n):
        b = env.solid.shape[1]
        corners = pts[i].reshape(b, 8, 3)
        cmask = vis[i].reshape(b, 8)
        centers = corners.mean(axis=1)
        d2 = centers[:, 0] ** 2 + centers[:, 1] ** 2
        d2[env.solid_counts[i]:] = np.inf
        keep = np.sort(np.argsort(d2, kind="stable")[:slots])
        want = np.zeros((slots, 8, 3), dtype=np.float32)
        want[:len(keep)] = corners[keep] * cmask[keep][:, :, None]
        np.testing.assert_allclose(flat[i].reshape(slots, 8, 3), want, atol=1e-6)


def test_pick_obs_flag_semantics():
    scenes = [generate_pick_scene(s) for s in range(2)]
    env = VecEnv(scenes, task="pick", num_envs=2, seed=3)
    _, perc, task = PickObs(env)()
    assert perc.shape == (2, 4) and task.shape == (2, 3)
    flags = perc[:, 3]
    for i in range(2):
        if flags[i] == 0.0:
            np.testing.assert_array_equal(perc[i, :3], 0.0)
        else:
            assert np.linalg.norm(perc[i, :3]) > 0


def test_mapping_obs_noise_free_matches_plain():
    env = _nav_env()
    from mmnav.config import BaselineConfig
    cfg = BaselineConfig(map_noise_sigma=0.0, map_noise_bias=0.0, map_dropout=0.0)
    noisy = MappingObs(env, seed=1, cfg=cfg)
    _, (pn, mn), _ = noisy()
    _, (pp, mp), _ = ScandotObs(env, masked=False)()
    np.testing.assert_allclose(pn, pp, atol=1e-6)
    np.testing.assert_array_equal(mn, mp)


def test_mapping_obs_bias_constant_within_episode():
    env = _nav_env()
    from mmnav.config import BaselineConfig
    cfg = BaselineConfig(map_noise_sigma=0.0, map_dropout=0.0)
    noisy = MappingObs(env, seed=2, cfg=cfg)
    _, (p1, _), _ = noisy()
    _, (p2, _), _ = noisy()
    np.testing.assert_allclose(p1, p2, atol=1e-6)  # only per-episode bias acts
    marks = noisy.bias.copy()
    env._reset_env(0)
    env.episode_count[0] += 1
    _, (p3, _), _ = noisy()
    assert not np.allclose(noisy.bias[0], marks[0])
    np.testing.assert_allclose(noisy.bias[1:], marks[1:], atol=0)


def test_mapping_obs_noise_statistics():
    env = _nav_env(2)
    from mmnav.config import BaselineConfig
    cfg = BaselineConfig(map_noise_bias=0.0, map_dropout=0.0)
    noisy = MappingObs(env, seed=3, cfg=cfg)
    base = ScandotObs(env, masked=False)
    _, (pp, _), _ = base()
    devs = []
    for _ in range(60):
        _, (pn, _), _ = noisy()
        devs.append((pn - pp).ravel())
    devs = np.concatenate(devs)
    assert abs(devs.std() - cfg.map_noise_sigma) < 0.002
    assert abs(devs.mean()) < 0.002


def test_depth_obs_ideal_and_deterministic():
    env = _nav_env(2)
    ideal = DepthObs(env, seed=4, ideal=True)
    _, d, _ = ideal()
    np.testing.assert_allclose(d[:, 0], ideal.render_raw(), atol=1e-6)
    a = DepthObs(env, seed=9)()[1]
    b = DepthObs(env, seed=9)()[1]
    np.testing.assert_array_equal(a, b)
    c = DepthObs(env, seed=10)()[1]
    assert not np.array_equal(a, c)
