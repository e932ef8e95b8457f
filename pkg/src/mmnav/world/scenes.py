"""Procedural corridor scenes.

A scene is a static set of axis-aligned boxes: corridor walls (emitted as
short segments so their corners double as local geometry cues), ground and
floating obstacles, optional wall distractors, and for the pick task a table
plus one graspable object.  Generation is a pure function of
(difficulty, scenario, seed) and every scene keeps a lateral free gap past
each obstacle row, enforced by construction and rejection sampling.

Scenes serialize to a canonical text form (sorted keys, "%.6f" floats) so a
seed reproduces a byte-identical document anywhere.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..config import SceneConfig
from ..errors import SceneGenerationError
from ..geom import Box3
from ..seeding import derive_seed


class Scenario(enum.Enum):
    STRAIGHT_CORRIDOR = "StraightCorridor"
    L_CORRIDOR = "LCorridor"


class Difficulty(enum.Enum):
    EASY = "Easy"
    MEDIUM = "Medium"
    HARD = "Hard"


class ObstacleKind(enum.Enum):
    GROUND = "Ground"
    FLOATING = "Floating"


class ObjectKind(enum.Enum):
    BANANA = "Banana"
    MUG = "Mug"
    CAN = "Can"
    FOAM_BRICK = "FoamBrick"
    BOTTLE = "Bottle"


# graspable-object extents (x, y, z meters); y is the grasp width and must
# stay under the gripper's maximum aperture
OBJECT_SIZES: dict[ObjectKind, tuple[float, float, float]] = {
    ObjectKind.BANANA: (0.19, 0.036, 0.036),
    ObjectKind.MUG: (0.09, 0.075, 0.10),
    ObjectKind.CAN: (0.066, 0.066, 0.10),
    ObjectKind.FOAM_BRICK: (0.075, 0.05, 0.05),
    ObjectKind.BOTTLE: (0.06, 0.06, 0.20),
}

# obstacle counts per difficulty band; Hard is exactly five
OBSTACLE_COUNTS = {Difficulty.EASY: (0, 1), Difficulty.MEDIUM: (2, 3), Difficulty.HARD: (5, 5)}

WALL_Z0 = 0.0


@dataclass(frozen=True)
class Obstacle:
    box: Box3
    kind: ObstacleKind
    velocity: tuple[float, float] | None = None  # planar m/s, evaluation-only

    def __post_init__(self):
        if self.kind is ObstacleKind.GROUND and self.box.lo[2] != 0.0:
            raise ValueError("ground obstacles must rest on z=0")
        if self.kind is ObstacleKind.FLOATING and self.box.lo[2] <= 0.0:
            raise ValueError("floating obstacles must start above z=0")


@dataclass(frozen=True)
class ObjectSpec:
    kind: ObjectKind
    box: Box3                      # extents at the initial position
    position: np.ndarray           # current center (o_t)
    initial_position: np.ndarray   # center at reset (o_i)
    grasped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "initial_position",
                           np.asarray(self.initial_position, dtype=np.float64))

    @property
    def size(self) -> np.ndarray:
        return self.box.size

    @property
    def grasp_width(self) -> float:
        return float(self.box.size[1])


@dataclass(frozen=True)
class SceneSpec:
    scenario: Scenario
    difficulty: Difficulty
    corridor_width: float
    corridor_length: float
    walls: tuple[Box3, ...]
    obstacles: tuple[Obstacle, ...]
    goal: np.ndarray
    rng_seed: int
    table: Box3 | None = None
    object: ObjectSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=np.float64))
        object.__setattr__(self, "walls", tuple(self.walls))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def solid_boxes(self) -> np.ndarray:
        """All collidable boxes packed (B, 6): walls, obstacles, table."""
        rows = [b.as_array() for b in self.walls]
        rows += [o.box.as_array() for o in self.obstacles]
        if self.table is not None:
            rows.append(self.table.as_array())
        return np.array(rows) if rows else np.zeros((0, 6))


def _wall_segments(lo, hi, seg_len: float, axis: int) -> list[Box3]:
    """Split one wall box into segments of at most seg_len along `axis`."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    span = hi[axis] - lo[axis]
    n = max(1, int(math.ceil(span / seg_len - 1e-9)))
    out = []
    edges = np.linspace(lo[axis], hi[axis], n + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        slo, shi = lo.copy(), hi.copy()
        slo[axis], shi[axis] = a, b
        out.append(Box3(slo, shi))
    return out


# minimum free x-gap between rows before the free channel may switch walls;
# below this a 0.48 m robot disc cannot cross between opposite side gaps
_SIDE_SWITCH_GAP = 0.70


def _sample_rows(rng, cfg: SceneConfig, count: int, x_lo: float, x_hi: float,
                 width: float, gap: float) -> list[Obstacle]:
    """Place obstacle rows in stratified x-bins, each leaving a side gap."""
    if count == 0:
        return []
    span = x_hi - x_lo
    bin_w = span / count
    if bin_w < cfg.obstacle_len_min + 0.25:
        raise SceneGenerationError(
            f"obstacle window {span:.2f} m too short for {count} rows")
    rows: list[Obstacle] = []
    prev_side = None
    prev_hi_x = -math.inf
    for i in range(count):
        len_x = rng.uniform(cfg.obstacle_len_min, min(cfg.obstacle_len_max, bin_w - 0.25))
        cx = x_lo + (i + 0.5) * bin_w + rng.uniform(-0.5, 0.5) * (bin_w - len_x - 0.2)
        floating = rng.random() < cfg.floating_fraction
        if floating:
            len_y = rng.uniform(cfg.floating_width_min,
                                min(cfg.floating_width_max, width - gap))
            z0 = rng.uniform(cfg.floating_z_min, cfg.floating_z_max)
            z1 = z0 + rng.uniform(cfg.floating_height_min, cfg.floating_height_max)
        else:
            len_y = rng.uniform(cfg.obstacle_len_min,
                                min(cfg.obstacle_len_max, width - gap))
            z0 = 0.0
            z1 = rng.uniform(cfg.obstacle_height_min, cfg.obstacle_height_max)
        side = rng.random() < 0.5  # which wall the row hugs
        if prev_side is not None and cx - 0.5 * len_x - prev_hi_x < _SIDE_SWITCH_GAP:
            side = prev_side
        slack = width - gap - len_y
        jitter = rng.uniform(0.0, max(slack, 0.0))
        if side:
            y_lo = -0.5 * width + jitter
        else:
            y_lo = 0.5 * width - jitter - len_y
        box = Box3([cx - 0.5 * len_x, y_lo, z0], [cx + 0.5 * len_x, y_lo + len_y, z1])
        rows.append(Obstacle(box=box, kind=ObstacleKind.FLOATING if floating
                             else ObstacleKind.GROUND))
        prev_side = side
        prev_hi_x = cx + 0.5 * len_x
    return rows


def _rows_valid(rows: list[Obstacle], min_gap: float) -> bool:
    """True when every pair of rows keeps a free x-gap of at least min_gap."""
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            a, b = rows[i].box, rows[j].box
            gap = max(a.lo[0] - b.hi[0], b.lo[0] - a.hi[0])
            if gap < min_gap:
                return False
    return True


def _sample_distractors(rng, cfg: SceneConfig, x_lo: float, x_hi: float,
                        width: float, rows: list[Obstacle],
                        wall_height: float) -> list[Box3]:
    """Thin boxes flush against the walls, kept away from obstacle rows."""
    out: list[Box3] = []
    n = int(rng.integers(0, cfg.distractors_max + 1))
    for _ in range(n):
        for _attempt in range(20):
            cx = rng.uniform(x_lo, x_hi)
            length = rng.uniform(0.2, 0.5)
            if any(abs(cx - r.box.center[0]) < 0.5 * r.box.size[0] + 0.5 * length
                   + _SIDE_SWITCH_GAP for r in rows):
                continue
            depth = rng.uniform(0.05, cfg.distractor_margin)
            height = rng.uniform(0.3, min(1.2, wall_height))
            if rng.random() < 0.5:
                y0, y1 = -0.5 * width, -0.5 * width + depth
            else:
                y0, y1 = 0.5 * width - depth, 0.5 * width
            out.append(Box3([cx - 0.5 * length, y0, 0.0], [cx + 0.5 * length, y1, height]))
            break
    return out


def _scene_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(derive_seed(seed, 0)))


def generate_scene(difficulty: Difficulty, scenario: Scenario, rng_seed: int,
                   cfg: SceneConfig | None = None) -> SceneSpec:
    """Deterministically generate one navigation scene.

    Straight scenes are a 1 m corridor along +x with the goal 5-8 m ahead;
    L-scenes are 1.5 m wide with the goal around a left turn.  Obstacle
    counts follow the difficulty band (Easy 0-1, Medium 2-3, Hard exactly 5,
    all within 5 m of the start).  About 20% of obstacles float above the
    floor.  Raises SceneGenerationError when the config admits no feasible
    layout within the attempt budget.
    """
    cfg = cfg or SceneConfig()
    rng = _scene_rng(rng_seed)
    lo_n, hi_n = OBSTACLE_COUNTS[difficulty]
    count = int(rng.integers(lo_n, hi_n + 1))
    seg = cfg.wall_segment_len
    th = cfg.wall_thickness
    hz = cfg.wall_height

    if scenario is Scenario.STRAIGHT_CORRIDOR:
        width = cfg.corridor_width_s1
        goal_x = rng.uniform(cfg.goal_dist_min, cfg.goal_dist_max)
        x_min, x_max = -1.0, goal_x + 1.0
        goal = np.array([goal_x, 0.0, 0.0])
        hw = 0.5 * width
        walls = []
        walls += _wall_segments([x_min, -hw - th, WALL_Z0], [x_max, -hw, hz], seg, 0)
        walls += _wall_segments([x_min, hw, WALL_Z0], [x_max, hw + th, hz], seg, 0)
        walls += _wall_segments([x_min - th, -hw - th, WALL_Z0], [x_min, hw + th, hz], seg, 1)
        walls += _wall_segments([x_max, -hw - th, WALL_Z0], [x_max + th, hw + th, hz], seg, 1)
        row_hi = min(5.0, goal_x - 0.7)
        corridor_length = x_max - x_min
    else:
        width = cfg.corridor_width_s2
        leg1 = rng.uniform(cfg.l_leg1_min, cfg.l_leg1_max)
        leg2 = rng.uniform(cfg.l_leg2_min, cfg.l_leg2_max)
        x_min = -1.0
        hw = 0.5 * width
        y_max = leg2 + 1.0
        goal = np.array([leg1, leg2, 0.0])
        walls = []
        # leg 1 runs along +x, leg 2 turns left (+y) at x = leg1
        walls += _wall_segments([x_min, -hw - th, WALL_Z0], [leg1 + hw, -hw, hz], seg, 0)
        walls += _wall_segments([leg1 + hw, -hw - th, WALL_Z0], [leg1 + hw + th, y_max, hz], seg, 1)
        walls += _wall_segments([x_min, hw, WALL_Z0], [leg1 - hw, hw + th, hz], seg, 0)
        walls += _wall_segments([leg1 - hw - th, hw, WALL_Z0], [leg1 - hw, y_max, hz], seg, 1)
        walls += _wall_segments([x_min - th, -hw - th, WALL_Z0], [x_min, hw + th, hz], seg, 1)
        walls += _wall_segments([leg1 - hw - th, y_max, WALL_Z0], [leg1 + hw + th, y_max + th, hz], seg, 0)
        row_hi = min(5.0, leg1 - hw - 0.4)
        corridor_length = leg1 + leg2

    for _ in range(cfg.max_attempts):
        try:
            rows = _sample_rows(rng, cfg, count, cfg.first_row_offset, row_hi,
                                width, cfg.feasible_gap)
        except SceneGenerationError:
            raise
        if _rows_valid(rows, cfg.row_spacing_min):
            break
    else:
        raise SceneGenerationError(
            f"no feasible obstacle layout in {cfg.max_attempts} attempts")

    distractors = _sample_distractors(rng, cfg, cfg.first_row_offset, row_hi, width,
                                      rows, hz)
    return SceneSpec(
        scenario=scenario, difficulty=difficulty, corridor_width=width,
        corridor_length=corridor_length, walls=tuple(walls) + tuple(distractors),
        obstacles=tuple(rows), goal=goal, rng_seed=int(rng_seed))


def generate_pick_scene(rng_seed: int, cfg: SceneConfig | None = None) -> SceneSpec:
    """A small room with one table and one object on it.

    The robot starts facing the table; the object sits within side reach of
    the arm once the base is alongside the table edge.
    """
    cfg = cfg or SceneConfig()
    rng = _scene_rng(rng_seed)
    w = cfg.pick_room_width
    hw = 0.5 * w
    th = cfg.wall_thickness
    hz = cfg.wall_height
    seg = cfg.wall_segment_len
    room_len = 3.5
    x_min = -1.0
    walls = []
    walls += _wall_segments([x_min, -hw - th, WALL_Z0], [room_len, -hw, hz], seg, 0)
    walls += _wall_segments([x_min, hw, WALL_Z0], [room_len, hw + th, hz], seg, 0)
    walls += _wall_segments([x_min - th, -hw - th, WALL_Z0], [x_min, hw + th, hz], seg, 1)
    walls += _wall_segments([room_len, -hw - th, WALL_Z0], [room_len + th, hw + th, hz], seg, 1)

    t_len = rng.uniform(cfg.table_len_min, cfg.table_len_max)        # along x
    t_depth = rng.uniform(cfg.table_depth_min, cfg.table_depth_max)  # along y
    t_h = rng.uniform(cfg.table_height_min, cfg.table_height_max)
    # table against the -y wall: the arm (which extends along base -y) can
    # reach over it while the base drives alongside
    t_y0 = -hw + 0.02
    t_x0 = rng.uniform(1.2, 1.6)
    table = Box3([t_x0, t_y0, 0.0], [t_x0 + t_len, t_y0 + t_depth, t_h])

    kind = list(ObjectKind)[int(rng.integers(0, len(ObjectKind)))]
    sx, sy, sz = OBJECT_SIZES[kind]
    # keep the object within arm reach of the table's inner (robot-side) edge
    inner = t_y0 + t_depth
    oy = inner - rng.uniform(0.10, min(0.40, t_depth - 0.05))
    ox = rng.uniform(t_x0 + 0.15, t_x0 + t_len - 0.15)
    pos = np.array([ox, oy, t_h + 0.5 * sz])
    obj = ObjectSpec(kind=kind, box=Box3(pos - [0.5 * sx, 0.5 * sy, 0.5 * sz],
                                         pos + [0.5 * sx, 0.5 * sy, 0.5 * sz]),
                     position=pos, initial_position=pos)
    # goal marks the staging point beside the table (pick episodes end on
    # lift, not goal arrival)
    goal = np.array([t_x0 + 0.5 * t_len, inner + 0.45, 0.0])
    return SceneSpec(
        scenario=Scenario.STRAIGHT_CORRIDOR, difficulty=Difficulty.EASY,
        corridor_width=w, corridor_length=room_len - x_min, walls=tuple(walls),
        obstacles=(), goal=goal, rng_seed=int(rng_seed), table=table, object=obj)


def generate_dynamic_scene(rng_seed: int, n_moving: int = 2,
                           cfg: SceneConfig | None = None,
                           speed_lo: float = 0.2, speed_hi: float = 0.6) -> SceneSpec:
    """Straight corridor with constant-velocity obstacles (evaluation only)."""
    cfg = cfg or SceneConfig()
    base = generate_scene(Difficulty.EASY, Scenario.STRAIGHT_CORRIDOR, rng_seed, cfg)
    rng = _scene_rng(derive_seed(rng_seed, 1))
    movers = []
    hw = 0.5 * base.corridor_width
    for i in range(n_moving):
        size = rng.uniform(0.25, 0.4)
        cx = rng.uniform(2.0, min(5.0, base.goal[0] - 1.0))
        cy = rng.uniform(-hw + 0.5 * size + 0.05, hw - 0.5 * size - 0.05)
        speed = rng.uniform(speed_lo, speed_hi)
        ang = rng.uniform(0.0, 2.0 * math.pi)
        box = Box3([cx - 0.5 * size, cy - 0.5 * size, 0.0],
                   [cx + 0.5 * size, cy + 0.5 * size, rng.uniform(0.4, 0.8)])
        movers.append(Obstacle(box=box, kind=ObstacleKind.GROUND,
                               velocity=(speed * math.cos(ang), speed * math.sin(ang))))
    return replace(base, obstacles=base.obstacles + tuple(movers))


# ---------------------------------------------------------------------------
# canonical serialization
# ---------------------------------------------------------------------------

def _fmt_floats(vals) -> str:
    return " ".join("%.6f" % float(v) for v in vals)


def scene_to_text(scene: SceneSpec) -> str:
    """Canonical form: `key = value` lines, keys sorted, floats "%.6f"."""
    kv: dict[str, str] = {
        "corridor_length": "%.6f" % scene.corridor_length,
        "corridor_width": "%.6f" % scene.corridor_width,
        "difficulty": scene.difficulty.value,
        "format": "mmnav-scene-v1",
        "goal": _fmt_floats(scene.goal),
        "rng_seed": str(int(scene.rng_seed)),
        "scenario": scene.scenario.value,
    }
    for i, wall in enumerate(scene.walls):
        kv[f"walls[{i:03d}]"] = _fmt_floats(wall.as_array())
    for i, ob in enumerate(scene.obstacles):
        vel = ob.velocity if ob.velocity is not None else (0.0, 0.0)
        kv[f"obstacles[{i:03d}]"] = f"{ob.kind.value} " + _fmt_floats(
            list(ob.box.as_array()) + list(vel))
    if scene.table is not None:
        kv["table"] = _fmt_floats(scene.table.as_array())
    if scene.object is not None:
        o = scene.object
        kv["object"] = (f"{o.kind.value} " + _fmt_floats(
            list(o.box.as_array()) + list(o.position) + list(o.initial_position))
            + f" {1 if o.grasped else 0}")
    lines = [f"{k} = {kv[k]}" for k in sorted(kv)]
    return "\n".join(lines) + "\n"


def scene_from_text(text: str) -> SceneSpec:
    """Parse the canonical form back into a SceneSpec."""
    kv: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed scene line: {raw!r}")
        k, v = line.split("=", 1)
        kv[k.strip()] = v.strip()
    if kv.get("format") != "mmnav-scene-v1":
        raise ValueError("unsupported scene format")

    def floats(s):
        return [float(x) for x in s.split()]

    walls = []
    i = 0
    while f"walls[{i:03d}]" in kv:
        f6 = floats(kv[f"walls[{i:03d}]"])
        walls.append(Box3(f6[0:3], f6[3:6]))
        i += 1
    obstacles = []
    i = 0
    while f"obstacles[{i:03d}]" in kv:
        parts = kv[f"obstacles[{i:03d}]"].split()
        kind = ObstacleKind(parts[0])
        f8 = [float(x) for x in parts[1:]]
        vel = (f8[6], f8[7])
        obstacles.append(Obstacle(box=Box3(f8[0:3], f8[3:6]), kind=kind,
                                  velocity=None if vel == (0.0, 0.0) else vel))
        i += 1
    table = None
    if "table" in kv:
        f6 = floats(kv["table"])
        table = Box3(f6[0:3], f6[3:6])
    obj = None
    if "object" in kv:
        parts = kv["object"].split()
        f = [float(x) for x in parts[1:-1]]
        obj = ObjectSpec(kind=ObjectKind(parts[0]), box=Box3(f[0:3], f[3:6]),
                         position=np.array(f[6:9]), initial_position=np.array(f[9:12]),
                         grasped=parts[-1] == "1")
    return SceneSpec(
        scenario=Scenario(kv["scenario"]), difficulty=Difficulty(kv["difficulty"]),
        corridor_width=float(kv["corridor_width"]),
        corridor_length=float(kv["corridor_length"]),
        walls=tuple(walls), obstacles=tuple(obstacles),
        goal=np.array(floats(kv["goal"])), rng_seed=int(kv["rng_seed"]),
        table=table, object=obj)
