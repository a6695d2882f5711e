"""Procedural 3D obstacle worlds, quadrotor velocity-tracking dynamics,
ground-truth collision checking, and collision-episode rollout.

Worlds are three square sections placed serially along +x: the first holds
only large obstacles, the second mixes large obstacles and thin rods
(sampled independently), the third holds only thin rods.  Obstacles whose
cross-section is below 5 cm are "thin" and carry unique instance IDs >= 1;
everything else has ID 0.

Actions are rows [vr_x, vr_y, vr_z, steer]: a reference velocity in the
vehicle frame plus a steering angle measured from the current yaw.  The
planner-facing state is the partial state [v(3), yaw_rate, roll, pitch];
position and yaw stay private to the simulator.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import WorldError

ACTION_DIM = 4
PARTIAL_STATE_DIM = 6
THIN_CROSS_SECTION = 0.05  # m; below this an obstacle counts as thin

GRAVITY = 9.81

WORLD_MAGIC = b"WRLD"
WORLD_VERSION = 1


# ---------------------------------------------------------------------------
# Poisson disc sampling (Bridson dart throwing on a background grid)
# ---------------------------------------------------------------------------

def poisson_disc_sample(region, r: float, seed: int, k: int = 30) -> np.ndarray:
    """Sample points in an axis-aligned rectangle with pairwise distance >= r.

    region is (x0, y0, x1, y1).  Returns an (N, 2) array; empty for a
    degenerate region.  The sampling is maximal in the Bridson sense: every
    active point had k candidate neighbors rejected before retiring.
    """
    if r <= 0:
        raise WorldError(f"poisson disc radius must be > 0, got {r}")
    x0, y0, x1, y1 = region
    w, h = x1 - x0, y1 - y0
    if w <= 0 or h <= 0:
        return np.zeros((0, 2))
    rng = np.random.default_rng(seed)
    cell = r / np.sqrt(2.0)
    gw, gh = int(np.ceil(w / cell)), int(np.ceil(h / cell))
    grid = np.full((gw, gh), -1, dtype=np.int64)
    points: list[tuple[float, float]] = []

    def cell_of(p):
        return min(int((p[0] - x0) / cell), gw - 1), min(int((p[1] - y0) / cell), gh - 1)

    def fits(p):
        cx, cy = cell_of(p)
        for gx in range(max(cx - 2, 0), min(cx + 3, gw)):
            for gy in range(max(cy - 2, 0), min(cy + 3, gh)):
                idx = grid[gx, gy]
                if idx >= 0:
                    q = points[idx]
                    if (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 < r * r:
                        return False
        return True

    first = (x0 + rng.random() * w, y0 + rng.random() * h)
    points.append(first)
    grid[cell_of(first)] = 0
    active = [0]
    while active:
        pick = int(rng.integers(len(active)))
        base = points[active[pick]]
        placed = False
        for _ in range(k):
            rad = r * (1.0 + rng.random())
            ang = rng.random() * 2.0 * np.pi
            cand = (base[0] + rad * np.cos(ang), base[1] + rad * np.sin(ang))
            if not (x0 <= cand[0] < x1 and y0 <= cand[1] < y1):
                continue
            if fits(cand):
                grid[cell_of(cand)] = len(points)
                points.append(cand)
                active.append(len(points) - 1)
                placed = True
                break
        if not placed:
            active[pick] = active[-1]
            active.pop()
    return np.array(points)


# ---------------------------------------------------------------------------
# Worlds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WorldGenParams:
    """Geometry of the three-section obstacle course.

    radii are the Poisson disc spacings (r1 large-only section, r2/r3 the
    mixed section's large/thin samplings, r4 the rods-only section).
    """

    radii: tuple[float, float, float, float]
    section_size: float = 15.0
    large_footprint: tuple[float, float] = (0.09, 0.45)   # cross-section range, m
    large_height: tuple[float, float] = (1.0, 4.0)
    rod_cross_section: float = 0.04
    rod_height: tuple[float, float] = (2.0, 3.8)
    ceiling: float = 4.0
    spawn_clear: float = 1.2    # obstacle-free strip at the course start, m
    seed: int = 0

    def __post_init__(self):
        if min(self.radii) <= 0:
            raise WorldError(f"poisson radii must be > 0, got {self.radii}")

    @property
    def course_length(self) -> float:
        return 3.0 * self.section_size


DESK_RADII = {
    "sparse": (1.95, 1.95, 1.35, 1.05),
    "medium": (1.875, 1.875, 1.05, 0.9),
    "dense": (1.8, 1.8, 0.9, 0.75),
}
PAPER_RADII = {
    "sparse": (6.5, 6.5, 4.5, 3.5),
    "medium": (6.25, 6.25, 3.5, 3.0),
    "dense": (6.0, 6.0, 3.0, 2.5),
}


def desk_world_params(env: str = "medium", seed: int = 0) -> WorldGenParams:
    """Desk-scale preset: 15 m sections, course spacings at 0.3x the 50 m scale."""
    return WorldGenParams(radii=DESK_RADII[env], seed=seed)


def paper_world_params(env: str = "medium", seed: int = 0) -> WorldGenParams:
    """Full-scale preset: 50 m sections, 150 m course."""
    return WorldGenParams(
        radii=PAPER_RADII[env], section_size=50.0, large_footprint=(0.3, 1.5),
        spawn_clear=4.0, seed=seed,
    )


@dataclass
class World:
    """Immutable obstacle set.  cylinders: rows [cx, cy, radius, height, iid];
    boxes: rows [cx, cy, ex, ey, yaw, height, iid] (ex/ey are half-extents)."""

    cylinders: np.ndarray
    boxes: np.ndarray
    bounds: tuple[float, float, float, float]
    ceiling: float

    def __post_init__(self):
        self.cylinders = np.asarray(self.cylinders, dtype=np.float64).reshape(-1, 5)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 7)

    @property
    def obstacle_count(self) -> int:
        return len(self.cylinders) + len(self.boxes)

    def thin_instance_ids(self) -> np.ndarray:
        ids = np.concatenate([self.cylinders[:, 4], self.boxes[:, 6]]) if self.obstacle_count else np.zeros(0)
        return np.unique(ids[ids >= 1]).astype(np.int64)


def _is_thin_cyl(radius: float) -> bool:
    return 2.0 * radius < THIN_CROSS_SECTION


def generate_world(params: WorldGenParams) -> World:
    """Build the three-section course; deterministic per params.seed."""
    master = np.random.default_rng(params.seed)
    sub_seeds = master.integers(0, 2**63 - 1, size=8)
    s = params.section_size
    r1, r2, r3, r4 = params.radii

    cylinders, boxes = [], []
    next_iid = 1

    def add_large(points, rng):
        nonlocal cylinders, boxes
        f_lo, f_hi = params.large_footprint
        h_lo, h_hi = params.large_height
        for x, y in points:
            cross = rng.uniform(f_lo, f_hi)
            height = rng.uniform(h_lo, h_hi)
            if rng.random() < 0.5:
                cylinders.append([x, y, cross / 2.0, height, 0.0])
            else:
                ey = rng.uniform(f_lo, f_hi) / 2.0
                boxes.append([x, y, cross / 2.0, ey, rng.uniform(0.0, np.pi), height, 0.0])

    def add_rods(points, rng):
        nonlocal next_iid
        h_lo, h_hi = params.rod_height
        for x, y in points:
            height = rng.uniform(h_lo, h_hi)
            cylinders.append([x, y, params.rod_cross_section / 2.0, height, float(next_iid)])
            next_iid += 1

    # section 1: large only (with a clear spawn strip)
    pts = poisson_disc_sample((0.0, 0.0, s, s), r1, int(sub_seeds[0]))
    pts = pts[pts[:, 0] >= params.spawn_clear] if len(pts) else pts
    add_large(pts, np.random.default_rng(sub_seeds[1]))
    # section 2: independent large + thin samplings
    add_large(poisson_disc_sample((s, 0.0, 2 * s, s), r2, int(sub_seeds[2])),
              np.random.default_rng(sub_seeds[3]))
    add_rods(poisson_disc_sample((s, 0.0, 2 * s, s), r3, int(sub_seeds[4])),
             np.random.default_rng(sub_seeds[5]))
    # section 3: thin rods only
    add_rods(poisson_disc_sample((2 * s, 0.0, 3 * s, s), r4, int(sub_seeds[6])),
             np.random.default_rng(sub_seeds[7]))

    return World(
        cylinders=np.array(cylinders).reshape(-1, 5),
        boxes=np.array(boxes).reshape(-1, 7),
        bounds=(0.0, 0.0, 3 * s, s),
        ceiling=params.ceiling,
    )


def empty_world(extent: float = 60.0, ceiling: float = 4.0) -> World:
    return World(np.zeros((0, 5)), np.zeros((0, 7)), (0.0, 0.0, extent, extent), ceiling)


# ---------------------------------------------------------------------------
# Collision queries
# ---------------------------------------------------------------------------

def obstacle_distances(world: World, position: np.ndarray) -> np.ndarray:
    """Euclidean distance from a point to every obstacle solid (cyls then boxes)."""
    px, py, pz = float(position[0]), float(position[1]), float(position[2])
    out = []
    if len(world.cylinders):
        c = world.cylinders
        dxy = np.hypot(px - c[:, 0], py - c[:, 1])
        radial = np.maximum(dxy - c[:, 2], 0.0)
        dz = np.maximum(np.maximum(-pz, pz - c[:, 3]), 0.0)
        out.append(np.hypot(radial, dz))
    if len(world.boxes):
        b = world.boxes
        cos_y, sin_y = np.cos(b[:, 4]), np.sin(b[:, 4])
        rx, ry = px - b[:, 0], py - b[:, 1]
        qx = cos_y * rx + sin_y * ry
        qy = -sin_y * rx + cos_y * ry
        dx = np.maximum(np.abs(qx) - b[:, 2], 0.0)
        dy = np.maximum(np.abs(qy) - b[:, 3], 0.0)
        dz = np.maximum(np.maximum(-pz, pz - b[:, 5]), 0.0)
        out.append(np.sqrt(dx * dx + dy * dy + dz * dz))
    return np.concatenate(out) if out else np.zeros(0)


def min_clearance(world: World, position: np.ndarray) -> float:
    """Distance to the nearest obstacle or to the ground/ceiling planes."""
    pz = float(position[2])
    best = min(pz, world.ceiling - pz)
    d = obstacle_distances(world, position)
    if d.size:
        best = min(best, float(d.min()))
    return best


def check_collision(world: World, position: np.ndarray, radius: float) -> bool:
    """True iff a sphere at `position` intersects any obstacle or the
    ground/ceiling bounds."""
    if not np.all(np.isfinite(position)):
        raise WorldError(f"non-finite position {position}")
    return min_clearance(world, position) <= radius


# ---------------------------------------------------------------------------
# Vehicle dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DynamicsParams:
    tau_v: float = 0.3      # velocity tracking time constant, s
    tau_yaw: float = 0.4    # yaw tracking time constant, s
    omega_max: float = 1.6  # yaw rate limit, rad/s
    v_max: float = 1.5      # reference speed limit, m/s
    collision_radius: float = 0.3


@dataclass
class RobotState:
    """Ground-truth state (simulator-private; planners only ever see the
    partial-state projection)."""

    position: np.ndarray
    yaw: float
    velocity: np.ndarray  # vehicle frame
    yaw_rate: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).copy()
        self.velocity = np.asarray(self.velocity, dtype=np.float64).copy()

    def partial_state(self) -> np.ndarray:
        """The planner-facing projection [v(3), yaw_rate, roll, pitch]."""
        return np.array([*self.velocity, self.yaw_rate, self.roll, self.pitch])


def hover_state(position, yaw: float = 0.0) -> RobotState:
    return RobotState(position=np.asarray(position, float), yaw=yaw, velocity=np.zeros(3))


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def wrap_angle(a: float) -> float:
    return float((a + np.pi) % (2.0 * np.pi) - np.pi)


def step_dynamics(state: RobotState, action: np.ndarray, dt: float,
                  params: DynamicsParams = DynamicsParams()) -> RobotState:
    """First-order velocity and yaw tracking, integrated exactly over dt.

    The commanded velocity is the action's reference velocity rotated by the
    steering angle about vertical; roll/pitch follow quasi-statically from
    the commanded acceleration.
    """
    if dt <= 0:
        raise WorldError(f"dt must be > 0, got {dt}")
    action = np.asarray(action, dtype=np.float64)
    v_ref = action[:3]
    speed = np.linalg.norm(v_ref)
    if speed > params.v_max:
        v_ref = v_ref * (params.v_max / speed)
    steer = float(action[3])

    v_cmd = rot_z(steer) @ v_ref
    accel = (v_cmd - state.velocity) / params.tau_v
    decay = np.exp(-dt / params.tau_v)
    v_new = v_cmd + (state.velocity - v_cmd) * decay

    dyaw_des = wrap_angle(steer)
    dyaw = dyaw_des * (1.0 - np.exp(-dt / params.tau_yaw))
    dyaw = float(np.clip(dyaw, -params.omega_max * dt, params.omega_max * dt))
    yaw_new = wrap_angle(state.yaw + dyaw)

    pos_new = state.position + dt * (rot_z(yaw_new) @ v_new)
    return RobotState(
        position=pos_new,
        yaw=yaw_new,
        velocity=v_new,
        yaw_rate=dyaw / dt,
        roll=float(np.arctan2(-accel[1], GRAVITY)),
        pitch=float(np.arctan2(accel[0], GRAVITY)),
    )


def step_with_collision(world: World, state: RobotState, action, dt: float,
                        params: DynamicsParams, substeps: int = 5):
    """Advance one control interval, checking collision at each substep.

    Returns (new_state, collided).  On collision the state is the first
    colliding substate (the episode ends there anyway).
    """
    sub = dt / substeps
    current = state
    for _ in range(substeps):
        current = step_dynamics(current, action, sub, params)
        if check_collision(world, current.position, params.collision_radius):
            return current, True
    return current, False


# ---------------------------------------------------------------------------
# Episode rollout (randomized action sequences until collision or timeout)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActionSamplerConfig:
    """Random action sequences stay inside the camera's field of view."""

    max_steer: float = 0.66      # rad, ~ horizontal FOV/2 with margin
    max_climb: float = 0.44      # rad, ~ vertical FOV/2 with margin
    speed_range: tuple[float, float] = (0.3, 1.3)
    lateral_frac: float = 0.15   # small sideways reference component


def sample_action_sequence(rng: np.random.Generator, cfg: ActionSamplerConfig, T: int) -> np.ndarray:
    """One random constant-reference sequence of T actions."""
    speed = rng.uniform(*cfg.speed_range)
    steer = rng.uniform(-cfg.max_steer, cfg.max_steer)
    climb = rng.uniform(-cfg.max_climb, cfg.max_climb)
    vy = rng.uniform(-cfg.lateral_frac, cfg.lateral_frac) * speed
    action = np.array([speed * np.cos(climb), vy, speed * np.sin(climb), steer], dtype=np.float64)
    return np.tile(action, (T, 1))


@dataclass
class CollisionEpisode:
    frames: list                 # clean DepthFrame per executed step (at step start)
    states: np.ndarray           # (L, 6) partial states at step start
    actions: np.ndarray          # (L, 4) executed actions
    collided: np.ndarray         # (L,) uint8, collision during step i
    extra_actions: np.ndarray    # (T, 4) random continuation (collision episodes)
    ended_in_collision: bool
    seed: int

    def __len__(self):
        return len(self.actions)


def rollout_episode(world: World, start: RobotState, sensor, seed: int,
                    T: int = 10, dt: float = 0.25, max_steps: int = 120,
                    dynamics: DynamicsParams = DynamicsParams(),
                    sampler: ActionSamplerConfig = ActionSamplerConfig()) -> CollisionEpisode:
    """Execute random action sequences until a collision or the step budget.

    `sensor` maps a RobotState to the robot's current (clean) DepthFrame.
    The returned episode carries everything labeling needs, including the
    random continuation actions appended after a collision ending.
    """
    if check_collision(world, start.position, dynamics.collision_radius):
        raise WorldError("rollout start pose is in collision")
    rng = np.random.default_rng(seed)
    frames, states, actions, collided = [], [], [], []
    state = start
    hit = False
    steps = 0
    while steps < max_steps and not hit:
        seq = sample_action_sequence(rng, sampler, T)
        for i in range(T):
            frames.append(sensor(state))
            states.append(state.partial_state())
            actions.append(seq[i])
            state, hit = step_with_collision(world, state, seq[i], dt, dynamics)
            collided.append(1 if hit else 0)
            steps += 1
            if hit or steps >= max_steps:
                break
    if hit:
        # per-step randomized continuation for labeling windows past the end
        extra = np.stack([sample_action_sequence(rng, sampler, 1)[0] for _ in range(T)])
    else:
        extra = np.zeros((0, ACTION_DIM))
    return CollisionEpisode(
        frames=frames,
        states=np.asarray(states, dtype=np.float64).reshape(-1, PARTIAL_STATE_DIM),
        actions=np.asarray(actions, dtype=np.float64).reshape(-1, ACTION_DIM),
        collided=np.asarray(collided, dtype=np.uint8),
        extra_actions=extra,
        ended_in_collision=hit,
        seed=seed,
    )


def batch_min_clearance(world: World, positions: np.ndarray) -> np.ndarray:
    """min_clearance for many query points at once; positions (M, 3) -> (M,)."""
    positions = np.asarray(positions, dtype=np.float64)
    px, py, pz = positions[:, 0], positions[:, 1], positions[:, 2]
    best = np.minimum(pz, world.ceiling - pz)
    if len(world.cylinders):
        c = world.cylinders
        dxy = np.hypot(px[:, None] - c[None, :, 0], py[:, None] - c[None, :, 1])
        radial = np.maximum(dxy - c[None, :, 2], 0.0)
        dz = np.maximum(np.maximum(-pz[:, None], pz[:, None] - c[None, :, 3]), 0.0)
        best = np.minimum(best, np.hypot(radial, dz).min(axis=1))
    if len(world.boxes):
        b = world.boxes
        cos_y, sin_y = np.cos(b[:, 4]), np.sin(b[:, 4])
        rx = px[:, None] - b[None, :, 0]
        ry = py[:, None] - b[None, :, 1]
        qx = cos_y[None, :] * rx + sin_y[None, :] * ry
        qy = -sin_y[None, :] * rx + cos_y[None, :] * ry
        dx = np.maximum(np.abs(qx) - b[None, :, 2], 0.0)
        dy = np.maximum(np.abs(qy) - b[None, :, 3], 0.0)
        dz = np.maximum(np.maximum(-pz[:, None], pz[:, None] - b[None, :, 5]), 0.0)
        best = np.minimum(best, np.sqrt(dx * dx + dy * dy + dz * dz).min(axis=1))
    return best


def rollout_collision_matrix(world: World, start: RobotState, actions: np.ndarray,
                             dt: float, params: DynamicsParams = DynamicsParams(),
                             substeps: int = 5) -> np.ndarray:
    """Ground-truth cumulative collision flags for M action sequences rolled
    out in parallel from one start state; actions (M, T, 4) -> (M, T) uint8.

    Follows the same integration as step_with_collision (exact first-order
    velocity/yaw tracking, collision checked each substep)."""
    actions = np.asarray(actions, dtype=np.float64)
    m, t, _ = actions.shape
    pos = np.tile(start.position, (m, 1))
    yaw = np.full(m, start.yaw)
    vel = np.tile(start.velocity, (m, 1))
    hit = np.zeros(m, dtype=bool)
    out = np.zeros((m, t), dtype=np.uint8)
    sub = dt / substeps
    decay = np.exp(-sub / params.tau_v)
    yaw_gain = 1.0 - np.exp(-sub / params.tau_yaw)
    for step in range(t):
        v_ref = actions[:, step, :3].copy()
        speed = np.linalg.norm(v_ref, axis=1)
        over = speed > params.v_max
        v_ref[over] *= (params.v_max / speed[over])[:, None]
        steer = actions[:, step, 3]
        cs, sn = np.cos(steer), np.sin(steer)
        v_cmd = np.stack([cs * v_ref[:, 0] - sn * v_ref[:, 1],
                          sn * v_ref[:, 0] + cs * v_ref[:, 1],
                          v_ref[:, 2]], axis=1)
        dyaw_des = (steer + np.pi) % (2.0 * np.pi) - np.pi
        dyaw = np.clip(dyaw_des * yaw_gain, -params.omega_max * sub, params.omega_max * sub)
        for _ in range(substeps):
            vel = v_cmd + (vel - v_cmd) * decay
            yaw = (yaw + dyaw + np.pi) % (2.0 * np.pi) - np.pi
            cy, sy = np.cos(yaw), np.sin(yaw)
            pos = pos + sub * np.stack([cy * vel[:, 0] - sy * vel[:, 1],
                                        sy * vel[:, 0] + cy * vel[:, 1],
                                        vel[:, 2]], axis=1)
            hit |= batch_min_clearance(world, pos) <= params.collision_radius
        out[:, step] = hit
    return out


def find_free_start(world: World, rng: np.random.Generator, x_range, y_range, z: float = 1.0,
                    radius: float = 0.3, margin: float = 0.25, attempts: int = 200) -> RobotState:
    """Sample a collision-free hover start pose with clearance margin."""
    for _ in range(attempts):
        pos = np.array([rng.uniform(*x_range), rng.uniform(*y_range), z])
        if min_clearance(world, pos) > radius + margin:
            return hover_state(pos, yaw=float(rng.uniform(-0.2, 0.2)))
    raise WorldError("could not find a free start pose")


# ---------------------------------------------------------------------------
# World file container
# ---------------------------------------------------------------------------

def save_world(path, world: World) -> None:
    parts = [WORLD_MAGIC, struct.pack("<I", WORLD_VERSION)]
    parts.append(struct.pack("<4d", *world.bounds))
    parts.append(struct.pack("<d", world.ceiling))
    for table in (world.cylinders, world.boxes):
        arr = np.ascontiguousarray(table, dtype="<f8")
        parts.append(struct.pack("<II", arr.shape[0], arr.shape[1]))
        parts.append(arr.tobytes())
    blob = b"".join(parts)
    blob += struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_world(path) -> World:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != WORLD_MAGIC:
        raise WorldError(f"{path}: not a world file")
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != struct.unpack("<I", blob[-4:])[0]:
        raise WorldError(f"{path}: CRC mismatch")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off); off += 4
    if version != WORLD_VERSION:
        raise WorldError(f"{path}: unsupported world version {version}")
    bounds = struct.unpack_from("<4d", blob, off); off += 32
    (ceiling,) = struct.unpack_from("<d", blob, off); off += 8
    tables = []
    for _ in range(2):
        n, width = struct.unpack_from("<II", blob, off); off += 8
        arr = np.frombuffer(blob, dtype="<f8", count=n * width, offset=off).reshape(n, width).copy()
        off += 8 * n * width
        tables.append(arr)
    return World(cylinders=tables[0], boxes=tables[1], bounds=tuple(bounds), ceiling=ceiling)


def world_summary(world: World) -> str:
    """Human-readable companion text for a world file."""
    x0, y0, x1, y1 = world.bounds
    n_thin = int((np.concatenate([world.cylinders[:, 4], world.boxes[:, 6]]) >= 1).sum()) \
        if world.obstacle_count else 0
    lines = [
        f"bounds: x [{x0:.1f}, {x1:.1f}] m, y [{y0:.1f}, {y1:.1f}] m, ceiling {world.ceiling:.1f} m",
        f"obstacles: {world.obstacle_count} total, {len(world.cylinders)} cylinders, "
        f"{len(world.boxes)} boxes, {n_thin} thin",
    ]
    return "\n".join(lines) + "\n"
