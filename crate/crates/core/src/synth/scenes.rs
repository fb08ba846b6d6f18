//! Occupancy-grid driving scenes with kinematically generated expert
//! trajectories. Obstacles are placed after the expert path is simulated and
//! rejected near it, so generated trajectories are collision-free by
//! construction.

use base64::Engine;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pairs::VideoClip;
use crate::error::{Error, Result};

pub const EGO_SPEED_MAX: f64 = 8.0;
pub const SCENE_WAYPOINTS: usize = 6;
pub const HISTORY_POSES: usize = 4;
const WAYPOINT_HZ: f64 = 2.0;
const CURVATURE_MAX: f64 = 0.5;
const SIM_DT: f64 = 0.05;
const CLEARANCE_M: f64 = 2.2;
const GRID_SIDE: usize = 64;
const GRID_RES: f64 = 0.5;
/// ego sits at (0, 0) heading +x; the grid spans [-8, 24] x [-16, 16] m
const GRID_ORIGIN: (f64, f64) = (-8.0, -16.0);

/// Boolean occupancy grid, row-major from the origin corner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    /// meters per cell
    pub resolution: f64,
    /// world coordinates of the (0, 0) cell corner
    pub origin: (f64, f64),
    pub occupancy: Vec<bool>,
}

impl Grid {
    pub fn empty() -> Self {
        Grid {
            width: GRID_SIDE,
            height: GRID_SIDE,
            resolution: GRID_RES,
            origin: GRID_ORIGIN,
            occupancy: vec![false; GRID_SIDE * GRID_SIDE],
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = ((x - self.origin.0) / self.resolution).floor();
        let row = ((y - self.origin.1) / self.resolution).floor();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some((col as usize, row as usize))
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.0 + (col as f64 + 0.5) * self.resolution,
            self.origin.1 + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.occupancy[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.occupancy[row * self.width + col] = value;
    }

    /// Occupancy at a world point; out-of-grid points are free.
    pub fn occupied_at(&self, x: f64, y: f64) -> bool {
        match self.cell_of(x, y) {
            Some((col, row)) => self.get(col, row),
            None => false,
        }
    }
}

/// Wire form of a grid: occupancy as base64 of a run-length stream
/// (leading bit byte, then u32 LE run lengths of alternating values).
#[derive(Serialize, Deserialize)]
struct GridRepr {
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    rle: String,
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        let mut bytes = Vec::new();
        bytes.push(g.occupancy.first().copied().unwrap_or(false) as u8);
        let mut run: u32 = 0;
        let mut current = g.occupancy.first().copied().unwrap_or(false);
        for &bit in &g.occupancy {
            if bit == current {
                run += 1;
            } else {
                bytes.extend_from_slice(&run.to_le_bytes());
                current = bit;
                run = 1;
            }
        }
        if run > 0 {
            bytes.extend_from_slice(&run.to_le_bytes());
        }
        GridRepr {
            width: g.width,
            height: g.height,
            resolution: g.resolution,
            origin: g.origin,
            rle: base64::engine::general_purpose::STANDARD.encode(bytes),
        }
    }
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(&r.rle)
            .map_err(|e| Error::Format(format!("grid rle is not valid base64: {e}")))?;
        if bytes.is_empty() || (bytes.len() - 1) % 4 != 0 {
            return Err(Error::Format("grid rle stream is ragged".into()));
        }
        let mut occupancy = Vec::with_capacity(r.width * r.height);
        let mut current = bytes[0] != 0;
        for chunk in bytes[1..].chunks_exact(4) {
            let run = u32::from_le_bytes(chunk.try_into().unwrap()) as usize;
            occupancy.extend(std::iter::repeat(current).take(run));
            current = !current;
        }
        if occupancy.len() != r.width * r.height {
            return Err(Error::Format(format!(
                "grid rle decodes to {} cells, expected {}",
                occupancy.len(),
                r.width * r.height
            )));
        }
        Ok(Grid {
            width: r.width,
            height: r.height,
            resolution: r.resolution,
            origin: r.origin,
            occupancy,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    TurnLeft,
    GoStraight,
    TurnRight,
}

impl Command {
    pub const ALL: [Command; 3] = [Command::TurnLeft, Command::GoStraight, Command::TurnRight];

    /// goal bearing relative to the current heading, radians
    pub fn goal_heading(self) -> f64 {
        match self {
            Command::TurnLeft => 60f64.to_radians(),
            Command::GoStraight => 0.0,
            Command::TurnRight => -60f64.to_radians(),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Command::TurnLeft => 0,
            Command::GoStraight => 1,
            Command::TurnRight => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    fn obstacles(self) -> usize {
        match self {
            Difficulty::Easy => 4,
            Difficulty::Medium => 8,
            Difficulty::Hard => 14,
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::Usage(format!(
                "unknown difficulty {other:?} (expected easy, medium, or hard)"
            ))),
        }
    }
}

/// One planning scene in the ego frame: ego at the origin heading +x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub grid: Grid,
    /// oldest first; the last pose is the current one (0, 0, 0)
    pub ego_history: Vec<[f64; 3]>,
    pub command: Command,
    /// future waypoints in meters at 2 Hz
    pub expert_traj: Vec<[f64; 2]>,
    /// cruise speed used by the expert controller, m/s
    pub speed: f64,
}

/// Pure-pursuit rollout toward a fixed goal point; returns waypoints at
/// 2 Hz plus the dense simulated path for clearance checks.
fn rollout(speed: f64, goal: (f64, f64)) -> (Vec<[f64; 2]>, Vec<(f64, f64)>) {
    let steps_per_waypoint = (1.0 / (WAYPOINT_HZ * SIM_DT)).round() as usize;
    let (mut x, mut y, mut yaw) = (0.0f64, 0.0f64, 0.0f64);
    let mut waypoints = Vec::with_capacity(SCENE_WAYPOINTS);
    let mut path = vec![(x, y)];
    for _ in 0..SCENE_WAYPOINTS {
        for _ in 0..steps_per_waypoint {
            let (dx, dy) = (goal.0 - x, goal.1 - y);
            let dist = (dx * dx + dy * dy).sqrt();
            let kappa = if dist > 1e-6 {
                let alpha = dy.atan2(dx) - yaw;
                (2.0 * alpha.sin() / dist).clamp(-CURVATURE_MAX, CURVATURE_MAX)
            } else {
                0.0
            };
            yaw += speed * kappa * SIM_DT;
            x += speed * yaw.cos() * SIM_DT;
            y += speed * yaw.sin() * SIM_DT;
            path.push((x, y));
        }
        waypoints.push([x, y]);
    }
    (waypoints, path)
}

fn place_obstacles(
    grid: &mut Grid,
    path: &[(f64, f64)],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let clearance2 = CLEARANCE_M * CLEARANCE_M;
    for _ in 0..count {
        let mut placed = false;
        for _attempt in 0..40 {
            let w = rng.gen_range(2..5usize);
            let h = rng.gen_range(2..5usize);
            let col = rng.gen_range(0..grid.width - w);
            let row = rng.gen_range(0..grid.height - h);
            let clear = (0..h).all(|dr| {
                (0..w).all(|dc| {
                    let (cx, cy) = grid.cell_center(col + dc, row + dr);
                    path.iter()
                        .all(|&(px, py)| (cx - px).powi(2) + (cy - py).powi(2) > clearance2)
                })
            });
            if clear {
                for dr in 0..h {
                    for dc in 0..w {
                        grid.set(col + dc, row + dr, true);
                    }
                }
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation(
                "could not place an obstacle clear of the expert path; grid too crowded".into(),
            ));
        }
    }
    Ok(())
}

pub fn gen_scenes(n: usize, seed: u64, difficulty: Difficulty) -> Result<Vec<Scene>> {
    if n == 0 {
        return Err(Error::Input("need at least 1 scene".into()));
    }
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64 + 1));
            let command = Command::ALL[rng.gen_range(0..3)];
            let speed = rng.gen_range(3.5..6.0);
            let bearing = command.goal_heading();
            let radius = speed * 3.2;
            let goal = (radius * bearing.cos(), radius * bearing.sin());
            let (expert_traj, path) = rollout(speed, goal);
            let mut grid = Grid::empty();
            place_obstacles(&mut grid, &path, difficulty.obstacles(), &mut rng)?;
            let history_dt = 1.0 / WAYPOINT_HZ;
            let ego_history: Vec<[f64; 3]> = (0..HISTORY_POSES)
                .map(|k| {
                    let back = (HISTORY_POSES - 1 - k) as f64;
                    [-speed * history_dt * back, 0.0, 0.0]
                })
                .collect();
            Ok(Scene {
                id: format!("scene{i:05}"),
                grid,
                ego_history,
                command,
                expert_traj,
                speed,
            })
        })
        .collect()
}

/// Rasterize a deterministic 4-frame forward view of the scene: the grid
/// max-pooled to 32x32, a command-direction ramp, and an ego marker that
/// advances along the expert trajectory across frames.
pub fn render_camera(scene: &Scene) -> VideoClip {
    let side = 32;
    let frames = 4;
    let grid = &scene.grid;
    let mut data = vec![0.0; frames * side * side];
    let bearing = scene.command.goal_heading();
    for f in 0..frames {
        // waypoint tracked by this frame (frame 0 shows the start pose)
        let (mx, my) = if f == 0 {
            (0.0, 0.0)
        } else {
            let wp = scene.expert_traj[(f * scene.expert_traj.len() / frames).min(scene.expert_traj.len() - 1)];
            (wp[0], wp[1])
        };
        for y in 0..side {
            for x in 0..side {
                // 2x2 max pool over the occupancy grid
                let mut occ: f64 = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        if grid.get(2 * x + dx, 2 * y + dy) {
                            occ = 1.0;
                        }
                    }
                }
                let (wx, wy) = (
                    grid.origin.0 + (2 * x) as f64 * grid.resolution + grid.resolution,
                    grid.origin.1 + (2 * y) as f64 * grid.resolution + grid.resolution,
                );
                let ramp = 0.25 + 0.2 * bearing.signum() * (wy / 16.0)
                    + 0.1 * (wx / 24.0);
                let d2 = (wx - mx).powi(2) + (wy - my).powi(2);
                let marker = 0.9 * (-d2 / 2.0).exp();
                let v: f64 = occ.max(ramp + marker);
                data[(f * side + y) * side + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    VideoClip {
        frames,
        height: side,
        width: side,
        channels: 1,
        data,
        fps: 2.0,
    }
}
