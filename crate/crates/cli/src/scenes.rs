//! Synthetic scenes and frame logs, so nothing depends on external datasets.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use skimap::posegraph::Pose;
use skimap::Point;

use crate::framelog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scene {
    /// Uniform cloud in a 10 x 10 x 2 m box.
    Random,
    /// 20 m corridor: floor and two walls.
    Corridor,
    /// 8 x 8 m floor with one 3 m wall.
    Room,
    /// Small blobs scattered over a 400 x 400 x 40 m workspace.
    Sparse,
}

impl Scene {
    pub const ALL: [Scene; 4] = [Scene::Random, Scene::Corridor, Scene::Room, Scene::Sparse];

    pub fn name(&self) -> &'static str {
        match self {
            Scene::Random => "random",
            Scene::Corridor => "corridor",
            Scene::Room => "room",
            Scene::Sparse => "sparse",
        }
    }

    /// Workspace box `(min, max)` enclosing every generated point.
    pub fn bounds(&self) -> (Point, Point) {
        match self {
            Scene::Random => (Point::new(-5.0, -5.0, 0.0), Point::new(5.0, 5.0, 2.0)),
            Scene::Corridor => (Point::new(0.0, -1.0, 0.0), Point::new(20.0, 1.0, 2.5)),
            Scene::Room => (Point::new(-4.0, -4.0, 0.0), Point::new(4.0, 4.0, 3.0)),
            Scene::Sparse => (Point::new(-200.0, -200.0, 0.0), Point::new(200.0, 200.0, 40.0)),
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let (lo, hi) = self.bounds();
        let uniform = |rng: &mut Xoshiro256PlusPlus, a: f64, b: f64| rng.random_range(a..b);
        match self {
            Scene::Random => (0..n)
                .map(|_| {
                    Point::new(
                        uniform(&mut rng, lo.x, hi.x),
                        uniform(&mut rng, lo.y, hi.y),
                        uniform(&mut rng, lo.z, hi.z),
                    )
                })
                .collect(),
            Scene::Corridor => (0..n)
                .map(|_| {
                    let x = uniform(&mut rng, lo.x, hi.x);
                    match rng.random_range(0..3) {
                        0 => Point::new(x, uniform(&mut rng, lo.y, hi.y), 0.0),
                        1 => Point::new(x, lo.y, uniform(&mut rng, lo.z, hi.z)),
                        _ => Point::new(x, hi.y - 1e-3, uniform(&mut rng, lo.z, hi.z)),
                    }
                })
                .collect(),
            Scene::Room => (0..n)
                .map(|_| {
                    if rng.random_bool(0.7) {
                        Point::new(uniform(&mut rng, lo.x, hi.x), uniform(&mut rng, lo.y, hi.y), 0.0)
                    } else {
                        Point::new(hi.x - 1e-3, uniform(&mut rng, lo.y, hi.y), uniform(&mut rng, 0.05, hi.z))
                    }
                })
                .collect(),
            Scene::Sparse => {
                let blobs = (n / 200).max(1);
                let centers: Vec<Point> = (0..blobs)
                    .map(|_| {
                        Point::new(
                            uniform(&mut rng, lo.x + 1.0, hi.x - 1.0),
                            uniform(&mut rng, lo.y + 1.0, hi.y - 1.0),
                            uniform(&mut rng, lo.z + 1.0, hi.z - 1.0),
                        )
                    })
                    .collect();
                (0..n)
                    .map(|i| {
                        let c = centers[i % blobs];
                        Point::new(
                            c.x + uniform(&mut rng, -0.5, 0.5),
                            c.y + uniform(&mut rng, -0.5, 0.5),
                            c.z + uniform(&mut rng, -0.5, 0.5),
                        )
                    })
                    .collect()
            }
        }
    }
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scene {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scene::ALL
            .into_iter()
            .find(|scene| scene.name() == s)
            .ok_or_else(|| format!("unknown scene {s:?} (expected random, corridor, room or sparse)"))
    }
}

pub fn yaw_pose(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
    Pose::from_tq([x, y, z], [0.0, 0.0, (yaw / 2.0).sin(), (yaw / 2.0).cos()]).expect("unit quaternion")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogOptions {
    pub frames: usize,
    /// Emit drifted live poses followed by OPT corrections.
    pub optimized: bool,
    /// Live-pose drift: translation (m) and yaw (rad) noise amplitude.
    pub drift: f64,
}

impl Default for LogOptions {
    fn default() -> Self {
        Self {
            frames: 10,
            optimized: false,
            drift: 0.1,
        }
    }
}

/// Splits a world-frame cloud into frames seen from random sensor poses.
///
/// With `optimized`, every FRAME carries a drifted live pose and the true
/// pose arrives later as an OPT record, two frames behind; even frames first
/// get an intermediate correction, so the newest pose must win. Without it,
/// FRAME poses are exact. Either way the final poses place every point at its
/// world position, and [`final_poses`] lists them.
pub fn frame_log(world: &[Point], options: LogOptions, seed: u64) -> String {
    let plan = plan(world.len(), options, seed);
    let mut out = String::new();
    let mut deferred: Vec<(usize, Pose)> = Vec::new();
    for (i, frame) in plan.iter().enumerate() {
        let inverse = frame.truth.inverse();
        let sensor: Vec<Point> = world[frame.range.clone()]
            .iter()
            .map(|p| inverse.transform_point(p))
            .collect();
        framelog::write_frame(&mut out, i as u64, i as f64 * 0.1, &frame.live, &sensor);
        if options.optimized {
            if let Some(mid) = frame.intermediate {
                deferred.push((i, mid));
            }
            deferred.push((i, frame.truth));
            let due = deferred.iter().take_while(|(id, _)| id + 2 <= i).count();
            for (id, pose) in deferred.drain(..due) {
                framelog::write_opt(&mut out, id as u64, &pose);
            }
        }
    }
    for (id, pose) in deferred {
        framelog::write_opt(&mut out, id as u64, &pose);
    }
    out
}

/// The pose each frame of [`frame_log`] ends up with.
pub fn final_poses(n_points: usize, options: LogOptions, seed: u64) -> Vec<Pose> {
    plan(n_points, options, seed).into_iter().map(|f| f.truth).collect()
}

struct PlannedFrame {
    range: std::ops::Range<usize>,
    truth: Pose,
    live: Pose,
    intermediate: Option<Pose>,
}

fn plan(n_points: usize, options: LogOptions, seed: u64) -> Vec<PlannedFrame> {
    let frames = options.frames.max(1);
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x5eed_f4a3);
    let per = n_points.div_ceil(frames);
    (0..frames)
        .map(|i| {
            let start = (i * per).min(n_points);
            let end = ((i + 1) * per).min(n_points);
            let (x, y, yaw) = (
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-PI..PI),
            );
            let truth = yaw_pose(x, y, 0.0, yaw);
            let d = options.drift;
            let (dx, dy, dyaw) = (
                rng.random_range(-d..=d),
                rng.random_range(-d..=d),
                rng.random_range(-d..=d),
            );
            let (live, intermediate) = if options.optimized {
                let live = yaw_pose(x + dx, y + dy, 0.0, yaw + dyaw);
                let mid = (i % 2 == 0).then(|| yaw_pose(x + dx / 2.0, y + dy / 2.0, 0.0, yaw + dyaw / 2.0));
                (live, mid)
            } else {
                (truth, None)
            };
            PlannedFrame {
                range: start..end,
                truth,
                live,
                intermediate,
            }
        })
        .collect()
}
