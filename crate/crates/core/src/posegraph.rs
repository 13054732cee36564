//! Pose history and pose integrator.
//!
//! Every sensor frame keeps a queue of poses: the live tracking pose first,
//! then any optimized poses delivered later. The integrator keeps the map
//! consistent with the newest pose of each frame. Each cycle it picks a
//! bounded batch of frames, erodes a stale frame's contribution under the
//! pose it was fused with, and fuses it again under its newest pose.
//!
//! Selection order within a cycle:
//! 1. frames never integrated, in submission order;
//! 2. stale frames, nearest first by translation distance between their last
//!    integrated pose and the current live pose (ties by frame id).

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::fusion::{Payload, Sample};
use crate::map::{BoundsPolicy, MapError, Point, SkiMap, VoxelKey};

pub type FrameId = u64;

/// Rigid transform from a sensor frame to the map frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose(pub Isometry3<f64>);

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self(Isometry3::identity())
    }

    pub fn new(translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self(Isometry3::from_parts(Translation3::from(translation), rotation))
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// From a translation and a quaternion given as `(qx, qy, qz, qw)`. The
    /// quaternion is normalized; a zero or non-finite one is rejected.
    pub fn from_tq(t: [f64; 3], q: [f64; 4]) -> Result<Self, PoseError> {
        let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
        let norm = quat.norm();
        if !(norm.is_finite() && norm > 1e-12) || t.iter().any(|v| !v.is_finite()) {
            return Err(PoseError::InvalidPose(format!("t={t:?} q={q:?}")));
        }
        Ok(Self::new(Vector3::from(t), UnitQuaternion::from_quaternion(quat)))
    }

    /// Translation and `(qx, qy, qz, qw)`.
    pub fn to_tq(&self) -> ([f64; 3], [f64; 4]) {
        let t = self.0.translation.vector;
        let q = self.0.rotation.quaternion();
        ([t.x, t.y, t.z], [q.i, q.j, q.k, q.w])
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.translation.vector
    }

    pub fn transform_point(&self, p: &Point) -> Point {
        self.0.transform_point(p)
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self(self.0 * other.0)
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.translation() - other.translation()).norm()
    }

    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.0.rotation.angle_to(&other.0.rotation)
    }

    /// Same placement up to `1e-12` in translation and rotation angle.
    pub fn same_as(&self, other: &Pose) -> bool {
        self.translation_distance(other) <= 1e-12 && self.rotation_angle_to(other) <= 1e-12
    }
}

/// `q = R p + t` for every point.
pub fn transform_points(pose: &Pose, points: &[Point]) -> Vec<Point> {
    points.iter().map(|p| pose.transform_point(p)).collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseError {
    #[error("frame {0} was already submitted")]
    DuplicateFrame(FrameId),
    #[error("frame {0} has no pose")]
    NoPose(FrameId),
    #[error("unknown frame {0}")]
    UnknownFrame(FrameId),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
}

/// One sensor measurement with its pose queue.
#[derive(Debug, Clone)]
pub struct FrameRecord<S = Sample> {
    pub id: FrameId,
    pub timestamp: f64,
    /// Points in the sensor frame, each with the sample it contributes.
    pub points: Arc<[(Point, S)]>,
    /// Append-only; index 0 is the live tracking pose.
    pub poses: Vec<Pose>,
    /// Index of the pose whose contribution is currently in the map.
    pub last_integrated: Option<usize>,
}

impl<S: Copy> FrameRecord<S> {
    pub fn new(id: FrameId, timestamp: f64, points: Vec<(Point, S)>, live_pose: Pose) -> Self {
        Self {
            id,
            timestamp,
            points: points.into(),
            poses: vec![live_pose],
            last_integrated: None,
        }
    }

    pub fn newest_pose(&self) -> Option<&Pose> {
        self.poses.last()
    }

    pub fn integrated_pose(&self) -> Option<&Pose> {
        self.last_integrated.map(|i| &self.poses[i])
    }

    /// Integrated under an older pose that differs from the newest one.
    pub fn is_stale(&self) -> bool {
        match self.last_integrated {
            Some(i) if i + 1 < self.poses.len() => {
                !self.poses[i].same_as(self.poses.last().expect("non-empty queue"))
            }
            _ => false,
        }
    }
}

impl FrameRecord<Sample> {
    /// Frame whose points all carry `sample`.
    pub fn uniform(id: FrameId, timestamp: f64, points: &[Point], sample: Sample, live_pose: Pose) -> Self {
        Self::new(id, timestamp, points.iter().map(|p| (*p, sample)).collect(), live_pose)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Maximum frames integrated or re-integrated per cycle.
    pub batch_bound: usize,
    /// Weight of the rotation angle (radians) in the proximity metric; 0
    /// ranks by translation distance alone.
    pub rotation_weight: f64,
    /// Workers for the map's partitioned batch operations.
    pub workers: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            batch_bound: 4,
            rotation_weight: 0.0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizedPoseReport {
    pub accepted: usize,
    pub rejected: Vec<PoseError>,
}

#[derive(Debug, Clone, Default)]
pub struct CycleReport {
    /// First-time integrations, in processing order.
    pub integrated: Vec<FrameId>,
    /// Erode-and-refuse updates, in processing order.
    pub reintegrated: Vec<FrameId>,
    pub failed: Vec<(FrameId, MapError)>,
    pub points_fused: usize,
    pub points_eroded: usize,
    /// An erosion failed: the map and the pose history disagree.
    pub consistency_fault: bool,
}

impl CycleReport {
    pub fn frames_touched(&self) -> usize {
        self.integrated.len() + self.reintegrated.len() + self.failed.len()
    }

    pub fn is_idle(&self) -> bool {
        self.frames_touched() == 0
    }

    pub fn map_writes(&self) -> usize {
        self.points_fused + self.points_eroded
    }
}

/// Read-only view of a frame's queue state.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStatus {
    pub poses: usize,
    pub last_integrated: Option<usize>,
    pub stale: bool,
}

struct State<S> {
    frames: BTreeMap<FrameId, FrameRecord<S>>,
    pending: VecDeque<FrameId>,
    live_pose: Option<Pose>,
}

struct Job<S> {
    id: FrameId,
    points: Arc<[(Point, S)]>,
    old_pose: Option<Pose>,
    new_index: usize,
    new_pose: Pose,
}

/// Pose history shared between producers (tracker, optimizer) and the
/// integrator thread. Submission methods take `&self` and serialize through
/// an internal lock; the lock is not held while the map is written.
pub struct PoseManager<S = Sample> {
    config: IntegratorConfig,
    state: Mutex<State<S>>,
}

impl<S: Copy + Send + Sync> PoseManager<S> {
    pub fn new(config: IntegratorConfig) -> Self {
        assert!(config.batch_bound >= 1, "batch bound must be at least 1");
        Self {
            config,
            state: Mutex::new(State {
                frames: BTreeMap::new(),
                pending: VecDeque::new(),
                live_pose: None,
            }),
        }
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, State<S>> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Enqueues a new frame. Its newest pose becomes the current live pose.
    pub fn submit_frame(&self, mut frame: FrameRecord<S>) -> Result<FrameId, PoseError> {
        let id = frame.id;
        let Some(live) = frame.poses.last().copied() else {
            return Err(PoseError::NoPose(id));
        };
        let mut state = self.lock();
        if state.frames.contains_key(&id) {
            return Err(PoseError::DuplicateFrame(id));
        }
        frame.last_integrated = None;
        state.frames.insert(id, frame);
        state.pending.push_back(id);
        state.live_pose = Some(live);
        Ok(id)
    }

    /// Appends optimized poses to their frames' queues. Unknown frames are
    /// rejected individually.
    pub fn submit_optimized_poses(&self, updates: &[(FrameId, Pose)]) -> OptimizedPoseReport {
        let mut state = self.lock();
        let mut report = OptimizedPoseReport::default();
        for (id, pose) in updates {
            match state.frames.get_mut(id) {
                Some(frame) => {
                    frame.poses.push(*pose);
                    report.accepted += 1;
                }
                None => report.rejected.push(PoseError::UnknownFrame(*id)),
            }
        }
        report
    }

    pub fn frame_status(&self, id: FrameId) -> Option<FrameStatus> {
        self.lock().frames.get(&id).map(|f| FrameStatus {
            poses: f.poses.len(),
            last_integrated: f.last_integrated,
            stale: f.is_stale(),
        })
    }

    pub fn frame_count(&self) -> usize {
        self.lock().frames.len()
    }

    pub fn pending_count(&self) -> usize {
        self.lock().pending.len()
    }

    pub fn stale_count(&self) -> usize {
        self.lock().frames.values().filter(|f| f.is_stale()).count()
    }

    pub fn live_pose(&self) -> Option<Pose> {
        self.lock().live_pose
    }

    /// Frames in id order with their integrated pose, if any.
    pub fn integrated_poses(&self) -> Vec<(FrameId, Option<Pose>)> {
        self.lock()
            .frames
            .values()
            .map(|f| (f.id, f.integrated_pose().copied()))
            .collect()
    }

    fn distance(&self, a: &Pose, b: &Pose) -> f64 {
        a.translation_distance(b) + self.config.rotation_weight * a.rotation_angle_to(b)
    }

    fn select(&self) -> Vec<Job<S>> {
        let mut state = self.lock();
        let bound = self.config.batch_bound;
        let mut jobs = Vec::with_capacity(bound);
        while jobs.len() < bound {
            let Some(id) = state.pending.pop_front() else {
                break;
            };
            let frame = &state.frames[&id];
            jobs.push(Job {
                id,
                points: frame.points.clone(),
                old_pose: None,
                new_index: frame.poses.len() - 1,
                new_pose: *frame.poses.last().expect("non-empty queue"),
            });
        }
        if jobs.len() < bound {
            let live = state.live_pose.unwrap_or_default();
            let mut stale: Vec<(f64, FrameId)> = state
                .frames
                .values()
                .filter(|f| f.is_stale())
                .map(|f| {
                    let pose = f.integrated_pose().expect("stale frames are integrated");
                    (self.distance(pose, &live), f.id)
                })
                .collect();
            stale.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (_, id) in stale.into_iter().take(bound - jobs.len()) {
                let frame = &state.frames[&id];
                jobs.push(Job {
                    id,
                    points: frame.points.clone(),
                    old_pose: frame.integrated_pose().copied(),
                    new_index: frame.poses.len() - 1,
                    new_pose: *frame.poses.last().expect("non-empty queue"),
                });
            }
        }
        jobs
    }

    /// Runs one integration cycle against `map`, the only map writer while
    /// the cycle runs.
    pub fn integration_cycle<V>(&self, map: &mut SkiMap<V>) -> CycleReport
    where
        V: Payload<Sample = S>,
    {
        let jobs = self.select();
        let mut report = CycleReport::default();
        let mut done: Vec<(FrameId, usize)> = Vec::with_capacity(jobs.len());
        let workers = self.config.workers;
        for job in jobs {
            let new_keys = match placed_keys(map, &job.points, &job.new_pose) {
                Ok(keys) => keys,
                Err(e) => {
                    report.failed.push((job.id, e));
                    continue;
                }
            };
            if let Some(old_pose) = job.old_pose {
                let old_keys = match placed_keys(map, &job.points, &old_pose) {
                    Ok(keys) => keys,
                    Err(e) => {
                        report.consistency_fault = true;
                        report.failed.push((job.id, e));
                        continue;
                    }
                };
                match map.erode_keys(old_keys, workers) {
                    Ok(r) => report.points_eroded += r.points,
                    Err(e) => {
                        report.consistency_fault = true;
                        report.failed.push((job.id, e));
                        continue;
                    }
                }
            }
            report.points_fused += map.integrate_keys(new_keys, workers).points;
            if job.old_pose.is_some() {
                report.reintegrated.push(job.id);
            } else {
                report.integrated.push(job.id);
            }
            done.push((job.id, job.new_index));
        }
        let mut state = self.lock();
        for (id, index) in done {
            let frame = state.frames.get_mut(&id).expect("frames are never dropped");
            debug_assert!(frame.last_integrated.is_none_or(|i| i <= index));
            frame.last_integrated = Some(index);
        }
        report
    }

    /// Runs cycles until nothing is pending or stale, up to `max_cycles`.
    pub fn run_until_idle<V>(&self, map: &mut SkiMap<V>, max_cycles: usize) -> Vec<CycleReport>
    where
        V: Payload<Sample = S>,
    {
        let mut reports = Vec::new();
        for _ in 0..max_cycles {
            let report = self.integration_cycle(map);
            if report.is_idle() {
                break;
            }
            reports.push(report);
        }
        reports
    }
}

/// Keys of a frame's points placed by `pose`. Points outside the workspace
/// fail the frame under [`BoundsPolicy::Reject`] and are dropped under
/// [`BoundsPolicy::Skip`]; the same pose always yields the same key set, so
/// erosion mirrors fusion exactly.
fn placed_keys<V, S: Copy>(
    map: &SkiMap<V>,
    points: &[(Point, S)],
    pose: &Pose,
) -> Result<Vec<(VoxelKey, S)>, MapError> {
    let skip = map.config().bounds_policy == BoundsPolicy::Skip;
    let mut keys = Vec::with_capacity(points.len());
    for (p, sample) in points {
        match map.quantize(&pose.transform_point(p)) {
            Ok(key) => keys.push((key, *sample)),
            Err(_) if skip => {}
            Err(e) => return Err(e),
        }
    }
    Ok(keys)
}
