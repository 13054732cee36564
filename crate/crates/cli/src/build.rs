//! Frame-log replay into a map.

use std::time::Instant;

use serde::Serialize;
use skimap::baselines::measure_skimap_memory;
use skimap::ground::{detect_ground, integrate_classified, GroundModel, PointLabel};
use skimap::posegraph::{CycleReport, FrameId, FrameRecord, Pose, PoseManager};
use skimap::{MapError, Point, Sample, SkiMap};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::framelog::Record;

#[derive(Debug, Clone, Serialize)]
pub struct CycleStats {
    pub integrated: Vec<FrameId>,
    pub reintegrated: Vec<FrameId>,
    pub points_fused: usize,
    pub points_eroded: usize,
    pub time_us: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundStats {
    pub normal: [f64; 3],
    pub offset: f64,
    pub inliers: usize,
    pub ground_points: usize,
    pub dropped_above_ceiling: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BuildStats {
    pub config: RunConfig,
    pub frames: usize,
    pub points: usize,
    pub opt_records: usize,
    pub opt_rejected: usize,
    pub voxels: usize,
    pub tiles: usize,
    pub bytes: usize,
    pub ground: Option<GroundStats>,
    /// One entry per non-idle integration cycle.
    pub cycles: Vec<CycleStats>,
    pub total_us: u128,
}

pub struct BuildOutcome {
    pub map: SkiMap,
    pub stats: BuildStats,
}

struct Alignment {
    model: GroundModel,
    /// World to zero reference frame.
    world_to_zero: Pose,
}

fn map_error(context: String, e: MapError) -> CliError {
    match e {
        MapError::Erosion { .. } => CliError::Internal(format!("{context}: {e}")),
        MapError::InvalidConfig(_) => CliError::Usage(format!("{context}: {e}")),
        _ => CliError::Data(format!("{context}: {e}")),
    }
}

fn check_cycle(report: &CycleReport) -> Result<(), CliError> {
    if let Some((id, e)) = report.failed.first() {
        let context = format!("frame {id}");
        return Err(if report.consistency_fault {
            CliError::Internal(format!("{context}: map and pose history disagree: {e}"))
        } else {
            map_error(context, e.clone())
        });
    }
    Ok(())
}

/// Replays `records` in order, running one integration cycle after each
/// record and cycling to idle at the end, so the map ends with every frame
/// placed under its newest pose.
pub fn replay(records: &[Record], config: &RunConfig) -> Result<BuildOutcome, CliError> {
    config.validate()?;
    let start = Instant::now();
    let mut map = SkiMap::new(config.map_config()).map_err(|e| CliError::Usage(e.to_string()))?;
    let manager = PoseManager::new(config.integrator_config());
    let mut align: Option<Alignment> = None;
    let mut ground: Option<GroundStats> = None;
    let mut cycles = Vec::new();
    let (mut frames, mut points, mut opt_records, mut opt_rejected) = (0, 0, 0, 0);

    let cycle = |map: &mut SkiMap, cycles: &mut Vec<CycleStats>| -> Result<(), CliError> {
        let t = Instant::now();
        let report = manager.integration_cycle(map);
        let time_us = t.elapsed().as_micros();
        check_cycle(&report)?;
        if !report.is_idle() {
            cycles.push(CycleStats {
                integrated: report.integrated,
                reintegrated: report.reintegrated,
                points_fused: report.points_fused,
                points_eroded: report.points_eroded,
                time_us,
            });
        }
        Ok(())
    };

    for record in records {
        match record {
            Record::Frame {
                id,
                timestamp,
                pose,
                points: sensor,
                line,
            } => {
                frames += 1;
                points += sensor.len();
                let frame = if config.ground_tracking {
                    if align.is_none() {
                        let model = detect_ground(sensor, &config.ground_config())
                            .map_err(|e| CliError::Data(format!("line {line}: ground detection failed: {e}")))?;
                        let world_to_zero = model.zero_frame.compose(&pose.inverse());
                        let n = model.normal;
                        ground = Some(GroundStats {
                            normal: [n.x, n.y, n.z],
                            offset: model.offset,
                            inliers: model.inliers,
                            ground_points: 0,
                            dropped_above_ceiling: 0,
                        });
                        align = Some(Alignment { model, world_to_zero });
                    }
                    let a = align.as_ref().expect("aligned above");
                    let stats = ground.as_mut().expect("set with the alignment");
                    let placed = a.world_to_zero.compose(pose);
                    let mut floor = Vec::new();
                    let mut obstacles = Vec::new();
                    for p in sensor {
                        let q = placed.transform_point(p);
                        match a.model.classify_map_point(&q) {
                            PointLabel::Ground => floor.push((q, PointLabel::Ground)),
                            PointLabel::Obstacle if config.ceiling.is_some_and(|c| q.z > c) => {
                                stats.dropped_above_ceiling += 1
                            }
                            PointLabel::Obstacle => obstacles.push(*p),
                        }
                    }
                    let r = integrate_classified(&mut map, &floor, Sample::hit(), None, config.workers)
                        .map_err(|e| map_error(format!("line {line}"), e))?;
                    stats.ground_points += r.ground_points;
                    FrameRecord::uniform(*id, *timestamp, &obstacles, Sample::hit(), placed)
                } else {
                    FrameRecord::uniform(*id, *timestamp, sensor, Sample::hit(), *pose)
                };
                manager
                    .submit_frame(frame)
                    .map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
            }
            Record::Opt { id, pose, line } => {
                opt_records += 1;
                let pose = match &align {
                    Some(a) => a.world_to_zero.compose(pose),
                    None => *pose,
                };
                let report = manager.submit_optimized_poses(&[(*id, pose)]);
                for e in &report.rejected {
                    eprintln!("warning: line {line}: optimized pose rejected: {e}");
                }
                opt_rejected += report.rejected.len();
            }
        }
        cycle(&mut map, &mut cycles)?;
    }
    // Every cycle handles at least one frame while work remains, so this
    // bound is never the reason to stop.
    let limit = 2 * frames + opt_records + 1;
    for _ in 0..limit {
        if manager.pending_count() == 0 && manager.stale_count() == 0 {
            break;
        }
        cycle(&mut map, &mut cycles)?;
    }
    map.validate().map_err(CliError::Internal)?;
    let memory = measure_skimap_memory(&map);
    let stats = BuildStats {
        config: config.clone(),
        frames,
        points,
        opt_records,
        opt_rejected,
        voxels: map.len(),
        tiles: map.tile_count(),
        bytes: memory.bytes,
        ground,
        cycles,
        total_us: start.elapsed().as_micros(),
    };
    Ok(BuildOutcome { map, stats })
}

/// Map built directly from world-frame points, without the pose manager.
pub fn integrate_world(points: &[Point], config: &RunConfig) -> Result<SkiMap, CliError> {
    let mut map = SkiMap::new(config.map_config()).map_err(|e| CliError::Usage(e.to_string()))?;
    let cloud: Vec<(Point, Sample)> = points.iter().map(|p| (*p, Sample::hit())).collect();
    map.integrate_batch(&cloud, config.workers)
        .map_err(|e| map_error("integration".into(), e))?;
    Ok(map)
}
