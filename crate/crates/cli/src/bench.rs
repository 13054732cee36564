//! Benchmark harness: SkiMap against a dense grid and a pointer octree, plus
//! a skip list depth sweep. Emits CSV.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::Serialize;
use skimap::baselines::{measure_skimap_memory, DenseGrid, MemoryModel, ReferenceOctree};
use skimap::{quantize, AxisLevels, MapConfig, OccupancyVoxel, Point, Sample, SkiMap, VoxelKey};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::scenes::Scene;

pub const RESOLUTIONS: [f64; 3] = [0.05, 0.1, 0.2];
pub const DEPTHS: [usize; 5] = [4, 8, 16, 32, 64];
/// Dense grids above this many cells are not allocated.
pub const DENSE_CELL_LIMIT: usize = 1 << 26;
pub const QUERY_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub structure: String,
    pub operation: String,
    pub scene: String,
    pub resolution: f64,
    pub points: usize,
    /// Empty for rows that are pure arithmetic.
    pub time_us: Option<u128>,
    pub bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub scenes: Vec<Scene>,
    pub resolutions: Vec<f64>,
    pub depths: Vec<usize>,
    pub points: usize,
    pub queries: usize,
    pub structures: bool,
    pub depth_sweep: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            scenes: Scene::ALL.to_vec(),
            resolutions: RESOLUTIONS.to_vec(),
            depths: DEPTHS.to_vec(),
            points: 100_000,
            queries: 100,
            structures: true,
            depth_sweep: true,
        }
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, u128) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_micros())
}

struct Rows<'a> {
    rows: Vec<BenchRow>,
    scene: &'a str,
    resolution: f64,
    points: usize,
}

impl Rows<'_> {
    fn push(&mut self, structure: &str, operation: &str, time_us: Option<u128>, bytes: Option<u64>) {
        self.rows.push(BenchRow {
            structure: structure.into(),
            operation: operation.into(),
            scene: self.scene.into(),
            resolution: self.resolution,
            points: self.points,
            time_us,
            bytes,
        });
    }
}

fn query_centers(points: &[Point], n: usize, seed: u64) -> Vec<Point> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x9e37);
    (0..n).map(|_| points[rng.random_range(0..points.len())]).collect()
}

fn bench_skimap(rows: &mut Rows, cloud: &[(Point, Sample)], centers: &[Point], config: &RunConfig) -> Result<(), CliError> {
    let mut map: SkiMap = SkiMap::new(MapConfig { resolution: rows.resolution, ..config.map_config() })
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (result, t) = timed(|| map.integrate_batch(cloud, config.workers));
    result.map_err(|e| CliError::Data(e.to_string()))?;
    let bytes = measure_skimap_memory(&map).bytes as u64;
    rows.push("skimap", "integrate", Some(t), Some(bytes));

    let (_, t) = timed(|| {
        let n = AtomicUsize::new(0);
        map.visit_all(|_, _| {
            n.fetch_add(1, Ordering::Relaxed);
        });
        n.into_inner()
    });
    rows.push("skimap", "visit", Some(t), None);

    let (_, t) = timed(|| {
        let n = AtomicUsize::new(0);
        map.visit_2d(|cell| {
            n.fetch_add(usize::from(cell.voxel_count > 0), Ordering::Relaxed);
        });
        n.into_inner()
    });
    rows.push("skimap", "visit2d", Some(t), None);

    let (_, t) = timed(|| {
        centers
            .iter()
            .map(|c| map.radius_search(c, QUERY_RADIUS).map_or(0, |h| h.len()))
            .sum::<usize>()
    });
    rows.push("skimap", "radius", Some(t), None);
    rows.push("skimap", "memory", None, Some(bytes));
    Ok(())
}

fn bench_dense(rows: &mut Rows, keys: &[VoxelKey], centers: &[Point]) {
    let Some((origin, extent)) = DenseGrid::<OccupancyVoxel>::covering_extent(keys.iter().copied()) else {
        return;
    };
    if extent.iter().product::<usize>() > DENSE_CELL_LIMIT {
        return;
    }
    let Ok(mut grid) = DenseGrid::<OccupancyVoxel>::new(origin, extent) else {
        return;
    };
    let r = rows.resolution;
    let hit = Sample::hit();
    let (_, t) = timed(|| {
        for k in keys {
            grid.integrate(*k, &hit).expect("grid covers every key");
        }
    });
    rows.push("dense", "integrate", Some(t), Some(grid.bytes() as u64));
    let (_, t) = timed(|| grid.occupied().count());
    rows.push("dense", "visit", Some(t), None);
    let (_, t) = timed(|| {
        let mut columns = BTreeSet::new();
        for (k, _) in grid.occupied() {
            columns.insert((k.ix, k.iy));
        }
        columns.len()
    });
    rows.push("dense", "visit2d", Some(t), None);
    let (_, t) = timed(|| {
        let reach = (QUERY_RADIUS / r).floor() as i32 + 1;
        let mut found = 0usize;
        for c in centers {
            let Ok(ck) = quantize(c, r) else { continue };
            for dx in -reach..=reach {
                for dy in -reach..=reach {
                    for dz in -reach..=reach {
                        let k = VoxelKey::new(
                            (i32::from(ck.ix) + dx).clamp(-32768, 32767) as i16,
                            (i32::from(ck.iy) + dy).clamp(-32768, 32767) as i16,
                            (i32::from(ck.iz) + dz).clamp(-32768, 32767) as i16,
                        );
                        if grid.get(k).is_some() && (k.center(r) - c).norm_squared() <= QUERY_RADIUS * QUERY_RADIUS {
                            found += 1;
                        }
                    }
                }
            }
        }
        found
    });
    rows.push("dense", "radius", Some(t), None);
    rows.push("dense", "memory", None, Some(grid.bytes() as u64));
}

fn bench_octree(rows: &mut Rows, keys: &[VoxelKey], centers: &[Point]) {
    let mut tree = ReferenceOctree::<OccupancyVoxel>::new();
    let hit = Sample::hit();
    let (_, t) = timed(|| {
        for k in keys {
            tree.integrate(*k, &hit);
        }
    });
    let bytes = tree.bytes() as u64;
    rows.push("octree", "integrate", Some(t), Some(bytes));
    let (_, t) = timed(|| {
        let mut n = 0usize;
        tree.visit(|_, _| n += 1);
        n
    });
    rows.push("octree", "visit", Some(t), None);
    let (_, t) = timed(|| {
        let mut columns = BTreeSet::new();
        tree.visit(|k, _| {
            columns.insert((k.ix, k.iy));
        });
        columns.len()
    });
    rows.push("octree", "visit2d", Some(t), None);
    let (_, t) = timed(|| {
        centers
            .iter()
            .map(|c| tree.radius_search(c, QUERY_RADIUS, rows.resolution).len())
            .sum::<usize>()
    });
    rows.push("octree", "radius", Some(t), None);
    rows.push("octree", "memory", None, Some(bytes));
}

/// Dense-grid bytes for the scene's workspace box.
pub fn dense_model_bytes(scene: Scene, resolution: f64) -> Result<f64, CliError> {
    let (lo, hi) = scene.bounds();
    MemoryModel::workspace(hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, resolution)
        .dense_grid()
        .map_err(|e| CliError::Usage(e.to_string()))
}

pub fn run(options: &BenchOptions, config: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    config.validate()?;
    let mut all = Vec::new();
    for &scene in &options.scenes {
        let points = scene.generate(options.points, config.seed);
        let cloud: Vec<(Point, Sample)> = points.iter().map(|p| (*p, Sample::hit())).collect();
        let centers = query_centers(&points, options.queries, config.seed);
        if options.structures {
            for &resolution in &options.resolutions {
                let keys: Vec<VoxelKey> = points
                    .iter()
                    .map(|p| quantize(p, resolution))
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Data(e.to_string()))?;
                let mut rows = Rows {
                    rows: Vec::new(),
                    scene: scene.name(),
                    resolution,
                    points: points.len(),
                };
                bench_skimap(&mut rows, &cloud, &centers, config)?;
                bench_dense(&mut rows, &keys, &centers);
                bench_octree(&mut rows, &keys, &centers);
                let model = dense_model_bytes(scene, resolution)?;
                rows.push("dense_model", "memory", None, Some(model.round() as u64));
                all.extend(rows.rows);
            }
        }
        if options.depth_sweep {
            let resolution = config.resolution;
            let mut rows = Rows {
                rows: Vec::new(),
                scene: scene.name(),
                resolution,
                points: points.len(),
            };
            for &depth in &options.depths {
                let mut map: SkiMap = SkiMap::new(
                    config
                        .map_config()
                        .with_levels(AxisLevels::uniform(depth)),
                )
                .map_err(|e| CliError::Usage(e.to_string()))?;
                let (result, t) = timed(|| map.integrate_batch(&cloud, config.workers));
                result.map_err(|e| CliError::Data(e.to_string()))?;
                let bytes = measure_skimap_memory(&map).bytes as u64;
                rows.push(&format!("skimap_depth{depth}"), "integrate", Some(t), Some(bytes));
            }
            all.extend(rows.rows);
        }
    }
    Ok(all)
}

/// CSV with the run configuration and seed in leading `#` comment lines.
pub fn to_csv(rows: &[BenchRow], config: &RunConfig) -> String {
    let mut out = format!("# config: {}\n# seed: {}\n", config.to_json(), config.seed);
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).expect("rows serialize");
    }
    if rows.is_empty() {
        writer
            .write_record(["structure", "operation", "scene", "resolution", "points", "time_us", "bytes"])
            .expect("header writes");
    }
    out.push_str(&String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("utf-8 csv"));
    out
}
