use skimap::dump::*;
use skimap::*;
use skimap::fusion::{OccupancyVoxel, Sample};
use skimap::map::Point;

#[test]
fn dump_is_sorted_and_round_trips() {
    let mut map = SkiMap::<OccupancyVoxel>::with_resolution(0.1).unwrap();
    for (x, y, z) in [(0.35, -0.2, 0.0), (-1.0, 0.5, 0.2), (-1.0, 0.5, -0.2), (0.0, 0.0, 0.0)] {
        map.integrate_point(&Point::new(x, y, z), &Sample::new(0.7, 1.5).unwrap())
            .unwrap();
    }
    map.set_tile(-3, 4, TileData { hits: 4, height_sum: 0.02, height_weight: 4.0, navigable: true });
    let text = voxel_dump(&map);
    assert_eq!(
        text,
        "-10 5 -2 0.7 1.5\n-10 5 2 0.7 1.5\n0 0 0 0.7 1.5\n3 -2 0 0.7 1.5\n"
    );
    let tiles = tile_dump(&map);
    assert_eq!(tiles, "-3 4 4 0.02 4 1\n");
    let back: SkiMap<OccupancyVoxel> = load(MapConfig::new(0.1), &text, Some(&tiles)).unwrap();
    assert_eq!(voxel_dump(&back), text);
    assert_eq!(tile_dump(&back), tiles);
}

#[test]
fn empty_dump() {
    let map: SkiMap<OccupancyVoxel> = load(MapConfig::new(0.1), "", None).unwrap();
    assert!(map.is_empty());
    assert_eq!(voxel_dump(&map), "");
}

#[test]
fn malformed_lines_report_line_numbers() {
    let err = parse_voxels::<OccupancyVoxel>("0 0 0 0.5 1\n0 0 x 0.5 1\n").unwrap_err();
    assert!(matches!(err, DumpError::Malformed { line: 2, .. }), "{err}");
    let err = parse_voxels::<OccupancyVoxel>("0 0 0 0.5\n").unwrap_err();
    assert!(matches!(err, DumpError::Malformed { line: 1, .. }));
    let err = parse_voxels::<OccupancyVoxel>("40000 0 0 0.5 1\n").unwrap_err();
    assert!(matches!(err, DumpError::Malformed { line: 1, .. }));
    assert!(parse_tiles("0 0 0 0 0 1\n").is_err());
    let dup = load::<OccupancyVoxel>(MapConfig::new(0.1), "0 0 0 0.5 1\n0 0 0 0.5 1\n", None);
    assert!(matches!(dup, Err(DumpError::Duplicate { line: 2, .. })));
}
