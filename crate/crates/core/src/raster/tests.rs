use super::*;
use crate::yielddata::Die;

fn full_grid(w: u32, h: u32, fails: &[(u32, u32)]) -> WaferMap {
    let mut dies = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let fail = fails.contains(&(x, y));
            dies.push(Die {
                x,
                y,
                pass: !fail,
                bin: fail.then_some(7),
            });
        }
    }
    WaferMap::new("w", "l", w, h, dies).unwrap()
}

#[test]
fn wafer_without_foreground_shows_footprint() {
    // a plus-shaped footprint on a 48 grid
    let dies: Vec<Die> = (0..48)
        .map(|x| Die { x, y: 10, pass: true, bin: None })
        .chain((0..48).filter(|&y| y != 10).map(|y| Die { x: 5, y, pass: true, bin: None }))
        .collect();
    let n = dies.len();
    let w = WaferMap::new("w", "l", 48, 48, dies).unwrap();
    let img = raster_wafer(&w, &WaferRasterSpec::default()).unwrap();
    assert_eq!(img.count(1), 0);
    assert_eq!(img.count(-1), n);
    assert_eq!(img.get(10, 30), -1);
    assert_eq!(img.get(11, 30), 0);
}

#[test]
fn identity_mapping_single_fail() {
    let img = raster_wafer(&full_grid(48, 48, &[(0, 0)]), &WaferRasterSpec::default()).unwrap();
    assert_eq!(img.count(1), 1);
    assert_eq!(img.get(0, 0), 1);
}

#[test]
fn downscaled_block_any_foreground() {
    // brute force: every 2x2 die block of a 96 grid lands on one pixel
    for &(fx, fy) in &[(0, 0), (1, 1), (37, 60), (95, 94), (50, 3)] {
        let img = raster_wafer(&full_grid(96, 96, &[(fx, fy)]), &WaferRasterSpec::default()).unwrap();
        for r in 0..48 {
            for c in 0..48 {
                let block_has_fail = (0..2).any(|dy| (0..2).any(|dx| (2 * c + dx, 2 * r + dy) == (fx as usize, fy as usize)));
                assert_eq!(img.get(r, c), if block_has_fail { 1 } else { -1 }, "fail ({fx},{fy}) pixel ({r},{c})");
            }
        }
    }
}

#[test]
fn small_grid_upsamples_without_gaps() {
    let img = raster_wafer(&full_grid(21, 21, &[]), &WaferRasterSpec::default()).unwrap();
    assert_eq!(img.count(-1), 48 * 48);
}

#[test]
fn bin_filter_and_empty_wafer() {
    let mut w = full_grid(4, 4, &[(1, 1)]);
    let spec = WaferRasterSpec { bin: Some(3), ..Default::default() };
    assert_eq!(raster_wafer(&w, &spec).unwrap().count(1), 0);
    let spec = WaferRasterSpec { bin: Some(7), ..Default::default() };
    assert!(raster_wafer(&w, &spec).unwrap().count(1) > 0);
    w.dies.clear();
    assert!(matches!(raster_wafer(&w, &spec), Err(Error::Empty(_))));
}

#[test]
fn scatter_examples() {
    let spec = ScatterRasterSpec::default();
    assert_eq!(raster_scatter(&[], &spec).unwrap().count(0), 48 * 48);
    let one = raster_scatter(&[(3.0, 9.0)], &spec).unwrap();
    assert_eq!(one.count(1), 1);
    assert_eq!(one.get(47, 0), 1);
    let two = raster_scatter(&[(0.0, 0.0), (1.0, 1.0)], &spec).unwrap();
    assert_eq!(two.count(1), 2);
    assert_eq!(two.get(47, 0), 1);
    assert_eq!(two.get(0, 47), 1);
    assert!(raster_scatter(&[(f64::NAN, 0.0)], &spec).is_err());
}

fn opts(pairs: &[(&str, Vec<f64>)]) -> BTreeMap<String, Vec<f64>> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

#[test]
fn box_options_one_image_each() {
    let spec = BoxRasterSpec { y_range: (0.0, 10.0), jitter_seed: 4, side: 48 };
    let o = opts(&[("X1", vec![1.0, 2.0, 9.0]), ("X2", vec![5.0; 30]), ("X3", vec![0.0, 10.0])]);
    let imgs = raster_box_options(&o, &spec).unwrap();
    assert_eq!(imgs.len(), 3);
    let x2 = &imgs["X2"];
    let rows: std::collections::BTreeSet<usize> = (0..48 * 48).filter(|i| x2.pixels()[*i] == 1).map(|i| i / 48).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(imgs, raster_box_options(&o, &spec).unwrap());
    // an option's image does not depend on its neighbours
    let alone = raster_box_options(&opts(&[("X2", vec![5.0; 30])]), &spec).unwrap();
    assert_eq!(alone["X2"], imgs["X2"]);
}

#[test]
fn box_value_outside_range_rejected() {
    let spec = BoxRasterSpec { y_range: (0.0, 1.0), jitter_seed: 0, side: 48 };
    assert!(matches!(
        raster_box_options(&opts(&[("a", vec![0.5, 1.5])]), &spec),
        Err(Error::OutOfRange { .. })
    ));
}

#[test]
fn rotation_counts_and_corners() {
    let mut img = PlotImage::blank(48);
    img.set(0, 0, 1);
    let five = vec![img.clone(); 5];
    let all: Vec<PlotImage> = five.iter().flat_map(|i| rotate_augment(i, 12)).collect();
    assert_eq!(all.len(), 60);
    let id = rotate_augment(&img, 1);
    assert_eq!(id.len(), 1);
    assert!(id[0].same_pixels(&img));

    let quarter = rotate_augment(&img, 4);
    let spots: Vec<(usize, usize)> = quarter
        .iter()
        .map(|q| {
            assert_eq!(q.count(1), 1);
            let i = q.pixels().iter().position(|p| *p == 1).unwrap();
            (i / 48, i % 48)
        })
        .collect();
    assert_eq!(spots, vec![(0, 0), (47, 0), (47, 47), (0, 47)]);
}

#[test]
fn tern_round_trip_and_errors() {
    let mut img = PlotImage::blank(4);
    img.set(1, 2, 1);
    img.set(3, 0, -1);
    let text = to_tern_string(&img);
    assert!(text.starts_with("TERN1 4 4\n0 0 0 0\n0 0 1 0\n"));
    assert!(text.lines().all(|l| !l.ends_with(' ')));
    assert!(parse_tern(&text, "x").unwrap().same_pixels(&img));

    let bad = text.replacen("0 0 1 0", "0 0 2 0", 1);
    match parse_tern(&bad, "f.tern") {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 3);
            assert!(message.contains("\"2\""));
        }
        other => panic!("{other:?}"),
    }
    let short = text.replacen("TERN1 4 4", "TERN1 5 5", 1);
    assert!(matches!(parse_tern(&short, "f"), Err(Error::Parse { .. })));
}

#[test]
fn png_export_has_signature() {
    let bytes = png_bytes(&PlotImage::blank(48), 2).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
}

#[test]
fn quantize_thirds() {
    let img = PlotImage::quantize(2, &[0.9, 0.2, -0.2, -0.5]).unwrap();
    assert_eq!(img.pixels(), &[1, 0, 0, -1]);
}
