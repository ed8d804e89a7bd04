use std::collections::HashMap;

use proptest::prelude::*;
use stereo_measure::disparity::{
    aggregate_costs, aggregate_path, path_directions, select_disparity, Volume,
};
use stereo_measure::measure::{spline_length, SplineParams};
use stereo_measure::synth::{cast_column, View};
use stereo_measure::{generate_scene, load_calibration, SceneSpec, SgmParams, Shape, WorldPoint};

/// Textbook path cost, evaluated by memoized recursion toward the path start.
fn brute_path(vol: &Volume<u8>, dir: (isize, isize), p1: i64, p2: i64) -> Vec<i64> {
    fn l(
        vol: &Volume<u8>,
        dir: (isize, isize),
        p: (isize, isize),
        pen: (i64, i64),
        memo: &mut HashMap<(isize, isize), Vec<i64>>,
    ) -> Vec<i64> {
        if let Some(v) = memo.get(&p) {
            return v.clone();
        }
        let nd = vol.disparities;
        let c: Vec<i64> = (0..nd)
            .map(|d| vol.get(p.0 as usize, p.1 as usize, d) as i64)
            .collect();
        let prev = (p.0 - dir.0, p.1 - dir.1);
        let inside = prev.0 >= 0
            && prev.1 >= 0
            && prev.0 < vol.width as isize
            && prev.1 < vol.height as isize;
        let out = if !inside {
            c
        } else {
            let lp = l(vol, dir, prev, pen, memo);
            let m = *lp.iter().min().unwrap();
            (0..nd)
                .map(|d| {
                    let mut cands = vec![lp[d], m + pen.1];
                    if d > 0 {
                        cands.push(lp[d - 1] + pen.0);
                    }
                    if d + 1 < nd {
                        cands.push(lp[d + 1] + pen.0);
                    }
                    c[d] + cands.into_iter().min().unwrap() - m
                })
                .collect()
        };
        memo.insert(p, out.clone());
        out
    }
    let mut memo = HashMap::new();
    let mut all = Vec::new();
    for v in 0..vol.height as isize {
        for u in 0..vol.width as isize {
            all.extend(l(vol, dir, (u, v), (p1, p2), &mut memo));
        }
    }
    all
}

fn volume() -> impl Strategy<Value = Volume<u8>> {
    (1usize..=8, 1usize..=8, 1usize..=8).prop_flat_map(|(w, h, nd)| {
        prop::collection::vec(0u8..=24, w * h * nd)
            .prop_map(move |data| Volume::from_data(w, h, nd, data))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn path_aggregation_matches_brute_force(vol in volume(), p1 in 1u32..10, extra in 1u32..60) {
        let p2 = p1 + extra;
        let mut sum = vec![0i64; vol.data.len()];
        for &dir in path_directions(8) {
            let fast = aggregate_path(&vol, dir, p1, p2);
            let slow = brute_path(&vol, dir, p1 as i64, p2 as i64);
            for (k, (&a, &b)) in fast.data.iter().zip(&slow).enumerate() {
                prop_assert_eq!(a as i64, b, "direction {:?}, cell {}", dir, k);
            }
            for (s, b) in sum.iter_mut().zip(&slow) {
                *s += b;
            }
            // A single path through the whole pipeline picks from the same costs.
            let single = Volume::from_data(vol.width, vol.height, vol.disparities, slow.iter().map(|&x| x as u32).collect());
            let params = SgmParams { p1, p2, ..SgmParams::default() };
            let a = select_disparity(&fast, &params);
            let b = select_disparity(&single, &params);
            prop_assert_eq!(a.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            b.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
        let params = SgmParams { p1, p2, num_paths: 8, ..SgmParams::default() };
        let all = aggregate_costs(&vol, &params);
        prop_assert!(all.data.iter().zip(&sum).all(|(&a, &b)| a as i64 == b));
    }
}

/// Axis-aligned unit steps hugging the line `rise * x = run * y`.
fn staircase(rise: i64, run: i64, steps: usize) -> Vec<WorldPoint> {
    let (mut x, mut y) = (0i64, 0i64);
    let mut path = vec![WorldPoint::new(0.0, 0.0, 500.0)];
    for _ in 0..steps {
        if (rise * (x + 1) - run * y).abs() <= (rise * x - run * (y + 1)).abs() {
            x += 1;
        } else {
            y += 1;
        }
        path.push(WorldPoint::new(x as f64, y as f64, 500.0));
    }
    path
}

#[test]
fn spline_cuts_across_a_staircase() {
    let params = SplineParams::default();
    for (rise, run) in [(1, 1), (1, 2), (2, 3), (1, 3)] {
        let path = staircase(rise, run, 120);
        let end = path.last().unwrap();
        let diagonal = (end.x * end.x + end.y * end.y).sqrt();
        let polyline = (path.len() - 1) as f64;
        let spline = spline_length(&path, &params).unwrap();
        assert!(spline < polyline, "{rise}:{run}");
        assert!(
            (spline - diagonal).abs() / diagonal < 0.02,
            "{rise}:{run}: {spline} vs {diagonal}"
        );
    }
}

#[test]
fn ground_truth_disparity_warps_right_onto_left() {
    let shapes = [
        Shape::Plane { tilt_rad: 0.3 },
        Shape::Wave {
            amplitude_mm: 5.0,
            wavelength_mm: 40.0,
            periods: 2.0,
        },
        Shape::Curve {
            radius_mm: 50.0,
            arc_span_rad: 2.0,
            concave: true,
        },
        Shape::Triangle {
            height_mm: 10.0,
            base_mm: 30.0,
        },
    ];
    for shape in shapes {
        let spec = SceneSpec::new("warp", shape);
        let scene = generate_scene(&spec).unwrap();
        let (w, h) = scene.left.dims();
        let (mut total, mut n) = (0.0, 0usize);
        for u in 0..w {
            let d = scene.gt_disparity.raw(u, 0) as f64;
            let ur = u as f64 - d;
            if ur < 0.0 || ur > (w - 1) as f64 {
                continue;
            }
            // Occluded columns see a different surface point from the right.
            let (xl, _) = cast_column(&spec, View::Left, u as f64).unwrap();
            let (xr, _) = cast_column(&spec, View::Right, ur).unwrap();
            if (xl - xr).abs() > 0.05 {
                continue;
            }
            let (i, f) = (ur.floor() as usize, ur - ur.floor());
            for v in 0..h {
                let a = scene.right.get(i, v) as f64;
                let b = scene.right.get((i + 1).min(w - 1), v) as f64;
                total += (a + f * (b - a) - scene.left.get(u, v) as f64).abs();
                n += 1;
            }
        }
        let mean = total / n as f64;
        assert!(n > w * h / 2, "{shape:?}: only {n} pixels compared");
        assert!(mean < 2.0, "{shape:?}: mean abs diff {mean}");
    }
}

#[test]
fn loads_the_fixture_calibration() {
    let rig = load_calibration(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/fixtures/calibration.json"
    ))
    .unwrap();
    assert_eq!(
        (rig.fx, rig.fy, rig.cx, rig.cy, rig.baseline),
        (700.0, 700.0, 424.0, 240.0, 50.0)
    );
    assert_eq!((rig.width, rig.height), (848, 480));
}
