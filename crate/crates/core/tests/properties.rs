use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sphconv_core::baselines::{mean_predictor_rmse, normalized_rmse};
use sphconv_core::engine::gradcheck::{random_tensor, random_vec};
use sphconv_core::engine::{RowKernel, RowUntiedConv};
use sphconv_core::geometry::{
    backproject_footprint, camera_sampling_map, equirect_to_sphere, sphere_to_equirect, SphericalCoord,
    TangentCamera,
};
use sphconv_core::netspec::NetworkSpec;
use sphconv_core::planner::{plan_kernels, PlanConfig};

fn footprint_at(theta: f64, fov: f64, n: usize, h: usize) -> sphconv_core::geometry::Footprint {
    let cam = TangentCamera::new(SphericalCoord::new(theta, 0.0).unwrap(), fov, n).unwrap();
    backproject_footprint(&cam, 2 * h, h).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equirect_round_trip(h in 4usize..400, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
        let w = 2 * h;
        let (x, y) = (fx * w as f64, fy * h as f64);
        prop_assume!(x < w as f64 && y < h as f64);
        let c = equirect_to_sphere(x, y, w, h).unwrap();
        let (bx, by) = sphere_to_equirect(&c, w, h);
        let dx = (bx - x).abs();
        prop_assert!(dx.min(w as f64 - dx) < 1e-9);
        prop_assert!((by - y).abs() < 1e-9);
    }

    #[test]
    fn sampling_maps_are_partitions_of_unity(
        theta in 0.0f64..180.0,
        phi in 0.0f64..360.0,
        fov in 10.0f64..150.0,
        n in 2usize..24,
        h in 8usize..120,
    ) {
        let cam = TangentCamera::new(SphericalCoord::new(theta, phi).unwrap(), fov, n).unwrap();
        let map = camera_sampling_map(&cam, 2 * h, h).unwrap();
        for i in 0..map.len() {
            let s: f64 = map.pixel_taps(i).iter().map(|t| t.weight as f64).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn footprints_mirror_about_the_equator(row in 0usize..40, fov in 5.0f64..40.0, n in 3usize..16) {
        let h = 80;
        let theta = 180.0 * row as f64 / h as f64;
        prop_assert_eq!(footprint_at(theta, fov, n, h).mirrored(), footprint_at(180.0 - theta, fov, n, h));
    }

    #[test]
    fn footprints_narrow_toward_the_equator(a in 1usize..40, b in 1usize..40, fov in 5.0f64..40.0, n in 3usize..16) {
        let h = 80;
        let (near_pole, near_eq) = (a.min(b), a.max(b));
        let wide = footprint_at(180.0 * near_pole as f64 / h as f64, fov, n, h).bbox_width();
        let narrow = footprint_at(180.0 * near_eq as f64 / h as f64, fov, n, h).bbox_width();
        prop_assert!(wide >= narrow, "{wide} at row {near_pole}, {narrow} at row {near_eq}");
    }

    #[test]
    fn rowconv_commutes_with_circular_shifts(seed in any::<u64>(), shift in 0usize..13, dilation in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = [(3, 3), (5, 7), (3, 5), (7, 3), (3, 3)];
        let rows = shapes
            .iter()
            .map(|&(kh, kw)| RowKernel {
                kernel_h: kh,
                kernel_w: kw,
                weights: random_vec::<f64>(&mut rng, 2 * 2 * kh * kw),
                bias: random_vec(&mut rng, 2),
            })
            .collect();
        let layer = RowUntiedConv::new(2, 2, dilation, rows).unwrap();
        let x = random_tensor::<f64>(&mut rng, 2, 5, 13);
        prop_assert_eq!(layer.forward(&x.roll_columns(shift)).unwrap(), layer.forward(&x).unwrap().roll_columns(shift));
    }

    #[test]
    fn normalized_error_is_scale_free(seed in any::<u64>(), k in 0.1f32..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<Vec<f32>> = (0..12).map(|_| random_vec(&mut rng, 3)).collect();
        let p: Vec<Vec<f32>> = (0..12).map(|_| random_vec(&mut rng, 3)).collect();
        let e = normalized_rmse(&p, &t, mean_predictor_rmse(&t).unwrap()).unwrap().unwrap();
        let scale = |v: &[Vec<f32>]| -> Vec<Vec<f32>> { v.iter().map(|r| r.iter().map(|x| x * k).collect()).collect() };
        let (ps, ts) = (scale(&p), scale(&t));
        let es = normalized_rmse(&ps, &ts, mean_predictor_rmse(&ts).unwrap()).unwrap().unwrap();
        prop_assert!((e - es).abs() < 1e-4 * e.max(1.0));
        prop_assert_eq!(normalized_rmse(&t, &t, mean_predictor_rmse(&t).unwrap()).unwrap(), Some(0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn plans_are_symmetric_monotone_covering_and_deterministic(
        half in 6usize..24,
        fov in 30.0f64..100.0,
        tangent_width in 16usize..96,
        bound in prop_oneof![Just(5usize), Just(7)],
        seed in 0u64..4,
    ) {
        let h = 2 * half;
        let spec = NetworkSpec::toy(seed);
        let cfg = PlanConfig { height: h, max_kernel: (bound, bound), fov, tangent_width };
        let plan = plan_kernels(&spec, &cfg).unwrap();
        prop_assert!(plan.is_mirror_symmetric());
        prop_assert_eq!(&plan, &plan_kernels(&spec, &cfg).unwrap());
        for l in plan.conv_layers() {
            for y in 0..h {
                prop_assert!(l.clamped[y] || l.coverage[y] >= 0.95, "{} row {y}: {}", l.name, l.coverage[y]);
            }
            for y in 0..h / 2 - 1 {
                prop_assert!(l.shapes[y].kw >= l.shapes[y + 1].kw, "{} row {y}", l.name);
            }
        }
    }
}
