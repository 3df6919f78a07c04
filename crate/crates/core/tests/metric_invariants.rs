mod common;

use common::{distinct_positions, perturbed, random_cloud};
use pcrd::metrics::pc_psnr;
use pcrd::{full_report, MetricsConfig, Point, PointCloud};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pair(seed: u64, lattice: bool, related: bool) -> (PointCloud, PointCloud) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_cloud(&mut rng, 1..=150, lattice);
    let b = if related {
        perturbed(&mut rng, &a, 1.5)
    } else {
        random_cloud(&mut rng, 1..=150, lattice)
    };
    (a, b)
}

fn close(a: f64, b: f64) -> bool {
    common::close(a, b, 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_clouds_have_zero_distortion(seed: u64, lattice: bool) {
        let (a, _) = pair(seed, lattice, false);
        let a = distinct_positions(&a);
        let r = full_report(&a, &a.clone(), &MetricsConfig::default()).unwrap();
        prop_assert_eq!(r.d_g, 0.0);
        prop_assert_eq!(r.d_p, 0.0);
        prop_assert_eq!(r.d_c, 0.0);
        prop_assert_eq!(r.D, 0.0);
        prop_assert_eq!(r.pc_psnr, f64::INFINITY);
    }

    #[test]
    fn swapping_clouds_keeps_symmetric_values(seed: u64, lattice: bool, related: bool) {
        let (a, b) = pair(seed, lattice, related);
        let config = MetricsConfig::default();
        let ab = full_report(&a, &b, &config).unwrap();
        let ba = full_report(&b, &a, &config).unwrap();
        prop_assert_eq!(ab.d_g, ba.d_g);
        prop_assert_eq!(ab.d_p, ba.d_p);
        prop_assert_eq!([ab.d_cY, ab.d_cU, ab.d_cV], [ba.d_cY, ba.d_cU, ba.d_cV]);
        prop_assert_eq!(ab.d_c, ba.d_c);
        prop_assert!(close(ab.D, ba.D), "{} vs {}", ab.D, ba.D);
    }

    #[test]
    fn bidirectional_is_max_of_one_sided(seed: u64, lattice: bool, related: bool) {
        let (a, b) = pair(seed, lattice, related);
        let r = full_report(&a, &b, &MetricsConfig::default()).unwrap();
        prop_assert_eq!(r.d_g, r.d_g_test_to_ref.max(r.d_g_ref_to_test));
        prop_assert!(r.d_c >= r.d_c_test_to_ref.min(r.d_c_ref_to_test));
    }

    #[test]
    fn plane_error_never_exceeds_point_error(seed: u64, lattice: bool, related: bool) {
        let (a, b) = pair(seed, lattice, related);
        let r = full_report(&a, &b, &MetricsConfig::default()).unwrap();
        prop_assert!(r.d_p <= r.d_g * (1.0 + 1e-12), "{} > {}", r.d_p, r.d_g);
    }

    #[test]
    fn psnr_decreases_with_distortion(x in 1e-12f64..1e3, y in 1e-12f64..1e3) {
        let (px, py) = (pc_psnr(x).unwrap(), pc_psnr(y).unwrap());
        if x < y {
            prop_assert!(px > py);
        } else if x > y {
            prop_assert!(px < py);
        } else {
            prop_assert_eq!(px, py);
        }
    }

    #[test]
    fn point_order_does_not_matter(seed: u64) {
        let (a, b) = pair(seed, false, true);
        let reverse = |c: &PointCloud| {
            let mut pts: Vec<Point> = c.points().to_vec();
            pts.reverse();
            PointCloud::new(pts).unwrap()
        };
        let config = MetricsConfig::default();
        let r1 = full_report(&a, &b, &config).unwrap();
        let r2 = full_report(&reverse(&a), &reverse(&b), &config).unwrap();
        prop_assert!(common::close(r1.D, r2.D, 1e-9));
        prop_assert!(common::close(r1.d_g, r2.d_g, 1e-9));
    }
}

#[test]
fn larger_perturbation_raises_distortion() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_cloud(&mut rng, 500..=500, false);
    let config = MetricsConfig::default();
    let mut previous = 0.0;
    for amount in [0.1, 0.5, 2.0, 8.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = perturbed(&mut rng, &a, amount);
        let d = full_report(&a, &b, &config).unwrap().d_g;
        assert!(d > previous);
        previous = d;
    }
}
