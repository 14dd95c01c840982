use proptest::prelude::*;
use whet_core::heterogeneity::{eccentricities, estimate, u_statistic, variance_hat};
use whet_core::measures::{DiscreteMeasure, Empirical1D, GaussianMeasure, Measure, MeasureCollection};
use whet_core::transforms::Transform;
use whet_core::twosample::compare;
use whet_core::wasserstein::{
    pairwise_distances, w2, w2_empirical_1d, w2_gaussian, DistanceMatrix, W2Options,
};

fn psi(t: Transform, x: f64) -> f64 {
    match t {
        Transform::Power { p } => x.powf(p),
        Transform::Identity => x,
        Transform::BoundedRational { c0 } => x * x / (x * x + c0 * c0),
    }
}

fn transform() -> impl Strategy<Value = Transform> {
    prop_oneof![
        (1.0f64..3.0).prop_map(|p| Transform::power(p).unwrap()),
        (0.1f64..5.0).prop_map(|c| Transform::bounded(c).unwrap()),
        Just(Transform::identity()),
    ]
}

/// Euclidean distances between random points, so the matrix is a metric.
fn points() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), 2..25))
}

fn euclid(p: &[Vec<f64>]) -> DistanceMatrix {
    let rows = p
        .iter()
        .map(|a| p.iter().map(|b| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()).collect())
        .collect();
    DistanceMatrix::from_rows(rows, None).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn u_matches_double_loop(p in points(), t in transform()) {
        let d = euclid(&p);
        let n = d.n();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += psi(t, d.get(i, j));
                }
            }
        }
        let expected = s / (n * (n - 1)) as f64;
        let u = u_statistic(&d, t).unwrap();
        prop_assert!((u - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn eccentricities_and_variance_match_definitions(p in points(), t in transform()) {
        let d = euclid(&p);
        let n = d.n();
        let u = u_statistic(&d, t).unwrap();
        let g = eccentricities(&d, t).unwrap();
        let scale = u.abs().max(1.0);
        for i in 0..n {
            let row: f64 = (0..n).filter(|&j| j != i).map(|j| psi(t, d.get(i, j))).sum();
            prop_assert!((g[i] - (row / (n - 1) as f64 - u)).abs() <= 1e-12 * scale);
        }
        let v: f64 = 4.0 * g.iter().map(|x| x * x).sum::<f64>() / (n - 1) as f64;
        prop_assert!((variance_hat(&g).unwrap() - v).abs() <= 1e-12 * v.max(1e-300));
    }

    #[test]
    fn u_is_permutation_invariant(p in points(), t in transform(), seed in any::<u64>()) {
        let d = euclid(&p);
        let n = d.n();
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates driven by a simple LCG
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = u_statistic(&d, t).unwrap();
        let b = u_statistic(&d.permuted(&perm), t).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn interval_contains_estimate(p in points(), t in transform(), level in 0.5f64..0.999) {
        let d = euclid(&p);
        let r = estimate(&d, t, level).unwrap();
        prop_assert!(r.ci.0 <= r.u_stat && r.u_stat <= r.ci.1);
        prop_assert!(r.std_error >= 0.0);
    }

    #[test]
    fn empirical_w2_is_a_metric(
        a in prop::collection::vec(-5.0f64..5.0, 1..12),
        b in prop::collection::vec(-5.0f64..5.0, 1..12),
        c in prop::collection::vec(-5.0f64..5.0, 1..12),
    ) {
        let (a, b, c) = (Empirical1D::new(a).unwrap(), Empirical1D::new(b).unwrap(), Empirical1D::new(c).unwrap());
        let ab = w2_empirical_1d(&a, &b).unwrap();
        let ba = w2_empirical_1d(&b, &a).unwrap();
        let bc = w2_empirical_1d(&b, &c).unwrap();
        let ac = w2_empirical_1d(&a, &c).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!(w2_empirical_1d(&a, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn discrete_w2_triangle(
        sa in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6),
        sb in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6),
        sc in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6),
    ) {
        let m = |s: &[(f64, f64)]| Measure::from(DiscreteMeasure::uniform(s.iter().map(|&(x, y)| vec![x, y]).collect()).unwrap());
        let (a, b, c) = (m(&sa), m(&sb), m(&sc));
        let o = W2Options::sequential();
        let ab = w2(&a, &b, &o).unwrap();
        let bc = w2(&b, &c, &o).unwrap();
        let ac = w2(&a, &c, &o).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
        prop_assert!((ab - w2(&b, &a, &o).unwrap()).abs() <= 1e-9);
    }

    /// 2x2 closed form: tr((A^1/2 B A^1/2)^1/2) = sqrt(tr(AB) + 2 sqrt(det A det B)).
    #[test]
    fn bures_two_by_two(
        m in prop::collection::vec(-3.0f64..3.0, 4),
        la in (0.1f64..3.0, 0.1f64..3.0, -1.0f64..1.0),
        lb in (0.1f64..3.0, 0.1f64..3.0, -1.0f64..1.0),
    ) {
        let cov = |(x, y, r): (f64, f64, f64)| {
            // lower-triangular factor keeps the matrix positive definite
            let l = [[x, 0.0], [r, y]];
            let c00 = l[0][0] * l[0][0];
            let c01 = l[0][0] * l[1][0];
            let c11 = l[1][0] * l[1][0] + l[1][1] * l[1][1];
            [[c00, c01], [c01, c11]]
        };
        let (a, b) = (cov(la), cov(lb));
        let tr = |c: [[f64; 2]; 2]| c[0][0] + c[1][1];
        let det = |c: [[f64; 2]; 2]| c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let tr_ab = a[0][0] * b[0][0] + a[0][1] * b[1][0] + a[1][0] * b[0][1] + a[1][1] * b[1][1];
        let cross = (tr_ab + 2.0 * (det(a) * det(b)).sqrt()).sqrt();
        let dm = (m[0] - m[2]).powi(2) + (m[1] - m[3]).powi(2);
        let expected = (dm + tr(a) + tr(b) - 2.0 * cross).max(0.0).sqrt();
        let ga = GaussianMeasure::new(vec![m[0], m[1]], a.iter().map(|r| r.to_vec()).collect()).unwrap();
        let gb = GaussianMeasure::new(vec![m[2], m[3]], b.iter().map(|r| r.to_vec()).collect()).unwrap();
        let got = w2_gaussian(&ga, &gb).unwrap();
        prop_assert!((got - expected).abs() <= 1e-8, "got {} expected {}", got, expected);
    }

    #[test]
    fn compare_is_antisymmetric(p in points(), q in points(), t in transform()) {
        let (a, b) = (euclid(&p), euclid(&q));
        if let (Ok(ab), Ok(ba)) = (compare(&a, &b, t, 0.0, 0.95), compare(&b, &a, t, 0.0, 0.95)) {
            prop_assert_eq!(ab.delta_hat, -ba.delta_hat);
            prop_assert_eq!(ab.z, -ba.z);
            prop_assert_eq!(ab.p_value, ba.p_value);
        }
    }
}

#[test]
fn pairwise_distances_do_not_depend_on_workers() {
    let items: Vec<Measure> = (0..30)
        .map(|i| {
            let x = i as f64;
            DiscreteMeasure::new(vec![vec![x.sin(), x.cos()], vec![x * 0.1, 1.0]], vec![0.3, 0.7])
                .unwrap()
                .into()
        })
        .collect();
    let c = MeasureCollection::new(items, None).unwrap();
    let one = pairwise_distances(&c, &W2Options::sequential()).unwrap();
    for workers in [2, 3, 7] {
        let opts = W2Options {
            workers: Some(workers),
            ..W2Options::default()
        };
        let other = pairwise_distances(&c, &opts).unwrap();
        assert_eq!(
            one.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            other.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
