use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use critpersist::grassmann::{gap_distance, pseudodistance};
use critpersist::io::{read_matrix, write_matrix};
use critpersist::spectral::{completeness_defect, spectral_split, verify_splitting, SymOperator};
use critpersist::{SubspaceF32, SubspaceF64, SymOperatorF32};

/// Eigenvalue of a given sign class: 0 for the kernel, else `±[0.5, 3]`.
fn eigenvalue(class: u8, t: f64) -> f64 {
    match class % 3 {
        0 => -(0.5 + 2.5 * t),
        1 => 0.0,
        _ => 0.5 + 2.5 * t,
    }
}

fn spectrum() -> impl Strategy<Value = (Vec<(u8, f64)>, u64)> {
    (prop::collection::vec((0u8..3, 0.0f64..1.0), 1..9), any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splitting_recovers_the_sign_classes((classes, seed) in spectrum()) {
        let n = classes.len();
        let values: Vec<f64> = classes.iter().map(|&(c, t)| eigenvalue(c, t)).collect();
        let q = SubspaceF64::random(n, n, &mut ChaCha8Rng::seed_from_u64(seed)).into_basis();
        let op = SymOperator::from_eigenpairs(&q, &values).unwrap();
        let s = spectral_split(&op, 1e-8).unwrap();
        let count = |p: fn(f64) -> bool| values.iter().filter(|&&v| p(v)).count();
        prop_assert_eq!(s.dims(), (count(|v| v < 0.0), count(|v| v == 0.0), count(|v| v > 0.0)));
        prop_assert!(completeness_defect(&s) <= 1e-10);
        let report = verify_splitting(&op, &s).unwrap();
        prop_assert!(report.bounds_hold(s.gap));
        prop_assert!(report.kernel_residual <= 1e-10);
    }

    #[test]
    fn single_precision_splitting_agrees((classes, seed) in spectrum()) {
        let n = classes.len();
        let values: Vec<f32> = classes.iter().map(|&(c, t)| eigenvalue(c, t) as f32).collect();
        let q = SubspaceF32::random(n, n, &mut ChaCha8Rng::seed_from_u64(seed)).into_basis();
        let op = SymOperatorF32::from_eigenpairs(&q, &values).unwrap();
        let s = spectral_split(&op, 1e-4f32).unwrap();
        let zeros = values.iter().filter(|&&v| v == 0.0).count();
        prop_assert_eq!(s.dims().1, zeros);
        prop_assert!(completeness_defect(&s) <= 1e-4);
    }

    #[test]
    fn gap_distance_is_a_bounded_symmetric_metric(
        n in 2usize..8,
        dims in (0usize..8, 0usize..8, 0usize..8),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = dims.0 % (n + 1);
        let u = SubspaceF64::random(n, k, &mut rng);
        let v = SubspaceF64::random(n, dims.1 % (n + 1), &mut rng);
        let w = SubspaceF64::random(n, dims.2 % (n + 1), &mut rng);
        let d = |a: &SubspaceF64, b: &SubspaceF64| gap_distance(a, b).unwrap();
        prop_assert!(d(&u, &v) <= 1.0 + 1e-12);
        prop_assert!((d(&u, &v) - d(&v, &u)).abs() <= 1e-12);
        prop_assert!(d(&u, &w) <= d(&u, &v) + d(&v, &w) + 1e-12);
        prop_assert!(d(&u, &u) <= 1e-12);
        prop_assert!(pseudodistance(&u, &v).unwrap() <= d(&u, &v) + 1e-12);
    }

    #[test]
    fn matrix_text_round_trip_is_exact(
        entries in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 1..26),
    ) {
        let n = (entries.len() as f64).sqrt() as usize;
        let m = DMatrix::from_fn(n, n, |i, j| entries[i * n + j]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let back = read_matrix(buf.as_slice()).unwrap();
        prop_assert_eq!(back, m);
    }
}
