//! Randomized invariants over generated inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;
use thermoshift::complement::perron_complement;
use thermoshift::instances::{random_irreducible, random_partition, random_split, random_stochastic, rng_for};
use thermoshift::io::to_canonical_json;
use thermoshift::linalg::perron_root;
use thermoshift::metastability::{coupling_decomposition, tilde_delta};
use thermoshift::transfer::{perron_triplet, OperatorMatrix, DEFAULT_MAXITER, DEFAULT_TOL};

fn op(m: &DMatrix<f64>) -> OperatorMatrix {
    OperatorMatrix::from_dense(m).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_json_round_trips(xs in prop::collection::vec(-1e300f64..1e300, 0..40), n in any::<u32>()) {
        let value = serde_json::json!({"xs": xs, "n": n});
        let text = to_canonical_json(&value).unwrap();
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back["n"].as_u64().unwrap(), n as u64);
        for (a, b) in back["xs"].as_array().unwrap().iter().zip(&xs) {
            prop_assert_eq!(a.as_f64().unwrap(), *b);
        }
        prop_assert_eq!(to_canonical_json(&back).unwrap(), text);
    }

    #[test]
    fn triplet_is_normalized_and_positive(seed in any::<u64>(), n in 2usize..10) {
        let m = random_irreducible(&mut rng_for(seed, 0), n, 0.4);
        let t = perron_triplet(&op(&m), DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let (lam, _) = perron_root(&m).unwrap();
        prop_assert!((t.lambda - lam).abs() <= 1e-10 * lam);
        prop_assert!(t.h.iter().all(|&x| x > 0.0));
        prop_assert!(t.nu.iter().all(|&x| x > 0.0));
        prop_assert!((t.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((t.mu().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complement_keeps_the_perron_root(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = rng_for(seed, 1);
        let m = random_irreducible(&mut rng, n, 0.4);
        let (u, v) = random_split(&mut rng, n);
        let (lam, _) = perron_root(&m).unwrap();
        let c = perron_complement(&op(&m), &u, &v, lam).unwrap();
        prop_assert!((c.spectral_radius().unwrap() - lam).abs() <= 1e-10 * lam.max(1.0));
        prop_assert!(c.compact.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn stochastic_coupling_is_normalized(seed in any::<u64>(), n in 3usize..10) {
        let mut rng = rng_for(seed, 2);
        let p = random_stochastic(&mut rng, n, 0.5);
        let o = op(&p);
        let t = perron_triplet(&o, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        let w: Vec<usize> = (0..n).collect();
        let blocks = random_partition(&mut rng, &w, 2);
        let r = coupling_decomposition(&o, &t, &w, &blocks).unwrap();
        prop_assert!(r.residuals.decomposition < 1e-9);
        let tilde = tilde_delta(&o, &t, &blocks).unwrap();
        prop_assert!((tilde.values.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(tilde.values.iter().all(|&x| x > 0.0));
    }
}
