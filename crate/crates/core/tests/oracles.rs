//! Library results against independent brute-force computations.

use nalgebra::DMatrix;
use thermoshift::complement::{induced_apply, perron_complement, recommended_excursion};
use thermoshift::experiment::margin_instance;
use thermoshift::instances::{random_nonnegative, random_stochastic, rng_for};
use thermoshift::linalg::{perron_root, spectral_radius};
use thermoshift::metastability::stationary_vector;
use thermoshift::potential::{pressure_estimate, word_weights, CylinderPotential};
use thermoshift::shift::{transitive_components, ComponentKind, MarkovShift, StateSpace, TransitionMatrix};
use thermoshift::transfer::{assemble_operator, perron_triplet, OperatorMatrix, DEFAULT_MAXITER, DEFAULT_TOL};

fn support(m: &DMatrix<f64>) -> TransitionMatrix {
    let n = m.nrows();
    TransitionMatrix::from_edges(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| m[(i, j)] > 0.0)).unwrap()
}

/// Reachability in ≥ 1 steps by Warshall's algorithm.
fn closure(t: &TransitionMatrix) -> Vec<Vec<bool>> {
    let n = t.size();
    let mut r: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| t.get(i, j)).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

#[test]
fn components_match_warshall_closure() {
    for k in 0..200 {
        let mut rng = rng_for(11, k);
        let n = 1 + (k as usize % 12);
        let t = support(&random_nonnegative(&mut rng, n, 0.18));
        let r = closure(&t);
        let part = transitive_components(&t);
        let mut seen = vec![false; n];
        for c in &part.components {
            for &a in &c.states {
                assert!(!seen[a]);
                seen[a] = true;
                for &b in &c.states {
                    assert!(a == b || (r[a][b] && r[b][a]), "instance {k}");
                }
            }
            match c.kind {
                ComponentKind::Irreducible => assert!(c.states.len() > 1 || t.get(c.states[0], c.states[0])),
                ComponentKind::Degenerate => assert!(c.states.len() == 1 && !t.get(c.states[0], c.states[0])),
            }
        }
        assert!(seen.iter().all(|&s| s));
        for a in 0..n {
            for b in 0..n {
                if a != b && r[a][b] && r[b][a] {
                    assert_eq!(part.component_of(a), part.component_of(b));
                }
            }
        }
    }
}

#[test]
fn pressure_dp_matches_word_enumeration() {
    for k in 0..20 {
        let mut rng = rng_for(12, k);
        let n = 2 + k as usize % 3;
        let w = random_nonnegative(&mut rng, n, 0.7).map(|x| x + 0.05);
        let shift = MarkovShift::full(n);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| w[(i, j)]).collect()).collect();
        let phi = CylinderPotential::from_edge_weights(&shift.matrix, &rows).unwrap();
        for len in 1..=6 {
            let z: f64 = word_weights(&shift.matrix, &phi, len).unwrap().iter().map(|(_, x)| x).sum();
            let e = pressure_estimate(&shift, &phi, len).unwrap();
            assert!((e.p_point - z.ln() / len as f64).abs() < 1e-12, "instance {k}, n = {len}");
        }
        let e = pressure_estimate(&shift, &phi, 200).unwrap();
        let (lam, _) = perron_root(&w).unwrap();
        assert!((e.p_ratio - lam.ln()).abs() < 1e-6, "instance {k}: {} vs {}", e.p_ratio, lam.ln());
        assert!(e.p_low <= lam.ln() + 1e-12 && lam.ln() <= e.p_high + 1e-12);
    }
}

#[test]
fn rpf_measure_of_a_stochastic_chain_is_stationary() {
    for k in 0..30 {
        let mut rng = rng_for(13, k);
        let n = 2 + k as usize % 7;
        let p = random_stochastic(&mut rng, n, 0.5);
        let pi = stationary_vector(&p).unwrap();
        let pv = &DMatrix::from_row_slice(1, n, &pi) * &p;
        assert!((0..n).all(|i| (pv[i] - pi[i]).abs() < 1e-12));
        let shift = MarkovShift::new(StateSpace::range(n), support(&p)).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| p[(i, j)]).collect()).collect();
        let phi = CylinderPotential::from_edge_weights(&shift.matrix, &rows).unwrap();
        let op = assemble_operator(&shift, &shift.matrix, &phi, 1).unwrap();
        let t = perron_triplet(&op, DEFAULT_TOL, DEFAULT_MAXITER).unwrap();
        assert!((t.lambda - 1.0).abs() < 1e-12);
        let mu = t.mu();
        for (i, x) in pi.iter().enumerate() {
            assert!((mu[i] - x).abs() < 1e-10, "instance {k}: {mu:?} vs {pi:?}");
        }
    }
}

#[test]
fn excursion_series_converges_to_the_closed_form() {
    for k in 0..20 {
        let (m, u, v, lambda) = margin_instance(&mut rng_for(14, k)).unwrap();
        let op = OperatorMatrix::from_dense(&m).unwrap();
        let c = perron_complement(&op, &u, &v, lambda).unwrap();
        let f: Vec<f64> = (0..m.nrows()).map(|i| 1.0 + i as f64).collect();
        let exact = c.apply(&f);
        let r_vv = spectral_radius(&m.select_rows(&v).select_columns(&v)).unwrap();
        let kmax = recommended_excursion(r_vv, lambda, 12.0, v.len()).min(20_000);
        let s = induced_apply(&op, &u, &v, lambda, &f, kmax).unwrap();
        let scale = exact.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for &i in &u {
            assert!((s.value[i] - exact[i]).abs() <= s.tail_bound + 1e-10 * scale, "instance {k}");
        }
    }
}
