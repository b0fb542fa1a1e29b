//! End-to-end checks on the bundled karate-club graph.

use nalgebra::DVector;

use graphsee::enf::{self, fit_xi, sample_study, Link, XiScore};
use graphsee::sampling::{
    monte_carlo_inclusion_weights, run_trw, srs_inclusion_weights, trw_stationary, SbsDesign,
    WalkConfig,
};
use graphsee::see::sbs_variance_approx;
use graphsee::snle::{snle_expected, snle_full, SnleConfig};
use graphsee::spectral::Variant;
use graphsee::zkc;

#[test]
fn long_walk_matches_stationary_law() {
    let g = zkc::graph();
    let mut cfg = WalkConfig::for_graph(&g, 2.0, 4_000_000, 7);
    cfg.spacing = 1;
    let trace = run_trw(&g, &cfg, 0).unwrap();
    let pi = trw_stationary(&g, 2.0);
    let total = trace.states.len() as f64;
    for (i, (&c, &p)) in trace.visit_counts.iter().zip(&pi).enumerate() {
        let freq = c as f64 / total;
        assert!((freq - p).abs() <= 0.02 * p, "node {i}: {freq} vs {p}");
    }
}

#[test]
fn sandwich_matches_linearised_score_variance() {
    let g = zkc::graph();
    let y = zkc::labels();
    let iw = srs_inclusion_weights(&g, 5, 1).unwrap();
    let score = XiScore::new(&g, &y).unwrap();
    let xi0 = fit_xi(&g, &y).unwrap();
    let approx = sbs_variance_approx(&score, &iw, &DVector::from_element(1, xi0)).unwrap()[(0, 0)];

    let study = sample_study(&g, &y, 5, 40_000, 11, Link::Logistic).unwrap();
    let h = score.ydot.norm_squared();
    let linear: Vec<f64> = study.replicates.iter().map(|r| r.score_at_xi0 / h).collect();
    let n = linear.len() as f64;
    let mean = linear.iter().sum::<f64>() / n;
    let var = linear.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((approx - var).abs() <= 0.05 * var, "sandwich {approx} vs {var}");
}

#[test]
fn monte_carlo_weights_agree_with_exact_one_wave() {
    let g = zkc::graph();
    let exact = srs_inclusion_weights(&g, 4, 1).unwrap();
    let mc = monte_carlo_inclusion_weights(&g, SbsDesign::one_wave(4), 20_000, 3).unwrap();
    for j in 0..34 {
        let se = mc.standard_error(exact.node_prob[j]).unwrap();
        assert!((mc.node_prob[j] - exact.node_prob[j]).abs() <= 5.0 * se + 1e-12);
        assert!((mc.seed_prob[j] - exact.seed_prob[j]).abs() <= 5.0 * mc.standard_error(exact.seed_prob[j]).unwrap());
    }
}

#[test]
fn two_wave_weights_cover_the_graph() {
    let g = zkc::graph();
    let design = SbsDesign {
        seed_size: 2,
        t_waves: 2,
    };
    let one = monte_carlo_inclusion_weights(&g, SbsDesign::one_wave(2), 5_000, 5).unwrap();
    let two = monte_carlo_inclusion_weights(&g, design, 5_000, 5).unwrap();
    assert!(two.unusable().is_empty());
    // with the same seeds a second wave only adds nodes
    for j in 0..34 {
        assert!(two.node_prob[j] >= one.node_prob[j]);
        assert!(two.seed_prob[j] >= one.seed_prob[j]);
    }
}

#[test]
fn sample_embedding_is_not_exchangeable() {
    let g = zkc::graph();
    let y = zkc::labels();
    let cfg = SnleConfig::new(0.1, 1.0, Variant::Looped).unwrap();
    let x0 = snle_full(&g, &y, &cfg).unwrap();
    let expected = snle_expected(&g, &y, &cfg, 1, 5_000, 1).unwrap();
    let worst = (0..34)
        .filter_map(|i| {
            let se = expected.standard_error(i)?;
            let mean = expected.mean()[i]?;
            Some((mean - x0[i]).abs() / se.max(1e-12))
        })
        .fold(0.0, f64::max);
    assert!(worst > 10.0, "max standardised gap {worst}");
}

#[test]
fn studies_are_deterministic_in_the_seed() {
    let g = zkc::graph();
    let y = zkc::labels();
    let a = sample_study(&g, &y, 5, 500, 42, Link::Tanh).unwrap();
    let b = sample_study(&g, &y, 5, 500, 42, Link::Tanh).unwrap();
    assert_eq!(a.xi.combined, b.xi.combined);
    assert_eq!(a.xi.estimates, b.xi.estimates);

    let cfg = SnleConfig::new(0.1, 1.0, Variant::Plain).unwrap();
    let e1 = snle_expected(&g, &y, &cfg, 3, 300, 9).unwrap();
    let e2 = snle_expected(&g, &y, &cfg, 3, 300, 9).unwrap();
    assert_eq!(e1, e2);

    let model = enf::fit_model(&g, &y, Link::Logistic, true).unwrap();
    assert!((model.xi - 0.9549).abs() < 1e-3);
}
