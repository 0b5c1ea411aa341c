//! Monte Carlo checks against exact laws and chains.

use std::collections::HashMap;

use islandwalk::boundary::{empirical_drift, Atom, increment_law, simulate_island, survival_fraction, SideLaws};
use islandwalk::envelope::{hit_times, pca_step, RingState};
use islandwalk::params::{
    asymptotic_increment_bound, ca_with_error, derive, mean_increment, stationary_solve,
    BoundaryState3, DerivedParams, ParamQuad, Side,
};
use islandwalk::refined::{mean_00, simulate_refined};
use islandwalk::rng::{step_uniforms, stream};
use islandwalk::stats::{ks_critical, ks_statistic};
use rand::Rng;

fn sample_quad() -> DerivedParams {
    derive(&ParamQuad::new(0.8, 0.3, 0.5, 0.6).unwrap())
}

/// Exact stationary mean of the simulated boundary chain.
fn exact_drift(d: &DerivedParams, side: Side) -> f64 {
    let laws = SideLaws::new(d, side).unwrap();
    let nu = stationary_solve(&laws.simulated_chain()).unwrap();
    BoundaryState3::ALL
        .iter()
        .map(|&y| nu.get(y) * laws.get(y).expectation())
        .sum()
}

#[test]
fn sampler_frequencies_within_four_sigma() {
    let d = sample_quad();
    for side in Side::BOTH {
        let law = increment_law(&d, side, BoundaryState3::Zero).unwrap();
        let n = 1_000_000u64;
        let mut rng = stream(1, side.index() as u64);
        let mut counts: HashMap<(i64, BoundaryState3), u64> = HashMap::new();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let (delta, to) = law.sample(&mut rng);
            *counts.entry((delta, to)).or_default() += 1;
            sum += delta as f64;
            sumsq += (delta as f64).powi(2);
        }
        let mut expected: HashMap<(i64, BoundaryState3), f64> = HashMap::new();
        for a in &law.head {
            *expected.entry((a.delta, a.to)).or_default() += a.prob;
        }
        for k in 0..6 {
            for (s, w) in law.tail.weight.iter().enumerate() {
                if *w > 0.0 {
                    let delta = law.tail.start_delta + k * law.tail.step;
                    *expected.entry((delta, BoundaryState3::ALL[s])).or_default() +=
                        law.tail.ratio.powi(k as i32) * w;
                }
            }
        }
        for (key, p) in expected {
            let c = *counts.get(&key).unwrap_or(&0) as f64;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (c - n as f64 * p).abs() <= 4.0 * sigma,
                "{side} {key:?}: {c} vs {}",
                n as f64 * p
            );
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - law.expectation()).abs() <= 3.0 * se, "{side}: {mean}");
    }
}

#[test]
fn degenerate_law_always_returns_its_atom() {
    let d = sample_quad();
    let mut law = increment_law(&d, Side::RightBoundary, BoundaryState3::Zero).unwrap();
    law.head = vec![Atom { delta: -1, to: BoundaryState3::Star, prob: 1.0 }];
    law.tail.weight = [0.0; 3];
    assert_eq!(law.total_mass(), 1.0);
    let mut rng = stream(2, 0);
    for _ in 0..10_000 {
        assert_eq!(law.sample(&mut rng), (-1, BoundaryState3::Star));
    }
}

#[test]
fn drift_of_rule_0001_matches_exact_chain() {
    let d = derive(&ca_with_error("0001".parse().unwrap(), 0.1).unwrap());
    let est = empirical_drift(&d, Side::RightBoundary, 1_000_000, 1000, 3).unwrap();
    let exact = exact_drift(&d, Side::RightBoundary);
    assert!((est.mean - exact).abs() <= 3.0 * est.stderr, "{est:?} vs {exact}");
}

#[test]
fn symmetric_rule_left_drift_mirrors_right() {
    // p01 = p10: the left boundary walks like the right one, shifted by the
    // half cell of the two-cell neighbourhood
    let d = derive(&ParamQuad::new(0.7, 0.35, 0.35, 0.2).unwrap());
    let right = empirical_drift(&d, Side::RightBoundary, 1_000_000, 1000, 4).unwrap();
    let left = empirical_drift(&d, Side::LeftBoundary, 1_000_000, 1000, 5).unwrap();
    let se = right.stderr.hypot(left.stderr);
    assert!((left.mean + right.mean + 1.0).abs() <= 3.0 * se, "{left:?} {right:?}");
    let exact = exact_drift(&d, Side::RightBoundary);
    assert!((exact + exact_drift(&d, Side::LeftBoundary) + 1.0).abs() <= 1e-12);
}

#[test]
fn empirical_drift_respects_the_bound() {
    // One-sided 3σ checks on 2000 (quadruplet, side) pairs: a handful of
    // exceedances is expected where the bound is tight. The exact chain mean
    // must respect the bound outright; the Monte Carlo exceedance count must
    // stay within the binomial 99.9% quantile of the nominal 0.135% rate.
    let mut rng = stream(6, 0);
    let (mut checked, mut exceed) = (0u64, 0u64);
    while checked < 1000 {
        let p = [(); 4].map(|_| rng.random::<f64>());
        let q = ParamQuad::from_array(p).unwrap();
        let d = derive(&q);
        if d.r < 0.05 {
            continue;
        }
        for side in Side::BOTH {
            let bound = asymptotic_increment_bound(&d, side).unwrap();
            let exact = exact_drift(&d, side);
            let est = empirical_drift(&d, side, 20_000, 200, checked).unwrap();
            let slack = 3.0 * est.stderr;
            // the left boundary grows the island by moving left
            let (exact_ok, mc_ok) = match side {
                Side::RightBoundary => (exact >= bound - 1e-12, est.mean >= bound - slack),
                Side::LeftBoundary => (exact <= bound + 1e-12, est.mean <= bound + slack),
            };
            assert!(exact_ok, "{q} {side}: exact {exact} vs bound {bound}");
            exceed += !mc_ok as u64;
        }
        checked += 1;
    }
    assert!(exceed <= 10, "{exceed} of 2000 estimates beyond 3 stderr");
}

#[test]
fn star_mean_is_least_favourable() {
    let d = sample_quad();
    let z = mean_increment(&d, Side::RightBoundary, BoundaryState3::Zero).unwrap();
    let o = mean_increment(&d, Side::RightBoundary, BoundaryState3::One).unwrap();
    let s = mean_increment(&d, Side::RightBoundary, BoundaryState3::Star).unwrap();
    assert_eq!(s, z.min(o));
}

#[test]
fn sample_islands_mostly_survive() {
    let frac = survival_fraction(&sample_quad(), 10, 10_000, 1000, 7).unwrap();
    assert!(frac > 0.5, "{frac}");
    let a = simulate_island(&sample_quad(), 10, 500, 8).unwrap();
    assert_eq!(a, simulate_island(&sample_quad(), 10, 500, 8).unwrap());
}

#[test]
fn three_cell_ring_one_step_law() {
    let q = ParamQuad::new(0.8, 0.3, 0.5, 0.6).unwrap();
    let start = RingState::from_bits(&[0, 1, 0]).unwrap();
    // cell i reads (i, i+1 mod 3): parents (0,1), (1,0), (0,0)
    let ps = [q.get(0, 1), q.get(1, 0), q.get(0, 0)];
    let n = 400_000u64;
    let mut counts = [0u64; 8];
    let mut u = [0.0; 3];
    for t in 0..n {
        step_uniforms(9, t, &mut u);
        let next = pca_step(&start, &q, &u).unwrap();
        let code = next
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| (c.bit().unwrap() as usize) << i)
            .sum::<usize>();
        counts[code] += 1;
    }
    for (code, &c) in counts.iter().enumerate() {
        let p: f64 = (0..3)
            .map(|i| if code >> i & 1 == 1 { ps[i] } else { 1.0 - ps[i] })
            .product();
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((c as f64 - n as f64 * p).abs() <= 4.0 * sigma, "{code:03b}");
    }
}

#[test]
fn refined_simulation_above_worst_mean() {
    let est = simulate_refined(0.2, 500_000, 1000, 10).unwrap();
    assert!(est.mean >= mean_00(0.2).unwrap() - 3.0 * est.stderr);
}

#[test]
fn conjugate_rules_have_same_hit_time_law() {
    let a = derive(&ca_with_error("1000".parse().unwrap(), 0.2).unwrap());
    let b = derive(&ca_with_error("1110".parse().unwrap(), 0.2).unwrap());
    let runs = 400;
    let ta = hit_times(&a, 64, 100_000, runs, 1_000).unwrap();
    let tb = hit_times(&b, 64, 100_000, runs, 50_000).unwrap();
    assert!(ta.iter().chain(&tb).all(Option::is_some));
    let fa: Vec<f64> = ta.iter().map(|t| t.unwrap() as f64).collect();
    let fb: Vec<f64> = tb.iter().map(|t| t.unwrap() as f64).collect();
    let stat = ks_statistic(&fa, &fb);
    let crit = ks_critical(fa.len(), fb.len(), 0.01);
    assert!(stat <= crit, "KS {stat} > {crit}");
}
