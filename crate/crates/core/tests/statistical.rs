use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use truncated_lr::ascent::{maximize, AscentConfig};
use truncated_lr::estimator::{
    compare_likelihoods, estimate_truncated_integral, likelihood_ratio_from_integrals, Decision,
};
use truncated_lr::model::{LatentModel, LatentPoint, ParameterVector};
use truncated_lr::models::{make_table_model, simulate_mixture, GaussianMixtureModel, MixtureParams};
use truncated_lr::sampler::{sample_discrete_posterior, ChainConfig};

fn theta(v: &[f64]) -> ParameterVector {
    ParameterVector::new(v.to_vec()).unwrap()
}

fn mixture(n: usize, seed: u64) -> GaussianMixtureModel {
    let truth = MixtureParams {
        pi: 0.4,
        mu1: -1.5,
        mu2: 1.5,
        sigma: 1.0,
    };
    GaussianMixtureModel::new(simulate_mixture(n, seed, truth).unwrap()).unwrap()
}

/// Index of a binary assignment vector.
fn code(p: &LatentPoint) -> usize {
    match p {
        LatentPoint::Discrete(v) => v.iter().enumerate().map(|(i, &b)| b << i).sum(),
        LatentPoint::Continuous(_) => unreachable!(),
    }
}

/// Pearson statistic p-value of `counts` against `probs`.
fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn table_posterior_frequency() {
    let model = make_table_model(&[0.2, 0.3]).unwrap();
    let t = theta(&[0.2, 0.3]);
    let mut within = 0;
    for seed in 0..100 {
        let batch = sample_discrete_posterior(&model, &t, 100_000, seed).unwrap();
        let ones = batch.points.iter().filter(|p| code(p) == 1).count();
        if (ones as f64 / 1e5 - 0.6).abs() < 0.005 {
            within += 1;
        }
    }
    assert!(within >= 99, "{within}/100");
}

#[test]
fn table_sampler_chi_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..20 {
        let joint: Vec<f64> = (0..rng.random_range(3..9)).map(|_| rng.random_range(0.05..2.0)).collect();
        let model = make_table_model(&joint).unwrap();
        let total: f64 = joint.iter().sum();
        let probs: Vec<f64> = joint.iter().map(|x| x / total).collect();
        let batch = sample_discrete_posterior(&model, &theta(&joint), 20_000, seed).unwrap();
        let mut counts = vec![0; joint.len()];
        for p in &batch.points {
            counts[code(p)] += 1;
        }
        let p = chi_square_p(&counts, &probs);
        assert!(p > 1e-4, "seed {seed}: p = {p}");
    }
}

#[test]
fn mixture_sampler_matches_enumerated_posterior() {
    let model = mixture(3, 5);
    let t = theta(&[0.4, -1.0, 1.0, 1.2]);
    let log_l = model.log_marginal_analytic(&t).unwrap().get();
    let probs: Vec<f64> = (0..8usize)
        .map(|m| {
            let w = LatentPoint::Discrete((0..3).map(|i| (m >> i) & 1).collect());
            (model.log_joint(&t, &w).unwrap().get() - log_l).exp()
        })
        .collect();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let resp = model.responsibilities(&t).unwrap();
    for seed in 0..20 {
        let batch = sample_discrete_posterior(&model, &t, 100_000, seed).unwrap();
        let mut counts = [0usize; 8];
        for p in &batch.points {
            counts[code(p)] += 1;
        }
        assert!(chi_square_p(&counts, &probs) > 1e-4, "seed {seed}");
        // coordinate 0 is the first component
        for (i, r) in resp.iter().enumerate() {
            let first = batch
                .points
                .iter()
                .filter(|p| matches!(p, LatentPoint::Discrete(v) if v[i] == 0))
                .count();
            assert!((first as f64 / 1e5 - r).abs() < 0.01, "obs {i}: {first} vs {r}");
        }
    }
}

#[test]
fn mixture_comparison_matches_analytic_ordering() {
    let model = mixture(12, 21);
    let t1 = theta(&[0.4, -1.5, 1.5, 1.0]);
    let t2 = theta(&[0.5, -0.5, 0.5, 1.0]);
    let delta = model.log_marginal_analytic(&t2).unwrap().get() - model.log_marginal_analytic(&t1).unwrap().get();
    assert!(delta <= -1.0, "pair must differ by at least 1 in log L, got {delta}");
    let mut right = 0;
    for seed in 0..100 {
        let cfg = ChainConfig::for_dimension(12, seed);
        let r = compare_likelihoods(&model, &t1, &t2, &cfg, 0.95, 1 << 16).unwrap();
        if r.decision == Decision::SecondSmaller {
            right += 1;
        }
    }
    assert!(right >= 99, "{right}/100");
}

#[test]
fn mixture_lr_within_three_standard_errors() {
    let model = mixture(12, 22);
    let t1 = theta(&[0.4, -1.5, 1.5, 1.0]);
    let t2 = theta(&[0.45, -1.2, 1.4, 1.2]);
    let truth = model.log_marginal_analytic(&t2).unwrap().get() - model.log_marginal_analytic(&t1).unwrap().get();
    let mut covered = 0;
    for seed in 0..20 {
        let b1 = sample_discrete_posterior(&model, &t1, 20_000, 2 * seed).unwrap();
        let b2 = sample_discrete_posterior(&model, &t2, 20_000, 2 * seed + 1).unwrap();
        let e1 = estimate_truncated_integral(&model, &t1, &t2, &b1, None).unwrap();
        let e2 = estimate_truncated_integral(&model, &t2, &t1, &b2, None).unwrap();
        let (lr, se) = likelihood_ratio_from_integrals(&e1, &e2).unwrap();
        if (lr - truth).abs() <= 3.0 * se {
            covered += 1;
        }
    }
    assert!(covered >= 19, "{covered}/20");
}

#[test]
fn accepted_steps_increase_the_likelihood() {
    let model = mixture(12, 23);
    let (mut accepted, mut uphill) = (0, 0);
    for seed in 0..10 {
        let cfg = AscentConfig::new(0.3, 40, 4096, seed);
        let trace = maximize(&model, &theta(&[0.5, -0.5, 0.5, 1.5]), &cfg, &ChainConfig::for_dimension(12, 0)).unwrap();
        for r in trace.iterations.iter().filter(|r| r.accepted) {
            accepted += 1;
            let before = model.log_marginal_analytic(&r.theta).unwrap().get();
            let after = model.log_marginal_analytic(&r.proposed).unwrap().get();
            if after > before {
                uphill += 1;
            }
        }
    }
    assert!(accepted > 20);
    assert!(uphill as f64 >= 0.95 * accepted as f64, "{uphill}/{accepted}");
}
