mod common;

use common::{approx_loglik, complete_likelihood_quadrature, grid_search, lemma_summaries, posterior_mode};
use ebmix_core::simulation::{generate, SimScenario};
use ebmix_core::{
    e_step, error_variances, fit, fit_variance_prior, fixed_effect_divergence, laplace_complete_loglik,
    laplace_gene_likelihood, m_step, summarize, Components, EffectSpread, EmConfig, GeneSummaries, Init, MixtureParams,
    ModelKind, VariancePrior,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two(p1: f64, tau: f64, psi: f64, x: f64) -> MixtureParams<f64> {
    MixtureParams::two_group(p1, tau, psi, EffectSpread::SigmaPsi2(x))
}

#[test]
fn loglik_matches_independent_evaluation() {
    let s = lemma_summaries(300, 0.1, 2.0, 3);
    let prior = fit_variance_prior(&s).unwrap();
    for p in [two(0.1, 0.0, 2.0, 1.0), two(0.3, -0.1, -1.0, 0.2), two(0.0, 0.05, 1.0, 0.5)] {
        let ours = laplace_complete_loglik(&s, &prior, ModelKind::RR, &p).unwrap();
        let oracle = approx_loglik(&s, &prior, &p);
        assert!((ours - oracle).abs() <= 1e-10 * oracle.abs(), "{ours} vs {oracle}");
    }
    let p3 = MixtureParams {
        p1: 0.1,
        p2: 0.05,
        tau: 0.0,
        psi: 2.0,
        spread: EffectSpread::SigmaPsi2(0.7),
    };
    let ours = laplace_complete_loglik(&s, &prior, ModelKind::RR, &p3).unwrap();
    let oracle = approx_loglik(&s, &prior, &p3);
    assert!((ours - oracle).abs() <= 1e-10 * oracle.abs());
}

#[test]
fn laplace_contribution_close_to_quadrature_at_typical_points() {
    // Genes near their component means with moderate degrees of freedom;
    // the acceptance suite runs the full random sweep.
    let prior = VariancePrior::new(5.0, 1.0 / 12.0, ebmix_core::PriorMethod::MaxLikelihood).unwrap();
    let p = two(0.1, 0.0, 2.0, 1.0);
    for (d, m, comp) in [(0.1, 1.0, 0), (-0.3, 0.8, 0), (2.2, 1.1, 1), (1.5, 0.9, 1)] {
        let lap = laplace_gene_likelihood(d, m, 10, 1.0 / 3.0, comp, &p, &prior).unwrap();
        let quad = complete_likelihood_quadrature(d, m, 10, 1.0 / 3.0, comp, &p, &prior);
        let rel = (lap - quad).abs() / quad;
        assert!(rel < 0.1, "d={d} m={m}: laplace {lap}, quadrature {quad}");
    }
}

#[test]
fn p1_update_is_the_mean_posterior() {
    let s = lemma_summaries(400, 0.1, 3.0, 11);
    let prior = fit_variance_prior(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let p = two(rng.random_range(0.01..0.5), rng.random_range(-0.2..0.2), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0));
        let post = e_step(&s, &prior, ModelKind::RR, &p).unwrap();
        let next = m_step(&s, &prior, ModelKind::RR, &post, &p, Components::Two).unwrap();
        let mean = post.nonnull.iter().sum::<f64>() / s.len() as f64;
        assert!((next.p1 - mean).abs() <= 1e-13 * mean, "{} vs {mean}", next.p1);
    }
}

fn eq14_residual(s: &GeneSummaries<f64>, e: &[f64], p1g: &[f64], tau: f64, psi: f64, x: f64) -> (f64, f64) {
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for g in 0..s.len() {
        let v = x + e[g] * s.var_factor(g);
        let r = s.d()[g] - tau - psi;
        lhs += p1g[g] / v;
        rhs += p1g[g] * r * r / (v * v);
    }
    (lhs - rhs, lhs)
}

#[test]
fn spread_update_solves_its_stationarity_equation() {
    let s = lemma_summaries(500, 0.1, 3.0, 21);
    let prior = fit_variance_prior(&s).unwrap();
    let e = error_variances(&s, &prior, ModelKind::RR).unwrap();
    let mut checked = 0;
    for start in [two(0.1, 0.0, 3.0, 1.0), two(0.2, 0.0, 2.0, 0.5), two(0.05, 0.1, 2.5, 2.0)] {
        let post = e_step(&s, &prior, ModelKind::RR, &start).unwrap();
        let next = m_step(&s, &prior, ModelKind::RR, &post, &start, Components::Two).unwrap();
        let x = next.spread.value();
        if x > 0.0 && x != start.spread.value() {
            let (res, scale) = eq14_residual(&s, &e, &post.nonnull, next.tau, next.psi, x);
            assert!(res.abs() < 1e-10, "residual {res} (scale {scale})");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn psi_update_uses_previous_spread() {
    let s = lemma_summaries(300, 0.1, 3.0, 8);
    let prior = fit_variance_prior(&s).unwrap();
    let e = error_variances(&s, &prior, ModelKind::RR).unwrap();
    let prev = two(0.1, 0.0, 2.5, 0.8);
    let post = e_step(&s, &prior, ModelKind::RR, &prev).unwrap();
    let next = m_step(&s, &prior, ModelKind::RR, &post, &prev, Components::Two).unwrap();
    let (mut tn, mut td, mut pn, mut pd) = (0.0, 0.0, 0.0, 0.0);
    for g in 0..s.len() {
        let v0 = e[g] * s.var_factor(g);
        let p1 = post.nonnull[g];
        tn += (1.0 - p1) * s.d()[g] / v0;
        td += (1.0 - p1) / v0;
    }
    let tau = tn / td;
    for g in 0..s.len() {
        let v = 0.8 + e[g] * s.var_factor(g);
        pn += post.nonnull[g] * (s.d()[g] - tau) / v;
        pd += post.nonnull[g] / v;
    }
    assert!((next.tau - tau).abs() < 1e-12);
    assert!((next.psi - pn / pd).abs() < 1e-12);
}

#[test]
fn rg_shrinkage_is_equal_across_genes_with_equal_sizes() {
    let scenario = SimScenario {
        genes: 400,
        ..SimScenario::limma_low(1.0, 0.1)
    };
    let data = generate(&scenario, 0).unwrap();
    let s = summarize(&data.matrix).unwrap();
    let prior = fit_variance_prior(&s).unwrap();
    let f = fit(&s, &prior, ModelKind::RG, &EmConfig::default()).unwrap();
    let lam: Vec<f64> = (0..s.len()).map(|g| ebmix_core::inference::shrinkage(&f, g)).collect();
    let v0 = f.params.spread.value();
    let expected = v0 / (v0 + 1.0 / 6.0 + 1.0 / 6.0);
    for l in lam {
        assert!((l - expected).abs() < 1e-14, "{l} vs {expected}");
    }
}

#[test]
fn gene_order_does_not_change_the_fit() {
    let s = lemma_summaries(500, 0.1, 3.0, 5);
    let prior = fit_variance_prior(&s).unwrap();
    let mut order: Vec<usize> = (0..s.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let shuffled = s.permuted(&order);
    for kind in [ModelKind::RR, ModelKind::RG, ModelKind::RF, ModelKind::RH] {
        for components in [Components::Two, Components::Three] {
            if components == Components::Three && !kind.supports_three_components() {
                continue;
            }
            let config = EmConfig {
                components,
                ..EmConfig::default()
            };
            let a = fit(&s, &prior, kind, &config).unwrap();
            let b = fit(&shuffled, &prior, kind, &config).unwrap();
            assert_eq!(a.params.p1.to_bits(), b.params.p1.to_bits(), "{kind}");
            assert_eq!(a.params.tau.to_bits(), b.params.tau.to_bits());
            assert_eq!(a.params.psi.to_bits(), b.params.psi.to_bits());
            assert_eq!(a.params.spread.value().to_bits(), b.params.spread.value().to_bits());
            for (k, &g) in order.iter().enumerate() {
                assert_eq!(a.posteriors.nonnull[g].to_bits(), b.posteriors.nonnull[k].to_bits());
            }
        }
    }
}

#[test]
fn fits_are_monotone_on_small_random_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for rep in 0..8 {
        let s = lemma_summaries(300, rng.random_range(0.02..0.3), rng.random_range(0.5..4.0), 100 + rep);
        let prior = fit_variance_prior(&s).unwrap();
        for kind in [ModelKind::RR, ModelKind::RG, ModelKind::RF, ModelKind::RH] {
            let f = fit(&s, &prior, kind, &EmConfig::default()).unwrap();
            let ll = f.trace.logliks();
            for w in ll.windows(2) {
                assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{kind}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn fixed_point_matches_grid_search() {
    let s = lemma_summaries(50, 0.3, 3.0, 2);
    let prior = fit_variance_prior(&s).unwrap();
    let config = EmConfig {
        max_iters: 20_000,
        tol: 1e-12,
        posterior_tol: 1e-10,
        ..EmConfig::default()
    };
    let f = fit(&s, &prior, ModelKind::RR, &config).unwrap();
    assert!(f.converged);
    let em = [f.params.p1, f.params.tau, f.params.psi, f.params.spread.value()];
    let g = grid_search(&s, &prior, [0.0, -1.0, -1.0, 0.0], [1.0, 1.0, 6.0, 4.0], 21, 11, 2);
    let em_ll = approx_loglik(&s, &prior, &f.params);
    assert!(em_ll >= g.loglik - 1e-9 * g.loglik.abs(), "EM {em_ll} below grid {}", g.loglik);
    for j in 0..4 {
        assert!((em[j] - g.best[j]).abs() <= g.cell[j], "dim {j}: EM {} grid {} cell {}", em[j], g.best[j], g.cell[j]);
    }
}

#[test]
fn fixed_effect_p1_drifts_to_one() {
    let s = lemma_summaries(300, 0.1, 3.0, 1);
    let prior = fit_variance_prior(&s).unwrap();
    for kind in [ModelKind::FF, ModelKind::FR, ModelKind::FH] {
        let trace = fixed_effect_divergence(&s, &prior, kind, 0.05, 500).unwrap();
        assert!(trace.p1.windows(2).all(|w| w[1] > w[0] || w[0] == 1.0), "{kind}");
        assert!(*trace.p1.last().unwrap() > 0.99, "{kind}");
    }
}

#[test]
fn given_start_at_truth_and_auto_start_agree() {
    let s = lemma_summaries(2000, 0.1, 3.0, 13);
    let prior = fit_variance_prior(&s).unwrap();
    let auto = fit(&s, &prior, ModelKind::RR, &EmConfig::default()).unwrap();
    let truth = EmConfig {
        init: Init::Given(two(0.1, 0.0, 3.0, 1.0)),
        ..EmConfig::default()
    };
    let from_truth = fit(&s, &prior, ModelKind::RR, &truth).unwrap();
    assert!((auto.params.p1 - from_truth.params.p1).abs() < 1e-4);
    assert!((auto.params.psi - from_truth.params.psi).abs() < 1e-3);
}

#[test]
fn posterior_mode_matches_plugin() {
    let s = lemma_summaries(100, 0.1, 3.0, 6);
    let prior = fit_variance_prior(&s).unwrap();
    let e = error_variances(&s, &prior, ModelKind::RR).unwrap();
    for g in 0..s.len() {
        let want = posterior_mode(s.m()[g], s.f()[g], &prior);
        assert!((e[g] - want).abs() <= 1e-14 * want);
    }
}
