mod common;

use common::{lemma_summaries, ln_normal};
use ebmix_core::inference::{lr_from_t, shrinkage};
use ebmix_core::simulation::{generate, SimScenario};
use ebmix_core::{
    bh_procedure, classify_local_fdr, decide, error_variances, evaluate, fit, fit_variance_prior, likelihood_ratio,
    summarize, theoretical_null_pvalues, DecisionConfig, EffectSpread, EmConfig, GeneSummaries, MixtureParams, ModelKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lr_forms_agree_on_random_draws() {
    let s = lemma_summaries(40, 0.2, 2.0, 31);
    let prior = fit_variance_prior(&s).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let g = rng.random_range(0..s.len());
        let p = MixtureParams::two_group(
            rng.random_range(0.01..0.9),
            rng.random_range(-1.0..1.0),
            rng.random_range(-4.0..4.0),
            EffectSpread::SigmaPsi2(rng.random_range(0.01..5.0)),
        );
        let f = evaluate(&s, &prior, ModelKind::RR, &p).unwrap();
        let stats = likelihood_ratio(&s, &f).unwrap();
        let (sv, vv) = (f.d_var[g], f.nonnull_var(g));
        let d = s.d()[g];
        let direct = ln_normal(d, p.tau, sv) - ln_normal(d, p.tau + p.psi, vv);
        let via_t = lr_from_t(stats.t_post[g], p.psi, sv, vv).ln();
        let ours = stats.lr[g].ln();
        assert!((direct - ours).abs() <= 1e-10 * direct.abs().max(1.0), "{direct} vs {ours}");
        assert!((direct - via_t).abs() <= 1e-10 * direct.abs().max(1.0), "{direct} vs {via_t}");
    }
}

#[test]
fn shrinkage_is_one_half_when_spread_equals_null_variance() {
    let s = lemma_summaries(30, 0.1, 2.0, 2);
    let prior = fit_variance_prior(&s).unwrap();
    let e = error_variances(&s, &prior, ModelKind::RR).unwrap();
    let x = e[7] * s.var_factor(7);
    let f = evaluate(&s, &prior, ModelKind::RR, &MixtureParams::two_group(0.1, 0.0, 1.0, EffectSpread::SigmaPsi2(x))).unwrap();
    assert!((shrinkage(&f, 7) - 0.5).abs() < 1e-15);
}

#[test]
fn rg_with_zero_psi_is_a_moderated_t() {
    let data = generate(&SimScenario { genes: 200, ..SimScenario::limma_low(1.0, 0.1) }, 0).unwrap();
    let s = summarize(&data.matrix).unwrap();
    let prior = fit_variance_prior(&s).unwrap();
    let f = evaluate(&s, &prior, ModelKind::RG, &MixtureParams::two_group(0.1, 0.2, 0.0, EffectSpread::V0(1.5))).unwrap();
    let stats = likelihood_ratio(&s, &f).unwrap();
    let ratio: Vec<f64> = (0..s.len()).map(|g| stats.t_post[g] * f.d_var[g].sqrt() / (s.d()[g] - 0.2)).collect();
    for r in &ratio {
        assert!((r - ratio[0]).abs() < 1e-12 * ratio[0].abs());
    }
}

#[test]
fn t_sign_follows_posterior_mean() {
    let s = lemma_summaries(500, 0.1, 3.0, 4);
    let prior = fit_variance_prior(&s).unwrap();
    for components in [ebmix_core::Components::Two, ebmix_core::Components::Three] {
        let config = EmConfig { components, ..EmConfig::default() };
        let f = fit(&s, &prior, ModelKind::RR, &config).unwrap();
        let stats = likelihood_ratio(&s, &f).unwrap();
        for g in 0..s.len() {
            let psi_g = if f.posteriors.second[g] > f.posteriors.nonnull[g] { -f.params.psi } else { f.params.psi };
            let l = stats.lambda[g];
            let mean = l * (s.d()[g] - f.params.tau) + (1.0 - l) * psi_g;
            assert!(mean == 0.0 || mean.signum() == stats.t_post[g].signum());
        }
    }
}

#[test]
fn pvalue_at_normal_quantile() {
    let base = lemma_summaries(50, 0.1, 2.0, 5);
    let prior = fit_variance_prior(&base).unwrap();
    let e = error_variances(&base, &prior, ModelKind::RR).unwrap();
    let tau = 0.3;
    let mut d = base.d().to_vec();
    d[0] = tau + 1.959964 * (e[0] * base.var_factor(0)).sqrt();
    d[1] = tau;
    let s = GeneSummaries::from_parts(
        base.gene_ids().to_vec(),
        d,
        base.s().to_vec(),
        base.m().to_vec(),
        base.f().to_vec(),
        base.n1().to_vec(),
        base.n2().to_vec(),
        false,
    )
    .unwrap();
    let f = evaluate(&s, &prior, ModelKind::RR, &MixtureParams::two_group(0.1, tau, 1.0, EffectSpread::SigmaPsi2(1.0))).unwrap();
    let p = theoretical_null_pvalues(&s, &f).unwrap();
    assert!((p[0] - 0.05).abs() < 1e-6, "{}", p[0]);
    assert_eq!(p[1], 1.0);
}

#[test]
fn null_pvalues_are_uniform() {
    let data = generate(&SimScenario { genes: 2000, ..SimScenario::lemma_low(3.0, 0.0) }, 0).unwrap();
    let s = summarize(&data.matrix).unwrap();
    let prior = fit_variance_prior(&s).unwrap();
    let f = fit(&s, &prior, ModelKind::RR, &EmConfig::default()).unwrap();
    let mut p = theoretical_null_pvalues(&s, &f).unwrap();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "KS statistic {ks}");
}

#[test]
fn bh_hand_example_and_single_gene() {
    let r = bh_procedure(&[0.01, 0.02, 0.04, 0.9], 0.05).unwrap();
    assert_eq!(r.calls, vec![true, true, false, false]);
    assert!(bh_procedure(&[0.01], 0.05).unwrap().calls[0]);
}

#[test]
fn bh_contains_bonferroni_and_adjusted_values_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(1..300);
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(rng.random_range(1..6))).collect();
        let q = rng.random_range(0.001..0.3);
        let r = bh_procedure(&p, q).unwrap();
        for i in 0..n {
            if p[i] <= q / n as f64 {
                assert!(r.calls[i]);
            }
            assert!(r.adjusted[i] >= p[i]);
            assert_eq!(r.calls[i], r.adjusted[i] <= q, "p {} adjusted {}", p[i], r.adjusted[i]);
            for j in 0..n {
                if p[i] <= p[j] {
                    assert!(r.adjusted[i] <= r.adjusted[j]);
                }
            }
        }
    }
}

#[test]
fn local_calls_grow_with_threshold() {
    let s = lemma_summaries(1000, 0.1, 3.0, 8);
    let prior = fit_variance_prior(&s).unwrap();
    let f = fit(&s, &prior, ModelKind::RR, &EmConfig::default()).unwrap();
    let mut prev = classify_local_fdr(&f, 0.0);
    assert!(prev.iter().all(|&c| !c));
    for k in 1..=20 {
        let calls = classify_local_fdr(&f, k as f64 / 20.0);
        assert!(prev.iter().zip(&calls).all(|(&a, &b)| !a || b));
        prev = calls;
    }
}

#[test]
fn infinite_effect_filter_calls_nothing() {
    let s = lemma_summaries(500, 0.2, 3.0, 9);
    let prior = fit_variance_prior(&s).unwrap();
    let f = fit(&s, &prior, ModelKind::RR, &EmConfig::default()).unwrap();
    let config = DecisionConfig { min_abs_effect: f64::INFINITY, ..DecisionConfig::default() };
    let out = decide(&s, &f, &config).unwrap();
    assert!(out.call_local.iter().chain(&out.call_fdr).all(|&c| !c));
    let open = decide(&s, &f, &DecisionConfig::default()).unwrap();
    assert!(open.call_local.iter().any(|&c| c));
}
