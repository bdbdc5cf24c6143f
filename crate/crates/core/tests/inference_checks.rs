mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rstar_core::inference::{decompose, q_stat, r_star, PATCH_RADIUS};
use rstar_core::model::hessian;
use rstar_core::profile::step_halving_diagnostic;
use rstar_core::{
    fit_constrained, fit_mle, profile_grid, Dataset, Family, InferenceEngine, ModelSpec, Problem, RootStatistic,
};

use common::{logistic, normal, rel, t5, T5};

#[test]
fn root_at_null_matches_reduced_model_refit() {
    let data = logistic(80, 21);
    let problem = Problem::new(ModelSpec::Logistic, &data, 1).unwrap();
    let engine = InferenceEngine::new(problem).unwrap();
    let rep = engine.test(0.0).unwrap();

    // ψ = 0 is the model without column 1.
    let x = data.x().clone().remove_column(1);
    let names = vec![data.names()[0].clone(), data.names()[2].clone()];
    let reduced = Dataset::with_names(data.y().clone(), x, names).unwrap();
    let reduced_fit = fit_mle(&Problem::new(ModelSpec::Logistic, &reduced, 1).unwrap(), None).unwrap();
    let dev = 2.0 * (engine.fit().loglik_at_max - reduced_fit.loglik_at_max);
    let expected = engine.fit().psi_hat().signum() * dev.sqrt();
    assert!((rep.r - expected).abs() <= 1e-8, "{} vs {expected}", rep.r);
}

#[test]
fn identities_at_and_away_from_the_mle() {
    for (model, data) in [(ModelSpec::Logistic, logistic(100, 5)), (T5, t5(70, 6))] {
        let problem = Problem::new(model, &data, 2).unwrap();
        let engine = InferenceEngine::new(problem).unwrap();
        let fit = engine.fit();
        let curve = engine.curve();
        assert_eq!(curve.kappa(2), -1.0);

        let at = engine.test(fit.psi_hat()).unwrap();
        assert!(at.r.abs() <= 1e-8);
        assert!((at.rho - 1.0).abs() <= 1e-10);
        assert!(at.near_zero_patched);

        for k in [-2.5, -1.0, 0.7, 2.0] {
            let psi0 = fit.psi_hat() + k * curve.standard_error();
            let rep = engine.test(psi0).unwrap();
            let c = fit_constrained(&problem, psi0, None).unwrap();
            let w = 2.0 * (fit.loglik_at_max - c.loglik_profile);
            assert!(rel(rep.r * rep.r, w) <= 1e-10);
            assert_eq!(rep.r.signum(), (fit.psi_hat() - psi0).signum());
            assert!(!rep.near_zero_patched);
            assert!((rep.r + rep.r_np + rep.r_inf - rep.r_star).abs() <= 1e-12);
            assert!(rep.rho > 0.0);
            assert!(rep.p_one_sided > 0.0 && rep.p_one_sided < 1.0);
        }
    }
}

#[test]
fn rho_matches_direct_determinant_ratio() {
    let data = t5(60, 17);
    let problem = Problem::new(T5, &data, 1).unwrap();
    let engine = InferenceEngine::new(problem).unwrap();
    let psi0 = engine.fit().psi_hat() - 0.2;
    let rep = engine.test(psi0).unwrap();
    let block = |theta| -> DMatrix<f64> {
        let h = -hessian(&T5, &data, theta).unwrap();
        let p = h.nrows();
        h.view((1, 1), (p - 1, p - 1)).into_owned()
    };
    let c = fit_constrained(&problem, psi0, None).unwrap();
    let direct = (block(&engine.fit().theta_hat).determinant() / block(&c.theta()).determinant()).sqrt();
    assert!(rel(rep.rho, direct) <= 1e-10, "{} vs {direct}", rep.rho);
}

#[test]
fn wald_over_root_tends_to_one() {
    let data = logistic(200, 2);
    let problem = Problem::new(ModelSpec::Logistic, &data, 1).unwrap();
    let engine = InferenceEngine::new(problem).unwrap();
    for d in [-1e-3, 1e-3] {
        let rep = engine.test(engine.fit().psi_hat() + d).unwrap();
        let ratio = rep.wald_t.unwrap() / rep.r;
        assert!((ratio - 1.0).abs() < 1e-3, "{ratio}");
    }
}

#[test]
fn exact_normal_model_is_degenerate() {
    let sigma = 0.8;
    let data = normal(40, 3, sigma);
    let problem = Problem::new(ModelSpec::NormalKnownScale { sigma }, &data, 1).unwrap();
    let engine = InferenceEngine::new(problem).unwrap();
    let c = engine.curve();
    for v in [c.kappa3, c.kappa4, c.gamma1, c.gamma2] {
        assert!(v.abs() <= 1e-6, "{c:?}");
    }
    // Closed-form precision of ψ̂: 1 / (σ² [(XᵀX)⁻¹]_ψψ).
    let xtx_inv = (data.x().transpose() * data.x()).try_inverse().unwrap();
    let precision = 1.0 / (sigma * sigma * xtx_inv[(1, 1)]);
    assert!(rel(c.j_p, precision) <= 1e-6);
    for psi0 in [0.0, 0.5, 1.3] {
        let rep = engine.test(psi0).unwrap();
        let t = rep.wald_t.unwrap();
        let s = rstar_core::inference::profile_score(&engine, psi0).unwrap() / c.j_p.sqrt();
        assert!((s - t).abs() <= 1e-8, "s {s} t {t}");
        assert!((t - rep.r).abs() <= 1e-6);
        assert!((rep.r_star - rep.r).abs() <= 1e-6);
    }
}

#[test]
fn profile_second_derivative_matches_richardson() {
    let data = logistic(150, 31);
    let problem = Problem::new(ModelSpec::Logistic, &data, 1).unwrap();
    let engine = InferenceEngine::new(problem).unwrap();
    let c = engine.curve();
    let fit = engine.fit();
    let lp = |psi: f64| fit_constrained(&problem, psi, None).unwrap().loglik_profile;
    let h = 0.05 * c.standard_error();
    let d = |h: f64| (lp(c.psi_hat + h) + lp(c.psi_hat - h) - 2.0 * fit.loglik_at_max) / (h * h);
    let richardson = (4.0 * d(h) - d(2.0 * h)) / 3.0;
    assert!(rel(c.zeta[1], richardson) <= 1e-5, "{} vs {richardson}", c.zeta[1]);
    // The slope at the maximum vanishes to stencil accuracy.
    assert!(c.zeta[0].abs() <= 1e-5 * c.j_p * c.step);
}

#[test]
fn halving_the_step_barely_moves_kappa3() {
    let data = logistic(300, 41);
    let problem = Problem::new(ModelSpec::Logistic, &data, 1).unwrap();
    let engine = InferenceEngine::new(problem).unwrap();
    let change = step_halving_diagnostic(&problem, engine.fit(), engine.curve()).unwrap();
    assert!(change <= 1e-3, "relative change {change:e}");
}

#[test]
fn profile_grid_shape() {
    let data = logistic(120, 7);
    let problem = Problem::new(ModelSpec::Logistic, &data, 1).unwrap();
    let fit = fit_mle(&problem, None).unwrap();
    let single = profile_grid(&problem, fit.psi_hat(), 0.1, 0).unwrap();
    assert_eq!(single.len(), 1);
    let direct = fit_constrained(&problem, fit.psi_hat(), None).unwrap();
    assert!((single[0].loglik_profile - direct.loglik_profile).abs() <= 1e-12);

    let grid = profile_grid(&problem, fit.psi_hat(), 0.15, 4).unwrap();
    let lp: Vec<f64> = grid.iter().map(|g| g.loglik_profile).collect();
    assert!(lp[..5].windows(2).all(|w| w[0] < w[1]));
    assert!(lp[4..].windows(2).all(|w| w[0] > w[1]));
    assert!(grid.windows(2).all(|w| w[0].psi < w[1].psi));
}

#[test]
fn root_decreases_across_grid() {
    let data = t5(60, 2);
    let problem = Problem::new(T5, &data, 1).unwrap();
    let engine = InferenceEngine::new(problem).unwrap();
    let se = engine.curve().standard_error();
    let roots: Vec<f64> = (-6..=6)
        .map(|k| engine.root(engine.fit().psi_hat() + 0.5 * k as f64 * se).unwrap())
        .collect();
    assert!(roots.windows(2).all(|w| w[0] > w[1]), "{roots:?}");
}

/// ψ₀ on the given side of ψ̂ where r = target, by bisection.
fn psi_at_root(engine: &InferenceEngine<'_>, target: f64) -> f64 {
    let psi_hat = engine.fit().psi_hat();
    let se = engine.curve().standard_error();
    let (mut a, mut b) = if target > 0.0 { (psi_hat - se, psi_hat) } else { (psi_hat, psi_hat + se) };
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if engine.root(m).unwrap() > target {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn patch_is_continuous_at_its_boundary() {
    for (model, data) in [(ModelSpec::Logistic, logistic(200, 13)), (T5, t5(120, 14))] {
        let problem = Problem::new(model, &data, 1).unwrap();
        let engine = InferenceEngine::new(problem).unwrap();
        let repr = *engine.linear_repr();
        for side in [1.0, -1.0] {
            let psi0 = psi_at_root(&engine, side * PATCH_RADIUS * (1.0 + 1e-6));
            let rep = engine.test(psi0).unwrap();
            let stat = rep.wald_t.or(rep.score_s).unwrap();
            let formula = rep.r + (rep.q / rep.r).ln() / rep.r;
            let patched = repr.apply(rep.r);
            assert!((formula - patched).abs() <= 5e-4, "{model}: {formula} vs {patched}");
            let (np, inf) = decompose(rep.r, rep.rho, stat, problem.family()).unwrap();
            assert!((rep.r + np + inf - formula).abs() <= 1e-12);
        }
    }
}

#[test]
fn intervals() {
    let data = logistic(30, 77);
    let problem = Problem::new(ModelSpec::Logistic, &data, 1).unwrap();
    let engine = InferenceEngine::new(problem).unwrap();
    let psi_hat = engine.fit().psi_hat();
    let a = engine.confidence_interval(RootStatistic::R, 0.95).unwrap();
    let b = engine.confidence_interval(RootStatistic::RStar, 0.95).unwrap();
    assert!(a.0 < psi_hat && psi_hat < a.1);
    assert!(b.0 < psi_hat && psi_hat < b.1);
    assert!((a.0 - b.0).abs() > 1e-3 && (a.1 - b.1).abs() > 1e-3, "{a:?} {b:?}");
    // Endpoints solve r* = ±z.
    let z = 1.959_963_984_540_054;
    assert!((engine.test(b.0).unwrap().r_star - z).abs() < 1e-5);
    assert!((engine.test(b.1).unwrap().r_star + z).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn root_sign_and_square(seed in 0u64..1000, k in -3.0f64..3.0) {
        let data = logistic(90, seed);
        let problem = Problem::new(ModelSpec::Logistic, &data, 2).unwrap();
        let engine = InferenceEngine::new(problem).unwrap();
        let psi_hat = engine.fit().psi_hat();
        let psi0 = psi_hat + k * engine.curve().standard_error();
        let rep = engine.test(psi0).unwrap();
        prop_assert_eq!(rep.r.signum(), (psi_hat - psi0).signum());
        let c = fit_constrained(&problem, psi0, None).unwrap();
        let w = 2.0 * (engine.fit().loglik_at_max - c.loglik_profile);
        prop_assert!((rep.r * rep.r - w).abs() <= 1e-10 * w.max(1e-300) + 1e-14);
        if !rep.near_zero_patched {
            prop_assert!((rep.r + rep.r_np + rep.r_inf - rep.r_star).abs() <= 1e-12);
        }
    }

    #[test]
    fn unpatched_r_star_is_formula(r in 0.05f64..5.0, ratio in 0.2f64..5.0, neg in any::<bool>()) {
        let r = if neg { -r } else { r };
        let repr = rstar_core::LinearRepr { c0: 0.0, c1: 0.0, family: Family::LocationScale, n: 1 };
        let q = r * ratio;
        let (v, patched) = r_star(r, q, &repr).unwrap();
        prop_assert!(!patched);
        prop_assert!((v - (r + ratio.ln() / r)).abs() <= 1e-14 * (1.0 + v.abs()));
        let rho = 1.3;
        let s = q_stat(Family::LocationScale, q * rho, rho);
        prop_assert!((s - q).abs() <= 1e-12 * q.abs());
    }
}
