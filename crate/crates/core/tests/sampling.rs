use qfim_core::ansatz::{build_ansatz, seeded_theta, CircleFamily, GlobalPhaseFamily, ParamFamily};
use qfim_core::fisher::{cfim_definition, qgt, variance_predictor, DEFAULT_PROB_FLOOR};
use qfim_core::haar::{sample_haar_unitary, substream, SeededStream};
use qfim_core::linalg::{max_abs_diff, unitarity_defect, ComplexMatrix, ComplexVector, C64};
use qfim_core::montecarlo::{
    accumulate, estimate_qfim, BasisRoute, CfimForm, CfimSampler, EstimateConfig, SamplerOptions,
};
use qfim_core::tails::{
    fit_tail_constant, sweep_scaled_error, tail_fit_holds, TailFitConfig,
};
use qfim_core::QfimError;
use rand_distr::{Distribution, Exp1};

/// Complete the orthonormal frame `B` (N×r) to a unitary.
fn complete_frame(b: &ComplexMatrix, seed: u64) -> ComplexMatrix {
    let n = b.nrows();
    let r = b.ncols();
    let filler = sample_haar_unitary(n, &substream(seed, 0)).unwrap();
    let mut stacked = ComplexMatrix::zeros(n, n + r);
    stacked.columns_mut(0, r).copy_from(b);
    stacked.columns_mut(r, n).copy_from(&filler);
    let q = stacked.qr().q();
    // Align the leading columns with B exactly (QR may rotate their phases).
    let mut out = q.columns(0, n).into_owned();
    out.columns_mut(0, r).copy_from(b);
    out
}

#[test]
fn isometry_route_equals_full_unitary_cfim() {
    let (n, m, seed) = (12, 3, 5);
    let ansatz = build_ansatz(n, m, seed).unwrap();
    let theta = seeded_theta(m, seed);
    let sampler = CfimSampler::from_family(&ansatz, &theta, seed, SamplerOptions::default()).unwrap();
    let (frame, _) = sampler.tangent_frame();
    let rb = complete_frame(frame, 99);
    assert!(unitarity_defect(&rb) < 1e-12);
    for i in 0..20 {
        // The isometry of sample i is the leading block of this Haar unitary,
        // so U = R_B W* is a Haar basis whose CFIM must equal sample i.
        let w = sample_haar_unitary(n, &substream(seed, i)).unwrap();
        let u = &rb * w.adjoint();
        let f = cfim_definition(&sampler.swj, &u, DEFAULT_PROB_FLOOR).unwrap().matrix;
        assert!(max_abs_diff(&f, &sampler.sample(i as usize)) < 1e-10, "sample {i}");
    }
}

#[test]
fn routes_and_forms_agree_in_distribution() {
    let (n, m, seed) = (10, 2, 8);
    let ansatz = build_ansatz(n, m, seed).unwrap();
    let theta = seeded_theta(m, seed);
    let k = 20_000;
    let mut means = Vec::new();
    for (route, form) in [
        (BasisRoute::Isometry, CfimForm::Projection),
        (BasisRoute::FullUnitary, CfimForm::Projection),
        (BasisRoute::FullUnitary, CfimForm::Definition),
    ] {
        let opts = SamplerOptions { route, form, ..SamplerOptions::default() };
        let s = CfimSampler::from_family(&ansatz, &theta, seed, opts).unwrap();
        means.push(accumulate(&s, k, false, None).mean);
    }
    let q = qgt(&ansatz.evaluate(&theta).unwrap());
    let v = variance_predictor(&q, n).unwrap();
    for mean in &means {
        for i in 0..m {
            for j in 0..m {
                let se = (v[(i, j)] / k as f64).sqrt();
                assert!((mean[(i, j)] - q.real_part[(i, j)] / 2.0).abs() < 5.0 * se);
            }
        }
    }
    // Same substreams, same matrices: the two full-unitary forms agree per sample.
    assert!(max_abs_diff(&means[1], &means[2]) < 1e-10);
}

#[test]
fn circle_family_mean_and_variance() {
    let k = 100_000;
    let r = estimate_qfim(&CircleFamily, &[0.37], k, 21, &EstimateConfig::default()).unwrap();
    assert_eq!(r.qfim[(0, 0)], 1.0);
    assert!((r.predicted_variance[(0, 0)] - 0.125).abs() < 1e-15);
    let tol = 4.0 * (0.125_f64 / k as f64).sqrt();
    assert!((r.mean_cfim[(0, 0)] - 0.5).abs() < tol, "{}", r.mean_cfim[(0, 0)]);
    assert!((r.empirical_variance[(0, 0)] - 0.125).abs() < 0.02 * 0.125, "{}", r.empirical_variance[(0, 0)]);
}

#[test]
fn global_phase_family_is_degenerate() {
    let mut psi = ComplexVector::zeros(3);
    psi[0] = C64::new(0.6, 0.0);
    psi[2] = C64::new(0.0, 0.8);
    let fam = GlobalPhaseFamily { base_state: psi };
    let err = estimate_qfim(&fam, &[0.2], 10, 1, &EstimateConfig::default()).unwrap_err();
    assert!(matches!(err, QfimError::DegenerateFamily { .. }));
}

#[test]
fn doubling_samples_reduces_error_in_most_repetitions() {
    // m = 5 so that the Frobenius error aggregates 15 free entries; at m = 2
    // the error norm fluctuates too much for an 80% rate (about 70% observed).
    let (n, m) = (16, 5);
    let ansatz = build_ansatz(n, m, 3).unwrap();
    let theta = seeded_theta(m, 3);
    let k = 200;
    let cfg = EstimateConfig::default();
    let wins = (0..50u64)
        .filter(|&rep| {
            let small = estimate_qfim(&ansatz, &theta, k, rep, &cfg).unwrap();
            let large = estimate_qfim(&ansatz, &theta, 2 * k, 10_000 + rep, &cfg).unwrap();
            large.rel_err_frob < small.rel_err_frob
        })
        .count();
    assert!(wins >= 40, "{wins}/50");
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let ansatz = build_ansatz(16, 3, 2).unwrap();
    let theta = seeded_theta(3, 2);
    let run = |w| {
        let cfg = EstimateConfig { workers: Some(w), ..EstimateConfig::default() };
        serde_json::to_string(&estimate_qfim(&ansatz, &theta, 3000, 2, &cfg).unwrap()).unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(2));
    assert_eq!(one, run(5));
}

fn synthetic_tail(c0: f64, n: usize, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededStream { master_seed: seed, stream_id: 0 }.rng();
    (0..count)
        .map(|_| {
            let e: f64 = Exp1.sample(&mut rng);
            (e / (c0 * n as f64)).sqrt()
        })
        .collect()
}

#[test]
fn tail_fit_recovers_synthetic_constants() {
    let cfg = TailFitConfig::default();
    for c0 in [0.1, 0.5, 2.0] {
        for n in [20, 80] {
            let xs = synthetic_tail(c0, n, 100_000, 17);
            let fit = fit_tail_constant(&xs, n, 1, &cfg).unwrap();
            assert!((fit.c_regression / c0 - 1.0).abs() < 0.1, "c0={c0} N={n}: {}", fit.c_regression);
            assert!(fit.c_adjusted > 0.0 && fit.c_adjusted <= 1.1 * fit.c_regression);
            assert!(tail_fit_holds(&fit, &xs));
        }
    }
}

#[test]
fn sweep_is_deterministic() {
    let a = sweep_scaled_error(&[6, 10], 2, 20, 4, SamplerOptions::default(), None).unwrap();
    let b = sweep_scaled_error(&[6, 10], 2, 20, 4, SamplerOptions::default(), Some(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|r| r.n).collect::<Vec<_>>(), vec![6, 10]);
    assert!(sweep_scaled_error(&[6], 2, 1, 4, SamplerOptions::default(), None).is_err());
}
