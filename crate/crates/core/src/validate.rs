//! Self-check suites run by `qfim validate` and the acceptance tests.
//!
//! Every suite returns named [`Check`]s carrying the observed statistic and
//! the tolerance it was held to, so callers can print one line per check.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_ansatz, jacobian_fd, seeded_theta, ParamFamily};
use crate::error::{QfimError, Result};
use crate::fisher::{
    cfim_definition, cfim_projection, projection_sum_check, projection_sum_limit, qfim_realrep, qgt, DEFAULT_PROB_FLOOR,
};
use crate::haar::{sample_haar_unitary, sample_unitary_unfixed, substream, SeededStream, AUX_STREAM};
use crate::linalg::{max_abs_diff, max_abs_diff_complex, ComplexMatrix, ComplexVector, C64};
use crate::montecarlo::{estimate_qfim, EstimateConfig, EstimationReport};
use crate::parallel::{chunked_reduce, DEFAULT_CHUNK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `statistic ≤ tolerance`.
    pub fn at_most(name: impl Into<String>, statistic: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed: statistic <= tolerance, statistic, tolerance, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} {}: {:.3e} (tol {:.3e}) {}", self.name, self.statistic, self.tolerance, self.detail)
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Random `(N, m, seed)` instance sizes drawn from the auxiliary stream.
fn instance_sizes(count: usize, n_max: usize, m_max: usize, seed: u64) -> Vec<(usize, usize, u64)> {
    let mut rng = SeededStream { master_seed: seed, stream_id: AUX_STREAM }.rng();
    (0..count)
        .map(|_| (rng.random_range(2..=n_max.max(2)), rng.random_range(1..=m_max.max(1)), rng.random()))
        .collect()
}

/// `Re 𝒬` against the realified QFIM, and the definition-form CFIM against
/// the projection form, over random instances.
pub fn check_form_equivalence(instances: usize, n_max: usize, m_max: usize, seed: u64) -> Result<Vec<Check>> {
    let mut qfim_err: f64 = 0.0;
    let mut cfim_err: f64 = 0.0;
    for (i, (n, m, s)) in instance_sizes(instances, n_max, m_max, seed).into_iter().enumerate() {
        let ansatz = build_ansatz(n, m, s)?;
        let swj = ansatz.evaluate(&seeded_theta(m, s))?;
        qfim_err = qfim_err.max(max_abs_diff(&qgt(&swj).real_part, &qfim_realrep(&swj)));
        let u = sample_haar_unitary(n, &substream(seed, i as u64))?;
        let d = cfim_definition(&swj, &u, DEFAULT_PROB_FLOOR)?;
        let p = cfim_projection(&swj, &u, DEFAULT_PROB_FLOOR)?;
        cfim_err = cfim_err.max(max_abs_diff(&d.matrix, &p.matrix));
    }
    let detail = format!("{instances} instances, N <= {n_max}, m <= {m_max}");
    Ok(vec![
        Check::at_most("qfim complex vs realified", qfim_err, 1e-10, detail.clone()),
        Check::at_most("cfim definition vs projection", cfim_err, 1e-9, detail),
    ])
}

/// Analytic Jacobian against central finite differences.
pub fn check_jacobian(instances: usize, n_max: usize, m_max: usize, seed: u64, step: f64, tol: f64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for (n, m, s) in instance_sizes(instances, n_max, m_max, seed) {
        let ansatz = build_ansatz(n, m, s)?;
        let theta = seeded_theta(m, s);
        let analytic = ansatz.evaluate(&theta)?.jacobian;
        let fd = jacobian_fd(&ansatz, &theta, step)?;
        worst = worst.max(max_abs_diff_complex(&analytic, &fd));
    }
    Ok(Check::at_most("jacobian vs finite differences", worst, tol, format!("{instances} instances, step {step:e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub expected: f64,
}

impl MomentEstimate {
    pub fn z_score(&self) -> f64 {
        (self.mean - self.expected).abs() / self.std_error
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    sum: [f64; 4],
    sum_sq: [f64; 4],
}

impl Moments {
    fn push(&mut self, u11: C64) {
        let a2 = u11.norm_sqr();
        let x = [a2, a2 * a2, u11.re, u11.im];
        self.count += 1.0;
        for (k, v) in x.iter().enumerate() {
            self.sum[k] += v;
            self.sum_sq[k] += v * v;
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.count += o.count;
        for k in 0..4 {
            self.sum[k] += o.sum[k];
            self.sum_sq[k] += o.sum_sq[k];
        }
        self
    }

    fn estimate(&self, k: usize, expected: f64) -> MomentEstimate {
        let mean = self.sum[k] / self.count;
        let var = (self.sum_sq[k] / self.count - mean * mean).max(0.0) * self.count / (self.count - 1.0);
        MomentEstimate { mean, std_error: (var / self.count).sqrt(), expected }
    }
}

/// `E|U₁₁|²`, `E|U₁₁|⁴`, `E Re U₁₁`, `E Im U₁₁` under a sampler.
pub fn u11_moments<S>(n: usize, samples: usize, seed: u64, sampler: S) -> Result<[MomentEstimate; 4]>
where
    S: Fn(usize, &SeededStream) -> Result<ComplexMatrix> + Sync,
{
    if samples < 2 {
        return Err(QfimError::TooFewSamples { needed: 2, got: samples });
    }
    let nf = n as f64;
    let m = chunked_reduce(
        samples,
        DEFAULT_CHUNK,
        Moments::default,
        |acc, i| {
            let u = sampler(n, &substream(seed, i as u64)).expect("valid dimension");
            acc.push(u[(0, 0)]);
        },
        Moments::merge,
    )
    .expect("samples >= 2");
    Ok([
        m.estimate(0, 1.0 / nf),
        m.estimate(1, 2.0 / (nf * (nf + 1.0))),
        m.estimate(2, 0.0),
        m.estimate(3, 0.0),
    ])
}

const MOMENT_NAMES: [&str; 4] = ["E|U11|^2", "E|U11|^4", "E Re U11", "E Im U11"];

fn moment_checks(prefix: &str, est: &[MomentEstimate; 4]) -> Vec<Check> {
    est.iter()
        .zip(MOMENT_NAMES)
        .map(|(e, name)| {
            Check::at_most(
                format!("{prefix} {name}"),
                e.z_score(),
                3.0,
                format!("mean {:.6} expected {:.6} (z-score)", e.mean, e.expected),
            )
        })
        .collect()
}

/// Moment test of the Haar sampler, plus a negative control that runs the
/// same test on QR without the phase fix and passes only if that test fails.
pub fn check_haar_moments(n: usize, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let fixed = u11_moments(n, samples, seed, sample_haar_unitary)?;
    let mut checks = moment_checks("haar", &fixed);
    let unfixed = u11_moments(n, samples, seed, sample_unitary_unfixed)?;
    let control = moment_checks("unfixed", &unfixed);
    let worst = control.iter().map(|c| c.statistic).fold(0.0, f64::max);
    checks.push(Check {
        name: "negative control: unfixed QR fails the moment test".into(),
        passed: !all_passed(&control),
        statistic: worst,
        tolerance: 3.0,
        detail: format!("worst z-score {worst:.1} must exceed the tolerance"),
    });
    Ok(checks)
}

/// Monte Carlo average of the per-outcome projection sum against its limit
/// `(1/2)(I − P(Φψ) + P(JΦψ))` at `ψ = e₁`.
pub fn check_projection_sum(n: usize, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let mut psi = ComplexVector::zeros(n);
    psi[0] = C64::new(1.0, 0.0);
    let avg = projection_sum_check(&psi, samples, &SeededStream { master_seed: seed, stream_id: 0 })?;
    let limit = projection_sum_limit(&psi)?;
    let tol = 5.0 / (samples as f64).sqrt();
    Ok(vec![
        Check::at_most("projection sum entrywise", max_abs_diff(&avg, &limit), tol, format!("N={n}, K={samples}")),
        Check::at_most("projection sum trace", (avg.trace() - n as f64).abs(), 0.05, format!("trace {:.6}", avg.trace())),
    ])
}

fn reference_report(n: usize, m: usize, samples: usize, seed: u64, config: &EstimateConfig) -> Result<EstimationReport> {
    let ansatz = build_ansatz(n, m, seed)?;
    estimate_qfim(&ansatz, &seeded_theta(m, seed), samples, seed, config)
}

/// Every entry of the averaged CFIM within `z_tol·√(V_ij/K)` of `Q_ij/2`.
pub fn check_mean_identity(n: usize, m: usize, samples: usize, seed: u64, z_tol: f64, config: &EstimateConfig) -> Result<Check> {
    let r = reference_report(n, m, samples, seed, config)?;
    Ok(mean_identity_from_report(&r, z_tol))
}

pub fn mean_identity_from_report(r: &EstimationReport, z_tol: f64) -> Check {
    let k = r.k_samples as f64;
    let mut worst: f64 = 0.0;
    for i in 0..r.m {
        for j in 0..r.m {
            let se = (r.predicted_variance[(i, j)] / k).sqrt();
            let dev = (r.mean_cfim[(i, j)] - 0.5 * r.qfim[(i, j)]).abs();
            worst = worst.max(if se > 0.0 { dev / se } else if dev > 0.0 { f64::INFINITY } else { 0.0 });
        }
    }
    Check::at_most(
        "mean CFIM equals Q/2",
        worst,
        z_tol,
        format!("N={}, m={}, K={}, worst deviation in predicted standard errors", r.n, r.m, r.k_samples),
    )
}

/// Empirical entrywise variance against the closed form, relative error on
/// entries whose predicted variance exceeds `floor`.
pub fn check_variance(n: usize, m: usize, samples: usize, seed: u64, rel_tol: f64, floor: f64, config: &EstimateConfig) -> Result<Check> {
    let r = reference_report(n, m, samples, seed, config)?;
    Ok(variance_from_report(&r, rel_tol, floor))
}

pub fn variance_from_report(r: &EstimationReport, rel_tol: f64, floor: f64) -> Check {
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for i in 0..r.m {
        for j in 0..r.m {
            let p = r.predicted_variance[(i, j)];
            if p > floor {
                used += 1;
                worst = worst.max((r.empirical_variance[(i, j)] - p).abs() / p);
            }
        }
    }
    Check::at_most(
        "entrywise variance matches closed form",
        worst,
        rel_tol,
        format!("N={}, m={}, K={}, {used} entries above {floor:e}", r.n, r.m, r.k_samples),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub instances: usize,
    pub haar_dim: usize,
    pub haar_samples: usize,
    pub projection_dim: usize,
    pub projection_samples: usize,
}

impl SuiteConfig {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            seed,
            instances: 20,
            haar_dim: 4,
            haar_samples: 100_000,
            projection_dim: 4,
            projection_samples: 20_000,
        }
    }
}

/// Cross-form, Jacobian, Haar-moment and projection-sum suites.
pub fn run_suites(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let mut checks = check_form_equivalence(cfg.instances, cfg.n, cfg.m, cfg.seed)?;
    checks.push(check_jacobian(cfg.instances, cfg.n, cfg.m, cfg.seed, 1e-5, 1e-6)?);
    checks.extend(check_haar_moments(cfg.haar_dim, cfg.haar_samples, cfg.seed)?);
    checks.extend(check_projection_sum(cfg.projection_dim, cfg.projection_samples, cfg.seed)?);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        let cfg = SuiteConfig { instances: 5, haar_samples: 20_000, projection_samples: 4_000, ..SuiteConfig::new(8, 3, 1) };
        let checks = run_suites(&cfg).unwrap();
        for c in &checks {
            assert!(c.passed, "{}", c.line());
        }
    }

    #[test]
    fn check_line_format() {
        let c = Check::at_most("x", 0.5, 1.0, "d");
        assert!(c.passed);
        assert!(c.line().starts_with("PASS x:"));
        assert!(!Check::at_most("y", 2.0, 1.0, "").passed);
    }

    #[test]
    fn instance_sizes_stay_in_range() {
        for (n, m, _) in instance_sizes(200, 6, 3, 4) {
            assert!((2..=6).contains(&n) && (1..=3).contains(&m));
        }
    }
}
