//! Concentration experiments: relative-error sampling across dimensions,
//! histograms, empirical tails with `exp(−cNt²)` fits, and evaluators for
//! the max-norm, Frobenius and eigenvalue tail bounds.

use serde::{Deserialize, Serialize};

use crate::ansatz::{build_ansatz, seeded_theta, ParamFamily};
use crate::error::{QfimError, Result};
use crate::montecarlo::{accumulate, sandwich_ratios, CfimSampler, SamplerOptions, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaPolicy {
    /// `θ ~ Uniform[−π, π]^m` from the master seed.
    SeededUniform,
    Explicit(Vec<f64>),
}

impl ThetaPolicy {
    pub fn resolve(&self, m: usize, seed: u64) -> Result<Vec<f64>> {
        match self {
            ThetaPolicy::SeededUniform => Ok(seeded_theta(m, seed)),
            ThetaPolicy::Explicit(t) if t.len() == m => Ok(t.clone()),
            ThetaPolicy::Explicit(t) => Err(QfimError::DimensionMismatch { expected: m, actual: t.len() }),
        }
    }
}

/// Per-sample relative errors of `F^U` against `Q/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSamples {
    pub n: usize,
    pub m: usize,
    pub theta: Vec<f64>,
    pub rel_frob: Vec<f64>,
    pub rel_max: Vec<f64>,
}

pub fn sample_errors_for<F: ParamFamily + ?Sized>(
    family: &F,
    theta: &[f64],
    num_samples: usize,
    master_seed: u64,
    options: SamplerOptions,
    workers: Option<usize>,
) -> Result<ErrorSamples> {
    if num_samples == 0 {
        return Err(QfimError::TooFewSamples { needed: 1, got: 0 });
    }
    let sampler = CfimSampler::from_family(family, theta, master_seed, options)?;
    sampler.ensure_nondegenerate()?;
    let acc = accumulate(&sampler, num_samples, false, workers);
    Ok(ErrorSamples {
        n: family.dim(),
        m: family.num_params(),
        theta: theta.to_vec(),
        rel_frob: acc.rel_frob,
        rel_max: acc.rel_max,
    })
}

/// Relative errors for the reference ansatz of `(n, m, master_seed)`.
pub fn sample_errors(
    n: usize,
    m: usize,
    theta: &ThetaPolicy,
    num_samples: usize,
    master_seed: u64,
    options: SamplerOptions,
    workers: Option<usize>,
) -> Result<ErrorSamples> {
    let ansatz = build_ansatz(n, m, master_seed)?;
    let theta = theta.resolve(m, master_seed)?;
    sample_errors_for(&ansatz, &theta, num_samples, master_seed, options, workers)
}

/// `‖F^{U_i} − Q/2‖_F / ‖Q/2‖_F` for `i = 0..num_samples`.
pub fn sample_rel_errors(n: usize, m: usize, theta: &ThetaPolicy, num_samples: usize, master_seed: u64) -> Result<Vec<f64>> {
    Ok(sample_errors(n, m, theta, num_samples, master_seed, SamplerOptions::default(), None)?.rel_frob)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub mean_rel: f64,
    pub scaled: f64,
    pub std_rel: f64,
    pub trials: usize,
    pub seed: u64,
}

pub fn sweep_scaled_error(
    n_list: &[usize],
    m: usize,
    trials: usize,
    master_seed: u64,
    options: SamplerOptions,
    workers: Option<usize>,
) -> Result<Vec<SweepRow>> {
    if trials < 2 {
        return Err(QfimError::TooFewSamples { needed: 2, got: trials });
    }
    n_list
        .iter()
        .map(|&n| {
            let errs = sample_errors(n, m, &ThetaPolicy::SeededUniform, trials, master_seed, options, workers)?.rel_frob;
            let (mean, std) = mean_std(&errs);
            Ok(SweepRow { n, mean_rel: mean, scaled: (n as f64).sqrt() * mean, std_rel: std, trials, seed: master_seed })
        })
        .collect()
}

/// Mean and unbiased standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let mean = x.iter().sum::<f64>() / k;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
    (mean, var.sqrt())
}

/// Linear-interpolated quantile, `q ∈ [0, 1]`.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// Equal-width bins over `[0, max sample]`; the maximum lands in the last bin.
pub fn histogram(samples: &[f64], num_bins: usize) -> Result<Vec<HistBin>> {
    if samples.is_empty() {
        return Err(QfimError::TooFewSamples { needed: 1, got: 0 });
    }
    if num_bins == 0 {
        return Err(QfimError::InvalidArgument("need at least one bin".into()));
    }
    let max = samples.iter().copied().fold(0.0_f64, f64::max);
    let width = max / num_bins as f64;
    let mut bins: Vec<HistBin> = (0..num_bins)
        .map(|b| HistBin { left: b as f64 * width, right: (b + 1) as f64 * width, count: 0 })
        .collect();
    for &s in samples {
        let idx = if width > 0.0 { ((s / width).floor() as usize).min(num_bins - 1) } else { 0 };
        bins[idx].count += 1;
    }
    Ok(bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub t: f64,
    pub ccdf: f64,
}

/// `P(X > t)` at each distinct sample value, `t` ascending.
pub fn empirical_ccdf(samples: &[f64]) -> Result<Vec<CcdfPoint>> {
    if samples.is_empty() {
        return Err(QfimError::TooFewSamples { needed: 1, got: 0 });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    let mut out = Vec::with_capacity(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == t {
            j += 1;
        }
        out.push(CcdfPoint { t, ccdf: (sorted.len() - j) as f64 / total });
        i = j;
    }
    Ok(out)
}

/// `P(X > t)` evaluated by direct count.
pub fn ccdf_at(samples: &[f64], t: f64) -> f64 {
    samples.iter().filter(|&&s| s > t).count() as f64 / samples.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFitConfig {
    pub percentile_cutoff: f64,
    pub regression_band: (f64, f64),
}

impl Default for TailFitConfig {
    fn default() -> Self {
        Self { percentile_cutoff: 99.99, regression_band: (1e-4, 0.5) }
    }
}

pub const MIN_TAIL_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub n: usize,
    pub m: usize,
    pub num_samples: usize,
    pub c_regression: f64,
    pub c_adjusted: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub percentile_cutoff: f64,
    pub regression_band: (f64, f64),
    pub regression_range: (f64, f64),
    pub regression_points: usize,
}

/// Fit `P(X > t) ≈ exp(−cNt²)`.
///
/// `c_regression` comes from an unweighted least-squares line through
/// `(t², log ccdf)` on points whose tail probability lies in the band.
/// `c_adjusted` is the largest `c` keeping the empirical tail under the curve
/// at every sample up to the cutoff percentile.
pub fn fit_tail_constant(samples: &[f64], n: usize, m: usize, config: &TailFitConfig) -> Result<TailFit> {
    if samples.len() < MIN_TAIL_SAMPLES {
        return Err(QfimError::TooFewSamples { needed: MIN_TAIL_SAMPLES, got: samples.len() });
    }
    let (lo, hi) = config.regression_band;
    if !(lo > 0.0 && lo < hi && hi <= 1.0) {
        return Err(QfimError::InvalidArgument(format!("bad regression band ({lo}, {hi})")));
    }
    let nf = n as f64;
    let points = empirical_ccdf(samples)?;
    let band: Vec<&CcdfPoint> = points.iter().filter(|p| p.ccdf >= lo && p.ccdf <= hi).collect();
    if band.len() < 3 {
        return Err(QfimError::TooFewSamples { needed: 3, got: band.len() });
    }
    let xs: Vec<f64> = band.iter().map(|p| p.t * p.t).collect();
    let ys: Vec<f64> = band.iter().map(|p| p.ccdf.ln()).collect();
    let (slope, intercept, r_squared) = least_squares(&xs, &ys);

    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let t_cut = quantile_sorted(&sorted, config.percentile_cutoff / 100.0);
    let c_adjusted = points
        .iter()
        .filter(|p| p.t > 0.0 && p.t <= t_cut && p.ccdf > 0.0)
        .map(|p| -p.ccdf.ln() / (nf * p.t * p.t))
        .fold(f64::INFINITY, f64::min);

    Ok(TailFit {
        n,
        m,
        num_samples: samples.len(),
        c_regression: -slope / nf,
        c_adjusted,
        intercept,
        r_squared,
        percentile_cutoff: config.percentile_cutoff,
        regression_band: config.regression_band,
        regression_range: (band[0].t, band[band.len() - 1].t),
        regression_points: band.len(),
    })
}

/// Re-check the fit invariant by direct counting: every sample `t` up to the
/// cutoff percentile has `P(X > t) ≤ exp(−c_adjusted N t²)`.
pub fn tail_fit_holds(fit: &TailFit, samples: &[f64]) -> bool {
    if !(fit.c_adjusted > 0.0) {
        return false;
    }
    let t_cut = quantile(samples, fit.percentile_cutoff / 100.0);
    let nf = fit.n as f64;
    samples.iter().filter(|&&t| t > 0.0 && t <= t_cut).all(|&t| {
        let bound = (-fit.c_adjusted * nf * t * t).exp();
        ccdf_at(samples, t) <= bound * (1.0 + 1e-12)
    })
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

fn check_bound_args(t: f64, n: usize) -> Result<()> {
    if !(t > 0.0) {
        return Err(QfimError::InvalidArgument(format!("t must be positive, got {t}")));
    }
    if n < 2 {
        return Err(QfimError::InvalidArgument(format!("N must be >= 2, got {n}")));
    }
    Ok(())
}

/// `min(1, 2m² exp(−(N−1)t²/120))`, the max-norm tail bound.
pub fn max_norm_tail_bound(t: f64, n: usize, m: usize) -> Result<f64> {
    check_bound_args(t, n)?;
    let mf = m as f64;
    Ok((2.0 * mf * mf * (-((n - 1) as f64) * t * t / 120.0).exp()).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusBound {
    /// Relative error level `t + 16√(m/(N−1))` the probability refers to.
    pub threshold: f64,
    pub probability: f64,
}

pub fn frobenius_tail_bound(t: f64, n: usize, m: usize) -> Result<FrobeniusBound> {
    check_bound_args(t, n)?;
    let offset = 16.0 * (m as f64 / (n - 1) as f64).sqrt();
    Ok(FrobeniusBound { threshold: t + offset, probability: (-((n - 1) as f64) * t * t / 120.0).exp().min(1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueBound {
    /// `N ≥ 10⁵ m / ε²`.
    pub precondition_met: bool,
    /// `(ε√(N−1) − 285√m)² / 30`.
    pub failure_exponent: f64,
    /// Lower bound on the probability of the two-sided Loewner sandwich, clipped to `[0, 1]`.
    pub success_probability: f64,
}

pub fn eigenvalue_sandwich_bound(epsilon: f64, n: usize, m: usize) -> Result<EigenvalueBound> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(QfimError::InvalidArgument(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    if n < 2 {
        return Err(QfimError::InvalidArgument(format!("N must be >= 2, got {n}")));
    }
    let mf = m as f64;
    let precondition_met = n as f64 >= 1e5 * mf / (epsilon * epsilon);
    let gap = epsilon * ((n - 1) as f64).sqrt() - 285.0 * mf.sqrt();
    let failure_exponent = gap * gap / 30.0;
    // Below the crossover the printed exponent grows as the gap shrinks, which carries no information.
    let success_probability = if gap > 0.0 { (1.0 - (-failure_exponent).exp()).clamp(0.0, 1.0) } else { 0.0 };
    Ok(EigenvalueBound { precondition_met, failure_exponent, success_probability })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub t: f64,
    pub threshold: f64,
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub grid_points: usize,
    /// Grid points where the bound is below 1.
    pub informative_points: usize,
    /// Informative points that also have a positive empirical tail.
    pub nontrivial_points: usize,
    pub violations: Vec<BoundViolation>,
    /// Largest empirical/bound ratio over informative points.
    pub max_ratio: Option<f64>,
    /// The bound never constrains the observed errors at this (N, m).
    pub vacuous: bool,
}

impl BoundCheck {
    pub fn status(&self) -> &'static str {
        if !self.violations.is_empty() {
            "violated"
        } else if self.vacuous {
            "vacuous at this scale"
        } else {
            "holds"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub m: usize,
    pub num_samples: usize,
    pub frobenius_offset: f64,
    pub max_norm: BoundCheck,
    pub frobenius: BoundCheck,
}

pub const BOUND_GRID_POINTS: usize = 200;

/// Compare empirical tails `P(err ≥ ·)` with the max-norm and Frobenius bounds
/// on a grid spanning `(0, 1.5·max error]`.
pub fn bound_violation_report(rel_max: &[f64], rel_frob: &[f64], n: usize, m: usize) -> Result<BoundReport> {
    if rel_max.is_empty() || rel_frob.is_empty() {
        return Err(QfimError::TooFewSamples { needed: 1, got: 0 });
    }
    if n < 2 {
        return Err(QfimError::InvalidArgument(format!("N must be >= 2, got {n}")));
    }
    let tail_ge = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x >= t).count() as f64 / xs.len() as f64;
    let grid = |xs: &[f64]| {
        let top = 1.5 * xs.iter().copied().fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
        (1..=BOUND_GRID_POINTS).map(move |i| top * i as f64 / BOUND_GRID_POINTS as f64)
    };

    let max_norm = check_grid(grid(rel_max).map(|t| {
        let bound = max_norm_tail_bound(t, n, m).expect("t > 0, N >= 2");
        (t, t, tail_ge(rel_max, t), bound)
    }));
    let frobenius = check_grid(grid(rel_frob).map(|t| {
        let b = frobenius_tail_bound(t, n, m).expect("t > 0, N >= 2");
        (t, b.threshold, tail_ge(rel_frob, b.threshold), b.probability)
    }));
    Ok(BoundReport {
        n,
        m,
        num_samples: rel_frob.len(),
        frobenius_offset: 16.0 * (m as f64 / (n - 1) as f64).sqrt(),
        max_norm,
        frobenius,
    })
}

fn check_grid(points: impl Iterator<Item = (f64, f64, f64, f64)>) -> BoundCheck {
    let mut check = BoundCheck {
        grid_points: 0,
        informative_points: 0,
        nontrivial_points: 0,
        violations: Vec::new(),
        max_ratio: None,
        vacuous: true,
    };
    for (t, threshold, empirical, bound) in points {
        check.grid_points += 1;
        if bound >= 1.0 {
            continue;
        }
        check.informative_points += 1;
        if empirical > 0.0 {
            check.nontrivial_points += 1;
            check.vacuous = false;
        }
        let ratio = empirical / bound;
        check.max_ratio = Some(check.max_ratio.map_or(ratio, |r: f64| r.max(ratio)));
        if empirical > bound {
            check.violations.push(BoundViolation { t, threshold, empirical, bound });
        }
    }
    check
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichSummary {
    pub n: usize,
    pub m: usize,
    pub num_samples: usize,
    /// Smallest ε for which every sample satisfies the two-sided bound.
    pub smallest_passing_epsilon: f64,
    pub median_epsilon: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub rank_used: usize,
    /// Tightest ε of each sample, in sample order.
    #[serde(skip)]
    pub per_sample_epsilon: Vec<f64>,
}

impl SandwichSummary {
    /// Number of samples satisfying the sandwich at `epsilon`.
    pub fn samples_within(&self, epsilon: f64) -> usize {
        self.per_sample_epsilon.iter().filter(|&&e| e <= epsilon).count()
    }
}

/// Per-sample tightest ε of the Loewner sandwich around `Q/2`, summarized.
pub fn sandwich_summary(
    n: usize,
    m: usize,
    theta: &ThetaPolicy,
    num_samples: usize,
    master_seed: u64,
    options: SamplerOptions,
    workers: Option<usize>,
) -> Result<SandwichSummary> {
    if num_samples == 0 {
        return Err(QfimError::TooFewSamples { needed: 1, got: 0 });
    }
    let ansatz = build_ansatz(n, m, master_seed)?;
    let theta = theta.resolve(m, master_seed)?;
    let sampler = CfimSampler::from_family(&ansatz, &theta, master_seed, options)?;
    sampler.ensure_nondegenerate()?;
    let acc = accumulate(&sampler, num_samples, true, workers);
    let q = sampler.qfim();
    let mut eps = Vec::with_capacity(num_samples);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut rank = 0;
    for f in acc.samples.unwrap_or_default() {
        let (a, b, r) = sandwich_ratios(&f, q, DEFAULT_RANK_TOL)?;
        lo = lo.min(a);
        hi = hi.max(b);
        rank = r;
        eps.push(((1.0 - a).max(b - 1.0) / 2.0).max(0.0));
    }
    Ok(SandwichSummary {
        n,
        m,
        num_samples,
        smallest_passing_epsilon: eps.iter().copied().fold(0.0, f64::max),
        median_epsilon: quantile(&eps, 0.5),
        min_ratio: lo,
        max_ratio: hi,
        rank_used: rank,
        per_sample_epsilon: eps,
    })
}
