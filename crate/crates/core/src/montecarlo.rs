//! Monte Carlo estimation of the QFIM from Haar-random-basis CFIMs.
//!
//! A [`CfimSampler`] fixes one state and its Jacobian; sample `i` is the
//! CFIM under the Haar basis drawn from `substream(master_seed, i)`.
//! Because `F^U` only sees `U*` restricted to `span{ψ, ∂₁ψ, …, ∂_mψ}`,
//! the default route draws an `N×r` Haar isometry (the first `r` columns of
//! the full Haar unitary on the same stream) instead of an `N×N` unitary.
//! That is exactly the CFIM under the Haar basis `U = R W*`, where `W` is the
//! full unitary of the stream and `R` is any fixed unitary whose first `r`
//! columns span the tangent space.

use serde::{Deserialize, Serialize};

use crate::ansatz::{ParamFamily, StateWithJacobian};
use crate::error::{QfimError, Result};
use crate::fisher::{
    cfim_definition_from_amplitudes, cfim_projection_from_amplitudes, qgt, variance_predictor, Qgt,
    DEFAULT_PROB_FLOOR,
};
use crate::haar::{sample_haar_isometry, sample_haar_unitary, substream};
use crate::linalg::{max_abs, spectral_norm_sym, symmetric_eig, symmetrize, ComplexMatrix, RealMatrix};
use crate::parallel::{chunked_reduce, with_workers, DEFAULT_CHUNK};

/// Which of the two equivalent CFIM formulas evaluates each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfimForm {
    #[default]
    Projection,
    Definition,
}

/// How the Haar basis of each sample is materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisRoute {
    /// `N×r` Haar isometry acting on an orthonormal frame of the tangent space.
    #[default]
    Isometry,
    /// Full `N×N` Haar unitary applied to the state and Jacobian.
    FullUnitary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub prob_floor: f64,
    pub form: CfimForm,
    pub route: BasisRoute,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { prob_floor: DEFAULT_PROB_FLOOR, form: CfimForm::default(), route: BasisRoute::default() }
    }
}

pub struct CfimSampler {
    pub swj: StateWithJacobian,
    pub qgt: Qgt,
    pub master_seed: u64,
    pub options: SamplerOptions,
    half_qfim: RealMatrix,
    frame: ComplexMatrix,
    coords: ComplexMatrix,
}

impl CfimSampler {
    pub fn new(swj: StateWithJacobian, master_seed: u64, options: SamplerOptions) -> Self {
        let n = swj.dim();
        let m = swj.num_params();
        let mut stacked = ComplexMatrix::zeros(n, m + 1);
        stacked.set_column(0, &swj.state);
        stacked.columns_mut(1, m).copy_from(&swj.jacobian);
        let qr = stacked.qr();
        let frame = qr.q();
        let coords = qr.r();
        let qgt = qgt(&swj);
        let half_qfim = &qgt.real_part * 0.5;
        Self { swj, qgt, master_seed, options, half_qfim, frame, coords }
    }

    pub fn from_family<F: ParamFamily + ?Sized>(family: &F, theta: &[f64], master_seed: u64, options: SamplerOptions) -> Result<Self> {
        Ok(Self::new(family.evaluate(theta)?, master_seed, options))
    }

    pub fn dim(&self) -> usize {
        self.swj.dim()
    }

    pub fn num_params(&self) -> usize {
        self.swj.num_params()
    }

    pub fn qfim(&self) -> &RealMatrix {
        &self.qgt.real_part
    }

    /// `E[F^U] = Q/2`.
    pub fn expected_cfim(&self) -> &RealMatrix {
        &self.half_qfim
    }

    /// Orthonormal frame `B` of `span{ψ, ∂ψ}`, with `[ψ | ∂ψ] = B · coords`.
    pub fn tangent_frame(&self) -> (&ComplexMatrix, &ComplexMatrix) {
        (&self.frame, &self.coords)
    }

    fn amplitudes(&self, index: usize) -> (ComplexMatrix, usize) {
        let stream = substream(self.master_seed, index as u64);
        let n = self.dim();
        let m = self.num_params();
        match self.options.route {
            BasisRoute::Isometry => {
                let w = sample_haar_isometry(n, self.frame.ncols(), &stream).expect("frame rank within 1..=N");
                (w * &self.coords, m)
            }
            BasisRoute::FullUnitary => {
                let u = sample_haar_unitary(n, &stream).expect("N >= 1");
                let mut stacked = ComplexMatrix::zeros(n, m + 1);
                stacked.set_column(0, &u.ad_mul(&self.swj.state));
                stacked.columns_mut(1, m).copy_from(&u.ad_mul(&self.swj.jacobian));
                (stacked, m)
            }
        }
    }

    /// CFIM of sample `index`.
    pub fn sample(&self, index: usize) -> RealMatrix {
        let (amps, m) = self.amplitudes(index);
        let phi = amps.column(0).into_owned();
        let dphi = amps.columns(1, m).into_owned();
        let (f, _, _) = match self.options.form {
            CfimForm::Projection => cfim_projection_from_amplitudes(&phi, &dphi, self.options.prob_floor),
            CfimForm::Definition => cfim_definition_from_amplitudes(&phi, &dphi, self.options.prob_floor),
        };
        f
    }

    pub fn ensure_nondegenerate(&self) -> Result<()> {
        let norm = self.qfim().norm();
        if norm < 1e-12 {
            return Err(QfimError::DegenerateFamily { norm });
        }
        Ok(())
    }
}

/// Streaming accumulator: Welford mean/M2 plus per-sample scalar errors.
#[derive(Debug, Clone)]
pub struct CfimAccumulator {
    pub count: usize,
    pub mean: RealMatrix,
    pub m2: RealMatrix,
    pub rel_frob: Vec<f64>,
    pub rel_max: Vec<f64>,
    pub samples: Option<Vec<RealMatrix>>,
}

impl CfimAccumulator {
    pub fn new(m: usize, retain: bool) -> Self {
        Self {
            count: 0,
            mean: RealMatrix::zeros(m, m),
            m2: RealMatrix::zeros(m, m),
            rel_frob: Vec::new(),
            rel_max: Vec::new(),
            samples: retain.then(Vec::new),
        }
    }

    pub fn push(&mut self, f: RealMatrix, expected: &RealMatrix) {
        let diff = &f - expected;
        self.rel_frob.push(diff.norm() / expected.norm());
        self.rel_max.push(max_abs(&diff) / max_abs(expected));
        self.count += 1;
        let delta = &f - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = &f - &self.mean;
        self.m2 += delta.component_mul(&delta2);
        if let Some(s) = self.samples.as_mut() {
            s.push(f);
        }
    }

    /// Chan et al. pairwise merge; `other` holds the later sample indices.
    pub fn merge(mut self, other: Self) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let total = na + nb;
        let delta = &other.mean - &self.mean;
        self.mean += &delta * (nb / total);
        self.m2 += &other.m2 + delta.component_mul(&delta) * (na * nb / total);
        self.count += other.count;
        self.rel_frob.extend(other.rel_frob);
        self.rel_max.extend(other.rel_max);
        if let (Some(a), Some(b)) = (self.samples.as_mut(), other.samples) {
            a.extend(b);
        }
        self
    }

    pub fn variance(&self) -> Option<RealMatrix> {
        (self.count >= 2).then(|| &self.m2 / (self.count - 1) as f64)
    }
}

/// Draw samples `0..k` in parallel and reduce deterministically.
pub fn accumulate(sampler: &CfimSampler, k: usize, retain: bool, workers: Option<usize>) -> CfimAccumulator {
    let m = sampler.num_params();
    let expected = sampler.expected_cfim();
    with_workers(workers, || {
        chunked_reduce(
            k,
            DEFAULT_CHUNK,
            || CfimAccumulator::new(m, retain),
            |acc, i| acc.push(sampler.sample(i), expected),
            CfimAccumulator::merge,
        )
    })
    .unwrap_or_else(|| CfimAccumulator::new(m, retain))
}

mod matrix_rows {
    use super::RealMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &RealMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RealMatrix, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(RealMatrix::from_row_iterator(n, m, rows.into_iter().flatten()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub n: usize,
    pub m: usize,
    pub k_samples: usize,
    pub master_seed: u64,
    pub theta: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub qfim: RealMatrix,
    #[serde(with = "matrix_rows")]
    pub mean_cfim: RealMatrix,
    #[serde(with = "matrix_rows")]
    pub empirical_variance: RealMatrix,
    #[serde(with = "matrix_rows")]
    pub predicted_variance: RealMatrix,
    pub rel_err_max: f64,
    pub rel_err_frob: f64,
    pub per_sample_rel_frob: Vec<f64>,
    pub options: SamplerOptions,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EstimateConfig {
    pub sampler: SamplerOptions,
    pub workers: Option<usize>,
}

pub fn estimate_qfim<F: ParamFamily + ?Sized>(
    family: &F,
    theta: &[f64],
    k: usize,
    master_seed: u64,
    config: &EstimateConfig,
) -> Result<EstimationReport> {
    if k == 0 {
        return Err(QfimError::TooFewSamples { needed: 1, got: 0 });
    }
    let sampler = CfimSampler::from_family(family, theta, master_seed, config.sampler)?;
    sampler.ensure_nondegenerate()?;
    let acc = accumulate(&sampler, k, false, config.workers);
    let m = sampler.num_params();
    let (rel_err_max, rel_err_frob, _) = error_metrics(&acc.mean, sampler.qfim())?;
    Ok(EstimationReport {
        n: sampler.dim(),
        m,
        k_samples: k,
        master_seed,
        theta: theta.to_vec(),
        qfim: sampler.qfim().clone(),
        empirical_variance: acc.variance().unwrap_or_else(|| RealMatrix::zeros(m, m)),
        predicted_variance: variance_predictor(&sampler.qgt, sampler.dim())?,
        mean_cfim: symmetrize(&acc.mean),
        rel_err_max,
        rel_err_frob,
        per_sample_rel_frob: acc.rel_frob,
        options: config.sampler,
    })
}

/// Relative errors of `F` against `Q/2` in max, Frobenius and spectral norm.
pub fn error_metrics(f: &RealMatrix, q: &RealMatrix) -> Result<(f64, f64, f64)> {
    if f.shape() != q.shape() {
        return Err(QfimError::DimensionMismatch { expected: q.nrows(), actual: f.nrows() });
    }
    let half = q * 0.5;
    let diff = f - &half;
    let denom_max = max_abs(&half);
    let denom_frob = half.norm();
    let denom_spec = spectral_norm_sym(&half)?;
    if denom_max == 0.0 {
        return Err(QfimError::ZeroDenominator("max"));
    }
    if denom_frob == 0.0 {
        return Err(QfimError::ZeroDenominator("Frobenius"));
    }
    if denom_spec == 0.0 {
        return Err(QfimError::ZeroDenominator("spectral"));
    }
    let spec = spectral_norm_sym(&symmetrize(&diff))?;
    Ok((max_abs(&diff) / denom_max, diff.norm() / denom_frob, spec / denom_spec))
}

/// Unbiased entrywise sample variance.
pub fn empirical_variance(samples: &[RealMatrix]) -> Result<RealMatrix> {
    if samples.len() < 2 {
        return Err(QfimError::TooFewSamples { needed: 2, got: samples.len() });
    }
    let shape = samples[0].shape();
    if samples.iter().any(|s| s.shape() != shape) {
        return Err(QfimError::DimensionMismatch { expected: shape.0, actual: 0 });
    }
    let k = samples.len() as f64;
    let mean = samples.iter().fold(RealMatrix::zeros(shape.0, shape.1), |a, s| a + s) / k;
    let ss = samples.iter().fold(RealMatrix::zeros(shape.0, shape.1), |a, s| {
        let d = s - &mean;
        a + d.component_mul(&d)
    });
    Ok(ss / (k - 1.0))
}

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichResult {
    pub epsilon: f64,
    pub passed: bool,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub rank_used: usize,
}

impl SandwichResult {
    /// Smallest ε for which this sample would pass.
    pub fn tightest_epsilon(&self) -> f64 {
        ((1.0 - self.min_ratio).max(self.max_ratio - 1.0) / 2.0).max(0.0)
    }
}

/// Generalized eigenvalue range of `F` relative to `Q/2`:
/// `(1−2ε) Q/2 ⪯ F ⪯ (1+2ε) Q/2` restricted to the range of `Q`.
pub fn sandwich_check(f: &RealMatrix, q: &RealMatrix, epsilon: f64, rank_tol: f64) -> Result<SandwichResult> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(QfimError::InvalidArgument(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let (min_ratio, max_ratio, rank_used) = sandwich_ratios(f, q, rank_tol)?;
    let passed = min_ratio >= 1.0 - 2.0 * epsilon && max_ratio <= 1.0 + 2.0 * epsilon;
    Ok(SandwichResult { epsilon, passed, min_ratio, max_ratio, rank_used })
}

/// Extreme eigenvalues of `(Q/2)^{-1/2} F (Q/2)^{-1/2}` on the range of `Q`.
pub fn sandwich_ratios(f: &RealMatrix, q: &RealMatrix, rank_tol: f64) -> Result<(f64, f64, usize)> {
    if f.shape() != q.shape() || q.nrows() != q.ncols() {
        return Err(QfimError::DimensionMismatch { expected: q.nrows(), actual: f.nrows() });
    }
    let half = q * 0.5;
    let (values, vectors) = symmetric_eig(&half)?;
    let lambda_max = values.iter().copied().fold(0.0_f64, f64::max);
    let lambda_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if lambda_max <= 0.0 {
        return Err(QfimError::NotPsd { min_eigenvalue: lambda_min });
    }
    if lambda_min < -1e-10 * lambda_max {
        return Err(QfimError::NotPsd { min_eigenvalue: lambda_min });
    }
    let cutoff = rank_tol * lambda_max;
    let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] > cutoff).collect();
    let kernel: Vec<usize> = (0..values.len()).filter(|&i| values[i] <= cutoff).collect();
    let fsym = symmetrize(f);
    if !kernel.is_empty() {
        let vk = vectors.select_columns(&kernel);
        let leak = max_abs(&(vk.transpose() * &fsym * &vk));
        let scale = lambda_max.max(max_abs(&fsym));
        if leak > 1e-8 * scale {
            return Err(QfimError::KernelLeak { weight: leak });
        }
    }
    let mut b = vectors.select_columns(&keep);
    for (c, &i) in keep.iter().enumerate() {
        let s = 1.0 / values[i].sqrt();
        b.column_mut(c).scale_mut(s);
    }
    let pencil = b.transpose() * &fsym * &b;
    let (ratios, _) = symmetric_eig(&pencil)?;
    Ok((ratios[0], ratios[ratios.len() - 1], keep.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_ansatz, seeded_theta, CircleFamily, GlobalPhaseFamily};
    use crate::linalg::{max_abs_diff, ComplexVector, C64};

    fn spd() -> RealMatrix {
        RealMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 0.9])
    }

    #[test]
    fn error_metric_examples() {
        let q = spd();
        let (a, b, c) = error_metrics(&(&q * 0.5), &q).unwrap();
        assert_eq!((a, b, c), (0.0, 0.0, 0.0));
        let (a, b, c) = error_metrics(&q, &q).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15 && (c - 1.0).abs() < 1e-14);
        let eps = 1e-3;
        let mut f = &q * 0.5;
        f[(0, 0)] += eps;
        let (a, _, _) = error_metrics(&f, &q).unwrap();
        assert!((a - eps / 1.0).abs() < 1e-15);
        assert!(matches!(error_metrics(&q, &RealMatrix::zeros(3, 3)), Err(QfimError::ZeroDenominator(_))));
    }

    #[test]
    fn empirical_variance_examples() {
        let a = spd();
        let same = vec![a.clone(), a.clone(), a.clone()];
        assert!(max_abs(&empirical_variance(&same).unwrap()) < 1e-30);
        let b = RealMatrix::from_fn(3, 3, |i, j| (i as f64) - 0.5 * j as f64);
        let two = vec![a.clone(), &a + &b * 2.0];
        let v = empirical_variance(&two).unwrap();
        assert!(max_abs_diff(&v, &(b.component_mul(&b) * 2.0)) < 1e-12);
        assert!(empirical_variance(&[a]).is_err());
    }

    #[test]
    fn sandwich_examples() {
        let q = spd();
        let r = sandwich_check(&(&q * 0.5), &q, 0.1, DEFAULT_RANK_TOL).unwrap();
        assert!(r.passed && (r.min_ratio - 1.0).abs() < 1e-12 && (r.max_ratio - 1.0).abs() < 1e-12);
        assert_eq!(r.rank_used, 3);
        let eps = 0.2;
        let r = sandwich_check(&(&q * (0.5 * (1.0 + eps))), &q, eps, DEFAULT_RANK_TOL).unwrap();
        assert!(r.passed && (r.max_ratio - 1.0 - eps).abs() < 1e-12);
        for eps in [0.05, 0.25, 0.49] {
            let r = sandwich_check(&(&q * 2.0), &q, eps, DEFAULT_RANK_TOL).unwrap();
            assert!(!r.passed && (r.max_ratio - 4.0).abs() < 1e-12);
        }
        assert!(sandwich_check(&q, &q, 0.5, DEFAULT_RANK_TOL).is_err());
        assert!(sandwich_check(&q, &q, 0.0, DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn sandwich_on_rank_deficient_q() {
        let v = RealMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        let q = &v * v.transpose();
        let r = sandwich_check(&(&q * 0.5), &q, 0.1, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(r.rank_used, 2);
        let mut leaky = &q * 0.5;
        leaky += RealMatrix::identity(3, 3) * 1e-3;
        assert!(matches!(sandwich_check(&leaky, &q, 0.1, DEFAULT_RANK_TOL), Err(QfimError::KernelLeak { .. })));
        let not_psd = -&q;
        assert!(matches!(sandwich_check(&q, &not_psd, 0.1, DEFAULT_RANK_TOL), Err(QfimError::NotPsd { .. })));
    }

    #[test]
    fn sandwich_is_scale_consistent() {
        let q = spd();
        let f = RealMatrix::from_row_slice(3, 3, &[1.1, 0.1, 0.0, 0.1, 0.7, 0.05, 0.0, 0.05, 0.4]);
        let a = sandwich_check(&f, &q, 0.3, DEFAULT_RANK_TOL).unwrap();
        let b = sandwich_check(&(&f * 37.0), &(&q * 37.0), 0.3, DEFAULT_RANK_TOL).unwrap();
        assert!((a.min_ratio - b.min_ratio).abs() < 1e-12);
        assert!((a.max_ratio - b.max_ratio).abs() < 1e-12);
    }

    #[test]
    fn degenerate_family_is_rejected() {
        let fam = GlobalPhaseFamily { base_state: ComplexVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]) };
        let err = estimate_qfim(&fam, &[0.2], 10, 1, &EstimateConfig::default()).unwrap_err();
        assert!(matches!(err, QfimError::DegenerateFamily { .. }));
    }

    #[test]
    fn estimate_is_deterministic_and_worker_invariant() {
        let a = build_ansatz(8, 3, 2).unwrap();
        let theta = seeded_theta(3, 2);
        let one = estimate_qfim(&a, &theta, 600, 9, &EstimateConfig { workers: Some(1), ..Default::default() }).unwrap();
        let four = estimate_qfim(&a, &theta, 600, 9, &EstimateConfig { workers: Some(4), ..Default::default() }).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.per_sample_rel_frob.len(), 600);
    }

    #[test]
    fn accumulator_merge_matches_two_pass_variance() {
        let a = build_ansatz(6, 2, 5).unwrap();
        let sampler = CfimSampler::from_family(&a, &[0.3, 0.4], 3, SamplerOptions::default()).unwrap();
        let acc = accumulate(&sampler, 700, true, None);
        let samples = acc.samples.clone().unwrap();
        let direct = empirical_variance(&samples).unwrap();
        assert!(max_abs_diff(&acc.variance().unwrap(), &direct) < 1e-12);
        let mean = samples.iter().fold(RealMatrix::zeros(2, 2), |s, x| s + x) / 700.0;
        assert!(max_abs_diff(&acc.mean, &mean) < 1e-12);
    }

    #[test]
    fn circle_cfim_lies_in_unit_interval() {
        let sampler = CfimSampler::from_family(&CircleFamily, &[0.7], 4, SamplerOptions::default()).unwrap();
        for i in 0..200 {
            let f = sampler.sample(i)[(0, 0)];
            assert!((-1e-12..=1.0 + 1e-12).contains(&f), "{f}");
        }
    }

    #[test]
    fn report_json_round_trip() {
        let a = build_ansatz(4, 2, 1).unwrap();
        let r = estimate_qfim(&a, &[0.1, 0.2], 20, 3, &EstimateConfig::default()).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: EstimationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.qfim, r.qfim);
        assert_eq!(back.per_sample_rel_frob, r.per_sample_rel_frob);
    }
}
