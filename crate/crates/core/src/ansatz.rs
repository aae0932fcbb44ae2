//! Parameterized pure-state families with exact Jacobians.
//!
//! The reference family is a product of exponentials
//! `ψ_θ = V_m ⋯ V_1 ψ₀`, `V_j = exp(−iθ_j H_j)`, with seeded GUE generators.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QfimError, Result};
use crate::haar::{complex_gaussian, SeededStream, ANSATZ_STREAM, THETA_STREAM};
use crate::linalg::{hermitian_deviation, hermitian_eig, ComplexMatrix, ComplexVector, RealVector, C64, HERMITIAN_TOL};

/// A normalized state together with `∂ψ/∂θ_j` as column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateWithJacobian {
    pub state: ComplexVector,
    pub jacobian: ComplexMatrix,
}

impl StateWithJacobian {
    pub fn dim(&self) -> usize {
        self.state.len()
    }

    pub fn num_params(&self) -> usize {
        self.jacobian.ncols()
    }

    /// Apply a fixed unitary to both the state and every derivative.
    pub fn rotated(&self, w: &ComplexMatrix) -> StateWithJacobian {
        StateWithJacobian { state: w * &self.state, jacobian: w * &self.jacobian }
    }
}

pub trait ParamFamily: Sync {
    fn dim(&self) -> usize;
    fn num_params(&self) -> usize;
    fn evaluate(&self, theta: &[f64]) -> Result<StateWithJacobian>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    #[serde(rename = "type")]
    pub kind: AnsatzKind,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnsatzKind {
    #[serde(rename = "product-exp")]
    ProductExp,
}

impl AnsatzSpec {
    pub fn product_exp(n: usize, m: usize, seed: u64) -> Self {
        Self { kind: AnsatzKind::ProductExp, n, m, seed }
    }

    pub fn build(&self) -> Result<ProductExponentialAnsatz> {
        build_ansatz(self.n, self.m, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct ProductExponentialAnsatz {
    pub dim_n: usize,
    pub num_params: usize,
    pub generators: Vec<ComplexMatrix>,
    pub base_state: ComplexVector,
    pub seed: u64,
    eig: Vec<(RealVector, ComplexMatrix)>,
}

pub fn build_ansatz(n: usize, m: usize, seed: u64) -> Result<ProductExponentialAnsatz> {
    if n < 2 {
        return Err(QfimError::InvalidArgument(format!("ansatz needs N >= 2, got {n}")));
    }
    if m < 1 {
        return Err(QfimError::InvalidArgument("ansatz needs m >= 1".into()));
    }
    let mut rng = SeededStream { master_seed: seed, stream_id: ANSATZ_STREAM }.rng();
    let scale = 1.0 / (2.0 * (n as f64).sqrt());
    let mut generators = Vec::with_capacity(m);
    for _ in 0..m {
        let g: Vec<C64> = (0..n * n).map(|_| complex_gaussian(&mut rng)).collect();
        let g = ComplexMatrix::from_vec(n, n, g);
        // Entry-wise so that H[(i,k)] == conj(H[(k,i)]) holds bit-for-bit.
        let h = ComplexMatrix::from_fn(n, n, |i, k| (g[(i, k)] + g[(k, i)].conj()) * scale);
        generators.push(h);
    }
    let psi: Vec<C64> = (0..n).map(|_| complex_gaussian(&mut rng)).collect();
    let mut base_state = ComplexVector::from_vec(psi);
    let norm = base_state.norm();
    base_state /= C64::new(norm, 0.0);
    let mut ansatz = ProductExponentialAnsatz::from_parts(generators, base_state)?;
    ansatz.seed = seed;
    Ok(ansatz)
}

impl ProductExponentialAnsatz {
    /// Build from explicit generators; `seed` is recorded as 0.
    pub fn from_parts(generators: Vec<ComplexMatrix>, base_state: ComplexVector) -> Result<Self> {
        let n = base_state.len();
        if generators.is_empty() {
            return Err(QfimError::InvalidArgument("need at least one generator".into()));
        }
        let norm = base_state.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(QfimError::InvalidArgument(format!("base state norm {norm} != 1")));
        }
        let mut eig = Vec::with_capacity(generators.len());
        for h in &generators {
            if h.nrows() != n || h.ncols() != n {
                return Err(QfimError::DimensionMismatch { expected: n, actual: h.nrows() });
            }
            let dev = hermitian_deviation(h);
            if dev > HERMITIAN_TOL {
                return Err(QfimError::NotHermitian { deviation: dev });
            }
            eig.push(hermitian_eig(h)?);
        }
        Ok(Self { dim_n: n, num_params: generators.len(), generators, base_state, seed: 0, eig })
    }

    pub fn spec(&self) -> AnsatzSpec {
        AnsatzSpec::product_exp(self.dim_n, self.num_params, self.seed)
    }

    /// `exp(−iθ H_j) v` through the cached eigendecomposition.
    fn apply_factor(&self, j: usize, theta: f64, v: &ComplexVector) -> ComplexVector {
        let (values, vectors) = &self.eig[j];
        let mut coeffs = vectors.ad_mul(v);
        for (c, l) in coeffs.iter_mut().zip(values.iter()) {
            *c *= C64::from_polar(1.0, -theta * l);
        }
        vectors * coeffs
    }
}

impl ParamFamily for ProductExponentialAnsatz {
    fn dim(&self) -> usize {
        self.dim_n
    }

    fn num_params(&self) -> usize {
        self.num_params
    }

    fn evaluate(&self, theta: &[f64]) -> Result<StateWithJacobian> {
        check_theta(theta, self.num_params)?;
        let m = self.num_params;
        let mut partial = Vec::with_capacity(m);
        let mut state = self.base_state.clone();
        for (j, &t) in theta.iter().enumerate() {
            state = self.apply_factor(j, t, &state);
            partial.push(state.clone());
        }
        let minus_i = C64::new(0.0, -1.0);
        let mut jacobian = ComplexMatrix::zeros(self.dim_n, m);
        for (j, (gen, prefix)) in self.generators.iter().zip(&partial).enumerate() {
            // (−iH_j) commutes with V_j, so it acts on V_j⋯V_1ψ₀.
            let mut col = (gen * prefix) * minus_i;
            for (k, &t) in theta.iter().enumerate().skip(j + 1) {
                col = self.apply_factor(k, t, &col);
            }
            jacobian.set_column(j, &col);
        }
        Ok(StateWithJacobian { state, jacobian })
    }
}

fn check_theta(theta: &[f64], m: usize) -> Result<()> {
    if theta.len() != m {
        return Err(QfimError::DimensionMismatch { expected: m, actual: theta.len() });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(QfimError::NonFinite("theta"));
    }
    Ok(())
}

/// Central finite-difference Jacobian, used as an oracle for `evaluate`.
pub fn jacobian_fd<F: ParamFamily + ?Sized>(family: &F, theta: &[f64], step: f64) -> Result<ComplexMatrix> {
    if !(step > 0.0) {
        return Err(QfimError::InvalidArgument(format!("step must be positive, got {step}")));
    }
    check_theta(theta, family.num_params())?;
    let mut out = ComplexMatrix::zeros(family.dim(), family.num_params());
    let mut shifted = theta.to_vec();
    for j in 0..theta.len() {
        shifted[j] = theta[j] + step;
        let plus = family.evaluate(&shifted)?.state;
        shifted[j] = theta[j] - step;
        let minus = family.evaluate(&shifted)?.state;
        shifted[j] = theta[j];
        out.set_column(j, &((plus - minus) / C64::new(2.0 * step, 0.0)));
    }
    Ok(out)
}

/// `θ ~ Uniform[−π, π]^m` from the seed's reserved θ stream.
pub fn seeded_theta(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededStream { master_seed: seed, stream_id: THETA_STREAM }.rng();
    (0..m).map(|_| rng.random_range(-PI..PI)).collect()
}

/// `ψ_θ = e^{iθ} ψ₀`: every basis sees θ-independent probabilities.
#[derive(Debug, Clone)]
pub struct GlobalPhaseFamily {
    pub base_state: ComplexVector,
}

impl ParamFamily for GlobalPhaseFamily {
    fn dim(&self) -> usize {
        self.base_state.len()
    }

    fn num_params(&self) -> usize {
        1
    }

    fn evaluate(&self, theta: &[f64]) -> Result<StateWithJacobian> {
        check_theta(theta, 1)?;
        let phase = C64::from_polar(1.0, theta[0]);
        let state = &self.base_state * phase;
        let deriv = &state * C64::new(0.0, 1.0);
        Ok(StateWithJacobian { state, jacobian: ComplexMatrix::from_columns(&[deriv]) })
    }
}

/// `ψ_θ = (cos θ, sin θ)`, whose QFIM is identically 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct CircleFamily;

impl ParamFamily for CircleFamily {
    fn dim(&self) -> usize {
        2
    }

    fn num_params(&self) -> usize {
        1
    }

    fn evaluate(&self, theta: &[f64]) -> Result<StateWithJacobian> {
        check_theta(theta, 1)?;
        let (s, c) = theta[0].sin_cos();
        let state = ComplexVector::from_vec(vec![C64::new(c, 0.0), C64::new(s, 0.0)]);
        let deriv = ComplexVector::from_vec(vec![C64::new(-s, 0.0), C64::new(c, 0.0)]);
        Ok(StateWithJacobian { state, jacobian: ComplexMatrix::from_columns(&[deriv]) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs_diff_complex, spectral_norm};

    #[test]
    fn build_is_deterministic() {
        let a = build_ansatz(2, 1, 7).unwrap();
        let b = build_ansatz(2, 1, 7).unwrap();
        assert_eq!(a.generators, b.generators);
        assert_eq!(a.base_state, b.base_state);
        let c = build_ansatz(2, 1, 8).unwrap();
        assert_ne!(a.generators, c.generators);
    }

    #[test]
    fn generators_are_exactly_hermitian() {
        let a = build_ansatz(9, 3, 5).unwrap();
        for h in &a.generators {
            assert_eq!(hermitian_deviation(h), 0.0);
        }
        assert!((a.base_state.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn generator_spectral_norm_is_order_one() {
        let a = build_ansatz(64, 10, 1).unwrap();
        for h in &a.generators {
            let s = spectral_norm(h);
            assert!((0.5..=4.0).contains(&s), "spectral norm {s}");
        }
    }

    #[test]
    fn rejects_small_dimension() {
        assert!(build_ansatz(1, 3, 0).is_err());
        assert!(build_ansatz(4, 0, 0).is_err());
    }

    #[test]
    fn theta_zero_gives_base_state() {
        let a = build_ansatz(6, 3, 2).unwrap();
        let swj = a.evaluate(&[0.0; 3]).unwrap();
        assert!((&swj.state - &a.base_state).norm() < 1e-14);
        for j in 0..3 {
            let expected = (&a.generators[j] * &a.base_state) * C64::new(0.0, -1.0);
            assert!((swj.jacobian.column(j) - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn identity_generator_is_global_phase() {
        let psi0 = ComplexVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let a = ProductExponentialAnsatz::from_parts(vec![ComplexMatrix::identity(2, 2)], psi0.clone()).unwrap();
        let t = 0.9;
        let swj = a.evaluate(&[t]).unwrap();
        let expected = &psi0 * C64::from_polar(1.0, -t);
        assert!((&swj.state - &expected).norm() < 1e-14);
        assert!((swj.jacobian.column(0) - &expected * C64::new(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let a = build_ansatz(8, 3, 3).unwrap();
        let theta = [0.4, -1.2, 2.5];
        let swj = a.evaluate(&theta).unwrap();
        let fd = jacobian_fd(&a, &theta, 1e-5).unwrap();
        assert!(max_abs_diff_complex(&swj.jacobian, &fd) < 1e-8);
    }

    #[test]
    fn fd_error_decays_quadratically() {
        let a = build_ansatz(8, 3, 4).unwrap();
        let theta = [0.3, 0.2, -0.7];
        let exact = a.evaluate(&theta).unwrap().jacobian;
        let e3 = max_abs_diff_complex(&exact, &jacobian_fd(&a, &theta, 1e-3).unwrap());
        let e4 = max_abs_diff_complex(&exact, &jacobian_fd(&a, &theta, 1e-4).unwrap());
        // Step ratio 10 gives an error ratio near 100.
        assert!(e3 / e4 > 50.0 && e3 / e4 < 200.0, "ratio {}", e3 / e4);
    }

    #[test]
    fn fd_on_global_phase() {
        let psi0 = ComplexVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let fam = GlobalPhaseFamily { base_state: psi0.clone() };
        let fd = jacobian_fd(&fam, &[0.0], 1e-5).unwrap();
        assert!((fd.column(0) - &psi0 * C64::new(0.0, 1.0)).norm() < 1e-10);
        assert!(jacobian_fd(&fam, &[0.0], 0.0).is_err());
    }

    #[test]
    fn non_finite_theta_rejected() {
        let a = build_ansatz(3, 2, 0).unwrap();
        assert!(matches!(a.evaluate(&[0.0, f64::NAN]), Err(QfimError::NonFinite(_))));
        assert!(a.evaluate(&[0.0]).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = AnsatzSpec::product_exp(8, 3, 11);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"type":"product-exp","n":8,"m":3,"seed":11}"#);
        let back: AnsatzSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn seeded_theta_in_range_and_deterministic() {
        let a = seeded_theta(10, 5);
        assert_eq!(a, seeded_theta(10, 5));
        assert!(a.iter().all(|t| (-PI..PI).contains(t)));
    }
}
