//! Quantum geometric tensor, QFIM and CFIM in their complex and realified
//! forms, plus the closed-form variance of the Haar-random CFIM.
//!
//! Inner products are conjugate-linear in the first argument,
//! `⟨a, b⟩ = Σ conj(a_k) b_k`. Under this convention the realified
//! imaginary part reads `Im 𝒬 = −AᵀJA`.

use serde::{Deserialize, Serialize};

use crate::ansatz::StateWithJacobian;
use crate::error::{QfimError, Result};
use crate::haar::{sample_haar_unitary, substream, SeededStream};
use crate::linalg::{
    orthonormal_basis, project_onto_span, project_out, symmetrize, ComplexMatrix, ComplexVector, RealMatrix,
    RealVector, C64, DEFAULT_DROP_TOL,
};
use crate::parallel::{chunked_reduce, DEFAULT_CHUNK};
use crate::realrep::{apply_j, dk_j_vector, phi_columns, phi_vector};

pub const DEFAULT_PROB_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Qgt {
    pub matrix: ComplexMatrix,
    pub real_part: RealMatrix,
    pub imag_part: RealMatrix,
}

impl Qgt {
    pub fn num_params(&self) -> usize {
        self.real_part.nrows()
    }

    /// The QFIM `Q = Re 𝒬`.
    pub fn qfim(&self) -> &RealMatrix {
        &self.real_part
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisProvenance {
    Standard,
    Explicit,
    Haar(SeededStream),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cfim {
    pub matrix: RealMatrix,
    pub basis: BasisProvenance,
    /// Smallest outcome probability seen, including skipped outcomes.
    pub min_prob: f64,
    /// Outcomes at or below the probability floor that were left out.
    pub skipped_outcomes: usize,
}

pub fn qgt(swj: &StateWithJacobian) -> Qgt {
    let jac = &swj.jacobian;
    let gram = jac.ad_mul(jac);
    // overlaps[i] = ⟨∂_iψ, ψ⟩
    let overlaps = jac.ad_mul(&swj.state);
    let m = jac.ncols();
    let matrix = ComplexMatrix::from_fn(m, m, |i, j| gram[(i, j)] - overlaps[i] * overlaps[j].conj());
    let real_part = symmetrize(&matrix.map(|c| c.re));
    let imag = matrix.map(|c| c.im);
    let imag_part = (&imag - imag.transpose()) * 0.5;
    Qgt { matrix, real_part, imag_part }
}

/// `Q = (∂z)ᵀ (I − P(z, Jz)) ∂z` with `z = Φ(ψ)`.
pub fn qfim_realrep(swj: &StateWithJacobian) -> RealMatrix {
    let dz = phi_columns(&swj.jacobian);
    let (basis, _) = state_plane(swj);
    let a = project_out(&basis, &dz);
    symmetrize(&(dz.transpose() * a))
}

/// `A = (I − P(z, Jz)) ∂z`, the horizontal part of the realified Jacobian.
pub fn horizontal_jacobian(swj: &StateWithJacobian) -> RealMatrix {
    let dz = phi_columns(&swj.jacobian);
    let (basis, _) = state_plane(swj);
    project_out(&basis, &dz)
}

/// `AᵀJA`; equals `−Im 𝒬` under the conjugate-linear-first convention.
pub fn realified_imag_form(swj: &StateWithJacobian) -> RealMatrix {
    let a = horizontal_jacobian(swj);
    let mut ja = RealMatrix::zeros(a.nrows(), a.ncols());
    for j in 0..a.ncols() {
        ja.set_column(j, &apply_j(&a.column(j).into_owned()));
    }
    a.transpose() * ja
}

fn state_plane(swj: &StateWithJacobian) -> (RealMatrix, RealVector) {
    let z = phi_vector(&swj.state).data;
    let jz = apply_j(&z);
    let basis = orthonormal_basis(&[z.clone(), jz], DEFAULT_DROP_TOL).expect("equal lengths and positive tolerance");
    (basis, z)
}

/// `p_i = |(U*ψ)_i|²`.
pub fn measurement_probabilities(psi: &ComplexVector, u: &ComplexMatrix) -> Result<RealVector> {
    check_basis(psi.len(), u)?;
    Ok(u.ad_mul(psi).map(|c| c.norm_sqr()))
}

fn check_basis(n: usize, u: &ComplexMatrix) -> Result<()> {
    if u.nrows() != n || u.ncols() != n {
        return Err(QfimError::DimensionMismatch { expected: n, actual: u.nrows().max(u.ncols()) });
    }
    Ok(())
}

/// CFIM from measured amplitudes `φ = U*ψ` and their derivatives `φ' = U*∂ψ`,
/// via `F_ij = Σ_k ∂_i√p_k ∂_j√p_k`.
pub fn cfim_definition_from_amplitudes(phi: &ComplexVector, dphi: &ComplexMatrix, prob_floor: f64) -> (RealMatrix, f64, usize) {
    let m = dphi.ncols();
    let mut f = RealMatrix::zeros(m, m);
    let mut grad = vec![0.0; m];
    let mut min_prob = f64::INFINITY;
    let mut skipped = 0;
    for (k, amp) in phi.iter().enumerate() {
        let p = amp.norm_sqr();
        min_prob = min_prob.min(p);
        if p <= prob_floor {
            skipped += 1;
            continue;
        }
        let sqrt_p = p.sqrt();
        for (i, g) in grad.iter_mut().enumerate() {
            *g = (amp.conj() * dphi[(k, i)]).re / sqrt_p;
        }
        for i in 0..m {
            for j in 0..m {
                f[(i, j)] += grad[i] * grad[j];
            }
        }
    }
    (symmetrize(&f), min_prob, skipped)
}

/// CFIM from measured amplitudes through the projection form
/// `(V∂z)ᵀ (I − P(Vz, D₁JVz, …, D_NJVz)) V∂z`, where `Vz = Φ(φ)`.
pub fn cfim_projection_from_amplitudes(phi: &ComplexVector, dphi: &ComplexMatrix, prob_floor: f64) -> (RealMatrix, f64, usize) {
    // Vz and the vectors D_k J Vz are pairwise orthogonal (disjoint supports,
    // and ⟨v, Jv⟩ = 0), so the projector is a sum of rank-one terms.
    let n = phi.len();
    let m = dphi.ncols();
    let vz = phi_vector(phi).data;
    let w = phi_columns(dphi);
    let mut out = w.transpose() * &w;
    let mut min_prob = f64::INFINITY;
    let mut skipped = 0;
    let mut coeffs = vec![0.0; m];
    let subtract = |out: &mut RealMatrix, c: &[f64], scale: f64| {
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] -= scale * c[i] * c[j];
            }
        }
    };
    let zz = vz.norm_squared();
    if zz > 0.0 {
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c = vz.dot(&w.column(j));
        }
        subtract(&mut out, &coeffs, 1.0 / zz);
    }
    for k in 0..n {
        let (x, y) = (vz[k], vz[k + n]);
        let p = x * x + y * y;
        min_prob = min_prob.min(p);
        if p <= prob_floor {
            skipped += 1;
            continue;
        }
        // D_k J Vz = (−y) e_k + x e_{k+N}
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c = -y * w[(k, j)] + x * w[(k + n, j)];
        }
        subtract(&mut out, &coeffs, 1.0 / p);
    }
    (symmetrize(&out), min_prob, skipped)
}

/// Projection form with the projector built by Gram-Schmidt over the full
/// spanning set. Slower; kept as an independent cross-check.
pub fn cfim_projection_gram_schmidt(phi: &ComplexVector, dphi: &ComplexMatrix, prob_floor: f64) -> (RealMatrix, f64, usize) {
    let n = phi.len();
    let vz = phi_vector(phi).data;
    let w = phi_columns(dphi);
    let mut span = Vec::with_capacity(n + 1);
    span.push(vz.clone());
    let mut min_prob = f64::INFINITY;
    let mut skipped = 0;
    for k in 1..=n {
        let v = dk_j_vector(k, &vz).expect("k in range");
        let p = v.norm_squared();
        min_prob = min_prob.min(p);
        if p <= prob_floor {
            skipped += 1;
            continue;
        }
        span.push(v);
    }
    let basis = orthonormal_basis(&span, DEFAULT_DROP_TOL).expect("equal lengths and positive tolerance");
    let residual = project_out(&basis, &w);
    (symmetrize(&(w.transpose() * residual)), min_prob, skipped)
}

fn amplitudes(swj: &StateWithJacobian, u: &ComplexMatrix) -> Result<(ComplexVector, ComplexMatrix)> {
    check_basis(swj.dim(), u)?;
    Ok((u.ad_mul(&swj.state), u.ad_mul(&swj.jacobian)))
}

pub fn cfim_definition(swj: &StateWithJacobian, u: &ComplexMatrix, prob_floor: f64) -> Result<Cfim> {
    let (phi, dphi) = amplitudes(swj, u)?;
    let (matrix, min_prob, skipped_outcomes) = cfim_definition_from_amplitudes(&phi, &dphi, prob_floor);
    Ok(Cfim { matrix, basis: BasisProvenance::Explicit, min_prob, skipped_outcomes })
}

pub fn cfim_projection(swj: &StateWithJacobian, u: &ComplexMatrix, prob_floor: f64) -> Result<Cfim> {
    let (phi, dphi) = amplitudes(swj, u)?;
    let (matrix, min_prob, skipped_outcomes) = cfim_projection_from_amplitudes(&phi, &dphi, prob_floor);
    Ok(Cfim { matrix, basis: BasisProvenance::Explicit, min_prob, skipped_outcomes })
}

/// Entrywise variance of the Haar-random CFIM:
/// `V_ij = (Q_ii Q_jj + Q_ij² + Q̃_ij²) / (8N)`.
pub fn variance_predictor(q: &Qgt, n: usize) -> Result<RealMatrix> {
    if n < 2 {
        return Err(QfimError::InvalidArgument(format!("variance predictor needs N >= 2, got {n}")));
    }
    let m = q.num_params();
    let re = &q.real_part;
    let im = &q.imag_part;
    let scale = 1.0 / (8.0 * n as f64);
    Ok(RealMatrix::from_fn(m, m, |i, j| {
        scale * (re[(i, i)] * re[(j, j)] + re[(i, j)] * re[(i, j)] + im[(i, j)] * im[(i, j)])
    }))
}

/// Monte Carlo average over `k` Haar samples of `Σ_k P(Φ(U) D_k Φ(U)ᵀ J Φ(ψ))`.
///
/// Sample `i` uses `substream(stream.master_seed, stream.stream_id + i)`.
pub fn projection_sum_check(psi: &ComplexVector, k: usize, stream: &SeededStream) -> Result<RealMatrix> {
    let n = psi.len();
    if n < 2 {
        return Err(QfimError::InvalidArgument(format!("need N >= 2, got {n}")));
    }
    if k == 0 {
        return Err(QfimError::TooFewSamples { needed: 1, got: 0 });
    }
    let dim = 2 * n;
    let sum = chunked_reduce(
        k,
        DEFAULT_CHUNK,
        || RealMatrix::zeros(dim, dim),
        |acc, i| {
            let s = substream(stream.master_seed, stream.stream_id.wrapping_add(i as u64));
            let u = sample_haar_unitary(n, &s).expect("n >= 2");
            let phi = u.ad_mul(psi);
            for (col, amp) in u.column_iter().zip(phi.iter()) {
                // Φ(U) D_k J Φ(U)ᵀ Φ(ψ) = Φ(i φ_k u_k)
                let w = phi_vector(&(col.into_owned() * (C64::i() * amp))).data;
                let norm2 = w.norm_squared();
                if norm2 > 0.0 {
                    acc.ger(1.0 / norm2, &w, &w, 1.0);
                }
            }
        },
        |a, b| a + b,
    )
    .expect("k >= 1");
    Ok(sum / k as f64)
}

/// `(1/2)(I − P(Φψ) + P(JΦψ))`, the Haar limit of [`projection_sum_check`].
pub fn projection_sum_limit(psi: &ComplexVector) -> Result<RealMatrix> {
    let z = phi_vector(psi).data;
    let dim = z.len();
    let pz = project_onto_span(std::slice::from_ref(&z), DEFAULT_DROP_TOL)?;
    let pjz = project_onto_span(&[apply_j(&z)], DEFAULT_DROP_TOL)?;
    Ok((RealMatrix::identity(dim, dim) - pz + pjz) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoKind {
    Qfim,
    Cfim,
    Variance,
}

/// JSON form of an `m×m` information matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoMatrix {
    pub m: usize,
    pub entries: Vec<f64>,
    pub kind: InfoKind,
    pub metadata: serde_json::Value,
}

impl InfoMatrix {
    pub fn new(matrix: &RealMatrix, kind: InfoKind, metadata: serde_json::Value) -> Self {
        let m = matrix.nrows();
        let entries = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| matrix[(i, j)]).collect();
        Self { m, entries, kind, metadata }
    }

    pub fn to_matrix(&self) -> Result<RealMatrix> {
        if self.entries.len() != self.m * self.m {
            return Err(QfimError::DimensionMismatch { expected: self.m * self.m, actual: self.entries.len() });
        }
        Ok(RealMatrix::from_row_slice(self.m, self.m, &self.entries))
    }
}
