//! Haar-random unitaries from seeded, counter-addressed streams.
//!
//! Every Monte Carlo sample `i` draws from its own ChaCha stream
//! `(master_seed, i)`, so a batch is the same no matter how the work is
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QfimError, Result};
use crate::linalg::{ComplexMatrix, C64};

/// Stream ids at the top of the range are reserved for non-sample draws.
pub const ANSATZ_STREAM: u64 = u64::MAX;
pub const THETA_STREAM: u64 = u64::MAX - 1;
pub const AUX_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeededStream {
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub fn substream(master_seed: u64, sample_index: u64) -> SeededStream {
    SeededStream { master_seed, stream_id: sample_index }
}

/// Complex Gaussian with independent `N(0,1)` real and imaginary parts.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im)
}

/// `rows×cols` Ginibre matrix, filled column by column.
pub fn ginibre<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let data: Vec<C64> = (0..rows * cols).map(|_| complex_gaussian(rng)).collect();
    ComplexMatrix::from_vec(rows, cols, data)
}

fn qr_columns(rows: usize, cols: usize, stream: &SeededStream) -> ComplexMatrix {
    let mut rng = stream.rng();
    loop {
        let g = ginibre(rows, cols, &mut rng);
        let qr = g.qr();
        let r = qr.r();
        let diag: Vec<C64> = (0..cols).map(|j| r[(j, j)]).collect();
        if diag.iter().any(|d| d.norm() == 0.0) {
            continue;
        }
        let mut q = qr.q();
        // nalgebra already returns a positive diagonal; keep the fix so the
        // sampler does not depend on that convention.
        for (j, d) in diag.iter().enumerate() {
            let phase = d / d.norm();
            for x in q.column_mut(j).iter_mut() {
                *x *= phase;
            }
        }
        return q;
    }
}

/// Haar-distributed `N×N` unitary: Ginibre, QR, then rotate each column of `Q`
/// by the phase of `R_jj` so that `R` has a positive diagonal.
pub fn sample_haar_unitary(n: usize, stream: &SeededStream) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(QfimError::InvalidArgument("Haar sampling needs N >= 1".into()));
    }
    Ok(qr_columns(n, n, stream))
}

/// First `r` columns of [`sample_haar_unitary`] on the same stream, at `O(N r²)` cost.
///
/// The Ginibre matrix is filled column-major, so its first `r` columns are
/// the same draws, and the phase-fixed QR factor of a column prefix is the
/// prefix of the full factor.
pub fn sample_haar_isometry(n: usize, r: usize, stream: &SeededStream) -> Result<ComplexMatrix> {
    if n == 0 || r == 0 || r > n {
        return Err(QfimError::InvalidArgument(format!("isometry needs 1 <= r <= N, got r={r}, N={n}")));
    }
    Ok(qr_columns(n, r, stream))
}

/// Householder QR in the LAPACK `zgeqrf` convention, where `R` has a real
/// diagonal of sign `−sign(Re α)`, with no phase correction. Unitary but not
/// Haar distributed: `Re U₁₁ ≤ 0` always. Kept as a negative control for the
/// moment tests; nalgebra's own QR already normalizes `R` and cannot serve.
pub fn sample_unitary_unfixed(n: usize, stream: &SeededStream) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(QfimError::InvalidArgument("Haar sampling needs N >= 1".into()));
    }
    Ok(householder_q(ginibre(n, n, &mut stream.rng())))
}

fn householder_q(mut r: ComplexMatrix) -> ComplexMatrix {
    let (rows, cols) = r.shape();
    let mut q = ComplexMatrix::identity(rows, rows);
    for j in 0..cols.min(rows) {
        let x = r.view((j, j), (rows - j, 1)).column(0).into_owned();
        let alpha = x[0];
        let xnorm = x.norm();
        if xnorm == 0.0 {
            continue;
        }
        let beta = if alpha.re >= 0.0 { -xnorm } else { xnorm };
        let tau = (C64::new(beta, 0.0) - alpha) / beta;
        let mut v = x / (alpha - beta);
        v[0] = C64::new(1.0, 0.0);
        // R ← Hᴴ R with H = I − τ v vᴴ
        for c in j..cols {
            let mut col = r.view_mut((j, c), (rows - j, 1));
            let s = v.dotc(&col.column(0));
            col.column_mut(0).axpy(-tau.conj() * s, &v, C64::new(1.0, 0.0));
        }
        // Q ← Q H
        let mut block = q.view_mut((0, j), (rows, rows - j));
        let qv = &block * &v;
        block.gerc(-tau, &qv, &v, C64::new(1.0, 0.0));
    }
    q
}
