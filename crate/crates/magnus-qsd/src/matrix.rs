//! Dense complex linear algebra kernels: adjoints, commutators, norms,
//! pivoted LU solves, Jacobi eigendecomposition, Cholesky, and the
//! normalized state-vector wrapper used by the trajectory propagators.
//!
//! Dimensions in this crate stay small (N ≤ 10 for models, N² ≤ 100 for
//! vectorized density operators), so straightforward dense kernels are both
//! adequate and easy to audit.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{QsdError, Result};

pub type C64 = Complex64;
pub type CMat = Array2<Complex64>;
pub type CVec = Array1<Complex64>;

pub const ONE: C64 = Complex64::new(1.0, 0.0);
pub const ZERO: C64 = Complex64::new(0.0, 0.0);
pub const I: C64 = Complex64::new(0.0, 1.0);

/// n×n identity matrix.
pub fn identity(n: usize) -> CMat {
    Array2::from_diag(&Array1::from_elem(n, ONE))
}

/// n×n zero matrix.
pub fn zeros(n: usize) -> CMat {
    Array2::zeros((n, n))
}

/// Conjugate transpose.
pub fn adjoint(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Commutator [A, B] = AB − BA.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a.dot(b) - b.dot(a)
}

/// Matrix trace.
pub fn trace(a: &CMat) -> C64 {
    a.diag().sum()
}

/// Kronecker product A ⊗ B.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    ndarray::linalg::kron(a, b)
}

/// True when every entry is finite in both real and imaginary parts.
pub fn all_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// True when every amplitude is finite.
pub fn vec_all_finite(v: &CVec) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Max entrywise deviation from Hermiticity, ‖A − A†‖_max.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let ad = adjoint(a);
    (a - &ad)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    hermiticity_defect(a) <= tol
}

/// Frobenius norm.
pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Induced 1-norm (max absolute column sum).
pub fn one_norm(a: &CMat) -> f64 {
    let mut best = 0.0f64;
    for col in a.columns() {
        let s: f64 = col.iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

/// Max entrywise modulus.
pub fn max_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// ℓ²-norm of a complex vector.
pub fn vec_norm(v: &CVec) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Inner product ⟨u|v⟩ = Σ conj(u_i) v_i.
pub fn inner(u: &CVec, v: &CVec) -> C64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Spectral norm (largest singular value) via power iteration on A†A.
///
/// Deterministic start vector so repeated calls agree bitwise; accurate to
/// ~1e-10 relative for the small, well-separated matrices used here.
pub fn spectral_norm(a: &CMat) -> f64 {
    let (n, m) = (a.nrows(), a.ncols());
    if n == 0 || m == 0 {
        return 0.0;
    }
    let fro = frobenius_norm(a);
    if fro == 0.0 {
        return 0.0;
    }
    let ah = adjoint(a);
    // Deterministic, non-symmetric start to avoid orthogonality traps.
    let mut v: CVec = Array1::from_iter(
        (0..m).map(|i| Complex64::new(1.0 + (i as f64) * 0.618, 0.37 * ((i % 3) as f64))),
    );
    let nv = vec_norm(&v);
    v.mapv_inplace(|z| z / nv);
    let mut lambda = 0.0f64;
    for _ in 0..200 {
        let w = ah.dot(&a.dot(&v));
        let nw = vec_norm(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw; // Rayleigh quotient for unit v: v†A†Av = ‖Av‖² ≈ nw
        v = w.mapv(|z| z / nw);
        let converged = (next - lambda).abs() <= 1e-12 * next.max(1.0);
        lambda = next;
        if converged {
            break;
        }
    }
    lambda.sqrt()
}

/// Solve A X = B for complex square A via partial-pivot LU. B may have any
/// number of right-hand-side columns.
pub fn lu_solve(a: &CMat, b: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(QsdError::DimensionMismatch(format!(
            "lu_solve: A is {}x{}, B has {} rows",
            n,
            a.ncols(),
            b.nrows()
        )));
    }
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        // Partial pivot on column k.
        let mut p = k;
        let mut best = lu[[k, k]].norm();
        for r in (k + 1)..n {
            let m = lu[[r, k]].norm();
            if m > best {
                best = m;
                p = r;
            }
        }
        if best == 0.0 {
            return Err(QsdError::Singular(format!("zero pivot at column {k}")));
        }
        if p != k {
            piv.swap(k, p);
            for c in 0..n {
                let tmp = lu[[k, c]];
                lu[[k, c]] = lu[[p, c]];
                lu[[p, c]] = tmp;
            }
        }
        let pivot = lu[[k, k]];
        for r in (k + 1)..n {
            let factor = lu[[r, k]] / pivot;
            lu[[r, k]] = factor;
            for c in (k + 1)..n {
                let sub = factor * lu[[k, c]];
                lu[[r, c]] -= sub;
            }
        }
    }
    let nrhs = b.ncols();
    let mut x = Array2::<Complex64>::zeros((n, nrhs));
    for j in 0..nrhs {
        // Apply row permutation, then forward/backward substitution.
        let mut y: Vec<C64> = (0..n).map(|r| b[[piv[r], j]]).collect();
        for r in 1..n {
            for c in 0..r {
                let sub = lu[[r, c]] * y[c];
                y[r] -= sub;
            }
        }
        for r in (0..n).rev() {
            for c in (r + 1)..n {
                let sub = lu[[r, c]] * y[c];
                y[r] -= sub;
            }
            y[r] /= lu[[r, r]];
        }
        for r in 0..n {
            x[[r, j]] = y[r];
        }
    }
    Ok(x)
}

/// Solve A x = b for a single complex right-hand side.
pub fn lu_solve_vec(a: &CMat, b: &CVec) -> Result<CVec> {
    let bm = b.clone().insert_axis(ndarray::Axis(1));
    let x = lu_solve(a, &bm)?;
    Ok(x.column(0).to_owned())
}

/// Eigenvalues and eigenvectors of a Hermitian matrix via cyclic Jacobi
/// rotations: returns (eigenvalues ascending, V) with A = V diag(λ) V†.
pub fn hermitian_eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(QsdError::DimensionMismatch("hermitian_eigh: not square".into()));
    }
    if !is_hermitian(a, 1e-9 * (1.0 + max_norm(a))) {
        return Err(QsdError::InvalidArgument(
            "hermitian_eigh: input is not Hermitian".into(),
        ));
    }
    let mut m = a.clone();
    // Symmetrize exactly so rounding in the caller cannot bias rotations.
    let ad = adjoint(&m);
    m = (&m + &ad).mapv(|z| z * Complex64::new(0.5, 0.0));
    let mut v = identity(n);
    let scale = frobenius_norm(&m).max(1e-300);
    let tol = 1e-14 * scale;
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let phase = apq / r; // e^{iφ}
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let tau = (aqq - app) / (2.0 * r);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary 2×2 block U = [[c, s],[−s e^{−iφ}, c e^{−iφ}]]
                // applied as A ← U† A U; zeroes the (p,q) entry.
                let cc = Complex64::new(c, 0.0);
                let sp = Complex64::new(s, 0.0) * phase.conj(); // s e^{−iφ}
                for k in 0..n {
                    let akp = m[[k, p]];
                    let akq = m[[k, q]];
                    m[[k, p]] = cc * akp - sp * akq;
                    m[[k, q]] = Complex64::new(s, 0.0) * akp + cc * phase.conj() * akq;
                }
                for k in 0..n {
                    let apk = m[[p, k]];
                    let aqk = m[[q, k]];
                    m[[p, k]] = cc * apk - sp.conj() * aqk;
                    m[[q, k]] = Complex64::new(s, 0.0) * apk + cc * phase * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = cc * vkp - sp * vkq;
                    v[[k, q]] = Complex64::new(s, 0.0) * vkp + cc * phase.conj() * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (m[[i, i]].re, i)).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let evals: Vec<f64> = pairs.iter().map(|&(l, _)| l).collect();
    let mut vs = Array2::<Complex64>::zeros((n, n));
    for (newcol, &(_, oldcol)) in pairs.iter().enumerate() {
        for r in 0..n {
            vs[[r, newcol]] = v[[r, oldcol]];
        }
    }
    Ok((evals, vs))
}

/// Eigenvalues only (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    hermitian_eigh(a).map(|(e, _)| e)
}

/// Cholesky solve for a real symmetric positive-definite system A x = b.
/// Returns None when A is not numerically positive definite.
pub fn cholesky_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return None;
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0f64; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    Some(Array1::from_vec(x))
}

/// Least-squares solve of a real symmetric system via eigendecomposition,
/// zeroing modes with |λ| below `cutoff` (pseudo-inverse).
pub fn sym_pseudo_solve(a: &Array2<f64>, b: &Array1<f64>, cutoff: f64) -> Result<Array1<f64>> {
    let n = a.nrows();
    let ac: CMat = a.mapv(|x| Complex64::new(x, 0.0));
    let (evals, v) = hermitian_eigh(&ac)?;
    let bc: CVec = b.mapv(|x| Complex64::new(x, 0.0));
    let vt_b = adjoint(&v).dot(&bc);
    let mut coeffs = CVec::zeros(n);
    let lmax = evals.iter().fold(0.0f64, |m, &l| m.max(l.abs())).max(1e-300);
    for i in 0..n {
        if evals[i].abs() > cutoff * lmax {
            coeffs[i] = vt_b[i] / Complex64::new(evals[i], 0.0);
        }
    }
    let x = v.dot(&coeffs);
    Ok(x.mapv(|z| z.re))
}

/// Pure state with an explicitly tracked ℓ²-norm. Linear-unraveling
/// propagation lets the norm drift (it carries the trajectory weight);
/// norm-preserving propagation renormalizes after every step.
#[derive(Debug, Clone)]
pub struct StateVector {
    pub amps: CVec,
}

impl StateVector {
    pub fn new(amps: CVec) -> Result<Self> {
        if amps.is_empty() {
            return Err(QsdError::InvalidArgument("empty state vector".into()));
        }
        if !vec_all_finite(&amps) {
            return Err(QsdError::NonFinite("state vector amplitudes".into()));
        }
        Ok(Self { amps })
    }

    /// Basis state |i⟩ in dimension n.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut amps = CVec::zeros(n);
        amps[i] = ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        vec_norm(&self.amps)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// Rescale to unit norm, returning the prior norm.
    pub fn normalize(&mut self) -> Result<f64> {
        let n = self.norm();
        if n <= 0.0 || !n.is_finite() {
            return Err(QsdError::NonFinite(format!("cannot normalize norm {n}")));
        }
        self.amps.mapv_inplace(|z| z / n);
        Ok(n)
    }

    /// Expectation value ⟨ψ|O|ψ⟩ without normalizing.
    pub fn expectation(&self, op: &CMat) -> C64 {
        inner(&self.amps, &op.dot(&self.amps))
    }
}
