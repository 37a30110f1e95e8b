//! Matrix exponential: dense scaling-and-squaring with diagonal Padé
//! approximants (Higham 2005, SIAM J. Matrix Anal. Appl. 26(4),
//! doi:10.1137/04061101X) plus an Arnoldi/Krylov path for the action
//! e^A v on larger operators.
//!
//! `expm_action` is the single entry point used by the propagators: dense
//! for N ≤ 64 (every model here is far smaller), Krylov above that.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{QsdError, Result};
use crate::matrix::{
    self, adjoint, identity, inner, lu_solve, one_norm, vec_norm, CMat, CVec,
};

/// Dimension above which `expm_action` switches from the dense exponential
/// to the Arnoldi/Krylov approximation.
pub const DENSE_ACTION_LIMIT: usize = 64;

/// Default relative tolerance for `expm_action`.
pub const DEFAULT_TOL: f64 = 1e-12;

// 1-norm thresholds θ_m for the order-m diagonal Padé approximant
// (Higham 2005, Table 2.3).
const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_230e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Evaluate the order-m (m ∈ {3,5,7,9}) Padé numerator/denominator pair and
/// solve for r_m(A) = (V−U)⁻¹(V+U).
fn pade_low_order(a: &CMat, b: &[f64], powers: &[&CMat]) -> Result<CMat> {
    let n = a.nrows();
    // U = A Σ b_{2j+1} A^{2j},  V = Σ b_{2j} A^{2j}
    let mut u_inner = identity(n).mapv(|z| z * re(b[1]));
    let mut v = identity(n).mapv(|z| z * re(b[0]));
    for (j, a2j) in powers.iter().enumerate() {
        let k = 2 * (j + 1);
        u_inner = u_inner + a2j.mapv(|z| z * re(b[k + 1]));
        v = v + a2j.mapv(|z| z * re(b[k]));
    }
    let u = a.dot(&u_inner);
    let lhs = &v - &u;
    let rhs = &v + &u;
    lu_solve(&lhs, &rhs)
}

/// Dense matrix exponential e^A for square complex A.
pub fn expm(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(QsdError::DimensionMismatch("expm: matrix not square".into()));
    }
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    if !matrix::all_finite(a) {
        return Err(QsdError::NonFinite("expm input".into()));
    }
    let nrm = one_norm(a);
    if nrm <= THETA_9 {
        let a2 = a.dot(a);
        if nrm <= THETA_3 {
            return pade_low_order(a, &B3, &[&a2]);
        }
        let a4 = a2.dot(&a2);
        if nrm <= THETA_5 {
            return pade_low_order(a, &B5, &[&a2, &a4]);
        }
        let a6 = a2.dot(&a4);
        if nrm <= THETA_7 {
            return pade_low_order(a, &B7, &[&a2, &a4, &a6]);
        }
        let a8 = a4.dot(&a4);
        return pade_low_order(a, &B9, &[&a2, &a4, &a6, &a8]);
    }
    // Scaling and squaring with the order-13 approximant.
    let s = ((nrm / THETA_13).log2().ceil()).max(0.0) as u32;
    let scale = re(1.0 / (2f64.powi(s as i32)));
    let a_s = a.mapv(|z| z * scale);
    let a2 = a_s.dot(&a_s);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let u_high = a6.dot(
        &(&a6.mapv(|z| z * re(B13[13]))
            + &a4.mapv(|z| z * re(B13[11]))
            + &a2.mapv(|z| z * re(B13[9]))),
    );
    let u_low = &a6.mapv(|z| z * re(B13[7]))
        + &a4.mapv(|z| z * re(B13[5]))
        + &a2.mapv(|z| z * re(B13[3]))
        + &identity(n).mapv(|z| z * re(B13[1]));
    let u = a_s.dot(&(&u_high + &u_low));
    let v_high = a6.dot(
        &(&a6.mapv(|z| z * re(B13[12]))
            + &a4.mapv(|z| z * re(B13[10]))
            + &a2.mapv(|z| z * re(B13[8]))),
    );
    let v = &v_high
        + &a6.mapv(|z| z * re(B13[6]))
        + &a4.mapv(|z| z * re(B13[4]))
        + &a2.mapv(|z| z * re(B13[2]))
        + &identity(n).mapv(|z| z * re(B13[0]));
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut r = lu_solve(&lhs, &rhs)?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Arnoldi decomposition: returns (V, H, m_eff, breakdown) with V holding
/// m_eff+1 orthonormal columns (when no breakdown) and H the
/// (m_eff+1)×m_eff upper-Hessenberg projection.
fn arnoldi(a: &CMat, v0: &CVec, m: usize) -> (Vec<CVec>, Array2<Complex64>, usize, bool) {
    let beta = vec_norm(v0);
    let mut basis: Vec<CVec> = vec![v0.mapv(|z| z / re(beta))];
    let mut h = Array2::<Complex64>::zeros((m + 1, m));
    let mut breakdown = false;
    let mut m_eff = m;
    for j in 0..m {
        let mut w = a.dot(&basis[j]);
        // Modified Gram-Schmidt with one re-orthogonalization pass.
        for _pass in 0..2 {
            for (i, vi) in basis.iter().enumerate().take(j + 1) {
                let c = inner(vi, &w);
                w = &w - &vi.mapv(|z| z * c);
                h[[i, j]] += c;
            }
        }
        let nw = vec_norm(&w);
        h[[j + 1, j]] = re(nw);
        if nw < 1e-14 * beta.max(1.0) {
            // Happy breakdown: the Krylov space is invariant.
            m_eff = j + 1;
            breakdown = true;
            break;
        }
        basis.push(w.mapv(|z| z / re(nw)));
    }
    (basis, h, m_eff, breakdown)
}

/// e^A v via an m-dimensional Krylov projection; returns the approximation
/// and a residual-style error estimate.
fn krylov_expm_once(a: &CMat, v: &CVec, m: usize) -> Result<(CVec, f64)> {
    let beta = vec_norm(v);
    if beta == 0.0 {
        return Ok((CVec::zeros(v.len()), 0.0));
    }
    let (basis, h, m_eff, breakdown) = arnoldi(a, v, m);
    let hm = h.slice(ndarray::s![0..m_eff, 0..m_eff]).to_owned();
    let f = expm(&hm)?;
    let mut out = CVec::zeros(v.len());
    for (i, vi) in basis.iter().enumerate().take(m_eff) {
        let c = f[[i, 0]] * re(beta);
        out = &out + &vi.mapv(|z| z * c);
    }
    let err = if breakdown {
        0.0
    } else {
        // Standard a-posteriori estimate β · h_{m+1,m} · |[e^{H_m}]_{m,1}|.
        beta * h[[m_eff, m_eff - 1]].norm() * f[[m_eff - 1, 0]].norm()
    };
    Ok((out, err))
}

/// Action of the matrix exponential: e^A v to relative tolerance `tol`.
///
/// Dense Padé for small operators; adaptive-dimension Arnoldi projection for
/// larger ones.
pub fn expm_action(a: &CMat, v: &CVec, tol: f64) -> Result<CVec> {
    let n = a.nrows();
    if a.ncols() != n || v.len() != n {
        return Err(QsdError::DimensionMismatch(format!(
            "expm_action: A is {}x{}, v has {}",
            n,
            a.ncols(),
            v.len()
        )));
    }
    if !matrix::all_finite(a) || !matrix::vec_all_finite(v) {
        return Err(QsdError::NonFinite("expm_action input".into()));
    }
    if n <= DENSE_ACTION_LIMIT {
        return Ok(expm(a)?.dot(v));
    }
    let beta = vec_norm(v);
    if beta == 0.0 {
        return Ok(CVec::zeros(n));
    }
    let mut m = 24usize.min(n);
    loop {
        let (out, err) = krylov_expm_once(a, v, m)?;
        if err <= tol * beta || m >= n {
            if !matrix::vec_all_finite(&out) {
                return Err(QsdError::NonFinite("expm_action output".into()));
            }
            return Ok(out);
        }
        m = (2 * m).min(n);
    }
}

/// Convenience wrapper at the default tolerance.
pub fn expm_action_default(a: &CMat, v: &CVec) -> Result<CVec> {
    expm_action(a, v, DEFAULT_TOL)
}

/// Scaled anti-Hermitian check helper for tests and diagnostics:
/// ‖A + A†‖_max.
pub fn anti_hermiticity_defect(a: &CMat) -> f64 {
    let ad = adjoint(a);
    matrix::max_norm(&(a + &ad))
}
