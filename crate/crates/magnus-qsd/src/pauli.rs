//! Pauli-string algebra: dense matrices for tensor-product strings,
//! decomposition of operators over the Pauli basis, and zero-padding of
//! sub-power-of-two operators.
//!
//! A string like "ZXI" reads left to right from the most significant qubit:
//! qubit 0 carries Z, qubit 1 carries X, qubit 2 the identity. Every Pauli
//! string has exactly one nonzero entry per row, which the decomposition
//! exploits instead of forming dense products.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{QsdError, Result};
use crate::matrix::{CMat, ONE, ZERO};

/// One nonzero entry per row: for row index `r`, returns the column index
/// and the entry value of the Pauli string `s` acting on `n` qubits.
fn row_action(s: &[u8], n: usize, r: usize) -> (usize, Complex64) {
    let mut col = 0usize;
    let mut phase = ONE;
    for (q, &ch) in s.iter().enumerate() {
        let bit = (r >> (n - 1 - q)) & 1;
        let (cbit, factor) = match ch {
            b'I' => (bit, ONE),
            b'X' => (1 - bit, ONE),
            b'Y' => (
                1 - bit,
                if bit == 0 {
                    Complex64::new(0.0, -1.0)
                } else {
                    Complex64::new(0.0, 1.0)
                },
            ),
            b'Z' => (bit, if bit == 0 { ONE } else { -ONE }),
            _ => unreachable!("validated earlier"),
        };
        col = (col << 1) | cbit;
        phase *= factor;
    }
    (col, phase)
}

fn validate_string(s: &str) -> Result<()> {
    if s.is_empty() {
        return Err(QsdError::InvalidArgument("empty Pauli string".into()));
    }
    if let Some(bad) = s.bytes().find(|b| !matches!(b, b'I' | b'X' | b'Y' | b'Z')) {
        return Err(QsdError::InvalidArgument(format!(
            "invalid Pauli letter '{}' in \"{s}\"",
            bad as char
        )));
    }
    Ok(())
}

/// Dense 2^n × 2^n matrix of a Pauli string.
pub fn pauli_string_matrix(s: &str) -> Result<CMat> {
    validate_string(s)?;
    let n = s.len();
    let dim = 1usize << n;
    let bytes = s.as_bytes();
    let mut m = Array2::<Complex64>::zeros((dim, dim));
    for r in 0..dim {
        let (c, phase) = row_action(bytes, n, r);
        m[[r, c]] = phase;
    }
    Ok(m)
}

/// Precompiled action of a Pauli string on state vectors: one table lookup
/// per amplitude instead of a dense matrix-vector product.
#[derive(Debug, Clone)]
pub struct CompiledPauli {
    dim: usize,
    col: Vec<usize>,
    phase: Vec<Complex64>,
}

impl CompiledPauli {
    pub fn new(s: &str) -> Result<Self> {
        validate_string(s)?;
        let n = s.len();
        let dim = 1usize << n;
        let bytes = s.as_bytes();
        let mut col = Vec::with_capacity(dim);
        let mut phase = Vec::with_capacity(dim);
        for r in 0..dim {
            let (c, ph) = row_action(bytes, n, r);
            col.push(c);
            phase.push(ph);
        }
        Ok(Self { dim, col, phase })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// (P v)[r] = phase[r] · v[col[r]].
    pub fn apply(&self, v: &crate::matrix::CVec) -> crate::matrix::CVec {
        debug_assert_eq!(v.len(), self.dim);
        crate::matrix::CVec::from_iter((0..self.dim).map(|r| self.phase[r] * v[self.col[r]]))
    }

    /// In-place rotation exp(−i θ P / 2) v = cos(θ/2) v − i sin(θ/2) P v,
    /// valid because P is involutory.
    pub fn apply_rotation(&self, theta: f64, v: &crate::matrix::CVec) -> crate::matrix::CVec {
        let c = Complex64::new((0.5 * theta).cos(), 0.0);
        let ms = Complex64::new(0.0, -(0.5 * theta).sin());
        crate::matrix::CVec::from_iter(
            (0..self.dim).map(|r| c * v[r] + ms * self.phase[r] * v[self.col[r]]),
        )
    }
}

/// Sparse coefficient list over the Pauli-string basis.
#[derive(Debug, Clone)]
pub struct PauliDecomposition {
    pub n_qubits: usize,
    /// (string, coefficient); coefficients are real for Hermitian inputs.
    pub terms: Vec<(String, Complex64)>,
}

impl PauliDecomposition {
    /// Dense operator Σ c_P · P.
    pub fn reconstruct(&self) -> CMat {
        let dim = 1usize << self.n_qubits;
        let mut m = Array2::<Complex64>::zeros((dim, dim));
        for (s, coeff) in &self.terms {
            let bytes = s.as_bytes();
            for r in 0..dim {
                let (c, phase) = row_action(bytes, self.n_qubits, r);
                m[[r, c]] += *coeff * phase;
            }
        }
        m
    }
}

/// Zero-pad a square operator up to the next power-of-two dimension.
/// Padding rows/columns are zero, so padded components carry no dynamics.
pub fn pad_to_power_of_two(m: &CMat) -> CMat {
    let n = m.nrows();
    let target = n.next_power_of_two().max(2);
    if target == n {
        return m.clone();
    }
    let mut out = Array2::<Complex64>::zeros((target, target));
    out.slice_mut(ndarray::s![0..n, 0..n]).assign(m);
    out
}

/// Number of qubits needed to host an operator of dimension `dim`
/// (after padding to the next power of two).
pub fn qubits_for_dim(dim: usize) -> usize {
    let padded = dim.next_power_of_two().max(2);
    padded.trailing_zeros() as usize
}

/// Expand an operator over Pauli strings: coefficients c_P = Tr(P†M)/2^n.
/// Terms with |c_P| ≤ drop_tol are discarded. The input dimension must be a
/// power of two (pad first with `pad_to_power_of_two`).
pub fn pauli_decompose(m: &CMat, drop_tol: f64) -> Result<PauliDecomposition> {
    let dim = m.nrows();
    if m.ncols() != dim {
        return Err(QsdError::DimensionMismatch("pauli_decompose: not square".into()));
    }
    if dim < 2 || !dim.is_power_of_two() {
        return Err(QsdError::InvalidArgument(format!(
            "pauli_decompose: dimension {dim} is not a power of two ≥ 2; zero-pad first"
        )));
    }
    let n = dim.trailing_zeros() as usize;
    let letters = [b'I', b'X', b'Y', b'Z'];
    let mut terms = Vec::new();
    let norm = 1.0 / dim as f64;
    let mut string = vec![b'I'; n];
    // Enumerate all 4^n strings by base-4 counting.
    let total = 4usize.pow(n as u32);
    for idx in 0..total {
        let mut k = idx;
        for q in (0..n).rev() {
            string[q] = letters[k % 4];
            k /= 4;
        }
        // Tr(P†M) = Σ_r conj(P[r, c(r)]) · M[r, c(r)]  (one entry per row).
        let mut tr = ZERO;
        for r in 0..dim {
            let (c, phase) = row_action(&string, n, r);
            tr += phase.conj() * m[[r, c]];
        }
        let coeff = tr * Complex64::new(norm, 0.0);
        if coeff.norm() > drop_tol {
            terms.push((String::from_utf8(string.clone()).unwrap(), coeff));
        }
    }
    Ok(PauliDecomposition { n_qubits: n, terms })
}

/// Default coefficient drop threshold for decomposition.
pub const DEFAULT_DROP_TOL: f64 = 1e-12;
