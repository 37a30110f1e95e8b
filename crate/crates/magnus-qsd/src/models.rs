//! Benchmark model constructors and user-defined model loading.
//!
//! A `LindbladModel` holds a Hermitian system Hamiltonian and a list of
//! jump operators with dissipation rates already absorbed (each stored
//! operator is √Γ_k L_k). Built-in models:
//!
//! * damped transverse-field Ising chain (qubit register, lowering-operator
//!   damping on every site),
//! * five-level exciton-transfer complex (ground + three sites + sink)
//!   with dephasing, dissipation, and a sink channel,
//! * radical-pair magnetoreception model (8 electron–nuclear pair states
//!   plus singlet/triplet shelf states, 10 levels).

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::matrix::{
    self, adjoint, identity, kron, CMat, StateVector, ONE, ZERO,
};

/// Open quantum system: Hermitian Hamiltonian, jump operators with rates
/// absorbed, and named observables for reporting.
#[derive(Debug, Clone)]
pub struct LindbladModel {
    pub dim: usize,
    pub hamiltonian: CMat,
    pub jump_ops: Vec<CMat>,
    /// Ordered (name, operator) pairs; order fixes output-column layout.
    pub observables: Vec<(String, CMat)>,
    pub unit_note: String,
}

impl LindbladModel {
    pub fn new(
        hamiltonian: CMat,
        jump_ops: Vec<CMat>,
        observables: Vec<(String, CMat)>,
        unit_note: impl Into<String>,
    ) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if dim == 0 || hamiltonian.ncols() != dim {
            return Err(QsdError::DimensionMismatch(
                "hamiltonian must be square and non-empty".into(),
            ));
        }
        if !matrix::all_finite(&hamiltonian) {
            return Err(QsdError::NonFinite("hamiltonian".into()));
        }
        let defect = matrix::hermiticity_defect(&hamiltonian);
        let scale = matrix::max_norm(&hamiltonian).max(1.0);
        if defect > 1e-12 * scale {
            return Err(QsdError::InvalidArgument(format!(
                "hamiltonian is not Hermitian (defect {defect:.3e})"
            )));
        }
        for (k, l) in jump_ops.iter().enumerate() {
            if l.nrows() != dim || l.ncols() != dim {
                return Err(QsdError::DimensionMismatch(format!(
                    "jump operator {k} has shape {}x{}, expected {dim}x{dim}",
                    l.nrows(),
                    l.ncols()
                )));
            }
            if !matrix::all_finite(l) {
                return Err(QsdError::NonFinite(format!("jump operator {k}")));
            }
        }
        for (name, o) in &observables {
            if o.nrows() != dim || o.ncols() != dim {
                return Err(QsdError::DimensionMismatch(format!(
                    "observable '{name}' dimension mismatch"
                )));
            }
        }
        Ok(Self {
            dim,
            hamiltonian,
            jump_ops,
            observables,
            unit_note: unit_note.into(),
        })
    }

    pub fn observable(&self, name: &str) -> Option<&CMat> {
        self.observables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, o)| o)
    }

    pub fn observable_names(&self) -> Vec<String> {
        self.observables.iter().map(|(n, _)| n.clone()).collect()
    }
}

/// Initial condition: either a pure state or a statistical mixture of pure
/// states sampled per trajectory.
#[derive(Debug, Clone)]
pub enum InitialState {
    Pure(StateVector),
    /// (probability, state); probabilities must sum to 1.
    Mixture(Vec<(f64, StateVector)>),
}

impl InitialState {
    pub fn pure_basis(dim: usize, index: usize) -> Self {
        InitialState::Pure(StateVector::basis(dim, index))
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialState::Pure(s) => s.dim(),
            InitialState::Mixture(parts) => parts.first().map(|(_, s)| s.dim()).unwrap_or(0),
        }
    }

    /// Draw one pure state for a trajectory.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> StateVector {
        match self {
            InitialState::Pure(s) => s.clone(),
            InitialState::Mixture(parts) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, s) in parts {
                    acc += w;
                    if u <= acc {
                        return s.clone();
                    }
                }
                parts.last().expect("non-empty mixture").1.clone()
            }
        }
    }

    /// Density matrix Σ w ψψ†.
    pub fn density_matrix(&self) -> CMat {
        let dim = self.dim();
        let mut rho = Array2::<Complex64>::zeros((dim, dim));
        let parts: Vec<(f64, &StateVector)> = match self {
            InitialState::Pure(s) => vec![(1.0, s)],
            InitialState::Mixture(ps) => ps.iter().map(|(w, s)| (*w, s)).collect(),
        };
        for (w, s) in parts {
            for r in 0..dim {
                for c in 0..dim {
                    rho[[r, c]] += Complex64::new(w, 0.0) * s.amps[r] * s.amps[c].conj();
                }
            }
        }
        rho
    }
}

// ---------------------------------------------------------------------------
// Pauli building blocks
// ---------------------------------------------------------------------------

pub fn sigma_x() -> CMat {
    ndarray::array![[ZERO, ONE], [ONE, ZERO]]
}

pub fn sigma_y() -> CMat {
    ndarray::array![
        [ZERO, Complex64::new(0.0, -1.0)],
        [Complex64::new(0.0, 1.0), ZERO]
    ]
}

pub fn sigma_z() -> CMat {
    ndarray::array![[ONE, ZERO], [ZERO, -ONE]]
}

/// Lowering operator |0⟩⟨1| = (σ_x + iσ_y)/2 in the {|0⟩,|1⟩} basis.
pub fn sigma_minus() -> CMat {
    ndarray::array![[ZERO, ONE], [ZERO, ZERO]]
}

/// Embed a single-qubit operator on site `site` of an n-qubit register.
/// Site 0 is the leftmost tensor factor (most significant bit).
pub fn op_on_site(n_sites: usize, site: usize, op: &CMat) -> CMat {
    let left = identity(1 << site);
    let right = identity(1 << (n_sites - site - 1));
    kron(&kron(&left, op), &right)
}

/// Projector |i⟩⟨i| in dimension `dim`.
pub fn projector(dim: usize, i: usize) -> CMat {
    let mut p = Array2::<Complex64>::zeros((dim, dim));
    p[[i, i]] = ONE;
    p
}

/// Transition operator |to⟩⟨from| in dimension `dim`.
pub fn transition(dim: usize, to: usize, from: usize) -> CMat {
    let mut t = Array2::<Complex64>::zeros((dim, dim));
    t[[to, from]] = ONE;
    t
}

// ---------------------------------------------------------------------------
// Damped transverse-field Ising chain
// ---------------------------------------------------------------------------

/// Open-chain Ising Hamiltonian with transverse field and per-site damping:
/// H = J Σ σ_z^i σ_z^{i+1} − h Σ σ_x^i, jump operators √Γ_k σ⁻ on site k.
pub fn build_tfim(n_sites: usize, j: f64, h: f64, gamma: &[f64]) -> Result<LindbladModel> {
    if n_sites == 0 {
        return Err(QsdError::InvalidArgument("n_sites must be ≥ 1".into()));
    }
    if gamma.len() != n_sites {
        return Err(QsdError::InvalidArgument(format!(
            "gamma must have one entry per site ({} given, {n_sites} sites)",
            gamma.len()
        )));
    }
    if gamma.iter().any(|&g| g < 0.0) {
        return Err(QsdError::InvalidArgument("damping rates must be ≥ 0".into()));
    }
    let dim = 1 << n_sites;
    let mut ham = Array2::<Complex64>::zeros((dim, dim));
    let sz = sigma_z();
    let sx = sigma_x();
    for site in 0..n_sites.saturating_sub(1) {
        let zz = op_on_site(n_sites, site, &sz).dot(&op_on_site(n_sites, site + 1, &sz));
        ham = ham + zz.mapv(|z| z * Complex64::new(j, 0.0));
    }
    for site in 0..n_sites {
        ham = ham - op_on_site(n_sites, site, &sx).mapv(|z| z * Complex64::new(h, 0.0));
    }
    let jump_ops: Vec<CMat> = (0..n_sites)
        .map(|site| {
            op_on_site(n_sites, site, &sigma_minus())
                .mapv(|z| z * Complex64::new(gamma[site].sqrt(), 0.0))
        })
        .collect();
    // Computational-basis populations, named by bit string (site 0 leftmost).
    let observables: Vec<(String, CMat)> = (0..dim)
        .map(|b| {
            let bits: String = (0..n_sites)
                .map(|s| {
                    if (b >> (n_sites - 1 - s)) & 1 == 1 {
                        '1'
                    } else {
                        '0'
                    }
                })
                .collect();
            (format!("pop_{bits}"), projector(dim, b))
        })
        .collect();
    LindbladModel::new(
        ham,
        jump_ops,
        observables,
        "dimensionless couplings; time in units of 1/J",
    )
}

/// Default initial state for the Ising benchmark: all sites excited,
/// |1…1⟩ (the last computational basis state).
pub fn tfim_initial_state(n_sites: usize) -> InitialState {
    let dim = 1 << n_sites;
    InitialState::pure_basis(dim, dim - 1)
}

// ---------------------------------------------------------------------------
// Five-level exciton-transfer complex (ground + 3 sites + sink)
// ---------------------------------------------------------------------------

/// Default exciton-transfer rates, all in fs⁻¹.
pub const FMO_DEPHASING_RATE: f64 = 3e-3;
pub const FMO_DISSIPATION_RATE: f64 = 5e-7;
pub const FMO_SINK_RATE: f64 = 6.28e-3;

/// Site-basis Hamiltonian of the exciton-transfer complex in eV.
/// Basis: |0⟩ ground, |1⟩..|3⟩ pigment sites, |4⟩ sink.
pub fn fmo_hamiltonian_ev() -> CMat {
    let mut h = Array2::<Complex64>::zeros((5, 5));
    let entries: [(usize, usize, f64); 6] = [
        (1, 1, 0.0267),
        (2, 2, 0.0273),
        (1, 2, -0.0129),
        (1, 3, 0.000632),
        (2, 3, 0.00404),
        (3, 3, 0.0),
    ];
    for &(r, c, v) in &entries {
        h[[r, c]] = Complex64::new(v, 0.0);
        if r != c {
            h[[c, r]] = Complex64::new(v, 0.0);
        }
    }
    h
}

/// Exciton-transfer model with dephasing on each site, weak dissipation to
/// the ground state, and an irreversible sink channel off site 3.
/// Time unit: fs. Rates are fs⁻¹; the eV energy entries are used directly as
/// inverse-femtosecond frequencies (ħ = 1 working units, following the
/// source tables, which quote the matrix in eV alongside fs rates and steps).
pub fn build_fmo_with_rates(alpha: f64, beta: f64, gamma: f64) -> Result<LindbladModel> {
    let dim = 5;
    let ham = fmo_hamiltonian_ev();
    let mut jump_ops = Vec::new();
    for i in 1..=3 {
        jump_ops.push(projector(dim, i).mapv(|z| z * Complex64::new(alpha.sqrt(), 0.0)));
    }
    for i in 1..=3 {
        jump_ops.push(transition(dim, 0, i).mapv(|z| z * Complex64::new(beta.sqrt(), 0.0)));
    }
    jump_ops.push(transition(dim, 4, 3).mapv(|z| z * Complex64::new(gamma.sqrt(), 0.0)));
    let observables: Vec<(String, CMat)> = (0..dim)
        .map(|i| (format!("pop_{i}"), projector(dim, i)))
        .collect();
    LindbladModel::new(
        ham,
        jump_ops,
        observables,
        "time in fs; energy entries in eV used as 1/fs frequencies (hbar = 1); rates in 1/fs",
    )
}

pub fn build_fmo() -> Result<LindbladModel> {
    build_fmo_with_rates(FMO_DEPHASING_RATE, FMO_DISSIPATION_RATE, FMO_SINK_RATE)
}

/// Default initial state: excitation on site 1.
pub fn fmo_initial_state() -> InitialState {
    InitialState::pure_basis(5, 1)
}

// ---------------------------------------------------------------------------
// Radical-pair magnetoreception model
// ---------------------------------------------------------------------------

/// Bohr magneton in J/G (CGS-Gaussian magneton 9.27401e-21 erg/G).
pub const BOHR_MAGNETON_J_PER_G: f64 = 9.27401e-28;
/// Reduced Planck constant in J·s.
pub const HBAR_J_S: f64 = 1.05457e-34;

/// Parameters of the radical-pair model. Magnetic quantities in gauss,
/// the shelf decay rate in s⁻¹; time unit is seconds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RpmParameters {
    /// Polar angle of the external field, radians.
    pub theta: f64,
    /// Azimuthal angle of the external field, radians.
    pub phi: f64,
    /// Field strength, gauss.
    pub b0: f64,
    /// Anisotropic hyperfine tensor diagonal (a_x, a_y, a_z), gauss.
    pub hyperfine: (f64, f64, f64),
    /// Electron-spin g-factor.
    pub g_factor: f64,
    /// Shelving rate k of the eight decay channels, s⁻¹.
    pub k: f64,
}

impl Default for RpmParameters {
    fn default() -> Self {
        Self {
            theta: 0.0,
            phi: 0.0,
            b0: 0.47,
            hyperfine: (0.345, 0.345, 9.0),
            g_factor: 2.0,
            k: 1e4,
        }
    }
}

impl RpmParameters {
    pub fn validate(&self) -> Result<()> {
        if self.b0 < 0.0 {
            return Err(QsdError::InvalidArgument("b0 must be ≥ 0".into()));
        }
        if self.k <= 0.0 {
            return Err(QsdError::InvalidArgument("decay rate k must be > 0".into()));
        }
        Ok(())
    }
}

/// Basis layout of the 10-level radical-pair model:
/// indices 0..7 are pair states [s↑, s↓, t₀↑, t₀↓, t₊↑, t₊↓, t₋↑, t₋↓]
/// (electron singlet/triplet ⊗ nuclear spin), index 8 the singlet shelf
/// |S⟩, index 9 the triplet shelf |T⟩.
pub const RPM_DIM: usize = 10;
pub const RPM_SINGLET_SHELF: usize = 8;
pub const RPM_TRIPLET_SHELF: usize = 9;

/// Spin-Hamiltonian of the pair subspace in the product basis
/// |electron1, electron2, nucleus⟩ (each ↑=0/↓=1, electron 1 most
/// significant), then rotated to the singlet/triplet ⊗ nuclear basis.
///
/// H = (μ_B g/ħ) [B·(S₁+S₂) + I·Â·S₂] with spin-½ operators S = σ/2;
/// magnetic fields in gauss give H in rad/s.
fn rpm_pair_hamiltonian(params: &RpmParameters) -> CMat {
    let gyro = BOHR_MAGNETON_J_PER_G * params.g_factor / HBAR_J_S; // rad/(s·G)
    let (ax, ay, az) = params.hyperfine;
    let b = [
        params.b0 * params.theta.sin() * params.phi.cos(),
        params.b0 * params.theta.sin() * params.phi.sin(),
        params.b0 * params.theta.cos(),
    ];
    let half = Complex64::new(0.5, 0.0);
    let sx = sigma_x().mapv(|z| z * half);
    let sy = sigma_y().mapv(|z| z * half);
    let sz = sigma_z().mapv(|z| z * half);
    let spin = [sx, sy, sz];
    let id2 = identity(2);
    // Order of tensor factors: electron 1 ⊗ electron 2 ⊗ nucleus.
    let mut h = Array2::<Complex64>::zeros((8, 8));
    for (axis, a_axis) in [(0usize, ax), (1, ay), (2, az)] {
        let s1 = kron(&kron(&spin[axis], &id2), &id2);
        let s2 = kron(&kron(&id2, &spin[axis]), &id2);
        let i_n = kron(&kron(&id2, &id2), &spin[axis]);
        // Zeeman term: B · (S1 + S2)
        h = h + (&s1 + &s2).mapv(|z| z * Complex64::new(b[axis], 0.0));
        // Hyperfine term: I_axis A_axis S2_axis
        h = h + i_n.dot(&s2).mapv(|z| z * Complex64::new(a_axis, 0.0));
    }
    h.mapv(|z| z * Complex64::new(gyro, 0.0))
}

/// Unitary change of basis from pair basis [s,t₀,t₊,t₋]⊗[↑,↓] (columns) to
/// the electron product basis [↑↑,↑↓,↓↑,↓↓]⊗[↑,↓] (rows).
fn rpm_pair_to_product() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // Electron part: |s⟩=(|↑↓⟩−|↓↑⟩)/√2, |t0⟩=(|↑↓⟩+|↓↑⟩)/√2,
    // |t+⟩=|↑↑⟩, |t−⟩=|↓↓⟩. Product rows ordered ↑↑,↑↓,↓↑,↓↓.
    let mut e = Array2::<Complex64>::zeros((4, 4));
    e[[1, 0]] = Complex64::new(s, 0.0);
    e[[2, 0]] = Complex64::new(-s, 0.0);
    e[[1, 1]] = Complex64::new(s, 0.0);
    e[[2, 1]] = Complex64::new(s, 0.0);
    e[[0, 2]] = ONE;
    e[[3, 3]] = ONE;
    kron(&e, &identity(2))
}

/// Radical-pair model: coherent spin dynamics on the 8-dim pair subspace,
/// plus eight irreversible shelving channels √k |shelf⟩⟨pair-state|
/// (singlet states feed |S⟩, triplet states feed |T⟩).
pub fn build_rpm(params: &RpmParameters) -> Result<LindbladModel> {
    params.validate()?;
    let h_prod = rpm_pair_hamiltonian(params);
    let v = rpm_pair_to_product();
    let h_pair = adjoint(&v).dot(&h_prod).dot(&v);
    let mut ham = Array2::<Complex64>::zeros((RPM_DIM, RPM_DIM));
    ham.slice_mut(ndarray::s![0..8, 0..8]).assign(&h_pair);
    let sqrt_k = Complex64::new(params.k.sqrt(), 0.0);
    let mut jump_ops = Vec::with_capacity(8);
    for pair_state in 0..8 {
        let shelf = if pair_state < 2 {
            RPM_SINGLET_SHELF
        } else {
            RPM_TRIPLET_SHELF
        };
        jump_ops.push(transition(RPM_DIM, shelf, pair_state).mapv(|z| z * sqrt_k));
    }
    let observables = vec![
        (
            "singlet_yield".to_string(),
            projector(RPM_DIM, RPM_SINGLET_SHELF),
        ),
        (
            "triplet_yield".to_string(),
            projector(RPM_DIM, RPM_TRIPLET_SHELF),
        ),
    ];
    LindbladModel::new(
        ham,
        jump_ops,
        observables,
        "time in seconds; field in gauss; Hamiltonian in rad/s",
    )
}

/// Default initial state: unpolarized nuclear spin on the electron singlet,
/// ρ₀ = ½|s↑⟩⟨s↑| + ½|s↓⟩⟨s↓|.
pub fn rpm_initial_state() -> InitialState {
    InitialState::Mixture(vec![
        (0.5, StateVector::basis(RPM_DIM, 0)),
        (0.5, StateVector::basis(RPM_DIM, 1)),
    ])
}

// ---------------------------------------------------------------------------
// Two-level damped qubit (testing and convergence studies)
// ---------------------------------------------------------------------------

/// Qubit with H = ω σ_x and amplitude damping L = √γ σ⁻.
pub fn build_damped_qubit(omega: f64, gamma: f64) -> Result<LindbladModel> {
    let ham = sigma_x().mapv(|z| z * Complex64::new(omega, 0.0));
    let jump_ops = if gamma > 0.0 {
        vec![sigma_minus().mapv(|z| z * Complex64::new(gamma.sqrt(), 0.0))]
    } else {
        vec![]
    };
    let observables = vec![
        ("pop_0".to_string(), projector(2, 0)),
        ("pop_1".to_string(), projector(2, 1)),
    ];
    LindbladModel::new(ham, jump_ops, observables, "dimensionless")
}

// ---------------------------------------------------------------------------
// JSON model files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn to_cmat(&self, expect_dim: Option<usize>) -> Result<CMat> {
        let n = self.re.len();
        if let Some(d) = expect_dim {
            if n != d {
                return Err(QsdError::DimensionMismatch(format!(
                    "matrix has {n} rows, expected {d}"
                )));
            }
        }
        let mut m = Array2::<Complex64>::zeros((n, n));
        for (r, row) in self.re.iter().enumerate() {
            if row.len() != n {
                return Err(QsdError::DimensionMismatch(format!(
                    "row {r} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                m[[r, c]].re = v;
            }
        }
        if !self.im.is_empty() {
            if self.im.len() != n {
                return Err(QsdError::DimensionMismatch(
                    "imaginary part has wrong row count".into(),
                ));
            }
            for (r, row) in self.im.iter().enumerate() {
                if row.len() != n {
                    return Err(QsdError::DimensionMismatch(format!(
                        "imaginary row {r} has {} entries, expected {n}",
                        row.len()
                    )));
                }
                for (c, &v) in row.iter().enumerate() {
                    m[[r, c]].im = v;
                }
            }
        }
        Ok(m)
    }

    pub fn from_cmat(m: &CMat) -> Self {
        let n = m.nrows();
        let re = (0..n)
            .map(|r| (0..n).map(|c| m[[r, c]].re).collect())
            .collect();
        let im = (0..n)
            .map(|r| (0..n).map(|c| m[[r, c]].im).collect())
            .collect();
        Self { re, im }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub dim: usize,
    pub hamiltonian: MatrixJson,
    pub jump_ops: Vec<MatrixJson>,
    #[serde(default)]
    pub observables: Vec<(String, MatrixJson)>,
    #[serde(default)]
    pub unit_note: String,
}

/// Parse and validate a user-defined model from JSON text.
pub fn model_from_json(text: &str) -> Result<LindbladModel> {
    let raw: ModelJson = serde_json::from_str(text)
        .map_err(|e| QsdError::Config(format!("model JSON parse error: {e}")))?;
    let ham = raw.hamiltonian.to_cmat(Some(raw.dim))?;
    let jumps = raw
        .jump_ops
        .iter()
        .map(|mj| mj.to_cmat(Some(raw.dim)))
        .collect::<Result<Vec<_>>>()?;
    let mut observables = raw
        .observables
        .iter()
        .map(|(name, mj)| Ok((name.clone(), mj.to_cmat(Some(raw.dim))?)))
        .collect::<Result<Vec<_>>>()?;
    if observables.is_empty() {
        observables = (0..raw.dim)
            .map(|i| (format!("pop_{i}"), projector(raw.dim, i)))
            .collect();
    }
    LindbladModel::new(ham, jumps, observables, raw.unit_note)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{commutator, max_norm};

    #[test]
    fn tfim_two_site_structure() {
        let m = build_tfim(2, 1.0, 1.0, &[0.1, 0.1]).unwrap();
        assert_eq!(m.dim, 4);
        assert_eq!(m.jump_ops.len(), 2);
        // H = J σz⊗σz − h(σx⊗I + I⊗σx); check two frozen entries.
        // Diagonal: ⟨00|σzσz|00⟩ = +J.
        assert!((m.hamiltonian[[0, 0]].re - 1.0).abs() < 1e-14);
        // ⟨01|σzσz|01⟩ = −J.
        assert!((m.hamiltonian[[1, 1]].re + 1.0).abs() < 1e-14);
        // Off-diagonal from transverse field: ⟨00|H|01⟩ = −h.
        assert!((m.hamiltonian[[0, 1]].re + 1.0).abs() < 1e-14);
        // Jump operator on site 0 lowers the left qubit: |01⟩⟨11| entry.
        assert!((m.jump_ops[0][[1, 3]].re - 0.1f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn tfim_single_site_has_no_coupling() {
        let m = build_tfim(1, 5.0, 0.7, &[0.0]).unwrap();
        let expect = sigma_x().mapv(|z| z * Complex64::new(-0.7, 0.0));
        assert!(max_norm(&(&m.hamiltonian - &expect)) < 1e-14);
    }

    #[test]
    fn tfim_classical_limit_is_diagonal() {
        let m = build_tfim(2, 1.0, 0.0, &[0.0, 0.0]).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                if r != c {
                    assert!(m.hamiltonian[[r, c]].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn tfim_zero_coupling_commutes_with_global_flip() {
        let m = build_tfim(3, 0.0, 1.3, &[0.0, 0.0, 0.0]).unwrap();
        let flip = op_on_site(3, 0, &sigma_x())
            .dot(&op_on_site(3, 1, &sigma_x()))
            .dot(&op_on_site(3, 2, &sigma_x()));
        assert!(max_norm(&commutator(&m.hamiltonian, &flip)) < 1e-12);
    }

    #[test]
    fn fmo_matrix_entries_and_units() {
        let h_ev = fmo_hamiltonian_ev();
        assert!((h_ev[[1, 2]].re + 0.0129).abs() < 1e-15);
        assert!((h_ev[[1, 1]].re - 0.0267).abs() < 1e-15);
        assert!((h_ev[[2, 3]].re - 0.00404).abs() < 1e-15);
        assert!((h_ev[[1, 3]].re - 0.000632).abs() < 1e-15);
        let m = build_fmo().unwrap();
        assert_eq!(m.dim, 5);
        assert_eq!(m.jump_ops.len(), 7);
        // Stored Hamiltonian carries the table entries verbatim (ħ = 1).
        assert!((m.hamiltonian[[1, 1]].re - 0.0267).abs() < 1e-15);
        // Sink channel: |4⟩⟨3| entry with rate in the amplitude.
        assert!((m.jump_ops[6][[4, 3]].re - FMO_SINK_RATE.sqrt()).abs() < 1e-14);
        // Ground and sink rows of H vanish.
        for c in 0..5 {
            assert!(m.hamiltonian[[0, c]].norm() < 1e-15);
            assert!(m.hamiltonian[[4, c]].norm() < 1e-15);
        }
    }

    #[test]
    fn rpm_jump_operators_are_mutually_annihilating() {
        let m = build_rpm(&RpmParameters::default()).unwrap();
        assert_eq!(m.dim, RPM_DIM);
        assert_eq!(m.jump_ops.len(), 8);
        for a in &m.jump_ops {
            for b in &m.jump_ops {
                assert!(max_norm(&a.dot(b)) == 0.0);
                assert!(max_norm(&commutator(a, b)) == 0.0);
            }
        }
    }

    #[test]
    fn rpm_hamiltonian_acts_only_on_pair_subspace() {
        let mut params = RpmParameters::default();
        params.theta = 0.8;
        let m = build_rpm(&params).unwrap();
        for r in 8..10 {
            for c in 0..10 {
                assert!(m.hamiltonian[[r, c]].norm() == 0.0);
                assert!(m.hamiltonian[[c, r]].norm() == 0.0);
            }
        }
        // Scale sanity: ‖H‖ of order 1e7 rad/s for gauss-scale fields.
        let nrm = crate::matrix::spectral_norm(&m.hamiltonian);
        assert!(nrm > 1e6 && nrm < 1e9, "‖H‖ = {nrm:.3e}");
    }

    #[test]
    fn rpm_zero_field_zero_hyperfine_hamiltonian_vanishes() {
        let params = RpmParameters {
            b0: 1e-300,
            hyperfine: (0.0, 0.0, 0.0),
            ..Default::default()
        };
        let m = build_rpm(&params).unwrap();
        assert!(max_norm(&m.hamiltonian) < 1e-280);
    }

    #[test]
    fn rpm_basis_change_is_unitary() {
        let v = rpm_pair_to_product();
        let vv = adjoint(&v).dot(&v);
        assert!(max_norm(&(&vv - &identity(8))) < 1e-14);
    }

    #[test]
    fn initial_states_have_unit_trace_density() {
        for (init, dim) in [
            (tfim_initial_state(2), 4usize),
            (fmo_initial_state(), 5),
            (rpm_initial_state(), 10),
        ] {
            let rho = init.density_matrix();
            assert_eq!(rho.nrows(), dim);
            let tr = crate::matrix::trace(&rho);
            assert!((tr.re - 1.0).abs() < 1e-14 && tr.im.abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_sampling_hits_both_components() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let init = rpm_initial_state();
        let mut seen = [false, false];
        for _ in 0..64 {
            let s = init.sample(&mut rng);
            if s.amps[0].norm() > 0.5 {
                seen[0] = true;
            }
            if s.amps[1].norm() > 0.5 {
                seen[1] = true;
            }
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn model_json_round_trip() {
        let text = r#"{
            "dim": 2,
            "hamiltonian": {"re": [[0.0, 1.0], [1.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]},
            "jump_ops": [{"re": [[0.0, 0.5], [0.0, 0.0]]}],
            "unit_note": "test units"
        }"#;
        let m = model_from_json(text).unwrap();
        assert_eq!(m.dim, 2);
        assert_eq!(m.jump_ops.len(), 1);
        assert!((m.jump_ops[0][[0, 1]].re - 0.5).abs() < 1e-15);
        assert_eq!(m.observables.len(), 2); // default projectors
        // Non-Hermitian H must be rejected.
        let bad = r#"{
            "dim": 2,
            "hamiltonian": {"re": [[0.0, 1.0], [0.0, 0.0]]},
            "jump_ops": []
        }"#;
        assert!(model_from_json(bad).is_err());
    }

    #[test]
    fn damped_qubit_matches_construction() {
        let m = build_damped_qubit(0.0, 0.25).unwrap();
        assert!(max_norm(&m.hamiltonian) == 0.0);
        assert!((m.jump_ops[0][[0, 1]].re - 0.5).abs() < 1e-15);
    }
}
