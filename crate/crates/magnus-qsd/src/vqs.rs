//! Variational emulation of trajectory propagation on parameterized circuits.
//!
//! A state is represented as Γ·|ψ(Θ)⟩ where |ψ(Θ)⟩ is produced by a layered
//! ansatz of Pauli-string rotations exp(−iθQ/2) (plus optional fixed gates)
//! acting on |0…0⟩. Time evolution under a generally non-Hermitian generator
//! ℋ follows McLachlan's variational principle: the angle velocities solve
//! M Θ̇ = V with
//!
//!   M_ij = Re⟨∂_i ψ|∂_j ψ⟩,   V_i = Im⟨∂_i ψ|ℋ|ψ⟩,
//!
//! and the scalar prefactor obeys Γ̇ = Γ·Im⟨ψ|ℋ|ψ⟩, which reproduces the
//! norm drift of dψ/dt = −iℋψ. Derivative states are evaluated exactly by
//! inserting the rotation generator into the circuit (no finite differences):
//! for gate i, ∂_i ψ = −(i/2)·U_{i+1..N} Q_i R_i(θ_i) U_{1..i−1}|0…0⟩, so
//! M_ii = 1/4 identically.
//!
//! `vqs_trajectory` couples this to the stochastic exponential integrators:
//! each step's exponent Ω is converted to an effective generator ℋ = iΩ/Δ,
//! zero-padded to the qubit register, and integrated with `n_sub` fourth-order
//! Runge–Kutta substeps in which M and V are reassembled at every stage.
//! An optional Gaussian "shot-noise" knob perturbs each estimated matrix
//! element with variance 1/n_shots to mimic finite measurement sampling.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::magnus::{MagnusEngine, SchemeConfig, SchemeKind, UnravelingKind};
use crate::matrix::{inner, vec_norm, CMat, CVec, StateVector};
use crate::models::LindbladModel;
use crate::pauli::CompiledPauli;
use crate::wiener::{sample_increments, StreamKey, DEFAULT_P};

// ---------------------------------------------------------------------------
// Ansatz description
// ---------------------------------------------------------------------------

/// One circuit element, applied left to right (index 0 acts first on |0…0⟩).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnsatzElement {
    /// Parameterized rotation exp(−i θ Q / 2) for the Pauli string `Q`.
    Rotation(String),
    /// Non-parameterized Pauli-string gate applied as-is.
    FixedPauli(String),
    /// Non-parameterized CNOT; qubit 0 is the most significant bit.
    Cnot { control: usize, target: usize },
}

enum CompiledElement {
    Rotation(CompiledPauli),
    FixedPauli(CompiledPauli),
    /// Source-index table: out[r] = v[src[r]] (CNOT is an involutory
    /// permutation of the computational basis).
    Permutation(Vec<usize>),
}

/// Layered hardware-style ansatz over `n_qubits` qubits.
///
/// Parameters are assigned to `Rotation` elements in circuit order; fixed
/// gates may be interleaved anywhere.
pub struct HvaAnsatz {
    n_qubits: usize,
    dim: usize,
    elements: Vec<AnsatzElement>,
    compiled: Vec<CompiledElement>,
    n_params: usize,
}

impl HvaAnsatz {
    pub fn new(n_qubits: usize, elements: Vec<AnsatzElement>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > 20 {
            return Err(QsdError::InvalidArgument(format!(
                "unsupported qubit count {n_qubits}"
            )));
        }
        let dim = 1usize << n_qubits;
        let mut compiled = Vec::with_capacity(elements.len());
        let mut n_params = 0usize;
        for el in &elements {
            match el {
                AnsatzElement::Rotation(s) | AnsatzElement::FixedPauli(s) => {
                    if s.len() != n_qubits {
                        return Err(QsdError::InvalidArgument(format!(
                            "Pauli string \"{s}\" does not cover {n_qubits} qubits"
                        )));
                    }
                    let cp = CompiledPauli::new(s)?;
                    if matches!(el, AnsatzElement::Rotation(_)) {
                        n_params += 1;
                        compiled.push(CompiledElement::Rotation(cp));
                    } else {
                        compiled.push(CompiledElement::FixedPauli(cp));
                    }
                }
                AnsatzElement::Cnot { control, target } => {
                    if *control >= n_qubits || *target >= n_qubits || control == target {
                        return Err(QsdError::InvalidArgument(format!(
                            "invalid CNOT placement ({control}, {target}) on {n_qubits} qubits"
                        )));
                    }
                    let cmask = 1usize << (n_qubits - 1 - control);
                    let tmask = 1usize << (n_qubits - 1 - target);
                    let src = (0..dim)
                        .map(|r| if r & cmask != 0 { r ^ tmask } else { r })
                        .collect();
                    compiled.push(CompiledElement::Permutation(src));
                }
            }
        }
        Ok(Self {
            n_qubits,
            dim,
            elements,
            compiled,
            n_params,
        })
    }

    /// Prep elements followed by `blocks` repetitions of a generator block.
    /// Block entries are Pauli strings; a `"fixed:"` prefix or a
    /// `"CNOT c t"` form marks a non-parameterized element.
    pub fn layered(
        n_qubits: usize,
        prep: Vec<AnsatzElement>,
        block: &[&str],
        blocks: usize,
    ) -> Result<Self> {
        let mut elements = prep;
        for _ in 0..blocks {
            for entry in block {
                elements.push(parse_gate_entry(entry, true)?);
            }
        }
        Self::new(n_qubits, elements)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_count(&self) -> usize {
        self.n_params
    }

    pub fn elements(&self) -> &[AnsatzElement] {
        &self.elements
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params {
            return Err(QsdError::DimensionMismatch(format!(
                "ansatz takes {} parameters, got {}",
                self.n_params,
                theta.len()
            )));
        }
        if !theta.iter().all(|t| t.is_finite()) {
            return Err(QsdError::NonFinite("ansatz parameters".into()));
        }
        Ok(())
    }

    /// Forward pass; when `insert_after = Some(i)`, the generator of rotation
    /// `i` is applied immediately after that rotation, yielding the tangent
    /// construction used for exact derivatives.
    fn forward(&self, theta: &[f64], insert_after: Option<usize>) -> CVec {
        let mut v = CVec::zeros(self.dim);
        v[0] = Complex64::new(1.0, 0.0);
        let mut p = 0usize;
        for el in &self.compiled {
            match el {
                CompiledElement::Rotation(cp) => {
                    v = cp.apply_rotation(theta[p], &v);
                    if insert_after == Some(p) {
                        v = cp.apply(&v);
                    }
                    p += 1;
                }
                CompiledElement::FixedPauli(cp) => v = cp.apply(&v),
                CompiledElement::Permutation(src) => {
                    v = CVec::from_iter(src.iter().map(|&s| v[s]));
                }
            }
        }
        v
    }

    /// |ψ(Θ)⟩; unit norm by construction.
    pub fn statevector(&self, theta: &[f64]) -> Result<StateVector> {
        self.check_theta(theta)?;
        StateVector::new(self.forward(theta, None))
    }

    /// Unit-norm tangent state ξ_i with ∂_i ψ = −(i/2) ξ_i.
    pub fn tangent_state(&self, theta: &[f64], i: usize) -> Result<CVec> {
        self.check_theta(theta)?;
        if i >= self.n_params {
            return Err(QsdError::InvalidArgument(format!(
                "parameter index {i} out of range"
            )));
        }
        Ok(self.forward(theta, Some(i)))
    }

    /// Exact parameter derivative ∂|ψ(Θ)⟩/∂θ_i.
    pub fn derivative_state(&self, theta: &[f64], i: usize) -> Result<CVec> {
        let xi = self.tangent_state(theta, i)?;
        Ok(xi.mapv(|z| z * Complex64::new(0.0, -0.5)))
    }

    fn assemble_full(
        &self,
        theta: &[f64],
        h: &CMat,
        mut noise: Option<(&mut ChaCha8Rng, u64)>,
    ) -> Result<AssembledSystem> {
        self.check_theta(theta)?;
        if h.nrows() != self.dim || h.ncols() != self.dim {
            return Err(QsdError::DimensionMismatch(format!(
                "generator is {}×{} but the register dimension is {}",
                h.nrows(),
                h.ncols(),
                self.dim
            )));
        }
        let psi = self.forward(theta, None);
        let hpsi = h.dot(&psi);
        let xis: Vec<CVec> = (0..self.n_params)
            .map(|i| self.forward(theta, Some(i)))
            .collect();
        let m_dim = self.n_params;
        let mut m = Array2::<f64>::zeros((m_dim, m_dim));
        let mut v = Array1::<f64>::zeros(m_dim);
        for i in 0..m_dim {
            m[[i, i]] = 0.25;
            for j in (i + 1)..m_dim {
                let mij = 0.25 * inner(&xis[i], &xis[j]).re;
                m[[i, j]] = mij;
                m[[j, i]] = mij;
            }
            v[i] = 0.5 * inner(&xis[i], &hpsi).re;
        }
        if let Some((rng, shots)) = noise.as_mut() {
            use rand_distr::Distribution;
            let sigma = (1.0 / (*shots).max(1) as f64).sqrt();
            let normal = rand_distr::Normal::new(0.0, sigma)
                .map_err(|e| QsdError::InvalidArgument(e.to_string()))?;
            for i in 0..m_dim {
                for j in (i + 1)..m_dim {
                    let eps = normal.sample(rng);
                    m[[i, j]] += eps;
                    m[[j, i]] = m[[i, j]];
                }
                v[i] += normal.sample(rng);
            }
        }
        Ok(AssembledSystem { m, v, psi, hpsi })
    }

    /// McLachlan system for generator `h`: (M, V) with M_ij = Re⟨∂_iψ|∂_jψ⟩
    /// and V_i = Im⟨∂_iψ|ℋ|ψ⟩. With `noise = Some((rng, n_shots))`, every
    /// independently estimated entry receives a N(0, 1/n_shots) perturbation
    /// (the diagonal M_ii = 1/4 is known analytically and stays exact).
    pub fn assemble_m_v(
        &self,
        theta: &[f64],
        h: &CMat,
        noise: Option<(&mut ChaCha8Rng, u64)>,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let sys = self.assemble_full(theta, h, noise)?;
        Ok((sys.m, sys.v))
    }
}

fn parse_gate_entry(entry: &str, allow_rotation: bool) -> Result<AnsatzElement> {
    let trimmed = entry.trim();
    if let Some(rest) = trimmed.strip_prefix("fixed:") {
        return Ok(AnsatzElement::FixedPauli(rest.trim().to_string()));
    }
    if let Some(rest) = trimmed.strip_prefix("CNOT") {
        let parts: Vec<&str> = rest.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(QsdError::InvalidArgument(format!(
                "CNOT entry \"{trimmed}\" must be \"CNOT <control> <target>\""
            )));
        }
        let control = parts[0]
            .parse::<usize>()
            .map_err(|e| QsdError::InvalidArgument(format!("bad CNOT control: {e}")))?;
        let target = parts[1]
            .parse::<usize>()
            .map_err(|e| QsdError::InvalidArgument(format!("bad CNOT target: {e}")))?;
        return Ok(AnsatzElement::Cnot { control, target });
    }
    if allow_rotation {
        Ok(AnsatzElement::Rotation(trimmed.to_string()))
    } else {
        Ok(AnsatzElement::FixedPauli(trimmed.to_string()))
    }
}

struct AssembledSystem {
    m: Array2<f64>,
    v: Array1<f64>,
    psi: CVec,
    hpsi: CVec,
}

// ---------------------------------------------------------------------------
// Serializable ansatz description
// ---------------------------------------------------------------------------

/// JSON-loadable ansatz layout: prep gates (fixed), one generator block, and
/// a repetition count. Block entries follow `layered`'s conventions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    /// Applied before the parameterized blocks; entries are Pauli strings or
    /// "CNOT c t" placements, never parameterized.
    #[serde(default)]
    pub fixed_gates: Vec<String>,
    /// One block of generator entries, repeated `blocks` times.
    pub generators: Vec<String>,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
}

fn default_blocks() -> usize {
    1
}

impl AnsatzSpec {
    pub fn build(&self) -> Result<HvaAnsatz> {
        if self.blocks == 0 {
            return Err(QsdError::InvalidArgument(
                "ansatz needs at least one block".into(),
            ));
        }
        let mut prep = Vec::with_capacity(self.fixed_gates.len());
        for g in &self.fixed_gates {
            prep.push(parse_gate_entry(g, false)?);
        }
        let block: Vec<&str> = self.generators.iter().map(|s| s.as_str()).collect();
        HvaAnsatz::layered(self.n_qubits, prep, &block, self.blocks)
    }
}

pub fn ansatz_from_json(text: &str) -> Result<HvaAnsatz> {
    let spec: AnsatzSpec =
        serde_json::from_str(text).map_err(|e| QsdError::Config(format!("ansatz JSON: {e}")))?;
    spec.build()
}

pub fn ansatz_from_json_file(path: &std::path::Path) -> Result<HvaAnsatz> {
    let text = std::fs::read_to_string(path)?;
    ansatz_from_json(&text)
}

// ---------------------------------------------------------------------------
// Ansatz catalog
// ---------------------------------------------------------------------------

pub const TFIM_HVA_DEFAULT_BLOCKS: usize = 3;
pub const FMO_ANSATZ_DEFAULT_BLOCKS: usize = 4;

/// Hamiltonian-variational ansatz for the two-site transverse-field Ising
/// chain: X prep on both qubits (the doubly excited initial state), then per
/// block single-qubit X, Y, Z rotations on each site followed by a ZZ
/// rotation. Seven parameters per block.
pub fn tfim_hva(blocks: usize) -> HvaAnsatz {
    HvaAnsatz::layered(
        2,
        vec![
            AnsatzElement::FixedPauli("XI".into()),
            AnsatzElement::FixedPauli("IX".into()),
        ],
        &["IX", "XI", "IY", "YI", "IZ", "ZI", "ZZ"],
        blocks,
    )
    .expect("catalog ansatz is statically valid")
}

/// Hardware-style ansatz for the five-site pigment network padded to three
/// qubits: X prep on the last qubit selects the initial site, then per block
/// X, Y, Z rotations on every qubit plus nearest- and next-nearest ZZ
/// rotations. Twelve parameters per block.
pub fn fmo_ansatz(blocks: usize) -> HvaAnsatz {
    HvaAnsatz::layered(
        3,
        vec![AnsatzElement::FixedPauli("IIX".into())],
        &[
            "XII", "IXI", "IIX", "YII", "IYI", "IIY", "ZII", "IZI", "IIZ", "ZZI", "IZZ", "ZIZ",
        ],
        blocks,
    )
    .expect("catalog ansatz is statically valid")
}

// ---------------------------------------------------------------------------
// McLachlan integration
// ---------------------------------------------------------------------------

/// Variational state: scalar prefactor Γ and circuit angles Θ.
#[derive(Debug, Clone)]
pub struct VqsState {
    pub theta: Array1<f64>,
    pub gamma: f64,
}

impl VqsState {
    pub fn new(theta: Array1<f64>) -> Self {
        Self { theta, gamma: 1.0 }
    }

    pub fn all_finite(&self) -> bool {
        self.gamma.is_finite() && self.theta.iter().all(|t| t.is_finite())
    }
}

/// Options for a McLachlan step.
#[derive(Debug, Clone, Copy)]
pub struct McLachlanOptions {
    /// Tikhonov regularization added to M before solving.
    pub reg: f64,
    /// Relative eigenvalue cutoff for the pseudo-inverse fallback.
    pub pseudo_cutoff: f64,
    /// Simulated measurement shots; `None` disables sampling noise.
    pub shots: Option<u64>,
}

impl Default for McLachlanOptions {
    fn default() -> Self {
        Self {
            reg: 1e-8,
            pseudo_cutoff: 1e-12,
            shots: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct McLachlanDiag {
    /// Stages where Cholesky failed and the pseudo-inverse fallback was used.
    pub pseudo_inverse_stages: u64,
}

fn mclachlan_rhs(
    ansatz: &HvaAnsatz,
    theta: &Array1<f64>,
    gamma: f64,
    h: &CMat,
    opts: &McLachlanOptions,
    noise_rng: Option<&mut ChaCha8Rng>,
) -> Result<(Array1<f64>, f64, bool)> {
    let noise = match (noise_rng, opts.shots) {
        (Some(rng), Some(shots)) => Some((rng, shots)),
        _ => None,
    };
    let sys = ansatz.assemble_full(theta.as_slice().expect("contiguous"), h, noise)?;
    let n = ansatz.param_count();
    let mut a = sys.m;
    for i in 0..n {
        a[[i, i]] += opts.reg;
    }
    let (theta_dot, used_pseudo) = match crate::matrix::cholesky_solve(&a, &sys.v) {
        Some(x) => (x, false),
        None => {
            let x = crate::matrix::sym_pseudo_solve(&a, &sys.v, opts.pseudo_cutoff).map_err(
                |e| QsdError::Singular(format!("variational system unsolvable: {e}")),
            )?;
            (x, true)
        }
    };
    let gamma_dot = gamma * inner(&sys.psi, &sys.hpsi).im;
    Ok((theta_dot, gamma_dot, used_pseudo))
}

/// One classical fourth-order Runge–Kutta step of size `dt` on (Θ, Γ) under
/// the generator `h`; M and V are reassembled at every stage.
pub fn mclachlan_step(
    ansatz: &HvaAnsatz,
    state: &VqsState,
    h: &CMat,
    dt: f64,
    opts: &McLachlanOptions,
    mut noise_rng: Option<&mut ChaCha8Rng>,
) -> Result<(VqsState, McLachlanDiag)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(QsdError::InvalidArgument(format!(
            "substep size must be positive, got {dt}"
        )));
    }
    let mut diag = McLachlanDiag::default();
    let mut eval = |theta: &Array1<f64>,
                    gamma: f64,
                    rng: Option<&mut ChaCha8Rng>|
     -> Result<(Array1<f64>, f64)> {
        let (td, gd, pseudo) = mclachlan_rhs(ansatz, theta, gamma, h, opts, rng)?;
        if pseudo {
            diag.pseudo_inverse_stages += 1;
        }
        Ok((td, gd))
    };
    let (k1t, k1g) = eval(&state.theta, state.gamma, noise_rng.as_deref_mut())?;
    let (k2t, k2g) = eval(
        &(&state.theta + &(&k1t * (0.5 * dt))),
        state.gamma + 0.5 * dt * k1g,
        noise_rng.as_deref_mut(),
    )?;
    let (k3t, k3g) = eval(
        &(&state.theta + &(&k2t * (0.5 * dt))),
        state.gamma + 0.5 * dt * k2g,
        noise_rng.as_deref_mut(),
    )?;
    let (k4t, k4g) = eval(
        &(&state.theta + &(&k3t * dt)),
        state.gamma + dt * k3g,
        noise_rng.as_deref_mut(),
    )?;
    let theta =
        &state.theta + &((k1t + &k2t * 2.0 + &k3t * 2.0 + k4t) * (dt / 6.0));
    let gamma = state.gamma + dt / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
    let next = VqsState { theta, gamma };
    if !next.all_finite() {
        return Err(QsdError::NonFinite("variational state".into()));
    }
    Ok((next, diag))
}

// ---------------------------------------------------------------------------
// Stochastic trajectory emulation
// ---------------------------------------------------------------------------

/// Options for `vqs_trajectory`.
#[derive(Debug, Clone, Copy)]
pub struct VqsTrajectoryOptions {
    /// Runge–Kutta substeps per stochastic step.
    pub n_sub: usize,
    pub reg: f64,
    /// Fourier modes per channel in the increment sampler.
    pub fourier_terms: usize,
    pub shots: Option<u64>,
}

impl Default for VqsTrajectoryOptions {
    fn default() -> Self {
        Self {
            n_sub: 10,
            reg: 1e-8,
            fourier_terms: DEFAULT_P,
            shots: None,
        }
    }
}

/// Per-trajectory output of the variational emulation.
#[derive(Debug, Clone)]
pub struct VqsTrajectoryRecord {
    /// values[[obs, step]]; step 0 is the initial state. For the linear
    /// unraveling the recorded value is Γ²·⟨ψ(Θ)|O|ψ(Θ)⟩, matching the raw
    /// quadratic form of the unnormalized direct trajectory; for the
    /// norm-preserving unraveling it is the plain expectation.
    pub values: Array2<f64>,
    /// Γ at each recorded step (reset to 1 every step for the
    /// norm-preserving unraveling).
    pub gammas: Vec<f64>,
    pub final_theta: Array1<f64>,
    pub aborted_at: Option<u64>,
    pub abort_reason: Option<String>,
    pub radius_violations: u64,
    pub pseudo_inverse_stages: u64,
    /// Largest squared-amplitude weight outside the physical block.
    pub max_leakage: f64,
}

/// Run one stochastic trajectory entirely inside the variational manifold:
/// per step, the exponential integrator supplies Ω for the sampled
/// increments, the effective generator ℋ = iΩ/Δ is zero-padded to the qubit
/// register, and (Θ, Γ) advance through `n_sub` Runge–Kutta substeps.
///
/// The increment stream is keyed exactly as in the ensemble driver, so a
/// direct trajectory with the same `StreamKey` sees identical noise.
pub fn vqs_trajectory(
    model: &LindbladModel,
    config: SchemeConfig,
    ansatz: &HvaAnsatz,
    theta0: &[f64],
    delta: f64,
    n_steps: u64,
    key: StreamKey,
    opts: &VqsTrajectoryOptions,
) -> Result<VqsTrajectoryRecord> {
    if matches!(config.kind, SchemeKind::EulerMaruyama) {
        return Err(QsdError::InvalidArgument(
            "variational emulation needs an exponential integrator".into(),
        ));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(QsdError::InvalidArgument(format!(
            "step size must be positive, got {delta}"
        )));
    }
    if n_steps == 0 || opts.n_sub == 0 {
        return Err(QsdError::InvalidArgument(
            "need at least one step and one substep".into(),
        ));
    }
    let engine = MagnusEngine::new(model, config)?;
    let d_model = model.dim;
    let dim = ansatz.dim();
    if dim < d_model {
        return Err(QsdError::DimensionMismatch(format!(
            "register dimension {dim} cannot host a {d_model}-dimensional model"
        )));
    }
    let observables: Vec<(String, CMat)> = model
        .observables
        .iter()
        .map(|(name, op)| (name.clone(), pad_to(op, dim)))
        .collect();
    let n_obs = observables.len();
    let n_cols = n_steps as usize + 1;
    let mut values = Array2::<f64>::zeros((n_obs, n_cols));
    let mut gammas = vec![0.0f64; n_cols];
    let mut state = VqsState::new(Array1::from(theta0.to_vec()));
    ansatz.check_theta(theta0)?;
    let mc_opts = McLachlanOptions {
        reg: opts.reg,
        shots: opts.shots,
        ..McLachlanOptions::default()
    };
    let sub_dt = delta / opts.n_sub as f64;
    let linear = matches!(config.unraveling, UnravelingKind::Linear);

    let record = |state: &VqsState, col: usize, values: &mut Array2<f64>| -> Result<f64> {
        let psi = ansatz.statevector(state.theta.as_slice().expect("contiguous"))?;
        let scale = if linear { state.gamma * state.gamma } else { 1.0 };
        for (o, (_, op)) in observables.iter().enumerate() {
            values[[o, col]] = scale * psi.expectation(op).re;
        }
        let out_of_block: f64 = psi.amps.iter().skip(d_model).map(|z| z.norm_sqr()).sum();
        Ok(out_of_block)
    };

    let mut rec = VqsTrajectoryRecord {
        values: Array2::zeros((0, 0)),
        gammas: Vec::new(),
        final_theta: state.theta.clone(),
        aborted_at: None,
        abort_reason: None,
        radius_violations: 0,
        pseudo_inverse_stages: 0,
        max_leakage: 0.0,
    };
    rec.max_leakage = record(&state, 0, &mut values)?;
    gammas[0] = state.gamma;

    'steps: for step in 0..n_steps {
        let mut rng = key.rng_for_step(step);
        let inc = sample_increments(engine.channels(), delta, opts.fourier_terms, &mut rng)?;
        let psi_native = if matches!(config.unraveling, UnravelingKind::Nonlinear) {
            let full = ansatz.statevector(state.theta.as_slice().expect("contiguous"))?;
            let block = CVec::from_iter(full.amps.iter().take(d_model).copied());
            let norm = vec_norm(&block);
            if norm < 1e-6 {
                rec.aborted_at = Some(step);
                rec.abort_reason = Some("state left the physical block".into());
                break 'steps;
            }
            let mut sv = StateVector::new(block)?;
            sv.normalize()?;
            Some(sv)
        } else {
            None
        };
        let (omega, diag) = match engine.omega_with_diagnostics(psi_native.as_ref(), &inc) {
            Ok(pair) => pair,
            Err(QsdError::NonFinite(what)) => {
                rec.aborted_at = Some(step);
                rec.abort_reason = Some(format!("non-finite exponent: {what}"));
                break 'steps;
            }
            Err(e) => return Err(e),
        };
        if diag.radius_exceeded {
            rec.radius_violations += 1;
        }
        let h_step = pad_to(
            &omega.mapv(|z| z * Complex64::new(0.0, 1.0 / delta)),
            dim,
        );
        for _ in 0..opts.n_sub {
            match mclachlan_step(ansatz, &state, &h_step, sub_dt, &mc_opts, Some(&mut rng)) {
                Ok((next, d)) => {
                    rec.pseudo_inverse_stages += d.pseudo_inverse_stages;
                    state = next;
                }
                Err(QsdError::NonFinite(what)) => {
                    rec.aborted_at = Some(step);
                    rec.abort_reason = Some(format!("non-finite variational state: {what}"));
                    break 'steps;
                }
                Err(QsdError::Singular(what)) => {
                    rec.aborted_at = Some(step);
                    rec.abort_reason = Some(what);
                    break 'steps;
                }
                Err(e) => return Err(e),
            }
        }
        let leak = record(&state, step as usize + 1, &mut values)?;
        rec.max_leakage = rec.max_leakage.max(leak);
        gammas[step as usize + 1] = state.gamma;
        if !linear {
            state.gamma = 1.0;
        }
    }
    rec.values = values;
    rec.gammas = gammas;
    rec.final_theta = state.theta;
    Ok(rec)
}

fn pad_to(m: &CMat, dim: usize) -> CMat {
    if m.nrows() == dim {
        return m.clone();
    }
    let mut out = CMat::zeros((dim, dim));
    out.slice_mut(ndarray::s![0..m.nrows(), 0..m.ncols()]).assign(m);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnus::MagnusOrder;
    use crate::matrix::{adjoint, hermitian_eigenvalues, identity};
    use crate::models;
    use ndarray::Array1;
    use rand::{Rng, SeedableRng};

    fn random_ansatz() -> HvaAnsatz {
        HvaAnsatz::new(
            2,
            vec![
                AnsatzElement::Rotation("XI".into()),
                AnsatzElement::Rotation("IY".into()),
                AnsatzElement::Cnot { control: 0, target: 1 },
                AnsatzElement::Rotation("ZZ".into()),
                AnsatzElement::FixedPauli("IZ".into()),
                AnsatzElement::Rotation("YI".into()),
                AnsatzElement::Rotation("IX".into()),
            ],
        )
        .unwrap()
    }

    fn random_theta(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    fn random_complex_matrix(dim: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_shape_fn((dim, dim), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn zero_angles_without_prep_give_vacuum() {
        let ansatz =
            HvaAnsatz::layered(2, vec![], &["IX", "XI", "ZZ"], 2).unwrap();
        let psi = ansatz.statevector(&[0.0; 6]).unwrap();
        assert!((psi.amps[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        for k in 1..4 {
            assert!(psi.amps[k].norm() < 1e-15);
        }
    }

    #[test]
    fn tfim_catalog_prepares_doubly_excited_state() {
        let ansatz = tfim_hva(TFIM_HVA_DEFAULT_BLOCKS);
        assert_eq!(ansatz.param_count(), 21);
        let psi = ansatz.statevector(&vec![0.0; 21]).unwrap();
        assert!((psi.amps[3] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let fmo = fmo_ansatz(FMO_ANSATZ_DEFAULT_BLOCKS);
        assert_eq!(fmo.param_count(), 48);
        let psi0 = fmo.statevector(&vec![0.0; 48]).unwrap();
        assert!((psi0.amps[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_qubit_rotation_matches_closed_form() {
        let ansatz = HvaAnsatz::new(1, vec![AnsatzElement::Rotation("X".into())]).unwrap();
        let psi = ansatz.statevector(&[std::f64::consts::PI]).unwrap();
        assert!(psi.amps[0].norm() < 1e-15);
        assert!((psi.amps[1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        let half = ansatz.statevector(&[std::f64::consts::FRAC_PI_2]).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((half.amps[0] - Complex64::new(r, 0.0)).norm() < 1e-12);
        assert!((half.amps[1] - Complex64::new(0.0, -r)).norm() < 1e-12);
    }

    #[test]
    fn cnot_flips_target_when_control_set() {
        let ansatz = HvaAnsatz::new(
            2,
            vec![
                AnsatzElement::FixedPauli("XI".into()),
                AnsatzElement::Cnot { control: 0, target: 1 },
            ],
        )
        .unwrap();
        let psi = ansatz.statevector(&[]).unwrap();
        assert!((psi.amps[3] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn random_angles_give_unit_norm() {
        let ansatz = random_ansatz();
        for seed in 0..5u64 {
            let theta = random_theta(ansatz.param_count(), seed);
            let psi = ansatz.statevector(&theta).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let ansatz = random_ansatz();
        let theta = random_theta(ansatz.param_count(), 7);
        let h = 1e-5;
        for i in 0..ansatz.param_count() {
            let exact = ansatz.derivative_state(&theta, i).unwrap();
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fp = ansatz.statevector(&tp).unwrap().amps;
            let fm = ansatz.statevector(&tm).unwrap().amps;
            let fd = (&fp - &fm).mapv(|z| z / Complex64::new(2.0 * h, 0.0));
            let err = (&exact - &fd).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-6, "param {i}: finite-difference gap {err}");
        }
    }

    #[test]
    fn metric_diagonal_is_quarter_and_psd() {
        let ansatz = tfim_hva(2);
        let theta = random_theta(ansatz.param_count(), 11);
        let h = CMat::zeros((4, 4));
        let (m, _) = ansatz.assemble_m_v(&theta, &h, None).unwrap();
        for i in 0..m.nrows() {
            assert!((m[[i, i]] - 0.25).abs() < 1e-12);
            for j in 0..m.ncols() {
                assert!((m[[i, j]] - m[[j, i]]).abs() < 1e-14);
            }
        }
        let mc = m.mapv(|x| Complex64::new(x, 0.0));
        let eigs = hermitian_eigenvalues(&mc).unwrap();
        assert!(eigs[0] >= -1e-10, "metric not PSD: min eig {}", eigs[0]);
    }

    #[test]
    fn zero_generator_gives_zero_forcing() {
        let ansatz = random_ansatz();
        let theta = random_theta(ansatz.param_count(), 3);
        let h = CMat::zeros((4, 4));
        let (_, v) = ansatz.assemble_m_v(&theta, &h, None).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn metric_and_forcing_match_finite_difference() {
        let ansatz = random_ansatz();
        let theta = random_theta(ansatz.param_count(), 13);
        let h = random_complex_matrix(4, 17);
        let (m, v) = ansatz.assemble_m_v(&theta, &h, None).unwrap();
        let n = ansatz.param_count();
        let step = 1e-5;
        let deriv: Vec<CVec> = (0..n)
            .map(|i| {
                let mut tp = theta.clone();
                tp[i] += step;
                let mut tm = theta.clone();
                tm[i] -= step;
                (&ansatz.statevector(&tp).unwrap().amps - &ansatz.statevector(&tm).unwrap().amps)
                    .mapv(|z| z / Complex64::new(2.0 * step, 0.0))
            })
            .collect();
        let psi = ansatz.statevector(&theta).unwrap().amps;
        let hpsi = h.dot(&psi);
        for i in 0..n {
            let v_fd = inner(&deriv[i], &hpsi).im;
            assert!((v[i] - v_fd).abs() < 1e-6, "V[{i}]: {} vs {}", v[i], v_fd);
            for j in 0..n {
                let m_fd = inner(&deriv[i], &deriv[j]).re;
                assert!(
                    (m[[i, j]] - m_fd).abs() < 1e-6,
                    "M[{i},{j}]: {} vs {}",
                    m[[i, j]],
                    m_fd
                );
            }
        }
    }

    #[test]
    fn pure_decay_freezes_angles_and_damps_gamma() {
        let ansatz = random_ansatz();
        let theta0 = Array1::from(random_theta(ansatz.param_count(), 23));
        let kappa = 0.3;
        let h = identity(4).mapv(|z| z * Complex64::new(0.0, -kappa));
        let opts = McLachlanOptions::default();
        let mut state = VqsState::new(theta0.clone());
        let dt = 0.01;
        for _ in 0..10 {
            let (next, _) = mclachlan_step(&ansatz, &state, &h, dt, &opts, None).unwrap();
            state = next;
        }
        for i in 0..theta0.len() {
            assert!((state.theta[i] - theta0[i]).abs() < 1e-9);
        }
        let expected = (-kappa * 0.1f64).exp();
        assert!(
            (state.gamma - expected).abs() < 1e-10,
            "gamma {} vs {}",
            state.gamma,
            expected
        );
    }

    #[test]
    fn hermitian_generator_preserves_gamma() {
        let ansatz = random_ansatz();
        let raw = random_complex_matrix(4, 29);
        let herm = (&raw + &adjoint(&raw)).mapv(|z| z * Complex64::new(0.5, 0.0));
        let opts = McLachlanOptions::default();
        let mut state = VqsState::new(Array1::from(random_theta(ansatz.param_count(), 31)));
        for _ in 0..20 {
            let (next, _) = mclachlan_step(&ansatz, &state, &herm, 0.01, &opts, None).unwrap();
            state = next;
        }
        assert!((state.gamma - 1.0).abs() < 1e-8, "gamma drifted: {}", state.gamma);
    }

    #[test]
    fn noise_free_trajectory_tracks_unitary_evolution() {
        let h = crate::models::build_damped_qubit(1.0, 0.0).unwrap();
        let ansatz = HvaAnsatz::layered(1, vec![], &["X", "Y", "Z"], 3).unwrap();
        let cfg = SchemeConfig::new(
            SchemeKind::Magnus(MagnusOrder::First),
            UnravelingKind::Linear,
        );
        let delta = 0.05;
        let n_steps = 40u64;
        let rec = vqs_trajectory(
            &h,
            cfg,
            &ansatz,
            &vec![0.0; ansatz.param_count()],
            delta,
            n_steps,
            StreamKey::new(1, 0),
            &VqsTrajectoryOptions::default(),
        )
        .unwrap();
        assert!(rec.aborted_at.is_none(), "{:?}", rec.abort_reason);
        for s in 0..=n_steps as usize {
            let t = s as f64 * delta;
            let pop0 = t.cos() * t.cos();
            assert!(
                (rec.values[[0, s]] - pop0).abs() < 1e-4,
                "step {s}: {} vs {}",
                rec.values[[0, s]],
                pop0
            );
            assert!((rec.gammas[s] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_tfim_emulation_shadows_direct_trajectory() {
        let model = models::build_tfim(2, 1.0, 1.0, &[0.1, 0.1]).unwrap();
        let cfg = SchemeConfig::new(
            SchemeKind::Magnus(MagnusOrder::First),
            UnravelingKind::Linear,
        );
        let delta = 0.25;
        let n_steps = 20u64;
        let key = StreamKey::new(0x7f1, 0);
        let engine = MagnusEngine::new(&model, cfg).unwrap();
        let obs: Vec<CMat> = model.observables.iter().map(|(_, o)| o.clone()).collect();
        let direct = crate::ensemble::run_trajectory(
            &engine,
            &models::tfim_initial_state(2),
            delta,
            n_steps,
            &obs,
            key,
            DEFAULT_P,
        )
        .unwrap();
        assert!(direct.aborted_at.is_none());
        let ansatz = tfim_hva(TFIM_HVA_DEFAULT_BLOCKS);
        let rec = vqs_trajectory(
            &model,
            cfg,
            &ansatz,
            &vec![0.0; ansatz.param_count()],
            delta,
            n_steps,
            key,
            &VqsTrajectoryOptions::default(),
        )
        .unwrap();
        assert!(rec.aborted_at.is_none(), "{:?}", rec.abort_reason);
        let mut worst = 0.0f64;
        for o in 0..obs.len() {
            for s in 0..=n_steps as usize {
                worst = worst.max((rec.values[[o, s]] - direct.values[[o, s]]).abs());
            }
        }
        assert!(worst <= 1e-2, "worst population gap {worst}");
    }

    #[test]
    fn nonlinear_emulation_shadows_direct_trajectory() {
        let model = models::build_damped_qubit(1.0, 0.4).unwrap();
        let cfg = SchemeConfig::new(
            SchemeKind::Magnus(MagnusOrder::First),
            UnravelingKind::Nonlinear,
        );
        let delta = 0.05;
        let n_steps = 20u64;
        let key = StreamKey::new(0x9a2, 0);
        let engine = MagnusEngine::new(&model, cfg).unwrap();
        let obs: Vec<CMat> = model.observables.iter().map(|(_, o)| o.clone()).collect();
        let init = crate::models::InitialState::pure_basis(2, 0);
        let direct = crate::ensemble::run_trajectory(
            &engine, &init, delta, n_steps, &obs, key, DEFAULT_P,
        )
        .unwrap();
        assert!(direct.aborted_at.is_none());
        let ansatz = HvaAnsatz::layered(1, vec![], &["X", "Y", "Z"], 3).unwrap();
        let rec = vqs_trajectory(
            &model,
            cfg,
            &ansatz,
            &vec![0.0; ansatz.param_count()],
            delta,
            n_steps,
            key,
            &VqsTrajectoryOptions::default(),
        )
        .unwrap();
        assert!(rec.aborted_at.is_none(), "{:?}", rec.abort_reason);
        let mut worst = 0.0f64;
        for o in 0..obs.len() {
            for s in 0..=n_steps as usize {
                worst = worst.max((rec.values[[o, s]] - direct.values[[o, s]]).abs());
            }
        }
        assert!(worst <= 2e-2, "worst population gap {worst}");
    }

    #[test]
    fn ansatz_json_round_trip() {
        let text = r#"{
            "n_qubits": 2,
            "fixed_gates": ["XI", "CNOT 0 1"],
            "generators": ["IX", "XI", "fixed:ZZ", "CNOT 1 0", "ZZ"],
            "blocks": 2
        }"#;
        let ansatz = ansatz_from_json(text).unwrap();
        assert_eq!(ansatz.n_qubits(), 2);
        assert_eq!(ansatz.param_count(), 6);
        assert_eq!(ansatz.elements().len(), 12);
        let psi = ansatz.statevector(&[0.0; 6]).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        assert!(ansatz_from_json("{\"n_qubits\": 2}").is_err());
    }

    #[test]
    fn shot_noise_perturbs_but_preserves_structure() {
        let ansatz = tfim_hva(1);
        let theta = random_theta(ansatz.param_count(), 41);
        let h = random_complex_matrix(4, 43);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m_noisy, v_noisy) = ansatz
            .assemble_m_v(&theta, &h, Some((&mut rng, 400)))
            .unwrap();
        let (m_clean, v_clean) = ansatz.assemble_m_v(&theta, &h, None).unwrap();
        let mut changed = false;
        for i in 0..m_noisy.nrows() {
            assert!((m_noisy[[i, i]] - 0.25).abs() < 1e-12);
            for j in 0..m_noisy.ncols() {
                assert!((m_noisy[[i, j]] - m_noisy[[j, i]]).abs() < 1e-14);
                if (m_noisy[[i, j]] - m_clean[[i, j]]).abs() > 1e-6 {
                    changed = true;
                }
            }
        }
        if (0..v_noisy.len()).any(|i| (v_noisy[i] - v_clean[i]).abs() > 1e-6) {
            changed = true;
        }
        assert!(changed, "shot noise had no effect");
    }
}
