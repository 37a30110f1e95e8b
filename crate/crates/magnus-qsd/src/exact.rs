//! Exact Lindblad propagation through the vectorized superoperator.
//!
//! The generator 𝓛[ρ] = −i[H,ρ] + Σ_k (L_kρL_k† − ½{L_k†L_k, ρ}) is
//! assembled as an N²×N² matrix over column-stacked density matrices and
//! exponentiated densely. Model dimensions here top out at N = 10, so the
//! dense route is cheap and serves as the ground-truth oracle for every
//! ensemble comparison.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{QsdError, Result};
use crate::expm::expm;
use crate::matrix::{
    self, adjoint, commutator, identity, kron, trace, CMat, CVec,
};
use crate::models::LindbladModel;

/// Density matrix with validation against Hermiticity, unit trace, and
/// positivity (up to numerical tolerances).
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub entries: CMat,
}

impl DensityMatrix {
    pub fn new(entries: CMat) -> Result<Self> {
        let dm = Self { entries };
        dm.validate()?;
        Ok(dm)
    }

    /// Build without validation (internal stepping); call `validate` at
    /// reporting boundaries.
    pub fn new_unchecked(entries: CMat) -> Self {
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.entries.nrows();
        if self.entries.ncols() != n || n == 0 {
            return Err(QsdError::DimensionMismatch("density matrix not square".into()));
        }
        if !matrix::all_finite(&self.entries) {
            return Err(QsdError::NonFinite("density matrix".into()));
        }
        if matrix::hermiticity_defect(&self.entries) > 1e-10 {
            return Err(QsdError::InvalidArgument(format!(
                "density matrix not Hermitian (defect {:.3e})",
                matrix::hermiticity_defect(&self.entries)
            )));
        }
        let tr = trace(&self.entries);
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(QsdError::InvalidArgument(format!(
                "density matrix trace {tr} is not 1"
            )));
        }
        let evals = matrix::hermitian_eigenvalues(&self.entries)?;
        if let Some(&min) = evals.first() {
            if min < -1e-8 {
                return Err(QsdError::InvalidArgument(format!(
                    "density matrix has negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Tr(ρ O), reported as the real part (observables are Hermitian).
    pub fn expectation(&self, op: &CMat) -> f64 {
        trace(&op.dot(&self.entries)).re
    }
}

/// Column-stacking vectorization: entry (r, c) lands at index c·N + r.
pub fn vec_col(m: &CMat) -> CVec {
    let n = m.nrows();
    let mut v = CVec::zeros(n * n);
    for c in 0..n {
        for r in 0..n {
            v[c * n + r] = m[[r, c]];
        }
    }
    v
}

/// Inverse of `vec_col`.
pub fn unvec_col(v: &CVec, n: usize) -> CMat {
    let mut m = Array2::<Complex64>::zeros((n, n));
    for c in 0..n {
        for r in 0..n {
            m[[r, c]] = v[c * n + r];
        }
    }
    m
}

/// Dense matrix representation of the Lindblad generator acting on
/// column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Superoperator {
    /// Hilbert-space dimension N (the matrix is N²×N²).
    pub dim: usize,
    pub matrix: CMat,
}

impl Superoperator {
    /// Apply the generator: 𝓛[ρ] as a dense matrix.
    pub fn apply(&self, rho: &CMat) -> CMat {
        unvec_col(&self.matrix.dot(&vec_col(rho)), self.dim)
    }
}

/// Assemble the vectorized generator. With vec(AXB) = (Bᵀ ⊗ A) vec(X):
/// 𝓛 = −i(I⊗H − Hᵀ⊗I) + Σ_k [ L̄_k ⊗ L_k − ½ I⊗(L_k†L_k) − ½ (L_k†L_k)ᵀ⊗I ].
pub fn build_superoperator(model: &LindbladModel) -> Superoperator {
    let n = model.dim;
    let id = identity(n);
    let h = &model.hamiltonian;
    let ht = h.t().to_owned();
    let mut gen = (&kron(&id, h) - &kron(&ht, &id)).mapv(|z| z * Complex64::new(0.0, -1.0));
    for l in &model.jump_ops {
        let l_conj = l.mapv(|z| z.conj());
        let ldl = adjoint(l).dot(l);
        let ldl_t = ldl.t().to_owned();
        let half = Complex64::new(0.5, 0.0);
        gen = gen + kron(&l_conj, l)
            - kron(&id, &ldl).mapv(|z| z * half)
            - kron(&ldl_t, &id).mapv(|z| z * half);
    }
    Superoperator { dim: n, matrix: gen }
}

/// Direct dense evaluation of 𝓛[ρ], used as an independent cross-check of
/// the vectorized assembly.
pub fn lindblad_apply_dense(model: &LindbladModel, rho: &CMat) -> CMat {
    let mut out = commutator(&model.hamiltonian, rho).mapv(|z| z * Complex64::new(0.0, -1.0));
    for l in &model.jump_ops {
        let ld = adjoint(l);
        let ldl = ld.dot(l);
        let half = Complex64::new(0.5, 0.0);
        out = out + l.dot(rho).dot(&ld)
            - ldl.dot(rho).mapv(|z| z * half)
            - rho.dot(&ldl).mapv(|z| z * half);
    }
    out
}

/// Exact propagation: vec(ρ_t) = e^{𝓛 t} vec(ρ₀).
pub fn propagate_exact(model: &LindbladModel, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if t < 0.0 {
        return Err(QsdError::InvalidArgument("propagation time must be ≥ 0".into()));
    }
    if rho0.dim() != model.dim {
        return Err(QsdError::DimensionMismatch("rho0 dimension != model".into()));
    }
    let sop = build_superoperator(model);
    let prop = expm(&sop.matrix.mapv(|z| z * Complex64::new(t, 0.0)))?;
    let v = prop.dot(&vec_col(&rho0.entries));
    if !matrix::vec_all_finite(&v) {
        return Err(QsdError::NonFinite("exact propagation output".into()));
    }
    Ok(DensityMatrix::new_unchecked(unvec_col(&v, model.dim)))
}

/// Exact time series on a uniform grid: ρ at t = 0, Δ, 2Δ, …, nΔ.
/// The single-step propagator e^{𝓛Δ} is built once and applied repeatedly.
pub fn propagate_series(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    delta: f64,
    n_steps: usize,
) -> Result<Vec<DensityMatrix>> {
    if delta <= 0.0 {
        return Err(QsdError::InvalidArgument("delta must be > 0".into()));
    }
    if rho0.dim() != model.dim {
        return Err(QsdError::DimensionMismatch("rho0 dimension != model".into()));
    }
    let sop = build_superoperator(model);
    let step = expm(&sop.matrix.mapv(|z| z * Complex64::new(delta, 0.0)))?;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut v = vec_col(&rho0.entries);
    out.push(rho0.clone());
    for k in 0..n_steps {
        v = step.dot(&v);
        if !matrix::vec_all_finite(&v) {
            return Err(QsdError::NonFinite(format!(
                "exact propagation became non-finite at step {}",
                k + 1
            )));
        }
        out.push(DensityMatrix::new_unchecked(unvec_col(&v, model.dim)));
    }
    Ok(out)
}

/// Long-time propagation with a residual report. The returned flag is true
/// when ‖𝓛[ρ]‖_F still exceeds `tol` at `t_stop` (warning, not failure).
pub struct SteadyStateResult {
    pub rho: DensityMatrix,
    pub residual: f64,
    pub above_tol: bool,
}

pub fn steady_state(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t_stop: f64,
    tol: f64,
) -> Result<SteadyStateResult> {
    if t_stop <= 0.0 {
        return Err(QsdError::InvalidArgument("t_stop must be > 0".into()));
    }
    let rho = propagate_exact(model, rho0, t_stop)?;
    let sop = build_superoperator(model);
    let residual = matrix::frobenius_norm(&sop.apply(&rho.entries));
    Ok(SteadyStateResult {
        above_tol: residual > tol,
        residual,
        rho,
    })
}

/// Observable time series Tr(ρ_t O) for each named model observable.
pub fn observable_series(
    series: &[DensityMatrix],
    observables: &[(String, CMat)],
) -> Vec<(String, Vec<f64>)> {
    observables
        .iter()
        .map(|(name, op)| {
            (
                name.clone(),
                series.iter().map(|rho| rho.expectation(op)).collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{max_norm, ONE};
    use crate::models::{
        build_damped_qubit, build_fmo, build_rpm, build_tfim, fmo_initial_state,
        projector, rpm_initial_state, RpmParameters, RPM_SINGLET_SHELF, RPM_TRIPLET_SHELF,
    };
    use crate::models::InitialState;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_density(n: usize, rng: &mut ChaCha8Rng) -> CMat {
        let g = Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let pos = g.dot(&adjoint(&g));
        let tr = trace(&pos);
        pos.mapv(|z| z / tr)
    }

    #[test]
    fn zero_model_gives_zero_generator() {
        let m = LindbladModel::new(
            Array2::zeros((3, 3)),
            vec![],
            vec![],
            "",
        )
        .unwrap();
        let sop = build_superoperator(&m);
        assert!(max_norm(&sop.matrix) == 0.0);
    }

    #[test]
    fn generator_is_trace_free_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let models = [
            build_damped_qubit(1.0, 0.4).unwrap(),
            build_tfim(2, 1.0, 1.0, &[0.1, 0.1]).unwrap(),
            build_fmo().unwrap(),
        ];
        for model in &models {
            let sop = build_superoperator(model);
            for _ in 0..34 {
                let rho = random_density(model.dim, &mut rng);
                let img = sop.apply(&rho);
                assert!(trace(&img).norm() < 1e-10 * (1.0 + max_norm(&img)));
            }
        }
    }

    #[test]
    fn vectorized_generator_matches_dense_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for model in [
            build_damped_qubit(0.7, 0.3).unwrap(),
            build_fmo().unwrap(),
            build_rpm(&RpmParameters {
                theta: 1.1,
                ..Default::default()
            })
            .unwrap(),
        ] {
            let sop = build_superoperator(&model);
            for _ in 0..5 {
                let rho = random_density(model.dim, &mut rng);
                let via_sop = sop.apply(&rho);
                let direct = lindblad_apply_dense(&model, &rho);
                let scale = max_norm(&direct).max(1.0);
                assert!(max_norm(&(&via_sop - &direct)) / scale < 1e-12);
            }
        }
    }

    #[test]
    fn amplitude_damping_closed_form() {
        // H = 0, L = √γ σ⁻: ρ₁₁(t) = ρ₁₁(0) e^{−γt},
        // ρ₀₁(t) = ρ₀₁(0) e^{−γt/2}. This test pins the vectorization
        // convention; a row-stacking sign slip would break it.
        let gamma = 0.6;
        let model = build_damped_qubit(0.0, gamma).unwrap();
        let half = Complex64::new(0.5, 0.0);
        let rho0 = DensityMatrix::new(array![[half, half], [half, half]]).unwrap();
        for t in [0.5 / gamma, 1.0 / gamma, 2.0 / gamma] {
            let rho = propagate_exact(&model, &rho0, t).unwrap();
            let p11 = rho.entries[[1, 1]].re;
            let expect_p11 = 0.5 * (-gamma * t).exp();
            assert!((p11 - expect_p11).abs() < 1e-10, "t={t}");
            let c01 = rho.entries[[0, 1]];
            let expect_c01 = 0.5 * (-gamma * t / 2.0).exp();
            assert!((c01.re - expect_c01).abs() < 1e-10 && c01.im.abs() < 1e-12);
        }
    }

    #[test]
    fn excited_population_decays_exponentially() {
        let gamma = 0.6;
        let model = build_damped_qubit(0.0, gamma).unwrap();
        let rho0 = DensityMatrix::new(array![
            [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), ONE]
        ])
        .unwrap();
        let rho = propagate_exact(&model, &rho0, 1.0 / gamma).unwrap();
        assert!((rho.entries[[1, 1]].re - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn zero_time_is_identity() {
        let model = build_fmo().unwrap();
        let rho0 = DensityMatrix::new(fmo_initial_state().density_matrix()).unwrap();
        let rho = propagate_exact(&model, &rho0, 0.0).unwrap();
        assert!(max_norm(&(&rho.entries - &rho0.entries)) < 1e-12);
    }

    #[test]
    fn propagation_preserves_density_matrix_invariants() {
        let model = build_fmo().unwrap();
        let rho0 = DensityMatrix::new(fmo_initial_state().density_matrix()).unwrap();
        let series = propagate_series(&model, &rho0, 5.0, 100).unwrap();
        for rho in &series {
            rho.validate().unwrap();
        }
    }

    #[test]
    fn semigroup_property_on_damped_qubit() {
        let model = build_damped_qubit(0.9, 0.35).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let rho0 = DensityMatrix::new(random_density(2, &mut rng)).unwrap();
        let (t1, t2) = (0.37, 0.81);
        let direct = propagate_exact(&model, &rho0, t1 + t2).unwrap();
        let mid = propagate_exact(&model, &rho0, t1).unwrap();
        let composed = propagate_exact(&model, &mid, t2).unwrap();
        assert!(max_norm(&(&direct.entries - &composed.entries)) < 1e-9);
    }

    #[test]
    fn pure_dephasing_kills_coherences_only() {
        // L = √γ σ_z: fixed point is the diagonal of ρ₀.
        let gamma: f64 = 2.0;
        let l = crate::models::sigma_z().mapv(|z| z * Complex64::new(gamma.sqrt(), 0.0));
        let model = LindbladModel::new(Array2::zeros((2, 2)), vec![l], vec![], "").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let rho0 = DensityMatrix::new(random_density(2, &mut rng)).unwrap();
        let res = steady_state(&model, &rho0, 20.0, 1e-8).unwrap();
        assert!(!res.above_tol, "residual {:.3e}", res.residual);
        assert!((res.rho.entries[[0, 0]] - rho0.entries[[0, 0]]).norm() < 1e-9);
        assert!((res.rho.entries[[1, 1]] - rho0.entries[[1, 1]]).norm() < 1e-9);
        assert!(res.rho.entries[[0, 1]].norm() < 1e-9);
    }

    #[test]
    fn exciton_population_reaches_ground_and_sink() {
        let model = build_fmo().unwrap();
        let rho0 = DensityMatrix::new(fmo_initial_state().density_matrix()).unwrap();
        let p04 = |rho: &DensityMatrix| rho.entries[[0, 0]].re + rho.entries[[4, 4]].re;
        let early = propagate_exact(&model, &rho0, 1e4).unwrap();
        let late = propagate_exact(&model, &rho0, 1e5).unwrap();
        assert!(p04(&late) >= p04(&early) - 1e-10, "absorbed population must grow");
        assert!(p04(&late) > 0.98, "pop_0+pop_4 = {}", p04(&late));
    }

    #[test]
    fn trivial_radical_pair_routes_by_initial_spin() {
        // Zero field and zero hyperfine coupling: no singlet↔triplet mixing,
        // so the whole population lands on the shelf matching ρ₀.
        let params = RpmParameters {
            b0: 1e-300,
            hyperfine: (0.0, 0.0, 0.0),
            ..Default::default()
        };
        let model = build_rpm(&params).unwrap();
        let t_long = 40.0 / params.k; // k·t = 40 ⇒ pair population e^{−40}
        let rho_s0 = DensityMatrix::new(rpm_initial_state().density_matrix()).unwrap();
        let out = propagate_exact(&model, &rho_s0, t_long).unwrap();
        let ys = out.expectation(&projector(10, RPM_SINGLET_SHELF));
        let yt = out.expectation(&projector(10, RPM_TRIPLET_SHELF));
        assert!((ys - 1.0).abs() < 1e-10 && yt.abs() < 1e-12);
        // Triplet start routes to the triplet shelf.
        let init_t = InitialState::pure_basis(10, 4); // |t₊ ↑⟩
        let rho_t0 = DensityMatrix::new(init_t.density_matrix()).unwrap();
        let out_t = propagate_exact(&model, &rho_t0, t_long).unwrap();
        assert!((out_t.expectation(&projector(10, RPM_TRIPLET_SHELF)) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn purity_preserved_without_dissipation() {
        let model = crate::models::build_fmo_with_rates(0.0, 0.0, 0.0).unwrap();
        let rho0 = DensityMatrix::new(fmo_initial_state().density_matrix()).unwrap();
        let rho = propagate_exact(&model, &rho0, 300.0).unwrap();
        let purity = trace(&rho.entries.dot(&rho.entries)).re;
        assert!((purity - 1.0).abs() < 1e-9, "purity {purity}");
    }
}
