//! Per-step sampling of Wiener increments and iterated Stratonovich
//! integral coefficients via the Fourier (Brownian-bridge) expansion
//! (Kloeden & Platen, *Numerical Solution of Stochastic Differential
//! Equations*, Springer 1992, ch. 5.8).
//!
//! Conventions, with Δ the step and W_t the bridge-expanded path
//! W_t = (t/Δ)W + a₀/2 + Σ_r (a_r cos(2πrt/Δ) + b_r sin(2πrt/Δ)):
//!
//! * multi-index integrals J_{α₁…α_k} nest with α₁ innermost (earliest
//!   time); index 0 means ds, index j ≥ 1 means ∘dW^j;
//! * W ~ N(0,Δ), a₀ ~ N(0,Δ/3), a_r,b_r ~ N(0, Δ/(2π²r²)) independent;
//! * series are truncated at `p` terms with mean-square error ≤ Δ²/(2π²p).
//!
//! Closed forms assembled here (math channel j ↔ code index j−1):
//!   J_{j0} = Δ(W+a₀)/2,  J_{0j} = Δ(W−a₀)/2,
//!   ½(J_{ji}−J_{ij}) = ½(a_{j,0}W^i − a_{i,0}W^j) + π Σ_r r(a_{j,r}b_{i,r} − b_{j,r}a_{i,r}),
//!   c2_j = ½(J_{j0}−J_{0j}) = Δa_{j,0}/2                      ~ N(0, Δ³/12),
//!   c3_j = ⅓(J_{0j0}−J_{j00}) − (Δ/12)(J_{j0}−J_{0j}) = ½J_{0j0} − (Δ²/12)W^j
//!        = −Δ²b_j/(2π) ~ N(0, Δ⁵/720),
//!   c4_j = ⅙(J_{0j00}−J_{00j0}) = −(Δ³/(4π²)) Σ_r a_{j,r}/r²   ~ N(0, Δ⁷/30240),
//! with b_j = Σ_r b_{j,r}/r. The repeated-noise triple difference
//!   J_{0jj}−J_{j0j} = −¼ΔWa₀ − (3/(2π))ΔWb_j + ⅜Δa₀² + ¾Δ Σ_r(a_r²+b_r²)
//! follows from the shuffle identities J_jJ_{0j} = J_{j0j}+2J_{0jj} and
//! J_0J_{jj} = J_{0jj}+J_{j0j}+J_{jj0} together with
//! ∫₀^Δ W_s² ds = ΔW²/3 + ΔWa₀/2 − ΔWb_j/π + Δ(a₀²/4 + ½Σ_r(a_r²+b_r²));
//! its mean is Δ²/4.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{QsdError, Result};

/// Domain-separation tag baked into every RNG seed derived here.
const SEED_TAG: &[u8; 16] = b"qsd-increments-1";

/// Identifies one trajectory's random stream. Step indices become ChaCha
/// stream numbers, so any step of any trajectory is addressable without
/// generating its predecessors — parallel schedules cannot change results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub master_seed: u64,
    pub trajectory: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64, trajectory: u64) -> Self {
        Self {
            master_seed,
            trajectory,
        }
    }

    fn base_rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&self.trajectory.to_le_bytes());
        seed[16..32].copy_from_slice(SEED_TAG);
        ChaCha8Rng::from_seed(seed)
    }

    /// RNG for sampling the increments of step `step` (0-based).
    pub fn rng_for_step(&self, step: u64) -> ChaCha8Rng {
        let mut rng = self.base_rng();
        // Stream 0 is reserved for per-trajectory setup draws.
        rng.set_stream(step + 1);
        rng
    }

    /// RNG for per-trajectory setup (e.g. drawing from a mixed initial
    /// state), separate from every step stream.
    pub fn rng_for_setup(&self) -> ChaCha8Rng {
        let mut rng = self.base_rng();
        rng.set_stream(0);
        rng
    }
}

/// All stochastic coefficients one integrator step can consume.
///
/// Every field is always populated (the draw pattern never depends on the
/// requested scheme order), so integrators of different orders fed the same
/// `StreamKey` see pathwise-identical noise — enabling paired comparisons.
#[derive(Debug, Clone)]
pub struct StochasticIncrementSet {
    pub delta: f64,
    /// Number of noise channels.
    pub d: usize,
    /// Fourier truncation order.
    pub p: usize,
    /// Wiener increments W^j over the step.
    pub w: Vec<f64>,
    /// Bridge offsets a_{j,0}.
    pub a0: Vec<f64>,
    /// levy[[i,j]] = ½(J_{ji}−J_{ij}) (0-based channels), antisymmetric.
    pub levy: Array2<f64>,
    /// Drift–noise pair coefficients ½Δ·a_{j,0}.
    pub c2: Vec<f64>,
    /// Drift–noise–drift triple coefficients −Δ²b_j/(2π).
    pub c3: Vec<f64>,
    /// Single-noise quadruple coefficients ⅙(J_{0j00}−J_{00j0}).
    pub c4: Vec<f64>,
    /// b_j = Σ_r b_{j,r}/r.
    pub bsum: Vec<f64>,
    /// Σ_r (a_{j,r}² + b_{j,r}²), for the repeated-noise triple difference.
    pub sq: Vec<f64>,
}

impl StochasticIncrementSet {
    /// Deterministic zero-noise set (d = 0).
    pub fn deterministic(delta: f64) -> Self {
        Self {
            delta,
            d: 0,
            p: 0,
            w: vec![],
            a0: vec![],
            levy: Array2::zeros((0, 0)),
            c2: vec![],
            c3: vec![],
            c4: vec![],
            bsum: vec![],
            sq: vec![],
        }
    }

    /// Repeated-noise triple difference J_{0jj} − J_{j0j} for channel `j`
    /// (0-based), assembled from stored draws; mean Δ²/4.
    pub fn triple_repeat_diff(&self, j: usize) -> f64 {
        let delta = self.delta;
        let w = self.w[j];
        let a0 = self.a0[j];
        let b = self.bsum[j];
        -0.25 * delta * w * a0 - 1.5 / std::f64::consts::PI * delta * w * b
            + 0.375 * delta * a0 * a0
            + 0.75 * delta * self.sq[j]
    }

    pub fn all_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
            && self.a0.iter().all(|v| v.is_finite())
            && self.levy.iter().all(|v| v.is_finite())
            && self.c2.iter().all(|v| v.is_finite())
            && self.c3.iter().all(|v| v.is_finite())
            && self.c4.iter().all(|v| v.is_finite())
            && self.bsum.iter().all(|v| v.is_finite())
            && self.sq.iter().all(|v| v.is_finite())
    }
}

/// Default Fourier truncation order.
pub const DEFAULT_P: usize = 200;

/// Mean-square truncation error bound Δ²/(2π²p) for the iterated-integral
/// series cut at `p` terms.
pub fn truncation_error_bound(delta: f64, p: usize) -> f64 {
    delta * delta / (2.0 * std::f64::consts::PI.powi(2) * p as f64)
}

/// Draw one step's complete increment set.
///
/// Draw order (fixed, independent of consumer): all W^j, then all a_{j,0},
/// then for r = 1..p all a_{j,r} followed by all b_{j,r}. Derived
/// coefficients are assembled in the same pass; the raw a/b series are not
/// retained.
pub fn sample_increments<R: rand::Rng>(
    d: usize,
    delta: f64,
    p: usize,
    rng: &mut R,
) -> Result<StochasticIncrementSet> {
    if delta <= 0.0 || !delta.is_finite() {
        return Err(QsdError::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    if d == 0 {
        return Ok(StochasticIncrementSet::deterministic(delta));
    }
    if p < 1 {
        return Err(QsdError::InvalidArgument("truncation order p must be ≥ 1".into()));
    }
    let pi = std::f64::consts::PI;
    let std_w = Normal::new(0.0, delta.sqrt()).expect("valid normal");
    let std_a0 = Normal::new(0.0, (delta / 3.0).sqrt()).expect("valid normal");
    let w: Vec<f64> = (0..d).map(|_| std_w.sample(rng)).collect();
    let a0: Vec<f64> = (0..d).map(|_| std_a0.sample(rng)).collect();
    let mut bsum = vec![0.0f64; d];
    let mut alpha = vec![0.0f64; d]; // Σ_r a_{j,r}/r²
    let mut sq = vec![0.0f64; d];
    let mut levy_series = Array2::<f64>::zeros((d, d));
    let mut a_r = vec![0.0f64; d];
    let mut b_r = vec![0.0f64; d];
    for r in 1..=p {
        let rf = r as f64;
        let std_r = Normal::new(0.0, (delta / (2.0 * pi * pi * rf * rf)).sqrt())
            .expect("valid normal");
        for j in 0..d {
            a_r[j] = std_r.sample(rng);
        }
        for j in 0..d {
            b_r[j] = std_r.sample(rng);
        }
        for j in 0..d {
            bsum[j] += b_r[j] / rf;
            alpha[j] += a_r[j] / (rf * rf);
            sq[j] += a_r[j] * a_r[j] + b_r[j] * b_r[j];
        }
        // Antisymmetric series part of ½(J_{ji}−J_{ij}):
        // π Σ_r r (a_{j,r} b_{i,r} − b_{j,r} a_{i,r}) at [[i,j]].
        for i in 0..d {
            for j in (i + 1)..d {
                levy_series[[i, j]] += pi * rf * (a_r[j] * b_r[i] - b_r[j] * a_r[i]);
            }
        }
    }
    let mut levy = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (a0[j] * w[i] - a0[i] * w[j]) + levy_series[[i, j]];
            levy[[i, j]] = v;
            levy[[j, i]] = -v;
        }
    }
    let c2: Vec<f64> = a0.iter().map(|&a| 0.5 * delta * a).collect();
    let c3: Vec<f64> = bsum
        .iter()
        .map(|&b| -delta * delta * b / (2.0 * pi))
        .collect();
    let c4: Vec<f64> = alpha
        .iter()
        .map(|&al| -delta.powi(3) / (4.0 * pi * pi) * al)
        .collect();
    let out = StochasticIncrementSet {
        delta,
        d,
        p,
        w,
        a0,
        levy,
        c2,
        c3,
        c4,
        bsum,
        sq,
    };
    if !out.all_finite() {
        return Err(QsdError::NonFinite("sampled increment set".into()));
    }
    Ok(out)
}

/// Sample the increment set for a specific (trajectory, step) address.
pub fn sample_increments_for_step(
    d: usize,
    delta: f64,
    p: usize,
    key: &StreamKey,
    step: u64,
) -> Result<StochasticIncrementSet> {
    let mut rng = key.rng_for_step(step);
    sample_increments(d, delta, p, &mut rng)
}
