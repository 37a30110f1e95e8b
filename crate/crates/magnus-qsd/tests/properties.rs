//! Independent distributional oracles for the stochastic-increment sampler,
//! plus cross-cutting invariants of the trajectory ensembles.
//!
//! The oracle route simulates Brownian paths on a fine time grid and
//! evaluates every iterated-integral functional by direct quadrature —
//! midpoint (Stratonovich) sums against the simulated path, with no Fourier
//! expansion anywhere. Agreement is then checked two ways: empirical
//! variances against the closed-form moments, and full distributions
//! against sampler draws with two-sample Kolmogorov–Smirnov tests. The one
//! functional where the sampler's independent-coefficient construction is
//! not exact in law (the repeated-noise triple difference) is instead pinned
//! to per-route closed forms together with the predicted variance ratio.

use magnus_qsd::ensemble::{run_ensemble, run_trajectory, EnsembleConfig};
use magnus_qsd::magnus::{MagnusEngine, MagnusOrder, SchemeConfig, SchemeKind, UnravelingKind};
use magnus_qsd::models::{build_fmo, build_tfim, fmo_initial_state, tfim_initial_state};
use magnus_qsd::stats::sample_variance;
use magnus_qsd::wiener::{sample_increments_for_step, StreamKey};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DELTA: f64 = 0.25;
/// Fine-grid substeps per Brownian path.
const SUBSTEPS: usize = 2048;
/// Paths per oracle comparison.
const N_PATHS: usize = 4000;

// ---------------------------------------------------------------------------
// Fine-grid Brownian quadrature
// ---------------------------------------------------------------------------

/// Brownian path on 0..=SUBSTEPS grid points over [0, DELTA].
fn fine_path(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dt = DELTA / SUBSTEPS as f64;
    let gauss = Normal::new(0.0, dt.sqrt()).unwrap();
    let mut w = Vec::with_capacity(SUBSTEPS + 1);
    let mut acc = 0.0;
    w.push(0.0);
    for _ in 0..SUBSTEPS {
        acc += gauss.sample(rng);
        w.push(acc);
    }
    w
}

fn trapezoid(f: &[f64], dt: f64) -> f64 {
    let inner: f64 = f[1..f.len() - 1].iter().sum();
    dt * (inner + 0.5 * (f[0] + f[f.len() - 1]))
}

fn cumulative_trapezoid(f: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..f.len() - 1 {
        acc += 0.5 * (f[k] + f[k + 1]) * dt;
        out.push(acc);
    }
    out
}

/// Cumulative Stratonovich integral ∫ f ∘dW via midpoint sums.
fn cumulative_strat(f: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..f.len() - 1 {
        acc += 0.5 * (f[k] + f[k + 1]) * (w[k + 1] - w[k]);
        out.push(acc);
    }
    out
}

struct QuadratureFunctionals {
    w: f64,
    a0: f64,
    c2: f64,
    c3: f64,
    c4: f64,
    levy: f64,
    triple_repeat_diff: f64,
}

/// Evaluate every sampled coefficient as a direct path functional.
///
/// Multi-index integrals J_{α...} nest with the first index innermost;
/// index 0 integrates ds and index j integrates ∘dW. The reductions used:
/// pair   c2 = ½(J_{10} − J_{01}),
/// triple c3 = ⅓(J_{010} − J_{100}) − (Δ/12)(J_{10} − J_{01}),
/// quad   c4 = ⅙(J_{0100} − J_{0010})  [noise index written as 1],
/// area   ½(J_{ji} − J_{ij}) for distinct channels i, j,
/// and the repeated-noise difference J_{011} − J_{101}.
fn quadrature(w1: &[f64], w2: &[f64]) -> QuadratureFunctionals {
    let dt = DELTA / SUBSTEPS as f64;
    let times: Vec<f64> = (0..=SUBSTEPS).map(|k| k as f64 * dt).collect();
    let w_end = w1[SUBSTEPS];

    // J_{01} = ∫ W ds and its mirror J_{10} = ΔW − J_{01}.
    let j01 = trapezoid(w1, dt);
    let j10 = DELTA * w_end - j01;
    let a0 = w_end - 2.0 * j01 / DELTA; // from J_{01} = Δ(W − a₀)/2
    let c2 = 0.5 * (j10 - j01);

    // F2(s) = ∫₀^s u dW(u); H(s) = ∫₀^s W ds.
    let f2 = cumulative_strat(&times, w1);
    let h = cumulative_trapezoid(w1, dt);
    let j010 = trapezoid(&f2, dt);
    let j100 = trapezoid(&h, dt);
    let c3 = (j010 - j100) / 3.0 - DELTA / 12.0 * (j10 - j01);

    // J_{0100}: integrate F2 twice in time; J_{0010}: ∫ (s²/2) dW then once.
    let f3 = cumulative_trapezoid(&f2, dt);
    let j0100 = trapezoid(&f3, dt);
    let half_sq: Vec<f64> = times.iter().map(|s| 0.5 * s * s).collect();
    let g = cumulative_strat(&half_sq, w1);
    let j0010 = trapezoid(&g, dt);
    let c4 = (j0100 - j0010) / 6.0;

    // Cross-channel Lévy area ½(J_{ji} − J_{ij}) with i = channel of w1.
    let j_ij = last(&cumulative_strat(w1, w2)); // ∫ W_i ∘dW_j
    let j_ji = last(&cumulative_strat(w2, w1));
    let levy = 0.5 * (j_ji - j_ij);

    // Repeated-noise triple difference J_{011} − J_{101}.
    let j011 = last(&cumulative_strat(&f2, w1));
    let j101 = last(&cumulative_strat(&h, w1));
    let triple_repeat_diff = j011 - j101;

    QuadratureFunctionals {
        w: w_end,
        a0,
        c2,
        c3,
        c4,
        levy,
        triple_repeat_diff,
    }
}

fn last(xs: &[f64]) -> f64 {
    *xs.last().unwrap()
}

fn quadrature_samples(seed: u64) -> Vec<QuadratureFunctionals> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..N_PATHS)
        .map(|_| {
            let w1 = fine_path(&mut rng);
            let w2 = fine_path(&mut rng);
            quadrature(&w1, &w2)
        })
        .collect()
}

struct SamplerDraws {
    w: Vec<f64>,
    a0: Vec<f64>,
    c2: Vec<f64>,
    c3: Vec<f64>,
    c4: Vec<f64>,
    levy: Vec<f64>,
    triple_repeat_diff: Vec<f64>,
}

fn sampler_draws(master_seed: u64) -> SamplerDraws {
    let mut out = SamplerDraws {
        w: Vec::with_capacity(N_PATHS),
        a0: Vec::with_capacity(N_PATHS),
        c2: Vec::with_capacity(N_PATHS),
        c3: Vec::with_capacity(N_PATHS),
        c4: Vec::with_capacity(N_PATHS),
        levy: Vec::with_capacity(N_PATHS),
        triple_repeat_diff: Vec::with_capacity(N_PATHS),
    };
    for i in 0..N_PATHS {
        let key = StreamKey::new(master_seed, i as u64);
        let set = sample_increments_for_step(2, DELTA, 200, &key, 0).unwrap();
        out.w.push(set.w[0]);
        out.a0.push(set.a0[0]);
        out.c2.push(set.c2[0]);
        out.c3.push(set.c3[0]);
        out.c4.push(set.c4[0]);
        out.levy.push(set.levy[[0, 1]]);
        out.triple_repeat_diff.push(set.triple_repeat_diff(0));
    }
    out
}

// ---------------------------------------------------------------------------
// Two-sample Kolmogorov–Smirnov test
// ---------------------------------------------------------------------------

/// Asymptotic two-sample KS p-value (continuous data, no ties expected).
fn ks_p_value(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / n as f64;
        let fb = j as f64 / m as f64;
        d = d.max((fa - fb).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        p += sign * (-2.0 * (k as f64 * lambda).powi(2)).exp();
    }
    (2.0 * p).clamp(0.0, 1.0)
}

fn assert_same_distribution(name: &str, quad: &[f64], sampled: &[f64]) {
    let p = ks_p_value(quad, sampled);
    assert!(
        p > 0.01,
        "{name}: KS p = {p:.4} comparing quadrature oracle vs sampler \
         (quad var {:.3e}, sampler var {:.3e})",
        sample_variance(quad),
        sample_variance(sampled),
    );
}

fn assert_variance_near(name: &str, xs: &[f64], expected: f64, rel_tol: f64) {
    let v = sample_variance(xs);
    assert!(
        (v - expected).abs() <= rel_tol * expected,
        "{name}: variance {v:.6e} vs expected {expected:.6e} (tol {rel_tol:.0e} relative)"
    );
}

// ---------------------------------------------------------------------------
// Sampler oracle tests
// ---------------------------------------------------------------------------

#[test]
fn increment_and_offset_match_brownian_quadrature() {
    let quad = quadrature_samples(101);
    let draws = sampler_draws(201);
    let qw: Vec<f64> = quad.iter().map(|q| q.w).collect();
    let qa: Vec<f64> = quad.iter().map(|q| q.a0).collect();
    assert_variance_near("W quadrature", &qw, DELTA, 0.10);
    assert_variance_near("W sampler", &draws.w, DELTA, 0.10);
    assert_variance_near("a0 quadrature", &qa, DELTA / 3.0, 0.10);
    assert_variance_near("a0 sampler", &draws.a0, DELTA / 3.0, 0.10);
    assert_same_distribution("W", &qw, &draws.w);
    assert_same_distribution("a0", &qa, &draws.a0);
}

#[test]
fn pair_coefficient_matches_brownian_quadrature() {
    let quad = quadrature_samples(102);
    let draws = sampler_draws(202);
    let q: Vec<f64> = quad.iter().map(|x| x.c2).collect();
    let expected = DELTA.powi(3) / 12.0;
    assert_variance_near("c2 quadrature", &q, expected, 0.10);
    assert_variance_near("c2 sampler", &draws.c2, expected, 0.10);
    assert_same_distribution("c2", &q, &draws.c2);
}

#[test]
fn triple_coefficient_matches_brownian_quadrature() {
    let quad = quadrature_samples(103);
    let draws = sampler_draws(203);
    let q: Vec<f64> = quad.iter().map(|x| x.c3).collect();
    let expected = DELTA.powi(5) / 720.0;
    assert_variance_near("c3 quadrature", &q, expected, 0.10);
    assert_variance_near("c3 sampler", &draws.c3, expected, 0.10);
    assert_same_distribution("c3", &q, &draws.c3);
}

#[test]
fn quadruple_coefficient_matches_brownian_quadrature() {
    let quad = quadrature_samples(104);
    let draws = sampler_draws(204);
    let q: Vec<f64> = quad.iter().map(|x| x.c4).collect();
    let expected = DELTA.powi(7) / 30240.0;
    assert_variance_near("c4 quadrature", &q, expected, 0.10);
    assert_variance_near("c4 sampler", &draws.c4, expected, 0.10);
    assert_same_distribution("c4", &q, &draws.c4);
}

#[test]
fn levy_area_matches_brownian_quadrature() {
    let quad = quadrature_samples(105);
    let draws = sampler_draws(205);
    let q: Vec<f64> = quad.iter().map(|x| x.levy).collect();
    let expected = DELTA * DELTA / 4.0;
    assert_variance_near("levy quadrature", &q, expected, 0.10);
    assert_variance_near("levy sampler", &draws.levy, expected, 0.10);
    assert_same_distribution("levy", &q, &draws.levy);
}

/// The repeated-noise triple difference is the one functional where the
/// random-Fourier construction is *not* exact in law, and the gap is
/// quantifiable. A genuine bridge couples its mean offset a₀ to every cosine
/// coefficient (Cov(a₀, a_r) = −Δ/π²r², forced by the series vanishing at the
/// interval endpoints), while the sampler draws all coefficients
/// independently — the standard construction, which reproduces the exact
/// joint law of every *linear* functional used here (W, a₀, c2, c3, c4,
/// areas). J_{011} − J_{101} is quadratic in the coefficients and sees the
/// coupling: exact variance Δ⁴/12 versus 17Δ⁴/240 for the independent model,
/// with identical means Δ²/4. So each route is checked against its own
/// closed form, and the variance ratio against the predicted 20/17.
#[test]
fn repeated_noise_triple_difference_moments_match_closed_forms() {
    let quad = quadrature_samples(106);
    let draws = sampler_draws(206);
    let q: Vec<f64> = quad.iter().map(|x| x.triple_repeat_diff).collect();
    let expected_mean = DELTA * DELTA / 4.0;
    let qm = q.iter().sum::<f64>() / q.len() as f64;
    let sm = draws.triple_repeat_diff.iter().sum::<f64>()
        / draws.triple_repeat_diff.len() as f64;
    assert!(
        (qm - expected_mean).abs() < 0.05 * expected_mean,
        "quadrature mean {qm} vs {expected_mean}"
    );
    assert!(
        (sm - expected_mean).abs() < 0.05 * expected_mean,
        "sampler mean {sm} vs {expected_mean}"
    );
    assert_variance_near(
        "triple repeat diff quadrature",
        &q,
        DELTA.powi(4) / 12.0,
        0.10,
    );
    assert_variance_near(
        "triple repeat diff sampler",
        &draws.triple_repeat_diff,
        17.0 * DELTA.powi(4) / 240.0,
        0.10,
    );
    let ratio = sample_variance(&q) / sample_variance(&draws.triple_repeat_diff);
    assert!(
        (1.05..=1.35).contains(&ratio),
        "variance ratio {ratio:.4} outside the window around the predicted 20/17"
    );
}

// ---------------------------------------------------------------------------
// Ensemble invariants
// ---------------------------------------------------------------------------

#[test]
fn nonlinear_trajectories_keep_unit_weight_along_the_whole_path() {
    let model = build_tfim(2, 1.0, 1.0, &[0.1, 0.1]).unwrap();
    let scheme = SchemeConfig::new(
        SchemeKind::Magnus(MagnusOrder::Second),
        UnravelingKind::Nonlinear,
    );
    let engine = MagnusEngine::new(&model, scheme).unwrap();
    let observables: Vec<_> = model.observables.iter().map(|(_, m)| m.clone()).collect();
    for traj in 0..3 {
        let record = run_trajectory(
            &engine,
            &tfim_initial_state(2),
            0.25,
            60,
            &observables,
            StreamKey::new(99, traj),
            200,
        )
        .unwrap();
        assert_eq!(record.aborted_at, None);
        for (s, w) in record.weights.iter().enumerate() {
            assert!(
                (w - 1.0).abs() < 1e-12,
                "trajectory {traj} step {s}: weight {w}"
            );
        }
    }
}

#[test]
fn nonlinear_estimator_variance_beats_linear_on_matched_noise() {
    let model = build_tfim(2, 1.0, 1.0, &[0.1, 0.1]).unwrap();
    let initial = tfim_initial_state(2);
    let mut totals = Vec::new();
    for unraveling in [UnravelingKind::Linear, UnravelingKind::Nonlinear] {
        let scheme = SchemeConfig::new(SchemeKind::Magnus(MagnusOrder::First), unraveling);
        let mut cfg = EnsembleConfig::new(scheme, 0.25, 20);
        cfg.n_traj = 200;
        cfg.n_repeats = 5;
        cfg.master_seed = 515;
        let est = run_ensemble(&model, &initial, &cfg).unwrap();
        let total: f64 = (0..est.names.len())
            .map(|o| est.time_averaged_variance(o).iter().sum::<f64>())
            .sum();
        totals.push(total);
    }
    assert!(
        totals[1] < totals[0],
        "nonlinear variance {} should be below linear {}",
        totals[1],
        totals[0]
    );
}

#[test]
fn ensemble_mean_tracks_exact_evolution_within_intervals() {
    let model = build_fmo().unwrap();
    let initial = fmo_initial_state();
    let scheme = SchemeConfig::new(
        SchemeKind::Magnus(MagnusOrder::First),
        UnravelingKind::Nonlinear,
    );
    let mut cfg = EnsembleConfig::new(scheme, 5.0, 50);
    cfg.n_traj = 200;
    cfg.n_repeats = 5;
    cfg.master_seed = 616;
    let est = run_ensemble(&model, &initial, &cfg).unwrap();
    let exact = magnus_qsd::ensemble::exact_reference(&model, &initial, 5.0, 50).unwrap();
    for o in 0..est.names.len() {
        for s in 0..est.times.len() {
            let err = (est.mean[[o, s]] - exact.values[[o, s]]).abs();
            let tol = (5.0 * est.ci_half[[o, s]]).max(0.02);
            assert!(
                err <= tol,
                "{} at t={}: |{} - {}| = {err:.4} > {tol:.4}",
                est.names[o],
                est.times[s],
                est.mean[[o, s]],
                exact.values[[o, s]],
            );
        }
    }
}
