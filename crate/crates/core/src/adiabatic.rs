//! Simulated experiment: ramp schedules, two-level evolution, Pauli-basis
//! readout with counting noise, maximum-likelihood tomography and campaign
//! statistics.
//!
//! Units are SI: seconds and angular frequencies in rad/s, `ħ = 1`.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bzgrid::{MeshSpec, Provenance, StateData, StateField};
use crate::error::{HopfError, Result};
use crate::model::{ground_state, u_of_k, HopfParams, MomentumPoint, GAP_TOL};
use crate::qubit::{BlochVector, DensityMatrix, Spinor};

/// Peak drive, `2π × 20.83 MHz`.
pub const OMEGA_MAX: f64 = TAU * 20.83e6;
pub const SEGMENT_DURATION: f64 = 500e-9;
/// AWG sample spacing (8 GS/s).
pub const SAMPLE_DT: f64 = 0.125e-9;
pub const DEFAULT_PHOTONS: u64 = 93_000;

/// Instantaneous drive `H = |Ω|(σx cos φ + σy sin φ) + Δ σz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub amplitude: f64,
    pub phase: f64,
    pub detuning: f64,
}

impl Control {
    /// `(|Ω| cos φ, |Ω| sin φ, Δ)`.
    pub fn field(&self) -> [f64; 3] {
        [self.amplitude * self.phase.cos(), self.amplitude * self.phase.sin(), self.detuning]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampConfig {
    pub omega_max: f64,
    pub segment_duration: f64,
    pub sample_dt: f64,
}

impl Default for RampConfig {
    fn default() -> Self {
        Self { omega_max: OMEGA_MAX, segment_duration: SEGMENT_DURATION, sample_dt: SAMPLE_DT }
    }
}

/// Three linear ramps: transverse up at `Δ = -Ω_max`, detuning to target,
/// transverse to target. The phase is fixed throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub config: RampConfig,
    pub phase: f64,
    pub final_amplitude: f64,
    pub final_detuning: f64,
}

impl RampSchedule {
    pub fn duration(&self) -> f64 {
        3.0 * self.config.segment_duration
    }

    pub fn segment_boundaries(&self) -> [f64; 2] {
        let t = self.config.segment_duration;
        [t, 2.0 * t]
    }

    pub fn control_at(&self, t: f64) -> Control {
        let c = &self.config;
        let seg = c.segment_duration;
        let w = c.omega_max;
        let frac = |t0: f64| if seg > 0.0 { ((t - t0) / seg).clamp(0.0, 1.0) } else { 1.0 };
        let (amplitude, detuning) = if t < seg {
            (w * frac(0.0), -w)
        } else if t < 2.0 * seg {
            (w, -w + (self.final_detuning + w) * frac(seg))
        } else {
            (w + (self.final_amplitude - w) * frac(2.0 * seg), self.final_detuning)
        };
        Control { amplitude, phase: self.phase, detuning }
    }

    pub fn final_control(&self) -> Control {
        Control { amplitude: self.final_amplitude, phase: self.phase, detuning: self.final_detuning }
    }

    /// Controls on the uniform sample grid, endpoints included.
    pub fn samples(&self) -> Vec<(f64, Control)> {
        let steps = steps_for(self.duration(), self.config.sample_dt);
        (0..=steps)
            .map(|i| {
                let t = self.duration() * i as f64 / steps.max(1) as f64;
                (t, self.control_at(t))
            })
            .collect()
    }
}

fn steps_for(duration: f64, dt: f64) -> usize {
    if duration <= 0.0 {
        return 0;
    }
    // tolerate float noise in duration/dt
    (duration / dt - 1e-9).ceil().max(1.0) as usize
}

/// Schedule whose final drive is `Ω_max · u(k) / max(|u_⊥|, |u_z|)`.
pub fn build_schedule(k: &MomentumPoint, p: &HopfParams) -> Result<RampSchedule> {
    build_schedule_with(k, p, RampConfig::default())
}

pub fn build_schedule_with(k: &MomentumPoint, p: &HopfParams, config: RampConfig) -> Result<RampSchedule> {
    let u = u_of_k(k, p);
    let norm = u.norm();
    if norm <= GAP_TOL {
        let [kx, ky, kz] = k.to_array();
        return Err(HopfError::GaplessPoint { kx, ky, kz, norm });
    }
    let transverse = u.transverse();
    let m = transverse.max(u.uz.abs());
    Ok(RampSchedule {
        config,
        phase: u.uy.atan2(u.ux),
        final_amplitude: config.omega_max * transverse / m,
        final_detuning: config.omega_max * u.uz / m,
    })
}

/// `exp(-i τ b·σ) ψ`.
fn propagate(psi: Spinor, b: [f64; 3], tau: f64) -> Spinor {
    let mag = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if mag == 0.0 {
        return psi;
    }
    let (s, c) = (mag * tau).sin_cos();
    let n = [b[0] / mag, b[1] / mag, b[2] / mag];
    let sigma_up = psi.up * n[2] + psi.down * C64::new(n[0], -n[1]);
    let sigma_down = psi.up * C64::new(n[0], n[1]) - psi.down * n[2];
    let mis = C64::new(0.0, -s);
    Spinor::new(psi.up * c + mis * sigma_up, psi.down * c + mis * sigma_down)
}

/// Piecewise-constant propagation with the drive sampled at step midpoints.
/// Each segment is stepped separately so kinks fall on step edges.
pub fn evolve(s: &RampSchedule, initial: &Spinor, dt: f64) -> Result<Spinor> {
    if !(dt > 0.0 && dt <= SAMPLE_DT * (1.0 + 1e-12)) {
        return Err(HopfError::InvalidArgument(format!("time step {dt} s outside (0, {SAMPLE_DT}]")));
    }
    let mut psi = *initial;
    let seg = s.config.segment_duration;
    let steps = steps_for(seg, dt);
    if steps == 0 {
        return Ok(psi);
    }
    let tau = seg / steps as f64;
    for segment in 0..3 {
        let t0 = segment as f64 * seg;
        for i in 0..steps {
            let control = s.control_at(t0 + (i as f64 + 0.5) * tau);
            psi = propagate(psi, control.field(), tau);
        }
    }
    Ok(psi)
}

/// Runs the full passage from spin-up at momentum `k`.
pub fn prepare_state(k: &MomentumPoint, p: &HopfParams, config: RampConfig, dt: f64) -> Result<Spinor> {
    evolve(&build_schedule_with(k, p, config)?, &Spinor::UP, dt)
}

/// How a projective outcome turns into recorded counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Readout {
    /// One shot per photon; success with probability `p = (1 + ⟨σ⟩)/2`.
    Ideal,
    /// Photon counting over repeated runs: each run yields a photon with
    /// probability `η (1 - C (1 - p))`, and the run count is `photons / η`.
    Fluorescence { efficiency: f64, contrast: f64 },
}

impl Readout {
    /// NV-centre readout: 9.3×10⁴ photons per 1.25×10⁶ runs, 30 % contrast.
    pub const NV: Readout = Readout::Fluorescence { efficiency: 0.0744, contrast: 0.3 };

    pub fn validate(&self) -> Result<()> {
        if let Readout::Fluorescence { efficiency, contrast } = *self {
            if !(efficiency > 0.0 && efficiency <= 1.0 && contrast > 0.0 && contrast <= 1.0) {
                return Err(HopfError::InvalidArgument(format!(
                    "fluorescence readout needs efficiency and contrast in (0, 1], got {efficiency}, {contrast}"
                )));
            }
        }
        Ok(())
    }

    pub fn success_probability(&self, p: f64) -> f64 {
        match *self {
            Readout::Ideal => p,
            Readout::Fluorescence { efficiency, contrast } => efficiency * (1.0 - contrast * (1.0 - p)),
        }
    }

    fn slope(&self) -> f64 {
        match *self {
            Readout::Ideal => 1.0,
            Readout::Fluorescence { efficiency, contrast } => efficiency * contrast,
        }
    }

    pub fn shots_for(&self, photons: u64) -> u64 {
        match *self {
            Readout::Ideal => photons,
            Readout::Fluorescence { efficiency, .. } => (photons as f64 / efficiency).round() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisCounts {
    pub photons: u64,
    pub shots: u64,
    pub successes: u64,
}

/// Counts in the x, y, z bases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub readout: Readout,
    pub bases: [BasisCounts; 3],
    pub seed: u64,
    pub stream: u64,
}

impl MeasurementRecord {
    pub fn photons(&self) -> u64 {
        self.bases.iter().map(|b| b.photons).sum()
    }
}

/// Equal thirds, remainder to z.
pub fn equal_split(photons: u64) -> [u64; 3] {
    let third = photons / 3;
    [third, third, photons - 2 * third]
}

/// Draws binomial counts for each basis from the stream `(seed, stream)`.
pub fn simulate_measurements(
    state: &Spinor,
    split: [u64; 3],
    readout: Readout,
    seed: u64,
    stream: u64,
) -> Result<MeasurementRecord> {
    readout.validate()?;
    if split.iter().sum::<u64>() < 3 || split.contains(&0) {
        return Err(HopfError::InvalidArgument(format!("photon split {split:?} leaves a basis unmeasured")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let r = state.bloch().to_array();
    let mut bases = [BasisCounts { photons: 0, shots: 0, successes: 0 }; 3];
    for b in 0..3 {
        let p = ((1.0 + r[b]) / 2.0).clamp(0.0, 1.0);
        let q = readout.success_probability(p);
        let shots = readout.shots_for(split[b]);
        let successes = Binomial::new(shots, q)
            .map_err(|e| HopfError::InvalidArgument(format!("binomial({shots}, {q}): {e}")))?
            .sample(&mut rng);
        bases[b] = BasisCounts { photons: split[b], shots, successes };
    }
    Ok(MeasurementRecord { readout, bases, seed, stream })
}

/// Log-likelihood improvement below which the ascent stops.
pub const MLE_TOL: f64 = 1e-12;
pub const MLE_MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleEstimate {
    pub rho: DensityMatrix,
    /// Log-likelihood relative to the saturated model, so `≤ 0`.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub photons: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub fidelity: f64,
    pub photons: u64,
}

impl MleEstimate {
    pub fn against(&self, psi: &Spinor) -> TomographyResult {
        TomographyResult { rho: self.rho, fidelity: self.rho.fidelity(psi).clamp(0.0, 1.0), photons: self.photons }
    }
}

/// `ρ = L†L / Tr` with `L = [[a, 0], [c + i d, b]]`; returns the Bloch vector.
fn bloch_of(theta: [f64; 4]) -> [f64; 3] {
    let [a, b, c, d] = theta;
    let t = a * a + b * b + c * c + d * d;
    [2.0 * b * c / t, 2.0 * b * d / t, (a * a + c * c + d * d - b * b) / t]
}

fn rho_of(theta: [f64; 4]) -> DensityMatrix {
    DensityMatrix::from_bloch(BlochVector::from_array(bloch_of(theta)))
}

/// Cholesky-style parameters of the state with Bloch vector `r`, `|r| < 1`.
fn theta_of(r: [f64; 3]) -> [f64; 4] {
    let rho11 = (1.0 - r[2]) / 2.0;
    let b = rho11.sqrt();
    let (c, d) = (r[0] / 2.0 / b, r[1] / 2.0 / b);
    let a = ((1.0 + r[2]) / 2.0 - c * c - d * d).max(0.0).sqrt();
    [a, b, c, d]
}

struct Likelihood<'a> {
    m: &'a MeasurementRecord,
}

impl Likelihood<'_> {
    /// Binomial log-likelihood minus its unconstrained maximum, so `≤ 0`.
    fn value(&self, r: [f64; 3]) -> f64 {
        let mut total = 0.0;
        for (b, counts) in self.m.bases.iter().enumerate() {
            let n = counts.shots as f64;
            let k = counts.successes as f64;
            let q = self.m.readout.success_probability((1.0 + r[b]) / 2.0);
            let qhat = k / n;
            // ln_1p keeps the near-cancelling terms accurate at large n
            if k > 0.0 {
                total += k * ((q - qhat) / qhat).ln_1p();
            }
            if n > k {
                total += (n - k) * ((qhat - q) / (1.0 - qhat)).ln_1p();
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    fn grad_r(&self, r: [f64; 3]) -> [f64; 3] {
        let slope = self.m.readout.slope() / 2.0;
        std::array::from_fn(|b| {
            let counts = &self.m.bases[b];
            let n = counts.shots as f64;
            let k = counts.successes as f64;
            let q = self.m.readout.success_probability((1.0 + r[b]) / 2.0);
            let dq = if k > 0.0 { k / q } else { 0.0 } - if n > k { (n - k) / (1.0 - q) } else { 0.0 };
            dq * slope
        })
    }

    fn at(&self, theta: [f64; 4]) -> f64 {
        self.value(bloch_of(theta))
    }

    fn grad(&self, theta: [f64; 4]) -> [f64; 4] {
        let [a, b, c, d] = theta;
        let t = a * a + b * b + c * c + d * d;
        let r = bloch_of(theta);
        let gr = self.grad_r(r);
        let dn: [[f64; 3]; 4] =
            [[0.0, 0.0, 2.0 * a], [2.0 * c, 2.0 * d, -2.0 * b], [2.0 * b, 0.0, 2.0 * c], [0.0, 2.0 * b, 2.0 * d]];
        std::array::from_fn(|i| (0..3).map(|j| gr[j] * (dn[i][j] - r[j] * 2.0 * theta[i]) / t).sum())
    }

    /// Central differences of the analytic gradient.
    #[allow(clippy::needless_range_loop)]
    fn hessian(&self, theta: [f64; 4]) -> [[f64; 4]; 4] {
        let h = 1e-6;
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            let mut up = theta;
            let mut down = theta;
            up[i] += h;
            down[i] -= h;
            let (gu, gd) = (self.grad(up), self.grad(down));
            for j in 0..4 {
                out[j][i] = (gu[j] - gd[j]) / (2.0 * h);
            }
        }
        for i in 0..4 {
            for j in 0..i {
                let s = 0.5 * (out[i][j] + out[j][i]);
                out[i][j] = s;
                out[j][i] = s;
            }
        }
        out
    }
}

fn normalize4(v: [f64; 4]) -> [f64; 4] {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.map(|x| x / n)
}

/// Gaussian elimination with partial pivoting; `None` when singular.
#[allow(clippy::needless_range_loop)]
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Maximum-likelihood density matrix for a measurement record, by damped
/// Newton ascent over the Cholesky parameters.
pub fn mle_tomography(m: &MeasurementRecord) -> Result<MleEstimate> {
    m.readout.validate()?;
    if m.bases.iter().any(|b| b.shots == 0 || b.successes > b.shots) {
        return Err(HopfError::InvalidArgument("every basis needs shots and successes ≤ shots".into()));
    }
    let like = Likelihood { m };
    // start from linear inversion pulled inside the ball
    let inv: [f64; 3] = std::array::from_fn(|b| {
        let counts = &m.bases[b];
        let qhat = counts.successes as f64 / counts.shots as f64;
        let p = match m.readout {
            Readout::Ideal => qhat,
            Readout::Fluorescence { efficiency, contrast } => 1.0 - (1.0 - qhat / efficiency) / contrast,
        };
        (2.0 * p - 1.0).clamp(-1.0, 1.0)
    });
    let norm = inv.iter().map(|x| x * x).sum::<f64>().sqrt();
    let shrink = if norm > 0.9 { 0.9 / norm } else { 1.0 };
    let mut theta = normalize4(theta_of(inv.map(|x| x * shrink)));
    let mut value = like.at(theta);
    let done = |theta: [f64; 4], value: f64, iterations: usize| MleEstimate {
        rho: rho_of(theta),
        log_likelihood: value,
        iterations,
        photons: m.photons(),
    };
    let mut lambda = -1.0;
    for iteration in 1..=MLE_MAX_ITERATIONS {
        let g = like.grad(theta);
        let h = like.hessian(theta);
        let scale = (0..4).map(|i| h[i][i].abs()).fold(0.0, f64::max).max(1e-300);
        if lambda < 0.0 {
            lambda = 1e-3 * scale;
        }
        let mut improved = None;
        while lambda <= 1e16 * scale {
            let mut a = h.map(|row| row.map(|x| -x));
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda;
            }
            if let Some(step) = solve4(a, g) {
                let cand = normalize4(std::array::from_fn(|i| theta[i] + step[i]));
                let v = like.at(cand);
                if v > value {
                    improved = Some((cand, v));
                    lambda = (lambda / 3.0).max(1e-12 * scale);
                    break;
                }
            }
            lambda *= 4.0;
        }
        // no damping level ascends: stationary to rounding
        let Some((cand, v)) = improved else {
            return Ok(done(theta, value, iteration));
        };
        let improvement = v - value;
        theta = cand;
        value = v;
        if improvement < MLE_TOL {
            return Ok(done(theta, value, iteration));
        }
    }
    Err(HopfError::NonConvergence { iterations: MLE_MAX_ITERATIONS, best_log_likelihood: value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    /// Per-site photon budget; `None` reads out exact probabilities.
    pub photons: Option<u64>,
    pub seed: u64,
    pub readout: Readout,
    pub ramp: RampConfig,
    pub dt: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self { photons: Some(DEFAULT_PHOTONS), seed: 0, readout: Readout::NV, ramp: RampConfig::default(), dt: SAMPLE_DT }
    }
}

/// Passage output and analytic target for one site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedSite {
    pub prepared: Spinor,
    pub target: Spinor,
}

impl PreparedSite {
    pub fn adiabatic_fidelity(&self) -> f64 {
        self.target.inner(&self.prepared).norm_sqr()
    }
}

/// Runs the passage at every mesh site, row-major.
pub fn prepare_sites(p: &HopfParams, mesh: MeshSpec, ramp: RampConfig, dt: f64) -> Vec<Result<PreparedSite>> {
    (0..mesh.len())
        .into_par_iter()
        .map(|i| {
            let k = mesh.momentum(mesh.site(i));
            Ok(PreparedSite { prepared: prepare_state(&k, p, ramp, dt)?, target: ground_state(&k, p)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub const BINS: usize = 50;

    pub fn new(values: &[f64], lo: f64, hi: f64) -> Self {
        let mut counts = vec![0; Self::BINS];
        let width = (hi - lo) / Self::BINS as f64;
        for &v in values {
            let i = if width > 0.0 { ((v - lo) / width).floor() as isize } else { 0 };
            counts[i.clamp(0, Self::BINS as isize - 1) as usize] += 1;
        }
        Self { lo, hi, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteFailure {
    pub site: [usize; 3],
    pub error: String,
}

/// Fidelity statistics; `per_site` is row-major with `None` for failed sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityStats {
    pub mean_fidelity: f64,
    pub median_fidelity: f64,
    pub ci95: [f64; 2],
    pub per_site: Vec<Option<f64>>,
    pub histogram: Histogram,
    pub failures: Vec<SiteFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

/// Linear-interpolated percentile of sorted data, `q ∈ [0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

impl FidelityStats {
    pub fn from_per_site(per_site: Vec<Option<f64>>, failures: Vec<SiteFailure>) -> Self {
        let mut ok: Vec<f64> = per_site.iter().flatten().copied().collect();
        ok.sort_by(f64::total_cmp);
        let mean = if ok.is_empty() { f64::NAN } else { ok.iter().sum::<f64>() / ok.len() as f64 };
        let lo = ok.first().copied().unwrap_or(0.0);
        Self {
            mean_fidelity: mean,
            median_fidelity: percentile(&ok, 0.5),
            ci95: [percentile(&ok, 0.025), percentile(&ok, 0.975)],
            histogram: Histogram::new(&ok, lo.min(1.0), 1.0),
            per_site,
            failures,
            generated_at: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub field: StateField,
    pub stats: FidelityStats,
}

/// Tomography stage over already-prepared sites. Failed sites enter the
/// field as the maximally mixed state and are listed in the stats.
pub fn measure_sites(
    p: &HopfParams,
    mesh: MeshSpec,
    prepared: &[Result<PreparedSite>],
    config: &CampaignConfig,
) -> Result<CampaignResult> {
    if prepared.len() != mesh.len() {
        return Err(HopfError::InvalidArgument(format!("{} prepared sites for {} mesh sites", prepared.len(), mesh.len())));
    }
    config.readout.validate()?;
    let outcomes: Vec<Result<TomographyResult>> = prepared
        .par_iter()
        .enumerate()
        .map(|(i, site)| {
            let site = site.as_ref().map_err(Clone::clone)?;
            match config.photons {
                None => {
                    let rho = DensityMatrix::pure(&site.prepared);
                    Ok(TomographyResult { rho, fidelity: rho.fidelity(&site.target).clamp(0.0, 1.0), photons: 0 })
                }
                Some(photons) => {
                    let record =
                        simulate_measurements(&site.prepared, equal_split(photons), config.readout, config.seed, i as u64)?;
                    Ok(mle_tomography(&record)?.against(&site.target))
                }
            }
        })
        .collect();
    let mut rhos = Vec::with_capacity(mesh.len());
    let mut per_site = Vec::with_capacity(mesh.len());
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(t) => {
                rhos.push(t.rho);
                per_site.push(Some(t.fidelity));
            }
            Err(e) => {
                rhos.push(DensityMatrix::from_bloch(BlochVector::new(0.0, 0.0, 0.0)));
                per_site.push(None);
                failures.push(SiteFailure { site: mesh.site(i), error: e.to_string() });
            }
        }
    }
    let field = StateField::new(mesh, *p, Provenance::SimulatedExperiment, StateData::Mixed(rhos))?;
    Ok(CampaignResult { field, stats: FidelityStats::from_per_site(per_site, failures) })
}

/// Passage, readout and tomography at every site of the mesh.
pub fn run_campaign(p: &HopfParams, mesh: MeshSpec, config: &CampaignConfig) -> Result<CampaignResult> {
    let prepared = prepare_sites(p, mesh, config.ramp, config.dt);
    measure_sites(p, mesh, &prepared, config)
}
