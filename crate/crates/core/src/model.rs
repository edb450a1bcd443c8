//! The two-band Hopf Hamiltonian `H_k = ħΩ u(k)·σ` and its factorization
//! `T³ → S³ → S²` through the map `g` and the Hopf map `f`.
//!
//! Ground-state convention: the occupied (lower) band has Bloch vector
//! `S = -u/|u|`. At `k = 0` and `|h| > 1` this is spin-up, the state the
//! adiabatic passage starts from.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{HopfError, Result};
pub use crate::qubit::{BlochVector, DensityMatrix, Spinor};

/// Below this `|u|` a momentum is treated as a gap closing.
pub const GAP_TOL: f64 = 1e-12;

/// Stereographic pole tolerance.
pub const DELTA_POLE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfParams {
    /// Dimensionless mass parameter.
    pub h: f64,
    /// Energy unit ħΩ; scales eigenvalues only.
    pub omega: f64,
}

impl HopfParams {
    pub fn new(h: f64) -> Result<Self> {
        Self::with_omega(h, 1.0)
    }

    pub fn with_omega(h: f64, omega: f64) -> Result<Self> {
        if !h.is_finite() {
            return Err(HopfError::InvalidArgument(format!("h must be finite, got {h}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(HopfError::InvalidArgument(format!("omega must be positive, got {omega}")));
        }
        Ok(Self { h, omega })
    }

    /// Quantized Hopf index of the continuum model; `None` on a phase boundary.
    pub fn ideal_hopf_index(&self) -> Option<i64> {
        let a = self.h.abs();
        if a == 1.0 || a == 3.0 {
            None
        } else if a < 1.0 {
            Some(-2)
        } else if a < 3.0 {
            Some(1)
        } else {
            Some(0)
        }
    }
}

/// Crystal momentum on the torus, each component in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumPoint {
    pub kx: f64,
    pub ky: f64,
    pub kz: f64,
}

fn reduce(k: f64) -> f64 {
    let r = k.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl MomentumPoint {
    pub fn new(kx: f64, ky: f64, kz: f64) -> Self {
        Self { kx: reduce(kx), ky: reduce(ky), kz: reduce(kz) }
    }

    /// `k = 2π·f` componentwise.
    pub fn from_fractions(f: [f64; 3]) -> Self {
        Self::new(TAU * f[0], TAU * f[1], TAU * f[2])
    }

    pub fn from_array(k: [f64; 3]) -> Self {
        Self::new(k[0], k[1], k[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.kx, self.ky, self.kz]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoeffVector {
    pub ux: f64,
    pub uy: f64,
    pub uz: f64,
}

impl CoeffVector {
    pub fn norm(&self) -> f64 {
        (self.ux * self.ux + self.uy * self.uy + self.uz * self.uz).sqrt()
    }

    pub fn transverse(&self) -> f64 {
        self.ux.hypot(self.uy)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.ux, self.uy, self.uz]
    }
}

/// Point of S³ as `(Re η↑, Im η↑, Re η↓, Im η↓)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S3Point(pub [f64; 4]);

impl S3Point {
    pub fn from_complex(up: C64, down: C64) -> Self {
        Self([up.re, up.im, down.re, down.im])
    }

    pub fn eta_up(&self) -> C64 {
        C64::new(self.0[0], self.0[1])
    }

    pub fn eta_down(&self) -> C64 {
        C64::new(self.0[2], self.0[3])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct R3Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl R3Point {
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Stereographic chart of S³.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chart {
    /// `(η1, η2, η3)/(1 + η4)`, singular at `η4 = -1`.
    Standard,
    /// `(η1, η2, η3)/(1 - η4)`, singular at `η4 = +1`.
    Antipodal,
}

fn c_of_k(k: &MomentumPoint, p: &HopfParams) -> f64 {
    k.kx.cos() + k.ky.cos() + k.kz.cos() + p.h
}

/// Hamiltonian coefficients `u(k)`.
pub fn u_of_k(k: &MomentumPoint, p: &HopfParams) -> CoeffVector {
    let (sx, sy, sz) = (k.kx.sin(), k.ky.sin(), k.kz.sin());
    let c = c_of_k(k, p);
    CoeffVector {
        ux: 2.0 * (sx * sz + c * sy),
        uy: 2.0 * (c * sx - sy * sz),
        uz: sx * sx + sy * sy - sz * sz - c * c,
    }
}

/// Band energies `∓ħΩ|u|`, lower first.
pub fn energies(k: &MomentumPoint, p: &HopfParams) -> [f64; 2] {
    let e = p.omega * u_of_k(k, p).norm();
    [-e, e]
}

fn gapless(k: &MomentumPoint, norm: f64) -> HopfError {
    HopfError::GaplessPoint { kx: k.kx, ky: k.ky, kz: k.kz, norm }
}

pub fn bloch_ground(k: &MomentumPoint, p: &HopfParams) -> Result<BlochVector> {
    let u = u_of_k(k, p);
    let n = u.norm();
    if n < GAP_TOL {
        return Err(gapless(k, n));
    }
    Ok(BlochVector::new(-u.ux / n, -u.uy / n, -u.uz / n))
}

/// Lower-band eigenvector of `u·σ` in the canonical gauge.
pub fn ground_state(k: &MomentumPoint, p: &HopfParams) -> Result<Spinor> {
    bloch_ground(k, p).map(Spinor::from_bloch)
}

/// Unnormalized `(η↑, η↓)` of the map `g`.
pub fn eta_of_k(k: &MomentumPoint, p: &HopfParams) -> (C64, C64) {
    let up = C64::new(k.kx.sin(), -k.ky.sin());
    let down = C64::new(k.kz.sin(), -c_of_k(k, p));
    (up, down)
}

/// The map `g: T³ → S³`, normalized.
pub fn map_g(k: &MomentumPoint, p: &HopfParams) -> Result<S3Point> {
    let (up, down) = eta_of_k(k, p);
    let n = (up.norm_sqr() + down.norm_sqr()).sqrt();
    if n < GAP_TOL {
        return Err(HopfError::DegenerateEta { kx: k.kx, ky: k.ky, kz: k.kz });
    }
    Ok(S3Point::from_complex(up / n, down / n))
}

/// The Hopf map `f`: `ux + i uy = 2 η↑ conj(η↓)`, `uz = |η↑|² - |η↓|²`.
pub fn hopf_f(eta_up: C64, eta_down: C64) -> CoeffVector {
    let t = 2.0 * eta_up * eta_down.conj();
    CoeffVector { ux: t.re, uy: t.im, uz: eta_up.norm_sqr() - eta_down.norm_sqr() }
}

pub fn stereographic_embed(eta: &S3Point) -> Result<R3Point> {
    stereographic_embed_in(eta, Chart::Standard)
}

pub fn stereographic_embed_in(eta: &S3Point, chart: Chart) -> Result<R3Point> {
    let [e1, e2, e3, e4] = eta.0;
    let denom = match chart {
        Chart::Standard => 1.0 + e4,
        Chart::Antipodal => 1.0 - e4,
    };
    if denom <= DELTA_POLE {
        return Err(HopfError::PoleSingular { eta4: e4, delta: DELTA_POLE });
    }
    Ok(R3Point { x: e1 / denom, y: e2 / denom, z: e3 / denom })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn params(h: f64) -> HopfParams {
        HopfParams::new(h).unwrap()
    }

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn coefficients_at_reference_momenta() {
        let u = u_of_k(&MomentumPoint::new(0.0, 0.0, 0.0), &params(2.0));
        assert_eq!(u.to_array(), [0.0, 0.0, -25.0]);
        let u = u_of_k(&MomentumPoint::new(PI, PI, PI), &params(0.0));
        assert!(close(u.to_array(), [0.0, 0.0, -9.0], 1e-12));
        let u = u_of_k(&MomentumPoint::new(FRAC_PI_2, FRAC_PI_2, 0.0), &params(2.0));
        assert!(close(u.to_array(), [6.0, 6.0, -7.0], 1e-12));
    }

    #[test]
    fn ground_state_examples() {
        let s = ground_state(&MomentumPoint::new(0.0, 0.0, 0.0), &params(2.0)).unwrap();
        assert_eq!(s, Spinor::UP);

        let k = MomentumPoint::new(FRAC_PI_2, FRAC_PI_2, 0.0);
        let b = ground_state(&k, &params(2.0)).unwrap().bloch();
        assert!(close(b.to_array(), [-6.0 / 11.0, -6.0 / 11.0, 7.0 / 11.0], 1e-12));
    }

    #[test]
    fn ground_state_of_positive_sigma_z() {
        // At h = 0, k = (π/2, 0, π): C = 0 - 0 + 1 - 1 = 0, so u = (0, 0, 1).
        let k = MomentumPoint::new(FRAC_PI_2, 0.0, PI);
        let u = u_of_k(&k, &params(0.0));
        assert!(close(u.to_array(), [0.0, 0.0, 1.0], 1e-12));
        let s = ground_state(&k, &params(0.0)).unwrap();
        assert!((s.up.norm()) < 1e-12);
        assert!((s.down - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn bloch_ground_examples() {
        let b = bloch_ground(&MomentumPoint::new(0.0, 0.0, 0.0), &params(2.0)).unwrap();
        assert_eq!(b.to_array(), [-0.0, -0.0, 1.0]);
        let b = bloch_ground(&MomentumPoint::new(PI, PI, PI), &params(0.0)).unwrap();
        assert!(close(b.to_array(), [0.0, 0.0, 1.0], 1e-12));
    }

    #[test]
    fn gapless_points_are_reported() {
        // h = 1: u vanishes at k = (π, π, 0).
        let err = ground_state(&MomentumPoint::new(PI, PI, 0.0), &params(1.0)).unwrap_err();
        assert!(matches!(err, HopfError::GaplessPoint { .. }));
        let err = map_g(&MomentumPoint::new(PI, PI, 0.0), &params(1.0)).unwrap_err();
        assert!(matches!(err, HopfError::DegenerateEta { .. }));
    }

    #[test]
    fn map_g_examples() {
        let g = map_g(&MomentumPoint::new(0.0, 0.0, 0.0), &params(2.0)).unwrap();
        assert_eq!(g.0, [0.0, -0.0, 0.0, -1.0]);
        let r5 = 5f64.sqrt();
        let g = map_g(&MomentumPoint::new(FRAC_PI_2, 0.0, 0.0), &params(0.0)).unwrap();
        for (a, b) in g.0.iter().zip([1.0 / r5, 0.0, 0.0, -2.0 / r5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = map_g(&MomentumPoint::new(0.0, FRAC_PI_2, 0.0), &params(0.0)).unwrap();
        for (a, b) in g.0.iter().zip([0.0, -1.0 / r5, 0.0, -2.0 / r5]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hopf_map_examples() {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        assert_eq!(hopf_f(one, zero).to_array(), [0.0, 0.0, 1.0]);
        assert_eq!(hopf_f(zero, one).to_array(), [0.0, 0.0, -1.0]);
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        assert!(close(hopf_f(h, h).to_array(), [1.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn stereographic_examples() {
        let p = stereographic_embed(&S3Point([0.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(p.to_array(), [0.0, 0.0, 0.0]);
        let p = stereographic_embed(&S3Point([1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(p.to_array(), [1.0, 0.0, 0.0]);
        let err = stereographic_embed(&S3Point([0.0, 0.0, 0.0, -1.0])).unwrap_err();
        assert!(matches!(err, HopfError::PoleSingular { .. }));
        let p = stereographic_embed_in(&S3Point([0.0, 0.0, 0.0, -1.0]), Chart::Antipodal).unwrap();
        assert_eq!(p.to_array(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn ideal_index_phase_diagram() {
        assert_eq!(params(2.0).ideal_hopf_index(), Some(1));
        assert_eq!(params(-1.5).ideal_hopf_index(), Some(1));
        assert_eq!(params(0.0).ideal_hopf_index(), Some(-2));
        assert_eq!(params(4.0).ideal_hopf_index(), Some(0));
        assert_eq!(params(3.0).ideal_hopf_index(), None);
    }

    #[test]
    fn invalid_params() {
        assert!(HopfParams::new(f64::NAN).is_err());
        assert!(HopfParams::with_omega(1.0, 0.0).is_err());
    }

    #[test]
    fn momentum_reduction() {
        let k = MomentumPoint::new(-0.5, TAU + 0.25, 3.0 * TAU);
        assert!((k.kx - (TAU - 0.5)).abs() < 1e-15);
        assert!((k.ky - 0.25).abs() < 1e-12);
        assert!(k.kz.abs() < 1e-12 || (k.kz - TAU).abs() < 1e-12);
        assert!(k.kz < TAU);
    }
}
