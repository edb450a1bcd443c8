//! Gauge-invariant lattice topology of a sampled two-band ground state.
//!
//! Links `U_ν(J) = ⟨ψ_J|ψ_{J+ν}⟩/|…|` live on mesh bonds and the curvature
//! `F_μ(J)` is the principal-branch phase of the elementary plaquette at `J`
//! spanned by the cyclic pair `(ν, τ)`, in units of `2π`. The Coulomb-gauge
//! connection solves `curl A = F`, `div A = 0` exactly on the lattice
//! (forward-difference curl, site-centred backward-difference divergence).
//!
//! `A_μ(J)` sits on the bond centre `J + ê_μ/2` while `F_μ(J)` sits on the
//! plaquette centre `J + (1,1,1)/2 - ê_μ/2`. The Hopf index pairs them at the
//! same point by evaluating the connection's Fourier series at the plaquette
//! centres before forming `χ = -Σ_J F·A`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bzgrid::{sample_state_field, Axis, MeshSpec, SliceField, StateField};
use crate::error::{HopfError, Result};
use crate::model::HopfParams;
use crate::qubit::{DensityMatrix, Spinor};

/// Smallest `|⟨a|b⟩|` accepted for a link.
pub const TOL_OVERLAP: f64 = 1e-8;

/// Anything that can be reduced to a pure state for an overlap.
pub trait PureState {
    fn pure(&self) -> Spinor;
}

impl PureState for Spinor {
    fn pure(&self) -> Spinor {
        *self
    }
}

impl PureState for DensityMatrix {
    fn pure(&self) -> Spinor {
        self.dominant_eigenvector()
    }
}

fn link_at(a: &Spinor, b: &Spinor, site: [usize; 3], axis: Axis) -> Result<C64> {
    let z = a.inner(b);
    let overlap = z.norm();
    if overlap <= TOL_OVERLAP {
        return Err(HopfError::OrthogonalNeighbors { site, axis, overlap });
    }
    Ok(z / overlap)
}

/// Unit-modulus overlap `⟨a|b⟩/|⟨a|b⟩|`.
pub fn u1_link<A: PureState, B: PureState>(a: &A, b: &B) -> Result<C64> {
    link_at(&a.pure(), &b.pure(), [0; 3], Axis::X)
}

/// Principal-branch plaquette phase in units of `2π`, in `(-1/2, 1/2]`.
pub fn plaquette_flux(u_nu: C64, u_tau_shifted: C64, u_nu_shifted: C64, u_tau: C64) -> f64 {
    let w = u_nu * u_tau_shifted * u_nu_shifted.conj() * u_tau.conj();
    let mut phase = w.im.atan2(w.re);
    if phase <= -PI {
        phase = PI;
    }
    phase / TAU
}

/// Links along all three axes, row-major per axis.
#[derive(Debug, Clone)]
pub struct LinkField {
    pub mesh: MeshSpec,
    pub links: [Vec<C64>; 3],
}

impl LinkField {
    pub fn from_states(mesh: MeshSpec, states: &[Spinor]) -> Result<Self> {
        let per_site: Vec<Result<[C64; 3]>> = (0..mesh.len())
            .into_par_iter()
            .map(|i| {
                let site = mesh.site(i);
                let mut out = [C64::new(0.0, 0.0); 3];
                for axis in Axis::ALL {
                    let j = mesh.index(mesh.shift(site, axis));
                    out[axis.index()] = link_at(&states[i], &states[j], site, axis)?;
                }
                Ok(out)
            })
            .collect();
        let mut links = [Vec::with_capacity(mesh.len()), Vec::with_capacity(mesh.len()), Vec::with_capacity(mesh.len())];
        for r in per_site {
            let l = r?;
            for a in 0..3 {
                links[a].push(l[a]);
            }
        }
        Ok(Self { mesh, links })
    }

    pub fn link(&self, site: [usize; 3], axis: Axis) -> C64 {
        self.links[axis.index()][self.mesh.index(site)]
    }

    /// `F_μ` at one plaquette.
    pub fn flux(&self, site: [usize; 3], normal: Axis) -> f64 {
        let (nu, tau) = normal.cyclic_pair();
        let m = &self.mesh;
        plaquette_flux(
            self.link(site, nu),
            self.link(m.shift(site, nu), tau),
            self.link(m.shift(site, tau), nu),
            self.link(site, tau),
        )
    }
}

/// Lattice Berry curvature, flux/2π per plaquette.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    pub mesh: MeshSpec,
    pub f: [Vec<f64>; 3],
}

impl CurvatureField {
    pub fn zeros(mesh: MeshSpec) -> Self {
        Self { mesh, f: [vec![0.0; mesh.len()], vec![0.0; mesh.len()], vec![0.0; mesh.len()]] }
    }

    pub fn get(&self, site: [usize; 3], normal: Axis) -> f64 {
        self.f[normal.index()][self.mesh.index(site)]
    }

    /// Sum of `F_μ` over the layer `J_μ = layer`.
    pub fn layer_flux(&self, normal: Axis, layer: usize) -> f64 {
        let m = &self.mesh;
        let n = m.n();
        let mu = normal.index();
        let (p, q) = normal.cyclic_pair();
        let mut total = 0.0;
        for a in 0..n {
            for b in 0..n {
                let mut site = [0; 3];
                site[mu] = layer;
                site[p.index()] = a;
                site[q.index()] = b;
                total += self.f[mu][m.index(site)];
            }
        }
        total
    }

    /// Per-layer Chern numbers for one normal direction.
    pub fn chern_numbers(&self, normal: Axis) -> Vec<i64> {
        (0..self.mesh.n()).map(|l| self.layer_flux(normal, l).round() as i64).collect()
    }

    /// Integer monopole charge per elementary cube (forward divergence of F).
    pub fn divergence(&self) -> Vec<f64> {
        let m = &self.mesh;
        (0..m.len())
            .map(|i| {
                let site = m.site(i);
                Axis::ALL
                    .iter()
                    .map(|&a| self.f[a.index()][m.index(m.shift(site, a))] - self.f[a.index()][i])
                    .sum()
            })
            .collect()
    }
}

/// Berry curvature of a sampled field.
pub fn berry_curvature(f: &StateField) -> Result<CurvatureField> {
    let links = LinkField::from_states(f.mesh, &f.pure_states())?;
    curvature_from_links(&links)
}

pub fn curvature_from_links(links: &LinkField) -> Result<CurvatureField> {
    let mesh = links.mesh;
    let mut field = CurvatureField::zeros(mesh);
    for normal in Axis::ALL {
        field.f[normal.index()] =
            (0..mesh.len()).into_par_iter().map(|i| links.flux(mesh.site(i), normal)).collect();
    }
    Ok(field)
}

/// Coulomb-gauge Berry connection on the bonds, flux/2π units.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionField {
    pub mesh: MeshSpec,
    pub a: [Vec<f64>; 3],
}

impl ConnectionField {
    /// Forward-difference lattice curl, the operator that produced `F`.
    pub fn curl(&self) -> [Vec<f64>; 3] {
        let m = &self.mesh;
        let comp = |normal: Axis| -> Vec<f64> {
            let (nu, tau) = normal.cyclic_pair();
            let (an, at) = (&self.a[nu.index()], &self.a[tau.index()]);
            (0..m.len())
                .map(|i| {
                    let s = m.site(i);
                    an[i] + at[m.index(m.shift(s, nu))] - an[m.index(m.shift(s, tau))] - at[i]
                })
                .collect()
        };
        [comp(Axis::X), comp(Axis::Y), comp(Axis::Z)]
    }

    /// Site-centred (backward-difference) lattice divergence.
    pub fn divergence(&self) -> Vec<f64> {
        let m = &self.mesh;
        let n = m.n();
        (0..m.len())
            .map(|i| {
                let s = m.site(i);
                Axis::ALL
                    .iter()
                    .map(|&ax| {
                        let mut back = s;
                        back[ax.index()] = (s[ax.index()] + n - 1) % n;
                        self.a[ax.index()][i] - self.a[ax.index()][m.index(back)]
                    })
                    .sum()
            })
            .collect()
    }
}

/// Separable 3D FFT over a row-major `n³` array.
struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    fn run(&self, data: &mut [C64], inverse: bool) {
        let n = self.n;
        let fft = if inverse { &self.inverse } else { &self.forward };
        // z is contiguous
        fft.process(data);
        let mut line = vec![C64::new(0.0, 0.0); n];
        for stride in [n, n * n] {
            for base in 0..n * n * n {
                // first element of each line along this stride
                if (base / stride) % n != 0 {
                    continue;
                }
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + t * stride];
                }
                fft.process(&mut line);
                for (t, v) in line.iter().enumerate() {
                    data[base + t * stride] = *v;
                }
            }
        }
        if inverse {
            let scale = 1.0 / (n * n * n) as f64;
            data.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// Lattice wave number `2πm/n` folded into `(-π, π]`.
fn wave_number(m: usize, n: usize) -> f64 {
    let m = if 2 * m > n { m as f64 - n as f64 } else { m as f64 };
    TAU * m / n as f64
}

fn check_zero_net_flux(field: &CurvatureField) -> Result<()> {
    for axis in Axis::ALL {
        for layer in 0..field.mesh.n() {
            let flux = field.layer_flux(axis, layer).round() as i64;
            if flux != 0 {
                return Err(HopfError::NonzeroNetFlux { axis, layer, flux });
            }
        }
    }
    Ok(())
}

/// Spectral solution of `curl A = F`, `div A = 0` with `Â(0) = 0`, returned
/// in Fourier space.
fn solve_connection_spectral(field: &CurvatureField) -> [Vec<C64>; 3] {
    let mesh = field.mesh;
    let n = mesh.n();
    let fft = Fft3::new(n);
    let mut fh: [Vec<C64>; 3] = Default::default();
    for (mu, out) in fh.iter_mut().enumerate() {
        *out = field.f[mu].iter().map(|&x| C64::new(x, 0.0)).collect();
        fft.run(out, false);
    }
    let mut ah: [Vec<C64>; 3] = [vec![C64::new(0.0, 0.0); mesh.len()], vec![C64::new(0.0, 0.0); mesh.len()], vec![C64::new(0.0, 0.0); mesh.len()]];
    for i in 1..mesh.len() {
        let m = mesh.site(i);
        let d: [C64; 3] = std::array::from_fn(|a| C64::from_polar(1.0, TAU * m[a] as f64 / n as f64) - 1.0);
        let dc = [d[0].conj(), d[1].conj(), d[2].conj()];
        let norm: f64 = d.iter().map(|z| z.norm_sqr()).sum();
        let f = [fh[0][i], fh[1][i], fh[2][i]];
        // Â = -conj(d) × F̂ / |d|²
        let cross = [dc[1] * f[2] - dc[2] * f[1], dc[2] * f[0] - dc[0] * f[2], dc[0] * f[1] - dc[1] * f[0]];
        for a in 0..3 {
            ah[a][i] = -cross[a] / norm;
        }
    }
    ah
}

/// Coulomb-gauge connection of a flux-free curvature field.
pub fn berry_connection(field: &CurvatureField) -> Result<ConnectionField> {
    check_zero_net_flux(field)?;
    let n = field.mesh.n();
    let fft = Fft3::new(n);
    let mut ah = solve_connection_spectral(field);
    let mut a: [Vec<f64>; 3] = Default::default();
    for (comp, out) in ah.iter_mut().zip(a.iter_mut()) {
        fft.run(comp, true);
        *out = comp.iter().map(|z| z.re).collect();
    }
    Ok(ConnectionField { mesh: field.mesh, a })
}

/// Connection components resampled at the plaquette centres of the matching
/// curvature components (band-limited interpolation).
fn connection_at_plaquettes(field: &CurvatureField) -> [Vec<f64>; 3] {
    let mesh = field.mesh;
    let n = mesh.n();
    let fft = Fft3::new(n);
    let mut ah = solve_connection_spectral(field);
    let mut out: [Vec<f64>; 3] = Default::default();
    for mu in 0..3 {
        // offset of F_μ's plaquette centre from A_μ's bond centre
        let delta: [f64; 3] = std::array::from_fn(|a| if a == mu { -0.5 } else { 0.5 });
        for (i, v) in ah[mu].iter_mut().enumerate() {
            let m = mesh.site(i);
            let mut phase = C64::new(1.0, 0.0);
            for a in 0..3 {
                phase *= if 2 * m[a] == n {
                    // Nyquist: average the ±π representations
                    C64::new((PI * delta[a]).cos(), 0.0)
                } else {
                    C64::from_polar(1.0, wave_number(m[a], n) * delta[a])
                };
            }
            *v *= phase;
        }
        fft.run(&mut ah[mu], true);
        out[mu] = ah[mu].iter().map(|z| z.re).collect();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfIndexResult {
    pub chi: f64,
    pub n: usize,
    pub h: f64,
    pub nearest_integer: i64,
    pub deviation: f64,
}

/// `χ = -Σ_J F(k_J)·A(k_J)` from curvature alone.
pub fn hopf_index_from_curvature(field: &CurvatureField, h: f64) -> Result<HopfIndexResult> {
    check_zero_net_flux(field)?;
    let a = connection_at_plaquettes(field);
    let chi: f64 = -(0..3).map(|mu| field.f[mu].iter().zip(&a[mu]).map(|(f, a)| f * a).sum::<f64>()).sum::<f64>();
    let nearest = chi.round();
    Ok(HopfIndexResult {
        chi,
        n: field.mesh.n(),
        h,
        nearest_integer: nearest as i64,
        deviation: (chi - nearest).abs(),
    })
}

pub fn hopf_index(f: &StateField) -> Result<HopfIndexResult> {
    hopf_index_from_curvature(&berry_curvature(f)?, f.params.h)
}

/// Chern number of one closed layer.
pub fn chern_number(s: &SliceField<'_>) -> Result<i64> {
    let field = s.field;
    let mesh = field.mesh;
    let (nu, tau) = s.axis.cyclic_pair();
    let state = |site: [usize; 3]| field.pure_state(mesh.index(site));
    let mut total = 0.0;
    for site in s.sites() {
        let sn = mesh.shift(site, nu);
        let st = mesh.shift(site, tau);
        let snt = mesh.shift(sn, tau);
        let (p0, pn, pt, pnt) = (state(site), state(sn), state(st), state(snt));
        total += plaquette_flux(
            link_at(&p0, &pn, site, nu)?,
            link_at(&pn, &pnt, sn, tau)?,
            link_at(&pt, &pnt, st, nu)?,
            link_at(&p0, &pt, site, tau)?,
        );
    }
    Ok(total.round() as i64)
}

/// Layer Chern numbers for each normal axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChernNumbers {
    pub x: Vec<i64>,
    pub y: Vec<i64>,
    pub z: Vec<i64>,
}

impl ChernNumbers {
    pub fn from_curvature(field: &CurvatureField) -> Self {
        Self {
            x: field.chern_numbers(Axis::X),
            y: field.chern_numbers(Axis::Y),
            z: field.chern_numbers(Axis::Z),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = i64> + '_ {
        self.x.iter().chain(&self.y).chain(&self.z).copied()
    }

    pub fn all_zero(&self) -> bool {
        self.all().all(|c| c == 0)
    }
}

pub fn chern_numbers(f: &StateField) -> Result<ChernNumbers> {
    Ok(ChernNumbers::from_curvature(&berry_curvature(f)?))
}

/// Index report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub h: f64,
    pub n: usize,
    pub chi: f64,
    pub nearest_integer: i64,
    pub deviation: f64,
    pub chern_numbers: ChernNumbers,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

pub fn index_report(f: &StateField) -> Result<IndexReport> {
    let curvature = berry_curvature(f)?;
    let chern = ChernNumbers::from_curvature(&curvature);
    let r = hopf_index_from_curvature(&curvature, f.params.h)?;
    Ok(IndexReport {
        h: r.h,
        n: r.n,
        chi: r.chi,
        nearest_integer: r.nearest_integer,
        deviation: r.deviation,
        chern_numbers: chern,
        generated_at: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub chi: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub h: f64,
    pub chi_inf: i64,
    pub rows: Vec<ScalingRow>,
}

/// Finite-mesh Hopf index against the quantized value, rows sorted by `n`.
pub fn scaling_study(h: f64, ns: &[usize]) -> Result<ScalingTable> {
    let params = HopfParams::new(h)?;
    let chi_inf = params
        .ideal_hopf_index()
        .ok_or_else(|| HopfError::InvalidArgument(format!("h = {h} is a phase boundary")))?;
    let mut ns = ns.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let rows = ns
        .iter()
        .map(|&n| {
            let field = sample_state_field(&params, MeshSpec::new(n)?)?;
            let r = hopf_index(&field)?;
            Ok(ScalingRow { n, chi: r.chi, deviation: (r.chi - chi_inf as f64).abs() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingTable { h, chi_inf, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bzgrid::{slice_field, Provenance, StateData};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(h: f64, n: usize) -> StateField {
        sample_state_field(&HopfParams::new(h).unwrap(), MeshSpec::new(n).unwrap()).unwrap()
    }

    #[test]
    fn link_examples() {
        let up = Spinor::UP;
        assert_eq!(u1_link(&up, &up).unwrap(), C64::new(1.0, 0.0));
        assert!(matches!(u1_link(&up, &Spinor::DOWN), Err(HopfError::OrthogonalNeighbors { .. })));
        let b = Spinor::new(C64::new(1.0, 0.0), C64::new(0.0, 1.0)).normalized();
        let l = u1_link(&up, &b).unwrap();
        assert!((l - C64::new(1.0, 0.0)).norm() < 1e-15);
        let rho = DensityMatrix::pure(&b);
        assert!((u1_link(&rho, &b).unwrap() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn plaquette_branch() {
        let m1 = C64::new(-1.0, 0.0);
        let one = C64::new(1.0, 0.0);
        assert_eq!(plaquette_flux(m1, one, one, one), 0.5);
        assert_eq!(plaquette_flux(C64::new(-1.0, -0.0), one, one, one), 0.5);
        let f = plaquette_flux(C64::from_polar(1.0, 3.0), C64::from_polar(1.0, 1.0), one, one);
        assert!((f - (4.0 - TAU) / TAU).abs() < 1e-14);
    }

    #[test]
    fn constant_field_has_no_curvature() {
        let mesh = MeshSpec::new(6).unwrap();
        let s = Spinor::from_bloch(crate::qubit::BlochVector::new(0.3, 0.4, 0.866_025_403_784_438_6));
        let f = StateField::new(
            mesh,
            HopfParams::new(2.0).unwrap(),
            Provenance::Analytic,
            StateData::Pure(vec![s; mesh.len()]),
        )
        .unwrap();
        let c = berry_curvature(&f).unwrap();
        assert!(c.f.iter().flatten().all(|x| *x == 0.0));
        let a = berry_connection(&c).unwrap();
        assert!(a.a.iter().flatten().all(|x| *x == 0.0));
        for axis in Axis::ALL {
            assert_eq!(chern_number(&slice_field(&f, axis, 2).unwrap()).unwrap(), 0);
        }
    }

    #[test]
    fn layer_fluxes_are_integers() {
        let c = berry_curvature(&field(2.0, 10)).unwrap();
        for axis in Axis::ALL {
            for l in 0..10 {
                let s = c.layer_flux(axis, l);
                assert!((s - s.round()).abs() < 1e-10);
                assert_eq!(s.round(), 0.0);
            }
        }
        assert!(c.f.iter().flatten().all(|x| *x > -0.5 && *x <= 0.5));
    }

    #[test]
    fn layer_flux_matches_slice_chern() {
        let f = field(0.0, 8);
        let c = berry_curvature(&f).unwrap();
        for axis in Axis::ALL {
            for l in [0, 3, 7] {
                let s = slice_field(&f, axis, l).unwrap();
                assert_eq!(chern_number(&s).unwrap(), c.layer_flux(axis, l).round() as i64);
            }
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn connection_solves_curl_and_gauge() {
        let c = berry_curvature(&field(2.0, 10)).unwrap();
        assert!(c.divergence().iter().all(|d| d.abs() < 1e-10), "monopole in the h=2 field");
        let a = berry_connection(&c).unwrap();
        let curl = a.curl();
        for mu in 0..3 {
            for (x, y) in curl[mu].iter().zip(&c.f[mu]) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        assert!(a.divergence().iter().all(|d| d.abs() < 1e-10));
    }

    /// Unit flux through every z-layer, carried by one plaquette per layer.
    fn chern_layer_stack(n: usize) -> CurvatureField {
        let mesh = MeshSpec::new(n).unwrap();
        let mut c = CurvatureField::zeros(mesh);
        for l in 0..n {
            // spread 1 over four plaquettes so each stays in (-1/2, 1/2]
            for (a, b) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                c.f[2][mesh.index([a, b, l])] = 0.25;
            }
        }
        c
    }

    #[test]
    fn stacked_chern_layers_are_obstructed() {
        let c = chern_layer_stack(6);
        assert_eq!(c.chern_numbers(Axis::Z), vec![1; 6]);
        assert!(matches!(
            berry_connection(&c),
            Err(HopfError::NonzeroNetFlux { axis: Axis::Z, layer: 0, flux: 1 })
        ));
        assert!(matches!(hopf_index_from_curvature(&c, 0.0), Err(HopfError::NonzeroNetFlux { .. })));
    }

    #[test]
    fn hopf_index_examples() {
        let r = hopf_index(&field(2.0, 10)).unwrap();
        assert!((r.chi - 1.0).abs() <= 0.05, "{r:?}");
        assert_eq!(r.nearest_integer, 1);
        assert_eq!(r.deviation, (r.chi - 1.0).abs());
        let r = hopf_index(&field(0.0, 10)).unwrap();
        assert!((r.chi + 2.0).abs() <= 0.1, "{r:?}");
        let r = hopf_index(&field(4.0, 10)).unwrap();
        assert!(r.chi.abs() <= 0.05, "{r:?}");
    }

    #[test]
    fn gauge_scrambling_leaves_invariants_unchanged() {
        let f = field(2.0, 8);
        let base = hopf_index(&f).unwrap();
        let base_chern = chern_numbers(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scrambled: Vec<Spinor> =
            f.pure_states().iter().map(|s| s.scale(C64::from_polar(1.0, rng.random_range(0.0..TAU)))).collect();
        let g = StateField::new(f.mesh, f.params, f.provenance, StateData::Pure(scrambled)).unwrap();
        let cf = berry_curvature(&f).unwrap();
        let cg = berry_curvature(&g).unwrap();
        for mu in 0..3 {
            for (x, y) in cf.f[mu].iter().zip(&cg.f[mu]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!((hopf_index(&g).unwrap().chi - base.chi).abs() < 1e-10);
        assert_eq!(chern_numbers(&g).unwrap(), base_chern);
    }

    #[test]
    fn orthogonal_neighbours_are_reported_with_location() {
        let mesh = MeshSpec::new(4).unwrap();
        let mut states = vec![Spinor::UP; mesh.len()];
        states[mesh.index([1, 2, 3])] = Spinor::DOWN;
        let f = StateField::new(mesh, HopfParams::new(2.0).unwrap(), Provenance::Analytic, StateData::Pure(states))
            .unwrap();
        match berry_curvature(&f) {
            Err(HopfError::OrthogonalNeighbors { site, .. }) => {
                assert!(site == [0, 2, 3] || site == [1, 1, 3] || site == [1, 2, 2] || site == [1, 2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scaling_rows_sorted() {
        let t = scaling_study(4.0, &[8, 6]).unwrap();
        assert_eq!(t.chi_inf, 0);
        assert_eq!(t.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![6, 8]);
        assert!(scaling_study(3.0, &[6]).is_err());
    }

    #[test]
    fn finite_size_effect_grows_near_the_transition() {
        let near = scaling_study(1.5, &[20]).unwrap().rows[0].deviation;
        let far = scaling_study(2.0, &[20]).unwrap().rows[0].deviation;
        assert!(near > far, "{near} vs {far}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn random_fields_have_integer_layer_flux(seed in 0u64..1_000_000) {
            let mesh = MeshSpec::new(4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let states: Vec<Spinor> = (0..mesh.len())
                .map(|_| {
                    let z: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                    Spinor::new(C64::new(z[0], z[1]), C64::new(z[2], z[3])).normalized()
                })
                .collect();
            let f = StateField::new(mesh, HopfParams::new(2.0).unwrap(), Provenance::Analytic, StateData::Pure(states)).unwrap();
            if let Ok(c) = berry_curvature(&f) {
                for axis in Axis::ALL {
                    for l in 0..4 {
                        let s = c.layer_flux(axis, l);
                        prop_assert!((s - s.round()).abs() < 1e-9);
                        prop_assert_eq!(chern_number(&slice_field(&f, axis, l).unwrap()).unwrap(), s.round() as i64);
                    }
                }
            }
        }
    }

    #[test]
    fn fft3_roundtrip() {
        let n = 5;
        let fft = Fft3::new(n);
        let orig: Vec<C64> = (0..n * n * n).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut d = orig.clone();
        fft.run(&mut d, false);
        // DC term is the plain sum
        let sum: C64 = orig.iter().sum();
        assert!((d[0] - sum).norm() < 1e-10);
        fft.run(&mut d, true);
        for (a, b) in d.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
