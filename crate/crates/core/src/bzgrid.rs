//! Uniform periodic momentum meshes, sampled state fields and slices.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HopfError, Result};
use crate::model::{ground_state, HopfParams, MomentumPoint};
use crate::qubit::{BlochVector, DensityMatrix, Spinor};

/// Lattice axis. Orderings follow `x → y → z → x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Axis {
        Self::ALL[i % 3]
    }

    /// The two in-plane axes `(ν, τ)` such that `(self, ν, τ)` is cyclic.
    pub fn cyclic_pair(self) -> (Axis, Axis) {
        let i = self.index();
        (Self::from_index(i + 1), Self::from_index(i + 2))
    }
}

impl std::str::FromStr for Axis {
    type Err = HopfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(HopfError::InvalidArgument(format!("unknown axis {other:?}"))),
        }
    }
}

/// `n × n × n` mesh with sites `k_J = 2π J / n`, `J ∈ [0, n)³`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    n: usize,
}

impl MeshSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(HopfError::InvalidArgument(format!("mesh size must be at least 4, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    /// Row-major flat index, `jz` fastest.
    pub fn index(&self, site: [usize; 3]) -> usize {
        (site[0] * self.n + site[1]) * self.n + site[2]
    }

    pub fn site(&self, index: usize) -> [usize; 3] {
        let n = self.n;
        [index / (n * n), (index / n) % n, index % n]
    }

    /// Neighbour one step forward along `axis`, wrapping periodically.
    pub fn shift(&self, mut site: [usize; 3], axis: Axis) -> [usize; 3] {
        let a = axis.index();
        site[a] = (site[a] + 1) % self.n;
        site
    }

    pub fn momentum(&self, site: [usize; 3]) -> MomentumPoint {
        let n = self.n as f64;
        MomentumPoint::from_fractions([site[0] as f64 / n, site[1] as f64 / n, site[2] as f64 / n])
    }

    pub fn sites(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    SimulatedExperiment,
}

/// Per-site states; a field is either all pure or all mixed.
#[derive(Debug, Clone, PartialEq)]
pub enum StateData {
    Pure(Vec<Spinor>),
    Mixed(Vec<DensityMatrix>),
}

impl StateData {
    pub fn len(&self) -> usize {
        match self {
            StateData::Pure(v) => v.len(),
            StateData::Mixed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub mesh: MeshSpec,
    pub params: HopfParams,
    pub provenance: Provenance,
    data: StateData,
}

impl StateField {
    pub fn new(mesh: MeshSpec, params: HopfParams, provenance: Provenance, data: StateData) -> Result<Self> {
        if data.len() != mesh.len() {
            return Err(HopfError::InvalidArgument(format!(
                "field has {} entries, mesh needs {}",
                data.len(),
                mesh.len()
            )));
        }
        if let StateData::Mixed(rhos) = &data {
            if let Some(i) = rhos.iter().position(|r| !r.is_physical(1e-9)) {
                return Err(HopfError::InvalidArgument(format!(
                    "density matrix at site {:?} is not physical",
                    mesh.site(i)
                )));
            }
        }
        Ok(Self { mesh, params, provenance, data })
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// State used for overlaps: the spinor itself, or the dominant eigenvector of ρ.
    pub fn pure_state(&self, index: usize) -> Spinor {
        match &self.data {
            StateData::Pure(v) => v[index],
            StateData::Mixed(v) => v[index].dominant_eigenvector(),
        }
    }

    /// All sites reduced to pure states, in row-major order.
    pub fn pure_states(&self) -> Vec<Spinor> {
        match &self.data {
            StateData::Pure(v) => v.clone(),
            StateData::Mixed(v) => v.par_iter().map(DensityMatrix::dominant_eigenvector).collect(),
        }
    }

    pub fn bloch(&self, index: usize) -> BlochVector {
        match &self.data {
            StateData::Pure(v) => v[index].bloch(),
            StateData::Mixed(v) => v[index].bloch(),
        }
    }

    pub fn bloch_vectors(&self) -> Vec<BlochVector> {
        (0..self.len()).map(|i| self.bloch(i)).collect()
    }

    /// Spin texture as CSV with header `jx,jy,jz,sx,sy,sz`.
    pub fn texture_csv(&self) -> String {
        let mut out = String::from("jx,jy,jz,sx,sy,sz\n");
        for (i, site) in self.mesh.sites().enumerate() {
            let b = self.bloch(i);
            let _ = writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{:.16e}",
                site[0], site[1], site[2], b.x, b.y, b.z
            );
        }
        out
    }

    pub fn to_file(&self) -> FieldFile {
        let (kind, entries) = match &self.data {
            StateData::Pure(v) => (EntryKind::Spinor, v.iter().map(|s| s.to_reals().to_vec()).collect()),
            StateData::Mixed(v) => (EntryKind::Density, v.iter().map(|r| r.to_reals().to_vec()).collect()),
        };
        FieldFile {
            n: self.mesh.n(),
            h: self.params.h,
            omega: self.params.omega,
            provenance: self.provenance,
            kind,
            entries,
            generated_at: None,
        }
    }

    pub fn from_file(file: &FieldFile) -> Result<Self> {
        let mesh = MeshSpec::new(file.n)?;
        let params = HopfParams::with_omega(file.h, file.omega)?;
        let width = match file.kind {
            EntryKind::Spinor => 4,
            EntryKind::Density => 8,
        };
        if let Some(bad) = file.entries.iter().position(|e| e.len() != width) {
            return Err(HopfError::InvalidArgument(format!("entry {bad} does not have {width} reals")));
        }
        let data = match file.kind {
            EntryKind::Spinor => StateData::Pure(
                file.entries.iter().map(|e| Spinor::from_reals([e[0], e[1], e[2], e[3]])).collect(),
            ),
            EntryKind::Density => StateData::Mixed(
                file.entries
                    .iter()
                    .map(|e| DensityMatrix::from_reals([e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7]]))
                    .collect(),
            ),
        };
        Self::new(mesh, params, file.provenance, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Spinor,
    Density,
}

/// On-disk form of a [`StateField`]: entries are row-major, spinors as
/// `[Re↑, Im↑, Re↓, Im↓]` and density matrices as 8 reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldFile {
    pub n: usize,
    pub h: f64,
    pub omega: f64,
    pub provenance: Provenance,
    pub kind: EntryKind,
    pub entries: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

/// Analytic ground states at every mesh site.
pub fn sample_state_field(p: &HopfParams, mesh: MeshSpec) -> Result<StateField> {
    let states: Vec<Result<Spinor>> =
        (0..mesh.len()).into_par_iter().map(|i| ground_state(&mesh.momentum(mesh.site(i)), p)).collect();
    // first failure in row-major order, independent of scheduling
    let states = states.into_iter().collect::<Result<Vec<_>>>()?;
    StateField::new(mesh, *p, Provenance::Analytic, StateData::Pure(states))
}

/// One `n × n` layer of a field, normal to `axis`.
#[derive(Debug, Clone, Copy)]
pub struct SliceField<'a> {
    pub field: &'a StateField,
    pub axis: Axis,
    pub layer: usize,
}

impl<'a> SliceField<'a> {
    pub fn n(&self) -> usize {
        self.field.mesh.n()
    }

    /// Mesh site at in-plane position `(i, j)` over the remaining axes in
    /// natural order (`x<y<z`).
    pub fn site(&self, i: usize, j: usize) -> [usize; 3] {
        match self.axis {
            Axis::X => [self.layer, i, j],
            Axis::Y => [i, self.layer, j],
            Axis::Z => [i, j, self.layer],
        }
    }

    /// Sites in row-major order over the two remaining axes.
    pub fn sites(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let n = self.n();
        (0..n * n).map(move |q| self.site(q / n, q % n))
    }

    pub fn bloch_vectors(&self) -> Vec<BlochVector> {
        self.sites().map(|s| self.field.bloch(self.field.mesh.index(s))).collect()
    }
}

pub fn slice_field(f: &StateField, axis: Axis, layer: usize) -> Result<SliceField<'_>> {
    let n = f.mesh.n();
    if layer >= n {
        return Err(HopfError::IndexOutOfRange { what: "layer", index: layer, len: n });
    }
    Ok(SliceField { field: f, axis, layer })
}

/// Zonal equal-area partition of S² into `bins` cells: two polar caps plus
/// collars of latitude, each collar split into equal longitude sectors.
/// Collar counts follow the recursive zonal equal-area construction, so
/// every cell has area `4π/bins` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ZonalPartition {
    /// Cells per zone, north cap first.
    counts: Vec<usize>,
    /// Lower colatitude edge of each zone.
    edges: Vec<f64>,
    /// Index of the first cell of each zone.
    offsets: Vec<usize>,
}

impl ZonalPartition {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 8 {
            return Err(HopfError::InvalidArgument(format!("bins must be at least 8, got {bins}")));
        }
        let total = bins as f64;
        let cell_area = 4.0 * PI / total;
        let cap = 2.0 * (1.0 / total).sqrt().asin();
        let ideal = cell_area.sqrt();
        let collars = (((PI - 2.0 * cap) / ideal).round() as usize).max(1);
        let fit = (PI - 2.0 * cap) / collars as f64;
        let cap_area = |theta: f64| 2.0 * PI * (1.0 - theta.cos());

        let mut counts = vec![1];
        let mut carry = 0.0;
        for i in 1..=collars {
            let lo = cap + (i - 1) as f64 * fit;
            let ideal_count = (cap_area(lo + fit) - cap_area(lo)) / cell_area;
            let m = (ideal_count + carry).round();
            carry += ideal_count - m;
            counts.push(m as usize);
        }
        counts.push(1);
        debug_assert_eq!(counts.iter().sum::<usize>(), bins);

        let mut edges = Vec::with_capacity(counts.len());
        let mut offsets = Vec::with_capacity(counts.len());
        let mut seen = 0usize;
        for c in &counts {
            offsets.push(seen);
            seen += c;
            // colatitude of the cap holding `seen` cells
            edges.push((1.0 - 2.0 * seen as f64 / total).clamp(-1.0, 1.0).acos());
        }
        Ok(Self { counts, edges, offsets })
    }

    pub fn bins(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn zone_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Cell index of a unit vector.
    pub fn cell(&self, v: BlochVector) -> usize {
        let theta = v.z.clamp(-1.0, 1.0).acos();
        let zone = self.edges.partition_point(|e| *e < theta).min(self.counts.len() - 1);
        let m = self.counts[zone];
        let phi = v.y.atan2(v.x).rem_euclid(TAU);
        let sector = ((phi / TAU * m as f64).floor() as usize).min(m - 1);
        self.offsets[zone] + sector
    }
}

/// Fraction of equal-area sphere cells containing at least one sample.
pub fn coverage_fraction(sites: &[BlochVector], bins: usize) -> Result<f64> {
    if sites.is_empty() {
        return Err(HopfError::EmptyInput("coverage needs at least one Bloch vector"));
    }
    let partition = ZonalPartition::new(bins)?;
    let mut hit = vec![false; bins];
    for v in sites {
        hit[partition.cell(v.normalized())] = true;
    }
    Ok(hit.iter().filter(|h| **h).count() as f64 / bins as f64)
}
