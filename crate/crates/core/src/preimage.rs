//! Preimage loops of a fixed spin orientation and their linking.
//!
//! A loop is the solution set of `n(k) = s` for the ground-state Bloch
//! vector `n`. With `(e1, e2, s)` a right-handed frame this is the common
//! zero set of `a = n·e1` and `b = n·e2`, restricted to `n·s > 0`. Loops are
//! oriented along `∇a × ∇b`.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bzgrid::StateField;
use crate::error::{HopfError, Result};
use crate::model::{bloch_ground, map_g, stereographic_embed_in, Chart, HopfParams, MomentumPoint};
use crate::qubit::BlochVector;

/// Largest Bloch distance allowed for a refined vertex.
pub const CURVE_TOL: f64 = 0.05;
/// Smallest vertex distance between two curves whose linking is computed.
pub const TOL_SEP: f64 = 1e-3;
pub const MIN_RES: usize = 16;

/// Sub-cell offset of the sampling grid, chosen to avoid the model's
/// symmetric momenta falling on grid nodes.
const GRID_OFFSET: [f64; 3] = [0.271_828, 0.314_159, 0.141_421];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinTarget {
    s: BlochVector,
}

impl SpinTarget {
    pub fn new(s: BlochVector) -> Result<Self> {
        if (s.norm() - 1.0).abs() > 1e-9 {
            return Err(HopfError::InvalidArgument(format!("spin target {s:?} is not a unit vector")));
        }
        Ok(Self { s })
    }

    /// Accepts any non-zero direction.
    pub fn from_direction(v: [f64; 3]) -> Result<Self> {
        let b = BlochVector::from_array(v);
        let norm = b.norm();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(HopfError::InvalidArgument(format!("spin direction {v:?} has no orientation")));
        }
        Self::new(b.normalized())
    }

    pub fn bloch(&self) -> BlochVector {
        self.s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coords {
    T3,
    S3,
    R3,
}

/// Ordered vertices of a curve; a closed curve has an implicit edge from the
/// last vertex back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub coords: Coords,
    pub closed: bool,
    pub vertices: Vec<Vec<f64>>,
    /// Stereographic chart of R³ curves.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<Chart>,
}

impl Polyline {
    pub fn closed_r3(vertices: Vec<[f64; 3]>) -> Self {
        Self { coords: Coords::R3, closed: true, vertices: vertices.into_iter().map(Vec::from).collect(), chart: None }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.vertices.reverse();
        out
    }

    /// Inserts the midpoint of every edge (torus edges through the short way).
    pub fn subdivided(&self) -> Self {
        let mut out = self.clone();
        out.vertices.clear();
        let n = self.len();
        let edges = if self.closed { n } else { n.saturating_sub(1) };
        for i in 0..n {
            out.vertices.push(self.vertices[i].clone());
            if i < edges {
                let (a, b) = (&self.vertices[i], &self.vertices[(i + 1) % n]);
                let mid = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| match self.coords {
                        Coords::T3 => (x + wrap_delta(y - x) / 2.0).rem_euclid(TAU),
                        _ => (x + y) / 2.0,
                    })
                    .collect();
                out.vertices.push(mid);
            }
        }
        out
    }

    fn points3(&self) -> Vec<[f64; 3]> {
        self.vertices.iter().map(|v| [v[0], v[1], v[2]]).collect()
    }

    fn check_closed(&self) -> Result<()> {
        let dim = if self.coords == Coords::S3 { 4 } else { 3 };
        if !self.closed || self.len() < 3 {
            return Err(HopfError::NotClosed);
        }
        if self.vertices.iter().any(|v| v.len() != dim) {
            return Err(HopfError::CoordinateMismatch(format!("{:?} vertices must have {dim} components", self.coords)));
        }
        Ok(())
    }
}

/// Polyline file: the curve plus the target and model it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolylineFile {
    pub coords: Coords,
    pub closed: bool,
    pub vertices: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<Chart>,
    pub target: [f64; 3],
    pub h: f64,
}

impl PolylineFile {
    pub fn new(curve: &Polyline, target: &SpinTarget, h: f64) -> Self {
        Self {
            coords: curve.coords,
            closed: curve.closed,
            vertices: curve.vertices.clone(),
            chart: curve.chart,
            target: target.bloch().to_array(),
            h,
        }
    }

    pub fn polyline(&self) -> Polyline {
        Polyline { coords: self.coords, closed: self.closed, vertices: self.vertices.clone(), chart: self.chart }
    }
}

/// Torus displacement folded into `(-π, π]`.
fn wrap_delta(d: f64) -> f64 {
    let r = d.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Fine sampling grid with level-function values at every node.
struct LevelGrid {
    res: usize,
    spacing: f64,
    /// `(a, b, c)` per node, row-major with z fastest.
    values: Vec<[f64; 3]>,
}

impl LevelGrid {
    fn node(&self, i: [usize; 3]) -> usize {
        (i[0] * self.res + i[1]) * self.res + i[2]
    }

    fn position(&self, i: [isize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (i[a] as f64 + GRID_OFFSET[a]) * self.spacing)
    }
}

fn level_values(n: BlochVector, e1: BlochVector, e2: BlochVector, s: BlochVector) -> [f64; 3] {
    [n.dot(e1), n.dot(e2), n.dot(s)]
}

/// Kuhn decomposition of the unit cube: one tetrahedron per axis ordering.
const KUHN: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// One oriented piece of the zero set inside a tetrahedron.
struct Segment {
    from: [usize; 3],
    to: [usize; 3],
    points: [[f64; 3]; 2],
}

/// Zero of the two level functions on a triangle, as barycentric weights.
fn face_zero(vals: [[f64; 3]; 3]) -> Option<[f64; 3]> {
    let a = [vals[0][0], vals[1][0], vals[2][0]];
    let b = [vals[0][1], vals[1][1], vals[2][1]];
    let w = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let sum = w[0] + w[1] + w[2];
    if sum == 0.0 {
        return None;
    }
    let l = w.map(|x| x / sum);
    l.iter().all(|&x| x >= 0.0).then_some(l)
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    if d == 0.0 {
        return None;
    }
    Some(std::array::from_fn(|c| {
        let mut mc = m;
        for row in 0..3 {
            mc[row][c] = r[row];
        }
        det(mc) / d
    }))
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn sorted_key(mut k: [usize; 3]) -> [usize; 3] {
    k.sort_unstable();
    k
}

fn tetra_segment(grid: &LevelGrid, ids: [usize; 4], pos: [[f64; 3]; 4]) -> Result<Option<Segment>> {
    let vals = ids.map(|i| grid.values[i]);
    let mut hits: Vec<([usize; 3], [f64; 3], f64)> = Vec::with_capacity(2);
    for skip in 0..4 {
        let face: Vec<usize> = (0..4).filter(|&v| v != skip).collect();
        let fv = [face[0], face[1], face[2]];
        // weights in sorted-id order so both neighbouring tets agree
        let mut order = fv;
        order.sort_unstable_by_key(|&v| ids[v]);
        if let Some(l) = face_zero(order.map(|v| vals[v])) {
            let p: [f64; 3] = std::array::from_fn(|a| (0..3).map(|j| l[j] * pos[order[j]][a]).sum());
            let c: f64 = (0..3).map(|j| l[j] * vals[order[j]][2]).sum();
            hits.push((sorted_key(fv.map(|v| ids[v])), p, c));
        }
    }
    match hits.len() {
        0 => Ok(None),
        2 => {
            if hits[0].2 + hits[1].2 <= 0.0 {
                return Ok(None);
            }
            // orient along ∇a × ∇b of the linear interpolant
            let m: [[f64; 3]; 3] = std::array::from_fn(|r| sub3(pos[r + 1], pos[0]));
            let da: [f64; 3] = std::array::from_fn(|r| vals[r + 1][0] - vals[0][0]);
            let db: [f64; 3] = std::array::from_fn(|r| vals[r + 1][1] - vals[0][1]);
            let (Some(ga), Some(gb)) = (solve3(m, da), solve3(m, db)) else {
                return Err(HopfError::ResolutionTooCoarse("degenerate tetrahedron".into()));
            };
            let t = cross3(ga, gb);
            let (h0, h1) = (&hits[0], &hits[1]);
            if dot3(sub3(h1.1, h0.1), t) >= 0.0 {
                Ok(Some(Segment { from: h0.0, to: h1.0, points: [h0.1, h1.1] }))
            } else {
                Ok(Some(Segment { from: h1.0, to: h0.0, points: [h1.1, h0.1] }))
            }
        }
        n => {
            // both crossings of the antipodal branch are harmless
            let c: Vec<f64> = hits.iter().map(|h| h.2).collect();
            if c.iter().all(|&x| x < 0.0) {
                return Ok(None);
            }
            Err(HopfError::ResolutionTooCoarse(format!("{n} level-line crossings in one tetrahedron")))
        }
    }
}

/// Minimum-norm Newton step of `(a, b)` toward zero.
fn refine(k: [f64; 3], p: &HopfParams, frame: (BlochVector, BlochVector, BlochVector)) -> Result<[f64; 3]> {
    let (e1, e2, s) = frame;
    let eval = |k: [f64; 3]| -> Result<[f64; 3]> {
        Ok(level_values(bloch_ground(&MomentumPoint::from_array(k), p)?, e1, e2, s))
    };
    let f0 = eval(k)?;
    let h = 1e-7;
    let mut jac = [[0.0; 3]; 2];
    for a in 0..3 {
        let mut up = k;
        let mut down = k;
        up[a] += h;
        down[a] -= h;
        let (fu, fd) = (eval(up)?, eval(down)?);
        jac[0][a] = (fu[0] - fd[0]) / (2.0 * h);
        jac[1][a] = (fu[1] - fd[1]) / (2.0 * h);
    }
    let jjt = [
        [dot3(jac[0], jac[0]), dot3(jac[0], jac[1])],
        [dot3(jac[1], jac[0]), dot3(jac[1], jac[1])],
    ];
    let det = jjt[0][0] * jjt[1][1] - jjt[0][1] * jjt[1][0];
    if det.abs() < 1e-300 {
        return Ok(k);
    }
    let y = [
        (jjt[1][1] * f0[0] - jjt[0][1] * f0[1]) / det,
        (-jjt[1][0] * f0[0] + jjt[0][0] * f0[1]) / det,
    ];
    Ok(std::array::from_fn(|a| k[a] - (jac[0][a] * y[0] + jac[1][a] * y[1])))
}

/// Closed preimage loops of `target` in T³, extracted on a `res³` grid.
pub fn preimage_contours(p: &HopfParams, target: &SpinTarget, res: usize) -> Result<Vec<Polyline>> {
    if res < MIN_RES {
        return Err(HopfError::ResolutionTooCoarse(format!("res = {res} is below {MIN_RES}")));
    }
    if p.ideal_hopf_index().is_none() {
        return Err(HopfError::InvalidArgument(format!("h = {} is a phase boundary", p.h)));
    }
    let s = target.bloch();
    let (e1, e2) = s.tangent_frame();
    let spacing = TAU / res as f64;
    let total = res * res * res;
    let values = (0..total)
        .into_par_iter()
        .map(|i| {
            let idx = [i / (res * res), (i / res) % res, i % res];
            let k: [f64; 3] = std::array::from_fn(|a| (idx[a] as f64 + GRID_OFFSET[a]) * spacing);
            Ok(level_values(bloch_ground(&MomentumPoint::from_array(k), p)?, e1, e2, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let grid = LevelGrid { res, spacing, values };

    let per_cell: Vec<Result<Vec<Segment>>> = (0..total)
        .into_par_iter()
        .map(|i| {
            let base = [i / (res * res), (i / res) % res, i % res];
            let mut out = Vec::new();
            for perm in KUHN {
                let mut corner = [0usize; 3];
                let mut offs = [[0usize; 3]; 4];
                for (step, &axis) in perm.iter().enumerate() {
                    corner[axis] = 1;
                    offs[step + 1] = corner;
                }
                let ids = offs.map(|o| grid.node(std::array::from_fn(|a| (base[a] + o[a]) % res)));
                let pos = offs.map(|o| grid.position(std::array::from_fn(|a| (base[a] + o[a]) as isize)));
                if let Some(seg) = tetra_segment(&grid, ids, pos)? {
                    out.push(seg);
                }
            }
            Ok(out)
        })
        .collect();

    // chain: every face crossing has exactly one outgoing and one incoming edge
    let mut next: HashMap<[usize; 3], [usize; 3]> = HashMap::new();
    let mut incoming: HashMap<[usize; 3], usize> = HashMap::new();
    let mut point: HashMap<[usize; 3], [f64; 3]> = HashMap::new();
    for cell in per_cell {
        for seg in cell? {
            if next.insert(seg.from, seg.to).is_some() {
                return Err(HopfError::ResolutionTooCoarse("level line branches at a face".into()));
            }
            *incoming.entry(seg.to).or_default() += 1;
            point.entry(seg.from).or_insert(seg.points[0].map(|x| x.rem_euclid(TAU)));
            point.entry(seg.to).or_insert(seg.points[1].map(|x| x.rem_euclid(TAU)));
        }
    }
    if incoming.values().any(|&c| c != 1) || incoming.len() != next.len() {
        return Err(HopfError::ResolutionTooCoarse("level line segments do not chain into loops".into()));
    }
    let mut starts: Vec<[usize; 3]> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut visited: HashMap<[usize; 3], ()> = HashMap::with_capacity(next.len());
    let mut loops = Vec::new();
    for start in starts {
        if visited.contains_key(&start) {
            continue;
        }
        let mut keys = vec![start];
        visited.insert(start, ());
        let mut cur = next[&start];
        while cur != start {
            if visited.insert(cur, ()).is_some() {
                return Err(HopfError::ResolutionTooCoarse("level line re-enters a loop".into()));
            }
            keys.push(cur);
            cur = *next
                .get(&cur)
                .ok_or_else(|| HopfError::ResolutionTooCoarse("open level line".into()))?;
        }
        if keys.len() < 3 {
            continue;
        }
        let raw: Vec<[f64; 3]> = keys.iter().map(|k| point[k]).collect();
        loops.push(finish_loop(&raw, p, (e1, e2, s), spacing)?);
    }
    Ok(loops)
}

/// Refines, reduces mod 2π and drops repeated vertices.
fn finish_loop(raw: &[[f64; 3]], p: &HopfParams, frame: (BlochVector, BlochVector, BlochVector), spacing: f64) -> Result<Polyline> {
    let refined = raw
        .par_iter()
        .map(|&k| {
            let r = refine(k, p, frame)?.map(|x| x.rem_euclid(TAU));
            let n = bloch_ground(&MomentumPoint::from_array(r), p)?;
            if n.distance(frame.2) > CURVE_TOL {
                return Err(HopfError::ResolutionTooCoarse(format!(
                    "refined vertex {r:?} is {} from the target",
                    n.distance(frame.2)
                )));
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut vertices: Vec<[f64; 3]> = Vec::with_capacity(refined.len());
    for v in refined {
        if vertices.last().is_none_or(|&last| torus_distance(last, v) > 1e-12) {
            vertices.push(v);
        }
    }
    while vertices.len() > 1 && torus_distance(vertices[0], *vertices.last().unwrap()) <= 1e-12 {
        vertices.pop();
    }
    if vertices.len() < 3 {
        return Err(HopfError::ResolutionTooCoarse("loop collapsed under refinement".into()));
    }
    // refinement may not move a vertex by more than a cell
    let diag = 3f64.sqrt() * spacing;
    let n = vertices.len();
    if (0..n).any(|i| torus_distance(vertices[i], vertices[(i + 1) % n]) > 2.0 * diag) {
        return Err(HopfError::ResolutionTooCoarse("refined loop has a gap wider than two cells".into()));
    }
    Ok(Polyline { coords: Coords::T3, closed: true, vertices: vertices.into_iter().map(Vec::from).collect(), chart: None })
}

fn torus_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3(std::array::from_fn(|i| wrap_delta(b[i] - a[i])))
}

/// A query for the mesh sites near a target orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonQuery {
    pub target: SpinTarget,
    pub epsilon: f64,
}

impl EpsilonQuery {
    /// `epsilon ∈ (0, 2]`; at 2 every site on the sphere qualifies.
    pub fn new(target: SpinTarget, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 2.0) {
            return Err(HopfError::InvalidArgument(format!("epsilon {epsilon} outside (0, 2]")));
        }
        Ok(Self { target, epsilon })
    }
}

/// Sites whose Bloch vector is within `ε` of the target, row-major.
pub fn epsilon_neighborhood(f: &StateField, q: &EpsilonQuery) -> Vec<([usize; 3], BlochVector)> {
    let s = q.target.bloch();
    (0..f.len())
        .filter_map(|i| {
            let b = f.bloch(i);
            (b.distance(s) <= q.epsilon).then(|| (f.mesh.site(i), b))
        })
        .collect()
}

/// Continuous lift of a closed torus curve and its winding vector.
pub fn unwrap_t3(c: &Polyline) -> Result<(Vec<[f64; 3]>, [i64; 3])> {
    if c.coords != Coords::T3 {
        return Err(HopfError::CoordinateMismatch(format!("expected T3 coordinates, got {:?}", c.coords)));
    }
    c.check_closed()?;
    let pts = c.points3();
    let mut out = vec![pts[0]];
    for w in pts.windows(2) {
        let prev = *out.last().unwrap();
        out.push(std::array::from_fn(|a| prev[a] + wrap_delta(w[1][a] - w[0][a])));
    }
    let last = *out.last().unwrap();
    let closing: [f64; 3] = std::array::from_fn(|a| last[a] + wrap_delta(pts[0][a] - pts[pts.len() - 1][a]));
    let winding = std::array::from_fn(|a| ((closing[a] - out[0][a]) / TAU).round() as i64);
    Ok((out, winding))
}

/// Chooses one chart that keeps every vertex of every curve away from its
/// pole, preferring the larger clearance.
fn common_chart(curves: &[Vec<[f64; 4]>]) -> Result<Chart> {
    let clearance = |sign: f64| -> f64 {
        curves.iter().flatten().map(|e| 1.0 + sign * e[3]).fold(f64::INFINITY, f64::min)
    };
    let (std_gap, anti_gap) = (clearance(1.0), clearance(-1.0));
    let delta = crate::model::DELTA_POLE;
    if std_gap <= delta && anti_gap <= delta {
        return Err(HopfError::ChartExhausted);
    }
    Ok(if std_gap >= anti_gap { Chart::Standard } else { Chart::Antipodal })
}

fn lift_s3(c: &Polyline, p: &HopfParams) -> Result<Vec<[f64; 4]>> {
    let (pts, _) = unwrap_t3(c)?;
    pts.iter().map(|k| map_g(&MomentumPoint::from_array(*k), p).map(|e| e.0)).collect()
}

fn project(s3: &[[f64; 4]], chart: Chart) -> Result<Polyline> {
    let verts = s3
        .iter()
        .map(|e| stereographic_embed_in(&crate::model::S3Point(*e), chart).map(|r| vec![r.x, r.y, r.z]))
        .collect::<Result<Vec<_>>>()?;
    Ok(Polyline { coords: Coords::R3, closed: true, vertices: verts, chart: Some(chart) })
}

/// `g` followed by a stereographic chart, vertex by vertex.
pub fn embed_r3(c: &Polyline, p: &HopfParams) -> Result<Polyline> {
    let s3 = lift_s3(c, p)?;
    let chart = common_chart(std::slice::from_ref(&s3))?;
    project(&s3, chart)
}

/// Embeds several curves into one shared chart.
pub fn embed_r3_common(curves: &[Polyline], p: &HopfParams) -> Result<Vec<Polyline>> {
    let s3: Vec<Vec<[f64; 4]>> = curves.iter().map(|c| lift_s3(c, p)).collect::<Result<_>>()?;
    let chart = common_chart(&s3)?;
    s3.iter().map(|v| project(v, chart)).collect()
}

/// Gauss linking number with its pre-rounding value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linking {
    pub number: i64,
    pub raw: f64,
}

impl Linking {
    pub fn residual(&self) -> f64 {
        (self.raw - self.number as f64).abs()
    }
}

/// Signed solid angle swept by segment `p1→p2` against `p3→p4`, over `4π`.
fn segment_pair(p1: [f64; 3], p2: [f64; 3], p3: [f64; 3], p4: [f64; 3]) -> f64 {
    let r13 = sub3(p3, p1);
    let r14 = sub3(p4, p1);
    let r23 = sub3(p3, p2);
    let r24 = sub3(p4, p2);
    let faces = [cross3(r13, r14), cross3(r14, r24), cross3(r24, r23), cross3(r23, r13)];
    let mut n = [[0.0; 3]; 4];
    for (slot, f) in n.iter_mut().zip(faces) {
        let l = norm3(f);
        if l == 0.0 {
            return 0.0;
        }
        *slot = f.map(|x| x / l);
    }
    let omega: f64 = (0..4).map(|i| dot3(n[i], n[(i + 1) % 4]).clamp(-1.0, 1.0).asin()).sum();
    let orient = dot3(cross3(sub3(p4, p3), sub3(p2, p1)), r13);
    omega * orient.signum() / (4.0 * PI)
}

fn edges(pts: &[[f64; 3]]) -> Vec<([f64; 3], [f64; 3])> {
    (0..pts.len()).map(|i| (pts[i], pts[(i + 1) % pts.len()])).collect()
}

fn gauss_sum(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let eb = edges(b);
    let partial: Vec<f64> = edges(a)
        .par_iter()
        .map(|&(p1, p2)| eb.iter().map(|&(p3, p4)| segment_pair(p1, p2, p3, p4)).sum())
        .collect();
    partial.iter().sum()
}

fn min_vertex_distance(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.par_iter()
        .map(|p| b.iter().map(|q| norm3(sub3(*p, *q))).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Linking number of two closed R³ curves.
pub fn linking_number(a: &Polyline, b: &Polyline) -> Result<Linking> {
    for c in [a, b] {
        if c.coords != Coords::R3 {
            return Err(HopfError::CoordinateMismatch(format!("linking needs R3 curves, got {:?}", c.coords)));
        }
        c.check_closed()?;
    }
    if a.chart != b.chart {
        return Err(HopfError::CoordinateMismatch("curves embedded through different charts".into()));
    }
    let (pa, pb) = (a.points3(), b.points3());
    let distance = min_vertex_distance(&pa, &pb);
    if distance < TOL_SEP {
        return Err(HopfError::CurvesTooClose { distance, tol: TOL_SEP });
    }
    let raw = gauss_sum(&pa, &pb);
    Ok(Linking { number: raw.round() as i64, raw })
}

fn bounds(pts: &[[f64; 3]]) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

/// Closed R³ lift of a null-homologous 1-cycle on T³. Components are joined
/// to the first one by bridges traversed out and back, which cancel as
/// chains, so the lift represents the same cycle.
fn lift_cycle(components: &[Polyline]) -> Result<Vec<[f64; 3]>> {
    let lifts = components.iter().map(unwrap_t3).collect::<Result<Vec<_>>>()?;
    let total: [i64; 3] = std::array::from_fn(|a| lifts.iter().map(|l| l.1[a]).sum());
    if total != [0; 3] {
        return Err(HopfError::NonContractible { winding: total });
    }
    let Some(((first, w0), rest)) = lifts.split_first() else {
        return Err(HopfError::EmptyInput("torus cycle"));
    };
    let mut out = first.clone();
    // back at the start of the first component, shifted by its winding
    let hub: [f64; 3] = std::array::from_fn(|a| first[0][a] + TAU * w0[a] as f64);
    let mut here = hub;
    for (pts, w) in rest {
        let d: [f64; 3] = std::array::from_fn(|a| wrap_delta(pts[0][a] - here[a]));
        out.push(here);
        let base: [f64; 3] = std::array::from_fn(|a| here[a] + d[a] - pts[0][a]);
        out.extend(pts.iter().map(|p| std::array::from_fn::<f64, 3, _>(|a| p[a] + base[a])));
        // the return bridge retraces `d`
        let end: [f64; 3] = std::array::from_fn(|a| pts[0][a] + base[a] + TAU * w[a] as f64);
        out.push(end);
        here = std::array::from_fn(|a| end[a] - d[a]);
    }
    if rest.is_empty() {
        return Ok(out);
    }
    out.push(here);
    Ok(out)
}

/// Linking number of two null-homologous 1-cycles in T³, each given as its
/// loops: the sum of R³ linking numbers between the lift of `a` and every
/// lattice translate of the lift of `b`. Translates with disjoint bounding
/// boxes contribute nothing.
pub fn torus_linking_cycles(a: &[Polyline], b: &[Polyline]) -> Result<Linking> {
    let la = lift_cycle(a)?;
    let lb = lift_cycle(b)?;
    let (alo, ahi) = bounds(&la);
    let (blo, bhi) = bounds(&lb);
    let range = |a: usize| -> (i64, i64) {
        (((alo[a] - bhi[a]) / TAU).floor() as i64, ((ahi[a] - blo[a]) / TAU).ceil() as i64)
    };
    let (rx, ry, rz) = (range(0), range(1), range(2));
    let mut raw = 0.0;
    for vx in rx.0..=rx.1 {
        for vy in ry.0..=ry.1 {
            for vz in rz.0..=rz.1 {
                let shift = [vx as f64 * TAU, vy as f64 * TAU, vz as f64 * TAU];
                if (0..3).any(|i| bhi[i] + shift[i] < alo[i] || blo[i] + shift[i] > ahi[i]) {
                    continue;
                }
                let moved: Vec<[f64; 3]> = lb.iter().map(|p| std::array::from_fn(|i| p[i] + shift[i])).collect();
                let distance = min_vertex_distance(&la, &moved);
                if distance < TOL_SEP {
                    return Err(HopfError::CurvesTooClose { distance, tol: TOL_SEP });
                }
                raw += gauss_sum(&la, &moved);
            }
        }
    }
    Ok(Linking { number: raw.round() as i64, raw })
}

/// Linking number of two contractible loops in T³.
pub fn torus_linking_number(a: &Polyline, b: &Polyline) -> Result<Linking> {
    for c in [a, b] {
        let (_, w) = unwrap_t3(c)?;
        if w != [0; 3] {
            return Err(HopfError::NonContractible { winding: w });
        }
    }
    torus_linking_cycles(std::slice::from_ref(a), std::slice::from_ref(b))
}

/// How loops found in the Brillouin zone are linked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkRoute {
    /// Directly in T³ through periodic lifts.
    #[default]
    Torus,
    /// After mapping through `g` and a common stereographic chart.
    Embedded,
}

impl std::str::FromStr for LinkRoute {
    type Err = HopfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(LinkRoute::Torus),
            "embedded" => Ok(LinkRoute::Embedded),
            other => Err(HopfError::InvalidArgument(format!("unknown link route {other:?}"))),
        }
    }
}

pub fn link_pair(a: &Polyline, b: &Polyline, p: &HopfParams, route: LinkRoute) -> Result<Linking> {
    match route {
        LinkRoute::Torus => torus_linking_number(a, b),
        LinkRoute::Embedded => {
            let e = embed_r3_common(&[a.clone(), b.clone()], p)?;
            linking_number(&e[0], &e[1])
        }
    }
}

/// Preimage components found for one target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreimageSummary {
    pub loops: usize,
    pub windings: Vec<[i64; 3]>,
}

/// Linking between two individual components of two preimages. On the
/// torus route only pairs of contractible components are listed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentLink {
    pub targets: [usize; 2],
    pub components: [usize; 2],
    pub number: i64,
    pub raw: f64,
}

/// Pairwise linking numbers of whole preimages. A preimage with several
/// components counts as their sum; each component pair is listed in
/// `components`. Entries are absent when either preimage is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMatrix {
    pub h: f64,
    pub res: usize,
    pub route: LinkRoute,
    pub targets: Vec<[f64; 3]>,
    pub preimages: Vec<PreimageSummary>,
    pub entries: Vec<Vec<Option<i64>>>,
    pub residuals: Vec<Vec<Option<f64>>>,
    pub components: Vec<ComponentLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

impl LinkMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<i64> {
        self.entries[i][j]
    }

    pub fn loops(&self) -> Vec<usize> {
        self.preimages.iter().map(|p| p.loops).collect()
    }

    /// Every defined off-diagonal entry, upper triangle row by row.
    pub fn off_diagonal(&self) -> Vec<i64> {
        let n = self.entries.len();
        (0..n).flat_map(|i| (i + 1..n).filter_map(move |j| self.entries[i][j])).collect()
    }
}

pub fn link_matrix(p: &HopfParams, targets: &[SpinTarget], res: usize) -> Result<LinkMatrix> {
    link_matrix_with(p, targets, res, LinkRoute::default())
}

pub fn link_matrix_with(p: &HopfParams, targets: &[SpinTarget], res: usize, route: LinkRoute) -> Result<LinkMatrix> {
    let curves: Vec<Vec<Polyline>> = targets.iter().map(|t| preimage_contours(p, t, res)).collect::<Result<_>>()?;
    let preimages = curves
        .iter()
        .map(|c| {
            Ok(PreimageSummary { loops: c.len(), windings: c.iter().map(|l| unwrap_t3(l).map(|u| u.1)).collect::<Result<_>>()? })
        })
        .collect::<Result<Vec<_>>>()?;
    // one shared chart for every loop so all pairs are comparable
    let embedded: Option<Vec<Vec<Polyline>>> = match route {
        LinkRoute::Embedded => {
            let flat: Vec<Polyline> = curves.iter().flatten().cloned().collect();
            if flat.is_empty() {
                None
            } else {
                let mut e = embed_r3_common(&flat, p)?.into_iter();
                Some(curves.iter().map(|c| e.by_ref().take(c.len()).collect()).collect())
            }
        }
        LinkRoute::Torus => None,
    };
    let n = targets.len();
    let mut entries = vec![vec![None; n]; n];
    let mut residuals = vec![vec![None; n]; n];
    let mut components = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if curves[i].is_empty() || curves[j].is_empty() {
                continue;
            }
            let mut raw = 0.0;
            for (a, ca) in curves[i].iter().enumerate() {
                for (b, cb) in curves[j].iter().enumerate() {
                    let l = match &embedded {
                        Some(e) => linking_number(&e[i][a], &e[j][b])?,
                        None => {
                            let contractible = |k: usize, c: usize| preimages[k].windings[c] == [0; 3];
                            if !(contractible(i, a) && contractible(j, b)) {
                                continue;
                            }
                            torus_linking_number(ca, cb)?
                        }
                    };
                    raw += l.raw;
                    components.push(ComponentLink { targets: [i, j], components: [a, b], number: l.number, raw: l.raw });
                }
            }
            if embedded.is_none() {
                raw = torus_linking_cycles(&curves[i], &curves[j])?.raw;
            }
            let number = raw.round() as i64;
            entries[i][j] = Some(number);
            entries[j][i] = Some(number);
            residuals[i][j] = Some((raw - number as f64).abs());
            residuals[j][i] = residuals[i][j];
        }
    }
    Ok(LinkMatrix {
        h: p.h,
        res,
        route,
        targets: targets.iter().map(|t| t.bloch().to_array()).collect(),
        preimages,
        entries,
        residuals,
        components,
        generated_at: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bzgrid::{sample_state_field, MeshSpec};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn circle(center: [f64; 3], u: [f64; 3], v: [f64; 3], r: f64, n: usize) -> Polyline {
        Polyline::closed_r3(
            (0..n)
                .map(|i| {
                    let t = TAU * i as f64 / n as f64;
                    std::array::from_fn(|a| center[a] + r * (t.cos() * u[a] + t.sin() * v[a]))
                })
                .collect(),
        )
    }

    fn hopf_link() -> (Polyline, Polyline) {
        (
            circle([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, 64),
            circle([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1.0, 64),
        )
    }

    /// Midpoint-rule Gauss double integral on densely sampled curves.
    fn gauss_quadrature(a: &Polyline, b: &Polyline) -> f64 {
        let (pa, pb) = (a.points3(), b.points3());
        let mut total = 0.0;
        for (p1, p2) in edges(&pa) {
            let ma: [f64; 3] = std::array::from_fn(|i| (p1[i] + p2[i]) / 2.0);
            let da = sub3(p2, p1);
            for (q1, q2) in edges(&pb) {
                let mb: [f64; 3] = std::array::from_fn(|i| (q1[i] + q2[i]) / 2.0);
                let r = sub3(ma, mb);
                total += dot3(r, cross3(da, sub3(q2, q1))) / norm3(r).powi(3);
            }
        }
        total / (4.0 * PI)
    }

    #[test]
    fn hopf_link_matches_gauss_integral() {
        let (a, b) = hopf_link();
        let l = linking_number(&a, &b).unwrap();
        assert_eq!(l.number.abs(), 1);
        assert!(l.residual() < 1e-9, "{l:?}");
        let fine_a = circle([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, 600);
        let fine_b = circle([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1.0, 600);
        let q = gauss_quadrature(&fine_a, &fine_b);
        assert_eq!(q.round() as i64, l.number);
    }

    #[test]
    fn separated_circles_are_unlinked() {
        let a = circle([0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, 40);
        let b = circle([3.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 1.0, 40);
        let l = linking_number(&a, &b).unwrap();
        assert_eq!(l.number, 0);
        assert!(l.raw.abs() < 1e-12);
    }

    #[test]
    fn linking_symmetries() {
        let (a, b) = hopf_link();
        let base = linking_number(&a, &b).unwrap().number;
        assert_eq!(linking_number(&a.subdivided(), &b).unwrap().number, base);
        assert_eq!(linking_number(&a.reversed(), &b.reversed()).unwrap().number, base);
        assert_eq!(linking_number(&a.reversed(), &b).unwrap().number, -base);
        assert_eq!(linking_number(&b, &a).unwrap().number, base);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot = |p: &Polyline| Polyline::closed_r3(
            p.points3().iter().map(|v| [c * v[0] - s * v[2], v[1], s * v[0] + c * v[2]]).collect(),
        );
        assert_eq!(linking_number(&rot(&a), &rot(&b)).unwrap().number, base);
    }

    #[test]
    fn linking_preconditions() {
        let (a, b) = hopf_link();
        let mut open = a.clone();
        open.closed = false;
        assert_eq!(linking_number(&open, &b), Err(HopfError::NotClosed));
        let two = Polyline::closed_r3(vec![[0.0; 3], [1.0, 0.0, 0.0]]);
        assert_eq!(linking_number(&two, &b), Err(HopfError::NotClosed));
        assert!(matches!(linking_number(&a, &a), Err(HopfError::CurvesTooClose { .. })));
        let mut t3 = a.clone();
        t3.coords = Coords::T3;
        assert!(matches!(linking_number(&t3, &b), Err(HopfError::CoordinateMismatch(_))));
    }

    #[test]
    fn torus_linking_of_small_hopf_link() {
        // a Hopf link sitting inside one cell of the torus
        let place = |p: &Polyline| Polyline {
            coords: Coords::T3,
            closed: true,
            vertices: p.points3().iter().map(|v| v.iter().map(|x| (x * 0.5 + 3.0).rem_euclid(TAU)).collect()).collect(),
            chart: None,
        };
        let (a, b) = hopf_link();
        let base = linking_number(&a, &b).unwrap().number;
        assert_eq!(torus_linking_number(&place(&a), &place(&b)).unwrap().number, base);
        // a straight winding loop is not contractible
        let line = Polyline {
            coords: Coords::T3,
            closed: true,
            vertices: (0..8).map(|i| vec![TAU * i as f64 / 8.0, 1.0, 1.0]).collect(),
            chart: None,
        };
        assert_eq!(unwrap_t3(&line).unwrap().1, [1, 0, 0]);
        assert!(matches!(torus_linking_number(&line, &place(&a)), Err(HopfError::NonContractible { .. })));
    }

    fn t3(points: Vec<[f64; 3]>) -> Polyline {
        Polyline {
            coords: Coords::T3,
            closed: true,
            vertices: points.into_iter().map(|p| p.iter().map(|x| x.rem_euclid(TAU)).collect()).collect(),
            chart: None,
        }
    }

    #[test]
    fn winding_pair_forms_a_linkable_cycle() {
        // two opposite straight loops around x; a small ring threads only one
        let line = |y: f64, z: f64, dir: f64| {
            t3((0..16).map(|i| [dir * TAU * i as f64 / 16.0, y, z]).collect())
        };
        let cycle = [line(1.0, 1.0, 1.0), line(4.0, 4.0, -1.0)];
        let ring = t3((0..24)
            .map(|i| {
                let t = TAU * i as f64 / 24.0;
                [2.0, 1.0 + 0.3 * t.cos(), 1.0 + 0.3 * t.sin()]
            })
            .collect());
        let l = torus_linking_cycles(&cycle, std::slice::from_ref(&ring)).unwrap();
        assert_eq!(l.number.abs(), 1);
        assert!(l.residual() < 1e-9);
        let swapped = torus_linking_cycles(std::slice::from_ref(&ring), &cycle).unwrap();
        assert_eq!(swapped.number, l.number);
        assert!(matches!(
            torus_linking_cycles(&cycle[..1], std::slice::from_ref(&ring)),
            Err(HopfError::NonContractible { winding: [1, 0, 0] })
        ));
    }

    #[test]
    fn linking_equals_index_in_the_doubled_phase() {
        let p = HopfParams::new(0.0).unwrap();
        let spins = [target([1.0, 0.0, 0.0]), target([0.0, 1.0, 0.0])];
        let m = link_matrix(&p, &spins, 64).unwrap();
        assert_eq!(m.loops(), vec![2, 2]);
        assert_eq!(m.get(0, 1).map(i64::abs), Some(2));
        // through g every component covers the same fibre, doubling again
        let e = link_matrix_with(&p, &spins, 64, LinkRoute::Embedded).unwrap();
        assert_eq!(e.get(0, 1).map(i64::abs), Some(4));
    }

    fn target(v: [f64; 3]) -> SpinTarget {
        SpinTarget::from_direction(v).unwrap()
    }

    #[test]
    fn spin_target_validation() {
        assert!(SpinTarget::new(BlochVector::new(1.0, 1.0, 0.0)).is_err());
        assert!(SpinTarget::from_direction([0.0; 3]).is_err());
        assert!(EpsilonQuery::new(target([1.0, 0.0, 0.0]), 0.0).is_err());
        assert!(EpsilonQuery::new(target([1.0, 0.0, 0.0]), 2.5).is_err());
    }

    #[test]
    fn single_loop_at_h29_hits_the_target() {
        let p = HopfParams::new(2.9).unwrap();
        let t = target([1.0, 0.0, 0.0]);
        let loops = preimage_contours(&p, &t, 64).unwrap();
        assert_eq!(loops.len(), 1);
        let c = &loops[0];
        assert!(c.closed && c.len() >= 3);
        for v in &c.vertices {
            assert!(v.iter().all(|x| (0.0..TAU).contains(x)));
            let n = bloch_ground(&MomentumPoint::new(v[0], v[1], v[2]), &p).unwrap();
            assert!(n.distance(t.bloch()) <= CURVE_TOL);
        }
        let e = embed_r3(c, &p).unwrap();
        assert_eq!(e.len(), c.len());
        assert!(e.vertices.iter().flatten().all(|x| x.is_finite() && x.abs() < 1.0 / crate::model::DELTA_POLE));
    }

    #[test]
    fn unreachable_target_has_no_preimage() {
        let p = HopfParams::new(3.1).unwrap();
        assert!(preimage_contours(&p, &target([0.0, 0.0, -1.0]), 64).unwrap().is_empty());
        assert!(preimage_contours(&p, &target([1.0, 0.0, 0.0]), 8).is_err());
    }

    #[test]
    fn epsilon_neighbourhood_examples() {
        let f = sample_state_field(&HopfParams::new(2.0).unwrap(), MeshSpec::new(10).unwrap()).unwrap();
        let t = target([-1.0, -1.0, 0.0]);
        assert_eq!(epsilon_neighborhood(&f, &EpsilonQuery::new(t, 2.0).unwrap()).len(), 1000);
        let small = epsilon_neighborhood(&f, &EpsilonQuery::new(t, 0.3).unwrap());
        let large = epsilon_neighborhood(&f, &EpsilonQuery::new(t, 0.35).unwrap());
        assert!(!small.is_empty());
        assert!(small.iter().all(|s| large.contains(s)));
        assert!(epsilon_neighborhood(&f, &EpsilonQuery::new(target([0.3, 0.5, 0.7]), 1e-9).unwrap()).is_empty());
    }

    #[test]
    fn link_matrix_across_the_transition() {
        let spins = [target([1.0, 0.0, 0.0]), target([0.0, 1.0, 0.0]), target([0.0, 0.0, -1.0])];
        let m = link_matrix(&HopfParams::new(2.9).unwrap(), &spins, 64).unwrap();
        assert_eq!(m.loops(), vec![1, 1, 1]);
        let off = m.off_diagonal();
        assert_eq!(off.len(), 3);
        assert!(off.iter().all(|l| l.abs() == 1));
        assert!(off.iter().all(|l| l.signum() == off[0].signum()));
        let m = link_matrix(&HopfParams::new(3.1).unwrap(), &spins, 64).unwrap();
        assert_eq!(m.loops()[2], 0);
        assert_eq!(m.get(0, 1), Some(0));
        assert_eq!(m.get(0, 2), None);
    }

    #[test]
    fn diagonal_target_loop() {
        let p = HopfParams::new(2.0).unwrap();
        let loops = preimage_contours(&p, &target([-FRAC_1_SQRT_2, -FRAC_1_SQRT_2, 0.0]), 64).unwrap();
        assert_eq!(loops.len(), 1);
    }
}
