//! Two-level state primitives: spinors, Bloch vectors and 2×2 density matrices.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Unit 3-vector of Pauli expectation values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Scales to unit length; the zero vector is returned unchanged.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            Self::new(self.x / n, self.y / n, self.z / n)
        }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn distance(self, other: Self) -> f64 {
        let d = [self.x - other.x, self.y - other.y, self.z - other.z];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    /// Orthonormal pair `(e1, e2)` with `(e1, e2, self)` right-handed.
    ///
    /// `self` is assumed to be a unit vector.
    pub fn tangent_frame(self) -> (Self, Self) {
        // Seed with the coordinate axis least aligned with self.
        let a = [self.x.abs(), self.y.abs(), self.z.abs()];
        let seed = if a[0] <= a[1] && a[0] <= a[2] {
            Self::new(1.0, 0.0, 0.0)
        } else if a[1] <= a[2] {
            Self::new(0.0, 1.0, 0.0)
        } else {
            Self::new(0.0, 0.0, 1.0)
        };
        let e1 = (seed - self.scale(seed.dot(self))).normalized();
        let e2 = self.cross(e1);
        (e1, e2)
    }
}

impl std::ops::Sub for BlochVector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Add for BlochVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Neg for BlochVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Pure two-level state `(a_up, a_down)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spinor {
    pub up: C64,
    pub down: C64,
}

impl Spinor {
    pub const UP: Spinor = Spinor { up: C64::new(1.0, 0.0), down: C64::new(0.0, 0.0) };
    pub const DOWN: Spinor = Spinor { up: C64::new(0.0, 0.0), down: C64::new(1.0, 0.0) };

    pub const fn new(up: C64, down: C64) -> Self {
        Self { up, down }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        Self::new(self.up / n, self.down / n)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Spinor) -> C64 {
        self.up.conj() * other.up + self.down.conj() * other.down
    }

    pub fn scale(&self, c: C64) -> Self {
        Self::new(self.up * c, self.down * c)
    }

    /// Pauli expectation values of the (normalized) state.
    pub fn bloch(&self) -> BlochVector {
        let n = self.norm_sqr();
        let cross = self.up.conj() * self.down;
        BlochVector::new(
            2.0 * cross.re / n,
            2.0 * cross.im / n,
            (self.up.norm_sqr() - self.down.norm_sqr()) / n,
        )
    }

    /// Pure state with the given Bloch direction, in the canonical gauge:
    /// the larger-magnitude amplitude is real and positive, ties go to `up`.
    pub fn from_bloch(b: BlochVector) -> Self {
        let b = b.normalized();
        if b.z >= 0.0 {
            let up = ((1.0 + b.z) / 2.0).sqrt();
            let down = C64::new(b.x, b.y) / (2.0 * (1.0 + b.z)).sqrt();
            Self::new(C64::new(up, 0.0), down)
        } else {
            let down = ((1.0 - b.z) / 2.0).sqrt();
            let up = C64::new(b.x, -b.y) / (2.0 * (1.0 - b.z)).sqrt();
            Self::new(up, C64::new(down, 0.0))
        }
    }

    /// Re-phases so the larger-magnitude amplitude is real positive.
    pub fn canonical_gauge(&self) -> Self {
        let pivot = if self.up.norm() >= self.down.norm() { self.up } else { self.down };
        if pivot.norm() == 0.0 {
            return *self;
        }
        self.scale(pivot.conj() / pivot.norm())
    }

    pub fn to_reals(&self) -> [f64; 4] {
        [self.up.re, self.up.im, self.down.re, self.down.im]
    }

    pub fn from_reals(r: [f64; 4]) -> Self {
        Self::new(C64::new(r[0], r[1]), C64::new(r[2], r[3]))
    }
}

/// Hermitian 2×2 matrix with unit trace, stored by its entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    pub m: [[C64; 2]; 2],
}

impl DensityMatrix {
    pub fn from_bloch(r: BlochVector) -> Self {
        let half = 0.5;
        Self {
            m: [
                [C64::new(half * (1.0 + r.z), 0.0), C64::new(half * r.x, -half * r.y)],
                [C64::new(half * r.x, half * r.y), C64::new(half * (1.0 - r.z), 0.0)],
            ],
        }
    }

    pub fn pure(psi: &Spinor) -> Self {
        let p = psi.normalized();
        Self {
            m: [
                [p.up * p.up.conj(), p.up * p.down.conj()],
                [p.down * p.up.conj(), p.down * p.down.conj()],
            ],
        }
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    /// Bloch vector `Tr(ρσ)`; for a Hermitian ρ this is real.
    pub fn bloch(&self) -> BlochVector {
        BlochVector::new(
            2.0 * self.m[1][0].re,
            2.0 * self.m[1][0].im,
            (self.m[0][0] - self.m[1][1]).re,
        )
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let r = self.bloch().norm();
        let t = self.trace().re;
        [0.5 * (t - r), 0.5 * (t + r)]
    }

    /// Largest deviation from Hermiticity, unit trace and positivity.
    pub fn physicality_defect(&self) -> f64 {
        let herm = (self.m[0][1] - self.m[1][0].conj())
            .norm()
            .max(self.m[0][0].im.abs())
            .max(self.m[1][1].im.abs());
        let tr = (self.trace() - 1.0).norm();
        let neg = (-self.eigenvalues()[0]).max(0.0);
        herm.max(tr).max(neg)
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        self.physicality_defect() <= tol
    }

    /// Eigenvector of the largest eigenvalue, canonical gauge. The maximally
    /// mixed state has no preferred direction and yields spin-up.
    pub fn dominant_eigenvector(&self) -> Spinor {
        let r = self.bloch();
        if r.norm() < 1e-15 {
            return Spinor::UP;
        }
        Spinor::from_bloch(r)
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity(&self, psi: &Spinor) -> f64 {
        let p = psi.normalized();
        let rp = [
            self.m[0][0] * p.up + self.m[0][1] * p.down,
            self.m[1][0] * p.up + self.m[1][1] * p.down,
        ];
        (p.up.conj() * rp[0] + p.down.conj() * rp[1]).re
    }

    pub fn purity(&self) -> f64 {
        let r = self.bloch().norm();
        0.5 * (1.0 + r * r)
    }

    /// Row-major `[Re ρ00, Im ρ00, Re ρ01, Im ρ01, Re ρ10, Im ρ10, Re ρ11, Im ρ11]`.
    pub fn to_reals(&self) -> [f64; 8] {
        let m = &self.m;
        [
            m[0][0].re, m[0][0].im, m[0][1].re, m[0][1].im, m[1][0].re, m[1][0].im, m[1][1].re,
            m[1][1].im,
        ]
    }

    pub fn from_reals(r: [f64; 8]) -> Self {
        Self {
            m: [
                [C64::new(r[0], r[1]), C64::new(r[2], r[3])],
                [C64::new(r[4], r[5]), C64::new(r[6], r[7])],
            ],
        }
    }
}
