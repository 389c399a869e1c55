//! Quotient geometry of the flat 3-torus `R³/Z³`: points, lift displacements,
//! the Euclidean quotient metric and the dyadic box grid shared by the
//! set-oriented code.

use std::fmt;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Deepest dyadic level accepted by [`BoxId`] and its helpers.
pub const MAX_BOX_DEPTH: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TorusError {
    #[error("non-finite coordinate in {0:?}")]
    NonFinite([f64; 3]),
    #[error("box depth {0} outside [1, {MAX_BOX_DEPTH}]")]
    DepthOutOfRange(u32),
    #[error("box index ({0}, {1}, {2}) outside the grid at depth {3}")]
    IndexOutOfRange(u32, u32, u32, u32),
}

impl TorusError {
    pub fn code(&self) -> &'static str {
        match self {
            TorusError::NonFinite(_) => "torus.non_finite",
            TorusError::DepthOutOfRange(_) => "torus.depth_out_of_range",
            TorusError::IndexOutOfRange(..) => "torus.index_out_of_range",
        }
    }
}

#[inline]
fn wrap_coord(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer rounds up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// A point of the torus, stored as its representative in `[0,1)³`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint([f64; 3]);

impl TorusPoint {
    pub const ORIGIN: TorusPoint = TorusPoint([0.0; 3]);

    /// Reduces an arbitrary finite triple mod 1.
    pub fn wrap(raw: [f64; 3]) -> Result<Self, TorusError> {
        if raw.iter().any(|c| !c.is_finite()) {
            return Err(TorusError::NonFinite(raw));
        }
        Ok(Self::wrap_finite(raw))
    }

    /// Reduction mod 1 for inputs known to be finite (map images, sums of
    /// small displacements). Non-finite input yields NaN coordinates.
    #[inline]
    pub fn wrap_finite(raw: [f64; 3]) -> Self {
        TorusPoint([wrap_coord(raw[0]), wrap_coord(raw[1]), wrap_coord(raw[2])])
    }

    #[inline]
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::wrap_finite([v.x, v.y, v.z])
    }

    #[inline]
    pub fn coords(&self) -> [f64; 3] {
        self.0
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0[1]
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    /// The representative in `[0,1)³` as a vector of the universal cover.
    #[inline]
    pub fn lift(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    /// `self + v`, reduced mod 1.
    #[inline]
    pub fn translate(&self, v: &LiftVector) -> TorusPoint {
        Self::from_vector(&(self.lift() + v.0))
    }

    /// Displacement `v` of smallest Euclidean length with `self + v ≡ other`.
    /// Each component lies in `(-0.5, 0.5]`; an exact half is resolved to `+0.5`.
    #[inline]
    pub fn nearest_lift(&self, other: &TorusPoint) -> LiftVector {
        let mut d = [0.0; 3];
        for i in 0..3 {
            let mut c = other.0[i] - self.0[i];
            if c > 0.5 {
                c -= 1.0;
            } else if c <= -0.5 {
                c += 1.0;
            }
            d[i] = c;
        }
        LiftVector(Vector3::new(d[0], d[1], d[2]))
    }

    #[inline]
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.nearest_lift(other).norm()
    }

    /// Uniform (Lebesgue) random point.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        TorusPoint([rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
    }
}

impl fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.12}, {:.12}, {:.12})", self.0[0], self.0[1], self.0[2])
    }
}

/// Componentwise mod-1 reduction.
pub fn wrap(raw: [f64; 3]) -> Result<TorusPoint, TorusError> {
    TorusPoint::wrap(raw)
}

pub fn torus_distance(p: &TorusPoint, q: &TorusPoint) -> f64 {
    p.distance(q)
}

pub fn nearest_lift(p: &TorusPoint, q: &TorusPoint) -> LiftVector {
    p.nearest_lift(q)
}

/// A displacement in the universal cover `R³`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftVector(pub Vector3<f64>);

impl LiftVector {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Self {
        LiftVector(Vector3::new(dx, dy, dz))
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    #[inline]
    pub fn components(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }
}

/// A cell of the dyadic grid of side `2^-depth`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoxId {
    pub depth: u32,
    pub ix: u32,
    pub iy: u32,
    pub iz: u32,
}

fn check_depth(depth: u32) -> Result<(), TorusError> {
    if (1..=MAX_BOX_DEPTH).contains(&depth) {
        Ok(())
    } else {
        Err(TorusError::DepthOutOfRange(depth))
    }
}

impl BoxId {
    pub fn new(depth: u32, ix: u32, iy: u32, iz: u32) -> Result<Self, TorusError> {
        check_depth(depth)?;
        let n = 1u32 << depth;
        if ix >= n || iy >= n || iz >= n {
            return Err(TorusError::IndexOutOfRange(ix, iy, iz, depth));
        }
        Ok(BoxId { depth, ix, iy, iz })
    }

    /// Cells per axis at this depth.
    #[inline]
    pub fn side_count(&self) -> u32 {
        1 << self.depth
    }

    #[inline]
    pub fn side(&self) -> f64 {
        1.0 / self.side_count() as f64
    }

    /// Row-major linear index `(ix·n + iy)·n + iz`.
    #[inline]
    pub fn linear_index(&self) -> u64 {
        let n = self.side_count() as u64;
        (self.ix as u64 * n + self.iy as u64) * n + self.iz as u64
    }

    pub fn from_linear_index(depth: u32, index: u64) -> Result<Self, TorusError> {
        check_depth(depth)?;
        let n = 1u64 << depth;
        if index >= n * n * n {
            return Err(TorusError::IndexOutOfRange(u32::MAX, u32::MAX, u32::MAX, depth));
        }
        Ok(BoxId {
            depth,
            ix: (index / (n * n)) as u32,
            iy: ((index / n) % n) as u32,
            iz: (index % n) as u32,
        })
    }

    /// Lower corner of the cell.
    #[inline]
    pub fn corner(&self) -> [f64; 3] {
        let h = self.side();
        [self.ix as f64 * h, self.iy as f64 * h, self.iz as f64 * h]
    }

    pub fn center(&self) -> TorusPoint {
        let h = self.side();
        let c = self.corner();
        TorusPoint([c[0] + 0.5 * h, c[1] + 0.5 * h, c[2] + 0.5 * h])
    }

    /// The eight cells of depth `depth + 1` tiling this one.
    pub fn children(&self) -> [BoxId; 8] {
        let d = self.depth + 1;
        let mut out = [*self; 8];
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = BoxId {
                depth: d,
                ix: 2 * self.ix + ((k >> 2) & 1) as u32,
                iy: 2 * self.iy + ((k >> 1) & 1) as u32,
                iz: 2 * self.iz + (k & 1) as u32,
            };
        }
        out
    }

    /// Euclidean torus distance from `p` to the closed cell.
    pub fn distance_to_point(&self, p: &TorusPoint) -> f64 {
        let h = self.side();
        let c = self.corner();
        let mut acc = 0.0;
        for i in 0..3 {
            // offset of p from the cell's lower corner, taken in (-0.5, 0.5] + h/2 window
            let mut t = p.0[i] - c[i] - 0.5 * h;
            t -= t.round();
            let gap = (t.abs() - 0.5 * h).max(0.0);
            acc += gap * gap;
        }
        acc.sqrt()
    }
}

impl fmt::Display for BoxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}[{},{},{}]", self.depth, self.ix, self.iy, self.iz)
    }
}

pub fn box_of_point(p: &TorusPoint, depth: u32) -> Result<BoxId, TorusError> {
    check_depth(depth)?;
    let n = 1u32 << depth;
    let idx = |c: f64| ((c * n as f64) as u32).min(n - 1);
    Ok(BoxId { depth, ix: idx(p.0[0]), iy: idx(p.0[1]), iz: idx(p.0[2]) })
}

pub fn center(b: &BoxId) -> TorusPoint {
    b.center()
}

/// Points sampled from a box: a regular `grid³` lattice of sub-cell centres
/// plus `random` seeded pseudorandom points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleScheme {
    pub grid: u32,
    pub random: u32,
    pub seed: u64,
}

impl SampleScheme {
    pub fn count(&self) -> usize {
        (self.grid as usize).pow(3) + self.random as usize
    }

    /// Largest distance from a point of the box to the nearest grid sample,
    /// as a fraction of the box side.
    pub fn grid_spacing_radius(&self) -> f64 {
        if self.grid == 0 {
            3f64.sqrt()
        } else {
            3f64.sqrt() / (2.0 * self.grid as f64)
        }
    }
}

pub fn sample_box(b: &BoxId, scheme: &SampleScheme) -> Vec<TorusPoint> {
    let mut out = Vec::with_capacity(scheme.count());
    sample_box_into(b, scheme, &mut out);
    out
}

pub(crate) fn sample_box_into(b: &BoxId, scheme: &SampleScheme, out: &mut Vec<TorusPoint>) {
    let h = b.side();
    let c = b.corner();
    let k = scheme.grid;
    let step = h / k.max(1) as f64;
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                out.push(TorusPoint([
                    c[0] + (i as f64 + 0.5) * step,
                    c[1] + (j as f64 + 0.5) * step,
                    c[2] + (l as f64 + 0.5) * step,
                ]));
            }
        }
    }
    if scheme.random > 0 {
        let stream = ((b.depth as u64) << 58) ^ b.linear_index();
        let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
        rng.set_stream(stream);
        for _ in 0..scheme.random {
            out.push(TorusPoint([
                c[0] + rng.gen::<f64>() * h,
                c[1] + rng.gen::<f64>() * h,
                c[2] + rng.gen::<f64>() * h,
            ]));
        }
    }
}
