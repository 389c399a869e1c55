//! A common interface for torus diffeomorphisms, and small fixtures with
//! known dynamics used to exercise the graph and orbit tools.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};

use crate::anosov::AnosovModel;
use crate::torus::TorusPoint;

pub trait TorusMap: Sync {
    fn apply(&self, p: &TorusPoint) -> TorusPoint;

    /// Derivative in ambient coordinates.
    fn jacobian(&self, p: &TorusPoint) -> Matrix3<f64>;

    /// Frame `(P, P⁻¹)` in which tangent cocycles are accumulated.
    fn frame(&self) -> (Matrix3<f64>, Matrix3<f64>) {
        (Matrix3::identity(), Matrix3::identity())
    }
}

impl TorusMap for AnosovModel {
    fn apply(&self, p: &TorusPoint) -> TorusPoint {
        AnosovModel::apply(self, p)
    }

    fn jacobian(&self, _p: &TorusPoint) -> Matrix3<f64> {
        *self.iterate_f64()
    }

    fn frame(&self) -> (Matrix3<f64>, Matrix3<f64>) {
        (self.adapted_transform, *self.adapted_inverse())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl TorusMap for Identity {
    fn apply(&self, p: &TorusPoint) -> TorusPoint {
        *p
    }

    fn jacobian(&self, _p: &TorusPoint) -> Matrix3<f64> {
        Matrix3::identity()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Translation(pub [f64; 3]);

impl TorusMap for Translation {
    fn apply(&self, p: &TorusPoint) -> TorusPoint {
        TorusPoint::from_vector(&(p.lift() + Vector3::from(self.0)))
    }

    fn jacobian(&self, _p: &TorusPoint) -> Matrix3<f64> {
        Matrix3::identity()
    }
}

/// Time-one map of a gradient-like flow, coordinatewise
/// `x ↦ x − a·sin(2πkx)/(2πk)`. Sinks sit at multiples of `1/k` in every
/// coordinate, sources at the odd multiples of `1/(2k)`; with `wells = (1,1,1)`
/// the only attractor is the fixed point at the origin, with `(2,1,1)` there
/// are two sinks.
#[derive(Clone, Copy, Debug)]
pub struct GradientFixture {
    pub wells: [u32; 3],
    pub strength: f64,
}

impl GradientFixture {
    pub fn single_sink() -> Self {
        GradientFixture { wells: [1, 1, 1], strength: 0.9 }
    }

    pub fn two_sinks() -> Self {
        GradientFixture { wells: [2, 1, 1], strength: 0.9 }
    }

    /// The sinks of the fixture.
    pub fn sinks(&self) -> Vec<TorusPoint> {
        let mut out = Vec::new();
        for i in 0..self.wells[0] {
            for j in 0..self.wells[1] {
                for k in 0..self.wells[2] {
                    out.push(TorusPoint::wrap_finite([
                        i as f64 / self.wells[0] as f64,
                        j as f64 / self.wells[1] as f64,
                        k as f64 / self.wells[2] as f64,
                    ]));
                }
            }
        }
        out
    }
}

impl TorusMap for GradientFixture {
    fn apply(&self, p: &TorusPoint) -> TorusPoint {
        let c = p.coords();
        let mut out = [0.0; 3];
        for i in 0..3 {
            let k = self.wells[i] as f64;
            out[i] = c[i] - self.strength * (TAU * k * c[i]).sin() / (TAU * k);
        }
        TorusPoint::wrap_finite(out)
    }

    fn jacobian(&self, p: &TorusPoint) -> Matrix3<f64> {
        let c = p.coords();
        let d = |i: usize| 1.0 - self.strength * (TAU * self.wells[i] as f64 * c[i]).cos();
        Matrix3::from_diagonal(&Vector3::new(d(0), d(1), d(2)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_sinks_are_fixed() {
        for f in [GradientFixture::single_sink(), GradientFixture::two_sinks()] {
            for s in f.sinks() {
                assert!(f.apply(&s).distance(&s) < 1e-15);
                let j = f.jacobian(&s);
                assert!((0..3).all(|i| j[(i, i)] < 1.0));
            }
        }
        assert_eq!(GradientFixture::two_sinks().sinks().len(), 2);
    }

    #[test]
    fn translation_wraps() {
        let t = Translation([0.5, 0.0, 0.0]);
        let p = TorusPoint::wrap_finite([0.75, 0.1, 0.2]);
        assert_eq!(t.apply(&p).coords(), [0.25, 0.1, 0.2]);
    }
}
