//! Points of the physical and frequency space.
//!
//! Both one- and two-dimensional points are stored as `[f64; 2]`; in
//! dimension one the second coordinate is always zero, so dot products and
//! norms need no dimension dispatch.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

use crate::error::{invalid, Result};

pub type Vec2 = [f64; 2];

/// Space dimension; only 1 and 2 are admitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dim {
    One,
    Two,
}

impl Dim {
    pub fn new(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Dim::One),
            2 => Ok(Dim::Two),
            _ => Err(invalid(format!("dimension must be 1 or 2, got {d}"))),
        }
    }

    pub fn get(self) -> usize {
        match self {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    /// Surface measure of the unit sphere in this dimension (2 in d = 1).
    pub fn sphere_area(self) -> f64 {
        match self {
            Dim::One => 2.0,
            Dim::Two => 2.0 * PI,
        }
    }

    /// Builds a point from a coordinate slice of matching length.
    pub fn point(self, coords: &[f64]) -> Result<Vec2> {
        if coords.len() != self.get() {
            return Err(invalid(format!(
                "expected {} coordinate(s), got {}",
                self.get(),
                coords.len()
            )));
        }
        Ok(match self {
            Dim::One => [coords[0], 0.0],
            Dim::Two => [coords[0], coords[1]],
        })
    }

    /// Coordinates of `p` that are meaningful in this dimension.
    pub fn coords(self, p: Vec2) -> Vec<f64> {
        p[..self.get()].to_vec()
    }
}

impl TryFrom<u8> for Dim {
    type Error = String;
    fn try_from(d: u8) -> std::result::Result<Self, String> {
        Dim::new(d as usize).map_err(|e| e.to_string())
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.get() as u8
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.get())
    }
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

#[inline]
pub fn norm_sq(a: Vec2) -> f64 {
    a[0] * a[0] + a[1] * a[1]
}

#[inline]
pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn scale(s: f64, a: Vec2) -> Vec2 {
    [s * a[0], s * a[1]]
}

#[inline]
pub fn neg(a: Vec2) -> Vec2 {
    [-a[0], -a[1]]
}
