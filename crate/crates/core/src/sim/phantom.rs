//! Modified Shepp–Logan head phantom and the three-region map derived
//! from it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `(intensity, semi-axis a, semi-axis b, centre x, centre y, angle°)` on
/// `[-1, 1]²`, the modified Shepp–Logan table with amplified contrast.
pub const ELLIPSES: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Intensity below which a point is background (`S0`).
pub const GREY_THRESHOLD: f64 = 0.1;
/// Intensity from which a point is the bright skull ring (`S2`).
pub const WHITE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    S0,
    S1,
    S2,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::S0, Region::S1, Region::S2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.index())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "S0" | "s0" | "0" => Ok(Region::S0),
            "S1" | "s1" | "1" => Ok(Region::S1),
            "S2" | "s2" | "2" => Ok(Region::S2),
            other => Err(Error::invalid(format!("unknown region `{other}`"))),
        }
    }
}

/// Phantom intensity at `(x, y) ∈ [-1, 1]²`.
pub fn intensity(x: f64, y: f64) -> f64 {
    ELLIPSES
        .iter()
        .filter(|e| {
            let (a, b, x0, y0) = (e[1], e[2], e[3], e[4]);
            let th = e[5].to_radians();
            let (dx, dy) = (x - x0, y - y0);
            let u = dx * th.cos() + dy * th.sin();
            let v = -dx * th.sin() + dy * th.cos();
            (u / a).powi(2) + (v / b).powi(2) <= 1.0
        })
        .map(|e| e[0])
        .sum()
}

pub fn classify(value: f64) -> Region {
    // small slack: overlapping ellipses sum to values like 0.2 - 1e-17
    if value >= WHITE_THRESHOLD - 1e-9 {
        Region::S2
    } else if value >= GREY_THRESHOLD - 1e-9 {
        Region::S1
    } else {
        Region::S0
    }
}

/// Region labels on a `q × q` lattice over `[0, 1]²`. Point `i = row·q + col`
/// sits at `z = (col, row) / (q - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap {
    pub q: usize,
    pub labels: Vec<Region>,
}

impl RegionMap {
    pub fn z(&self, i: usize) -> [f64; 2] {
        lattice_point(self.q, i)
    }

    pub fn count(&self, r: Region) -> usize {
        self.labels.iter().filter(|&&l| l == r).count()
    }

    pub fn label_at(&self, row: usize, col: usize) -> Region {
        self.labels[row * self.q + col]
    }
}

pub fn lattice_point(q: usize, i: usize) -> [f64; 2] {
    let s = (q - 1) as f64;
    [(i % q) as f64 / s, (i / q) as f64 / s]
}

/// Render the phantom on a `q × q` lattice and threshold it into regions.
pub fn gen_phantom(q: usize) -> Result<RegionMap> {
    if q < 16 {
        return Err(Error::invalid(format!("phantom needs q >= 16, got {q}")));
    }
    let labels = (0..q * q)
        .map(|i| {
            let z = lattice_point(q, i);
            classify(intensity(2.0 * z[0] - 1.0, 2.0 * z[1] - 1.0))
        })
        .collect();
    Ok(RegionMap { q, labels })
}
