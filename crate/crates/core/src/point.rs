//! Fixed-capacity coordinate vector shared by all dimensions `m <= 3`.
//!
//! Components beyond the active dimension stay zero, so norms and dot
//! products need no dimension argument.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point(pub [f64; MAX_DIM]);

impl Point {
    pub const ZERO: Point = Point([0.0; MAX_DIM]);

    pub fn new2(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    /// Builds a point from up to three leading components.
    pub fn from_slice(coords: &[f64]) -> Self {
        let mut p = [0.0; MAX_DIM];
        for (dst, src) in p.iter_mut().zip(coords) {
            *dst = *src;
        }
        Point(p)
    }

    pub fn dot(&self, other: &Point) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (*self - *other).norm()
    }

    pub fn distance_squared(&self, other: &Point) -> f64 {
        (*self - *other).norm_squared()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Add for Point {
    type Output = Point;
    fn add(mut self, rhs: Point) -> Point {
        self += rhs;
        self
    }
}

impl AddAssign for Point {
    fn add_assign(&mut self, rhs: Point) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(mut self, rhs: Point) -> Point {
        self -= rhs;
        self
    }
}

impl SubAssign for Point {
    fn sub_assign(&mut self, rhs: Point) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a -= b;
        }
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point(self.0.map(|v| v * s))
    }
}

impl Mul<Point> for f64 {
    type Output = Point;
    fn mul(self, p: Point) -> Point {
        p * self
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        self * -1.0
    }
}

impl Index<usize> for Point {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Point {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}
