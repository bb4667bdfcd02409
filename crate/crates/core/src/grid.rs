//! Regular tensor grids over a subspace `F` of dimension at most three.
//!
//! Nodes are stored row-major with the last axis varying fastest. All
//! quadratures use the composite trapezoidal rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, nodes: usize) -> Result<Self> {
        if nodes < 2 || !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Parameter(format!(
                "axis needs at least two nodes and min < max (got [{min}, {max}] with {nodes} nodes)"
            )));
        }
        Ok(Axis { min, max, nodes })
    }

    /// Symmetric axis `[-half_width, half_width]`.
    pub fn centered(half_width: f64, nodes: usize) -> Result<Self> {
        Axis::new(-half_width, half_width, nodes)
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        (self.max - self.min) / (self.nodes - 1) as f64
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.max
        } else {
            self.min + i as f64 * self.spacing()
        }
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        let h = self.spacing();
        if i == 0 || i + 1 == self.nodes {
            0.5 * h
        } else {
            h
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > MAX_DIM {
            return Err(Error::UnsupportedDimension(axes.len()));
        }
        Ok(Grid { axes })
    }

    /// Same symmetric axis repeated `dim` times.
    pub fn cube(dim: usize, half_width: f64, nodes: usize) -> Result<Self> {
        Grid::new(vec![Axis::centered(half_width, nodes)?; dim])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.nodes).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.axes.iter().map(Axis::spacing).collect()
    }

    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        self.axes
            .iter()
            .map(Axis::spacing)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    /// Stride of each axis in the flat layout.
    pub fn strides(&self) -> [usize; MAX_DIM] {
        let mut strides = [0usize; MAX_DIM];
        let mut s = 1;
        for a in (0..self.dim()).rev() {
            strides[a] = s;
            s *= self.axes[a].nodes;
        }
        strides
    }

    #[inline]
    pub fn multi_index(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        for a in (0..self.dim()).rev() {
            let n = self.axes[a].nodes;
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    #[inline]
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate().take(self.dim()) {
            flat = flat * self.axes[a].nodes + i;
        }
        flat
    }

    #[inline]
    pub fn coords(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            x[a] = self.axes[a].coord(idx[a]);
        }
        x
    }

    #[inline]
    pub fn weight(&self, flat: usize) -> f64 {
        let idx = self.multi_index(flat);
        (0..self.dim())
            .map(|a| self.axes[a].weight(idx[a]))
            .product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| self.weight(i) * v)
            .sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let eps = 1e-9;
        self.axes.iter().zip(x).all(|(a, &xi)| {
            let tol = eps * a.spacing();
            xi >= a.min - tol && xi <= a.max + tol
        })
    }

    /// Multilinear interpolation; `None` outside the grid box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> Option<f64> {
        let d = self.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for a in 0..d {
            let axis = &self.axes[a];
            let h = axis.spacing();
            let s = (x[a] - axis.min) / h;
            let tol = 1e-9;
            if s < -tol || s > (axis.nodes - 1) as f64 + tol {
                return None;
            }
            let s = s.clamp(0.0, (axis.nodes - 1) as f64);
            let mut i = s.floor() as usize;
            if i >= axis.nodes - 1 {
                i = axis.nodes - 2;
            }
            let mut t = s - i as f64;
            // snap round-off so on-node evaluation is exact
            if t < 1e-12 {
                t = 0.0;
            } else if t > 1.0 - 1e-12 {
                t = 1.0;
            }
            base[a] = i;
            frac[a] = t;
        }
        let strides = self.strides();
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                let wa = if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                if wa == 0.0 {
                    w = 0.0;
                    break;
                }
                w *= wa;
                flat += (base[a] + bit) * strides[a];
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        Some(acc)
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.axes.len() == other.axes.len()
            && self.axes.iter().zip(&other.axes).all(|(a, b)| {
                a.nodes == b.nodes
                    && (a.min - b.min).abs() <= 1e-12 * (1.0 + a.min.abs())
                    && (a.max - b.max).abs() <= 1e-12 * (1.0 + a.max.abs())
            })
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.axes, other.axes
            )))
        }
    }

    /// Grid with every axis carrying twice the number of intervals.
    pub fn refined(&self) -> Grid {
        Grid {
            axes: self
                .axes
                .iter()
                .map(|a| Axis {
                    min: a.min,
                    max: a.max,
                    nodes: 2 * (a.nodes - 1) + 1,
                })
                .collect(),
        }
    }
}

/// L¹ distance of two functions sampled on the same grid.
pub fn l1_distance(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| grid.weight(i) * (x - y).abs())
        .sum()
}
