//! A bounded smooth planar density whose first marginal is unbounded.
//!
//! `φ(x) = b(x₁) b(x₂) / Z²` with `b(y) = exp(-1/(1-(2y)²))` on `(-½, ½)`.
//! The density is `Σ_k φ(k₁k₂ (x - k))` over `k₁, k₂ ≠ 0`, truncated to
//! `|k|_∞ ≤ K`. Each translate has the same peak, but the translate at `k`
//! contributes mass `1/|k₁k₂|` to the marginal at `x₁ = k₁`, so the
//! marginal grows like the harmonic sum in `K`.

use std::sync::OnceLock;

use crate::besov::GridFunction;
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};

/// Unnormalized one-dimensional bump supported on `(-½, ½)`.
pub fn bump(y: f64) -> f64 {
    let r = 1.0 - 4.0 * y * y;
    if r <= 0.0 {
        0.0
    } else {
        (-1.0 / r).exp()
    }
}

/// Composite Simpson rule with `n` (even) subintervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `∫ b`. The bump is flat to all orders at `±½`, so Simpson converges
/// spectrally.
pub fn bump_mass() -> f64 {
    static Z: OnceLock<f64> = OnceLock::new();
    *Z.get_or_init(|| simpson(bump, -0.5, 0.5, 20_000))
}

/// Normalized product bump `φ`.
pub fn phi(x1: f64, x2: f64) -> f64 {
    let z = bump_mass();
    bump(x1) * bump(x2) / (z * z)
}

/// Truncated lattice sum at a point. Only the nearest lattice point can
/// contribute, since every translate lives in a cell of half-width ≤ ½.
pub fn joint_at(k_window: u32, x1: f64, x2: f64) -> f64 {
    let k1 = x1.round();
    let k2 = x2.round();
    let kw = k_window as f64;
    if k1 == 0.0 || k2 == 0.0 || k1.abs() > kw || k2.abs() > kw {
        return 0.0;
    }
    let s = k1 * k2;
    phi(s * (x1 - k1), s * (x2 - k2))
}

/// First marginal at `x1` by Simpson quadrature in `x₂` over each support
/// interval of the translates in the column `k₁ = round(x1)`.
pub fn marginal_at(k_window: u32, x1: f64) -> f64 {
    let k1 = x1.round();
    let kw = k_window as i64;
    if k1 == 0.0 || k1.abs() > kw as f64 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k2 in (-kw..=kw).filter(|&k| k != 0) {
        let half = 0.5 / (k1 * k2 as f64).abs();
        let c = k2 as f64;
        acc += simpson(|x2| joint_at(k_window, x1, x2), c - half, c + half, 400);
    }
    acc
}

/// Square grid on `[-(K+1), K+1]²` with `per_unit` cells per unit length, so
/// every lattice point is a node.
pub fn counterexample_grid(k_window: u32, per_unit: usize) -> Result<Grid> {
    if per_unit == 0 {
        return Err(Error::Parameter("per_unit must be positive".into()));
    }
    let half = k_window as f64 + 1.0;
    let nodes = 2 * (k_window as usize + 1) * per_unit + 1;
    Grid::cube(2, half, nodes)
}

/// Joint density on a planar grid and its first marginal on the grid's first
/// axis.
pub fn counterexample_density(k_window: u32, grid: &Grid) -> Result<(GridFunction, GridFunction)> {
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    let joint = GridFunction::from_fn(grid.clone(), |x| joint_at(k_window, x[0], x[1]));
    let axis: Axis = grid.axes()[0].clone();
    let line = Grid::new(vec![axis])?;
    let marginal = GridFunction::from_fn(line, |x| marginal_at(k_window, x[0]));
    Ok((joint, marginal))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_is_a_normalized_density() {
        let mass = simpson(|x| simpson(|y| phi(x, y), -0.5, 0.5, 400), -0.5, 0.5, 400);
        assert!((mass - 1.0).abs() < 1e-10, "{mass}");
        assert_eq!(phi(0.5, 0.0), 0.0);
        assert_eq!(phi(0.0, -0.7), 0.0);
    }

    #[test]
    fn empty_window_is_zero() {
        let g = counterexample_grid(0, 8).unwrap();
        let (j, m) = counterexample_density(0, &g).unwrap();
        assert!(j.values.iter().all(|&v| v == 0.0));
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn translate_is_compressed_copy() {
        // at k = (2, -3) the bump is squeezed by 6 about the lattice point
        assert!((joint_at(3, 2.0, -3.0) - phi(0.0, 0.0)).abs() < 1e-15);
        assert!((joint_at(3, 2.05, -3.0) / phi(-0.3, 0.0) - 1.0).abs() < 1e-12);
        assert_eq!(joint_at(3, 2.0 + 1.0 / 12.0, -3.0), 0.0);
        assert_eq!(joint_at(1, 2.0, 1.0), 0.0);
        assert_eq!(joint_at(3, 0.0, 1.0), 0.0);
    }

    #[test]
    fn marginal_column_mass() {
        // ∫ f₁ over the cell around k₁ = 1 is Σ_{k₂} 1/k₂²
        let k = 2;
        let mass = simpson(|x| marginal_at(k, x), 0.5, 1.5, 4000);
        let expect = 2.0 * (1.0 + 0.25);
        assert!((mass - expect).abs() < 1e-8, "{mass} vs {expect}");
    }

    #[test]
    fn rejects_non_planar_grid() {
        let g = Grid::cube(1, 2.0, 11).unwrap();
        assert!(matches!(
            counterexample_density(2, &g),
            Err(Error::UnsupportedDimension(1))
        ));
    }
}
