//! Physical-space evaluation of `(u·∇)v` on a 16³ grid.
#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use nsfp_core::spectral::{ModeSet, SpectralField};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const GRID: usize = 16;

pub fn random_field(ms: &Arc<ModeSet>, rng: &mut ChaCha8Rng) -> SpectralField {
    let real: Vec<f64> = (0..ms.real_dim())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    SpectralField::from_real(ms.clone(), &real)
}

/// `e^{i k·x}` for every wavevector and every grid point.
pub fn phases(ms: &ModeSet) -> Vec<Vec<Complex64>> {
    let step = 2.0 * std::f64::consts::PI / GRID as f64;
    ms.wavevectors()
        .iter()
        .map(|k| {
            let mut out = Vec::with_capacity(GRID.pow(3));
            for a in 0..GRID {
                for b in 0..GRID {
                    for c in 0..GRID {
                        let arg = step
                            * (k[0] as f64 * a as f64
                                + k[1] as f64 * b as f64
                                + k[2] as f64 * c as f64);
                        out.push(Complex64::from_polar(1.0, arg));
                    }
                }
            }
            out
        })
        .collect()
}

/// `(u·∇)v` pointwise, transformed back and read off on the polarization frame.
pub fn physical_space_bilinear(
    u: &SpectralField,
    v: &SpectralField,
    ph: &[Vec<Complex64>],
) -> Vec<Complex64> {
    let ms = u.mode_set();
    let npts = GRID.pow(3);
    let mut uphys = vec![[0.0f64; 3]; npts];
    let mut grad = vec![[[0.0f64; 3]; 3]; npts];
    let i = Complex64::new(0.0, 1.0);
    for (w, k) in ms.wavevectors().iter().enumerate() {
        let uh = u.velocity(w);
        let vh = v.velocity(w);
        for p in 0..npts {
            let e = ph[w][p];
            for c in 0..3 {
                uphys[p][c] += (uh[c] * e).re;
                for l in 0..3 {
                    grad[p][c][l] += (i * k[l] as f64 * vh[c] * e).re;
                }
            }
        }
    }
    let prod: Vec<[f64; 3]> = (0..npts)
        .map(|p| {
            let mut r = [0.0; 3];
            for c in 0..3 {
                for l in 0..3 {
                    r[c] += uphys[p][l] * grad[p][c][l];
                }
            }
            r
        })
        .collect();
    let mut out = Vec::with_capacity(ms.num_modes());
    for w in 0..ms.num_wavevectors() {
        let mut hat = [Complex64::new(0.0, 0.0); 3];
        for p in 0..npts {
            let e = ph[w][p].conj();
            for c in 0..3 {
                hat[c] += prod[p][c] * e;
            }
        }
        for h in &mut hat {
            *h /= npts as f64;
        }
        let f = ms.frame(w);
        for x in [&f.x1, &f.x2] {
            out.push(hat[0] * x[0] + hat[1] * x[1] + hat[2] * x[2]);
        }
    }
    out
}
