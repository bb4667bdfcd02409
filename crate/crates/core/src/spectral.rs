//! Truncated wavevector lattice, polarization frames and spectral fields.
//!
//! A velocity field is `u(x) = Σ_k Σ_i a(k,i) x_k^i e^{ik·x}` over the
//! wavevectors `0 < |k| ≤ N`. The frames satisfy `x_{-k}^i = x_k^i`, so the
//! field is real exactly when `a(-k,i) = conj(a(k,i))`.
//!
//! Norm convention: coefficients are stored for every mode, conjugates
//! included, and `‖u‖_H² = Σ |a(k,i)|²` sums all of them.
//!
//! Real coordinates: for each sign-canonical wavevector `c` (first nonzero
//! component positive) and polarization `i` there are two real coordinates,
//! `a(c,i) = (x_cos - i·x_sin)/√2`. With this choice
//! `‖u‖_H² = Σ x_cos² + x_sin²`, so the real coordinate system is orthonormal.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Wavevector = [i32; 3];

#[inline]
pub fn norm_sq(k: &Wavevector) -> i64 {
    k.iter().map(|&c| (c as i64) * (c as i64)).sum()
}

#[inline]
pub fn negate(k: &Wavevector) -> Wavevector {
    [-k[0], -k[1], -k[2]]
}

/// Representative of `{k, -k}` whose first nonzero component is positive.
pub fn canonical(k: &Wavevector) -> Wavevector {
    match k.iter().find(|&&c| c != 0) {
        Some(&c) if c < 0 => negate(k),
        _ => *k,
    }
}

pub fn is_canonical(k: &Wavevector) -> bool {
    canonical(k) == *k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveMode {
    pub k: Wavevector,
    pub pol: u8,
}

impl WaveMode {
    pub fn new(k: Wavevector, pol: u8) -> Result<Self> {
        if k == [0, 0, 0] {
            return Err(Error::InvalidWavevector(k));
        }
        if pol != 1 && pol != 2 {
            return Err(Error::InvalidPolarization(pol));
        }
        Ok(WaveMode { k, pol })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Cos,
    Sin,
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Part::Cos => write!(f, "cos"),
            Part::Sin => write!(f, "sin"),
        }
    }
}

/// One real coordinate: the cosine or sine part of `(c, pol)` for a
/// sign-canonical wavevector `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RealCoord {
    pub k: Wavevector,
    pub pol: u8,
    pub part: Part,
}

impl RealCoord {
    /// Builds the coordinate, folding `k` to its canonical representative.
    /// The sine part changes sign under `k ↦ -k`; callers that care about the
    /// orientation should pass canonical wavevectors.
    pub fn new(k: Wavevector, pol: u8, part: Part) -> Result<Self> {
        let m = WaveMode::new(k, pol)?;
        Ok(RealCoord {
            k: canonical(&m.k),
            pol,
            part,
        })
    }

    pub fn k_sq(&self) -> f64 {
        norm_sq(&self.k) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationFrame {
    pub x1: [f64; 3],
    pub x2: [f64; 3],
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Orthonormal basis of `k^⊥`, identical for `k` and `-k`.
///
/// Rule: on the canonical representative `c`, take the coordinate axis `a`
/// least aligned with `c` (ties go to the highest axis index), then
/// `x1 = (a × c)/|a × c|` and `x2 = (c/|c|) × x1`.
pub fn polarization_frame(k: &Wavevector) -> Result<PolarizationFrame> {
    if *k == [0, 0, 0] {
        return Err(Error::InvalidWavevector(*k));
    }
    let c = canonical(k);
    let mut axis = 0;
    for i in 1..3 {
        if c[i].abs() <= c[axis].abs() {
            axis = i;
        }
    }
    let mut a = [0.0; 3];
    a[axis] = 1.0;
    let cf = [c[0] as f64, c[1] as f64, c[2] as f64];
    let x1 = normalize(cross(&a, &cf));
    let x2 = normalize(cross(&normalize(cf), &x1));
    Ok(PolarizationFrame { x1, x2 })
}

impl PolarizationFrame {
    #[inline]
    pub fn vector(&self, pol: u8) -> &[f64; 3] {
        if pol == 1 {
            &self.x1
        } else {
            &self.x2
        }
    }
}

/// All modes `(k, pol)` with `0 < |k| ≤ N`, ordered lexicographically on
/// `(|k|², k₁, k₂, k₃, pol)`. Mode index is `2·w + (pol - 1)` where `w` is the
/// wavevector index.
#[derive(Debug, Clone)]
pub struct ModeSet {
    cutoff: u32,
    wavevectors: Vec<Wavevector>,
    frames: Vec<PolarizationFrame>,
    conjugate: Vec<usize>,
    index: HashMap<Wavevector, usize>,
    canonical: Vec<usize>,
}

pub fn build_mode_set(cutoff: i64) -> Result<ModeSet> {
    ModeSet::new(cutoff)
}

impl ModeSet {
    pub fn new(cutoff: i64) -> Result<Self> {
        if !(1..=64).contains(&cutoff) {
            return Err(Error::InvalidCutoff(cutoff));
        }
        let n = cutoff as i32;
        let n2 = cutoff * cutoff;
        let mut wavevectors = Vec::new();
        for k1 in -n..=n {
            for k2 in -n..=n {
                for k3 in -n..=n {
                    let k = [k1, k2, k3];
                    let s = norm_sq(&k);
                    if s > 0 && s <= n2 {
                        wavevectors.push(k);
                    }
                }
            }
        }
        wavevectors.sort_by_key(|k| (norm_sq(k), k[0], k[1], k[2]));
        let index: HashMap<Wavevector, usize> = wavevectors
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, i))
            .collect();
        let conjugate = wavevectors.iter().map(|k| index[&negate(k)]).collect();
        let frames = wavevectors
            .iter()
            .map(polarization_frame)
            .collect::<Result<Vec<_>>>()?;
        let canonical = wavevectors
            .iter()
            .enumerate()
            .filter(|(_, k)| is_canonical(k))
            .map(|(i, _)| i)
            .collect();
        Ok(ModeSet {
            cutoff: cutoff as u32,
            wavevectors,
            frames,
            conjugate,
            index,
            canonical,
        })
    }

    pub fn cutoff(&self) -> u32 {
        self.cutoff
    }

    pub fn wavevectors(&self) -> &[Wavevector] {
        &self.wavevectors
    }

    pub fn num_wavevectors(&self) -> usize {
        self.wavevectors.len()
    }

    pub fn num_modes(&self) -> usize {
        2 * self.wavevectors.len()
    }

    /// Real dimension of `H_N`.
    pub fn real_dim(&self) -> usize {
        self.num_modes()
    }

    pub fn frame(&self, w: usize) -> &PolarizationFrame {
        &self.frames[w]
    }

    pub fn conjugate_of(&self, w: usize) -> usize {
        self.conjugate[w]
    }

    pub fn wavevector_index(&self, k: &Wavevector) -> Option<usize> {
        self.index.get(k).copied()
    }

    pub fn mode_index(&self, mode: &WaveMode) -> Option<usize> {
        self.wavevector_index(&mode.k)
            .map(|w| 2 * w + (mode.pol as usize - 1))
    }

    pub fn modes(&self) -> impl Iterator<Item = WaveMode> + '_ {
        self.wavevectors
            .iter()
            .flat_map(|&k| [WaveMode { k, pol: 1 }, WaveMode { k, pol: 2 }])
    }

    pub fn mode(&self, idx: usize) -> WaveMode {
        WaveMode {
            k: self.wavevectors[idx / 2],
            pol: (idx % 2) as u8 + 1,
        }
    }

    /// Indices of sign-canonical wavevectors, in mode-set order.
    pub fn canonical_indices(&self) -> &[usize] {
        &self.canonical
    }

    pub fn real_coords(&self) -> Vec<RealCoord> {
        let mut out = Vec::with_capacity(self.real_dim());
        for &w in &self.canonical {
            let k = self.wavevectors[w];
            for pol in 1..=2u8 {
                out.push(RealCoord {
                    k,
                    pol,
                    part: Part::Cos,
                });
                out.push(RealCoord {
                    k,
                    pol,
                    part: Part::Sin,
                });
            }
        }
        out
    }

    pub fn real_index(&self, c: &RealCoord) -> Option<usize> {
        let w = self.wavevector_index(&c.k)?;
        let pos = self.canonical.binary_search(&w).ok()?;
        let part = match c.part {
            Part::Cos => 0,
            Part::Sin => 1,
        };
        Some(4 * pos + 2 * (c.pol as usize - 1) + part)
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            cutoff: u32,
            modes: &'a [WaveMode],
        }
        let modes: Vec<WaveMode> = self.modes().collect();
        Ok(serde_json::to_string_pretty(&Doc {
            cutoff: self.cutoff,
            modes: &modes,
        })?)
    }
}

#[derive(Serialize, Deserialize)]
struct FieldEntry {
    k: Wavevector,
    pol: u8,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct FieldDoc {
    cutoff: u32,
    modes: Vec<FieldEntry>,
}

/// Complex mode amplitudes of a velocity field on a [`ModeSet`].
#[derive(Debug, Clone)]
pub struct SpectralField {
    modes: Arc<ModeSet>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.modes.cutoff == other.modes.cutoff && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(modes: Arc<ModeSet>) -> Self {
        let n = modes.num_modes();
        SpectralField {
            modes,
            coeffs: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Builds a field from raw coefficients. The reality constraint is
    /// enforced by symmetrizing: the result is the orthogonal projection of
    /// the input onto real fields.
    pub fn from_coeffs(modes: Arc<ModeSet>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != modes.num_modes() {
            return Err(Error::Parameter(format!(
                "expected {} coefficients, got {}",
                modes.num_modes(),
                coeffs.len()
            )));
        }
        let real = SpectralField {
            modes: modes.clone(),
            coeffs,
        }
        .to_real();
        Ok(SpectralField::from_real(modes, &real))
    }

    pub fn from_real(modes: Arc<ModeSet>, real: &[f64]) -> Self {
        assert_eq!(real.len(), modes.real_dim(), "real coordinate length");
        let mut field = SpectralField::zeros(modes);
        field.set_from_real(real);
        field
    }

    pub fn set_from_real(&mut self, real: &[f64]) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ms = &self.modes;
        for (pos, &w) in ms.canonical.iter().enumerate() {
            let wc = ms.conjugate[w];
            for p in 0..2 {
                let xc = real[4 * pos + 2 * p];
                let xs = real[4 * pos + 2 * p + 1];
                let a = Complex64::new(xc * s, -xs * s);
                self.coeffs[2 * w + p] = a;
                self.coeffs[2 * wc + p] = a.conj();
            }
        }
    }

    pub fn to_real(&self) -> Vec<f64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let ms = &self.modes;
        let mut out = vec![0.0; ms.real_dim()];
        for (pos, &w) in ms.canonical.iter().enumerate() {
            let wc = ms.conjugate[w];
            for p in 0..2 {
                let a = self.coeffs[2 * w + p];
                let b = self.coeffs[2 * wc + p];
                out[4 * pos + 2 * p] = (a.re + b.re) * s;
                out[4 * pos + 2 * p + 1] = (b.im - a.im) * s;
            }
        }
        out
    }

    pub fn mode_set(&self) -> &Arc<ModeSet> {
        &self.modes
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, mode: &WaveMode) -> Option<Complex64> {
        self.modes.mode_index(mode).map(|i| self.coeffs[i])
    }

    /// Sets `a(k,pol)` and its conjugate partner.
    pub fn set_coeff(&mut self, mode: &WaveMode, value: Complex64) -> Result<()> {
        let w = self
            .modes
            .wavevector_index(&mode.k)
            .ok_or(Error::SubspaceMismatch {
                k: mode.k,
                pol: mode.pol,
                cutoff: self.modes.cutoff,
            })?;
        let p = mode.pol as usize - 1;
        let wc = self.modes.conjugate[w];
        self.coeffs[2 * w + p] = value;
        self.coeffs[2 * wc + p] = value.conj();
        if wc == w {
            unreachable!("k = -k only for k = 0");
        }
        Ok(())
    }

    /// Vector amplitude `û(k) = Σ_i a(k,i) x_k^i` of wavevector index `w`.
    #[inline]
    pub fn velocity(&self, w: usize) -> [Complex64; 3] {
        let f = &self.modes.frames[w];
        let a1 = self.coeffs[2 * w];
        let a2 = self.coeffs[2 * w + 1];
        [
            a1 * f.x1[0] + a2 * f.x2[0],
            a1 * f.x1[1] + a2 * f.x2[1],
            a1 * f.x1[2] + a2 * f.x2[2],
        ]
    }

    pub fn check_same_modes(&self, other: &SpectralField) -> Result<()> {
        if self.modes.cutoff != other.modes.cutoff {
            return Err(Error::ModeSetMismatch {
                left: self.modes.cutoff,
                right: other.modes.cutoff,
            });
        }
        Ok(())
    }

    /// `⟨u, v⟩_H`.
    pub fn inner(&self, other: &SpectralField) -> Result<f64> {
        self.check_same_modes(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum())
    }

    pub fn h_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn v_norm_sq(&self) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, a)| norm_sq(&self.modes.wavevectors[i / 2]) as f64 * a.norm_sqr())
            .sum()
    }

    /// `(‖u‖_H, ‖u‖_V)` with `‖u‖_V² = Σ |k|² |a(k,i)|²`.
    pub fn norms(&self) -> (f64, f64) {
        (self.h_norm_sq().sqrt(), self.v_norm_sq().sqrt())
    }

    /// Stokes operator: multiplies each mode by `|k|²`.
    pub fn stokes_apply(&self) -> SpectralField {
        let mut out = self.clone();
        for (i, a) in out.coeffs.iter_mut().enumerate() {
            *a *= norm_sq(&self.modes.wavevectors[i / 2]) as f64;
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.coeffs {
            *a *= s;
        }
    }

    /// `self += s · other`.
    pub fn axpy(&mut self, s: f64, other: &SpectralField) -> Result<()> {
        self.check_same_modes(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * s;
        }
        Ok(())
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs
            .iter()
            .all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Largest `|a(-k,i) - conj(a(k,i))|`.
    pub fn reality_defect(&self) -> f64 {
        let ms = &self.modes;
        let mut worst = 0.0f64;
        for w in 0..ms.num_wavevectors() {
            let wc = ms.conjugate[w];
            for p in 0..2 {
                let d = (self.coeffs[2 * wc + p] - self.coeffs[2 * w + p].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Largest `|k · û(k)|`.
    pub fn divergence_defect(&self) -> f64 {
        let ms = &self.modes;
        let mut worst = 0.0f64;
        for (w, k) in ms.wavevectors.iter().enumerate() {
            let u = self.velocity(w);
            let d = u[0] * k[0] as f64 + u[1] * k[1] as f64 + u[2] * k[2] as f64;
            worst = worst.max(d.norm());
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        let modes = self
            .modes
            .modes()
            .zip(&self.coeffs)
            .map(|(m, a)| FieldEntry {
                k: m.k,
                pol: m.pol,
                re: a.re,
                im: a.im,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&FieldDoc {
            cutoff: self.modes.cutoff,
            modes,
        })?)
    }

    pub fn from_json(modes: Arc<ModeSet>, json: &str) -> Result<Self> {
        let doc: FieldDoc = serde_json::from_str(json)?;
        if doc.cutoff != modes.cutoff {
            return Err(Error::ModeSetMismatch {
                left: doc.cutoff,
                right: modes.cutoff,
            });
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); modes.num_modes()];
        for e in doc.modes {
            let m = WaveMode::new(e.k, e.pol)?;
            let i = modes.mode_index(&m).ok_or(Error::SubspaceMismatch {
                k: e.k,
                pol: e.pol,
                cutoff: modes.cutoff,
            })?;
            coeffs[i] = Complex64::new(e.re, e.im);
        }
        SpectralField::from_coeffs(modes, coeffs)
    }
}

/// Real coordinates of `π_F u` in `F`'s coordinate system.
pub fn project_subspace(u: &SpectralField, coords: &[RealCoord]) -> Result<Vec<f64>> {
    let ms = u.mode_set();
    let real = u.to_real();
    coords
        .iter()
        .map(|c| {
            ms.real_index(c)
                .map(|i| real[i])
                .ok_or(Error::SubspaceMismatch {
                    k: c.k,
                    pol: c.pol,
                    cutoff: ms.cutoff(),
                })
        })
        .collect()
}

/// Field whose only nonzero real coordinates are `values` on `coords`.
pub fn embed_subspace(
    modes: Arc<ModeSet>,
    coords: &[RealCoord],
    values: &[f64],
) -> Result<SpectralField> {
    let mut real = vec![0.0; modes.real_dim()];
    for (c, &v) in coords.iter().zip(values) {
        let i = modes.real_index(c).ok_or(Error::SubspaceMismatch {
            k: c.k,
            pol: c.pol,
            cutoff: modes.cutoff(),
        })?;
        real[i] = v;
    }
    Ok(SpectralField::from_real(modes, &real))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_count(n: i32) -> usize {
        let mut c = 0;
        for a in -n..=n {
            for b in -n..=n {
                for d in -n..=n {
                    let s = a * a + b * b + d * d;
                    if s > 0 && s <= n * n {
                        c += 1;
                    }
                }
            }
        }
        c
    }

    fn random_field(ms: &Arc<ModeSet>, rng: &mut ChaCha8Rng) -> SpectralField {
        let real: Vec<f64> = (0..ms.real_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        SpectralField::from_real(ms.clone(), &real)
    }

    #[test]
    fn mode_counts_match_lattice_enumeration() {
        let m1 = ModeSet::new(1).unwrap();
        assert_eq!(m1.num_wavevectors(), 6);
        assert_eq!(m1.num_modes(), 12);
        assert_eq!(m1.real_dim(), 12);
        let m2 = ModeSet::new(2).unwrap();
        assert_eq!(m2.num_wavevectors(), 32);
        assert_eq!(m2.num_modes(), 64);
        for n in 1..=4 {
            assert_eq!(
                ModeSet::new(n as i64).unwrap().num_wavevectors(),
                brute_count(n)
            );
        }
    }

    #[test]
    fn zero_cutoff_is_rejected() {
        assert!(matches!(ModeSet::new(0), Err(Error::InvalidCutoff(0))));
        assert!(matches!(ModeSet::new(-3), Err(Error::InvalidCutoff(-3))));
    }

    #[test]
    fn ordering_is_lexicographic_and_stable() {
        let a = ModeSet::new(3).unwrap();
        let b = ModeSet::new(3).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let keys: Vec<_> = a
            .modes()
            .map(|m| (norm_sq(&m.k), m.k[0], m.k[1], m.k[2], m.pol))
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn conjugate_pairing_is_an_involution() {
        let ms = ModeSet::new(3).unwrap();
        for w in 0..ms.num_wavevectors() {
            let c = ms.conjugate_of(w);
            assert_ne!(c, w);
            assert_eq!(ms.conjugate_of(c), w);
            assert_eq!(ms.wavevectors()[c], negate(&ms.wavevectors()[w]));
        }
    }

    #[test]
    fn frame_for_vertical_wavevector() {
        let f = polarization_frame(&[0, 0, 1]).unwrap();
        assert_eq!(f.x1, [1.0, 0.0, 0.0]);
        assert_eq!(f.x2, [0.0, 1.0, 0.0]);
        assert_eq!(polarization_frame(&[0, 0, -1]).unwrap(), f);
        assert!(matches!(
            polarization_frame(&[0, 0, 0]),
            Err(Error::InvalidWavevector(_))
        ));
    }

    #[test]
    fn frames_are_orthonormal_and_even() {
        let ms = ModeSet::new(4).unwrap();
        for (w, k) in ms.wavevectors().iter().enumerate() {
            let f = ms.frame(w);
            let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
            let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            assert!(dot(&f.x1, &kf).abs() < 1e-14);
            assert!(dot(&f.x2, &kf).abs() < 1e-14);
            assert!(dot(&f.x1, &f.x2).abs() < 1e-15);
            assert!((dot(&f.x1, &f.x1) - 1.0).abs() < 1e-15);
            assert!((dot(&f.x2, &f.x2) - 1.0).abs() < 1e-15);
            assert_eq!(f, ms.frame(ms.conjugate_of(w)));
        }
    }

    #[test]
    fn norms_of_simple_fields() {
        let ms = Arc::new(ModeSet::new(2).unwrap());
        let z = SpectralField::zeros(ms.clone());
        assert_eq!(z.norms(), (0.0, 0.0));

        let c = RealCoord::new([1, 0, 0], 1, Part::Cos).unwrap();
        let u = embed_subspace(ms.clone(), &[c], &[1.0]).unwrap();
        let (h, v) = u.norms();
        assert!((h - 1.0).abs() < 1e-15);
        assert!((v - 1.0).abs() < 1e-15);

        let c2 = RealCoord::new([2, 0, 0], 1, Part::Cos).unwrap();
        let u2 = embed_subspace(ms, &[c2], &[1.0]).unwrap();
        let (h2, v2) = u2.norms();
        assert!((h2 - 1.0).abs() < 1e-15);
        assert!((v2 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn stokes_eigenvalues() {
        let ms = Arc::new(ModeSet::new(2).unwrap());
        for (k, lam) in [([1, 0, 0], 1.0), ([1, 1, 1], 3.0)] {
            let c = RealCoord::new(k, 2, Part::Sin).unwrap();
            let u = embed_subspace(ms.clone(), &[c], &[0.7]).unwrap();
            let au = u.stokes_apply();
            let x = project_subspace(&au, &[c]).unwrap();
            assert!((x[0] - lam * 0.7).abs() < 1e-14);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_field(&ms, &mut rng);
        let w = random_field(&ms, &mut rng);
        let mut lhs = u.clone();
        lhs.axpy(-2.5, &w).unwrap();
        let lhs = lhs.stokes_apply();
        let mut rhs = u.stokes_apply();
        rhs.axpy(-2.5, &w.stokes_apply()).unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        assert!(diff.h_norm_sq().sqrt() < 1e-13);
    }

    #[test]
    fn projection_properties() {
        let ms = Arc::new(ModeSet::new(2).unwrap());
        let f = vec![
            RealCoord::new([1, 0, 0], 1, Part::Cos).unwrap(),
            RealCoord::new([1, 0, 0], 1, Part::Sin).unwrap(),
            RealCoord::new([0, 1, 1], 2, Part::Cos).unwrap(),
        ];
        let u = embed_subspace(ms.clone(), &f, &[0.3, -1.2, 2.0]).unwrap();
        let x = project_subspace(&u, &f).unwrap();
        for (a, b) in x.iter().zip([0.3, -1.2, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let other = RealCoord::new([1, 1, 0], 1, Part::Cos).unwrap();
        let v = embed_subspace(ms.clone(), &[other], &[1.0]).unwrap();
        assert_eq!(project_subspace(&v, &f).unwrap(), vec![0.0; 3]);

        let small = Arc::new(ModeSet::new(1).unwrap());
        let w = SpectralField::zeros(small);
        assert!(matches!(
            project_subspace(&w, &f[2..]),
            Err(Error::SubspaceMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let ms = Arc::new(ModeSet::new(1).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_field(&ms, &mut rng);
        let back = SpectralField::from_json(ms, &u.to_json().unwrap()).unwrap();
        assert!(back.sub(&u).unwrap().h_norm_sq() < 1e-28);
    }

    proptest! {
        #[test]
        fn parseval_and_invariants(seed in any::<u64>(), n in 1i64..=3) {
            let ms = Arc::new(ModeSet::new(n).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&ms, &mut rng);
            let real = u.to_real();
            let s: f64 = real.iter().map(|x| x * x).sum();
            prop_assert!((s - u.h_norm_sq()).abs() <= 1e-12 * (1.0 + s));
            prop_assert!(u.reality_defect() < 1e-15);
            prop_assert!(u.divergence_defect() < 1e-13);
            let back = SpectralField::from_real(ms.clone(), &real);
            prop_assert!(back.sub(&u).unwrap().h_norm_sq().sqrt() < 1e-12);
        }

        #[test]
        fn projection_contracts_and_is_idempotent(seed in any::<u64>()) {
            let ms = Arc::new(ModeSet::new(2).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_field(&ms, &mut rng);
            let f = vec![
                RealCoord::new([1, 0, 0], 1, Part::Cos).unwrap(),
                RealCoord::new([0, 1, 1], 2, Part::Sin).unwrap(),
            ];
            let x = project_subspace(&u, &f).unwrap();
            let px = embed_subspace(ms.clone(), &f, &x).unwrap();
            prop_assert!(px.h_norm_sq() <= u.h_norm_sq() + 1e-12);
            let x2 = project_subspace(&px, &f).unwrap();
            for (a, b) in x.iter().zip(&x2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
