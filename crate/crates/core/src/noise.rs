//! Noise covariance, the subspace `F`, and executable forms of the
//! structural assumptions on the forcing.
//!
//! The covariance `𝒮` is diagonal in the Stokes eigenbasis: each mode
//! `(k,i)` carries an amplitude `σ(k,i) = σ(-k,i) ≥ 0`, and every real
//! coordinate of that mode receives independent forcing with variance
//! `σ(k,i)²` per unit time.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{canonical, norm_sq, ModeSet, RealCoord, WaveMode, Wavevector};

#[derive(Debug, Clone)]
pub struct NoiseSpec {
    modes: Arc<ModeSet>,
    sigma: Vec<f64>,
    decay: f64,
}

impl NoiseSpec {
    /// `σ(k,i) = |k|^{-r}` on every mode.
    pub fn power_law(modes: Arc<ModeSet>, decay: f64) -> Self {
        let sigma = modes
            .modes()
            .map(|m| (norm_sq(&m.k) as f64).powf(-0.5 * decay))
            .collect();
        NoiseSpec {
            modes,
            sigma,
            decay,
        }
    }

    /// Forcing confined to the line `{n·k₀ : n ≠ 0}`, both polarizations,
    /// amplitude `|n k₀|^{-r}`.
    pub fn single_line(modes: Arc<ModeSet>, k0: Wavevector, decay: f64) -> Result<Self> {
        if k0 == [0, 0, 0] {
            return Err(Error::InvalidWavevector(k0));
        }
        let mut spec = NoiseSpec::power_law(modes.clone(), decay);
        for (i, m) in modes.modes().enumerate() {
            if !on_line(&m.k, &k0) {
                spec.sigma[i] = 0.0;
            }
        }
        Ok(spec)
    }

    pub fn zero(modes: Arc<ModeSet>) -> Self {
        let n = modes.num_modes();
        NoiseSpec {
            modes,
            sigma: vec![0.0; n],
            decay: 0.0,
        }
    }

    /// Multiplies every amplitude by `factor`.
    pub fn scaled(mut self, factor: f64) -> Result<Self> {
        check_amplitude(factor)?;
        for s in &mut self.sigma {
            *s *= factor;
        }
        Ok(self)
    }

    /// Overrides every mode with `|k|² = shell`.
    pub fn with_shell(mut self, shell: i64, amplitude: f64) -> Result<Self> {
        check_amplitude(amplitude)?;
        for (i, m) in self.modes.modes().enumerate() {
            if norm_sq(&m.k) == shell {
                self.sigma[i] = amplitude;
            }
        }
        Ok(self)
    }

    /// Overrides mode `(k,pol)` and its conjugate `(-k,pol)`.
    pub fn with_mode(mut self, mode: WaveMode, amplitude: f64) -> Result<Self> {
        check_amplitude(amplitude)?;
        let cutoff = self.modes.cutoff();
        let err = Error::SubspaceMismatch {
            k: mode.k,
            pol: mode.pol,
            cutoff,
        };
        let i = self.modes.mode_index(&mode).ok_or(err)?;
        let neg = WaveMode {
            k: [-mode.k[0], -mode.k[1], -mode.k[2]],
            pol: mode.pol,
        };
        let j = self.modes.mode_index(&neg).expect("lattice is symmetric");
        self.sigma[i] = amplitude;
        self.sigma[j] = amplitude;
        Ok(self)
    }

    pub fn mode_set(&self) -> &Arc<ModeSet> {
        &self.modes
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn sigma(&self, mode: &WaveMode) -> Option<f64> {
        self.modes.mode_index(mode).map(|i| self.sigma[i])
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }

    /// Amplitude for every real coordinate of `H_N`, in real-coordinate order.
    pub fn real_sigmas(&self) -> Vec<f64> {
        self.modes
            .real_coords()
            .iter()
            .map(|c| self.coord_sigma(c).unwrap_or(0.0))
            .collect()
    }

    pub fn coord_sigma(&self, c: &RealCoord) -> Option<f64> {
        self.sigma(&WaveMode { k: c.k, pol: c.pol })
    }

    /// Hilbert–Schmidt norm squared, `Σ σ²` over all modes.
    pub fn trace(&self) -> f64 {
        self.sigma.iter().map(|s| s * s).sum()
    }

    /// The set `𝒦` of wavevectors forced in both polarizations.
    pub fn forced_wavevectors(&self) -> Vec<Wavevector> {
        self.modes
            .wavevectors()
            .iter()
            .enumerate()
            .filter(|(w, _)| self.sigma[2 * w] > 0.0 && self.sigma[2 * w + 1] > 0.0)
            .map(|(_, k)| *k)
            .collect()
    }
}

fn check_amplitude(a: f64) -> Result<()> {
    if a >= 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "noise amplitude must be finite and nonnegative, got {a}"
        )))
    }
}

fn on_line(k: &Wavevector, k0: &Wavevector) -> bool {
    // k ∥ k0 with integer ratio
    let cross = [
        k[1] as i64 * k0[2] as i64 - k[2] as i64 * k0[1] as i64,
        k[2] as i64 * k0[0] as i64 - k[0] as i64 * k0[2] as i64,
        k[0] as i64 * k0[1] as i64 - k[1] as i64 * k0[0] as i64,
    ];
    if cross != [0, 0, 0] {
        return false;
    }
    let i = (0..3).find(|&i| k0[i] != 0).expect("k0 nonzero");
    k[i] % k0[i] == 0
}

/// Finite span of real basis coordinates with its projected covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceF {
    coords: Vec<RealCoord>,
    cov: Vec<f64>,
}

impl SubspaceF {
    pub fn new(coords: Vec<RealCoord>, noise: &NoiseSpec) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Parameter("subspace F must not be empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &coords {
            if canonical(&c.k) != c.k {
                return Err(Error::Parameter(format!(
                    "subspace coordinate {:?} is not sign-canonical",
                    c.k
                )));
            }
            if !seen.insert(*c) {
                return Err(Error::Parameter(format!(
                    "duplicate subspace coordinate {c:?}"
                )));
            }
        }
        let ms = noise.mode_set();
        let d = coords.len();
        let mut cov = vec![0.0; d * d];
        for (j, c) in coords.iter().enumerate() {
            let s = noise.coord_sigma(c).ok_or(Error::SubspaceMismatch {
                k: c.k,
                pol: c.pol,
                cutoff: ms.cutoff(),
            })?;
            cov[j * d + j] = s * s;
        }
        Ok(SubspaceF { coords, cov })
    }

    pub fn coords(&self) -> &[RealCoord] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// `π_F 𝒮𝒮* π_F` in F's coordinates.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.cov)
    }

    /// Eigenvalues of the Stokes operator restricted to `F`, `|k|²` per axis.
    pub fn stokes_diagonal(&self) -> Vec<f64> {
        self.coords.iter().map(RealCoord::k_sq).collect()
    }

    pub fn fits_in(&self, modes: &ModeSet) -> bool {
        self.coords.iter().all(|c| modes.real_index(c).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyCheck {
    pub nonsingular: bool,
    /// `λ_max / λ_min` of the projected covariance; infinite when singular.
    pub condition_number: f64,
}

pub fn check_f_nondegenerate(noise: &NoiseSpec, f: &SubspaceF) -> NondegeneracyCheck {
    let nonsingular = f
        .coords()
        .iter()
        .all(|c| noise.coord_sigma(c).is_some_and(|s| s > 0.0));
    let eig = SymmetricEigen::new(f.covariance()).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition_number = if nonsingular && min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    };
    NondegeneracyCheck {
        nonsingular,
        condition_number,
    }
}

/// Invariant factors `d₁ | d₂ | d₃` of the 3×m integer matrix whose columns
/// are the given vectors. Missing factors (rank < 3) are reported as 0.
pub fn smith_invariant_factors(vectors: &[Wavevector]) -> Result<[i64; 3]> {
    let rows = 3;
    let cols = vectors.len();
    let mut a: Vec<Vec<i64>> = (0..rows)
        .map(|r| vectors.iter().map(|v| v[r] as i64).collect())
        .collect();
    let mut out = [0i64; 3];
    for t in 0..rows.min(cols) {
        loop {
            let Some((pr, pc)) = min_nonzero(&a, t, cols) else {
                return Ok(out);
            };
            a.swap(t, pr);
            for row in a.iter_mut() {
                row.swap(t, pc);
            }
            let pivot = a[t][t];
            let mut dirty = false;
            for r in t + 1..rows {
                let q = a[r][t] / pivot;
                if q != 0 {
                    for c in t..cols {
                        a[r][c] = a[r][c]
                            .checked_sub(q.checked_mul(a[t][c]).ok_or(Error::Overflow)?)
                            .ok_or(Error::Overflow)?;
                    }
                }
                dirty |= a[r][t] != 0;
            }
            for c in t + 1..cols {
                let q = a[t][c] / pivot;
                if q != 0 {
                    for row in a.iter_mut().skip(t) {
                        row[c] = row[c]
                            .checked_sub(q.checked_mul(row[t]).ok_or(Error::Overflow)?)
                            .ok_or(Error::Overflow)?;
                    }
                }
                dirty |= a[t][c] != 0;
            }
            if dirty {
                continue;
            }
            // pivot must divide the remaining block
            let offender = (t + 1..rows).find(|&r| (t + 1..cols).any(|c| a[r][c] % pivot != 0));
            match offender {
                Some(r) => {
                    for c in t..cols {
                        a[t][c] = a[t][c].checked_add(a[r][c]).ok_or(Error::Overflow)?;
                    }
                }
                None => break,
            }
        }
        out[t] = a[t][t].abs();
    }
    Ok(out)
}

fn min_nonzero(a: &[Vec<i64>], t: usize, cols: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (r, row) in a.iter().enumerate().skip(t) {
        for (c, &v) in row.iter().enumerate().take(cols).skip(t) {
            if v != 0 && best.is_none_or(|(br, bc)| v.abs() < a[br][bc].abs()) {
                best = Some((r, c));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeReport {
    pub generates: bool,
    pub invariant_factors: [i64; 3],
    /// Three members of the set with determinant ±1, when such a triple exists.
    pub witness_basis: Option<[Wavevector; 3]>,
    pub diagnostic: String,
}

/// Decides whether the vectors generate `(ℤ³, +)`: true iff all three
/// Smith invariant factors equal 1.
pub fn generates_z3(vectors: &[Wavevector]) -> Result<LatticeReport> {
    if vectors.is_empty() {
        return Ok(LatticeReport {
            generates: false,
            invariant_factors: [0, 0, 0],
            witness_basis: None,
            diagnostic: "empty generator set spans only the zero subgroup".into(),
        });
    }
    let factors = smith_invariant_factors(vectors)?;
    let generates = factors == [1, 1, 1];
    let witness_basis = if generates {
        unimodular_triple(vectors)
    } else {
        None
    };
    let rank = factors.iter().filter(|&&f| f != 0).count();
    let diagnostic = if generates {
        "subgroup is all of Z^3".to_string()
    } else if rank < 3 {
        format!("subgroup has rank {rank} < 3 (infinite index)")
    } else {
        let index: i64 = factors.iter().product();
        format!("subgroup has finite index {index} (invariant factors {factors:?})")
    };
    Ok(LatticeReport {
        generates,
        invariant_factors: factors,
        witness_basis,
        diagnostic,
    })
}

fn det3(a: &Wavevector, b: &Wavevector, c: &Wavevector) -> i64 {
    let (a, b, c) = (
        a.map(|x| x as i64),
        b.map(|x| x as i64),
        c.map(|x| x as i64),
    );
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn unimodular_triple(v: &[Wavevector]) -> Option<[Wavevector; 3]> {
    // bounded search; large sets almost always contain one early
    let n = v.len().min(64);
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if det3(&v[i], &v[j], &v[k]).abs() == 1 {
                    return Some([v[i], v[j], v[k]]);
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypoellipticityReport {
    pub forced: Vec<Wavevector>,
    pub lattice: LatticeReport,
    pub pass: bool,
}

pub fn hypoellipticity_report(noise: &NoiseSpec) -> Result<HypoellipticityReport> {
    let forced = noise.forced_wavevectors();
    let lattice = generates_z3(&forced)?;
    Ok(HypoellipticityReport {
        pass: lattice.generates,
        forced,
        lattice,
    })
}

/// Per-shell summary of the noise amplitudes, keyed by `|k|²`.
pub fn shell_summary(noise: &NoiseSpec) -> BTreeMap<i64, (f64, f64)> {
    let mut out: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for (i, m) in noise.mode_set().modes().enumerate() {
        let s = noise.sigmas()[i];
        let e = out.entry(norm_sq(&m.k)).or_insert((f64::INFINITY, 0.0));
        e.0 = e.0.min(s);
        e.1 = e.1.max(s);
    }
    out
}
