//! The projected bilinear operator `B^N(u,v) = π_N Π_L(u·∇v)`.
//!
//! Convention: `(∇v)^(n) = i n v̂(n)`, hence
//! `(u·∇v)^(k) = i Σ_{m+n=k} (û(m)·n) v̂(n)`. The Leray projector at `k` is
//! applied implicitly by reading off the components along the frame
//! `x_k^1, x_k^2`, which span `k^⊥`. The sum runs over lattice triples only,
//! so there is no aliasing.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::Result;
use crate::noise::SubspaceF;
use crate::spectral::{embed_subspace, project_subspace, ModeSet, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triad {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

/// Precomputed interaction table for a mode set.
#[derive(Debug, Clone)]
pub struct BilinearWorkspace {
    modes: Arc<ModeSet>,
    triads: Vec<Triad>,
    // start offset of each output wavevector's triads
    offsets: Vec<usize>,
    n_vectors: Vec<[f64; 3]>,
}

impl BilinearWorkspace {
    pub fn new(modes: Arc<ModeSet>) -> Self {
        let wvs = modes.wavevectors();
        let mut triads = Vec::new();
        let mut offsets = Vec::with_capacity(wvs.len() + 1);
        for (ki, k) in wvs.iter().enumerate() {
            offsets.push(triads.len());
            for (mi, m) in wvs.iter().enumerate() {
                let n = [k[0] - m[0], k[1] - m[1], k[2] - m[2]];
                if let Some(ni) = modes.wavevector_index(&n) {
                    triads.push(Triad {
                        m: mi,
                        n: ni,
                        k: ki,
                    });
                }
            }
        }
        offsets.push(triads.len());
        let n_vectors = wvs
            .iter()
            .map(|n| [n[0] as f64, n[1] as f64, n[2] as f64])
            .collect();
        BilinearWorkspace {
            modes,
            triads,
            offsets,
            n_vectors,
        }
    }

    pub fn mode_set(&self) -> &Arc<ModeSet> {
        &self.modes
    }

    pub fn triads(&self) -> &[Triad] {
        &self.triads
    }

    /// True when the lattice admits no triads (e.g. `N = 1`), in which case
    /// `B^N` vanishes identically.
    pub fn is_trivial(&self) -> bool {
        self.triads.is_empty()
    }

    pub fn bilinear(&self, u: &SpectralField, v: &SpectralField) -> Result<SpectralField> {
        u.check_same_modes(v)?;
        let probe = SpectralField::zeros(self.modes.clone());
        u.check_same_modes(&probe)?;
        let mut out = probe;
        if self.is_trivial() {
            return Ok(out);
        }
        let nw = self.modes.num_wavevectors();
        let uv: Vec<[Complex64; 3]> = (0..nw).map(|w| u.velocity(w)).collect();
        let vv: Vec<[Complex64; 3]> = (0..nw).map(|w| v.velocity(w)).collect();
        self.accumulate(&uv, &vv, out.coeffs_mut());
        Ok(out)
    }

    /// `B^N(u,u)` written into `out`, reusing velocity buffers.
    pub(crate) fn quadratic_into(
        &self,
        u: &SpectralField,
        vel: &mut Vec<[Complex64; 3]>,
        out: &mut [Complex64],
    ) {
        out.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        if self.is_trivial() {
            return;
        }
        let nw = self.modes.num_wavevectors();
        vel.clear();
        vel.extend((0..nw).map(|w| u.velocity(w)));
        self.accumulate(vel, vel, out);
    }

    fn accumulate(&self, uv: &[[Complex64; 3]], vv: &[[Complex64; 3]], out: &mut [Complex64]) {
        let i = Complex64::new(0.0, 1.0);
        for k in 0..self.modes.num_wavevectors() {
            let mut acc = [Complex64::new(0.0, 0.0); 3];
            for t in &self.triads[self.offsets[k]..self.offsets[k + 1]] {
                let um = &uv[t.m];
                let nv = &self.n_vectors[t.n];
                let dot = um[0] * nv[0] + um[1] * nv[1] + um[2] * nv[2];
                let vn = &vv[t.n];
                acc[0] += dot * vn[0];
                acc[1] += dot * vn[1];
                acc[2] += dot * vn[2];
            }
            let frame = self.modes.frame(k);
            let a1 = acc[0] * frame.x1[0] + acc[1] * frame.x1[1] + acc[2] * frame.x1[2];
            let a2 = acc[0] * frame.x2[0] + acc[1] * frame.x2[1] + acc[2] * frame.x2[2];
            out[2 * k] = i * a1;
            out[2 * k + 1] = i * a2;
        }
    }
}

/// The four pieces of `π_F B^N(u,u)` split along `x' = π_F u`,
/// `x'' = u - π_F u`: `B(x',x')`, `B(x',x'')`, `B(x'',x')`, `B(x'',x'')`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTerms {
    pub resolved: Vec<f64>,
    pub resolved_unresolved: Vec<f64>,
    pub unresolved_resolved: Vec<f64>,
    pub unresolved: Vec<f64>,
}

impl DriftTerms {
    pub fn sum(&self) -> Vec<f64> {
        (0..self.resolved.len())
            .map(|j| {
                self.resolved[j]
                    + self.resolved_unresolved[j]
                    + self.unresolved_resolved[j]
                    + self.unresolved[j]
            })
            .collect()
    }
}

pub fn decompose_drift_terms(
    u: &SpectralField,
    f: &SubspaceF,
    ws: &BilinearWorkspace,
) -> Result<DriftTerms> {
    let coords = f.coords();
    let xp = project_subspace(u, coords)?;
    let resolved = embed_subspace(u.mode_set().clone(), coords, &xp)?;
    let unresolved = u.sub(&resolved)?;
    let piece = |a: &SpectralField, b: &SpectralField| -> Result<Vec<f64>> {
        project_subspace(&ws.bilinear(a, b)?, coords)
    };
    Ok(DriftTerms {
        resolved: piece(&resolved, &resolved)?,
        resolved_unresolved: piece(&resolved, &unresolved)?,
        unresolved_resolved: piece(&unresolved, &resolved)?,
        unresolved: piece(&unresolved, &unresolved)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::noise::NoiseSpec;
    use crate::spectral::{Part, RealCoord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(ms: &Arc<ModeSet>, rng: &mut ChaCha8Rng) -> SpectralField {
        let real: Vec<f64> = (0..ms.real_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        SpectralField::from_real(ms.clone(), &real)
    }

    #[test]
    fn zero_input_gives_zero() {
        let ms = Arc::new(ModeSet::new(2).unwrap());
        let ws = BilinearWorkspace::new(ms.clone());
        let z = SpectralField::zeros(ms);
        assert_eq!(ws.bilinear(&z, &z).unwrap().h_norm_sq(), 0.0);
    }

    #[test]
    fn cutoff_one_has_no_triads() {
        let ws = BilinearWorkspace::new(Arc::new(ModeSet::new(1).unwrap()));
        assert!(ws.is_trivial());
    }

    #[test]
    fn single_pair_self_interaction_vanishes() {
        let ms = Arc::new(ModeSet::new(2).unwrap());
        let ws = BilinearWorkspace::new(ms.clone());
        let f = [
            RealCoord::new([1, 0, 0], 1, Part::Cos).unwrap(),
            RealCoord::new([1, 0, 0], 2, Part::Sin).unwrap(),
        ];
        let u = embed_subspace(ms, &f, &[0.8, -1.1]).unwrap();
        assert!(ws.bilinear(&u, &u).unwrap().h_norm_sq() < 1e-30);
    }

    #[test]
    fn output_is_real_and_solenoidal() {
        let ms = Arc::new(ModeSet::new(3).unwrap());
        let ws = BilinearWorkspace::new(ms.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_field(&ms, &mut rng);
        let v = random_field(&ms, &mut rng);
        let b = ws.bilinear(&u, &v).unwrap();
        let scale = b.h_norm_sq().sqrt();
        assert!(b.reality_defect() <= 1e-13 * scale);
        assert!(b.divergence_defect() <= 1e-12 * scale);
    }

    #[test]
    fn bilinearity() {
        let ms = Arc::new(ModeSet::new(2).unwrap());
        let ws = BilinearWorkspace::new(ms.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_field(&ms, &mut rng);
        let w = random_field(&ms, &mut rng);
        let v = random_field(&ms, &mut rng);
        let mut comb = u.clone();
        comb.scale(1.5);
        comb.axpy(-0.25, &w).unwrap();
        let lhs = ws.bilinear(&comb, &v).unwrap();
        let mut rhs = ws.bilinear(&u, &v).unwrap();
        rhs.scale(1.5);
        rhs.axpy(-0.25, &ws.bilinear(&w, &v).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().h_norm_sq().sqrt() < 1e-12 * lhs.h_norm_sq().sqrt());
    }

    #[test]
    fn mismatched_mode_sets_error() {
        let a = Arc::new(ModeSet::new(1).unwrap());
        let b = Arc::new(ModeSet::new(2).unwrap());
        let ws = BilinearWorkspace::new(b.clone());
        let u = SpectralField::zeros(a);
        let v = SpectralField::zeros(b);
        assert!(matches!(
            ws.bilinear(&u, &v),
            Err(Error::ModeSetMismatch { .. })
        ));
    }

    fn subspace(ms: &Arc<ModeSet>) -> SubspaceF {
        let noise = NoiseSpec::power_law(ms.clone(), 2.0);
        SubspaceF::new(
            vec![
                RealCoord::new([1, 0, 0], 1, Part::Cos).unwrap(),
                RealCoord::new([1, 0, 0], 1, Part::Sin).unwrap(),
            ],
            &noise,
        )
        .unwrap()
    }

    #[test]
    fn decomposition_sums_to_projected_nonlinearity() {
        let ms = Arc::new(ModeSet::new(2).unwrap());
        let ws = BilinearWorkspace::new(ms.clone());
        let f = subspace(&ms);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let u = random_field(&ms, &mut rng);
            let terms = decompose_drift_terms(&u, &f, &ws).unwrap();
            let direct = project_subspace(&ws.bilinear(&u, &u).unwrap(), f.coords()).unwrap();
            for (a, b) in terms.sum().iter().zip(&direct) {
                assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn decomposition_edge_cases() {
        let ms = Arc::new(ModeSet::new(2).unwrap());
        let ws = BilinearWorkspace::new(ms.clone());
        let f = subspace(&ms);
        let u = embed_subspace(ms.clone(), f.coords(), &[0.4, 0.9]).unwrap();
        let t = decompose_drift_terms(&u, &f, &ws).unwrap();
        assert!(t.resolved_unresolved.iter().all(|&x| x == 0.0));
        assert!(t.unresolved_resolved.iter().all(|&x| x == 0.0));
        assert!(t.unresolved.iter().all(|&x| x == 0.0));

        let other = [
            RealCoord::new([0, 1, 0], 1, Part::Cos).unwrap(),
            RealCoord::new([1, 1, 0], 2, Part::Sin).unwrap(),
            RealCoord::new([1, -1, 0], 1, Part::Cos).unwrap(),
        ];
        let v = embed_subspace(ms, &other, &[1.0, -0.5, 0.7]).unwrap();
        let t = decompose_drift_terms(&v, &f, &ws).unwrap();
        assert!(t.resolved.iter().all(|&x| x == 0.0));
        assert!(t.resolved_unresolved.iter().all(|&x| x == 0.0));
        assert!(t.unresolved_resolved.iter().all(|&x| x == 0.0));
    }
}
