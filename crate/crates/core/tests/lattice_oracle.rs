//! Lattice generation decided by Smith normal form against breadth-first
//! reachability of the unit vectors.

use std::collections::VecDeque;

use nsfp_core::noise::{generates_z3, smith_invariant_factors};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BOX: i32 = 6;

fn reachable_units(gens: &[[i32; 3]]) -> bool {
    let side = (2 * BOX + 1) as usize;
    let idx = |x: [i32; 3]| {
        ((x[0] + BOX) as usize * side + (x[1] + BOX) as usize) * side + (x[2] + BOX) as usize
    };
    let mut seen = vec![false; side.pow(3)];
    let mut queue = VecDeque::from([[0, 0, 0]]);
    seen[idx([0, 0, 0])] = true;
    while let Some(x) = queue.pop_front() {
        for g in gens {
            for s in [1, -1] {
                let y = [x[0] + s * g[0], x[1] + s * g[1], x[2] + s * g[2]];
                if y.iter().all(|c| c.abs() <= BOX) && !seen[idx(y)] {
                    seen[idx(y)] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
        .iter()
        .all(|e| seen[idx(*e)])
}

fn all_small_vectors() -> Vec<[i32; 3]> {
    let mut v = Vec::new();
    for a in -2..=2 {
        for b in -2..=2 {
            for c in -2..=2 {
                v.push([a, b, c]);
            }
        }
    }
    v
}

#[test]
fn agrees_with_reachability_on_small_sets() {
    let vecs = all_small_vectors();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut positives = 0;
    for trial in 0..3000 {
        let size = 1 + trial % 3;
        let set: Vec<[i32; 3]> = (0..size)
            .map(|_| vecs[rng.random_range(0..vecs.len())])
            .collect();
        let report = generates_z3(&set).unwrap();
        assert_eq!(report.generates, reachable_units(&set), "{set:?}");
        positives += report.generates as usize;
    }
    assert!(positives > 50);
}

#[test]
fn triples_generate_exactly_when_unimodular() {
    let vecs = all_small_vectors();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20000 {
        let set: Vec<[i32; 3]> = (0..3)
            .map(|_| vecs[rng.random_range(0..vecs.len())])
            .collect();
        let [a, b, c] = [set[0], set[1], set[2]].map(|v| v.map(|x| x as i64));
        let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]);
        let factors = smith_invariant_factors(&set).unwrap();
        assert_eq!(factors.iter().product::<i64>(), det.abs(), "{set:?}");
        assert_eq!(generates_z3(&set).unwrap().generates, det.abs() == 1);
    }
}

#[test]
fn larger_sets_agree_with_reachability() {
    let vecs = all_small_vectors();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let set: Vec<[i32; 3]> = (0..5)
            .map(|_| vecs[rng.random_range(0..vecs.len())])
            .collect();
        assert_eq!(
            generates_z3(&set).unwrap().generates,
            reachable_units(&set),
            "{set:?}"
        );
    }
}
