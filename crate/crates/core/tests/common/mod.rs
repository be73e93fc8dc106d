#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unate::graph::PeriodicGraph;
use unate::structures::{lattice_from_parameters, CrystalStructure, Lattice};

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Every ordered image pair within `cutoff`, found by scanning a box of
/// offsets sized from the cell heights with two cells of padding.
pub fn brute_force_edges(s: &CrystalStructure, cutoff: f64) -> Vec<(usize, usize, [i32; 3], f64)> {
    let l: &Lattice = s.lattice();
    let volume = dot(l[0], cross(l[1], l[2])).abs();
    let faces = [cross(l[1], l[2]), cross(l[2], l[0]), cross(l[0], l[1])];
    let m: Vec<i32> = faces
        .iter()
        .map(|f| (cutoff / (volume / dot(*f, *f).sqrt())).ceil() as i32 + 2)
        .collect();
    let cart: Vec<[f64; 3]> = s
        .frac_coords()
        .iter()
        .map(|f| {
            let mut c = [0.0; 3];
            for (k, fk) in f.iter().enumerate() {
                for x in 0..3 {
                    c[x] += fk * l[k][x];
                }
            }
            c
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..cart.len() {
        for j in 0..cart.len() {
            for a in -m[0]..=m[0] {
                for b in -m[1]..=m[1] {
                    for c in -m[2]..=m[2] {
                        let mut v = [0.0; 3];
                        for x in 0..3 {
                            v[x] = cart[j][x] - cart[i][x]
                                + a as f64 * l[0][x]
                                + b as f64 * l[1][x]
                                + c as f64 * l[2][x];
                        }
                        let d = dot(v, v).sqrt();
                        if d > 0.0 && d <= cutoff {
                            out.push((i, j, [a, b, c], d));
                        }
                    }
                }
            }
        }
    }
    out.sort_by_key(|e| (e.0, e.1, e.2));
    out
}

/// Compares edge keys exactly and distances to 1e-12.
pub fn matches_oracle(
    g: &PeriodicGraph,
    oracle: &[(usize, usize, [i32; 3], f64)],
) -> Result<(), String> {
    let mut got: Vec<_> = g
        .edges()
        .iter()
        .map(|e| (e.src, e.dst, e.offset, e.distance))
        .collect();
    got.sort_by_key(|e| (e.0, e.1, e.2));
    if got.len() != oracle.len() {
        return Err(format!("{} edges, oracle has {}", got.len(), oracle.len()));
    }
    for (a, b) in got.iter().zip(oracle) {
        if (a.0, a.1, a.2) != (b.0, b.1, b.2) || (a.3 - b.3).abs() > 1e-12 {
            return Err(format!("edge {a:?} vs oracle {b:?}"));
        }
    }
    Ok(())
}

fn valid_angles(a: f64, b: f64, c: f64) -> bool {
    let (ca, cb, cc) = (
        a.to_radians().cos(),
        b.to_radians().cos(),
        c.to_radians().cos(),
    );
    1.0 - ca * ca - cb * cb - cc * cc + 2.0 * ca * cb * cc > 0.05
}

/// Random cell with up to `max_atoms` atoms; when `skewed`, one angle lies at
/// least 60° away from orthogonal.
pub fn random_cell(
    rng: &mut ChaCha8Rng,
    max_atoms: usize,
    skewed: bool,
    id: &str,
) -> CrystalStructure {
    loop {
        let mut angles = [
            rng.random_range(60.0..120.0),
            rng.random_range(60.0..120.0),
            rng.random_range(60.0..120.0),
        ];
        if skewed {
            let k = rng.random_range(0..3);
            angles[k] = if rng.random::<bool>() {
                rng.random_range(22.0..30.0)
            } else {
                rng.random_range(150.0..158.0)
            };
        }
        if !valid_angles(angles[0], angles[1], angles[2]) {
            continue;
        }
        let lens = [
            rng.random_range(2.5..6.0),
            rng.random_range(2.5..6.0),
            rng.random_range(2.5..6.0),
        ];
        let lattice =
            lattice_from_parameters(lens[0], lens[1], lens[2], angles[0], angles[1], angles[2])
                .unwrap();
        let n = rng.random_range(1..=max_atoms);
        let frac = (0..n)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let z = (0..n).map(|_| rng.random_range(1..=118)).collect();
        return CrystalStructure::new(id, lattice, frac, z, None).unwrap();
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
