//! Seeded generator for small binary "ionic" crystals with a composition label.
//!
//! Each structure combines one cation-like family (alkali, alkaline earth,
//! 3d transition metal) with one anion-like family (pnictogen, chalcogen,
//! halogen). Element choice inside a family is Zipf-skewed so that some
//! elements are rare. Cell volume follows the atomic radii and the label is
//! the mean Pauling electronegativity of the atoms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::structures::{frac_to_cart, lattice_from_parameters, CrystalStructure, Lattice};

#[derive(Debug, Clone, Copy)]
struct Species {
    z: u8,
    electronegativity: f64,
    radius: f64,
}

const fn sp(z: u8, electronegativity: f64, radius: f64) -> Species {
    Species {
        z,
        electronegativity,
        radius,
    }
}

const ALKALI: &[Species] = &[
    sp(11, 0.93, 1.66),
    sp(19, 0.82, 2.03),
    sp(3, 0.98, 1.28),
    sp(37, 0.82, 2.20),
    sp(55, 0.79, 2.44),
];
const ALKALINE_EARTH: &[Species] = &[
    sp(12, 1.31, 1.41),
    sp(20, 1.00, 1.76),
    sp(38, 0.95, 1.95),
    sp(56, 0.89, 2.15),
    sp(4, 1.57, 0.96),
];
const TRANSITION: &[Species] = &[
    sp(26, 1.83, 1.32),
    sp(29, 1.90, 1.32),
    sp(28, 1.91, 1.24),
    sp(22, 1.54, 1.60),
    sp(25, 1.55, 1.39),
    sp(27, 1.88, 1.26),
    sp(30, 1.65, 1.22),
    sp(24, 1.66, 1.39),
    sp(23, 1.63, 1.53),
];
const PNICTOGEN: &[Species] = &[
    sp(15, 2.19, 1.07),
    sp(7, 3.04, 0.71),
    sp(33, 2.18, 1.19),
    sp(51, 2.05, 1.39),
];
const CHALCOGEN: &[Species] = &[
    sp(8, 3.44, 0.66),
    sp(16, 2.58, 1.05),
    sp(34, 2.55, 1.20),
    sp(52, 2.10, 1.38),
];
const HALOGEN: &[Species] = &[
    sp(17, 3.16, 1.02),
    sp(9, 3.98, 0.57),
    sp(35, 2.96, 1.20),
    sp(53, 2.66, 1.39),
];

const CATIONS: &[&[Species]] = &[ALKALI, ALKALINE_EARTH, TRANSITION];
const ANIONS: &[&[Species]] = &[PNICTOGEN, CHALCOGEN, HALOGEN];

/// Atomic numbers the generator can emit.
pub fn synthetic_elements() -> Vec<u8> {
    let mut z: Vec<u8> = CATIONS
        .iter()
        .chain(ANIONS)
        .flat_map(|f| f.iter().map(|s| s.z))
        .collect();
    z.sort_unstable();
    z
}

/// Electronegativity proxy used for labels, if `z` is a generator element.
pub fn electronegativity(z: u8) -> Option<f64> {
    CATIONS
        .iter()
        .chain(ANIONS)
        .flat_map(|f| f.iter())
        .find(|s| s.z == z)
        .map(|s| s.electronegativity)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub count: usize,
    pub seed: u64,
    pub max_atoms: usize,
    /// Exponent of the within-family rank weights `1 / (rank + 1)^skew`.
    pub skew: f64,
    pub id_prefix: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            count: 64,
            seed: 0,
            max_atoms: 6,
            skew: 1.5,
            id_prefix: "syn".into(),
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, family: &'a [Species], skew: f64) -> &'a Species {
    let weights: Vec<f64> = (0..family.len())
        .map(|r| 1.0 / ((r + 1) as f64).powf(skew))
        .collect();
    let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
    for (s, w) in family.iter().zip(&weights) {
        if u < *w {
            return s;
        }
        u -= w;
    }
    family.last().expect("families are non-empty")
}

fn min_image_distance(l: &Lattice, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                let d = [
                    b[0] - a[0] + i as f64,
                    b[1] - a[1] + j as f64,
                    b[2] - a[2] + k as f64,
                ];
                let c = frac_to_cart(l, &d);
                best = best.min((c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt());
            }
        }
    }
    best
}

fn generate_one(
    rng: &mut ChaCha8Rng,
    cfg: &SyntheticConfig,
    id: String,
) -> Result<CrystalStructure> {
    let cation_family = CATIONS[rng.random_range(0..CATIONS.len())];
    let cation = pick(rng, cation_family, cfg.skew);
    let anion_family = ANIONS[rng.random_range(0..ANIONS.len())];
    let anion = pick(rng, anion_family, cfg.skew);
    let half = cfg.max_atoms / 2;
    let (nc, na) = (rng.random_range(1..=half), rng.random_range(1..=half));
    let species: Vec<&Species> = std::iter::repeat_n(cation, nc)
        .chain(std::iter::repeat_n(anion, na))
        .collect();

    let packed: f64 = species
        .iter()
        .map(|s| 4.0 / 3.0 * std::f64::consts::PI * s.radius.powi(3))
        .sum();
    let mut volume = packed / 0.45;
    let angles = [
        rng.random_range(80.0..100.0),
        rng.random_range(80.0..100.0),
        rng.random_range(80.0..100.0),
    ];
    let ratios = [
        1.0,
        rng.random_range(0.85..1.15),
        rng.random_range(0.85..1.15),
    ];
    loop {
        let unit = lattice_from_parameters(
            ratios[0], ratios[1], ratios[2], angles[0], angles[1], angles[2],
        )?;
        let scale = (volume / crate::structures::determinant(&unit)).cbrt();
        let lattice = lattice_from_parameters(
            scale * ratios[0],
            scale * ratios[1],
            scale * ratios[2],
            angles[0],
            angles[1],
            angles[2],
        )?;
        for _ in 0..200 {
            let mut frac: Vec<[f64; 3]> = Vec::with_capacity(species.len());
            let mut ok = true;
            for s in &species {
                let f = [rng.random(), rng.random(), rng.random()];
                if frac
                    .iter()
                    .zip(&species)
                    .any(|(g, t)| min_image_distance(&lattice, g, &f) < 0.8 * (s.radius + t.radius))
                {
                    ok = false;
                    break;
                }
                frac.push(f);
            }
            if ok {
                let z = species.iter().map(|s| s.z).collect();
                let label =
                    species.iter().map(|s| s.electronegativity).sum::<f64>() / species.len() as f64;
                return CrystalStructure::new(id, lattice, frac, z, Some(label));
            }
        }
        volume *= 1.2;
    }
}

/// `cfg.count` labelled structures, fully determined by `cfg`.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<CrystalStructure>> {
    if cfg.max_atoms < 2 {
        return Err(validation!(
            "max_atoms = {} must be at least 2",
            cfg.max_atoms
        ));
    }
    if !(cfg.skew >= 0.0 && cfg.skew.is_finite()) {
        return Err(validation!("skew = {} must be non-negative", cfg.skew));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.count)
        .map(|i| generate_one(&mut rng, cfg, format!("{}-{i:05}", cfg.id_prefix)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_periodic_graph;

    #[test]
    fn deterministic_and_valid() {
        let cfg = SyntheticConfig {
            count: 40,
            seed: 5,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_ne!(
            a,
            generate(&SyntheticConfig {
                seed: 6,
                ..cfg.clone()
            })
            .unwrap()
        );
        for s in &a {
            assert!((2..=6).contains(&s.num_atoms()));
            let z = s.atomic_numbers();
            let label: f64 = z
                .iter()
                .map(|&z| electronegativity(z).unwrap())
                .sum::<f64>()
                / z.len() as f64;
            assert_eq!(s.label(), Some(label));
            for i in 0..s.num_atoms() {
                for j in 0..i {
                    assert!(
                        min_image_distance(s.lattice(), &s.frac_coords()[i], &s.frac_coords()[j])
                            > 0.4
                    );
                }
            }
            assert!(build_periodic_graph(s, 5.0).unwrap().num_unordered_edges() > 0);
        }
    }

    #[test]
    fn frequencies_are_skewed() {
        let cfg = SyntheticConfig {
            count: 600,
            seed: 1,
            ..Default::default()
        };
        let mut count = [0usize; 119];
        for s in generate(&cfg).unwrap() {
            count[s.atomic_numbers()[0] as usize] += 1;
        }
        // most and least likely alkali
        assert!(count[11] > 3 * count[55], "{} vs {}", count[11], count[55]);
    }

    #[test]
    fn element_list() {
        let z = synthetic_elements();
        assert_eq!(z.len(), 31);
        assert!(z.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(electronegativity(9), Some(3.98));
        assert_eq!(electronegativity(1), None);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SyntheticConfig {
            max_atoms: 1,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SyntheticConfig {
            skew: -1.0,
            ..Default::default()
        })
        .is_err());
    }
}
