//! Crystal structures: validated container plus CIF and JSON-lines I/O.

mod cif;
mod jsonl;

pub use cif::{lattice_from_parameters, parse_cif};
pub use jsonl::{parse_jsonl, read_jsonl, serialize_jsonl, write_jsonl};

use nalgebra::Matrix3;

use crate::elements::NUM_ELEMENTS;
use crate::error::{validation, Result};

/// Rows are the lattice vectors a, b, c in Å.
pub type Lattice = [[f64; 3]; 3];

/// A periodic crystal: lattice, fractional coordinates in `[0, 1)`, atomic
/// numbers and an optional scalar property label.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalStructure {
    id: String,
    lattice: Lattice,
    frac_coords: Vec<[f64; 3]>,
    atomic_numbers: Vec<u8>,
    label: Option<f64>,
}

impl CrystalStructure {
    /// Validates the invariants and wraps coordinates into `[0, 1)`.
    pub fn new(
        id: impl Into<String>,
        lattice: Lattice,
        frac_coords: Vec<[f64; 3]>,
        atomic_numbers: Vec<u8>,
        label: Option<f64>,
    ) -> Result<Self> {
        let id = id.into();
        if frac_coords.is_empty() {
            return Err(validation!("structure {id:?} has no atoms"));
        }
        if frac_coords.len() != atomic_numbers.len() {
            return Err(validation!(
                "structure {id:?}: {} coordinates but {} atomic numbers",
                frac_coords.len(),
                atomic_numbers.len()
            ));
        }
        if lattice.iter().flatten().any(|x| !x.is_finite()) {
            return Err(validation!("structure {id:?}: non-finite lattice"));
        }
        let det = determinant(&lattice);
        if det <= 0.0 || !det.is_finite() {
            return Err(validation!(
                "structure {id:?}: lattice determinant {det} is not positive"
            ));
        }
        if let Some(&z) = atomic_numbers
            .iter()
            .find(|&&z| z == 0 || z as usize > NUM_ELEMENTS)
        {
            return Err(validation!(
                "structure {id:?}: atomic number {z} outside 1..=118"
            ));
        }
        if let Some(label) = label {
            if !label.is_finite() {
                return Err(validation!("structure {id:?}: non-finite label"));
            }
        }
        let mut wrapped = Vec::with_capacity(frac_coords.len());
        for (i, f) in frac_coords.iter().enumerate() {
            if f.iter().any(|x| !x.is_finite()) {
                return Err(validation!(
                    "structure {id:?}: site {i} has non-finite coordinates"
                ));
            }
            wrapped.push(f.map(wrap_unit));
        }
        Ok(Self {
            id,
            lattice,
            frac_coords: wrapped,
            atomic_numbers,
            label,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn frac_coords(&self) -> &[[f64; 3]] {
        &self.frac_coords
    }

    pub fn atomic_numbers(&self) -> &[u8] {
        &self.atomic_numbers
    }

    pub fn label(&self) -> Option<f64> {
        self.label
    }

    pub fn num_atoms(&self) -> usize {
        self.atomic_numbers.len()
    }

    pub fn with_label(mut self, label: Option<f64>) -> Self {
        self.label = label;
        self
    }

    /// Cartesian positions, `frac · L`.
    pub fn cart_coords(&self) -> Vec<[f64; 3]> {
        self.frac_coords
            .iter()
            .map(|f| frac_to_cart(&self.lattice, f))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        determinant(&self.lattice)
    }
}

fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

pub(crate) fn to_matrix(l: &Lattice) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| l[r][c])
}

pub fn determinant(l: &Lattice) -> f64 {
    to_matrix(l).determinant()
}

pub fn frac_to_cart(l: &Lattice, f: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (axis, coef) in f.iter().enumerate() {
        for k in 0..3 {
            out[k] += coef * l[axis][k];
        }
    }
    out
}
