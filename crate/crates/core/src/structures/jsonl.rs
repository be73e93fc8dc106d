//! JSON-lines interchange: one structure object per line.
//!
//! Key order on output is fixed: `id, lattice, frac_coords, atomic_numbers, label`
//! (`label` omitted when absent). Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{parse_err, validation, Error, Result};
use crate::format::fmt_g17;
use crate::structures::CrystalStructure;

#[derive(Deserialize)]
struct Record {
    id: String,
    lattice: Vec<f64>,
    frac_coords: Vec<Vec<f64>>,
    atomic_numbers: Vec<i64>,
    #[serde(default)]
    label: Option<f64>,
}

pub fn parse_jsonl(line: &str) -> Result<CrystalStructure> {
    let rec: Record =
        serde_json::from_str(line.trim()).map_err(|e| parse_err!("malformed record: {e}"))?;
    let ctx = format!("record {:?}", rec.id);
    if rec.lattice.len() != 9 {
        return Err(validation!(
            "{ctx}: lattice has {} values, expected 9",
            rec.lattice.len()
        ));
    }
    let mut lattice = [[0.0; 3]; 3];
    for (k, v) in rec.lattice.iter().enumerate() {
        lattice[k / 3][k % 3] = *v;
    }
    let mut frac = Vec::with_capacity(rec.frac_coords.len());
    for (i, f) in rec.frac_coords.iter().enumerate() {
        let xyz: [f64; 3] = f
            .as_slice()
            .try_into()
            .map_err(|_| validation!("{ctx}: frac_coords[{i}] has {} components", f.len()))?;
        frac.push(xyz);
    }
    let mut numbers = Vec::with_capacity(rec.atomic_numbers.len());
    for &z in &rec.atomic_numbers {
        let z =
            u8::try_from(z).map_err(|_| validation!("{ctx}: atomic number {z} outside 1..=118"))?;
        numbers.push(z);
    }
    CrystalStructure::new(rec.id, lattice, frac, numbers, rec.label)
}

pub fn serialize_jsonl(s: &CrystalStructure) -> String {
    let mut out = String::from("{\"id\":");
    out.push_str(&serde_json::to_string(s.id()).expect("strings serialize"));
    out.push_str(",\"lattice\":[");
    let flat: Vec<String> = s.lattice().iter().flatten().map(|&x| fmt_g17(x)).collect();
    out.push_str(&flat.join(","));
    out.push_str("],\"frac_coords\":[");
    for (i, f) in s.frac_coords().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "[{},{},{}]",
            fmt_g17(f[0]),
            fmt_g17(f[1]),
            fmt_g17(f[2])
        );
    }
    out.push_str("],\"atomic_numbers\":[");
    let zs: Vec<String> = s.atomic_numbers().iter().map(|z| z.to_string()).collect();
    out.push_str(&zs.join(","));
    out.push(']');
    if let Some(label) = s.label() {
        let _ = write!(out, ",\"label\":{}", fmt_g17(label));
    }
    out.push('}');
    out
}

/// Reads a JSON-lines file; blank lines are skipped and errors carry the line number.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<CrystalStructure>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_jsonl(l).map_err(|e| e.context(format!("{}:{}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_jsonl(path: impl AsRef<Path>, structures: &[CrystalStructure]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for s in structures {
        text.push_str(&serialize_jsonl(s));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
