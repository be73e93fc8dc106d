//! Minimal CIF reader: cell parameters plus an `atom_site` loop, P1 only.
//! Symmetry operations are not expanded.

use std::collections::HashMap;

use crate::elements;
use crate::error::{parse_err, validation, Result};
use crate::structures::{CrystalStructure, Lattice};

const CELL_TAGS: [&str; 6] = [
    "_cell_length_a",
    "_cell_length_b",
    "_cell_length_c",
    "_cell_angle_alpha",
    "_cell_angle_beta",
    "_cell_angle_gamma",
];

pub fn parse_cif(text: &str) -> Result<CrystalStructure> {
    let block = DataBlock::parse(text)?;

    let mut cell = [0.0; 6];
    for (slot, tag) in cell.iter_mut().zip(CELL_TAGS) {
        let raw = block
            .items
            .get(tag)
            .ok_or_else(|| parse_err!("missing required tag {tag}"))?;
        *slot = parse_number(raw).ok_or_else(|| parse_err!("{tag}: not a number: {raw:?}"))?;
    }
    let lattice = lattice_from_parameters(cell[0], cell[1], cell[2], cell[3], cell[4], cell[5])?;

    let sites = block
        .loops
        .iter()
        .find(|l| l.column("_atom_site_fract_x").is_some())
        .ok_or_else(|| parse_err!("missing required tag _atom_site_fract_x"))?;
    let symbol_col = sites
        .column("_atom_site_type_symbol")
        .or_else(|| sites.column("_atom_site_label"))
        .ok_or_else(|| parse_err!("missing required tag _atom_site_type_symbol"))?;
    let mut xyz = [0usize; 3];
    for (slot, tag) in xyz.iter_mut().zip([
        "_atom_site_fract_x",
        "_atom_site_fract_y",
        "_atom_site_fract_z",
    ]) {
        *slot = sites
            .column(tag)
            .ok_or_else(|| parse_err!("missing required tag {tag}"))?;
    }
    let occupancy_col = sites.column("_atom_site_occupancy");

    let mut frac = Vec::new();
    let mut numbers = Vec::new();
    for (r, row) in sites.rows().enumerate() {
        let symbol = &row[symbol_col];
        let z = elements::atomic_number_from_label(symbol)
            .ok_or_else(|| parse_err!("unknown element symbol {symbol:?}"))?;
        let mut f = [0.0; 3];
        for (k, &col) in xyz.iter().enumerate() {
            f[k] = parse_number(&row[col])
                .ok_or_else(|| parse_err!("atom_site row {r}: bad coordinate {:?}", row[col]))?;
        }
        if let Some(col) = occupancy_col {
            if let Some(occ) = parse_number(&row[col]) {
                if (occ - 1.0).abs() > 1e-6 {
                    return Err(validation!(
                        "atom_site row {r}: partial occupancy {occ} is not supported"
                    ));
                }
            }
        }
        frac.push(f);
        numbers.push(z);
    }
    CrystalStructure::new(block.name, lattice, frac, numbers, None)
}

/// Lattice matrix from cell lengths (Å) and angles (degrees): `a` along x,
/// `b` in the xy-plane, `c` completing a right-handed cell.
pub fn lattice_from_parameters(
    a: f64,
    b: f64,
    c: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<Lattice> {
    for (name, len) in [("a", a), ("b", b), ("c", c)] {
        if !(len > 0.0 && len.is_finite()) {
            return Err(validation!("cell length {name} = {len} must be positive"));
        }
    }
    for (name, angle) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
        if !(angle > 0.0 && angle < 180.0) {
            return Err(validation!("cell angle {name} = {angle} outside (0, 180)"));
        }
    }
    let (ca, cb, cg) = (cos_deg(alpha), cos_deg(beta), cos_deg(gamma));
    let sg = sin_from_cos(cg);
    let cy = (ca - cb * cg) / sg;
    let cz2 = 1.0 - cb * cb - cy * cy;
    if cz2 <= 0.0 {
        return Err(validation!(
            "cell angles ({alpha}, {beta}, {gamma}) do not form a valid cell"
        ));
    }
    Ok([
        [a, 0.0, 0.0],
        [b * cg, b * sg, 0.0],
        [c * cb, c * cy, c * cz2.sqrt()],
    ])
}

/// Cosine of an angle in degrees, exact for the angles common in CIF cells.
fn cos_deg(deg: f64) -> f64 {
    match deg {
        90.0 => 0.0,
        60.0 => 0.5,
        120.0 => -0.5,
        d => d.to_radians().cos(),
    }
}

/// sin θ for θ in (0°, 180°).
fn sin_from_cos(c: f64) -> f64 {
    (1.0 - c * c).sqrt()
}

/// Parses a CIF number, dropping a standard-uncertainty suffix like `4.01(2)`.
fn parse_number(raw: &str) -> Option<f64> {
    let trimmed = raw.split('(').next().unwrap_or(raw).trim();
    if trimmed == "?" || trimmed == "." {
        return None;
    }
    trimmed.parse().ok().filter(|x: &f64| x.is_finite())
}

struct Loop {
    headers: Vec<String>,
    values: Vec<String>,
}

impl Loop {
    fn column(&self, tag: &str) -> Option<usize> {
        self.headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(tag))
    }

    fn rows(&self) -> impl Iterator<Item = &[String]> {
        self.values.chunks(self.headers.len())
    }
}

struct DataBlock {
    name: String,
    items: HashMap<String, String>,
    loops: Vec<Loop>,
}

impl DataBlock {
    /// Reads the first `data_` block (or the whole text if none is declared).
    fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut block = DataBlock {
            name: String::from("cif"),
            items: HashMap::new(),
            loops: Vec::new(),
        };
        let mut seen_block = false;
        let mut i = 0;
        while i < tokens.len() {
            let tok = &tokens[i];
            let lower = tok.text.to_ascii_lowercase();
            if !tok.quoted && lower.starts_with("data_") {
                if seen_block {
                    break;
                }
                seen_block = true;
                block.name = tok.text[5..].to_string();
                i += 1;
            } else if !tok.quoted && lower == "loop_" {
                i += 1;
                let mut headers = Vec::new();
                while i < tokens.len() && !tokens[i].quoted && tokens[i].text.starts_with('_') {
                    headers.push(tokens[i].text.to_ascii_lowercase());
                    i += 1;
                }
                let mut values = Vec::new();
                while i < tokens.len() && !is_keyword(&tokens[i]) {
                    values.push(tokens[i].text.clone());
                    i += 1;
                }
                if headers.is_empty() || values.len() % headers.len() != 0 {
                    return Err(parse_err!(
                        "loop with {} tags has {} values",
                        headers.len(),
                        values.len()
                    ));
                }
                block.loops.push(Loop { headers, values });
            } else if !tok.quoted && tok.text.starts_with('_') {
                let value = tokens
                    .get(i + 1)
                    .filter(|t| !is_keyword(t))
                    .ok_or_else(|| parse_err!("tag {} has no value", tok.text))?;
                block.items.insert(lower, value.text.clone());
                i += 2;
            } else {
                // Global or save-frame content outside the supported subset.
                i += 1;
            }
        }
        Ok(block)
    }
}

struct Token {
    text: String,
    quoted: bool,
}

fn is_keyword(tok: &Token) -> bool {
    if tok.quoted {
        return false;
    }
    let lower = tok.text.to_ascii_lowercase();
    tok.text.starts_with('_') || lower == "loop_" || lower.starts_with("data_")
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((lineno, line)) = lines.next() {
        if let Some(first) = line.strip_prefix(';') {
            let mut body = String::from(first);
            let mut closed = false;
            for (_, next) in lines.by_ref() {
                if next.starts_with(';') {
                    closed = true;
                    break;
                }
                body.push('\n');
                body.push_str(next);
            }
            if !closed {
                return Err(parse_err!(
                    "unterminated text field starting on line {}",
                    lineno + 1
                ));
            }
            tokens.push(Token {
                text: body,
                quoted: true,
            });
            continue;
        }
        let mut chars = line.char_indices().peekable();
        while let Some(&(start, ch)) = chars.peek() {
            if ch.is_whitespace() {
                chars.next();
            } else if ch == '#' {
                break;
            } else if ch == '\'' || ch == '"' {
                chars.next();
                let mut value = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    // a quote only closes when followed by whitespace or end of line
                    if c == ch && chars.peek().is_none_or(|&(_, n)| n.is_whitespace()) {
                        closed = true;
                        break;
                    }
                    value.push(c);
                }
                if !closed {
                    return Err(parse_err!("unterminated quote on line {}", lineno + 1));
                }
                tokens.push(Token {
                    text: value,
                    quoted: true,
                });
            } else {
                let mut end = line.len();
                while let Some(&(pos, c)) = chars.peek() {
                    if c.is_whitespace() {
                        end = pos;
                        break;
                    }
                    chars.next();
                }
                tokens.push(Token {
                    text: line[start..end].to_string(),
                    quoted: false,
                });
            }
        }
    }
    Ok(tokens)
}
