//! Element symbols and coarse chemical categories for Z = 1..=118.

use serde::{Deserialize, Serialize};

/// Number of element classes the decoders and embedding tables cover.
pub const NUM_ELEMENTS: usize = 118;

const SYMBOLS: [&str; NUM_ELEMENTS] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    AlkaliMetal,
    AlkalineEarthMetal,
    TransitionMetal,
    PostTransitionMetal,
    Metalloid,
    ReactiveNonmetal,
    NobleGas,
    Lanthanide,
    Actinide,
    Unknown,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::AlkaliMetal => "alkali_metal",
            Category::AlkalineEarthMetal => "alkaline_earth_metal",
            Category::TransitionMetal => "transition_metal",
            Category::PostTransitionMetal => "post_transition_metal",
            Category::Metalloid => "metalloid",
            Category::ReactiveNonmetal => "reactive_nonmetal",
            Category::NobleGas => "noble_gas",
            Category::Lanthanide => "lanthanide",
            Category::Actinide => "actinide",
            Category::Unknown => "unknown",
        }
    }
}

pub fn symbol(z: u8) -> Option<&'static str> {
    (1..=NUM_ELEMENTS as u8)
        .contains(&z)
        .then(|| SYMBOLS[z as usize - 1])
}

/// Exact, case-insensitive symbol lookup ("na", "NA", "Na" all give 11).
pub fn atomic_number(symbol: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(symbol))
        .map(|i| i as u8 + 1)
}

/// Resolves the element named by the leading letters of a CIF-style label
/// such as `Na1`, `Fe2+` or `CL`. Two-letter symbols win over one-letter ones.
pub fn atomic_number_from_label(label: &str) -> Option<u8> {
    let letters: String = label
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .take(2)
        .collect();
    if letters.len() == 2 {
        if let Some(z) = atomic_number(&letters) {
            return Some(z);
        }
    }
    letters.get(..1).and_then(atomic_number)
}

pub fn category(z: u8) -> Category {
    use Category::*;
    match z {
        3 | 11 | 19 | 37 | 55 | 87 => AlkaliMetal,
        4 | 12 | 20 | 38 | 56 | 88 => AlkalineEarthMetal,
        57..=71 => Lanthanide,
        89..=103 => Actinide,
        21..=30 | 39..=48 | 72..=80 | 104..=108 => TransitionMetal,
        13 | 31 | 49 | 50 | 81..=84 => PostTransitionMetal,
        5 | 14 | 32 | 33 | 51 | 52 => Metalloid,
        1 | 6 | 7 | 8 | 9 | 15 | 16 | 17 | 34 | 35 | 53 | 85 => ReactiveNonmetal,
        2 | 10 | 18 | 36 | 54 | 86 => NobleGas,
        _ => Unknown,
    }
}
