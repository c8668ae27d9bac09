//! SMILES parsing, writing, canonicalization and tokenization.
//!
//! The accepted grammar is a practical subset of SMILES:
//!
//! ```text
//! smiles       ::= chain { ( bond | "." ) chain }
//! chain        ::= atom { ring-closure } { branch } [ [bond] chain ]
//! branch       ::= "(" [bond] chain ")"
//! atom         ::= organic | aromatic | bracket
//! organic      ::= "B" | "C" | "N" | "O" | "P" | "S" | "F" | "Cl" | "Br" | "I"
//! aromatic     ::= "b" | "c" | "n" | "o" | "p" | "s"
//! bracket      ::= "[" [isotope] symbol [chiral] [hcount] [charge] [map] "]"
//! symbol       ::= UPPER [lower] | "b" | "c" | "n" | "o" | "p" | "s" | "se" | "as"
//! isotope      ::= digit {digit}
//! chiral       ::= "@" | "@@"                    (accepted, not stored)
//! hcount       ::= "H" [digit]
//! charge       ::= ("+" | "-") [digit {digit}] | "++" | "--"
//! map          ::= ":" digit {digit}
//! bond         ::= "-" | "=" | "#" | ":" | "/" | "\"   (/ and \ read as single)
//! ring-closure ::= [bond] ( digit | "%" digit digit )
//! ```
//!
//! Stereochemistry is not modeled: `/`, `\` and `@` are accepted by the
//! parser and survive tokenization verbatim, but carry no graph meaning and
//! are dropped by canonicalization. There is no valence validation and no
//! kekulization; aromaticity is taken directly from lowercase notation.

mod canon;
mod parse;
mod token;
mod write;

pub use canon::{canonical_reactant_set, canonicalize, strip_atom_maps, CanonicalSmiles};
pub use parse::parse_smiles;
pub use token::{tokenize, TokenSequence};
pub use write::{identity_neighbor_order, write_smiles, NeighborOrder};

use thiserror::Error;

/// Errors produced while reading SMILES text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty input")]
    EmptyInput,
    #[error("unknown symbol {symbol:?} at byte {pos}")]
    UnknownSymbol { pos: usize, symbol: String },
    #[error("ring closure {label} opened but never closed")]
    UnclosedRing { label: u16 },
    #[error("unbalanced parenthesis at byte {pos}")]
    UnbalancedParen { pos: usize },
    #[error("bracket atom at byte {pos} is not closed")]
    UnclosedBracket { pos: usize },
    #[error("invalid bond at byte {pos}: {reason}")]
    InvalidBond { pos: usize, reason: String },
}

/// Bond multiplicity. Aromatic bonds are only legal between aromatic atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

/// One heavy atom of a molecular graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    /// Element symbol as written, e.g. `"C"`, `"Cl"`, `"Se"`.
    pub element: String,
    pub aromatic: bool,
    pub formal_charge: i32,
    /// Hydrogen count from bracket syntax. `None` means implicit.
    pub explicit_h: Option<u8>,
    pub atom_map: Option<u32>,
    pub isotope: Option<u32>,
}

impl Atom {
    pub fn organic(element: &str) -> Self {
        Atom {
            element: element.to_string(),
            aromatic: false,
            formal_charge: 0,
            explicit_h: None,
            atom_map: None,
            isotope: None,
        }
    }

    /// True when the atom can be written without brackets.
    pub fn is_plain_organic(&self) -> bool {
        if self.formal_charge != 0
            || self.explicit_h.is_some()
            || self.atom_map.is_some()
            || self.isotope.is_some()
        {
            return false;
        }
        if self.aromatic {
            matches!(self.element.as_str(), "b" | "c" | "n" | "o" | "p" | "s")
        } else {
            matches!(
                self.element.as_str(),
                "B" | "C" | "N" | "O" | "P" | "S" | "F" | "Cl" | "Br" | "I"
            )
        }
    }
}

/// Atom/bond multigraph parsed from SMILES.
///
/// Invariants, maintained by construction:
/// - bond endpoints are valid atom indices and never equal (no self-bonds)
/// - at most one bond per unordered atom pair
/// - aromatic bonds connect only atoms flagged aromatic
#[derive(Debug, Clone, Default)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<(usize, usize, BondOrder)>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        self.atoms.len() - 1
    }

    /// Add a bond, enforcing the graph invariants.
    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<usize, String> {
        if a >= self.atoms.len() || b >= self.atoms.len() {
            return Err(format!("bond endpoint out of range: {a}-{b}"));
        }
        if a == b {
            return Err(format!("self-bond on atom {a}"));
        }
        if self.adjacency[a].iter().any(|&(n, _)| n == b) {
            return Err(format!("duplicate bond between atoms {a} and {b}"));
        }
        if order == BondOrder::Aromatic && !(self.atoms[a].aromatic && self.atoms[b].aromatic) {
            return Err(format!("aromatic bond between non-aromatic atoms {a} and {b}"));
        }
        let idx = self.bonds.len();
        self.bonds.push((a, b, order));
        self.adjacency[a].push((b, idx));
        self.adjacency[b].push((a, idx));
        Ok(idx)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn atom_mut(&mut self, i: usize) -> &mut Atom {
        &mut self.atoms[i]
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bond(&self, i: usize) -> (usize, usize, BondOrder) {
        self.bonds[i]
    }

    pub fn bonds(&self) -> &[(usize, usize, BondOrder)] {
        &self.bonds
    }

    /// Neighbors of atom `i` as `(neighbor, bond index)`, in insertion order.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    /// Connected components as lists of atom indices, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &(w, _) in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}
