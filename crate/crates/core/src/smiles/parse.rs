//! Hand-rolled cursor parser for the SMILES subset described in the module docs.

use std::collections::HashMap;

use super::{Atom, BondOrder, MolGraph, SmilesError};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn digits(&mut self, max: usize) -> Option<u32> {
        let start = self.pos;
        while self.pos - start < max && self.peek().map_or(false, |b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
    }
}

/// Parse a SMILES string into a molecular graph.
pub fn parse_smiles(s: &str) -> Result<MolGraph, SmilesError> {
    if s.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let mut cur = Cursor {
        bytes: s.as_bytes(),
        pos: 0,
    };
    let mut graph = MolGraph::new();
    // Atom the next atom will bond to; None right after '.' or at the start.
    let mut prev: Option<usize> = None;
    // Explicit bond symbol waiting for its second atom, with its byte position.
    let mut pending_bond: Option<(BondOrder, usize)> = None;
    // Open branch points: (atom to return to, '(' byte position).
    let mut branch_stack: Vec<(Option<usize>, usize)> = Vec::new();
    // Open ring labels: label -> (atom, optional explicit bond, byte position).
    let mut open_rings: HashMap<u16, (usize, Option<BondOrder>, usize)> = HashMap::new();

    while let Some(b) = cur.peek() {
        let pos = cur.pos;
        match b {
            b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                cur.bump();
                if pending_bond.is_some() {
                    return Err(SmilesError::InvalidBond {
                        pos,
                        reason: "two bond symbols in a row".into(),
                    });
                }
                pending_bond = Some((bond_order(b), pos));
            }
            b'.' => {
                cur.bump();
                if pending_bond.is_some() {
                    return Err(SmilesError::InvalidBond {
                        pos,
                        reason: "bond symbol before '.'".into(),
                    });
                }
                prev = None;
            }
            b'(' => {
                cur.bump();
                if prev.is_none() {
                    return Err(SmilesError::UnbalancedParen { pos });
                }
                branch_stack.push((prev, pos));
            }
            b')' => {
                cur.bump();
                if pending_bond.is_some() {
                    return Err(SmilesError::InvalidBond {
                        pos,
                        reason: "dangling bond before ')'".into(),
                    });
                }
                match branch_stack.pop() {
                    Some((ret, _)) => prev = ret,
                    None => return Err(SmilesError::UnbalancedParen { pos }),
                }
            }
            b'0'..=b'9' | b'%' => {
                let label = ring_label(&mut cur)?;
                let from = prev.ok_or_else(|| SmilesError::InvalidBond {
                    pos,
                    reason: "ring closure before any atom".into(),
                })?;
                let explicit = pending_bond.take().map(|(o, _)| o);
                match open_rings.remove(&label) {
                    Some((other, opened_bond, _)) => {
                        let order = resolve_ring_bond(
                            &graph, other, from, opened_bond, explicit, pos,
                        )?;
                        graph
                            .add_bond(other, from, order)
                            .map_err(|reason| SmilesError::InvalidBond { pos, reason })?;
                    }
                    None => {
                        open_rings.insert(label, (from, explicit, pos));
                    }
                }
            }
            _ => {
                let atom = parse_atom(&mut cur)?;
                let idx = graph.add_atom(atom);
                if let Some(p) = prev {
                    let order = match pending_bond.take() {
                        Some((o, bpos)) => {
                            validate_explicit(&graph, p, idx, o, bpos)?;
                            o
                        }
                        None => default_bond(&graph, p, idx),
                    };
                    graph
                        .add_bond(p, idx, order)
                        .map_err(|reason| SmilesError::InvalidBond { pos, reason })?;
                } else if let Some((_, bpos)) = pending_bond.take() {
                    return Err(SmilesError::InvalidBond {
                        pos: bpos,
                        reason: "bond with no preceding atom".into(),
                    });
                }
                prev = Some(idx);
            }
        }
    }

    if let Some((_, pos)) = branch_stack.first() {
        return Err(SmilesError::UnbalancedParen { pos: *pos });
    }
    if let Some((label, _)) = open_rings.iter().min_by_key(|(_, (_, _, pos))| *pos) {
        return Err(SmilesError::UnclosedRing { label: *label });
    }
    if let Some((_, pos)) = pending_bond {
        return Err(SmilesError::InvalidBond {
            pos,
            reason: "trailing bond symbol".into(),
        });
    }
    if graph.atom_count() == 0 {
        return Err(SmilesError::EmptyInput);
    }
    Ok(graph)
}

fn bond_order(b: u8) -> BondOrder {
    match b {
        b'=' => BondOrder::Double,
        b'#' => BondOrder::Triple,
        b':' => BondOrder::Aromatic,
        // '/' and '\' carry stereo direction we do not model.
        _ => BondOrder::Single,
    }
}

fn default_bond(graph: &MolGraph, a: usize, b: usize) -> BondOrder {
    if graph.atom(a).aromatic && graph.atom(b).aromatic {
        BondOrder::Aromatic
    } else {
        BondOrder::Single
    }
}

fn validate_explicit(
    graph: &MolGraph,
    a: usize,
    b: usize,
    order: BondOrder,
    pos: usize,
) -> Result<(), SmilesError> {
    if order == BondOrder::Aromatic && !(graph.atom(a).aromatic && graph.atom(b).aromatic) {
        return Err(SmilesError::InvalidBond {
            pos,
            reason: "aromatic bond between non-aromatic atoms".into(),
        });
    }
    Ok(())
}

fn resolve_ring_bond(
    graph: &MolGraph,
    a: usize,
    b: usize,
    opened: Option<BondOrder>,
    closed: Option<BondOrder>,
    pos: usize,
) -> Result<BondOrder, SmilesError> {
    let order = match (opened, closed) {
        (Some(x), Some(y)) if x != y => {
            return Err(SmilesError::InvalidBond {
                pos,
                reason: "ring closure bond symbols disagree".into(),
            })
        }
        (Some(x), _) | (_, Some(x)) => x,
        (None, None) => default_bond(graph, a, b),
    };
    validate_explicit(graph, a, b, order, pos)?;
    Ok(order)
}

fn ring_label(cur: &mut Cursor) -> Result<u16, SmilesError> {
    let pos = cur.pos;
    if cur.eat(b'%') {
        match cur.digits(2) {
            Some(n) if cur.pos - pos == 3 => Ok(n as u16),
            _ => Err(SmilesError::UnknownSymbol {
                pos,
                symbol: "%".into(),
            }),
        }
    } else {
        let d = cur.bump().unwrap();
        Ok((d - b'0') as u16)
    }
}

fn parse_atom(cur: &mut Cursor) -> Result<Atom, SmilesError> {
    let pos = cur.pos;
    let b = cur.peek().unwrap();
    match b {
        b'[' => parse_bracket_atom(cur),
        b'A'..=b'Z' => {
            // Outside brackets only the organic subset is legal; Cl and Br are
            // the only two-letter members.
            let two = if cur.bytes.len() >= pos + 2 {
                &cur.bytes[pos..pos + 2]
            } else {
                &cur.bytes[pos..pos + 1]
            };
            if two == b"Cl" || two == b"Br" {
                cur.pos += 2;
                return Ok(Atom::organic(std::str::from_utf8(two).unwrap()));
            }
            if matches!(b, b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I') {
                cur.pos += 1;
                return Ok(Atom::organic(&(b as char).to_string()));
            }
            Err(unknown_at(cur, pos))
        }
        b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
            cur.pos += 1;
            let mut atom = Atom::organic(&(b as char).to_string());
            atom.aromatic = true;
            Ok(atom)
        }
        _ => Err(unknown_at(cur, pos)),
    }
}

fn parse_bracket_atom(cur: &mut Cursor) -> Result<Atom, SmilesError> {
    let open = cur.pos;
    cur.bump(); // '['
    let isotope = cur.digits(3);

    let sym_pos = cur.pos;
    let (element, aromatic) = match cur.peek() {
        Some(b @ b'A'..=b'Z') => {
            cur.bump();
            let mut sym = (b as char).to_string();
            if cur.peek().map_or(false, |c| c.is_ascii_lowercase()) {
                sym.push(cur.bump().unwrap() as char);
            }
            (sym, false)
        }
        Some(b'b') | Some(b'c') | Some(b'n') | Some(b'o') | Some(b'p') => {
            (((cur.bump().unwrap()) as char).to_string(), true)
        }
        Some(b's') => {
            cur.bump();
            if cur.eat(b'e') {
                ("se".to_string(), true)
            } else {
                ("s".to_string(), true)
            }
        }
        Some(b'a') => {
            cur.bump();
            if cur.eat(b's') {
                ("as".to_string(), true)
            } else {
                return Err(unknown_at(cur, sym_pos));
            }
        }
        _ => return Err(unknown_at(cur, sym_pos)),
    };

    // Chirality markers are accepted and dropped.
    if cur.eat(b'@') {
        cur.eat(b'@');
    }

    let explicit_h = if cur.eat(b'H') {
        Some(cur.digits(1).unwrap_or(1) as u8)
    } else {
        Some(0)
    };

    let mut formal_charge = 0i32;
    while let Some(sign) = cur.peek().filter(|&c| c == b'+' || c == b'-') {
        cur.bump();
        let unit = if sign == b'+' { 1 } else { -1 };
        match cur.digits(2) {
            Some(n) => formal_charge += unit * n as i32,
            None => formal_charge += unit,
        }
    }

    let atom_map = if cur.eat(b':') {
        match cur.digits(5) {
            Some(n) if n > 0 => Some(n),
            _ => return Err(unknown_at(cur, cur.pos.saturating_sub(1))),
        }
    } else {
        None
    };

    if !cur.eat(b']') {
        return Err(SmilesError::UnclosedBracket { pos: open });
    }
    Ok(Atom {
        element,
        aromatic,
        formal_charge,
        explicit_h,
        atom_map,
        isotope,
    })
}

fn unknown_at(cur: &Cursor, pos: usize) -> SmilesError {
    let end = (pos + 1).min(cur.bytes.len());
    SmilesError::UnknownSymbol {
        pos,
        symbol: String::from_utf8_lossy(&cur.bytes[pos..end]).into_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ethanol() {
        let g = parse_smiles("CCO").unwrap();
        assert_eq!(g.atom_count(), 3);
        assert_eq!(g.bond_count(), 2);
        assert_eq!(g.atom(0).element, "C");
        assert_eq!(g.atom(2).element, "O");
        assert!(g.bonds().iter().all(|&(_, _, o)| o == BondOrder::Single));
    }

    #[test]
    fn benzene_ring_closure() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bond_count(), 6);
        assert!(g.atoms().iter().all(|a| a.aromatic && a.element == "c"));
        // The closure bond connects first and last atoms.
        assert!(g
            .bonds()
            .iter()
            .any(|&(a, b, o)| (a, b) == (0, 5) && o == BondOrder::Aromatic));
    }

    #[test]
    fn unclosed_ring_is_an_error() {
        assert_eq!(
            parse_smiles("C1CC").unwrap_err(),
            SmilesError::UnclosedRing { label: 1 }
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_smiles("").unwrap_err(), SmilesError::EmptyInput);
    }

    #[test]
    fn unbalanced_parens() {
        assert!(matches!(
            parse_smiles("CC(C"),
            Err(SmilesError::UnbalancedParen { .. })
        ));
        assert!(matches!(
            parse_smiles("CC)C"),
            Err(SmilesError::UnbalancedParen { .. })
        ));
    }

    #[test]
    fn bracket_atom_fields() {
        let g = parse_smiles("[13CH3+:5]").unwrap();
        let a = g.atom(0);
        assert_eq!(a.element, "C");
        assert_eq!(a.isotope, Some(13));
        assert_eq!(a.explicit_h, Some(3));
        assert_eq!(a.formal_charge, 1);
        assert_eq!(a.atom_map, Some(5));
        assert!(!a.aromatic);
    }

    #[test]
    fn bracket_defaults_to_zero_hydrogens() {
        let g = parse_smiles("[C]").unwrap();
        assert_eq!(g.atom(0).explicit_h, Some(0));
    }

    #[test]
    fn charge_variants() {
        assert_eq!(parse_smiles("[O-]").unwrap().atom(0).formal_charge, -1);
        assert_eq!(parse_smiles("[Fe+2]").unwrap().atom(0).formal_charge, 2);
        assert_eq!(parse_smiles("[O--]").unwrap().atom(0).formal_charge, -2);
    }

    #[test]
    fn percent_ring_label() {
        let g = parse_smiles("C%12CCCCC%12").unwrap();
        assert_eq!(g.bond_count(), 6);
    }

    #[test]
    fn dot_separates_components() {
        let g = parse_smiles("CCO.CC(=O)O").unwrap();
        assert_eq!(g.components().len(), 2);
    }

    #[test]
    fn reused_ring_label() {
        // Label 1 closes, then opens a second ring.
        let g = parse_smiles("C1CC1C1CC1").unwrap();
        assert_eq!(g.bond_count(), 7);
        assert_eq!(g.components().len(), 1);
    }

    #[test]
    fn unknown_symbol() {
        assert!(matches!(
            parse_smiles("CXC"),
            Err(SmilesError::UnknownSymbol { pos: 1, .. })
        ));
    }

    #[test]
    fn aromatic_bond_between_aliphatic_atoms_rejected() {
        assert!(matches!(
            parse_smiles("C:C"),
            Err(SmilesError::InvalidBond { .. })
        ));
    }

    #[test]
    fn duplicate_ring_bond_rejected() {
        assert!(matches!(
            parse_smiles("C12CC12"),
            Err(SmilesError::InvalidBond { .. })
        ));
    }

    #[test]
    fn stereo_markers_accepted_and_dropped() {
        let g = parse_smiles("F/C=C/F").unwrap();
        assert_eq!(g.atom_count(), 4);
        let orders: Vec<BondOrder> = g.bonds().iter().map(|&(_, _, o)| o).collect();
        assert_eq!(
            orders,
            vec![BondOrder::Single, BondOrder::Double, BondOrder::Single]
        );
        let g = parse_smiles("[C@H](F)(Cl)Br").unwrap();
        assert_eq!(g.atom(0).explicit_h, Some(1));
    }

    #[test]
    fn trailing_bond_rejected() {
        assert!(matches!(
            parse_smiles("CC="),
            Err(SmilesError::InvalidBond { .. })
        ));
    }
}
