//! SMILES emission by depth-first traversal with a caller-chosen atom order.

use super::{BondOrder, MolGraph};

/// For each atom, a permutation of its adjacency-list indices giving the
/// order in which neighbors are visited.
pub type NeighborOrder = Vec<Vec<usize>>;

/// The order neighbors were attached during parsing; writing a freshly parsed
/// graph with this order reproduces the input's shape.
pub fn identity_neighbor_order(g: &MolGraph) -> NeighborOrder {
    (0..g.atom_count()).map(|i| (0..g.degree(i)).collect()).collect()
}

/// Emit SMILES for `g`, starting the first component at `start` and visiting
/// neighbors in the order given by `order`. Remaining components start at
/// their lowest atom index. Panics if `start` is out of range or `order` is
/// not a per-atom permutation of adjacency indices.
pub fn write_smiles(g: &MolGraph, start: usize, order: &NeighborOrder) -> String {
    assert!(start < g.atom_count(), "start atom out of range");
    assert_eq!(order.len(), g.atom_count(), "neighbor order length mismatch");
    for (i, perm) in order.iter().enumerate() {
        let mut sorted: Vec<usize> = perm.clone();
        sorted.sort_unstable();
        assert!(
            sorted.iter().copied().eq(0..g.degree(i)),
            "neighbor order for atom {i} is not a permutation"
        );
    }

    let n = g.atom_count();
    // Pass 1: walk the DFS to split edges into tree and ring bonds and hand
    // out ring labels in encounter order, so opener digits are known before
    // their atom is emitted.
    let mut plan = RingPlan {
        digits: vec![Vec::new(); n],
        is_ring_bond: vec![false; g.bond_count()],
        next_label: 1,
    };
    let mut visited = vec![false; n];
    let mut bond_used = vec![false; g.bond_count()];
    let mut roots = vec![start];
    plan_rings(g, start, order, &mut visited, &mut bond_used, &mut plan);
    for i in 0..n {
        if !visited[i] {
            roots.push(i);
            plan_rings(g, i, order, &mut visited, &mut bond_used, &mut plan);
        }
    }

    // Pass 2: emit along the same tree.
    let mut out = String::new();
    for (ci, &root) in roots.iter().enumerate() {
        if ci > 0 {
            out.push('.');
        }
        emit(g, root, usize::MAX, order, &plan, &mut out);
    }
    out
}

struct RingPlan {
    /// Per atom: (label, bond order, opens here) in discovery order.
    digits: Vec<Vec<(u16, BondOrder, bool)>>,
    is_ring_bond: Vec<bool>,
    next_label: u16,
}

fn plan_rings(
    g: &MolGraph,
    v: usize,
    order: &NeighborOrder,
    visited: &mut [bool],
    bond_used: &mut [bool],
    plan: &mut RingPlan,
) {
    visited[v] = true;
    for &oi in &order[v] {
        let (w, bi) = g.neighbors(v)[oi];
        if bond_used[bi] {
            continue;
        }
        bond_used[bi] = true;
        if visited[w] {
            // Ring bond: the digit opens at the earlier-visited atom.
            plan.is_ring_bond[bi] = true;
            let label = plan.next_label;
            plan.next_label += 1;
            assert!(label <= 99, "ring label overflow");
            let (_, _, bond) = g.bond(bi);
            plan.digits[w].push((label, bond, true));
            plan.digits[v].push((label, bond, false));
        } else {
            plan_rings(g, w, order, visited, bond_used, plan);
        }
    }
}

fn emit(
    g: &MolGraph,
    v: usize,
    parent: usize,
    order: &NeighborOrder,
    plan: &RingPlan,
    out: &mut String,
) {
    write_atom(g, v, out);

    let mut digits = plan.digits[v].clone();
    digits.sort_by_key(|&(label, _, _)| label);
    for (label, bond, opening) in digits {
        if opening {
            push_bond_symbol(g, bond, v, ring_partner(g, plan, v, label), out);
        }
        if label < 10 {
            out.push((b'0' + label as u8) as char);
        } else {
            out.push('%');
            out.push_str(&label.to_string());
        }
    }

    let children: Vec<(usize, usize)> = order[v]
        .iter()
        .map(|&oi| g.neighbors(v)[oi])
        .filter(|&(w, bi)| w != parent && !plan.is_ring_bond[bi])
        .collect();
    for (i, &(w, bi)) in children.iter().enumerate() {
        let last = i + 1 == children.len();
        if !last {
            out.push('(');
        }
        let (_, _, bond) = g.bond(bi);
        push_bond_symbol(g, bond, v, w, out);
        emit(g, w, v, order, plan, out);
        if !last {
            out.push(')');
        }
    }
}

fn ring_partner(g: &MolGraph, plan: &RingPlan, v: usize, label: u16) -> usize {
    for i in 0..g.atom_count() {
        if i != v && plan.digits[i].iter().any(|&(l, _, _)| l == label) {
            return i;
        }
    }
    unreachable!("ring label without partner")
}

fn push_bond_symbol(g: &MolGraph, bond: BondOrder, a: usize, b: usize, out: &mut String) {
    let both_aromatic = g.atom(a).aromatic && g.atom(b).aromatic;
    match bond {
        // A single bond between two aromatic atoms must be explicit or it
        // would re-parse as aromatic.
        BondOrder::Single => {
            if both_aromatic {
                out.push('-');
            }
        }
        BondOrder::Double => out.push('='),
        BondOrder::Triple => out.push('#'),
        BondOrder::Aromatic => {
            if !both_aromatic {
                out.push(':');
            }
        }
    }
}

fn write_atom(g: &MolGraph, v: usize, out: &mut String) {
    let a = g.atom(v);
    if a.is_plain_organic() {
        out.push_str(&a.element);
        return;
    }
    out.push('[');
    if let Some(iso) = a.isotope {
        out.push_str(&iso.to_string());
    }
    out.push_str(&a.element);
    match a.explicit_h {
        None | Some(0) => {}
        Some(1) => out.push('H'),
        Some(h) => {
            out.push('H');
            out.push_str(&h.to_string());
        }
    }
    if a.formal_charge == 1 {
        out.push('+');
    } else if a.formal_charge == -1 {
        out.push('-');
    } else if a.formal_charge > 1 {
        out.push('+');
        out.push_str(&a.formal_charge.to_string());
    } else if a.formal_charge < -1 {
        out.push('-');
        out.push_str(&(-a.formal_charge).to_string());
    }
    if let Some(m) = a.atom_map {
        out.push(':');
        out.push_str(&m.to_string());
    }
    out.push(']');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smiles::parse_smiles;

    fn roundtrip(s: &str) -> String {
        let g = parse_smiles(s).unwrap();
        write_smiles(&g, 0, &identity_neighbor_order(&g))
    }

    #[test]
    fn ethanol_from_oxygen_end() {
        let g = parse_smiles("CCO").unwrap();
        let order = identity_neighbor_order(&g);
        assert_eq!(write_smiles(&g, 2, &order), "OCC");
    }

    #[test]
    fn charged_bracket_atom() {
        let mut g = MolGraph::new();
        let mut atom = super::super::Atom::organic("N");
        atom.formal_charge = 1;
        atom.explicit_h = Some(0);
        g.add_atom(atom);
        assert_eq!(write_smiles(&g, 0, &vec![vec![]]), "[N+]");
    }

    #[test]
    fn input_shape_reproduced() {
        for s in ["CCO", "CC(C)O", "c1ccccc1C", "C1CCC1", "CC(=O)O.CCO", "[CH3][OH]"] {
            assert_eq!(roundtrip(s), s, "roundtrip of {s}");
        }
    }

    #[test]
    fn benzene_from_any_start_parses_back() {
        let g = parse_smiles("c1ccccc1").unwrap();
        let order = identity_neighbor_order(&g);
        for start in 0..6 {
            let s = write_smiles(&g, start, &order);
            let h = parse_smiles(&s).unwrap();
            assert_eq!(h.atom_count(), 6);
            assert_eq!(h.bond_count(), 6);
            assert!(h.atoms().iter().all(|a| a.aromatic));
        }
    }

    #[test]
    fn aromatic_single_bond_is_explicit() {
        // Biphenyl: the bridging bond is single between two aromatic atoms.
        let s = roundtrip("c1ccccc1-c1ccccc1");
        assert!(s.contains('-'), "got {s}");
        let g = parse_smiles(&s).unwrap();
        let singles = g
            .bonds()
            .iter()
            .filter(|&&(_, _, o)| o == BondOrder::Single)
            .count();
        assert_eq!(singles, 1);
    }

    #[test]
    fn big_ring_label_uses_percent() {
        // Force labels past 9: a wheel of eleven triangles sharing one hub.
        let mut g = MolGraph::new();
        let hub = g.add_atom(super::super::Atom::organic("C"));
        for _ in 0..11 {
            let a = g.add_atom(super::super::Atom::organic("C"));
            let b = g.add_atom(super::super::Atom::organic("C"));
            g.add_bond(hub, a, BondOrder::Single).unwrap();
            g.add_bond(a, b, BondOrder::Single).unwrap();
            g.add_bond(b, hub, BondOrder::Single).unwrap();
        }
        let order = identity_neighbor_order(&g);
        let s = write_smiles(&g, 0, &order);
        assert!(s.contains("%1"), "expected %nn label in {s}");
        let h = parse_smiles(&s).unwrap();
        assert_eq!(h.atom_count(), g.atom_count());
        assert_eq!(h.bond_count(), g.bond_count());
    }

    #[test]
    fn ring_closure_neighbor_is_not_a_tree_child() {
        // In C1CCC1 starting at atom 1, atom 0 is reached both as a tree
        // child and as the ring partner of atom 3; the ring bond must not be
        // traversed as a tree edge.
        let g = parse_smiles("C1CCC1").unwrap();
        let order = identity_neighbor_order(&g);
        for start in 0..4 {
            let s = write_smiles(&g, start, &order);
            let h = parse_smiles(&s).unwrap();
            assert_eq!(h.atom_count(), 4, "from start {start}: {s}");
            assert_eq!(h.bond_count(), 4, "from start {start}: {s}");
        }
    }
}
