//! Canonical SMILES via iterative invariant refinement.
//!
//! One unified rule is applied to every string in the pipeline, which is what
//! leak detection and reactant matching rely on. The form is internal and not
//! meant to agree byte-for-byte with any external toolkit.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::write::{identity_neighbor_order, write_smiles, NeighborOrder};
use super::{parse_smiles, BondOrder, MolGraph, SmilesError};

/// A SMILES string in the canonical form produced by [`canonicalize`]:
/// atom maps stripped, components sorted, and a fixed point of the mapping.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalSmiles(String);

impl CanonicalSmiles {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for CanonicalSmiles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Map a SMILES string to its unique canonical representative.
///
/// Any two SMILES of isomorphic graphs (after map stripping) yield the same
/// output, and the mapping is idempotent. Stereo markers are dropped.
pub fn canonicalize(s: &str) -> Result<CanonicalSmiles, SmilesError> {
    let mut g = parse_smiles(s)?;
    normalize(&mut g);
    let mut parts: Vec<String> = Vec::new();
    for comp in g.components() {
        parts.push(emit_component(&g, &comp));
    }
    parts.sort();
    Ok(CanonicalSmiles(parts.join(".")))
}

/// Canonicalize each reactant, flatten components, sort byte-wise, join with
/// '.'. Duplicates are retained.
pub fn canonical_reactant_set(reactants: &[String]) -> Result<String, SmilesError> {
    let mut parts: Vec<String> = Vec::new();
    for r in reactants {
        let canon = canonicalize(r)?;
        parts.extend(canon.as_str().split('.').map(str::to_string));
    }
    parts.sort();
    Ok(parts.join("."))
}

/// Clear every atom map, leaving the molecule otherwise untouched.
pub fn strip_atom_maps(s: &str) -> Result<String, SmilesError> {
    let mut g = parse_smiles(s)?;
    for i in 0..g.atom_count() {
        g.atom_mut(i).atom_map = None;
    }
    let order = identity_neighbor_order(&g);
    Ok(write_smiles(&g, 0, &order))
}

/// Rewrite graph annotations so emission is stable under re-parsing:
/// - atom maps stripped
/// - explicit hydrogen counts equal to the implicit default are dropped
/// - atoms that will need brackets get an explicit count (brackets always
///   re-parse with one)
fn normalize(g: &mut MolGraph) {
    for i in 0..g.atom_count() {
        g.atom_mut(i).atom_map = None;
    }
    for i in 0..g.atom_count() {
        let implicit = implicit_h_count(g, i);
        let a = g.atom_mut(i);
        if a.formal_charge == 0 && a.isotope.is_none() {
            if let (Some(h), Some(imp)) = (a.explicit_h, implicit) {
                if h == imp {
                    a.explicit_h = None;
                }
            }
        }
        if !g.atom(i).is_plain_organic() && g.atom(i).explicit_h.is_none() {
            g.atom_mut(i).explicit_h = Some(0);
        }
    }
}

/// Hydrogen count an unbracketed organic-subset atom would get: the smallest
/// normal valence at or above the bond-order sum, minus that sum. Aromatic
/// bonds count 3/2 and the sum is rounded up.
fn implicit_h_count(g: &MolGraph, i: usize) -> Option<u8> {
    let a = g.atom(i);
    let elem = if a.aromatic {
        a.element.to_ascii_uppercase()
    } else {
        a.element.clone()
    };
    let valences: &[u32] = match elem.as_str() {
        "B" => &[3],
        "C" => &[4],
        "N" => &[3, 5],
        "O" => &[2],
        "P" => &[3, 5],
        "S" => &[2, 4, 6],
        "F" | "Cl" | "Br" | "I" => &[1],
        _ => return None,
    };
    let mut twice_sum = 0u32;
    for &(_, bi) in g.neighbors(i) {
        twice_sum += match g.bond(bi).2 {
            BondOrder::Single => 2,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
            BondOrder::Aromatic => 3,
        };
    }
    let bond_sum = (twice_sum + 1) / 2;
    let v = valences
        .iter()
        .copied()
        .find(|&v| v >= bond_sum)
        .unwrap_or(bond_sum);
    Some((v - bond_sum) as u8)
}

/// Canonical atom ranks for one component (local indices into `comp`).
/// Initial invariant: element, degree, charge, aromaticity, explicit
/// hydrogens, isotope and the sorted incident bond orders. Refinement by
/// sorted (bond, neighbor-rank) multisets until stable; residual ties broken
/// by perturbing the lowest-index tied atom and re-refining.
fn canonical_ranks(g: &MolGraph, comp: &[usize]) -> Vec<usize> {
    let n = comp.len();
    let local: std::collections::HashMap<usize, usize> =
        comp.iter().enumerate().map(|(li, &gi)| (gi, li)).collect();

    let initial: Vec<_> = comp
        .iter()
        .map(|&gi| {
            let a = g.atom(gi);
            let mut bonds: Vec<BondOrder> =
                g.neighbors(gi).iter().map(|&(_, bi)| g.bond(bi).2).collect();
            bonds.sort_unstable();
            (
                a.element.clone(),
                g.degree(gi),
                a.formal_charge,
                a.aromatic,
                a.explicit_h.map(i32::from).unwrap_or(-1),
                a.isotope.unwrap_or(0),
                bonds,
            )
        })
        .collect();
    let mut ranks = dense_ranks(&initial);

    refine(g, comp, &local, &mut ranks);

    // Break residual ties deterministically until all ranks are distinct.
    loop {
        let mut class_size = vec![0usize; n];
        for &r in &ranks {
            class_size[r] += 1;
        }
        let tied = (0..n).find(|&li| class_size[ranks[li]] > 1);
        let Some(t) = tied else { break };
        let keys: Vec<(usize, usize)> = (0..n)
            .map(|li| (ranks[li], if li == t { 0 } else { 1 }))
            .collect();
        ranks = dense_ranks(&keys);
        refine(g, comp, &local, &mut ranks);
    }
    ranks
}

fn refine(
    g: &MolGraph,
    comp: &[usize],
    local: &std::collections::HashMap<usize, usize>,
    ranks: &mut Vec<usize>,
) {
    let n = comp.len();
    loop {
        let before = distinct_count(ranks);
        let keys: Vec<(usize, Vec<(BondOrder, usize)>)> = (0..n)
            .map(|li| {
                let gi = comp[li];
                let mut neigh: Vec<(BondOrder, usize)> = g
                    .neighbors(gi)
                    .iter()
                    .map(|&(w, bi)| (g.bond(bi).2, ranks[local[&w]]))
                    .collect();
                neigh.sort_unstable();
                (ranks[li], neigh)
            })
            .collect();
        *ranks = dense_ranks(&keys);
        if distinct_count(ranks) == before {
            break;
        }
    }
}

fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0usize; keys.len()];
    let mut rank = 0usize;
    for (pos, &i) in idx.iter().enumerate() {
        if pos > 0 && keys[idx[pos - 1]] != keys[i] {
            rank += 1;
        }
        ranks[i] = rank;
    }
    ranks
}

fn distinct_count(ranks: &[usize]) -> usize {
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    sorted.len()
}

/// Emit one component from its rank-0 atom, visiting neighbors in rank order.
fn emit_component(g: &MolGraph, comp: &[usize]) -> String {
    let ranks = canonical_ranks(g, comp);
    let local: std::collections::HashMap<usize, usize> =
        comp.iter().enumerate().map(|(li, &gi)| (gi, li)).collect();

    let mut order: NeighborOrder = (0..g.atom_count())
        .map(|gi| (0..g.degree(gi)).collect::<Vec<_>>())
        .collect();
    for &gi in comp {
        let mut adj_idx: Vec<usize> = (0..g.degree(gi)).collect();
        adj_idx.sort_by_key(|&ai| ranks[local[&g.neighbors(gi)[ai].0]]);
        order[gi] = adj_idx;
    }
    let start_local = (0..comp.len()).min_by_key(|&li| ranks[li]).unwrap();
    let start = comp[start_local];

    // write_smiles walks the whole graph; restrict to this component by
    // rebuilding it when the graph is disconnected.
    if comp.len() == g.atom_count() {
        return write_smiles(g, start, &order);
    }
    let (sub, sub_order, sub_start) = extract_component(g, comp, &order, start);
    write_smiles(&sub, sub_start, &sub_order)
}

fn extract_component(
    g: &MolGraph,
    comp: &[usize],
    order: &NeighborOrder,
    start: usize,
) -> (MolGraph, NeighborOrder, usize) {
    let local: std::collections::HashMap<usize, usize> =
        comp.iter().enumerate().map(|(li, &gi)| (gi, li)).collect();
    let mut sub = MolGraph::new();
    for &gi in comp {
        sub.add_atom(g.atom(gi).clone());
    }
    for &(a, b, o) in g.bonds() {
        if let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) {
            sub.add_bond(la, lb, o).expect("component bond");
        }
    }
    let mut sub_order: NeighborOrder = vec![Vec::new(); comp.len()];
    for (li, &gi) in comp.iter().enumerate() {
        // Adjacency in `sub` may be permuted relative to `g`; translate the
        // ordering through neighbor identities.
        let orig_neighbors: Vec<usize> = order[gi]
            .iter()
            .map(|&ai| local[&g.neighbors(gi)[ai].0])
            .collect();
        let sub_adj: Vec<usize> = sub.neighbors(li).iter().map(|&(n, _)| n).collect();
        sub_order[li] = orig_neighbors
            .iter()
            .map(|&ln| sub_adj.iter().position(|&x| x == ln).expect("neighbor"))
            .collect();
    }
    (sub, sub_order, local[&start])
}
