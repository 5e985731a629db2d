//! Splits a [`CanonicalProblem`] into atoms that own disjoint column sets and
//! hold copies of the neighbour columns their rows reference.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::grid::Network;
use crate::linalg::SparseMatrix;
use crate::opf::CanonicalProblem;

/// How buses are grouped into atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    PerBus,
    /// Groups of bus indices merged into one atom; buses not listed stay alone.
    PerCluster(Vec<Vec<usize>>),
}

impl Strategy {
    /// Cluster strategy taken from the network file (bus ids mapped to indices).
    pub fn clusters_of(net: &Network) -> Result<Strategy> {
        let mut groups = Vec::new();
        for c in &net.clusters {
            let idx = c
                .iter()
                .map(|&id| {
                    net.bus_idx(id)
                        .ok_or_else(|| Error::Validation(format!("cluster names unknown bus {id}")))
                })
                .collect::<Result<Vec<_>>>()?;
            groups.push(idx);
        }
        Ok(Strategy::PerCluster(groups))
    }
}

/// One owned/copy pair, i.e. one row of the copy incidence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub column: usize,
    pub owner: usize,
    pub owner_local: usize,
    pub holder: usize,
    pub holder_local: usize,
}

#[derive(Debug, Clone)]
pub struct Atom {
    pub id: usize,
    pub buses: Vec<usize>,
    /// Global columns: owned first, then copies, each in ascending order.
    pub cols: Vec<usize>,
    pub n_owned: usize,
    pub eq_rows: Vec<usize>,
    pub g: SparseMatrix,
    pub b: Vec<f64>,
    pub in_rows: Vec<usize>,
    pub h: SparseMatrix,
    pub d: Vec<f64>,
    /// Copies are unbounded locally; their owner carries the box.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
    /// Edges whose copy this atom holds.
    pub incoming: Vec<usize>,
    /// Edges whose owned column lives here.
    pub outgoing: Vec<usize>,
    pub neighbors: Vec<usize>,
}

impl Atom {
    pub fn n(&self) -> usize {
        self.cols.len()
    }

    pub fn owned(&self) -> &[usize] {
        &self.cols[..self.n_owned]
    }

    pub fn copied(&self) -> &[usize] {
        &self.cols[self.n_owned..]
    }

    pub fn objective(&self, a: &[f64]) -> f64 {
        crate::linalg::dot(&self.cost, a)
    }
}

/// Ownership and constraint partition (L_j, O_j, C_j).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionProfile {
    pub owned: Vec<Vec<usize>>,
    pub copied: Vec<Vec<usize>>,
    pub eq_rows: Vec<Vec<usize>>,
    pub in_rows: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub atoms: Vec<Atom>,
    pub edges: Vec<Edge>,
    pub n_global: usize,
}

impl Decomposition {
    pub fn profile(&self) -> DecompositionProfile {
        DecompositionProfile {
            owned: self.atoms.iter().map(|a| a.owned().to_vec()).collect(),
            copied: self.atoms.iter().map(|a| a.copied().to_vec()).collect(),
            eq_rows: self.atoms.iter().map(|a| a.eq_rows.clone()).collect(),
            in_rows: self.atoms.iter().map(|a| a.in_rows.clone()).collect(),
        }
    }

    /// Atomic vectors with every copy equal to its owner.
    pub fn lift(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.atoms
            .iter()
            .map(|a| a.cols.iter().map(|&c| x[c]).collect())
            .collect()
    }

    /// Global vector read from the owners.
    pub fn assemble(&self, a: &[Vec<f64>]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_global];
        for (atom, v) in self.atoms.iter().zip(a) {
            for (k, &c) in atom.owned().iter().enumerate() {
                x[c] = v[k];
            }
        }
        x
    }

    /// `max |copy − owner|` over all edges.
    pub fn coordination_residual(&self, a: &[Vec<f64>]) -> f64 {
        self.edges
            .iter()
            .map(|e| (a[e.holder][e.holder_local] - a[e.owner][e.owner_local]).abs())
            .fold(0.0, f64::max)
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.atoms[atom].neighbors.len()
    }
}

/// Partitions columns and rows by the home bus recorded at assembly.
pub fn decompose(prob: &CanonicalProblem, strategy: &Strategy) -> Result<Decomposition> {
    let n = prob.n();
    let n_bus = (0..n).map(|c| prob.index.home(c) + 1).max().unwrap_or(0);
    let mut atom_of_bus: Vec<Option<usize>> = vec![None; n_bus];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    if let Strategy::PerCluster(clusters) = strategy {
        for c in clusters {
            let mut g: Vec<usize> = c.clone();
            g.sort_unstable();
            g.dedup();
            for &b in &g {
                if b >= n_bus {
                    return Err(Error::Decomposition(format!("cluster bus index {b} out of range")));
                }
                if atom_of_bus[b].is_some() {
                    return Err(Error::Decomposition(format!("bus index {b} appears in two clusters")));
                }
                atom_of_bus[b] = Some(usize::MAX);
            }
            if !g.is_empty() {
                groups.push(g);
            }
        }
    }
    for b in 0..n_bus {
        if atom_of_bus[b].is_none() {
            groups.push(vec![b]);
        }
    }
    groups.sort_by_key(|g| g[0]);
    for (k, g) in groups.iter().enumerate() {
        for &b in g {
            atom_of_bus[b] = Some(k);
        }
    }
    let atom_of = |bus: usize| atom_of_bus[bus].expect("every bus grouped");
    let col_atom: Vec<usize> = (0..n).map(|c| atom_of(prob.index.home(c))).collect();

    let k = groups.len();
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); k];
    for c in 0..n {
        owned[col_atom[c]].push(c);
    }
    let mut eq_rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (r, t) in prob.eq_tags.iter().enumerate() {
        eq_rows[atom_of(t.home)].push(r);
    }
    let mut in_rows: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (r, t) in prob.in_tags.iter().enumerate() {
        in_rows[atom_of(t.home)].push(r);
    }

    let mut atoms = Vec::with_capacity(k);
    for j in 0..k {
        let mut copies = BTreeSet::new();
        for &r in &eq_rows[j] {
            copies.extend(prob.g.row(r).map(|(c, _)| c).filter(|&c| col_atom[c] != j));
        }
        for &r in &in_rows[j] {
            copies.extend(prob.h.row(r).map(|(c, _)| c).filter(|&c| col_atom[c] != j));
        }
        let n_owned = owned[j].len();
        let mut cols = owned[j].clone();
        cols.extend(copies);
        let mut local: Vec<Option<usize>> = vec![None; n];
        for (i, &c) in cols.iter().enumerate() {
            local[c] = Some(i);
        }
        let nj = cols.len();
        let g = prob.g.select(&eq_rows[j], &local, nj);
        let h = prob.h.select(&in_rows[j], &local, nj);
        let mut lower = vec![f64::NEG_INFINITY; nj];
        let mut upper = vec![f64::INFINITY; nj];
        let mut cost = vec![0.0; nj];
        for i in 0..n_owned {
            lower[i] = prob.lower[cols[i]];
            upper[i] = prob.upper[cols[i]];
            cost[i] = prob.cost[cols[i]];
        }
        atoms.push(Atom {
            id: j,
            buses: groups[j].clone(),
            cols,
            n_owned,
            b: eq_rows[j].iter().map(|&r| prob.b[r]).collect(),
            d: in_rows[j].iter().map(|&r| prob.d[r]).collect(),
            eq_rows: std::mem::take(&mut eq_rows[j]),
            g,
            in_rows: std::mem::take(&mut in_rows[j]),
            h,
            lower,
            upper,
            cost,
            incoming: Vec::new(),
            outgoing: Vec::new(),
            neighbors: Vec::new(),
        });
    }

    // Local position of each owned column in its owner.
    let mut owner_local = vec![usize::MAX; n];
    for atom in &atoms {
        for (i, &c) in atom.owned().iter().enumerate() {
            owner_local[c] = i;
        }
    }
    let mut edges = Vec::new();
    for j in 0..k {
        for i in atoms[j].n_owned..atoms[j].n() {
            let c = atoms[j].cols[i];
            let owner = col_atom[c];
            if owner == j || owner_local[c] == usize::MAX {
                return Err(Error::Decomposition(format!(
                    "copy of column {c} in atom {j} has no owner"
                )));
            }
            edges.push(Edge {
                column: c,
                owner,
                owner_local: owner_local[c],
                holder: j,
                holder_local: i,
            });
        }
    }
    let mut nbrs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for (e, edge) in edges.iter().enumerate() {
        atoms[edge.holder].incoming.push(e);
        atoms[edge.owner].outgoing.push(e);
        nbrs[edge.holder].insert(edge.owner);
        nbrs[edge.owner].insert(edge.holder);
    }
    for (atom, s) in atoms.iter_mut().zip(nbrs) {
        atom.neighbors = s.into_iter().collect();
    }
    Ok(Decomposition {
        atoms,
        edges,
        n_global: n,
    })
}

/// Copy incidence `B` over the stacked atomic vector `[a_0; a_1; …]`.
#[derive(Debug, Clone)]
pub struct CopyIncidence {
    pub b: SparseMatrix,
    /// Start of each atom's block in the stacked vector.
    pub offsets: Vec<usize>,
    /// Rows of B for copies held by each atom (B_j).
    pub incoming: Vec<Vec<usize>>,
    /// Rows of B touching each atom's columns (the rows of Bʲ).
    pub touching: Vec<Vec<usize>>,
}

impl CopyIncidence {
    /// Columns of B restricted to one atom: `Bʲ`.
    pub fn atom_block(&self, atom: usize) -> SparseMatrix {
        let lo = self.offsets[atom];
        let hi = self.offsets[atom + 1];
        let map: Vec<Option<usize>> = (0..self.b.ncols())
            .map(|c| (lo..hi).contains(&c).then(|| c - lo))
            .collect();
        let rows: Vec<usize> = (0..self.b.nrows()).collect();
        self.b.select(&rows, &map, hi - lo)
    }

    pub fn stack(&self, a: &[Vec<f64>]) -> Vec<f64> {
        a.concat()
    }
}

/// −1 on the owned column and +1 on the copy, one row per edge.
pub fn copy_incidence(dec: &Decomposition) -> Result<CopyIncidence> {
    let mut offsets = vec![0];
    for a in &dec.atoms {
        offsets.push(offsets.last().unwrap() + a.n());
    }
    let mut trip = Vec::with_capacity(2 * dec.edges.len());
    let mut incoming = vec![Vec::new(); dec.atoms.len()];
    let mut touching = vec![Vec::new(); dec.atoms.len()];
    for (r, e) in dec.edges.iter().enumerate() {
        if e.owner >= dec.atoms.len() || dec.atoms[e.owner].owned().get(e.owner_local) != Some(&e.column) {
            return Err(Error::Decomposition(format!(
                "orphan copy of column {} in atom {}",
                e.column, e.holder
            )));
        }
        trip.push((r, offsets[e.owner] + e.owner_local, -1.0));
        trip.push((r, offsets[e.holder] + e.holder_local, 1.0));
        incoming[e.holder].push(r);
        touching[e.holder].push(r);
        touching[e.owner].push(r);
    }
    Ok(CopyIncidence {
        b: SparseMatrix::from_triplets(dec.edges.len(), *offsets.last().unwrap(), &trip),
        offsets,
        incoming,
        touching,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DecompositionReport {
    pub ok: bool,
    pub issues: Vec<String>,
    pub atoms: usize,
    pub edges: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
}

/// Checks the partition invariants and that the atoms reassemble the
/// global rows bit for bit.
pub fn validate_decomposition(prob: &CanonicalProblem, dec: &Decomposition) -> DecompositionReport {
    let mut issues = Vec::new();
    let n = prob.n();
    let mut owner = vec![None; n];
    for a in &dec.atoms {
        for &c in a.owned() {
            match owner[c] {
                Some(o) => issues.push(format!("column {} owned by atoms {o} and {}", prob.index.key(c), a.id)),
                None => owner[c] = Some(a.id),
            }
        }
    }
    for (c, o) in owner.iter().enumerate() {
        if o.is_none() {
            issues.push(format!("column {} has no owner", prob.index.key(c)));
        }
    }
    let mut copy_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for e in &dec.edges {
        *copy_count.entry((e.holder, e.column)).or_default() += 1;
        if owner[e.column] != Some(e.owner) {
            issues.push(format!(
                "edge for column {} points at a non-owner",
                prob.index.key(e.column)
            ));
        }
    }
    for a in &dec.atoms {
        for &c in a.copied() {
            if copy_count.get(&(a.id, c)) != Some(&1) {
                issues.push(format!(
                    "atom {}: copy {} not paired with exactly one owner",
                    a.id,
                    prob.index.key(c)
                ));
            }
        }
    }

    for (is_eq, global, m) in [(true, &prob.g, prob.b.len()), (false, &prob.h, prob.d.len())] {
        let mut seen = vec![0usize; m];
        for a in &dec.atoms {
            let (rows, local, rhs, grhs) = if is_eq {
                (&a.eq_rows, &a.g, &a.b, &prob.b)
            } else {
                (&a.in_rows, &a.h, &a.d, &prob.d)
            };
            for (i, &r) in rows.iter().enumerate() {
                if r >= m {
                    issues.push(format!("atom {} lists row {r} beyond the problem", a.id));
                    continue;
                }
                seen[r] += 1;
                let tag = if is_eq { prob.eq_tags[r] } else { prob.in_tags[r] };
                let mut mine: Vec<(usize, f64)> = local.row(i).map(|(c, v)| (a.cols[c], v)).collect();
                mine.sort_by_key(|e| e.0);
                let mut theirs: Vec<(usize, f64)> = global.row(r).collect();
                theirs.sort_by_key(|e| e.0);
                let same = mine.len() == theirs.len()
                    && mine
                        .iter()
                        .zip(&theirs)
                        .all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits());
                if !same || rhs[i].to_bits() != grhs[r].to_bits() {
                    issues.push(format!("atom {}: row {tag} differs from the global row", a.id));
                }
            }
        }
        for (r, &s) in seen.iter().enumerate() {
            if s != 1 {
                let tag = if is_eq { prob.eq_tags[r] } else { prob.in_tags[r] };
                issues.push(format!("row {tag} covered {s} times"));
            }
        }
    }
    for a in &dec.atoms {
        for i in 0..a.n_owned {
            let c = a.cols[i];
            if a.lower[i].to_bits() != prob.lower[c].to_bits()
                || a.upper[i].to_bits() != prob.upper[c].to_bits()
                || a.cost[i].to_bits() != prob.cost[c].to_bits()
            {
                issues.push(format!(
                    "atom {}: bounds or cost of {} altered",
                    a.id,
                    prob.index.key(c)
                ));
            }
        }
        for &nb in &a.neighbors {
            if !dec.atoms[nb].neighbors.contains(&a.id) {
                issues.push(format!("neighbour lists of atoms {} and {nb} are not symmetric", a.id));
            }
        }
    }

    let degrees: Vec<usize> = dec.atoms.iter().map(|a| a.neighbors.len()).collect();
    DecompositionReport {
        ok: issues.is_empty(),
        issues,
        atoms: dec.atoms.len(),
        edges: dec.edges.len(),
        max_degree: degrees.iter().copied().max().unwrap_or(0),
        mean_degree: degrees.iter().sum::<usize>() as f64 / degrees.len().max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_profiles, parse_network, ProfileParams};
    use crate::opf::{build_ci_opf, preprocess_bounds, Objective, Quantity, RowKind};

    fn chain(n_bus: usize) -> Network {
        let buses: Vec<String> = (1..=n_bus)
            .map(|i| {
                if i == 1 {
                    r#"{"id": 1, "phases": "a", "kind": "pcc"}"#.to_string()
                } else {
                    format!(r#"{{"id": {i}, "phases": "a", "kind": "residential", "load": "l"}}"#)
                }
            })
            .collect();
        let lines: Vec<String> = (1..n_bus)
            .map(|i| {
                format!(
                    r#"{{"from": {i}, "to": {}, "phases": "a", "impedance": [[{{"re": 0.2, "im": 0.4}}]]}}"#,
                    i + 1
                )
            })
            .collect();
        parse_network(&format!(
            r#"{{"name": "c", "base_kva": 100, "base_kv_ln": 2.4, "horizon": 1,
               "buses": [{}], "lines": [{}], "profiles": [{{"id": "l", "p_kw": {{"a": [20]}}}}]}}"#,
            buses.join(","),
            lines.join(",")
        ))
        .unwrap()
    }

    fn problem(net: &Network) -> CanonicalProblem {
        let p = ProfileParams {
            pv_penetration: 0.0,
            ..ProfileParams::for_horizon(net.horizon)
        };
        let prof = generate_profiles(1, net, &p).unwrap();
        let bounds = preprocess_bounds(net, &prof).unwrap();
        build_ci_opf(net, &prof, &bounds, Objective::None).unwrap()
    }

    #[test]
    fn two_bus_copies() {
        let net = chain(2);
        let prob = problem(&net);
        let dec = decompose(&prob, &Strategy::PerBus).unwrap();
        assert_eq!(dec.atoms.len(), 2);
        let name = |c: usize| prob.index.key(c).quantity;
        // Atom 0 owns the flow and copies the far voltage for its Ohm rows.
        let a0: Vec<Quantity> = dec.atoms[0].copied().iter().map(|&c| name(c)).collect();
        assert_eq!(a0, vec![Quantity::Vr, Quantity::Vi]);
        assert!(dec.atoms[0].owned().iter().any(|&c| name(c) == Quantity::FlowR));
        // Atom 1 copies the flow for its KCL rows.
        let a1: Vec<Quantity> = dec.atoms[1].copied().iter().map(|&c| name(c)).collect();
        assert_eq!(a1, vec![Quantity::FlowR, Quantity::FlowI]);
        let ohm = dec.atoms[0]
            .eq_rows
            .iter()
            .filter(|&&r| prob.eq_tags[r].kind == RowKind::OhmRe)
            .count();
        assert_eq!(ohm, 1);
        assert!(validate_decomposition(&prob, &dec).ok);
        assert_eq!(dec.atoms[0].neighbors, vec![1]);
    }

    #[test]
    fn single_bus_has_no_copies() {
        let net = parse_network(
            r#"{"name": "s", "base_kva": 100, "base_kv_ln": 2.4, "horizon": 1,
               "buses": [{"id": 1, "phases": "abc", "kind": "pcc"}], "lines": []}"#,
        )
        .unwrap();
        let prob = problem(&net);
        let dec = decompose(&prob, &Strategy::PerBus).unwrap();
        assert_eq!(dec.atoms.len(), 1);
        assert!(dec.atoms[0].copied().is_empty());
        let inc = copy_incidence(&dec).unwrap();
        assert_eq!(inc.b.nrows(), 0);
    }

    #[test]
    fn incidence_vanishes_at_consensus() {
        let net = chain(4);
        let prob = problem(&net);
        let dec = decompose(&prob, &Strategy::PerBus).unwrap();
        let inc = copy_incidence(&dec).unwrap();
        for r in 0..inc.b.nrows() {
            let mut vals: Vec<f64> = inc.b.row(r).map(|e| e.1).collect();
            vals.sort_by(f64::total_cmp);
            assert_eq!(vals, vec![-1.0, 1.0]);
        }
        let x: Vec<f64> = (0..prob.n()).map(|c| (c as f64).sin()).collect();
        let a = dec.lift(&x);
        assert!(inc.b.mul_vec(&inc.stack(&a)).iter().all(|&v| v == 0.0));
        assert_eq!(dec.assemble(&a), x);
        let mut bad = a.clone();
        let e = dec.edges[0];
        bad[e.holder][e.holder_local] += 1.0;
        assert_eq!(dec.coordination_residual(&bad), 1.0);
        // Bʲ blocks reassemble B a.
        let mut sum = vec![0.0; inc.b.nrows()];
        for (j, aj) in bad.iter().enumerate() {
            for (s, v) in sum.iter_mut().zip(inc.atom_block(j).mul_vec(aj)) {
                *s += v;
            }
        }
        assert_eq!(sum, inc.b.mul_vec(&inc.stack(&bad)));
    }

    #[test]
    fn dropped_row_is_reported() {
        let net = chain(3);
        let prob = problem(&net);
        let mut dec = decompose(&prob, &Strategy::PerBus).unwrap();
        let r = dec.atoms[1].eq_rows.pop().unwrap();
        let report = validate_decomposition(&prob, &dec);
        assert!(!report.ok);
        let tag = prob.eq_tags[r].to_string();
        assert!(
            report
                .issues
                .iter()
                .any(|i| i.contains(&tag) && i.contains("covered 0 times")),
            "{:?}",
            report.issues
        );
    }

    #[test]
    fn clusters_merge_atoms() {
        let net = chain(5);
        let prob = problem(&net);
        let dec = decompose(&prob, &Strategy::PerCluster(vec![vec![2, 3]])).unwrap();
        assert_eq!(dec.atoms.len(), 4);
        assert_eq!(dec.atoms[2].buses, vec![2, 3]);
        // The internal line needs no copies.
        let internal = dec.atoms[2]
            .copied()
            .iter()
            .filter(|&&c| {
                let k = prob.index.key(c);
                k.quantity.is_line() && k.element == 2
            })
            .count();
        assert_eq!(internal, 0);
        assert!(validate_decomposition(&prob, &dec).ok);
        assert!(decompose(&prob, &Strategy::PerCluster(vec![vec![1, 2], vec![2, 3]])).is_err());
    }
}
