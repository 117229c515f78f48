//! Two-layer multiplex graph: Voronoi adjacency plus same-cell-type pairs
//! over one shared node set.

use crate::cell_data::CellTable;
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::geometry::EdgeList;

/// Same-type node pairs, grouped by type and enumerated lazily.
///
/// A type with m members contributes the full m(m-1)/2 clique; the groups are
/// kept instead of the pairs so multi-million-edge cliques are never
/// materialized unless a consumer collects them.
#[derive(Debug, Clone, PartialEq)]
pub struct CelltypePairs {
    groups: Vec<Vec<u32>>,
}

impl CelltypePairs {
    /// Total number of pairs: Σ over types of m(m-1)/2.
    pub fn count(&self) -> u64 {
        self.groups
            .iter()
            .map(|g| {
                let m = g.len() as u64;
                m * m.saturating_sub(1) / 2
            })
            .sum()
    }

    /// Node groups per type code, ascending node order within each group.
    pub fn groups(&self) -> &[Vec<u32>] {
        &self.groups
    }

    /// Enumerate pairs `(i, j)` with `i < j`, grouped by type code.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.groups.iter().flat_map(|g| {
            g.iter()
                .enumerate()
                .flat_map(move |(a, &i)| g[a + 1..].iter().map(move |&j| (i, j)))
        })
    }

    pub fn is_empty(&self) -> bool {
        self.groups.iter().all(|g| g.len() < 2)
    }
}

/// Group nodes into same-type cliques. Every node must carry a type code.
pub fn build_celltype_pairs(type_codes: &[Option<u32>]) -> Result<CelltypePairs> {
    let mut max_code = 0u32;
    for (index, code) in type_codes.iter().enumerate() {
        match code {
            Some(c) => max_code = max_code.max(*c),
            None => return Err(Error::UntypedNode { index }),
        }
    }
    let mut groups = vec![Vec::new(); max_code as usize + 1];
    for (i, code) in type_codes.iter().enumerate() {
        groups[code.unwrap() as usize].push(i as u32);
    }
    Ok(CelltypePairs { groups })
}

/// Shared-node two-layer graph with node features.
#[derive(Debug, Clone)]
pub struct MultiplexGraph {
    pub n: usize,
    /// Biomarkers with size appended; row i is cell i of the source table.
    pub features: Dense,
    pub positions: Vec<(f64, f64)>,
    pub voronoi: EdgeList,
    pub pairs: CelltypePairs,
    pub type_codes: Vec<u32>,
    /// Type names by code, in first-appearance order from the table.
    pub type_names: Vec<String>,
}

/// Assemble the multiplex graph from a fully typed table and its Voronoi
/// edges. Node ordering follows the table; type codes are assigned by first
/// appearance.
pub fn assemble_multiplex(table: &CellTable, voronoi: EdgeList) -> Result<MultiplexGraph> {
    let n = table.len();
    if voronoi.n != n {
        return Err(Error::DimMismatch {
            expected: format!("edge list over {n} nodes"),
            got: format!("{}", voronoi.n),
        });
    }
    let mut type_names: Vec<String> = Vec::new();
    let mut codes: Vec<Option<u32>> = Vec::with_capacity(n);
    for (index, cell) in table.cells.iter().enumerate() {
        match &cell.cell_type {
            Some(name) => {
                let code = match type_names.iter().position(|t| t == name) {
                    Some(i) => i as u32,
                    None => {
                        type_names.push(name.clone());
                        (type_names.len() - 1) as u32
                    }
                };
                codes.push(Some(code));
            }
            None => return Err(Error::UntypedNode { index }),
        }
    }
    let pairs = build_celltype_pairs(&codes)?;
    Ok(MultiplexGraph {
        n,
        features: table.feature_matrix(),
        positions: table.positions(),
        voronoi,
        pairs,
        type_codes: codes.into_iter().map(Option::unwrap).collect(),
        type_names,
    })
}

/// Fraction of Voronoi edges joining same-type nodes.
pub fn homophily_ratio(voronoi: &EdgeList, type_codes: &[u32]) -> Result<f64> {
    if voronoi.is_empty() {
        return Err(Error::EmptyEdgeList);
    }
    let same = voronoi
        .pairs()
        .filter(|&(i, j)| type_codes[i as usize] == type_codes[j as usize])
        .count();
    Ok(same as f64 / voronoi.edges.len() as f64)
}
