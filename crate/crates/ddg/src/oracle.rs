//! Brute-force reference for the reachability search: enumerate every
//! simple path over the raw edge list. Exponential; meant for small units.

use crate::graph::{DdgGraph, Mutators};
use crate::search::{candidates_from, sink_calls, GadgetCandidate, Witness};
use crate::sinks::{ArgSel, SinkSet};
use crate::ast::FunctionUnit;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("more than {0} simple paths")]
pub struct PathLimit(pub usize);

/// For each node reachable from `src`, the minimum over all simple paths by
/// (length, lexicographic order).
pub fn all_simple_paths(g: &DdgGraph, src: &str, limit: usize) -> Result<BTreeMap<String, Vec<String>>, PathLimit> {
    let edges: Vec<(&str, &str)> = g.edges.iter().map(|e| (e.from.as_str(), e.to.as_str())).collect();
    let mut best: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut path = vec![src.to_string()];
    let mut seen = 0usize;
    fn dfs(
        edges: &[(&str, &str)],
        path: &mut Vec<String>,
        best: &mut BTreeMap<String, Vec<String>>,
        seen: &mut usize,
        limit: usize,
    ) -> Result<(), PathLimit> {
        *seen += 1;
        if *seen > limit {
            return Err(PathLimit(limit));
        }
        let last = path.last().unwrap().clone();
        let better = best.get(&last).is_none_or(|b| (path.len(), &path[..]) < (b.len(), &b[..]));
        if better {
            best.insert(last.clone(), path.clone());
        }
        for (a, b) in edges {
            if *a == last && !path.iter().any(|p| p == b) {
                path.push(b.to_string());
                dfs(edges, path, best, seen, limit)?;
                path.pop();
            }
        }
        Ok(())
    }
    dfs(&edges, &mut path, &mut best, &mut seen, limit)?;
    Ok(best)
}

/// Candidates computed with [`all_simple_paths`] in place of BFS.
pub fn oracle_candidates(unit: &FunctionUnit, sinks: &SinkSet, mutators: &Mutators, limit: usize) -> Result<Vec<GadgetCandidate>, PathLimit> {
    let calls = sink_calls(unit, sinks);
    if calls.is_empty() {
        return Ok(Vec::new());
    }
    let g = crate::graph::build_ddg_with(unit, mutators);
    let mut tables = Vec::new();
    for p in unit.sources() {
        tables.push((p, all_simple_paths(&g, p, limit)?));
    }
    let witness = |arg: &ArgSel, targets: &BTreeSet<String>| -> Option<Witness> {
        let mut best: Option<(&str, &Vec<String>)> = None;
        for (p, t) in &tables {
            for v in targets {
                if let Some(path) = t.get(v) {
                    if best.is_none_or(|(_, b)| (path.len(), path) < (b.len(), b)) {
                        best = Some((p, path));
                    }
                }
            }
        }
        best.map(|(p, path)| {
            let mut path = path.clone();
            if path.len() == 1 {
                path.push(p.to_string());
            }
            Witness { arg: arg.to_string(), param: p.to_string(), path }
        })
    };
    Ok(candidates_from(unit, &calls, witness))
}
