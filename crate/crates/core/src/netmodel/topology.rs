use super::{AcBusId, DcBusId, NetworkCase, Terminal, TerminalRef};
use petgraph::unionfind::UnionFind;
use std::collections::{BTreeMap, BTreeSet};

/// A connected set of DC terminals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DcComponent {
    /// Sorted by (bus, terminal).
    pub terminals: Vec<TerminalRef>,
}

impl DcComponent {
    pub fn buses(&self) -> BTreeSet<DcBusId> {
        self.terminals.iter().map(|t| t.bus).collect()
    }

    pub fn contains(&self, t: TerminalRef) -> bool {
        self.terminals.binary_search(&t).is_ok()
    }
}

fn group<T: Ord + Copy>(nodes: &[T], edges: impl IntoIterator<Item = (T, T)>) -> Vec<Vec<T>> {
    let index: BTreeMap<T, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let mut uf = UnionFind::<usize>::new(nodes.len());
    for (a, b) in edges {
        if let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) {
            uf.union(ia, ib);
        }
    }
    let mut groups: BTreeMap<usize, Vec<T>> = BTreeMap::new();
    for (i, &n) in nodes.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(n);
    }
    let mut out: Vec<Vec<T>> = groups
        .into_values()
        .map(|mut g| {
            g.sort();
            g
        })
        .collect();
    out.sort_by(|a, b| a[0].cmp(&b[0]));
    out
}

/// Synchronous AC areas: connected components over in-service AC branches.
/// Converters never merge islands. Each island is sorted; islands are ordered
/// by their smallest bus id.
pub fn ac_islands(case: &NetworkCase) -> Vec<Vec<AcBusId>> {
    let mut buses: Vec<AcBusId> = case.ac_buses.iter().map(|b| b.id).collect();
    buses.sort();
    buses.dedup();
    let edges = case.ac_branches.iter().filter(|br| br.status).map(|br| (br.from_bus, br.to_bus));
    group(&buses, edges)
}

fn dc_edges(case: &NetworkCase, only: Option<Terminal>) -> Vec<(TerminalRef, TerminalRef)> {
    let mut edges = Vec::new();
    for br in &case.dc_branches {
        for (t, c) in br.conductors.iter() {
            if c.status && only.is_none_or(|o| o == t) {
                edges.push((TerminalRef::new(br.from_bus, t), TerminalRef::new(br.to_bus, t)));
            }
        }
    }
    if only.is_none() {
        for cv in case.active_converters() {
            edges.push((cv.pole_terminal(), cv.neutral_terminal()));
        }
        for load in &case.loads_dc {
            edges.push((
                TerminalRef::new(load.dc_bus, load.polarity.terminal()),
                TerminalRef::new(load.dc_bus, Terminal::Neutral),
            ));
        }
    }
    edges
}

/// Partition of all declared DC terminals into connected subnetworks over
/// in-service conductors, in-service converter poles and DC loads. Ordered by
/// the smallest contained terminal (bus id first).
pub fn dc_components(case: &NetworkCase) -> Vec<DcComponent> {
    let terminals = case.dc_terminals();
    group(&terminals, dc_edges(case, None)).into_iter().map(|terminals| DcComponent { terminals }).collect()
}

/// Connected groups of same-type terminals linked by in-service conductors of
/// that type only (one conductor layer).
pub fn layer_pieces(case: &NetworkCase, layer: Terminal) -> Vec<Vec<TerminalRef>> {
    let terminals: Vec<TerminalRef> = case.dc_terminals().into_iter().filter(|t| t.terminal == layer).collect();
    group(&terminals, dc_edges(case, Some(layer)))
}

/// Terminals belonging to a component that contains at least one in-service
/// converter pole. Only these carry voltage unknowns; the rest of the DC grid
/// is de-energized.
pub fn energized_terminals(case: &NetworkCase) -> BTreeSet<TerminalRef> {
    let mut out = BTreeSet::new();
    for comp in dc_components(case) {
        let fed = case
            .active_converters()
            .any(|cv| comp.contains(cv.pole_terminal()) && comp.contains(cv.neutral_terminal()));
        if fed {
            out.extend(comp.terminals.iter().copied());
        }
    }
    out
}
