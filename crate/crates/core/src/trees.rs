//! Rooted and cycle-rooted spanning tree optimization on weighted directed
//! multigraphs, graph heights, the flux exponent, and the Markov-chain tree
//! stationary distribution.
//!
//! Conventions: a rooted spanning tree (in-arborescence) directs every
//! non-root vertex's unique out-edge toward the root. A cycle-rooted spanning
//! tree adds one edge out of the root, so every vertex has out-degree exactly
//! one and the subgraph contains a single directed cycle through the root.
//! Loop and parallel edges are permitted; +inf weights are admitted but
//! excluded from all minima.

use std::collections::BTreeMap;

use crate::error::{FluxError, Result};

/// Tie tolerance on weight sums: minima closer than this are reported as
/// ambiguous rather than silently broken.
pub const TIE_TOL: f64 = 1e-9;
/// Largest choice product attempted by the exhaustive enumerators.
const ENUM_GUARD: u128 = 20_000_000;

#[derive(Debug, Clone)]
pub struct Edge {
    pub id: usize,
    pub src: usize,
    pub tgt: usize,
    /// Nonnegative weight; +inf admitted and excluded from minima.
    pub weight: f64,
    /// Value of the reference closed one-form on this edge.
    pub cocycle: f64,
    pub reversal: Option<usize>,
}

/// Finite directed multigraph with nonnegative edge weights and a cocycle.
#[derive(Debug, Clone)]
pub struct WeightedDigraph {
    pub n_vertices: usize,
    pub vertex_names: Vec<String>,
    pub edges: Vec<Edge>,
}

impl WeightedDigraph {
    pub fn new(n_vertices: usize) -> Self {
        Self {
            n_vertices,
            vertex_names: (0..n_vertices).map(|i| format!("v{i}")).collect(),
            edges: Vec::new(),
        }
    }

    pub fn add_edge(&mut self, src: usize, tgt: usize, weight: f64, cocycle: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge {
            id,
            src,
            tgt,
            weight,
            cocycle,
            reversal: None,
        });
        id
    }

    /// Add a mutually reversal-paired edge pair; returns (forward, backward) ids.
    pub fn add_edge_pair(
        &mut self,
        src: usize,
        tgt: usize,
        w_fwd: f64,
        w_bwd: f64,
        cocycle_fwd: f64,
    ) -> (usize, usize) {
        let a = self.add_edge(src, tgt, w_fwd, cocycle_fwd);
        let b = self.add_edge(tgt, src, w_bwd, -cocycle_fwd);
        self.edges[a].reversal = Some(b);
        self.edges[b].reversal = Some(a);
        (a, b)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.edges {
            if e.src >= self.n_vertices || e.tgt >= self.n_vertices {
                return Err(FluxError::InvalidSpec(format!(
                    "edge {} endpoints out of range",
                    e.id
                )));
            }
            if e.weight.is_nan() || e.weight < 0.0 {
                return Err(FluxError::InvalidSpec(format!(
                    "edge {} weight must be nonnegative or +inf, got {}",
                    e.id, e.weight
                )));
            }
            if let Some(r) = e.reversal {
                let rev = self.edges.get(r).ok_or_else(|| {
                    FluxError::InvalidSpec(format!("edge {} reversal id {r} out of range", e.id))
                })?;
                if rev.reversal != Some(e.id) || rev.src != e.tgt || rev.tgt != e.src {
                    return Err(FluxError::InvalidSpec(format!(
                        "reversal pairing broken on edges {} / {r}",
                        e.id
                    )));
                }
            }
        }
        Ok(())
    }

    fn out_choices(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.src == v && e.tgt != v && e.weight.is_finite())
            .map(|e| e.id)
            .collect()
    }

    fn out_choices_with_loops(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.src == v && e.weight.is_finite())
            .map(|e| e.id)
            .collect()
    }

    /// Undirected connectivity over finite-weight edges.
    pub fn is_connected(&self) -> bool {
        if self.n_vertices == 0 {
            return false;
        }
        let mut seen = vec![false; self.n_vertices];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for e in &self.edges {
                if !e.weight.is_finite() {
                    continue;
                }
                for (a, b) in [(e.src, e.tgt), (e.tgt, e.src)] {
                    if a == v && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Strong connectivity over positive-weight edges (for Markov chains).
    fn is_strongly_connected(&self) -> bool {
        let reach = |forward: bool| -> bool {
            let mut seen = vec![false; self.n_vertices];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for e in &self.edges {
                    if e.weight <= 0.0 {
                        continue;
                    }
                    let (a, b) = if forward { (e.src, e.tgt) } else { (e.tgt, e.src) };
                    if a == v && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
            seen.iter().all(|&s| s)
        };
        reach(true) && reach(false)
    }
}

/// A minimal rooted spanning tree with uniqueness report.
#[derive(Debug, Clone)]
pub struct TreeResult {
    /// Edge ids of the arborescence (directed toward `root`).
    pub tree: Vec<usize>,
    pub root: usize,
    pub total_weight: f64,
    /// Margin to the runner-up exceeds the tie tolerance.
    pub unique: bool,
    pub runner_up_gap: f64,
}

/// A minimal cycle-rooted spanning tree of a requested cycle sign.
#[derive(Debug, Clone)]
pub struct CrstResult {
    /// All edge ids (one out-edge per vertex).
    pub edges: Vec<usize>,
    /// Edge ids of the unique directed cycle.
    pub cycle: Vec<usize>,
    pub total_weight: f64,
    /// Cocycle sum over the cycle.
    pub cycle_cocycle: f64,
    pub unique: bool,
    pub runner_up_gap: f64,
}

// ---------------------------------------------------------------------------
// exhaustive enumeration

/// Visit every in-arborescence rooted at `root`; calls `f(edge ids)`.
/// Returns false if the choice product exceeds the enumeration guard.
fn for_each_in_arborescence(
    g: &WeightedDigraph,
    root: usize,
    f: &mut dyn FnMut(&[usize]),
) -> bool {
    let n = g.n_vertices;
    let order: Vec<usize> = (0..n).filter(|&v| v != root).collect();
    let choices: Vec<Vec<usize>> = order.iter().map(|&v| g.out_choices(v)).collect();
    let mut product: u128 = 1;
    for c in &choices {
        if c.is_empty() {
            return true; // no arborescence exists through this root
        }
        product = product.saturating_mul(c.len() as u128);
        if product > ENUM_GUARD {
            return false;
        }
    }
    // chosen[v] = edge id of assigned out-edge, usize::MAX if unassigned
    let mut chosen = vec![usize::MAX; n];
    let mut picked: Vec<usize> = Vec::with_capacity(order.len());

    fn rec(
        g: &WeightedDigraph,
        order: &[usize],
        choices: &[Vec<usize>],
        depth: usize,
        chosen: &mut Vec<usize>,
        picked: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if depth == order.len() {
            f(picked);
            return;
        }
        let v = order[depth];
        for &eid in &choices[depth] {
            let mut cur = g.edges[eid].tgt;
            let mut cyclic = false;
            while chosen[cur] != usize::MAX {
                cur = g.edges[chosen[cur]].tgt;
                if cur == v {
                    cyclic = true;
                    break;
                }
            }
            if cyclic {
                continue;
            }
            chosen[v] = eid;
            picked.push(eid);
            rec(g, order, choices, depth + 1, chosen, picked, f);
            picked.pop();
            chosen[v] = usize::MAX;
        }
    }
    rec(g, &order, &choices, 0, &mut chosen, &mut picked, f);
    true
}

// ---------------------------------------------------------------------------
// Chu-Liu/Edmonds minimum arborescence

#[derive(Clone, Copy)]
struct ArbEdge {
    from: usize,
    to: usize,
    w: f64,
    orig: usize,
}

/// Minimum spanning out-arborescence rooted at `root` (each non-root vertex
/// has exactly one incoming edge). Returns (total, original edge ids).
fn edmonds(n: usize, edges: &[ArbEdge], root: usize) -> Option<(f64, Vec<usize>)> {
    // cheapest incoming edge per vertex
    let mut best: Vec<Option<ArbEdge>> = vec![None; n];
    for e in edges {
        if e.to == root || e.from == e.to {
            continue;
        }
        if best[e.to].map_or(true, |b| e.w < b.w) {
            best[e.to] = Some(*e);
        }
    }
    for (v, b) in best.iter().enumerate() {
        if v != root && b.is_none() {
            return None;
        }
    }
    // find a cycle among picked edges
    let mut color = vec![usize::MAX; n]; // visit stamp
    let mut cycle: Vec<usize> = Vec::new();
    for start in 0..n {
        if start == root || color[start] != usize::MAX {
            continue;
        }
        let mut v = start;
        while v != root && color[v] == usize::MAX {
            color[v] = start;
            v = best[v].unwrap().from;
        }
        if v != root && color[v] == start {
            // cycle found, collect it
            let mut u = v;
            loop {
                cycle.push(u);
                u = best[u].unwrap().from;
                if u == v {
                    break;
                }
            }
            break;
        }
    }
    if cycle.is_empty() {
        let mut total = 0.0;
        let mut ids = Vec::with_capacity(n - 1);
        for (v, b) in best.iter().enumerate() {
            if v == root {
                continue;
            }
            let b = b.unwrap();
            total += b.w;
            ids.push(b.orig);
        }
        return Some((total, ids));
    }

    // contract the cycle
    let mut in_cycle = vec![false; n];
    for &v in &cycle {
        in_cycle[v] = true;
    }
    let mut map = vec![0usize; n];
    let mut next = 0usize;
    for v in 0..n {
        if !in_cycle[v] {
            map[v] = next;
            next += 1;
        }
    }
    let super_node = next;
    for &v in &cycle {
        map[v] = super_node;
    }
    let n2 = next + 1;
    let cycle_weight: f64 = cycle.iter().map(|&v| best[v].unwrap().w).sum();

    let mut edges2: Vec<ArbEdge> = Vec::new();
    // remember, per contracted edge entering the supernode, which cycle vertex it lands on
    let mut land: BTreeMap<usize, usize> = BTreeMap::new();
    for (k, e) in edges.iter().enumerate() {
        let (u, v) = (map[e.from], map[e.to]);
        if u == v {
            continue;
        }
        let w = if v == super_node {
            land.insert(k, e.to);
            e.w - best[e.to].unwrap().w
        } else {
            e.w
        };
        edges2.push(ArbEdge {
            from: u,
            to: v,
            w,
            orig: k,
        });
    }
    let root2 = map[root];
    let (sub_total, sub_ids) = edmonds(n2, &edges2, root2)?;

    let total = sub_total + cycle_weight;
    let mut ids: Vec<usize> = Vec::new();
    let mut entered: Option<usize> = None;
    for &k in &sub_ids {
        ids.push(edges[k].orig);
        if let Some(&landing) = land.get(&k) {
            entered = Some(landing);
        }
    }
    let entered = entered?; // the supernode must be entered exactly once
    for &v in &cycle {
        if v != entered {
            ids.push(best[v].unwrap().orig);
        }
    }
    Some((total, ids))
}

/// Minimum in-arborescence toward `root` via Edmonds on the reversed graph.
fn edmonds_in_arborescence(
    g: &WeightedDigraph,
    root: usize,
    forbidden: &[bool],
) -> Option<(f64, Vec<usize>)> {
    let rev: Vec<ArbEdge> = g
        .edges
        .iter()
        .filter(|e| e.weight.is_finite() && !forbidden[e.id] && e.src != e.tgt)
        .map(|e| ArbEdge {
            from: e.tgt,
            to: e.src,
            w: e.weight,
            orig: e.id,
        })
        .collect();
    edmonds(g.n_vertices, &rev, root)
}

fn tree_total(g: &WeightedDigraph, ids: &[usize]) -> f64 {
    ids.iter().map(|&i| g.edges[i].weight).sum()
}

/// Minimize the weight sum over rooted spanning trees (in-arborescences).
/// With `root = None`, minimizes over all roots. Exhaustive enumeration is
/// used while the search space is small; Chu-Liu/Edmonds with edge-forbidding
/// computes the optimum and the runner-up gap beyond that.
pub fn min_rooted_spanning_tree(g: &WeightedDigraph, root: Option<usize>) -> Result<TreeResult> {
    g.validate()?;
    if g.n_vertices == 0 {
        return Err(FluxError::NoArborescence(": empty graph".into()));
    }
    if g.n_vertices == 1 {
        return Ok(TreeResult {
            tree: Vec::new(),
            root: 0,
            total_weight: 0.0,
            unique: true,
            runner_up_gap: f64::INFINITY,
        });
    }
    if !g.is_connected() {
        return Err(FluxError::NoArborescence(
            ": graph is disconnected".into(),
        ));
    }
    let roots: Vec<usize> = match root {
        Some(r) => vec![r],
        None => (0..g.n_vertices).collect(),
    };

    struct Tracker {
        best: Option<(f64, Vec<usize>, usize)>,
        second: f64,
    }
    impl Tracker {
        fn consider(&mut self, total: f64, ids: &[usize], r: usize) {
            match &self.best {
                None => self.best = Some((total, ids.to_vec(), r)),
                Some((bt, bids, _)) => {
                    if total < *bt {
                        self.second = *bt;
                        self.best = Some((total, ids.to_vec(), r));
                    } else if ids != bids.as_slice() {
                        self.second = self.second.min(total);
                    }
                }
            }
        }
    }
    let mut tracker = Tracker {
        best: None,
        second: f64::INFINITY,
    };

    let mut exhaustive_ok = true;
    for &r in &roots {
        let done = for_each_in_arborescence(g, r, &mut |ids| {
            tracker.consider(tree_total(g, ids), ids, r);
        });
        if !done {
            exhaustive_ok = false;
            break;
        }
    }

    if !exhaustive_ok {
        tracker = Tracker {
            best: None,
            second: f64::INFINITY,
        };
        for &r in &roots {
            let no_forbidden = vec![false; g.edges.len()];
            if let Some((total, ids)) = edmonds_in_arborescence(g, r, &no_forbidden) {
                // runner-up at this root: forbid each tree edge in turn
                for &skip in &ids {
                    let mut forbidden = vec![false; g.edges.len()];
                    forbidden[skip] = true;
                    if let Some((t2, _)) = edmonds_in_arborescence(g, r, &forbidden) {
                        if tracker.best.as_ref().map_or(true, |(bt, _, _)| t2 >= *bt) {
                            tracker.second = tracker.second.min(t2);
                        }
                    }
                }
                tracker.consider(total, &ids, r);
            }
        }
    }

    let Tracker { best, second } = tracker;
    let (total, tree, root) =
        best.ok_or_else(|| FluxError::NoArborescence(String::new()))?;
    let gap = second - total;
    Ok(TreeResult {
        tree,
        root,
        total_weight: total,
        unique: gap > TIE_TOL,
        runner_up_gap: gap,
    })
}

/// Requested sign of the cocycle sum over the CRST cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleSign {
    Positive,
    Negative,
}

impl CycleSign {
    fn admits(self, cocycle: f64) -> bool {
        match self {
            CycleSign::Positive => cocycle > TIE_TOL,
            CycleSign::Negative => cocycle < -TIE_TOL,
        }
    }
}

/// Extract the unique cycle of a spanning out-degree-one subgraph.
/// Returns None if the subgraph has more than one cycle (not a CRST).
fn functional_cycle(g: &WeightedDigraph, ids: &[usize]) -> Option<Vec<usize>> {
    let n = g.n_vertices;
    let mut out = vec![usize::MAX; n];
    for &id in ids {
        let e = &g.edges[id];
        if out[e.src] != usize::MAX {
            return None;
        }
        out[e.src] = id;
    }
    if out.iter().any(|&o| o == usize::MAX) {
        return None;
    }
    let mut state = vec![0u8; n]; // 0 unvisited, 1 in progress, 2 done
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = g.edges[out[v]].tgt;
        }
        if state[v] == 1 {
            // new cycle discovered starting at v
            let pos = path.iter().position(|&u| u == v).unwrap();
            cycles.push(path[pos..].iter().map(|&u| out[u]).collect());
        }
        for &u in &path {
            state[u] = 2;
        }
    }
    if cycles.len() == 1 {
        cycles.pop()
    } else {
        None
    }
}

/// Enumerate vertex-simple directed cycles as edge-id sequences (loops are
/// length-1 cycles). Anchored enumeration: each cycle is reported once, from
/// its least vertex.
fn simple_cycles(g: &WeightedDigraph) -> Result<Vec<Vec<usize>>> {
    let n = g.n_vertices;
    let mut cycles = Vec::new();
    let by_src: Vec<Vec<usize>> = (0..n)
        .map(|v| g.out_choices_with_loops(v))
        .collect();
    for anchor in 0..n {
        // DFS over vertices >= anchor, path starts and ends at anchor
        let mut on_path = vec![false; n];
        let mut edge_path: Vec<usize> = Vec::new();
        dfs_cycles(
            g,
            &by_src,
            anchor,
            anchor,
            &mut on_path,
            &mut edge_path,
            &mut cycles,
        )?;
    }
    Ok(cycles)
}

fn dfs_cycles(
    g: &WeightedDigraph,
    by_src: &[Vec<usize>],
    anchor: usize,
    v: usize,
    on_path: &mut Vec<bool>,
    edge_path: &mut Vec<usize>,
    cycles: &mut Vec<Vec<usize>>,
) -> Result<()> {
    on_path[v] = true;
    for &eid in &by_src[v] {
        let t = g.edges[eid].tgt;
        if t == anchor {
            edge_path.push(eid);
            cycles.push(edge_path.clone());
            if cycles.len() > 1_000_000 {
                return Err(FluxError::InvalidSpec(
                    "cycle enumeration exceeded 1e6 cycles".into(),
                ));
            }
            edge_path.pop();
        } else if t > anchor && !on_path[t] {
            edge_path.push(eid);
            dfs_cycles(g, by_src, anchor, t, on_path, edge_path, cycles)?;
            edge_path.pop();
        }
    }
    on_path[v] = false;
    Ok(())
}

/// Minimize the weight sum over cycle-rooted spanning trees whose cycle has
/// the requested cocycle sign.
pub fn min_cycle_rooted_spanning_tree(
    g: &WeightedDigraph,
    sign: CycleSign,
) -> Result<CrstResult> {
    g.validate()?;
    let n = g.n_vertices;
    if n == 0 {
        return Err(FluxError::NoSignedCycle {
            sign: if sign == CycleSign::Positive { 1 } else { -1 },
        });
    }

    // small graphs: exhaustive over out-degree-one spanning subgraphs
    let mut product: u128 = 1;
    for v in 0..n {
        product = product.saturating_mul(g.out_choices_with_loops(v).len().max(1) as u128);
    }
    let mut best: Option<(f64, Vec<usize>, Vec<usize>, f64)> = None;
    let mut second = f64::INFINITY;

    if product <= ENUM_GUARD {
        let choices: Vec<Vec<usize>> = (0..n).map(|v| g.out_choices_with_loops(v)).collect();
        if choices.iter().any(|c| c.is_empty()) {
            return Err(FluxError::NoSignedCycle {
                sign: if sign == CycleSign::Positive { 1 } else { -1 },
            });
        }
        let mut assignment = vec![0usize; n];
        exhaustive_functional(g, &choices, 0, &mut assignment, &mut |ids| {
            if let Some(cycle) = functional_cycle(g, ids) {
                let coc: f64 = cycle.iter().map(|&i| g.edges[i].cocycle).sum();
                if sign.admits(coc) {
                    let total = tree_total(g, ids);
                    match &best {
                        None => best = Some((total, ids.to_vec(), cycle, coc)),
                        Some((bt, bids, _, _)) => {
                            if total < *bt {
                                second = *bt;
                                best = Some((total, ids.to_vec(), cycle, coc));
                            } else if ids != bids.as_slice() {
                                second = second.min(total);
                            }
                        }
                    }
                }
            }
        });
    } else {
        // general path: enumerate admissible simple cycles, contract, Edmonds
        crst_via_cycle_enumeration(g, sign, &mut best, &mut second)?;
    }

    let (total, edges, cycle, coc) = best.ok_or(FluxError::NoSignedCycle {
        sign: if sign == CycleSign::Positive { 1 } else { -1 },
    })?;
    let gap = second - total;
    Ok(CrstResult {
        edges,
        cycle,
        total_weight: total,
        cycle_cocycle: coc,
        unique: gap > TIE_TOL,
        runner_up_gap: gap,
    })
}

/// General CRST search: enumerate vertex-simple directed cycles of the
/// requested sign, contract each to a supernode, and find the minimum
/// in-forest by Edmonds. Exact for any graph whose simple cycles fit the
/// enumeration cap; also exercised directly by tests against brute force.
#[doc(hidden)]
pub fn crst_via_cycle_enumeration(
    g: &WeightedDigraph,
    sign: CycleSign,
    best: &mut Option<(f64, Vec<usize>, Vec<usize>, f64)>,
    second: &mut f64,
) -> Result<()> {
    let cycles = simple_cycles(g)?;
    for cycle in cycles {
        let coc: f64 = cycle.iter().map(|&i| g.edges[i].cocycle).sum();
        if !sign.admits(coc) {
            continue;
        }
        let cw: f64 = cycle.iter().map(|&i| g.edges[i].weight).sum();
        if !cw.is_finite() {
            continue;
        }
        if let Some((ft, fids)) = min_forest_into_cycle(g, &cycle, None) {
            let total = cw + ft;
            let mut all = cycle.clone();
            all.extend_from_slice(&fids);
            match &best {
                None => *best = Some((total, all, cycle.clone(), coc)),
                Some((bt, bids, _, _)) => {
                    if total < *bt {
                        *second = *bt;
                        *best = Some((total, all, cycle.clone(), coc));
                    } else if all != *bids {
                        *second = second.min(total);
                    }
                }
            }
            // runner-up with the same cycle: forbid each forest edge
            for &skip in &fids {
                if let Some((ft2, _)) = min_forest_into_cycle(g, &cycle, Some(skip)) {
                    *second = second.min(cw + ft2);
                }
            }
        }
    }
    Ok(())
}

fn exhaustive_functional(
    g: &WeightedDigraph,
    choices: &[Vec<usize>],
    v: usize,
    assignment: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]),
) {
    if v == choices.len() {
        f(assignment);
        return;
    }
    for &eid in &choices[v] {
        assignment[v] = eid;
        exhaustive_functional(g, choices, v + 1, assignment, f);
    }
}

/// Minimum-weight in-forest from the vertices outside `cycle` into the cycle
/// vertex set: contract the cycle to a supernode and find the arborescence.
fn min_forest_into_cycle(
    g: &WeightedDigraph,
    cycle: &[usize],
    forbid: Option<usize>,
) -> Option<(f64, Vec<usize>)> {
    let n = g.n_vertices;
    let mut in_cycle = vec![false; n];
    for &eid in cycle {
        in_cycle[g.edges[eid].src] = true;
        in_cycle[g.edges[eid].tgt] = true;
    }
    let mut map = vec![usize::MAX; n];
    let mut next = 0usize;
    for v in 0..n {
        if !in_cycle[v] {
            map[v] = next;
            next += 1;
        }
    }
    let super_node = next;
    for v in 0..n {
        if in_cycle[v] {
            map[v] = super_node;
        }
    }
    if next == 0 {
        return Some((0.0, Vec::new())); // cycle spans all vertices
    }
    let rev: Vec<ArbEdge> = g
        .edges
        .iter()
        .filter(|e| {
            e.weight.is_finite()
                && Some(e.id) != forbid
                && !in_cycle[e.src]
        })
        .map(|e| ArbEdge {
            from: map[e.tgt],
            to: map[e.src],
            w: e.weight,
            orig: e.id,
        })
        .collect();
    edmonds(super_node + 1, &rev, super_node)
}

/// How the flux-exponent witness set is selected when paired heights tie.
#[derive(Debug, Clone)]
pub enum HstarMode {
    /// Strict inequality h(e) < h(rev e) - tol; ties excluded. When no edge
    /// qualifies the cocycle is exact at graph level and there is no exponent.
    Strict,
    /// Vanishing-tilt limit: when paired heights tie within tolerance, an
    /// edge qualifies if the supplied per-edge direction form is positive.
    ZeroTiltLimit(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct HeightsResult {
    pub root: usize,
    pub tree: Vec<usize>,
    /// h(v): signed -alpha integral along the tree path from the root.
    pub h_vertex: Vec<f64>,
    /// h(e) = h(source) + weight(e).
    pub h_edge: Vec<f64>,
    pub hstar: f64,
    pub witness: usize,
}

/// Vertex and edge heights over the unique minimal rooted spanning tree:
/// h(v) is the signed alpha-integral along the tree path from the root to v,
/// and h(e) = h(source) + weight(e). Requires full reversal pairing and edge
/// cocycles equal to the alpha line integrals.
pub fn tree_heights(g: &WeightedDigraph) -> Result<(TreeResult, Vec<f64>, Vec<f64>)> {
    g.validate()?;
    for e in &g.edges {
        if e.reversal.is_none() {
            return Err(FluxError::InvalidSpec(format!(
                "heights need reversal pairing; edge {} lacks one",
                e.id
            )));
        }
    }
    let t = min_rooted_spanning_tree(g, None)?;
    if !t.unique {
        return Err(FluxError::AmbiguousMinimum {
            gap: t.runner_up_gap,
        });
    }
    let n = g.n_vertices;
    let mut tree_out = vec![usize::MAX; n];
    for &eid in &t.tree {
        tree_out[g.edges[eid].src] = eid;
    }
    // h(v) = sum of cocycle over the path v -> root in the tree:
    // each tree edge e' traversed root-ward from v contributes alpha(e').
    let mut h_vertex = vec![f64::NAN; n];
    h_vertex[t.root] = 0.0;
    for v in 0..n {
        if !h_vertex[v].is_nan() {
            continue;
        }
        let mut stack = vec![v];
        let mut cur = v;
        while h_vertex[cur].is_nan() {
            cur = g.edges[tree_out[cur]].tgt;
            if h_vertex[cur].is_nan() {
                stack.push(cur);
            }
        }
        while let Some(u) = stack.pop() {
            let e = &g.edges[tree_out[u]];
            h_vertex[u] = h_vertex[e.tgt] + e.cocycle;
        }
    }
    let h_edge: Vec<f64> = g
        .edges
        .iter()
        .map(|e| h_vertex[e.src] + e.weight)
        .collect();
    Ok((t, h_vertex, h_edge))
}

/// Heights plus the flux exponent h* = min { h(e) : h(e) < h(reversal) }.
pub fn heights_and_hstar(g: &WeightedDigraph, mode: &HstarMode) -> Result<HeightsResult> {
    let (t, h_vertex, h_edge) = tree_heights(g)?;

    let mut best: Option<(f64, usize)> = None;
    for e in &g.edges {
        if !e.weight.is_finite() {
            continue;
        }
        let rev = e.reversal.unwrap();
        let he = h_edge[e.id];
        let hrev = h_edge[rev];
        let qualifies = if he < hrev - TIE_TOL {
            true
        } else {
            match mode {
                HstarMode::Strict => false,
                HstarMode::ZeroTiltLimit(beta) => {
                    (he - hrev).abs() <= TIE_TOL && beta[e.id] > TIE_TOL
                }
            }
        };
        if qualifies && best.map_or(true, |(b, _)| he < b) {
            best = Some((he, e.id));
        }
    }
    let (hstar, witness) = best.ok_or(FluxError::ExactFormNoFlux)?;
    Ok(HeightsResult {
        root: t.root,
        tree: t.tree,
        h_vertex,
        h_edge,
        hstar,
        witness,
    })
}

#[derive(Debug, Clone)]
pub struct Theorem5Result {
    /// plus_total - rst_total, present when the assumption holds.
    pub exponent: Option<f64>,
    pub assumption_holds: bool,
    pub plus_total: f64,
    /// +inf when no negative-cycle CRST exists.
    pub minus_total: f64,
    pub rst_total: f64,
}

/// Flux exponent from the cycle-rooted tree formula on a finite graph:
/// (min CRST total over positive-cocycle cycles) - (min RST total), valid
/// when the positive minimum beats the negative one.
pub fn theorem5_exponent(g: &WeightedDigraph) -> Result<Theorem5Result> {
    let rst = min_rooted_spanning_tree(g, None)?;
    let plus = min_cycle_rooted_spanning_tree(g, CycleSign::Positive)?;
    let minus_total = match min_cycle_rooted_spanning_tree(g, CycleSign::Negative) {
        Ok(r) => r.total_weight,
        Err(FluxError::NoSignedCycle { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let holds = plus.total_weight < minus_total - TIE_TOL;
    if !holds {
        return Err(FluxError::AssumptionViolated {
            plus: plus.total_weight,
            minus: minus_total,
        });
    }
    Ok(Theorem5Result {
        exponent: Some(plus.total_weight - rst.total_weight),
        assumption_holds: true,
        plus_total: plus.total_weight,
        minus_total,
        rst_total: rst.total_weight,
    })
}

/// Stationary distribution of a finite Markov chain by the tree formula:
/// pi(v) is proportional to the sum over in-arborescences rooted at v of the
/// product of edge probabilities.
pub fn markov_tree_stationary(g: &WeightedDigraph) -> Result<Vec<f64>> {
    g.validate()?;
    let n = g.n_vertices;
    for v in 0..n {
        let sum: f64 = g
            .edges
            .iter()
            .filter(|e| e.src == v)
            .map(|e| e.weight)
            .sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(FluxError::NotStochastic { row: v, sum });
        }
    }
    if !g.is_strongly_connected() {
        return Err(FluxError::ReducibleChain);
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // self-loops never appear in arborescences, so they drop out up front
    let mut weights = vec![0.0; n];
    let mut small_ok = true;
    for (v, w) in weights.iter_mut().enumerate() {
        let mut acc = 0.0;
        let done = for_each_in_arborescence(g, v, &mut |ids| {
            acc += ids.iter().map(|&i| g.edges[i].weight).product::<f64>();
        });
        if !done {
            small_ok = false;
            break;
        }
        *w = acc;
    }
    if !small_ok {
        // matrix-tree route: weighted in-tree sums are principal minors of
        // the out-degree Laplacian L = D_out - W
        for v in 0..n {
            weights[v] = laplacian_minor(g, v);
        }
    }
    let z: f64 = weights.iter().sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(FluxError::ReducibleChain);
    }
    Ok(weights.into_iter().map(|w| w / z).collect())
}

fn laplacian_minor(g: &WeightedDigraph, v: usize) -> f64 {
    let n = g.n_vertices;
    let m = n - 1;
    let keep: Vec<usize> = (0..n).filter(|&u| u != v).collect();
    let pos = |u: usize| keep.iter().position(|&k| k == u);
    let mut a = vec![0.0; m * m];
    for e in &g.edges {
        if e.src == e.tgt {
            continue;
        }
        if let Some(i) = pos(e.src) {
            a[i * m + i] += e.weight;
            if let Some(j) = pos(e.tgt) {
                a[i * m + j] -= e.weight;
            }
        }
    }
    // LU determinant with partial pivoting
    let mut det = 1.0;
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if a[piv * m + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for k in 0..m {
                a.swap(col * m + k, piv * m + k);
            }
            det = -det;
        }
        det *= a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / a[col * m + col];
            for k in col..m {
                a[r * m + k] -= f * a[col * m + k];
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The two-vertex counterexample graph with loop edges: min RST 6 via e1,
    /// positive-cycle CRST 8 via gains 7 + 1, negative 9, h* = h(e4) = 5.
    pub fn counterexample_graph_a() -> WeightedDigraph {
        let mut g = WeightedDigraph::new(2);
        // e1: v2 -> v1 gain 6, reversal gain 11
        g.add_edge_pair(1, 0, 6.0, 11.0, 5.0);
        // e2: v1 -> v2 gain 7, reversal gain 8
        g.add_edge_pair(0, 1, 7.0, 8.0, 1.0);
        // e3: loop at v2, gains 1 / 2
        g.add_edge_pair(1, 1, 1.0, 2.0, 1.0);
        // e4: loop at v1, gains 5 / 7
        g.add_edge_pair(0, 0, 5.0, 7.0, 2.0);
        g
    }

    /// Three-vertex truncation with a cheap plateau path: the tree route and
    /// the path-class route disagree, and the exponent is 1e6 + 999.
    pub fn counterexample_graph_b() -> WeightedDigraph {
        let mut g = WeightedDigraph::new(3);
        g.add_edge(2, 0, 100.0, 0.0); // phi1
        g.add_edge(2, 1, 1000.0, 0.0); // phi2 (plateau)
        g.add_edge(0, 2, 5.0, 0.0); // phi3
        g.add_edge(1, 0, 1099.0 + 1.0e6, 0.0); // phi4 (barrier)
        g.add_edge(2, 0, 900.0, 100.0); // phi5 (wraps +x)
        g.add_edge(0, 2, 905.0, -100.0); // phi6 (wraps -x)
        g
    }

    #[test]
    fn single_vertex_tree_is_empty() {
        let g = WeightedDigraph::new(1);
        let t = min_rooted_spanning_tree(&g, None).unwrap();
        assert!(t.tree.is_empty());
        assert_eq!(t.root, 0);
        assert_eq!(t.total_weight, 0.0);
        assert!(t.unique);
    }

    #[test]
    fn counterexample_a_rst() {
        let g = counterexample_graph_a();
        let t = min_rooted_spanning_tree(&g, None).unwrap();
        assert_eq!(t.total_weight, 6.0);
        assert_eq!(t.tree, vec![0]); // e1
        assert_eq!(t.root, 0);
        assert!(t.unique);
        assert_eq!(t.runner_up_gap, 1.0); // runner-up is {e2} with weight 7
    }

    #[test]
    fn counterexample_a_crst() {
        let g = counterexample_graph_a();
        let plus = min_cycle_rooted_spanning_tree(&g, CycleSign::Positive).unwrap();
        assert_eq!(plus.total_weight, 8.0);
        let mut got = plus.edges.clone();
        got.sort_unstable();
        assert_eq!(got, vec![2, 4]); // e2 and the positive loop e3
        assert_eq!(plus.cycle, vec![4]);
        assert!(plus.unique);
        let minus = min_cycle_rooted_spanning_tree(&g, CycleSign::Negative).unwrap();
        assert_eq!(minus.total_weight, 9.0);
        assert!(minus.unique);
    }

    #[test]
    fn counterexample_a_theorem5_and_heights() {
        let g = counterexample_graph_a();
        let th = theorem5_exponent(&g).unwrap();
        assert!(th.assumption_holds);
        assert_eq!(th.exponent, Some(2.0));
        assert_eq!(th.plus_total, 8.0);
        assert_eq!(th.minus_total, 9.0);
        assert_eq!(th.rst_total, 6.0);

        let h = heights_and_hstar(&g, &HstarMode::Strict).unwrap();
        assert_eq!(h.root, 0);
        assert_eq!(h.h_vertex, vec![0.0, 5.0]);
        assert_eq!(h.hstar, 5.0);
        assert_eq!(h.witness, 6); // the v1 loop, forward direction
        // heights are nonnegative on vertices, positive on edges
        for &hv in &h.h_vertex {
            assert!(hv >= -1e-12);
        }
        for &he in &h.h_edge {
            assert!(he >= 1e-12);
        }
    }

    #[test]
    fn counterexample_b_exponent() {
        let g = counterexample_graph_b();
        let rst = min_rooted_spanning_tree(&g, None).unwrap();
        assert_eq!(rst.total_weight, 1005.0);
        assert_eq!(rst.root, 1);
        assert!(rst.unique);
        let th = theorem5_exponent(&g).unwrap();
        assert!(th.assumption_holds);
        assert_eq!(th.plus_total, 5.0 + 900.0 + 1099.0 + 1.0e6);
        assert_eq!(th.minus_total, 100.0 + 905.0 + 1099.0 + 1.0e6);
        assert_eq!(th.exponent, Some(1.0e6 + 999.0));
    }

    /// 1D two-well circle data: the tree route height disagrees with the
    /// per-root tree difference, which is the measure-asymptotics route.
    #[test]
    fn counterexample_c_heights_vs_measure_route() {
        // U~ values: U(v2)=0, U(1)=1, U(v1)=2, U(m)=4, U(0)=6 (period drop 5)
        let mut g = WeightedDigraph::new(2); // v1 = 0, v2 = 1
        // e1 through the boundary maximum: v2 -> v1, gain U(1)-U(v2)=1,
        // reversal gain U(0)-U(v1)=4
        g.add_edge_pair(1, 0, 1.0, 4.0, 3.0);
        // e2 through the interior maximum m: v1 -> v2, gain U(m)-U(v1)=2,
        // reversal gain U(m)-U(v2)=4
        g.add_edge_pair(0, 1, 2.0, 4.0, 2.0);
        let h = heights_and_hstar(&g, &HstarMode::Strict).unwrap();
        assert_eq!(h.root, 0);
        assert_eq!(h.h_vertex[1], 3.0); // height route: U(0)-U(v1)-(U(1)-U(v2))
        // measure route: min RST rooted at v2 minus global min RST
        let at_v2 = min_rooted_spanning_tree(&g, Some(1)).unwrap();
        let global = min_rooted_spanning_tree(&g, None).unwrap();
        let measure_exponent = at_v2.total_weight - global.total_weight;
        assert_eq!(measure_exponent, 1.0);
        // the two routes genuinely disagree on this graph
        assert!((h.h_vertex[1] - measure_exponent).abs() > 1.0);
    }

    #[test]
    fn exact_cocycle_has_no_exponent() {
        // gradient data: U(v1)=0, U(v2)=1, connecting saddle at 3, loop saddle
        // at 2.5 over v1; every height pair ties, so no exponent exists
        let mut g = WeightedDigraph::new(2);
        g.add_edge_pair(1, 0, 2.0, 3.0, 1.0);
        g.add_edge_pair(0, 0, 2.5, 2.5, 0.0);
        assert!(matches!(
            heights_and_hstar(&g, &HstarMode::Strict),
            Err(FluxError::ExactFormNoFlux)
        ));
    }

    #[test]
    fn zero_tilt_limit_uses_direction_form() {
        // gains 2,2,4,4 at exactly zero tilt, windings +-1 on both pairs
        let mut g = WeightedDigraph::new(1);
        let tau = 2.0 * std::f64::consts::PI;
        g.add_edge_pair(0, 0, 2.0, 2.0, 0.0);
        g.add_edge_pair(0, 0, 4.0, 4.0, 0.0);
        let beta = vec![tau, -tau, -tau, tau];
        let h = heights_and_hstar(&g, &HstarMode::ZeroTiltLimit(beta)).unwrap();
        assert_eq!(h.hstar, 2.0);
        assert_eq!(h.witness, 0);
    }

    #[test]
    fn markov_two_state_closed_form() {
        let (p, q) = (0.3, 0.2);
        let mut g = WeightedDigraph::new(2);
        g.add_edge(0, 1, p, 0.0);
        g.add_edge(0, 0, 1.0 - p, 0.0);
        g.add_edge(1, 0, q, 0.0);
        g.add_edge(1, 1, 1.0 - q, 0.0);
        let pi = markov_tree_stationary(&g).unwrap();
        assert!((pi[0] - q / (p + q)).abs() < 1e-15);
        assert!((pi[1] - p / (p + q)).abs() < 1e-15);
    }

    #[test]
    fn markov_uniform_three_state() {
        let mut g = WeightedDigraph::new(3);
        for i in 0..3usize {
            for j in 0..3usize {
                if i != j {
                    g.add_edge(i, j, 0.5, 0.0);
                }
            }
        }
        let pi = markov_tree_stationary(&g).unwrap();
        for &p in &pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn markov_rejects_bad_rows_and_reducible() {
        let mut g = WeightedDigraph::new(2);
        g.add_edge(0, 1, 0.5, 0.0);
        g.add_edge(1, 0, 1.0, 0.0);
        assert!(matches!(
            markov_tree_stationary(&g),
            Err(FluxError::NotStochastic { .. })
        ));
        let mut g = WeightedDigraph::new(2);
        g.add_edge(0, 0, 1.0, 0.0);
        g.add_edge(1, 0, 1.0, 0.0);
        assert!(matches!(
            markov_tree_stationary(&g),
            Err(FluxError::ReducibleChain)
        ));
    }

    #[test]
    fn empty_graph_no_arborescence() {
        let g = WeightedDigraph::new(0);
        assert!(matches!(
            min_rooted_spanning_tree(&g, None),
            Err(FluxError::NoArborescence(_))
        ));
    }

    #[test]
    fn infinite_weights_excluded() {
        let mut g = WeightedDigraph::new(2);
        g.add_edge(1, 0, f64::INFINITY, 0.0);
        g.add_edge(1, 0, 3.0, 0.0);
        g.add_edge(0, 1, 4.0, 0.0);
        let t = min_rooted_spanning_tree(&g, None).unwrap();
        assert_eq!(t.total_weight, 3.0);
    }

    fn random_graph(seed: u64, n: usize, m: usize) -> WeightedDigraph {
        let mut g = WeightedDigraph::new(n);
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..m {
            let s = (next() % n as u64) as usize;
            let t = (next() % n as u64) as usize;
            let w = (next() % 1000) as f64 / 100.0;
            let c = ((next() % 19) as f64 - 9.0) / 3.0;
            g.add_edge(s, t, w, c);
        }
        g
    }

    /// Brute-force oracle: enumerate every out-degree-one subgraph and keep
    /// the admissible minimum.
    fn brute_force_crst(g: &WeightedDigraph, sign: CycleSign) -> Option<f64> {
        let n = g.n_vertices;
        let choices: Vec<Vec<usize>> = (0..n).map(|v| g.out_choices_with_loops(v)).collect();
        if choices.iter().any(|c| c.is_empty()) {
            return None;
        }
        let mut best: Option<f64> = None;
        let mut assignment = vec![0usize; n];
        fn rec(
            g: &WeightedDigraph,
            choices: &[Vec<usize>],
            v: usize,
            assignment: &mut Vec<usize>,
            sign: CycleSign,
            best: &mut Option<f64>,
        ) {
            if v == choices.len() {
                if let Some(cycle) = functional_cycle(g, assignment) {
                    let coc: f64 = cycle.iter().map(|&i| g.edges[i].cocycle).sum();
                    if sign.admits(coc) {
                        let total = tree_total(g, assignment);
                        if best.map_or(true, |b| total < b) {
                            *best = Some(total);
                        }
                    }
                }
                return;
            }
            for &eid in &choices[v] {
                assignment[v] = eid;
                rec(g, choices, v + 1, assignment, sign, best);
            }
        }
        rec(g, &choices, 0, &mut assignment, sign, &mut best);
        best
    }

    fn brute_force_rst(g: &WeightedDigraph, root: Option<usize>) -> Option<f64> {
        let roots: Vec<usize> = match root {
            Some(r) => vec![r],
            None => (0..g.n_vertices).collect(),
        };
        let mut best: Option<f64> = None;
        for r in roots {
            for_each_in_arborescence(g, r, &mut |ids| {
                let t = tree_total(g, ids);
                if best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
            });
        }
        best
    }

    #[test]
    fn random_multigraphs_match_brute_force() {
        for seed in 0..48u64 {
            // sizes up to 8 vertices / 16 edges
            let n = if seed < 40 { 4 + (seed % 3) as usize } else { 8 };
            let m = if seed < 40 { 10 + (seed % 7) as usize } else { 16 };
            let g = random_graph(seed, n, m);
            let oracle = brute_force_rst(&g, None);
            match min_rooted_spanning_tree(&g, None) {
                Ok(t) => {
                    let o = oracle.expect("oracle should also find a tree");
                    assert!(
                        (t.total_weight - o).abs() < 1e-12,
                        "seed {seed}: {} vs oracle {o}",
                        t.total_weight
                    );
                }
                Err(_) => assert!(oracle.is_none(), "seed {seed}: solver failed, oracle did not"),
            }
            for sign in [CycleSign::Positive, CycleSign::Negative] {
                let oracle = brute_force_crst(&g, sign);
                match min_cycle_rooted_spanning_tree(&g, sign) {
                    Ok(c) => {
                        let o = oracle.expect("oracle agrees a CRST exists");
                        assert!(
                            (c.total_weight - o).abs() < 1e-12,
                            "seed {seed} sign {sign:?}: {} vs {o}",
                            c.total_weight
                        );
                    }
                    Err(_) => assert!(oracle.is_none(), "seed {seed} sign {sign:?}"),
                }
            }
        }
    }

    #[test]
    fn cycle_enumeration_crst_matches_exhaustive() {
        for seed in 200..240u64 {
            let g = random_graph(seed, 4 + (seed % 3) as usize, 9 + (seed % 8) as usize);
            for sign in [CycleSign::Positive, CycleSign::Negative] {
                let oracle = brute_force_crst(&g, sign);
                let mut best = None;
                let mut second = f64::INFINITY;
                crst_via_cycle_enumeration(&g, sign, &mut best, &mut second).unwrap();
                match (oracle, best) {
                    (Some(o), Some((total, all, cycle, _))) => {
                        assert!(
                            (o - total).abs() < 1e-12,
                            "seed {seed} {sign:?}: {total} vs oracle {o}"
                        );
                        assert_eq!(all.len(), g.n_vertices);
                        assert!(functional_cycle(&g, &all).is_some());
                        assert!(!cycle.is_empty());
                    }
                    (None, None) => {}
                    (o, b) => panic!("seed {seed} {sign:?}: oracle {o:?} vs general {:?}", b.map(|x| x.0)),
                }
            }
        }
    }

    #[test]
    fn edmonds_agrees_with_enumeration_on_larger_graphs() {
        for seed in 100..112u64 {
            let g = random_graph(seed, 6, 18);
            for root in 0..6 {
                let oracle = brute_force_rst(&g, Some(root));
                let no_forbidden = vec![false; g.edges.len()];
                let ed = edmonds_in_arborescence(&g, root, &no_forbidden);
                match (oracle, ed) {
                    (Some(o), Some((t, ids))) => {
                        assert!((o - t).abs() < 1e-12, "seed {seed} root {root}");
                        assert_eq!(ids.len(), 5);
                        assert!((tree_total(&g, &ids) - t).abs() < 1e-12);
                    }
                    (None, None) => {}
                    (o, e) => panic!(
                        "seed {seed} root {root}: oracle {o:?} vs edmonds {:?}",
                        e.map(|x| x.0)
                    ),
                }
            }
        }
    }

    #[test]
    fn markov_random_chains_match_eigenvector() {
        let mut state = 0xabcdef12345u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..25 {
            let n = 4;
            let mut rows = vec![vec![0.0; n]; n];
            for r in rows.iter_mut() {
                let mut sum = 0.0;
                for x in r.iter_mut() {
                    *x = next() + 0.02;
                    sum += *x;
                }
                for x in r.iter_mut() {
                    *x /= sum;
                }
            }
            let mut g = WeightedDigraph::new(n);
            for (i, row) in rows.iter().enumerate() {
                for (j, &w) in row.iter().enumerate() {
                    g.add_edge(i, j, w, 0.0);
                }
            }
            let pi = markov_tree_stationary(&g).unwrap();
            // oracle: fixed point by repeated squaring of the transition
            // matrix, renormalized against rounding drift
            let mut p = rows.clone();
            for _ in 0..30 {
                let mut q = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for k in 0..n {
                        let pik = p[i][k];
                        for j in 0..n {
                            q[i][j] += pik * p[k][j];
                        }
                    }
                }
                for r in q.iter_mut() {
                    let s: f64 = r.iter().sum();
                    for x in r.iter_mut() {
                        *x /= s;
                    }
                }
                p = q;
            }
            for j in 0..n {
                assert!((pi[j] - p[0][j]).abs() < 1e-12, "pi {pi:?} vs {:?}", p[0]);
            }
            // fixed-point property
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += pi[i] * rows[i][j];
                }
                assert!((acc - pi[j]).abs() < 1e-12);
            }
        }
    }
}
