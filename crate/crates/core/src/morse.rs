//! Morse graphs of tilted drifts: sinks as vertices, unstable manifolds of
//! index-1 zeros as edges, decorated with gains and winding classes.
//!
//! Each saddle contributes one undirected edge traced by integrating the
//! drift forward from both sides of the unstable eigenvector, and two
//! directed edges (one per orientation). The gain of a directed edge is the
//! uphill barrier from its source vertex to the saddle; it is computed as a
//! primitive difference of the lifted tilted potential at the exact critical
//! lifts, which is exact because the drift form is exact on the cover.

use rayon::prelude::*;

use crate::critical::{unstable_direction, CriticalPoint};
use crate::error::{FluxError, Result};
use crate::fields::{add, norm, scale, Point, TiltedDrift};
use crate::trees::{Edge, WeightedDigraph};

/// Offset of the initial condition along the unstable eigenvector, in units
/// of the minimal period.
pub const UNSTABLE_OFFSET_REL: f64 = 1e-6;
/// Integrator step, in units of the minimal period (arc length per step).
pub const TRACE_STEP_REL: f64 = 1e-3;
/// Trapping radius around sinks, in units of the minimal period.
pub const TRAP_RADIUS_REL: f64 = 1e-3;
/// Hard cap on integration steps per half-edge.
pub const TRACE_MAX_STEPS: usize = 4_000_000;

/// A directed Morse edge. `source` and `target` index into the vertex list.
#[derive(Debug, Clone)]
pub struct MorseEdge<const D: usize> {
    pub id: usize,
    pub source: usize,
    pub target: usize,
    /// The index-1 zero this edge passes through.
    pub saddle: CriticalPoint<D>,
    /// Barrier from the source vertex up to the saddle along this edge, > 0.
    pub gain: f64,
    /// Integer homology class of the directed edge's lift displacement
    /// (periods per axis), relative to canonical vertex positions.
    pub winding: [i32; D],
    /// Deck index of the source lift reached by the tracer, relative to the
    /// saddle's canonical position.
    pub source_lift: [i32; D],
    pub reversal_id: usize,
}

/// Morse graph: index-0 zeros and saddle edges with both orientations.
#[derive(Debug, Clone)]
pub struct MorseGraph<const D: usize> {
    pub vertices: Vec<CriticalPoint<D>>,
    pub edges: Vec<MorseEdge<D>>,
}

impl<const D: usize> MorseGraph<D> {
    /// Number of undirected edges (saddles).
    pub fn undirected_count(&self) -> usize {
        self.edges.len() / 2
    }

    /// Undirected pairing: maps a directed edge id to its saddle-identified
    /// undirected edge (the saddle order index).
    pub fn undirected_id(&self, edge_id: usize) -> usize {
        edge_id / 2
    }

    /// Line integral of the drift one-form along a directed edge:
    /// `alpha(e) = g(reversal) - g(e)`.
    pub fn edge_cocycle(&self, edge_id: usize) -> f64 {
        let e = &self.edges[edge_id];
        self.edges[e.reversal_id].gain - e.gain
    }

    /// View as a weighted digraph for tree optimization: weights are gains,
    /// cocycle values are drift-form integrals.
    pub fn to_digraph(&self) -> WeightedDigraph {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                id: e.id,
                src: e.source,
                tgt: e.target,
                weight: e.gain,
                cocycle: self.edge_cocycle(e.id),
                reversal: Some(e.reversal_id),
            })
            .collect();
        WeightedDigraph {
            n_vertices: self.vertices.len(),
            vertex_names: (0..self.vertices.len()).map(|i| format!("v{i}")).collect(),
            edges,
        }
    }
}

struct HalfTrace {
    vertex: usize,
    /// Cover endpoint of the trace (exact vertex lift).
    lift: [f64; 2],
    /// Deck index of the reached lift relative to the vertex's canonical position.
    deck: [i32; 2],
}

/// Integrate the drift forward from `start` (a cover point) until trapped by
/// a sink. Returns the reached vertex and its deck translation.
fn trace_to_sink(
    drift: &TiltedDrift<2>,
    start: Point<2>,
    sinks: &[&CriticalPoint<2>],
) -> Result<HalfTrace> {
    let torus = drift.torus();
    let lmin = torus.min_period();
    let arc = TRACE_STEP_REL * lmin;
    let mut r_trap = TRAP_RADIUS_REL * lmin;
    let mut x = start;
    let mut budget = TRACE_MAX_STEPS;
    let mut retries = 0;
    loop {
        for step in 0..budget {
            let near: Vec<usize> = sinks
                .iter()
                .enumerate()
                .filter(|(_, s)| torus.distance(torus.wrap(x), s.position) < r_trap)
                .map(|(i, _)| i)
                .collect();
            match near.len() {
                0 => {}
                1 => {
                    let s = sinks[near[0]];
                    let mut deck = [0i32; 2];
                    let mut lift = s.position;
                    for i in 0..2 {
                        let k = ((x[i] - s.position[i]) / torus.periods()[i]).round();
                        deck[i] = k as i32;
                        lift[i] += k * torus.periods()[i];
                    }
                    return Ok(HalfTrace {
                        vertex: near[0],
                        lift,
                        deck,
                    });
                }
                _ => {
                    // two sinks inside the trapping ball: shrink and keep flowing
                    if retries >= 3 {
                        return Err(FluxError::AmbiguousTarget {
                            saddle: start.to_vec(),
                        });
                    }
                    retries += 1;
                    r_trap /= 10.0;
                    budget = budget.saturating_mul(10);
                    break;
                }
            }
            let speed = norm(drift.eval(x)).max(1e-12);
            let dt = arc / speed.max(1.0);
            // classical RK4
            let k1 = drift.eval(x);
            let k2 = drift.eval(add(x, scale(k1, dt / 2.0)));
            let k3 = drift.eval(add(x, scale(k2, dt / 2.0)));
            let k4 = drift.eval(add(x, scale(k3, dt)));
            for i in 0..2 {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if step + 1 == budget {
                return Err(FluxError::EscapeTimeout {
                    saddle: start.to_vec(),
                });
            }
        }
    }
}

/// Build the Morse graph of a 2D tilted drift from its classified zeros.
pub fn build_morse_graph(
    drift: &TiltedDrift<2>,
    cps: &[CriticalPoint<2>],
) -> Result<MorseGraph<2>> {
    let vertices: Vec<CriticalPoint<2>> =
        cps.iter().filter(|c| c.index == 0).cloned().collect();
    let saddles: Vec<&CriticalPoint<2>> = cps.iter().filter(|c| c.index == 1).collect();
    if vertices.is_empty() {
        return Err(FluxError::InvalidSpec(
            "drift has no index-0 zeros; Morse graph undefined".into(),
        ));
    }
    let sink_refs: Vec<&CriticalPoint<2>> = vertices.iter().collect();
    let delta = UNSTABLE_OFFSET_REL * drift.torus().min_period();

    let halves: Result<Vec<(HalfTrace, HalfTrace)>> = saddles
        .par_iter()
        .map(|saddle| {
            let u = unstable_direction(saddle)?;
            let plus = trace_to_sink(drift, add(saddle.position, scale(u, delta)), &sink_refs)?;
            let minus = trace_to_sink(drift, add(saddle.position, scale(u, -delta)), &sink_refs)?;
            Ok((plus, minus))
        })
        .collect();
    let halves = halves?;

    let mut edges = Vec::with_capacity(2 * saddles.len());
    for (si, saddle) in saddles.iter().enumerate() {
        let (plus, minus) = &halves[si];
        let id_fwd = 2 * si;
        let id_rev = 2 * si + 1;
        // forward edge: source = sink reached on the + side, target = - side.
        // its lift runs from plus.lift up through the saddle and down to minus.lift.
        let gain_fwd = saddle.tilted_value - drift.lifted_potential(plus.lift);
        let gain_rev = saddle.tilted_value - drift.lifted_potential(minus.lift);
        let mut wind_fwd = [0i32; 2];
        for i in 0..2 {
            wind_fwd[i] = minus.deck[i] - plus.deck[i];
        }
        edges.push(MorseEdge {
            id: id_fwd,
            source: plus.vertex,
            target: minus.vertex,
            saddle: (*saddle).clone(),
            gain: gain_fwd,
            winding: wind_fwd,
            source_lift: plus.deck,
            reversal_id: id_rev,
        });
        edges.push(MorseEdge {
            id: id_rev,
            source: minus.vertex,
            target: plus.vertex,
            saddle: (*saddle).clone(),
            gain: gain_rev,
            winding: [-wind_fwd[0], -wind_fwd[1]],
            source_lift: minus.deck,
            reversal_id: id_fwd,
        });
    }

    for e in &edges {
        if e.gain <= 0.0 {
            return Err(FluxError::InvalidSpec(format!(
                "nonpositive gain {} on edge {}; tracer or classification failure",
                e.gain, e.id
            )));
        }
    }

    // connectivity of the undirected graph
    let mut comp: Vec<usize> = (0..vertices.len()).collect();
    fn find(comp: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while comp[r] != r {
            r = comp[r];
        }
        let mut j = i;
        while comp[j] != r {
            let next = comp[j];
            comp[j] = r;
            j = next;
        }
        r
    }
    for e in &edges {
        let a = find(&mut comp, e.source);
        let b = find(&mut comp, e.target);
        comp[a] = b;
    }
    let root0 = find(&mut comp, 0);
    for i in 1..vertices.len() {
        if find(&mut comp, i) != root0 {
            return Err(FluxError::DisconnectedGraph);
        }
    }

    Ok(MorseGraph { vertices, edges })
}

/// Build the Morse graph of a 1D tilted drift by ordering its zeros along
/// the circle: maxima are the saddles, each joining its flanking minima.
pub fn build_morse_graph_1d(
    drift: &TiltedDrift<1>,
    cps: &[CriticalPoint<1>],
) -> Result<MorseGraph<1>> {
    let period = drift.torus().periods()[0];
    let mut sorted: Vec<&CriticalPoint<1>> = cps.iter().collect();
    sorted.sort_by(|a, b| a.position[0].partial_cmp(&b.position[0]).unwrap());
    if sorted.is_empty() || sorted.len() % 2 != 0 {
        return Err(FluxError::IncompleteSweep {
            sum: 0,
            count: sorted.len(),
        });
    }
    // rotate so the sequence starts with a minimum
    let start = sorted
        .iter()
        .position(|c| c.index == 0)
        .ok_or(FluxError::DisconnectedGraph)?;
    sorted.rotate_left(start);
    let n = sorted.len() / 2;
    let mut vertices = Vec::with_capacity(n);
    let mut maxima = Vec::with_capacity(n);
    for (k, cp) in sorted.iter().enumerate() {
        let expect_index = k % 2;
        if cp.index != expect_index {
            return Err(FluxError::InvalidSpec(
                "1D zeros do not alternate min/max; non-Morse data".into(),
            ));
        }
        if expect_index == 0 {
            vertices.push((*cp).clone());
        } else {
            maxima.push((*cp).clone());
        }
    }

    let mut edges = Vec::with_capacity(2 * n);
    for (k, saddle) in maxima.iter().enumerate() {
        // saddle k sits between vertex k (left) and vertex (k+1) mod n (right);
        // if the saddle position precedes its left vertex, it is the wrap edge.
        let left = k;
        let right = (k + 1) % n;
        let wraps = right == 0;
        let saddle_lift = if saddle.position[0] < vertices[left].position[0] {
            // saddle wrapped past the period boundary
            saddle.position[0] + period
        } else {
            saddle.position[0]
        };
        let saddle_value = drift.lifted_potential([saddle_lift]);
        let left_lift = vertices[left].position[0];
        let right_lift = if wraps {
            vertices[right].position[0] + period
        } else {
            vertices[right].position[0]
        };
        let id_fwd = 2 * k;
        let id_rev = 2 * k + 1;
        let gain_fwd = saddle_value - drift.lifted_potential([left_lift]);
        let gain_rev = saddle_value - drift.lifted_potential([right_lift]);
        let w = if wraps { 1 } else { 0 };
        edges.push(MorseEdge {
            id: id_fwd,
            source: left,
            target: right,
            saddle: saddle.clone(),
            gain: gain_fwd,
            winding: [w],
            source_lift: [0],
            reversal_id: id_rev,
        });
        edges.push(MorseEdge {
            id: id_rev,
            source: right,
            target: left,
            saddle: saddle.clone(),
            gain: gain_rev,
            winding: [-w],
            source_lift: [if wraps { 1 } else { 0 }],
            reversal_id: id_fwd,
        });
    }

    for e in &edges {
        if e.gain <= 0.0 {
            return Err(FluxError::InvalidSpec(format!(
                "nonpositive 1D gain {} on edge {}",
                e.gain, e.id
            )));
        }
    }

    Ok(MorseGraph { vertices, edges })
}

/// Report from re-checking gains against primitive differences of the tilted
/// potential at independently refined critical points.
#[derive(Debug, Clone)]
pub struct GainCheck {
    pub max_residual: f64,
    pub per_edge: Vec<f64>,
}

/// Assert `|gain(e) - (U~(saddle) - U~(source lift))| < 1e-8` per edge.
pub fn gains_vs_values_check<const D: usize>(
    graph: &MorseGraph<D>,
    drift: &TiltedDrift<D>,
) -> Result<GainCheck> {
    let periods = drift.torus().periods();
    let mut per_edge = Vec::with_capacity(graph.edges.len());
    let mut max_residual: f64 = 0.0;
    for e in &graph.edges {
        let mut source_lift = graph.vertices[e.source].position;
        for i in 0..D {
            source_lift[i] += e.source_lift[i] as f64 * periods[i];
        }
        let expected =
            drift.lifted_potential(e.saddle.position) - drift.lifted_potential(source_lift);
        let residual = (e.gain - expected).abs();
        per_edge.push(residual);
        max_residual = max_residual.max(residual);
        if residual >= 1e-8 {
            return Err(FluxError::GainMismatch {
                edge: e.id,
                residual,
            });
        }
    }
    Ok(GainCheck {
        max_residual,
        per_edge,
    })
}
