//! Edge-list CSV interchange between the Morse-graph builder and the tree
//! optimizer, and for hand-built graphs.
//!
//! Emitted schema (RFC 4180, CRLF):
//! `edge_id,src,tgt,saddle_x,saddle_y,gain,wind_x,wind_y,reversal_id`.
//! The reader additionally accepts `weight` (overrides `gain`) and `cocycle`
//! columns so that path-class truncation graphs can be supplied by hand.
//! Missing cocycles are recovered from reversal pairs as
//! `gain(reversal) - gain(edge)`; `inf` weights are accepted.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{FluxError, Result};
use crate::morse::MorseGraph;
use crate::trees::{Edge, WeightedDigraph};

pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(w)
}

/// Write a Morse graph as an edge-list CSV.
pub fn write_morse_graph_csv<const D: usize, W: Write>(
    graph: &MorseGraph<D>,
    out: W,
) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record([
        "edge_id",
        "src",
        "tgt",
        "saddle_x",
        "saddle_y",
        "gain",
        "wind_x",
        "wind_y",
        "reversal_id",
    ])
    .map_err(io_err)?;
    for e in &graph.edges {
        let sx = e.saddle.position[0];
        let sy = if D > 1 { e.saddle.position[1 % D] } else { 0.0 };
        let wx = e.winding[0];
        let wy = if D > 1 { e.winding[1 % D] } else { 0 };
        w.write_record([
            e.id.to_string(),
            format!("v{}", e.source),
            format!("v{}", e.target),
            sx.to_string(),
            sy.to_string(),
            e.gain.to_string(),
            wx.to_string(),
            wy.to_string(),
            e.reversal_id.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(e: csv::Error) -> FluxError {
    FluxError::InvalidSpec(format!("csv: {e}"))
}

fn parse_weight(s: &str) -> Result<f64> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("+inf") || t == "infinity" {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>()
        .map_err(|_| FluxError::InvalidSpec(format!("bad numeric field '{s}'")))
}

/// Read an edge-list CSV into a weighted digraph. Vertex ids are arbitrary
/// strings, mapped to indices in first-appearance order.
pub fn read_digraph_csv<R: Read>(input: R) -> Result<WeightedDigraph> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers().map_err(io_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (c_src, c_tgt) = match (col("src"), col("tgt")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(FluxError::InvalidSpec(
                "edge CSV needs 'src' and 'tgt' columns".into(),
            ))
        }
    };
    let c_weight = col("weight");
    let c_gain = col("gain");
    if c_weight.is_none() && c_gain.is_none() {
        return Err(FluxError::InvalidSpec(
            "edge CSV needs a 'weight' or 'gain' column".into(),
        ));
    }
    let c_cocycle = col("cocycle");
    let c_rev = col("reversal_id");
    let c_id = col("edge_id");

    let mut vertex_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut rows: Vec<(Option<usize>, usize, usize, f64, Option<f64>, Option<usize>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(io_err)?;
        let mut vid = |name: &str| -> usize {
            if let Some(&i) = vertex_ids.get(name) {
                i
            } else {
                let i = names.len();
                vertex_ids.insert(name.to_string(), i);
                names.push(name.to_string());
                i
            }
        };
        let src = vid(&record[c_src]);
        let tgt = vid(&record[c_tgt]);
        let w = parse_weight(&record[c_weight.or(c_gain).unwrap()])?;
        let cocycle = match c_cocycle {
            Some(c) if !record[c].is_empty() => Some(parse_weight(&record[c])?),
            _ => None,
        };
        let rev = match c_rev {
            Some(c) if !record[c].is_empty() => Some(
                record[c]
                    .parse::<usize>()
                    .map_err(|_| FluxError::InvalidSpec("bad reversal_id".into()))?,
            ),
            _ => None,
        };
        let id = match c_id {
            Some(c) if !record[c].is_empty() => Some(
                record[c]
                    .parse::<usize>()
                    .map_err(|_| FluxError::InvalidSpec("bad edge_id".into()))?,
            ),
            _ => None,
        };
        rows.push((id, src, tgt, w, cocycle, rev));
    }
    if rows.is_empty() {
        return Err(FluxError::NoArborescence(": empty edge file".into()));
    }

    // map declared edge ids to positions so reversal references survive reordering
    let mut id_to_pos: BTreeMap<usize, usize> = BTreeMap::new();
    for (pos, row) in rows.iter().enumerate() {
        let declared = row.0.unwrap_or(pos);
        if id_to_pos.insert(declared, pos).is_some() {
            return Err(FluxError::InvalidSpec(format!(
                "duplicate edge_id {declared}"
            )));
        }
    }
    let mut g = WeightedDigraph {
        n_vertices: names.len(),
        vertex_names: names,
        edges: Vec::with_capacity(rows.len()),
    };
    for (pos, (_, src, tgt, w, cocycle, rev)) in rows.iter().enumerate() {
        let reversal = match rev {
            Some(declared) => Some(*id_to_pos.get(declared).ok_or_else(|| {
                FluxError::InvalidSpec(format!("reversal_id {declared} not present"))
            })?),
            None => None,
        };
        g.edges.push(Edge {
            id: pos,
            src: *src,
            tgt: *tgt,
            weight: *w,
            cocycle: cocycle.unwrap_or(f64::NAN),
            reversal,
        });
    }
    // fill missing cocycles from reversal gains, defaulting to exact (0)
    for i in 0..g.edges.len() {
        if g.edges[i].cocycle.is_nan() {
            g.edges[i].cocycle = match g.edges[i].reversal {
                Some(r) => g.edges[r].weight - g.edges[i].weight,
                None => 0.0,
            };
        }
    }
    g.validate()?;
    Ok(g)
}
