//! `flux-lab`: compute steady-state fluxes of tilted-potential diffusions on
//! flat tori by Fokker-Planck solves, Monte-Carlo paths, and graph-theoretic
//! small-noise asymptotics, and cross-check the routes against each other.
//!
//! Outputs are CSV (RFC 4180) plus JSON sidecars; each run with `--out`
//! writes a manifest recording the exact command line, versions, seeds, and
//! wall time, so reruns of the recorded command reproduce every CSV
//! bit-identically on the same build.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical
//! failure (with the failing module's diagnostics on stderr).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use fluxlab_core::action::{action, minimize_action, minimize_action_swept};
use fluxlab_core::asymptotics::{
    exponent_fit, fp_sweep, hstar_curve, hstar_merge_route, negative_resistance_demo,
};
use fluxlab_core::critical::find_critical_points;
use fluxlab_core::error::FluxError;
use fluxlab_core::fields::{ClosedOneForm, DriftSpec, PotentialSpec, TiltedDrift};
use fluxlab_core::fp::{entropy_production_check, flux, flux_1d_closed_form, solve_stationary};
use fluxlab_core::graph_io::{csv_writer, read_digraph_csv, write_morse_graph_csv};
use fluxlab_core::merge_tree::sweep_filtration;
use fluxlab_core::morse::{build_morse_graph, build_morse_graph_1d, gains_vs_values_check};
use fluxlab_core::sde::estimate_flux;
use fluxlab_core::trees::{
    heights_and_hstar, markov_tree_stationary, min_rooted_spanning_tree, theorem5_exponent,
    HstarMode,
};

#[derive(Parser)]
#[command(
    name = "flux-lab",
    version,
    about = "steady-state flux toolkit for tilted diffusions on flat tori"
)]
struct Cli {
    /// Worker threads (the FLUXLAB_JOBS environment variable overrides this)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory for CSVs, field dumps, and the run manifest
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PotentialArgs {
    /// Built-in potential: nr2006, coscos, twowell (2D) or cos1d (1D)
    #[arg(long, conflicts_with = "potential")]
    preset: Option<String>,
    /// JSON potential document ({"preset"|"trig"|"grid", "tilt", "periods"})
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Tilt covector components, comma separated (overrides the JSON tilt)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    tilt: Option<Vec<f64>>,
    /// Shorthand for --tilt c,0
    #[arg(long, conflicts_with = "tilt", allow_hyphen_values = true)]
    c: Option<f64>,
}

impl PotentialArgs {
    fn spec(&self) -> Result<PotentialSpec, FluxError> {
        let mut spec = if let Some(path) = &self.potential {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<PotentialSpec>(&text)
                .map_err(|e| FluxError::InvalidSpec(format!("potential json: {e}")))?
        } else if let Some(name) = &self.preset {
            PotentialSpec::for_preset(name, vec![])
        } else {
            return Err(FluxError::InvalidSpec(
                "give either --preset or --potential".into(),
            ));
        };
        if let Some(c) = self.c {
            spec.tilt = Some(if self.is_1d(&spec) {
                vec![c]
            } else {
                vec![c, 0.0]
            });
        } else if let Some(t) = &self.tilt {
            spec.tilt = Some(t.clone());
        }
        if spec.tilt.as_deref() == Some(&[]) {
            spec.tilt = None;
        }
        Ok(spec)
    }

    fn is_1d(&self, spec: &PotentialSpec) -> bool {
        matches!(spec.preset.as_deref(), Some("cos1d"))
            || matches!(&spec.periods, Some(p) if p.len() == 1)
            || matches!(&spec.trig, Some(rows) if rows.first().map(|r| r.len()) == Some(3))
    }

    fn build(&self) -> Result<DriftSpec, FluxError> {
        self.spec()?.build()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Locate and classify all zeros of the drift
    CriticalPoints {
        #[command(flatten)]
        pot: PotentialArgs,
        /// Seed mesh resolution per axis
        #[arg(long, default_value_t = 64)]
        grid_n: usize,
    },
    /// Trace the Morse graph and emit its edge list
    MorseGraph {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, default_value_t = 64)]
        grid_n: usize,
    },
    /// Heights and the flux exponent h* from spanning-tree optimization
    Hstar {
        #[command(flatten)]
        pot: PotentialArgs,
        /// Operate on a saved edge-list CSV instead of tracing a potential
        #[arg(long, conflicts_with_all = ["preset", "potential"])]
        edges: Option<PathBuf>,
    },
    /// Cycle-rooted-tree flux exponent on a user-supplied finite graph
    Theorem5 {
        /// Edge-list CSV with weight and cocycle columns
        #[arg(long)]
        edges: PathBuf,
    },
    /// Stationary distribution of a finite chain by the tree formula
    TreeStationary {
        /// Edge-list CSV; weights are transition probabilities
        #[arg(long)]
        edges: PathBuf,
    },
    /// Flux exponent via the sublevel merge tree on a cover window
    MergeTree {
        #[command(flatten)]
        pot: PotentialArgs,
        /// Window extent in periods per tilted axis
        #[arg(long, default_value_t = 3)]
        window: i32,
        /// Lattice sites per period per axis
        #[arg(long, default_value_t = 512)]
        grid_n: usize,
        /// Also export the barcode (birth, death, birth_x, birth_y)
        #[arg(long)]
        barcode: bool,
    },
    /// Minimize the path action between two cover points
    ActionMin {
        #[command(flatten)]
        pot: PotentialArgs,
        /// Start point on the cover, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Vec<f64>,
        /// End point on the cover, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        end: Vec<f64>,
        /// Horizon; when absent, sweeps {5,10,20,40} characteristic times
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 120)]
        knots: usize,
        /// Keep interior knots out of sink trapping balls
        #[arg(long)]
        restricted: bool,
    },
    /// Stationary Fokker-Planck flux over (c, eps) grids
    FpFlux {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        c_list: Option<Vec<f64>>,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        /// Pairing form: dx, dy, or a JSON file with {"harmonic": [...]}
        #[arg(long, default_value = "dx")]
        form: String,
        /// Dump density and current as little-endian f64 with JSON sidecars
        #[arg(long)]
        dump_fields: bool,
    },
    /// Monte-Carlo flux from Euler-Maruyama paths
    SdeFlux {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, required = true)]
        eps: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Path horizon
        #[arg(long, default_value_t = 2000.0)]
        horizon: f64,
        #[arg(long, default_value_t = 200)]
        batch: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "dx")]
        form: String,
    },
    /// Consolidated eps/c sweep: FP flux, exponents, and both h* routes
    Asymptotics {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        c_list: Vec<f64>,
        #[arg(long, default_value_t = 128)]
        grid: usize,
        /// Merge-tree resolution; 0 skips the merge-tree column
        #[arg(long, default_value_t = 256)]
        merge_grid: usize,
    },
    /// Demonstrate negative resistance: larger tilt, smaller flux
    NrDemo {
        #[command(flatten)]
        pot: PotentialArgs,
        #[arg(long, required = true)]
        c1: f64,
        #[arg(long, required = true)]
        c2: f64,
        #[arg(long, required = true)]
        eps: f64,
        #[arg(long, default_value_t = 256)]
        grid: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = std::env::var("FLUXLAB_JOBS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .or(cli.jobs);
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    let started = Instant::now();
    let argv: Vec<String> = std::env::args().collect();
    let mut run = RunOutput::new(cli.out.clone());
    match dispatch(&cli.command, &mut run) {
        Ok(()) => {
            if let Err(e) = run.finish_manifest(&argv, started.elapsed().as_secs_f64()) {
                eprintln!("manifest: {e}");
                return ExitCode::from(3);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Validation and configuration problems exit 2; numerical failures exit 3.
fn exit_code_for(e: &FluxError) -> u8 {
    match e {
        FluxError::InvalidSpec(_)
        | FluxError::Io(_)
        | FluxError::NoArborescence(_)
        | FluxError::NotStochastic { .. }
        | FluxError::ReducibleChain
        | FluxError::GridMismatch
        | FluxError::AmbiguousWinding { .. }
        | FluxError::InsufficientData(_) => 2,
        _ => 3,
    }
}

/// Collects output artifacts and writes the run manifest.
struct RunOutput {
    dir: Option<PathBuf>,
    files: Vec<String>,
    seeds: Vec<u64>,
}

impl RunOutput {
    fn new(dir: Option<PathBuf>) -> Self {
        Self {
            dir,
            files: Vec::new(),
            seeds: Vec::new(),
        }
    }

    fn path(&mut self, name: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        std::fs::create_dir_all(dir).ok()?;
        self.files.push(name.to_string());
        Some(dir.join(name))
    }

    fn write_csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), FluxError> {
        let Some(path) = self.path(name) else {
            return Ok(());
        };
        let file = std::fs::File::create(path)?;
        let mut w = csv_writer(file);
        w.write_record(header)
            .map_err(|e| FluxError::InvalidSpec(format!("csv: {e}")))?;
        for row in rows {
            w.write_record(row)
                .map_err(|e| FluxError::InvalidSpec(format!("csv: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_binary_with_sidecar(
        &mut self,
        name: &str,
        data: &[f64],
        sidecar: serde_json::Value,
    ) -> Result<(), FluxError> {
        let Some(path) = self.path(name) else {
            return Ok(());
        };
        let mut bytes = Vec::with_capacity(data.len() * 8);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, bytes)?;
        let sidecar_name = format!("{name}.json");
        if let Some(sp) = self.path(&sidecar_name) {
            std::fs::write(sp, serde_json::to_string_pretty(&sidecar).unwrap())?;
        }
        Ok(())
    }

    fn finish_manifest(&mut self, argv: &[String], wall: f64) -> Result<(), FluxError> {
        let Some(dir) = self.dir.clone() else {
            return Ok(());
        };
        let manifest = serde_json::json!({
            "command": argv,
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "seeds": self.seeds,
            "outputs": self.files,
            "wall_time_s": wall,
        });
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest).unwrap(),
        )?;
        Ok(())
    }
}

fn form_from_flag<const D: usize>(
    name: &str,
    drift: &TiltedDrift<D>,
) -> Result<ClosedOneForm<D>, FluxError> {
    let torus = drift.torus();
    match name {
        "dx" => Ok(ClosedOneForm::coordinate(torus, 0, 1.0)),
        "dy" if D > 1 => Ok(ClosedOneForm::coordinate(torus, 1 % D, 1.0)),
        other => {
            // a JSON file naming the harmonic coefficients
            let text = std::fs::read_to_string(other).map_err(|_| {
                FluxError::InvalidSpec(format!(
                    "--form must be dx, dy, or a readable JSON file (got '{other}')"
                ))
            })?;
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| FluxError::InvalidSpec(format!("form json: {e}")))?;
            let harmonic_vec: Vec<f64> = v
                .get("harmonic")
                .and_then(|h| serde_json::from_value(h.clone()).ok())
                .ok_or_else(|| FluxError::InvalidSpec("form json needs 'harmonic'".into()))?;
            if harmonic_vec.len() != D {
                return Err(FluxError::InvalidSpec(format!(
                    "form harmonic needs {D} entries"
                )));
            }
            let mut harmonic = [0.0; D];
            harmonic.copy_from_slice(&harmonic_vec);
            Ok(ClosedOneForm::new(torus, None, harmonic))
        }
    }
}

fn dispatch(cmd: &Command, run: &mut RunOutput) -> Result<(), FluxError> {
    match cmd {
        Command::CriticalPoints { pot, grid_n } => critical_points_cmd(pot, *grid_n, run),
        Command::MorseGraph { pot, grid_n } => morse_graph_cmd(pot, *grid_n, run),
        Command::Hstar { pot, edges } => hstar_cmd(pot, edges.as_deref(), run),
        Command::Theorem5 { edges } => theorem5_cmd(edges, run),
        Command::TreeStationary { edges } => tree_stationary_cmd(edges, run),
        Command::MergeTree {
            pot,
            window,
            grid_n,
            barcode,
        } => merge_tree_cmd(pot, *window, *grid_n, *barcode, run),
        Command::ActionMin {
            pot,
            start,
            end,
            horizon,
            knots,
            restricted,
        } => action_min_cmd(pot, start, end, *horizon, *knots, *restricted, run),
        Command::FpFlux {
            pot,
            eps_list,
            c_list,
            grid,
            form,
            dump_fields,
        } => fp_flux_cmd(pot, eps_list, c_list.as_deref(), *grid, form, *dump_fields, run),
        Command::SdeFlux {
            pot,
            eps,
            dt,
            horizon,
            batch,
            seed,
            form,
        } => sde_flux_cmd(pot, *eps, *dt, *horizon, *batch, *seed, form, run),
        Command::Asymptotics {
            pot,
            eps_list,
            c_list,
            grid,
            merge_grid,
        } => asymptotics_cmd(pot, eps_list, c_list, *grid, *merge_grid, run),
        Command::NrDemo {
            pot,
            c1,
            c2,
            eps,
            grid,
        } => nr_demo_cmd(pot, *c1, *c2, *eps, *grid, run),
    }
}

fn critical_points_cmd(
    pot: &PotentialArgs,
    grid_n: usize,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    let header = ["x", "y", "index", "tilted_value", "eig1", "eig2", "residual"];
    let rows: Vec<Vec<String>> = match pot.build()? {
        DriftSpec::Two(drift) => find_critical_points(&drift, grid_n)?
            .iter()
            .map(|cp| {
                vec![
                    cp.position[0].to_string(),
                    cp.position[1].to_string(),
                    cp.index.to_string(),
                    cp.tilted_value.to_string(),
                    cp.hessian_eigs[0].to_string(),
                    cp.hessian_eigs[1].to_string(),
                    cp.newton_residual.to_string(),
                ]
            })
            .collect(),
        DriftSpec::One(drift) => find_critical_points(&drift, grid_n)?
            .iter()
            .map(|cp| {
                vec![
                    cp.position[0].to_string(),
                    "0".into(),
                    cp.index.to_string(),
                    cp.tilted_value.to_string(),
                    cp.hessian_eigs[0].to_string(),
                    "0".into(),
                    cp.newton_residual.to_string(),
                ]
            })
            .collect(),
    };
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", header.join(","))?;
    for row in &rows {
        writeln!(stdout, "{}", row.join(","))?;
    }
    run.write_csv("critical_points.csv", &header, &rows)
}

fn morse_graph_cmd(
    pot: &PotentialArgs,
    grid_n: usize,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    let mut buf: Vec<u8> = Vec::new();
    match pot.build()? {
        DriftSpec::Two(drift) => {
            let cps = find_critical_points(&drift, grid_n)?;
            let graph = build_morse_graph(&drift, &cps)?;
            gains_vs_values_check(&graph, &drift)?;
            write_morse_graph_csv(&graph, &mut buf)?;
        }
        DriftSpec::One(drift) => {
            let cps = find_critical_points(&drift, grid_n)?;
            let graph = build_morse_graph_1d(&drift, &cps)?;
            gains_vs_values_check(&graph, &drift)?;
            write_morse_graph_csv(&graph, &mut buf)?;
        }
    }
    std::io::stdout().write_all(&buf)?;
    if let Some(path) = run.path("morse_edges.csv") {
        std::fs::write(path, &buf)?;
    }
    Ok(())
}

fn graph_from_potential(
    pot: &PotentialArgs,
) -> Result<(fluxlab_core::WeightedDigraph, HstarMode), FluxError> {
    match pot.build()? {
        DriftSpec::Two(drift) => {
            let cps = find_critical_points(&drift, 64)?;
            let graph = build_morse_graph(&drift, &cps)?;
            let digraph = graph.to_digraph();
            let mode = if drift.tilt() == [0.0, 0.0] {
                let lx = drift.torus().periods()[0];
                HstarMode::ZeroTiltLimit(
                    graph
                        .edges
                        .iter()
                        .map(|e| e.winding[0] as f64 * lx)
                        .collect(),
                )
            } else {
                HstarMode::Strict
            };
            Ok((digraph, mode))
        }
        DriftSpec::One(drift) => {
            let cps = find_critical_points(&drift, 64)?;
            let graph = build_morse_graph_1d(&drift, &cps)?;
            let digraph = graph.to_digraph();
            let mode = if drift.tilt() == [0.0] {
                let lx = drift.torus().periods()[0];
                HstarMode::ZeroTiltLimit(
                    graph
                        .edges
                        .iter()
                        .map(|e| e.winding[0] as f64 * lx)
                        .collect(),
                )
            } else {
                HstarMode::Strict
            };
            Ok((digraph, mode))
        }
    }
}

fn hstar_cmd(
    pot: &PotentialArgs,
    edges: Option<&Path>,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    let (digraph, mode) = match edges {
        Some(path) => {
            let file = std::fs::File::open(path)?;
            (read_digraph_csv(file)?, HstarMode::Strict)
        }
        None => graph_from_potential(pot)?,
    };
    let h = heights_and_hstar(&digraph, &mode)?;
    println!("{:?}", h.hstar);
    let header = ["kind", "id", "name", "height"];
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (v, hv) in h.h_vertex.iter().enumerate() {
        rows.push(vec![
            "vertex".into(),
            v.to_string(),
            digraph.vertex_names[v].clone(),
            hv.to_string(),
        ]);
    }
    for (e, he) in h.h_edge.iter().enumerate() {
        rows.push(vec![
            "edge".into(),
            e.to_string(),
            format!("{}->{}", digraph.edges[e].src, digraph.edges[e].tgt),
            he.to_string(),
        ]);
    }
    rows.push(vec![
        "hstar".into(),
        h.witness.to_string(),
        "witness-edge".into(),
        h.hstar.to_string(),
    ]);
    run.write_csv("hstar.csv", &header, &rows)
}

fn theorem5_cmd(edges: &Path, run: &mut RunOutput) -> Result<(), FluxError> {
    let file = std::fs::File::open(edges)?;
    let g = read_digraph_csv(file)?;
    let r = theorem5_exponent(&g)?;
    let exponent = r.exponent.expect("reported only when the assumption holds");
    println!("{exponent:?}");
    println!(
        "assumption holds: {} (positive {} < negative {})",
        r.assumption_holds, r.plus_total, r.minus_total
    );
    run.write_csv(
        "theorem5.csv",
        &[
            "exponent",
            "assumption_holds",
            "plus_total",
            "minus_total",
            "rst_total",
        ],
        &[vec![
            exponent.to_string(),
            r.assumption_holds.to_string(),
            r.plus_total.to_string(),
            r.minus_total.to_string(),
            r.rst_total.to_string(),
        ]],
    )
}

fn tree_stationary_cmd(edges: &Path, run: &mut RunOutput) -> Result<(), FluxError> {
    let file = std::fs::File::open(edges)?;
    let g = read_digraph_csv(file)?;
    let pi = markov_tree_stationary(&g)?;
    let rows: Vec<Vec<String>> = pi
        .iter()
        .enumerate()
        .map(|(v, p)| vec![g.vertex_names[v].clone(), p.to_string()])
        .collect();
    for row in &rows {
        println!("{},{}", row[0], row[1]);
    }
    run.write_csv("stationary.csv", &["vertex", "pi"], &rows)
}

fn merge_tree_cmd(
    pot: &PotentialArgs,
    window: i32,
    grid_n: usize,
    barcode: bool,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    match pot.build()? {
        DriftSpec::Two(drift) => {
            let cps = find_critical_points(&drift, 64)?;
            let graph = build_morse_graph(&drift, &cps)?;
            let t = min_rooted_spanning_tree(&graph.to_digraph(), None)?;
            let v_star = graph.vertices[t.root].position;
            let out = sweep_filtration(&drift, v_star, [window, window], grid_n, barcode)?;
            println!("{}", out.central);
            if barcode {
                let rows: Vec<Vec<String>> = out
                    .events
                    .iter()
                    .map(|e| {
                        vec![
                            e.birth.to_string(),
                            e.death.to_string(),
                            e.birth_site[0].to_string(),
                            e.birth_site[1].to_string(),
                        ]
                    })
                    .collect();
                run.write_csv(
                    "barcode.csv",
                    &["birth", "death", "birth_x", "birth_y"],
                    &rows,
                )?;
            }
        }
        DriftSpec::One(drift) => {
            let cps = find_critical_points(&drift, 64)?;
            let graph = build_morse_graph_1d(&drift, &cps)?;
            let t = min_rooted_spanning_tree(&graph.to_digraph(), None)?;
            let v_star = graph.vertices[t.root].position;
            let out = sweep_filtration(&drift, v_star, [window], grid_n, barcode)?;
            println!("{}", out.central);
            if barcode {
                let rows: Vec<Vec<String>> = out
                    .events
                    .iter()
                    .map(|e| {
                        vec![
                            e.birth.to_string(),
                            e.death.to_string(),
                            e.birth_site[0].to_string(),
                            "0".into(),
                        ]
                    })
                    .collect();
                run.write_csv(
                    "barcode.csv",
                    &["birth", "death", "birth_x", "birth_y"],
                    &rows,
                )?;
            }
        }
    }
    Ok(())
}

fn action_min_cmd(
    pot: &PotentialArgs,
    start: &[f64],
    end: &[f64],
    horizon: Option<f64>,
    knots: usize,
    restricted: bool,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    match pot.build()? {
        DriftSpec::Two(drift) => {
            if start.len() != 2 || end.len() != 2 {
                return Err(FluxError::InvalidSpec(
                    "start/end need 2 coordinates".into(),
                ));
            }
            let s = [start[0], start[1]];
            let e = [end[0], end[1]];
            let forbidden: Vec<[f64; 2]> = if restricted {
                find_critical_points(&drift, 64)?
                    .iter()
                    .filter(|cp| cp.index == 0)
                    .map(|cp| cp.position)
                    .collect()
            } else {
                Vec::new()
            };
            let r = match horizon {
                Some(t) => minimize_action(&drift, s, e, t, knots, &forbidden)?,
                None => minimize_action_swept(&drift, s, e, knots, &forbidden)?,
            };
            println!("{}", r.value);
            if !r.converged {
                eprintln!("note: descent budget exhausted; value is best-so-far");
            }
            let rows: Vec<Vec<String>> = r
                .path
                .times
                .iter()
                .zip(&r.path.knots)
                .map(|(t, x)| vec![t.to_string(), x[0].to_string(), x[1].to_string()])
                .collect();
            run.write_csv("action_path.csv", &["t", "x", "y"], &rows)?;
            debug_assert!((action(&drift, &r.path) - r.value).abs() < 1e-9);
        }
        DriftSpec::One(drift) => {
            if start.len() != 1 || end.len() != 1 {
                return Err(FluxError::InvalidSpec("start/end need 1 coordinate".into()));
            }
            let forbidden: Vec<[f64; 1]> = if restricted {
                find_critical_points(&drift, 64)?
                    .iter()
                    .filter(|cp| cp.index == 0)
                    .map(|cp| cp.position)
                    .collect()
            } else {
                Vec::new()
            };
            let r = match horizon {
                Some(t) => minimize_action(&drift, [start[0]], [end[0]], t, knots, &forbidden)?,
                None => minimize_action_swept(&drift, [start[0]], [end[0]], knots, &forbidden)?,
            };
            println!("{}", r.value);
            let rows: Vec<Vec<String>> = r
                .path
                .times
                .iter()
                .zip(&r.path.knots)
                .map(|(t, x)| vec![t.to_string(), x[0].to_string(), "0".into()])
                .collect();
            run.write_csv("action_path.csv", &["t", "x", "y"], &rows)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fp_flux_cmd(
    pot: &PotentialArgs,
    eps_list: &[f64],
    c_list: Option<&[f64]>,
    grid: usize,
    form: &str,
    dump_fields: bool,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    let header = [
        "c",
        "eps",
        "flux",
        "minus_eps_log_flux",
        "entropy_production",
        "div_residual",
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", header.join(","))?;
    match pot.build()? {
        DriftSpec::Two(base) => {
            let c_values: Vec<f64> = c_list
                .map(|c| c.to_vec())
                .unwrap_or_else(|| vec![base.tilt()[0]]);
            for &c in &c_values {
                let drift = TiltedDrift::new(base.potential().clone(), [c, base.tilt()[1]]);
                let alpha = form_from_flag(form, &drift)?;
                for &eps in eps_list {
                    let field = solve_stationary(&drift, eps, [grid, grid])?;
                    let f = flux(&field, &alpha)?;
                    let ent = entropy_production_check(&field, &drift);
                    let row = vec![
                        c.to_string(),
                        eps.to_string(),
                        f.value.to_string(),
                        if f.value > 0.0 {
                            (-eps * f.value.ln()).to_string()
                        } else {
                            "nan".into()
                        },
                        ent.rhs.to_string(),
                        field.div_residual.to_string(),
                    ];
                    writeln!(stdout, "{}", row.join(","))?;
                    rows.push(row);
                    if dump_fields {
                        let tag = format!("c{c}_eps{eps}");
                        let sidecar = serde_json::json!({
                            "shape": [grid, grid],
                            "order": "row-major (y outer, x inner)",
                            "dtype": "f64-le",
                            "c": c,
                            "eps": eps,
                        });
                        run.write_binary_with_sidecar(
                            &format!("rho_{tag}.f64"),
                            &field.rho,
                            sidecar.clone(),
                        )?;
                        run.write_binary_with_sidecar(
                            &format!("flux_x_{tag}.f64"),
                            &field.flux_x,
                            sidecar.clone(),
                        )?;
                        run.write_binary_with_sidecar(
                            &format!("flux_y_{tag}.f64"),
                            &field.flux_y,
                            sidecar,
                        )?;
                    }
                }
            }
        }
        DriftSpec::One(base) => {
            let c_values: Vec<f64> = c_list
                .map(|c| c.to_vec())
                .unwrap_or_else(|| vec![base.tilt()[0]]);
            for &c in &c_values {
                let drift = TiltedDrift::new(base.potential().clone(), [c]);
                let alpha = form_from_flag(form, &drift)?;
                for &eps in eps_list {
                    let field = solve_stationary(&drift, eps, [grid])?;
                    let f = flux(&field, &alpha)?;
                    let ent = entropy_production_check(&field, &drift);
                    let row = vec![
                        c.to_string(),
                        eps.to_string(),
                        f.value.to_string(),
                        if f.value > 0.0 {
                            (-eps * f.value.ln()).to_string()
                        } else {
                            "nan".into()
                        },
                        ent.rhs.to_string(),
                        field.div_residual.to_string(),
                    ];
                    writeln!(stdout, "{}", row.join(","))?;
                    if c > 0.0 {
                        if let Ok(cf) = flux_1d_closed_form(drift.potential(), c, eps) {
                            writeln!(stdout, "# closed-form check: {cf}")?;
                        }
                    }
                    rows.push(row);
                    if dump_fields {
                        let tag = format!("c{c}_eps{eps}");
                        let sidecar = serde_json::json!({
                            "shape": [grid],
                            "order": "row-major",
                            "dtype": "f64-le",
                            "c": c,
                            "eps": eps,
                        });
                        run.write_binary_with_sidecar(
                            &format!("rho_{tag}.f64"),
                            &field.rho,
                            sidecar.clone(),
                        )?;
                        run.write_binary_with_sidecar(
                            &format!("flux_x_{tag}.f64"),
                            &field.flux_x,
                            sidecar,
                        )?;
                    }
                }
            }
        }
    }
    run.write_csv("fp_flux.csv", &header, &rows)
}

#[allow(clippy::too_many_arguments)]
fn sde_flux_cmd(
    pot: &PotentialArgs,
    eps: f64,
    dt: f64,
    horizon: f64,
    batch: usize,
    seed: u64,
    form: &str,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    run.seeds.push(seed);
    let header = ["c", "eps", "dt", "horizon", "batch", "seed", "mean", "stderr"];
    let row = match pot.build()? {
        DriftSpec::Two(drift) => {
            let alpha = form_from_flag(form, &drift)?;
            let r = estimate_flux(&drift, &alpha, eps, dt, horizon, batch, seed)?;
            println!("{} +- {}", r.mean, r.stderr);
            vec![
                drift.tilt()[0].to_string(),
                eps.to_string(),
                dt.to_string(),
                horizon.to_string(),
                batch.to_string(),
                seed.to_string(),
                r.mean.to_string(),
                r.stderr.to_string(),
            ]
        }
        DriftSpec::One(drift) => {
            let alpha = form_from_flag(form, &drift)?;
            let r = estimate_flux(&drift, &alpha, eps, dt, horizon, batch, seed)?;
            println!("{} +- {}", r.mean, r.stderr);
            vec![
                drift.tilt()[0].to_string(),
                eps.to_string(),
                dt.to_string(),
                horizon.to_string(),
                batch.to_string(),
                seed.to_string(),
                r.mean.to_string(),
                r.stderr.to_string(),
            ]
        }
    };
    run.write_csv("sde_flux.csv", &header, &[row])
}

fn asymptotics_cmd(
    pot: &PotentialArgs,
    eps_list: &[f64],
    c_list: &[f64],
    grid: usize,
    merge_grid: usize,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    let DriftSpec::Two(base) = pot.build()? else {
        return Err(FluxError::InvalidSpec(
            "asymptotics sweeps need a 2D potential".into(),
        ));
    };
    let potential = base.potential().clone();
    let sweep = fp_sweep(&potential, c_list, eps_list, grid)?;
    let curve = hstar_curve(&potential, c_list);
    let mut merge_by_c: Vec<Option<f64>> = Vec::new();
    for &c in c_list {
        if merge_grid == 0 || c == 0.0 {
            merge_by_c.push(None);
        } else {
            merge_by_c.push(hstar_merge_route(&potential, c, 3, merge_grid).ok());
        }
    }

    let header = [
        "c",
        "eps",
        "flux",
        "minus_eps_log_flux",
        "hstar_graph",
        "hstar_merge_tree",
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut long: Vec<Vec<String>> = Vec::new();
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", header.join(","))?;
    for row in &sweep.rows {
        let ci = c_list.iter().position(|&c| c == row.c).unwrap();
        let hg = curve[ci]
            .hstar
            .map(|h| h.to_string())
            .unwrap_or_else(|| "nan".into());
        let hm = merge_by_c[ci]
            .map(|h| h.to_string())
            .unwrap_or_else(|| "nan".into());
        let out = vec![
            row.c.to_string(),
            row.eps.to_string(),
            row.flux.to_string(),
            row.minus_eps_log_flux.to_string(),
            hg,
            hm,
        ];
        writeln!(stdout, "{}", out.join(","))?;
        rows.push(out);
        long.push(vec![
            format!("flux c={}", row.c),
            row.eps.to_string(),
            row.flux.to_string(),
        ]);
        long.push(vec![
            format!("minus_eps_log_flux c={}", row.c),
            row.eps.to_string(),
            row.minus_eps_log_flux.to_string(),
        ]);
    }
    for (ci, &c) in c_list.iter().enumerate() {
        if let Some(h) = curve[ci].hstar {
            long.push(vec!["hstar_graph".into(), c.to_string(), h.to_string()]);
        }
        if let Some(h) = merge_by_c[ci] {
            long.push(vec!["hstar_merge_tree".into(), c.to_string(), h.to_string()]);
        }
        let pts: Vec<(f64, f64)> = sweep
            .rows
            .iter()
            .filter(|r| r.c == c && r.flux > 0.0)
            .map(|r| (r.eps, r.flux))
            .collect();
        if let Ok(fit) = exponent_fit(&pts) {
            long.push(vec![
                "exponent_extrapolated".into(),
                c.to_string(),
                fit.psi.to_string(),
            ]);
        }
    }
    for (c, eps, reason) in &sweep.skipped {
        eprintln!("skipped c={c} eps={eps}: {reason}");
    }
    if let Some(increasing) = fluxlab_core::asymptotics::curve_strictly_increasing(&curve) {
        writeln!(stdout, "# h* strictly increasing over c: {increasing}")?;
    }
    run.write_csv("asymptotics.csv", &header, &rows)?;
    run.write_csv("asymptotics_long.csv", &["series", "x", "y"], &long)
}

fn nr_demo_cmd(
    pot: &PotentialArgs,
    c1: f64,
    c2: f64,
    eps: f64,
    grid: usize,
    run: &mut RunOutput,
) -> Result<(), FluxError> {
    let DriftSpec::Two(base) = pot.build()? else {
        return Err(FluxError::InvalidSpec("nr-demo needs a 2D potential".into()));
    };
    let demo = negative_resistance_demo(base.potential(), c1, c2, eps, grid)?;
    println!(
        "flux(c1={}) = {}  flux(c2={}) = {}",
        demo.c1, demo.flux1, demo.c2, demo.flux2
    );
    println!(
        "negative resistance: {} (asymptotic prediction h*(c1) < h*(c2): {})",
        demo.verdict,
        demo.prediction
            .map(|p| p.to_string())
            .unwrap_or_else(|| "unavailable".into())
    );
    run.write_csv(
        "nr_demo.csv",
        &["c1", "c2", "eps", "flux1", "flux2", "verdict", "hstar1", "hstar2"],
        &[vec![
            demo.c1.to_string(),
            demo.c2.to_string(),
            demo.eps.to_string(),
            demo.flux1.to_string(),
            demo.flux2.to_string(),
            demo.verdict.to_string(),
            demo.hstar1
                .map(|h| h.to_string())
                .unwrap_or_else(|| "nan".into()),
            demo.hstar2
                .map(|h| h.to_string())
                .unwrap_or_else(|| "nan".into()),
        ]],
    )
}
