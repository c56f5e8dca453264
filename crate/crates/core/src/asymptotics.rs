//! Sweep orchestration: eps- and tilt-sweeps of the flux, extraction of the
//! decay exponent -eps ln F, the graph/merge-tree exponent curve h*(c), and
//! the negative-resistance demonstration.

use rayon::prelude::*;

use crate::critical::find_critical_points;
use crate::error::{FluxError, Result};
use crate::fields::{ClosedOneForm, PeriodicPotential, TiltedDrift};
use crate::fp::{entropy_production_check, flux, solve_stationary};
use crate::merge_tree::hstar_via_merge_tree;
use crate::morse::build_morse_graph;
use crate::trees::{heights_and_hstar, HstarMode};

/// One sweep point of the Fokker-Planck route.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub c: f64,
    pub eps: f64,
    pub flux: f64,
    pub minus_eps_log_flux: f64,
    pub entropy_production: f64,
    pub div_residual: f64,
}

/// Sweep result with per-tilt extrapolations of -eps ln F.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// (c, extrapolated exponent, fit residual) for tilts with >= 3 usable rows.
    pub extrapolation: Vec<(f64, f64, f64)>,
    /// (c, eps, reason) for points the solver refused.
    pub skipped: Vec<(f64, f64, String)>,
}

/// Run the Fokker-Planck flux over the product of tilt and noise lists.
/// Points the solver refuses (grid too coarse for eps) are recorded, not
/// fatal. Rows come back sorted by (c, eps descending).
pub fn fp_sweep(
    potential: &PeriodicPotential<2>,
    c_list: &[f64],
    eps_list: &[f64],
    grid_n: usize,
) -> Result<SweepResult> {
    let jobs: Vec<(f64, f64)> = c_list
        .iter()
        .flat_map(|&c| eps_list.iter().map(move |&e| (c, e)))
        .collect();
    let outcomes: Vec<(f64, f64, Result<SweepRow>)> = jobs
        .par_iter()
        .map(|&(c, eps)| {
            let drift = TiltedDrift::new(potential.clone(), [c, 0.0]);
            let row = (|| {
                let field = solve_stationary(&drift, eps, [grid_n, grid_n])?;
                let dx = ClosedOneForm::coordinate(drift.torus(), 0, 1.0);
                let f = flux(&field, &dx)?;
                let ent = entropy_production_check(&field, &drift);
                Ok(SweepRow {
                    c,
                    eps,
                    flux: f.value,
                    minus_eps_log_flux: if f.value > 0.0 {
                        -eps * f.value.ln()
                    } else {
                        f64::NAN
                    },
                    entropy_production: ent.rhs,
                    div_residual: field.div_residual,
                })
            })();
            (c, eps, row)
        })
        .collect();

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (c, eps, out) in outcomes {
        match out {
            Ok(r) => rows.push(r),
            Err(e) => skipped.push((c, eps, e.to_string())),
        }
    }
    rows.sort_by(|a, b| {
        a.c.partial_cmp(&b.c)
            .unwrap()
            .then(b.eps.partial_cmp(&a.eps).unwrap())
    });

    let mut extrapolation = Vec::new();
    for &c in c_list {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.c == c && r.flux > 0.0)
            .map(|r| (r.eps, r.flux))
            .collect();
        if let Ok(fit) = exponent_fit(&pts) {
            extrapolation.push((c, fit.psi, fit.residual));
        }
    }
    Ok(SweepResult {
        rows,
        extrapolation,
        skipped,
    })
}

/// Least-squares fit of -eps ln F = psi + a eps over (eps, flux) pairs.
#[derive(Debug, Clone, Copy)]
pub struct ExponentFit {
    pub psi: f64,
    pub slope: f64,
    /// RMS residual of the fit.
    pub residual: f64,
}

/// Extrapolate the decay exponent to eps -> 0 with a linear-in-eps ansatz
/// for the subexponential corrections. Needs at least three eps values
/// spanning a factor of three.
pub fn exponent_fit(points: &[(f64, f64)]) -> Result<ExponentFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(e, f)| *e > 0.0 && *f > 0.0)
        .map(|&(e, f)| (e, -e * f.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(FluxError::InsufficientData(format!(
            "exponent fit needs >= 3 positive-flux eps values, got {}",
            usable.len()
        )));
    }
    let emin = usable.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let emax = usable.iter().map(|p| p.0).fold(0.0f64, f64::max);
    if emax / emin < 3.0 - 1e-12 {
        return Err(FluxError::InsufficientData(format!(
            "eps range must span a factor >= 3, got {:.2}",
            emax / emin
        )));
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|p| p.0).sum();
    let sy: f64 = usable.iter().map(|p| p.1).sum();
    let sxx: f64 = usable.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = usable.iter().map(|p| p.0 * p.1).sum();
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let psi = (sy * sxx - sx * sxy) / det;
    let residual = (usable
        .iter()
        .map(|&(e, y)| {
            let r = y - (psi + slope * e);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ExponentFit {
        psi,
        slope,
        residual,
    })
}

/// One point of the h*(c) curve.
#[derive(Debug, Clone)]
pub struct HstarPoint {
    pub c: f64,
    pub hstar: Option<f64>,
    pub flag: Option<String>,
}

/// Graph-route exponent per tilt: re-solve the zeros, rebuild the Morse
/// graph, optimize trees. At c = 0 the strict inequality degenerates and the
/// vanishing-tilt limit is taken using edge windings against dx.
pub fn hstar_curve(potential: &PeriodicPotential<2>, c_list: &[f64]) -> Vec<HstarPoint> {
    c_list
        .par_iter()
        .map(|&c| {
            let drift = TiltedDrift::new(potential.clone(), [c, 0.0]);
            let out = (|| -> Result<f64> {
                let cps = find_critical_points(&drift, 64)?;
                let graph = build_morse_graph(&drift, &cps)?;
                let digraph = graph.to_digraph();
                let mode = if c == 0.0 {
                    let lx = drift.torus().periods()[0];
                    let beta = graph
                        .edges
                        .iter()
                        .map(|e| e.winding[0] as f64 * lx)
                        .collect();
                    HstarMode::ZeroTiltLimit(beta)
                } else {
                    HstarMode::Strict
                };
                Ok(heights_and_hstar(&digraph, &mode)?.hstar)
            })();
            match out {
                Ok(h) => HstarPoint {
                    c,
                    hstar: Some(h),
                    flag: None,
                },
                Err(e) => HstarPoint {
                    c,
                    hstar: None,
                    flag: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Assess monotonicity of an exponent curve: Some(true) when strictly
/// increasing over the points that produced a value, None when fewer than
/// two values exist.
pub fn curve_strictly_increasing(points: &[HstarPoint]) -> Option<bool> {
    let vals: Vec<f64> = points.iter().filter_map(|p| p.hstar).collect();
    if vals.len() < 2 {
        return None;
    }
    Some(vals.windows(2).all(|w| w[1] > w[0]))
}

/// Merge-tree route exponent for one tilt (convenience wrapper used by
/// sweeps and the CLI).
pub fn hstar_merge_route(
    potential: &PeriodicPotential<2>,
    c: f64,
    window: i32,
    grid_n: usize,
) -> Result<f64> {
    let drift = TiltedDrift::new(potential.clone(), [c, 0.0]);
    let cps = find_critical_points(&drift, 64)?;
    let graph = build_morse_graph(&drift, &cps)?;
    let digraph = graph.to_digraph();
    let t = crate::trees::min_rooted_spanning_tree(&digraph, None)?;
    let v_star = graph.vertices[t.root].position;
    hstar_via_merge_tree(&drift, v_star, [window, window], grid_n)
}

/// Outcome of the negative-resistance demonstration.
#[derive(Debug, Clone)]
pub struct NrDemo {
    pub c1: f64,
    pub c2: f64,
    pub eps: f64,
    pub flux1: f64,
    pub flux2: f64,
    /// The harder push produced less flux.
    pub verdict: bool,
    pub hstar1: Option<f64>,
    pub hstar2: Option<f64>,
    /// Small-noise prediction: h*(c1) < h*(c2).
    pub prediction: Option<bool>,
}

/// Compute the Fokker-Planck flux at two tilts and report whether the larger
/// tilt yields the smaller flux, together with the graph-route prediction.
pub fn negative_resistance_demo(
    potential: &PeriodicPotential<2>,
    c1: f64,
    c2: f64,
    eps: f64,
    grid_n: usize,
) -> Result<NrDemo> {
    let mut fluxes = [0.0; 2];
    for (k, &c) in [c1, c2].iter().enumerate() {
        let drift = TiltedDrift::new(potential.clone(), [c, 0.0]);
        let field = solve_stationary(&drift, eps, [grid_n, grid_n])?;
        let dx = ClosedOneForm::coordinate(drift.torus(), 0, 1.0);
        fluxes[k] = flux(&field, &dx)?.value;
    }
    let curve = hstar_curve(potential, &[c1, c2]);
    let hstar1 = curve[0].hstar;
    let hstar2 = curve[1].hstar;
    let prediction = match (hstar1, hstar2) {
        (Some(a), Some(b)) => Some(a < b),
        _ => None,
    };
    Ok(NrDemo {
        c1,
        c2,
        eps,
        flux1: fluxes[0],
        flux2: fluxes[1],
        verdict: fluxes[1] < fluxes[0],
        hstar1,
        hstar2,
        prediction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{preset_cos_1d, preset_nr2006};
    use crate::fp::flux_1d_closed_form;

    const SQRT15: f64 = 3.872983346207417;

    #[test]
    fn exact_exponential_recovers_rate() {
        let k: f64 = 1.7;
        let pts: Vec<(f64, f64)> = [0.05, 0.1, 0.2, 0.3]
            .iter()
            .map(|&e| (e, (-k / e).exp()))
            .collect();
        let fit = exponent_fit(&pts).unwrap();
        assert!((fit.psi - k).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn fit_requires_enough_range() {
        let pts = [(0.1, 0.5), (0.12, 0.4), (0.15, 0.3)];
        assert!(matches!(
            exponent_fit(&pts),
            Err(FluxError::InsufficientData(_))
        ));
    }

    #[test]
    fn hstar_curve_zero_tilt_value() {
        let u = preset_nr2006();
        let pts = hstar_curve(&u, &[0.0]);
        let h0 = pts[0].hstar.expect("zero-tilt limit defined");
        assert!((h0 - 2.0).abs() < 1e-6, "h*(0) = {h0}");
    }

    #[test]
    fn hstar_curve_increasing_with_known_slope() {
        let u = preset_nr2006();
        let cs = [0.0, 0.05, 0.1, 0.2];
        let pts = hstar_curve(&u, &cs);
        let hs: Vec<f64> = pts.iter().map(|p| p.hstar.unwrap()).collect();
        for k in 1..hs.len() {
            assert!(hs[k] > hs[k - 1], "curve not increasing: {hs:?}");
        }
        // second-order one-sided difference at 0
        let slope = (4.0 * hs[1] - hs[2] - 3.0 * hs[0]) / (2.0 * 0.05);
        let expect = 2.0 * SQRT15 - std::f64::consts::PI;
        assert!(
            (slope - expect).abs() < 0.05 * expect,
            "slope {slope} vs {expect}"
        );
    }

    #[test]
    fn one_dimensional_exponent_matches_max_difference() {
        // closed-form flux for U = cos, c = 0.2; exponent must approach the
        // maximal lifted-potential rise over one period window
        let u = preset_cos_1d();
        let c = 0.2;
        let eps_list = [0.03, 0.05, 0.08, 0.12, 0.2];
        let pts: Vec<(f64, f64)> = eps_list
            .iter()
            .map(|&e| (e, flux_1d_closed_form(&u, c, e).unwrap()))
            .collect();
        let fit = exponent_fit(&pts).unwrap();
        // direct max difference of U~ over y in [x, x+tau]
        let lifted = |x: f64| x.cos() - c * x;
        let mut best = f64::NEG_INFINITY;
        let tau = 2.0 * std::f64::consts::PI;
        for i in 0..2000 {
            let x = i as f64 / 2000.0 * tau;
            for j in 0..2000 {
                let y = x + j as f64 / 2000.0 * tau;
                best = best.max(lifted(y) - lifted(x));
            }
        }
        assert!(
            (fit.psi - best).abs() < 0.1 * best,
            "psi {} vs direct {best}",
            fit.psi
        );
    }
}
