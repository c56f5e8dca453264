//! Location and classification of hyperbolic drift zeros on the torus.
//!
//! Zeros are seeded from sign-change cells of the drift on a coarse mesh and
//! polished by Newton iteration with the analytic Jacobian (= minus the
//! Hessian of the potential). A Poincare-Hopf index sum over the found zeros
//! guards against missed ones: the Euler characteristic of any torus is zero.

use rayon::prelude::*;

use crate::error::{FluxError, Result};
use crate::fields::{norm, sub, Point, TiltedDrift};

/// Newton convergence tolerance on |v|.
pub const NEWTON_TOL: f64 = 1e-12;
/// Maximum Newton iterations per seed.
pub const NEWTON_MAX_ITER: usize = 50;
/// Eigenvalues closer to zero than this are flagged as degenerate.
pub const HYPERBOLICITY_TOL: f64 = 1e-6;
/// Deduplication radius in units of the minimal period.
pub const DEDUP_RADIUS_REL: f64 = 1e-6;

/// A classified zero of a tilted drift.
#[derive(Debug, Clone)]
pub struct CriticalPoint<const D: usize> {
    /// Position in the fundamental domain.
    pub position: Point<D>,
    /// Morse index: number of negative Hessian eigenvalues of the tilted potential.
    pub index: usize,
    /// Tilted-potential value at the canonical lift (the stored position).
    pub tilted_value: f64,
    /// Hessian eigenvalues, ascending.
    pub hessian_eigs: [f64; D],
    /// Hessian of the (tilted) potential at the zero.
    pub hessian: [[f64; D]; D],
    /// |drift| at the converged position.
    pub newton_residual: f64,
}

/// Eigen-decomposition of a symmetric 2x2 matrix: eigenvalues ascending with
/// matching unit eigenvectors.
pub fn symmetric_eigen_2x2(h: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let a = h[0][0];
    let b = 0.5 * (h[0][1] + h[1][0]);
    let c = h[1][1];
    let mean = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let lo = mean - disc;
    let hi = mean + disc;
    let vec_for = |lambda: f64| -> [f64; 2] {
        // (a - lambda) x + b y = 0
        let r1 = [b, lambda - a];
        let r2 = [lambda - c, b];
        let v = if norm(r1) >= norm(r2) { r1 } else { r2 };
        let n = norm(v);
        if n == 0.0 {
            [1.0, 0.0]
        } else {
            [v[0] / n, v[1] / n]
        }
    };
    ([lo, hi], [vec_for(lo), vec_for(hi)])
}

fn hessian_eigs<const D: usize>(h: [[f64; D]; D]) -> [f64; D] {
    let mut eigs = [0.0; D];
    match D {
        1 => eigs[0] = h[0][0],
        2 => {
            let m = [[h[0][0], h[0][1]], [h[1][0], h[1][1]]];
            let (e, _) = symmetric_eigen_2x2(m);
            eigs[0] = e[0];
            eigs[1] = e[1];
        }
        _ => unreachable!(),
    }
    eigs
}

fn newton_step<const D: usize>(drift: &TiltedDrift<D>, x: Point<D>) -> Option<Point<D>> {
    let v = drift.eval(x);
    let j = drift.jacobian(x);
    match D {
        1 => {
            if j[0][0].abs() < 1e-14 {
                return None;
            }
            let mut nx = x;
            nx[0] -= v[0] / j[0][0];
            Some(nx)
        }
        2 => {
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det.abs() < 1e-14 {
                return None;
            }
            let dx = (v[0] * j[1][1] - v[1] * j[0][1]) / det;
            let dy = (j[0][0] * v[1] - j[1][0] * v[0]) / det;
            let mut nx = x;
            nx[0] -= dx;
            nx[1] -= dy;
            Some(nx)
        }
        _ => unreachable!(),
    }
}

fn newton_polish<const D: usize>(drift: &TiltedDrift<D>, seed: Point<D>) -> Option<Point<D>> {
    let mut x = seed;
    let max_step = 0.25 * drift.torus().min_period();
    for _ in 0..NEWTON_MAX_ITER {
        if norm(drift.eval(x)) < NEWTON_TOL {
            return Some(x);
        }
        let next = newton_step(drift, x)?;
        let step = sub(next, x);
        let sn = norm(step);
        // keep steps local so each seed converges to its own basin's zero
        x = if sn > max_step {
            let mut clipped = x;
            for i in 0..D {
                clipped[i] += step[i] * max_step / sn;
            }
            clipped
        } else {
            next
        };
    }
    if norm(drift.eval(x)) < NEWTON_TOL {
        Some(x)
    } else {
        None
    }
}

/// Classify a point already known to be a zero of the drift.
///
/// Returns the Morse index and ascending Hessian eigenvalues. Fails with
/// `NotAZero` when |v| >= 1e-8 and with `DegenerateZero` when an eigenvalue
/// sits inside the hyperbolicity tolerance.
pub fn classify<const D: usize>(
    drift: &TiltedDrift<D>,
    x: Point<D>,
) -> Result<(usize, [f64; D])> {
    let residual = norm(drift.eval(x));
    if residual >= 1e-8 {
        return Err(FluxError::NotAZero {
            position: x.to_vec(),
            residual,
        });
    }
    let j = drift.jacobian(x);
    if D == 2 {
        let asym = (j[0][1 % D] - j[1 % D][0]).abs();
        if asym > 1e-6 {
            return Err(FluxError::NonSymmetricJacobian { asym });
        }
    }
    let h = drift.potential().hessian(x);
    let eigs = hessian_eigs(h);
    for &e in eigs.iter() {
        if e.abs() < HYPERBOLICITY_TOL {
            return Err(FluxError::DegenerateZero {
                position: x.to_vec(),
                eig: e,
            });
        }
    }
    let index = eigs.iter().filter(|&&e| e < 0.0).count();
    Ok((index, eigs))
}

/// Find all hyperbolic zeros of the drift, classified and sorted
/// lexicographically by position.
pub fn find_critical_points<const D: usize>(
    drift: &TiltedDrift<D>,
    grid_n: usize,
) -> Result<Vec<CriticalPoint<D>>> {
    if grid_n < 32 {
        return Err(FluxError::InvalidSpec(format!(
            "seed mesh must have at least 32 cells per axis, got {grid_n}"
        )));
    }
    let torus = drift.torus();
    let periods = torus.periods();

    let seeds: Vec<Point<D>> = match D {
        1 => {
            let h = periods[0] / grid_n as f64;
            let vals: Vec<f64> = (0..=grid_n)
                .map(|i| {
                    let mut x = [0.0; D];
                    x[0] = i as f64 * h;
                    drift.eval(x)[0]
                })
                .collect();
            (0..grid_n)
                .filter(|&i| vals[i] == 0.0 || vals[i] * vals[i + 1] <= 0.0)
                .map(|i| {
                    let mut x = [0.0; D];
                    x[0] = (i as f64 + 0.5) * h;
                    x
                })
                .collect()
        }
        2 => {
            let hx = periods[0] / grid_n as f64;
            let hy = periods[1] / grid_n as f64;
            // corner samples of both drift components
            let mut vx = vec![0.0; (grid_n + 1) * (grid_n + 1)];
            let mut vy = vec![0.0; (grid_n + 1) * (grid_n + 1)];
            for j in 0..=grid_n {
                for i in 0..=grid_n {
                    let mut x = [0.0; D];
                    x[0] = i as f64 * hx;
                    x[1] = j as f64 * hy;
                    let v = drift.eval(x);
                    vx[j * (grid_n + 1) + i] = v[0];
                    vy[j * (grid_n + 1) + i] = v[1 % D];
                }
            }
            let mut out = Vec::new();
            for j in 0..grid_n {
                for i in 0..grid_n {
                    let idx = [
                        j * (grid_n + 1) + i,
                        j * (grid_n + 1) + i + 1,
                        (j + 1) * (grid_n + 1) + i,
                        (j + 1) * (grid_n + 1) + i + 1,
                    ];
                    let sign_change = |vals: &[f64]| {
                        let mut lo = f64::INFINITY;
                        let mut hi = f64::NEG_INFINITY;
                        for &k in idx.iter() {
                            lo = lo.min(vals[k]);
                            hi = hi.max(vals[k]);
                        }
                        lo <= 0.0 && hi >= 0.0
                    };
                    if sign_change(&vx) && sign_change(&vy) {
                        let mut x = [0.0; D];
                        x[0] = (i as f64 + 0.5) * hx;
                        x[1] = (j as f64 + 0.5) * hy;
                        out.push(x);
                    }
                }
            }
            out
        }
        _ => unreachable!(),
    };

    let converged: Vec<Point<D>> = seeds
        .par_iter()
        .filter_map(|&s| newton_polish(drift, s))
        .map(|x| torus.wrap(x))
        .collect();

    // deduplicate on the torus
    let dedup_radius = DEDUP_RADIUS_REL * torus.min_period();
    let mut distinct: Vec<Point<D>> = Vec::new();
    for x in converged {
        if !distinct.iter().any(|&y| torus.distance(x, y) < dedup_radius) {
            distinct.push(x);
        }
    }

    let mut points = Vec::with_capacity(distinct.len());
    for x in distinct {
        let (index, eigs) = classify(drift, x)?;
        let hessian = drift.potential().hessian(x);
        points.push(CriticalPoint {
            position: x,
            index,
            tilted_value: drift.lifted_potential(x),
            hessian_eigs: eigs,
            hessian,
            newton_residual: norm(drift.eval(x)),
        });
    }

    let ph_sum: i64 = points
        .iter()
        .map(|p| if p.index % 2 == 0 { 1i64 } else { -1i64 })
        .sum();
    if ph_sum != 0 || points.is_empty() {
        return Err(FluxError::IncompleteSweep {
            sum: ph_sum,
            count: points.len(),
        });
    }

    points.sort_by(|a, b| {
        a.position
            .partial_cmp(&b.position)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(points)
}

/// Unit eigenvector of the Hessian for the unique negative eigenvalue of an
/// index-1 zero: the unstable direction of the drift flow through a saddle.
pub fn unstable_direction(cp: &CriticalPoint<2>) -> Result<[f64; 2]> {
    if cp.index != 1 {
        return Err(FluxError::InvalidSpec(format!(
            "unstable direction requested for index-{} zero",
            cp.index
        )));
    }
    let (eigs, vecs) = symmetric_eigen_2x2(cp.hessian);
    debug_assert!(eigs[0] < 0.0 && eigs[1] > 0.0);
    Ok(vecs[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{dot, preset_cos_cos, preset_nr2006, preset_two_well, PeriodicPotential, Torus, TrigTerm, TWO_PI};

    const SQRT15: f64 = 3.872983346207417;
    const PI: f64 = std::f64::consts::PI;

    #[test]
    fn nr2006_four_critical_points() {
        let drift = TiltedDrift::gradient_only(preset_nr2006());
        let cps = find_critical_points(&drift, 64).unwrap();
        assert_eq!(cps.len(), 4);
        let expected = [
            ([1.5 * PI - SQRT15, 1.5 * PI], 1, 2.0), // s1
            ([SQRT15 - PI / 2.0, PI / 2.0], 1, 4.0), // s2
            ([2.5 * PI - SQRT15, 1.5 * PI], 2, 6.0), // m
            ([PI / 2.0 + SQRT15, PI / 2.0], 0, 0.0), // v
        ];
        for (pos, index, val) in expected {
            let hit = cps
                .iter()
                .find(|cp| crate::fields::norm(sub(cp.position, pos)) < 1e-8)
                .unwrap_or_else(|| panic!("missing zero near {pos:?}"));
            assert_eq!(hit.index, index);
            assert!((hit.tilted_value - val).abs() < 1e-10);
            assert!(hit.newton_residual < 1e-10);
        }
        // index counts for this preset
        assert_eq!(cps.iter().filter(|c| c.index == 0).count(), 1);
        assert_eq!(cps.iter().filter(|c| c.index == 1).count(), 2);
        assert_eq!(cps.iter().filter(|c| c.index == 2).count(), 1);
    }

    #[test]
    fn nr2006_hessian_classification() {
        let drift = TiltedDrift::gradient_only(preset_nr2006());
        let v = [PI / 2.0 + SQRT15, PI / 2.0];
        let (idx, eigs) = classify(&drift, v).unwrap();
        assert_eq!(idx, 0);
        assert!((eigs[0] - 1.0).abs() < 1e-10 && (eigs[1] - 2.0).abs() < 1e-10);

        let s2 = [SQRT15 - PI / 2.0, PI / 2.0];
        let (idx, eigs) = classify(&drift, s2).unwrap();
        assert_eq!(idx, 1);
        assert!((eigs[0] + 2.0).abs() < 1e-10 && (eigs[1] - 1.0).abs() < 1e-10);

        let m = [2.5 * PI - SQRT15, 1.5 * PI];
        let (idx, eigs) = classify(&drift, m).unwrap();
        assert_eq!(idx, 2);
        assert!(eigs[0] < 0.0 && eigs[1] < 0.0);
    }

    #[test]
    fn classify_rejects_non_zero() {
        let drift = TiltedDrift::gradient_only(preset_nr2006());
        assert!(matches!(
            classify(&drift, [1.0, 1.0]),
            Err(FluxError::NotAZero { .. })
        ));
    }

    #[test]
    fn coscos_half_period_zeros() {
        let drift = TiltedDrift::gradient_only(preset_cos_cos());
        let cps = find_critical_points(&drift, 64).unwrap();
        assert_eq!(cps.len(), 4);
        let mut indices: Vec<usize> = cps.iter().map(|c| c.index).collect();
        indices.sort_unstable();
        assert_eq!(indices, vec![0, 1, 1, 2]);
        for cp in &cps {
            for coord in cp.position {
                let snapped = (coord / PI).round() * PI;
                assert!((coord - snapped).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_well_has_two_sinks_distinct_depths() {
        let drift = TiltedDrift::gradient_only(preset_two_well());
        let cps = find_critical_points(&drift, 64).unwrap();
        let sinks: Vec<_> = cps.iter().filter(|c| c.index == 0).collect();
        assert_eq!(sinks.len(), 2);
        let gap = (sinks[0].tilted_value - sinks[1].tilted_value).abs();
        assert!(gap > 1.5, "wells should be clearly asymmetric, gap = {gap}");
        // saddle values pairwise distinct
        let saddles: Vec<_> = cps.iter().filter(|c| c.index == 1).collect();
        assert_eq!(saddles.len(), 4);
        for i in 0..saddles.len() {
            for j in (i + 1)..saddles.len() {
                assert!((saddles[i].tilted_value - saddles[j].tilted_value).abs() > 1e-6);
            }
        }
    }

    #[test]
    fn newton_fixed_point_stability() {
        let drift = TiltedDrift::new(preset_nr2006(), [0.1, 0.0]);
        let cps = find_critical_points(&drift, 64).unwrap();
        for cp in &cps {
            let again = newton_polish(&drift, cp.position).unwrap();
            assert!(crate::fields::norm(sub(again, cp.position)) < 1e-12);
        }
    }

    #[test]
    fn random_trig_matches_dense_grid_oracle() {
        // fixed "random" trig polynomial
        let torus = Torus::new([TWO_PI, TWO_PI]).unwrap();
        let u = PeriodicPotential::from_trig(
            torus,
            vec![
                TrigTerm { wave: [1, 0], amp: 0.9, phase: 0.3 },
                TrigTerm { wave: [0, 1], amp: 1.1, phase: -0.7 },
                TrigTerm { wave: [1, 1], amp: 0.35, phase: 1.2 },
                TrigTerm { wave: [1, -1], amp: 0.2, phase: 0.1 },
            ],
        );
        let drift = TiltedDrift::gradient_only(u);
        let cps = find_critical_points(&drift, 64).unwrap();

        // dense-grid sign-change oracle at 2048^2
        let n = 2048usize;
        let h = TWO_PI / n as f64;
        let mut vx = vec![0.0f64; n * n];
        let mut vy = vec![0.0f64; n * n];
        for j in 0..n {
            for i in 0..n {
                let v = drift.eval([i as f64 * h, j as f64 * h]);
                vx[j * n + i] = v[0];
                vy[j * n + i] = v[1];
            }
        }
        let mut cells = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let c = [
                    j * n + i,
                    j * n + (i + 1) % n,
                    ((j + 1) % n) * n + i,
                    ((j + 1) % n) * n + (i + 1) % n,
                ];
                let chg = |vals: &[f64]| {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for &k in &c {
                        lo = lo.min(vals[k]);
                        hi = hi.max(vals[k]);
                    }
                    lo <= 0.0 && hi >= 0.0
                };
                if chg(&vx) && chg(&vy) {
                    cells.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
                }
            }
        }
        // every Newton zero is witnessed by a nearby oracle cell, and every
        // oracle cell cluster contains a Newton zero
        for cp in &cps {
            let near = cells
                .iter()
                .any(|&cell| drift.torus().distance(cell, cp.position) < 3.0 * h);
            assert!(near, "zero {:?} not seen by the dense grid", cp.position);
        }
        for &cell in &cells {
            let near = cps
                .iter()
                .any(|cp| drift.torus().distance(cell, cp.position) < 3.0 * h);
            assert!(near, "oracle cell {cell:?} has no matching zero");
        }
    }

    #[test]
    fn unstable_direction_is_negative_eigenvector() {
        let drift = TiltedDrift::gradient_only(preset_nr2006());
        let cps = find_critical_points(&drift, 64).unwrap();
        for saddle in cps.iter().filter(|c| c.index == 1) {
            let u = unstable_direction(saddle).unwrap();
            // H u = lambda u with lambda < 0
            let h = saddle.hessian;
            let hu = [
                h[0][0] * u[0] + h[0][1] * u[1],
                h[1][0] * u[0] + h[1][1] * u[1],
            ];
            let lambda = dot(hu, u);
            assert!(lambda < 0.0);
            let res = [hu[0] - lambda * u[0], hu[1] - lambda * u[1]];
            assert!(norm(res) < 1e-10);
        }
    }
}
