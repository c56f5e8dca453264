//! Merge-tree route to the flux exponent: the sublevel filtration of the
//! tilted potential on a cover window.
//!
//! The construction runs on the smallest cover that makes the drift form
//! exact: axes with zero tilt stay periodic (wraparound connectivity), axes
//! with nonzero tilt are unrolled into a window of several periods. On that
//! cover the tilted potential is unbounded below in the tilt direction, so
//! its sublevel sets have exactly one unbounded component (the "ocean"); on
//! the finite window the ocean is proxied by the components touching the
//! boundary faces the tilt descends through. Keeping the zero-tilt axes
//! periodic matters: valley corridors may wind diagonally, and a rectangular
//! non-periodic window would cut them at a corner and overestimate the
//! barrier. Ascending-value union-find over lattice sites records, for each
//! lift of the root sink, the level at which its component first joins the
//! ocean; the exponent is that level minus the tilted potential at the lift,
//! and all interior lifts must agree up to grid resolution.

use crate::error::{FluxError, Result};
use crate::fields::{Point, TiltedDrift};

/// Outcome of one filtration sweep.
#[derive(Debug, Clone)]
pub struct MergeOutcome<const D: usize> {
    /// (lift of the root sink, exceptional-merge height relative to the lift).
    pub per_lift: Vec<(Point<D>, f64)>,
    /// Relative merge height of the central lift.
    pub central: f64,
    /// Resolution estimate: 4 h max|grad U~|.
    pub grid_tol: f64,
    /// Nonexceptional bars (births of sublevel components and their merge
    /// deaths), recorded when requested.
    pub events: Vec<MergeEvent<D>>,
}

/// A finished bar of the sublevel filtration: a component born at a local
/// minimum of the sampled landscape that later merged into an older one.
#[derive(Debug, Clone, Copy)]
pub struct MergeEvent<const D: usize> {
    pub birth: f64,
    pub death: f64,
    pub birth_site: Point<D>,
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    oceanic: Vec<bool>,
    lift_mask: Vec<u32>,
    /// Site the component was born at (its lowest sample).
    birth_site: Vec<u32>,
    birth_value: Vec<f64>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            oceanic: vec![false; n],
            lift_mask: vec![0; n],
            birth_site: (0..n as u32).collect(),
            birth_value: vec![f64::NAN; n],
        }
    }

    fn find(&mut self, mut i: u32) -> u32 {
        let mut root = i;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[i as usize] != root {
            let next = self.parent[i as usize];
            self.parent[i as usize] = root;
            i = next;
        }
        root
    }

    /// Union the components of a and b; returns (new root, dying bar).
    /// The younger component (larger birth value) dies at the merge.
    fn union(&mut self, a: u32, b: u32) -> (u32, Option<(f64, u32)>) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return (ra, None);
        }
        let (big, small) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        // the dying bar belongs to the younger birth
        let (bv_a, bv_b) = (self.birth_value[ra as usize], self.birth_value[rb as usize]);
        let dying = if bv_a >= bv_b {
            (bv_a, self.birth_site[ra as usize])
        } else {
            (bv_b, self.birth_site[rb as usize])
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.oceanic[big as usize] |= self.oceanic[small as usize];
        self.lift_mask[big as usize] |= self.lift_mask[small as usize];
        if bv_a.min(bv_b) == bv_b {
            self.birth_value[big as usize] = bv_b;
            self.birth_site[big as usize] = self.birth_site[rb as usize];
        } else {
            self.birth_value[big as usize] = bv_a;
            self.birth_site[big as usize] = self.birth_site[ra as usize];
        }
        (big, Some(dying))
    }
}

/// Sweep the sublevel filtration of the tilted potential over a window of
/// `window_periods[i]` periods per axis at `grid_n` sites per period, and
/// return the exceptional-merge height of every interior lift of `v_star`.
pub fn exceptional_merge_heights<const D: usize>(
    drift: &TiltedDrift<D>,
    v_star: Point<D>,
    window_periods: [i32; D],
    grid_n: usize,
) -> Result<MergeOutcome<D>> {
    sweep_filtration(drift, v_star, window_periods, grid_n, false)
}

/// Full sweep with optional bar recording (for barcode export).
pub fn sweep_filtration<const D: usize>(
    drift: &TiltedDrift<D>,
    v_star: Point<D>,
    window_periods: [i32; D],
    grid_n: usize,
    record_events: bool,
) -> Result<MergeOutcome<D>> {
    let tilt = drift.tilt();
    if tilt.iter().all(|&c| c == 0.0) {
        return Err(FluxError::ExactFormNoFlux);
    }
    for &w in window_periods.iter() {
        if w < 1 {
            return Err(FluxError::InvalidSpec(
                "window must span at least one period per axis".into(),
            ));
        }
    }
    let torus = drift.torus();
    let periods = torus.periods();
    let base = torus.wrap(v_star);

    // lattice: dims[i] = window_periods[i] * grid_n sites, spacing h[i];
    // zero-tilt axes keep wraparound connectivity (cylinder cover)
    let mut dims = [1usize; 2];
    let mut h = [0.0f64; 2];
    let mut origin = [0.0f64; 2];
    let mut wrapped = [false; 2];
    for i in 0..D {
        dims[i] = window_periods[i] as usize * grid_n;
        h[i] = periods[i] / grid_n as f64;
        origin[i] = base[i] - periods[i] / 2.0;
        wrapped[i] = tilt[i] == 0.0;
    }
    let (nx, ny) = (dims[0], dims[1]);
    let total = nx * ny;

    let site_point = |i: usize, j: usize| -> Point<D> {
        let mut x = [0.0; D];
        x[0] = origin[0] + i as f64 * h[0];
        if D > 1 {
            x[1 % D] = origin[1] + j as f64 * h[1];
        }
        x
    };

    let mut values = vec![0.0f64; total];
    for j in 0..ny {
        for i in 0..nx {
            values[j * nx + i] = drift.lifted_potential(site_point(i, j));
        }
    }

    // ocean faces: every unwrapped boundary face the tilt descends through
    let on_ocean_face = |i: usize, j: usize| -> bool {
        let idx = [i, j];
        let n = [nx, ny];
        for axis in 0..D {
            if wrapped[axis] {
                continue;
            }
            if tilt[axis] > 0.0 && idx[axis] == n[axis] - 1 {
                return true;
            }
            if tilt[axis] < 0.0 && idx[axis] == 0 {
                return true;
            }
        }
        false
    };

    // interior lifts of v_star: one per period cell of the window
    let mut lifts: Vec<Point<D>> = Vec::new();
    let mut lift_sites: Vec<usize> = Vec::new();
    let wy_count = if D > 1 { window_periods[1 % D] } else { 1 };
    for ky in 0..wy_count {
        for kx in 0..window_periods[0] {
            let mut p = base;
            p[0] += kx as f64 * periods[0];
            if D > 1 {
                p[1 % D] += ky as f64 * periods[1 % D];
            }
            let si = ((p[0] - origin[0]) / h[0]).round() as usize;
            let sj = if D > 1 {
                ((p[1 % D] - origin[1]) / h[1]).round() as usize
            } else {
                0
            };
            let si = si.min(nx - 1);
            let sj = sj.min(ny - 1);
            lifts.push(p);
            lift_sites.push(sj * nx + si);
        }
    }
    if lifts.len() > 32 {
        return Err(FluxError::InvalidSpec(
            "window has more than 32 lifts; reduce window_periods".into(),
        ));
    }
    let central_idx = lifts.len() / 2;

    let mut order: Vec<u32> = (0..total as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        values[a as usize]
            .partial_cmp(&values[b as usize])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut uf = UnionFind::new(total);
    let mut added = vec![false; total];
    let mut merge_value = vec![f64::NAN; lifts.len()];
    let mut remaining = lifts.len();
    let mut events: Vec<MergeEvent<D>> = Vec::new();

    for &site in &order {
        let s = site as usize;
        let (i, j) = (s % nx, s / nx);
        added[s] = true;
        let root = uf.find(site);
        if uf.birth_value[root as usize].is_nan() {
            // fresh component born at this site
            uf.birth_value[root as usize] = values[s];
            uf.birth_site[root as usize] = site;
        }
        if on_ocean_face(i, j) {
            uf.oceanic[root as usize] = true;
        }
        if let Some(k) = lift_sites.iter().position(|&ls| ls == s) {
            let bits = lift_sites
                .iter()
                .enumerate()
                .filter(|&(_, &ls)| ls == s)
                .fold(0u32, |m, (kk, _)| m | (1 << kk));
            let _ = k;
            uf.lift_mask[root as usize] |= bits;
        }
        // unite with already-flooded 4-neighbors (wraparound on zero-tilt axes)
        let level = values[s];
        let mut neighbors = [usize::MAX; 4];
        let mut nn = 0;
        if i > 0 {
            neighbors[nn] = s - 1;
            nn += 1;
        } else if wrapped[0] {
            neighbors[nn] = s + nx - 1;
            nn += 1;
        }
        if i + 1 < nx {
            neighbors[nn] = s + 1;
            nn += 1;
        } else if wrapped[0] {
            neighbors[nn] = s + 1 - nx;
            nn += 1;
        }
        if D > 1 {
            if j > 0 {
                neighbors[nn] = s - nx;
                nn += 1;
            } else if wrapped[1 % D] {
                neighbors[nn] = s + nx * (ny - 1);
                nn += 1;
            }
            if j + 1 < ny {
                neighbors[nn] = s + nx;
                nn += 1;
            } else if wrapped[1 % D] {
                neighbors[nn] = s - nx * (ny - 1);
                nn += 1;
            }
        }
        for &nb in neighbors.iter().take(nn) {
            if !added[nb] {
                continue;
            }
            let (r, dying) = uf.union(site, nb as u32);
            if record_events {
                if let Some((birth, bsite)) = dying {
                    if level > birth {
                        let (bi, bj) = (bsite as usize % nx, bsite as usize / nx);
                        events.push(MergeEvent {
                            birth,
                            death: level,
                            birth_site: site_point(bi, bj),
                        });
                    }
                }
            }
            if uf.oceanic[r as usize] {
                let mask = uf.lift_mask[r as usize];
                for (k, mv) in merge_value.iter_mut().enumerate() {
                    if mv.is_nan() && mask & (1 << k) != 0 {
                        *mv = level;
                        remaining -= 1;
                    }
                }
            }
        }
        if remaining == 0 && !record_events {
            break;
        }
    }

    if merge_value.iter().any(|v| v.is_nan()) {
        return Err(FluxError::WindowTooSmall {
            periods: window_periods[..D].to_vec(),
            delta: f64::NAN,
        });
    }

    let grad_max = drift.speed_bound(96);
    let grid_tol = 4.0 * h.iter().take(D).cloned().fold(0.0f64, f64::max) * grad_max;
    let per_lift: Vec<(Point<D>, f64)> = lifts
        .iter()
        .zip(&merge_value)
        .map(|(&p, &mv)| (p, mv - drift.lifted_potential(p)))
        .collect();
    let central = per_lift[central_idx].1;
    events.sort_by(|a, b| a.death.partial_cmp(&b.death).unwrap());
    Ok(MergeOutcome {
        per_lift,
        central,
        grid_tol,
        events,
    })
}

/// Flux exponent via the merge tree: exceptional-merge height of the central
/// lift of `v_star`, validated by re-running on a window enlarged by one
/// period per axis. Fails with `WindowTooSmall` if the value has not
/// stabilized to grid resolution.
pub fn hstar_via_merge_tree<const D: usize>(
    drift: &TiltedDrift<D>,
    v_star: Point<D>,
    window_periods: [i32; D],
    grid_n: usize,
) -> Result<f64> {
    let run = exceptional_merge_heights(drift, v_star, window_periods, grid_n)?;
    let mut bigger = window_periods;
    for (i, w) in bigger.iter_mut().enumerate() {
        if drift.tilt()[i] != 0.0 {
            *w += 1;
        }
    }
    let check = exceptional_merge_heights(drift, v_star, bigger, grid_n)?;
    let delta = (run.central - check.central).abs();
    if delta > run.grid_tol.max(1e-9) {
        return Err(FluxError::WindowTooSmall {
            periods: window_periods[..D].to_vec(),
            delta,
        });
    }
    Ok(run.central)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::find_critical_points;
    use crate::fields::{preset_cos_1d, preset_nr2006, TWO_PI};
    use crate::fields::TiltedDrift;

    fn root_sink_2d(drift: &TiltedDrift<2>) -> Point<2> {
        let cps = find_critical_points(drift, 64).unwrap();
        cps.iter()
            .filter(|c| c.index == 0)
            .min_by(|a, b| a.tilted_value.partial_cmp(&b.tilted_value).unwrap())
            .unwrap()
            .position
    }

    #[test]
    fn merge_tree_rejects_zero_tilt() {
        let drift = TiltedDrift::gradient_only(preset_nr2006());
        let err = exceptional_merge_heights(&drift, [5.44, 1.57], [3, 3], 64);
        assert!(matches!(err, Err(FluxError::ExactFormNoFlux)));
    }

    #[test]
    fn one_dimensional_tilted_cosine_barrier() {
        // U~(x) = cos x - 0.1 x, window of 5 periods
        let c = 0.1;
        let drift = TiltedDrift::new(preset_cos_1d(), [c]);
        // stable zero: sin x = -c with cos x < 0 is at x = pi + asin(c)
        let v_star = [std::f64::consts::PI + c.asin()];
        let got = exceptional_merge_heights(&drift, v_star, [5], 2048)
            .unwrap()
            .central;
        // 1D scan oracle: max of U~ over [v*, v* + period], relative to U~(v*)
        let mut mx = f64::NEG_INFINITY;
        for k in 0..=20000 {
            let x = v_star[0] + k as f64 / 20000.0 * TWO_PI;
            mx = mx.max(drift.lifted_potential([x]));
        }
        let expect = mx - drift.lifted_potential(v_star);
        assert!(
            (got - expect).abs() < 3e-3,
            "merge-tree {got} vs scan {expect}"
        );
    }

    #[test]
    fn s_valley_small_tilt_matches_saddle_gap() {
        let c = 0.05;
        let drift = TiltedDrift::new(preset_nr2006(), [c, 0.0]);
        let v_star = root_sink_2d(&drift);
        let run = exceptional_merge_heights(&drift, v_star, [3, 3], 128).unwrap();
        // formula: h*(c) = U~(s1(c)) - U~(v*(c)) from the perturbed zeros
        let cps = find_critical_points(&drift, 64).unwrap();
        let saddles: Vec<_> = cps.iter().filter(|cp| cp.index == 1).collect();
        let low_saddle = saddles
            .iter()
            .min_by(|a, b| a.tilted_value.partial_cmp(&b.tilted_value).unwrap())
            .unwrap();
        let v = cps.iter().find(|cp| cp.index == 0).unwrap();
        let expect = low_saddle.tilted_value - v.tilted_value;
        assert!(
            (run.central - expect).abs() < run.grid_tol,
            "merge {} vs {expect}, tol {}",
            run.central,
            run.grid_tol
        );
        // all interior lifts agree
        for (p, v) in &run.per_lift {
            assert!(
                (v - run.central).abs() < run.grid_tol,
                "lift {p:?} disagrees: {v} vs {}",
                run.central
            );
        }
    }

    #[test]
    fn refinement_tightens_the_estimate() {
        let c = 0.1;
        let drift = TiltedDrift::new(preset_nr2006(), [c, 0.0]);
        let v_star = root_sink_2d(&drift);
        let coarse = exceptional_merge_heights(&drift, v_star, [3, 3], 64).unwrap();
        let fine = exceptional_merge_heights(&drift, v_star, [3, 3], 128).unwrap();
        assert!((fine.central - coarse.central).abs() < coarse.grid_tol);
    }

    #[test]
    fn stabilization_check_passes_for_small_tilt() {
        let drift = TiltedDrift::new(preset_nr2006(), [0.05, 0.0]);
        let v_star = root_sink_2d(&drift);
        let h = hstar_via_merge_tree(&drift, v_star, [3, 3], 256).unwrap();
        // graph route gives 2.234405 at this tilt
        assert!((h - 2.2344).abs() < 0.02, "h* = {h}");
    }
}
