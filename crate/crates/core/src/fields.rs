//! Periodic potentials, closed one-forms, and tilted drifts on flat tori.
//!
//! The state space is the flat torus `R^D / (L_1 Z x ... x L_D Z)` with the
//! Euclidean metric, `D` in {1, 2}. A tilted drift is `v = -grad U + tilt`,
//! dual to the closed one-form `-dU + sum_i tilt_i dx^i`. Its primitive on the
//! universal cover is the tilted potential `U(x) - tilt . x`, which is not
//! periodic when the tilt is nonzero.
//!
//! Paths are always carried as explicit lifts (cover polylines); winding is
//! never inferred from shortest arcs, since the flux of interest is a
//! homological quantity and winding ambiguity would corrupt it silently.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FluxError, Result};
use crate::spline::{PeriodicSpline1, PeriodicSpline2};

/// A point, either on the torus fundamental domain or on the universal cover.
pub type Point<const D: usize> = [f64; D];

#[inline]
pub fn dot<const D: usize>(a: Point<D>, b: Point<D>) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn sub<const D: usize>(a: Point<D>, b: Point<D>) -> Point<D> {
    let mut r = a;
    for i in 0..D {
        r[i] -= b[i];
    }
    r
}

#[inline]
pub fn add<const D: usize>(a: Point<D>, b: Point<D>) -> Point<D> {
    let mut r = a;
    for i in 0..D {
        r[i] += b[i];
    }
    r
}

#[inline]
pub fn scale<const D: usize>(a: Point<D>, s: f64) -> Point<D> {
    let mut r = a;
    for x in r.iter_mut() {
        *x *= s;
    }
    r
}

#[inline]
pub fn norm<const D: usize>(a: Point<D>) -> f64 {
    dot(a, a).sqrt()
}

/// Flat torus with independent periods per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torus<const D: usize> {
    periods: [f64; D],
}

impl<const D: usize> Torus<D> {
    pub fn new(periods: [f64; D]) -> Result<Self> {
        if !(1..=2).contains(&D) {
            return Err(FluxError::InvalidSpec(format!(
                "torus dimension must be 1 or 2, got {D}"
            )));
        }
        for (i, &p) in periods.iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(FluxError::InvalidSpec(format!(
                    "period {i} must be positive, got {p}"
                )));
            }
        }
        Ok(Self { periods })
    }

    pub fn periods(&self) -> [f64; D] {
        self.periods
    }

    pub fn min_period(&self) -> f64 {
        self.periods.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Wrap a cover point into the fundamental domain [0, L_i).
    pub fn wrap(&self, x: Point<D>) -> Point<D> {
        let mut r = x;
        for i in 0..D {
            r[i] = x[i].rem_euclid(self.periods[i]);
        }
        r
    }

    /// Shortest representative of `a - b` on the torus.
    pub fn displacement(&self, a: Point<D>, b: Point<D>) -> Point<D> {
        let mut r = [0.0; D];
        for i in 0..D {
            let li = self.periods[i];
            let mut d = (a[i] - b[i]).rem_euclid(li);
            if d > li / 2.0 {
                d -= li;
            }
            r[i] = d;
        }
        r
    }

    /// Torus distance between two points.
    pub fn distance(&self, a: Point<D>, b: Point<D>) -> f64 {
        norm(self.displacement(a, b))
    }
}

/// The kind of representation backing a periodic potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReprTag {
    AnalyticPreset,
    TrigPolynomial,
    GridSpline,
}

/// Evaluation backend for a periodic potential (value, gradient, Hessian).
pub trait PotentialRepr<const D: usize>: Send + Sync + std::fmt::Debug {
    fn value(&self, x: Point<D>) -> f64;
    fn gradient(&self, x: Point<D>) -> Point<D>;
    fn hessian(&self, x: Point<D>) -> [[f64; D]; D];
    fn tag(&self) -> ReprTag;
}

/// One term of a trigonometric polynomial:
/// `amp * cos(2 pi (k . x / L) + phase)` with integer wave vector `k`.
#[derive(Debug, Clone, Copy)]
pub struct TrigTerm<const D: usize> {
    pub wave: [i32; D],
    pub amp: f64,
    pub phase: f64,
}

#[derive(Debug, Clone)]
struct TrigPoly<const D: usize> {
    terms: Vec<TrigTerm<D>>,
    freq: [f64; D], // 2 pi / L_i
}

impl<const D: usize> PotentialRepr<D> for TrigPoly<D> {
    fn value(&self, x: Point<D>) -> f64 {
        let mut s = 0.0;
        for t in &self.terms {
            let mut arg = t.phase;
            for i in 0..D {
                arg += t.wave[i] as f64 * self.freq[i] * x[i];
            }
            s += t.amp * arg.cos();
        }
        s
    }

    fn gradient(&self, x: Point<D>) -> Point<D> {
        let mut g = [0.0; D];
        for t in &self.terms {
            let mut arg = t.phase;
            for i in 0..D {
                arg += t.wave[i] as f64 * self.freq[i] * x[i];
            }
            let s = -t.amp * arg.sin();
            for i in 0..D {
                g[i] += s * t.wave[i] as f64 * self.freq[i];
            }
        }
        g
    }

    fn hessian(&self, x: Point<D>) -> [[f64; D]; D] {
        let mut h = [[0.0; D]; D];
        for t in &self.terms {
            let mut arg = t.phase;
            for i in 0..D {
                arg += t.wave[i] as f64 * self.freq[i] * x[i];
            }
            let c = -t.amp * arg.cos();
            for i in 0..D {
                for j in 0..D {
                    h[i][j] += c
                        * (t.wave[i] as f64 * self.freq[i])
                        * (t.wave[j] as f64 * self.freq[j]);
                }
            }
        }
        h
    }

    fn tag(&self) -> ReprTag {
        ReprTag::TrigPolynomial
    }
}

/// The S-valley potential on the 2 pi-torus:
/// `U(x, y) = 3 - sin y - 2 cos(x - y - 4 cos(y - a))`, `a = arccos(1/4)`.
///
/// Its four critical points and their Hessians have closed forms, which makes
/// it the primary golden-value preset (`nr2006`).
#[derive(Debug, Clone, Copy)]
struct SValley {
    a: f64,
}

impl SValley {
    fn new() -> Self {
        Self { a: (0.25f64).acos() }
    }
}

impl PotentialRepr<2> for SValley {
    fn value(&self, x: Point<2>) -> f64 {
        let w = x[0] - x[1] - 4.0 * (x[1] - self.a).cos();
        3.0 - x[1].sin() - 2.0 * w.cos()
    }

    fn gradient(&self, x: Point<2>) -> Point<2> {
        let w = x[0] - x[1] - 4.0 * (x[1] - self.a).cos();
        let wy = -1.0 + 4.0 * (x[1] - self.a).sin();
        let ux = 2.0 * w.sin();
        [ux, wy * ux - x[1].cos()]
    }

    fn hessian(&self, x: Point<2>) -> [[f64; 2]; 2] {
        let w = x[0] - x[1] - 4.0 * (x[1] - self.a).cos();
        let wy = -1.0 + 4.0 * (x[1] - self.a).sin();
        let wyy = 4.0 * (x[1] - self.a).cos();
        let uxx = 2.0 * w.cos();
        let uxy = uxx * wy;
        let uyy = x[1].sin() + uxx * wy * wy + 2.0 * w.sin() * wyy;
        [[uxx, uxy], [uxy, uyy]]
    }

    fn tag(&self) -> ReprTag {
        ReprTag::AnalyticPreset
    }
}

#[derive(Debug, Clone)]
struct GridRepr1(PeriodicSpline1);

impl PotentialRepr<1> for GridRepr1 {
    fn value(&self, x: Point<1>) -> f64 {
        self.0.value(x[0])
    }
    fn gradient(&self, x: Point<1>) -> Point<1> {
        [self.0.deriv(x[0])]
    }
    fn hessian(&self, x: Point<1>) -> [[f64; 1]; 1] {
        [[self.0.deriv2(x[0])]]
    }
    fn tag(&self) -> ReprTag {
        ReprTag::GridSpline
    }
}

#[derive(Debug, Clone)]
struct GridRepr2(PeriodicSpline2);

impl PotentialRepr<2> for GridRepr2 {
    fn value(&self, x: Point<2>) -> f64 {
        self.0.value(x)
    }
    fn gradient(&self, x: Point<2>) -> Point<2> {
        self.0.gradient(x)
    }
    fn hessian(&self, x: Point<2>) -> [[f64; 2]; 2] {
        self.0.hessian(x)
    }
    fn tag(&self) -> ReprTag {
        ReprTag::GridSpline
    }
}

/// A smooth periodic potential `U` on a flat torus.
#[derive(Debug, Clone)]
pub struct PeriodicPotential<const D: usize> {
    torus: Torus<D>,
    repr: Arc<dyn PotentialRepr<D>>,
}

impl<const D: usize> PeriodicPotential<D> {
    pub fn from_trig(torus: Torus<D>, terms: Vec<TrigTerm<D>>) -> Self {
        let mut freq = [0.0; D];
        for i in 0..D {
            freq[i] = 2.0 * std::f64::consts::PI / torus.periods()[i];
        }
        Self {
            torus,
            repr: Arc::new(TrigPoly { terms, freq }),
        }
    }

    pub fn zero(torus: Torus<D>) -> Self {
        Self::from_trig(torus, Vec::new())
    }

    pub fn torus(&self) -> Torus<D> {
        self.torus
    }

    pub fn tag(&self) -> ReprTag {
        self.repr.tag()
    }

    pub fn value(&self, x: Point<D>) -> f64 {
        self.repr.value(self.torus.wrap(x))
    }

    pub fn gradient(&self, x: Point<D>) -> Point<D> {
        self.repr.gradient(self.torus.wrap(x))
    }

    pub fn hessian(&self, x: Point<D>) -> [[f64; D]; D] {
        self.repr.hessian(self.torus.wrap(x))
    }
}

impl PeriodicPotential<1> {
    pub fn from_grid_1d(torus: Torus<1>, samples: &[f64]) -> Self {
        let spline = PeriodicSpline1::from_samples(samples, torus.periods()[0]);
        Self {
            torus,
            repr: Arc::new(GridRepr1(spline)),
        }
    }
}

impl PeriodicPotential<2> {
    pub fn from_grid_2d(torus: Torus<2>, samples: &[f64], nx: usize, ny: usize) -> Self {
        let spline = PeriodicSpline2::from_samples(samples, nx, ny, torus.periods());
        Self {
            torus,
            repr: Arc::new(GridRepr2(spline)),
        }
    }
}

/// A closed one-form `alpha = -dU + sum_i harmonic_i dx^i`.
///
/// The exact part is stored through its periodic primitive `U` (contributing
/// `-dU`), so line integrals of the exact part reduce to primitive
/// differences and are exact to machine precision.
#[derive(Debug, Clone)]
pub struct ClosedOneForm<const D: usize> {
    torus: Torus<D>,
    exact: Option<PeriodicPotential<D>>,
    harmonic: [f64; D],
}

impl<const D: usize> ClosedOneForm<D> {
    pub fn new(torus: Torus<D>, exact: Option<PeriodicPotential<D>>, harmonic: [f64; D]) -> Self {
        Self {
            torus,
            exact,
            harmonic,
        }
    }

    /// The harmonic representative of `c dx^axis`.
    pub fn coordinate(torus: Torus<D>, axis: usize, c: f64) -> Self {
        let mut harmonic = [0.0; D];
        harmonic[axis] = c;
        Self {
            torus,
            exact: None,
            harmonic,
        }
    }

    pub fn torus(&self) -> Torus<D> {
        self.torus
    }

    pub fn harmonic(&self) -> [f64; D] {
        self.harmonic
    }

    /// Periodic primitive of the exact part (the form contributes `-dU`).
    pub fn exact_part(&self) -> Option<&PeriodicPotential<D>> {
        self.exact.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        self.harmonic.iter().all(|&c| c == 0.0)
    }

    /// Pointwise evaluation `alpha_x(w)` for a tangent vector `w`.
    pub fn apply(&self, x: Point<D>, w: Point<D>) -> f64 {
        let mut cov = self.harmonic;
        if let Some(u) = &self.exact {
            let g = u.gradient(x);
            for i in 0..D {
                cov[i] -= g[i];
            }
        }
        dot(cov, w)
    }

    /// Line integral along a polyline of cover points (an explicit lift).
    ///
    /// Closedness makes the value depend only on the lift endpoints: the
    /// exact part telescopes to a primitive difference and the harmonic part
    /// pairs with the total cover displacement.
    pub fn line_integral_lifted(&self, lift: &[Point<D>]) -> f64 {
        assert!(lift.len() >= 2, "path needs at least two points");
        let first = lift[0];
        let last = lift[lift.len() - 1];
        let mut total = dot(self.harmonic, sub(last, first));
        if let Some(u) = &self.exact {
            total += u.value(first) - u.value(last);
        }
        total
    }

    /// Line integral along the fundamental loop of `axis`:
    /// equals `harmonic[axis] * L_axis`.
    pub fn fundamental_loop_integral(&self, axis: usize) -> f64 {
        self.harmonic[axis] * self.torus.periods()[axis]
    }
}

/// Lift a polyline of torus points to the cover starting from `base`,
/// choosing the shortest displacement per segment. Rejects segments at or
/// beyond half a period, where the winding would be ambiguous.
pub fn lift_polyline<const D: usize>(
    torus: &Torus<D>,
    base: Point<D>,
    points: &[Point<D>],
) -> Result<Vec<Point<D>>> {
    let mut out = Vec::with_capacity(points.len());
    let mut cur = base;
    out.push(cur);
    for k in 1..points.len() {
        let d = torus.displacement(points[k], points[k - 1]);
        for i in 0..D {
            if d[i].abs() >= torus.periods()[i] / 2.0 - 1e-12 {
                return Err(FluxError::AmbiguousWinding { len: d[i].abs() });
            }
        }
        cur = add(cur, d);
        out.push(cur);
    }
    Ok(out)
}

/// A drift `v = -grad U + tilt` on a flat torus, dual to the closed one-form
/// `-dU + sum_i tilt_i dx^i`.
#[derive(Debug, Clone)]
pub struct TiltedDrift<const D: usize> {
    potential: PeriodicPotential<D>,
    tilt: [f64; D],
}

impl<const D: usize> TiltedDrift<D> {
    pub fn new(potential: PeriodicPotential<D>, tilt: [f64; D]) -> Self {
        Self { potential, tilt }
    }

    pub fn gradient_only(potential: PeriodicPotential<D>) -> Self {
        Self {
            potential,
            tilt: [0.0; D],
        }
    }

    pub fn torus(&self) -> Torus<D> {
        self.potential.torus()
    }

    pub fn potential(&self) -> &PeriodicPotential<D> {
        &self.potential
    }

    pub fn tilt(&self) -> [f64; D] {
        self.tilt
    }

    /// `v(x) = -grad U(x) + tilt`, defined for torus and cover points alike.
    pub fn eval(&self, x: Point<D>) -> Point<D> {
        let g = self.potential.gradient(x);
        let mut v = self.tilt;
        for i in 0..D {
            v[i] -= g[i];
        }
        v
    }

    /// Jacobian of the drift; equals minus the Hessian of `U` and is
    /// therefore symmetric for drifts dual to closed forms.
    pub fn jacobian(&self, x: Point<D>) -> [[f64; D]; D] {
        let mut h = self.potential.hessian(x);
        for row in h.iter_mut() {
            for e in row.iter_mut() {
                *e = -*e;
            }
        }
        h
    }

    /// The tilted potential on the universal cover:
    /// `U~(x) = U(x mod L) - tilt . x`, a primitive of `-v^flat`.
    pub fn lifted_potential(&self, x: Point<D>) -> f64 {
        self.potential.value(x) - dot(self.tilt, x)
    }

    /// The closed one-form dual to the drift.
    pub fn one_form(&self) -> ClosedOneForm<D> {
        ClosedOneForm::new(self.torus(), Some(self.potential.clone()), self.tilt)
    }

    /// Coarse bound on `max |v|` from a sampling sweep.
    pub fn speed_bound(&self, samples_per_axis: usize) -> f64 {
        let periods = self.torus().periods();
        let n = samples_per_axis.max(8);
        let mut vmax: f64 = 0.0;
        match D {
            1 => {
                for i in 0..n {
                    let mut x = [0.0; D];
                    x[0] = i as f64 / n as f64 * periods[0];
                    vmax = vmax.max(norm(self.eval(x)));
                }
            }
            _ => {
                for i in 0..n {
                    for j in 0..n {
                        let mut x = [0.0; D];
                        x[0] = i as f64 / n as f64 * periods[0];
                        x[1] = j as f64 / n as f64 * periods[1];
                        vmax = vmax.max(norm(self.eval(x)));
                    }
                }
            }
        }
        vmax * 1.05
    }
}

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// The `nr2006` S-valley preset on the 2 pi-torus.
pub fn preset_nr2006() -> PeriodicPotential<2> {
    let torus = Torus::new([TWO_PI, TWO_PI]).expect("static periods");
    PeriodicPotential {
        torus,
        repr: Arc::new(SValley::new()),
    }
}

/// `U(x, y) = cos x + cos y` on the 2 pi-torus.
pub fn preset_cos_cos() -> PeriodicPotential<2> {
    let torus = Torus::new([TWO_PI, TWO_PI]).expect("static periods");
    PeriodicPotential::from_trig(
        torus,
        vec![
            TrigTerm {
                wave: [1, 0],
                amp: 1.0,
                phase: 0.0,
            },
            TrigTerm {
                wave: [0, 1],
                amp: 1.0,
                phase: 0.0,
            },
        ],
    )
}

/// Asymmetric double-well preset with two sinks of unequal depth:
/// `U(x, y) = cos y - 1.1 cos x - 0.9 cos 2x + 0.15 sin x`.
pub fn preset_two_well() -> PeriodicPotential<2> {
    let torus = Torus::new([TWO_PI, TWO_PI]).expect("static periods");
    PeriodicPotential::from_trig(
        torus,
        vec![
            TrigTerm {
                wave: [0, 1],
                amp: 1.0,
                phase: 0.0,
            },
            TrigTerm {
                wave: [1, 0],
                amp: -1.1,
                phase: 0.0,
            },
            TrigTerm {
                wave: [2, 0],
                amp: -0.9,
                phase: 0.0,
            },
            TrigTerm {
                wave: [1, 0],
                amp: 0.15,
                phase: -std::f64::consts::FRAC_PI_2,
            },
        ],
    )
}

/// `U(x) = cos x` on the 2 pi-circle.
pub fn preset_cos_1d() -> PeriodicPotential<1> {
    let torus = Torus::new([TWO_PI]).expect("static periods");
    PeriodicPotential::from_trig(
        torus,
        vec![TrigTerm {
            wave: [1],
            amp: 1.0,
            phase: 0.0,
        }],
    )
}

/// JSON document describing a potential plus tilt, matching the external
/// interface: one of `preset`, `trig`, `grid` must be present.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Rows [k_x, k_y, amp, phase] (2D) or [k, amp, phase] (1D).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trig: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub file: String,
    pub nx: usize,
    #[serde(default)]
    pub ny: Option<usize>,
}

/// A drift of either supported dimension, as produced from a [`PotentialSpec`].
#[derive(Debug, Clone)]
pub enum DriftSpec {
    One(TiltedDrift<1>),
    Two(TiltedDrift<2>),
}

impl PotentialSpec {
    pub fn for_preset(name: &str, tilt: Vec<f64>) -> Self {
        Self {
            preset: Some(name.to_string()),
            trig: None,
            grid: None,
            tilt: Some(tilt),
            periods: None,
        }
    }

    fn dim(&self) -> Result<usize> {
        if let Some(p) = &self.periods {
            if p.len() == 1 || p.len() == 2 {
                return Ok(p.len());
            }
            return Err(FluxError::InvalidSpec(format!(
                "periods must have length 1 or 2, got {}",
                p.len()
            )));
        }
        if let Some(name) = &self.preset {
            return match name.as_str() {
                "cos1d" => Ok(1),
                _ => Ok(2),
            };
        }
        if let Some(rows) = &self.trig {
            if let Some(row) = rows.first() {
                return match row.len() {
                    3 => Ok(1),
                    4 => Ok(2),
                    n => Err(FluxError::InvalidSpec(format!(
                        "trig rows must have 3 (1D) or 4 (2D) entries, got {n}"
                    ))),
                };
            }
        }
        if let Some(g) = &self.grid {
            return Ok(if g.ny.is_some() { 2 } else { 1 });
        }
        Err(FluxError::InvalidSpec(
            "potential spec needs one of: preset, trig, grid".into(),
        ))
    }

    pub fn build(&self) -> Result<DriftSpec> {
        let provided =
            self.preset.is_some() as u8 + self.trig.is_some() as u8 + self.grid.is_some() as u8;
        if provided != 1 {
            return Err(FluxError::InvalidSpec(
                "exactly one of preset, trig, grid must be given".into(),
            ));
        }
        let dim = self.dim()?;
        match dim {
            1 => Ok(DriftSpec::One(self.build_1d()?)),
            2 => Ok(DriftSpec::Two(self.build_2d()?)),
            _ => unreachable!(),
        }
    }

    fn tilt_array<const D: usize>(&self) -> Result<[f64; D]> {
        match &self.tilt {
            None => Ok([0.0; D]),
            Some(t) if t.len() == D => {
                let mut a = [0.0; D];
                a.copy_from_slice(t);
                Ok(a)
            }
            Some(t) => Err(FluxError::InvalidSpec(format!(
                "tilt must have {D} entries, got {}",
                t.len()
            ))),
        }
    }

    fn torus_of<const D: usize>(&self) -> Result<Torus<D>> {
        match &self.periods {
            None => Torus::new([TWO_PI; D]),
            Some(p) if p.len() == D => {
                let mut a = [0.0; D];
                a.copy_from_slice(p);
                Torus::new(a)
            }
            Some(p) => Err(FluxError::InvalidSpec(format!(
                "periods must have {D} entries, got {}",
                p.len()
            ))),
        }
    }

    fn build_1d(&self) -> Result<TiltedDrift<1>> {
        let torus = self.torus_of::<1>()?;
        let tilt = self.tilt_array::<1>()?;
        let potential = if let Some(name) = &self.preset {
            match name.as_str() {
                "cos1d" => preset_cos_1d(),
                other => {
                    return Err(FluxError::InvalidSpec(format!(
                        "unknown 1D preset '{other}' (available: cos1d)"
                    )))
                }
            }
        } else if let Some(rows) = &self.trig {
            let mut terms = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() != 3 {
                    return Err(FluxError::InvalidSpec(
                        "1D trig rows are [k, amp, phase]".into(),
                    ));
                }
                terms.push(TrigTerm {
                    wave: [row[0] as i32],
                    amp: row[1],
                    phase: row[2],
                });
            }
            PeriodicPotential::from_trig(torus, terms)
        } else if let Some(g) = &self.grid {
            let samples = read_le_f64(&g.file, g.nx)?;
            PeriodicPotential::from_grid_1d(torus, &samples)
        } else {
            unreachable!()
        };
        Ok(TiltedDrift::new(potential, tilt))
    }

    fn build_2d(&self) -> Result<TiltedDrift<2>> {
        let torus = self.torus_of::<2>()?;
        let tilt = self.tilt_array::<2>()?;
        let potential = if let Some(name) = &self.preset {
            match name.as_str() {
                "nr2006" => preset_nr2006(),
                "coscos" => preset_cos_cos(),
                "twowell" => preset_two_well(),
                other => {
                    return Err(FluxError::InvalidSpec(format!(
                        "unknown 2D preset '{other}' (available: nr2006, coscos, twowell)"
                    )))
                }
            }
        } else if let Some(rows) = &self.trig {
            let mut terms = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() != 4 {
                    return Err(FluxError::InvalidSpec(
                        "2D trig rows are [kx, ky, amp, phase]".into(),
                    ));
                }
                terms.push(TrigTerm {
                    wave: [row[0] as i32, row[1] as i32],
                    amp: row[2],
                    phase: row[3],
                });
            }
            PeriodicPotential::from_trig(torus, terms)
        } else if let Some(g) = &self.grid {
            let ny = g.ny.ok_or_else(|| {
                FluxError::InvalidSpec("2D grid potential needs ny".into())
            })?;
            let samples = read_le_f64(&g.file, g.nx * ny)?;
            PeriodicPotential::from_grid_2d(torus, &samples, g.nx, ny)
        } else {
            unreachable!()
        };
        Ok(TiltedDrift::new(potential, tilt))
    }
}

fn read_le_f64(path: &str, count: usize) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() != count * 8 {
        return Err(FluxError::InvalidSpec(format!(
            "grid file {path}: expected {} bytes ({count} little-endian f64), got {}",
            count * 8,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT15: f64 = 3.872983346207417;

    fn fd_gradient<const D: usize>(u: &PeriodicPotential<D>, x: Point<D>, h: f64) -> Point<D> {
        let mut g = [0.0; D];
        for i in 0..D {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            g[i] = (u.value(xp) - u.value(xm)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn nr2006_periodicity() {
        let u = preset_nr2006();
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng >> 11) as f64 / (1u64 << 53) as f64 * TWO_PI
        };
        for _ in 0..1000 {
            let x = [next(), next()];
            for shift in [[TWO_PI, 0.0], [0.0, TWO_PI], [TWO_PI, -TWO_PI]] {
                let y = add(x, shift);
                assert!((u.value(x) - u.value(y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nr2006_gradient_matches_finite_differences() {
        let u = preset_nr2006();
        for k in 0..50 {
            let x = [0.11 + 0.12 * k as f64, 6.1 - 0.118 * k as f64];
            let g = u.gradient(x);
            let gfd = fd_gradient(&u, x, 1e-6);
            for i in 0..2 {
                let denom = g[i].abs().max(1.0);
                assert!(
                    ((g[i] - gfd[i]) / denom).abs() < 1e-6,
                    "gradient mismatch at {x:?}: {g:?} vs {gfd:?}"
                );
            }
        }
    }

    #[test]
    fn nr2006_hessian_matches_finite_differences() {
        let u = preset_nr2006();
        let h = 1e-5;
        for k in 0..20 {
            let x = [0.3 + 0.29 * k as f64, 0.17 * k as f64];
            let hess = u.hessian(x);
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let gp = u.gradient(xp);
                let gm = u.gradient(xm);
                for j in 0..2 {
                    let fd = (gp[j] - gm[j]) / (2.0 * h);
                    assert!(
                        (hess[i][j] - fd).abs() < 1e-5 * hess[i][j].abs().max(1.0),
                        "hessian mismatch at {x:?} [{i}][{j}]"
                    );
                }
            }
        }
    }

    #[test]
    fn nr2006_known_critical_values() {
        let u = preset_nr2006();
        let pi = std::f64::consts::PI;
        let v = [pi / 2.0 + SQRT15, pi / 2.0];
        let s1 = [1.5 * pi - SQRT15, 1.5 * pi];
        let s2 = [SQRT15 - pi / 2.0, pi / 2.0];
        let m = [2.5 * pi - SQRT15, 1.5 * pi];
        for (p, val) in [(v, 0.0), (s1, 2.0), (s2, 4.0), (m, 6.0)] {
            assert!((u.value(p) - val).abs() < 1e-12, "value at {p:?}");
            assert!(norm(u.gradient(p)) < 1e-12, "gradient at {p:?}");
        }
        let hv = u.hessian(v);
        assert!((hv[0][0] - 2.0).abs() < 1e-12 && (hv[1][1] - 1.0).abs() < 1e-12);
        assert!(hv[0][1].abs() < 1e-12);
        let hm = u.hessian(m);
        assert!((hm[0][0] + 2.0).abs() < 1e-10);
        assert!((hm[0][1] - 4.0).abs() < 1e-10);
        assert!((hm[1][1] + 9.0).abs() < 1e-10);
        let hs1 = u.hessian(s1);
        assert!((hs1[0][0] - 2.0).abs() < 1e-10);
        assert!((hs1[0][1] + 4.0).abs() < 1e-10);
        assert!((hs1[1][1] - 7.0).abs() < 1e-10);
    }

    #[test]
    fn drift_is_gradient_plus_tilt() {
        let drift = TiltedDrift::new(preset_nr2006(), [0.07, 0.0]);
        let x = [1.0, 1.0];
        let g = drift.potential().gradient(x);
        let v = drift.eval(x);
        assert!((v[0] - (-g[0] + 0.07)).abs() < 1e-15);
        assert!((v[1] + g[1]).abs() < 1e-15);

        // zero potential, constant tilt
        let zero = PeriodicPotential::zero(Torus::new([TWO_PI, TWO_PI]).unwrap());
        let d = TiltedDrift::new(zero, [0.3, 0.0]);
        assert_eq!(d.eval([2.0, 5.0]), [0.3, 0.0]);
    }

    #[test]
    fn drift_zero_at_nr2006_minimum() {
        let drift = TiltedDrift::gradient_only(preset_nr2006());
        let v = [std::f64::consts::FRAC_PI_2 + SQRT15, std::f64::consts::FRAC_PI_2];
        assert!(norm(drift.eval(v)) < 1e-12);
    }

    #[test]
    fn lifted_potential_deck_translation() {
        let c = 0.3;
        let drift = TiltedDrift::new(preset_nr2006(), [c, 0.0]);
        for k in 0..20 {
            let x = [0.4 * k as f64, 0.3 * k as f64];
            let a = drift.lifted_potential([x[0] + TWO_PI, x[1]]);
            let b = drift.lifted_potential(x);
            assert!((a - b + TWO_PI * c).abs() < 1e-12);
            // direct evaluation oracle
            let direct = drift.potential().value(x) - c * x[0];
            assert!((b - direct).abs() < 1e-12);
        }
        // zero tilt: lifted potential is periodic
        let d0 = TiltedDrift::gradient_only(preset_nr2006());
        let x = [1.3, 2.2];
        assert!(
            (d0.lifted_potential([x[0] + TWO_PI, x[1]]) - d0.lifted_potential(x)).abs() < 1e-12
        );
    }

    #[test]
    fn line_integral_fundamental_loop() {
        let torus = Torus::new([TWO_PI, TWO_PI]).unwrap();
        let dx = ClosedOneForm::coordinate(torus, 0, 1.0);
        // one full positive x-loop, lifted
        let lift = [[0.0, 1.0], [TWO_PI / 2.0, 1.0], [TWO_PI, 1.0]];
        assert!((dx.line_integral_lifted(&lift) - TWO_PI).abs() < 1e-12);
        // reversal negates
        let rev = [[TWO_PI, 1.0], [TWO_PI / 2.0, 1.0], [0.0, 1.0]];
        assert!((dx.line_integral_lifted(&rev) + TWO_PI).abs() < 1e-12);
    }

    #[test]
    fn line_integral_exact_form_closed_loop_vanishes() {
        let u = preset_nr2006();
        let torus = u.torus();
        let alpha = ClosedOneForm::new(torus, Some(u), [0.0, 0.0]);
        // closed loop on the torus = lift returning to start + period shift;
        // exact part depends only on wrapped endpoints
        let lift = [[0.2, 0.3], [2.0, 4.0], [0.2 + TWO_PI, 0.3]];
        // exact part: U(start) - U(end) = 0 by periodicity; harmonic zero
        assert!(alpha.line_integral_lifted(&lift).abs() < 1e-12);
    }

    #[test]
    fn line_integral_concatenation_additivity() {
        let drift = TiltedDrift::new(preset_nr2006(), [0.12, 0.0]);
        let alpha = drift.one_form();
        let a = [[0.1, 0.2], [1.0, 2.0]];
        let b = [[1.0, 2.0], [4.0, 9.0]];
        let ab = [[0.1, 0.2], [1.0, 2.0], [4.0, 9.0]];
        let sum = alpha.line_integral_lifted(&a) + alpha.line_integral_lifted(&b);
        assert!((alpha.line_integral_lifted(&ab) - sum).abs() < 1e-12);
    }

    #[test]
    fn lift_rejects_ambiguous_segments() {
        let torus = Torus::new([TWO_PI, TWO_PI]).unwrap();
        let pts = [[0.0, 0.0], [TWO_PI / 2.0, 0.0]];
        assert!(matches!(
            lift_polyline(&torus, [0.0, 0.0], &pts),
            Err(FluxError::AmbiguousWinding { .. })
        ));
        let fine = [[0.0, 0.0], [1.0, 0.5], [2.5, 1.0]];
        let lifted = lift_polyline(&torus, [0.0, 0.0], &fine).unwrap();
        assert_eq!(lifted.len(), 3);
    }

    #[test]
    fn spec_roundtrip_and_validation() {
        let json = r#"{"preset": "nr2006", "tilt": [0.1, 0.0]}"#;
        let spec: PotentialSpec = serde_json::from_str(json).unwrap();
        match spec.build().unwrap() {
            DriftSpec::Two(d) => assert!((d.tilt()[0] - 0.1).abs() < 1e-15),
            _ => panic!("expected 2D drift"),
        }
        // unknown keys rejected
        let bad = r#"{"preset": "nr2006", "tilts": [0.1, 0.0]}"#;
        assert!(serde_json::from_str::<PotentialSpec>(bad).is_err());
        // trig 1D
        let one = r#"{"trig": [[1.0, 1.0, 0.0]], "periods": [6.283185307179586]}"#;
        let spec: PotentialSpec = serde_json::from_str(one).unwrap();
        assert!(matches!(spec.build().unwrap(), DriftSpec::One(_)));
    }
}
