//! Monte-Carlo flux estimation: Euler-Maruyama paths on the cover with
//! accumulated line integrals of a closed one-form.
//!
//! The long-time average of the line integral along a sample path converges
//! almost surely to the steady-state flux, which makes path simulation an
//! independent check on the Fokker-Planck route at moderate noise. Samples
//! run on independent counter-seeded substreams and are reduced in a fixed
//! order, so results are bit-reproducible for a given seed regardless of
//! worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{FluxError, Result};
use crate::fields::{dot, ClosedOneForm, Point, TiltedDrift};
use crate::fp::{FluxEstimate, FluxMethod};

/// Monte-Carlo estimate with per-sample values retained for reuse.
#[derive(Debug, Clone)]
pub struct SdeFlux {
    pub mean: f64,
    pub stderr: f64,
    pub samples: Vec<f64>,
}

impl SdeFlux {
    pub fn estimate(&self, eps: f64) -> FluxEstimate {
        FluxEstimate {
            value: self.mean,
            eps,
            method: FluxMethod::Sde,
            uncertainty: Some(self.stderr),
        }
    }
}

fn simulate_one<const D: usize>(
    drift: &TiltedDrift<D>,
    form: &ClosedOneForm<D>,
    eps: f64,
    dt: f64,
    horizon: f64,
    seed: u64,
    stream: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let noise = (2.0 * eps * dt).sqrt();
    let steps = (horizon / dt).round() as usize;
    let burn = steps / 10;
    let mut x: Point<D> = [0.0; D];
    // start spread over the fundamental domain by substream
    for i in 0..D {
        x[i] = rng.gen::<f64>() * drift.torus().periods()[i];
    }
    let mut integral = 0.0;
    let mut time_in = 0.0;
    for step in 0..steps {
        let v = drift.eval(x);
        let mut nx = x;
        for i in 0..D {
            // Box-Muller keeps the dependency surface small and is exact
            let (u1, u2): (f64, f64) = (rng.gen::<f64>(), rng.gen());
            let g = (-2.0 * u1.max(1e-300).ln()).sqrt()
                * (2.0 * std::f64::consts::PI * u2).cos();
            nx[i] = x[i] + v[i] * dt + noise * g;
        }
        if step >= burn {
            // line integral of the form over the lifted segment
            let exact = match form.exact_part() {
                Some(u) => u.value(x) - u.value(nx),
                None => 0.0,
            };
            let mut disp = [0.0; D];
            for i in 0..D {
                disp[i] = nx[i] - x[i];
            }
            integral += exact + dot(form.harmonic(), disp);
            time_in += dt;
        }
        x = nx;
    }
    integral / time_in
}

/// Estimate the flux of `form` by `batch` independent Euler-Maruyama paths
/// of horizon `horizon` and step `dt`, at noise intensity `eps`.
///
/// Fails with `StepTooLarge` when a step could plausibly hop half a period
/// (drift displacement plus three standard deviations of the noise).
pub fn estimate_flux<const D: usize>(
    drift: &TiltedDrift<D>,
    form: &ClosedOneForm<D>,
    eps: f64,
    dt: f64,
    horizon: f64,
    batch: usize,
    seed: u64,
) -> Result<SdeFlux> {
    if batch == 0 {
        return Err(FluxError::InsufficientData("batch must be positive".into()));
    }
    let vmax = drift.speed_bound(64);
    let step = dt * vmax + 3.0 * (2.0 * eps * dt).sqrt();
    let half = drift.torus().min_period() / 2.0;
    if step >= half {
        return Err(FluxError::StepTooLarge { step });
    }
    let samples: Vec<f64> = (0..batch as u64)
        .into_par_iter()
        .map(|k| simulate_one(drift, form, eps, dt, horizon, seed, k))
        .collect();
    // deterministic ordered reduction
    let mean = samples.iter().sum::<f64>() / batch as f64;
    let var = samples
        .iter()
        .map(|s| (s - mean) * (s - mean))
        .sum::<f64>()
        / (batch.max(2) - 1) as f64;
    let stderr = (var / batch as f64).sqrt();
    Ok(SdeFlux {
        mean,
        stderr,
        samples,
    })
}
