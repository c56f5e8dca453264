//! Periodic cubic B-spline interpolation on uniform grids.
//!
//! Grid samples are converted once into B-spline coefficients by solving the
//! periodic collocation system (1/6, 4/6, 1/6); evaluation is then local and
//! C^2, which keeps Newton iterations on interpolated potentials honest.

/// Uniform-basis cubic B-spline weights and derivatives at parameter `u` in [0,1).
#[inline]
fn basis(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        (1.0 - 3.0 * u + 3.0 * u2 - u3) / 6.0,
        (4.0 - 6.0 * u2 + 3.0 * u3) / 6.0,
        (1.0 + 3.0 * u + 3.0 * u2 - 3.0 * u3) / 6.0,
        u3 / 6.0,
    ]
}

#[inline]
fn basis_d1(u: f64) -> [f64; 4] {
    let u2 = u * u;
    [
        (-1.0 + 2.0 * u - u2) / 2.0,
        (-4.0 * u + 3.0 * u2) / 2.0,
        (1.0 + 2.0 * u - 3.0 * u2) / 2.0,
        u2 / 2.0,
    ]
}

#[inline]
fn basis_d2(u: f64) -> [f64; 4] {
    [1.0 - u, -2.0 + 3.0 * u, 1.0 - 3.0 * u, u]
}

/// Solve the periodic tridiagonal system with constant stencil (a, b, a),
/// b on the diagonal, using the Sherman-Morrison correction.
fn solve_periodic_tridiag(a: f64, b: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    assert!(n >= 3, "periodic spline needs at least 3 samples per axis");
    // Modified system: subtract gamma at (0,0) and b'... standard trick with
    // u = (gamma, 0, ..., a), v = (1, 0, ..., a/gamma).
    let gamma = -b;
    let solve_tridiag = |d0: f64, dn: f64, r: &[f64]| -> Vec<f64> {
        // Thomas algorithm on the non-periodic system with modified corners.
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut beta = d0;
        x[0] = r[0] / beta;
        for i in 1..n {
            c[i] = a / beta;
            let diag = if i == n - 1 { dn } else { b };
            beta = diag - a * c[i];
            x[i] = (r[i] - a * x[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i + 1] * x[i + 1];
        }
        x
    };
    let d0 = b - gamma;
    let dn = b - a * a / gamma;
    let y = solve_tridiag(d0, dn, rhs);
    let mut u_rhs = vec![0.0; n];
    u_rhs[0] = gamma;
    u_rhs[n - 1] = a;
    let z = solve_tridiag(d0, dn, &u_rhs);
    let fact = (y[0] + a * y[n - 1] / gamma) / (1.0 + z[0] + a * z[n - 1] / gamma);
    (0..n).map(|i| y[i] - fact * z[i]).collect()
}

/// Compute B-spline coefficients interpolating periodic samples exactly.
pub fn prefilter_periodic(samples: &[f64]) -> Vec<f64> {
    solve_periodic_tridiag(1.0 / 6.0, 4.0 / 6.0, samples)
}

/// One-dimensional periodic cubic spline over `n` uniform samples on [0, period).
#[derive(Debug, Clone)]
pub struct PeriodicSpline1 {
    coeffs: Vec<f64>,
    period: f64,
}

impl PeriodicSpline1 {
    pub fn from_samples(samples: &[f64], period: f64) -> Self {
        Self {
            coeffs: prefilter_periodic(samples),
            period,
        }
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.coeffs.len() as f64;
        let t = (x / self.period).rem_euclid(1.0) * n;
        let i = t.floor();
        let i = if i >= n { 0.0 } else { i };
        (i as usize, t - i)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (i, u) = self.locate(x);
        let w = basis(u);
        let n = self.coeffs.len();
        let mut s = 0.0;
        for (k, wk) in w.iter().enumerate() {
            // coefficient index i-1+k, periodic
            let idx = (i + n + k - 1) % n;
            s += wk * self.coeffs[idx];
        }
        s
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (i, u) = self.locate(x);
        let w = basis_d1(u);
        let n = self.coeffs.len();
        let h = self.period / n as f64;
        let mut s = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let idx = (i + n + k - 1) % n;
            s += wk * self.coeffs[idx];
        }
        s / h
    }

    pub fn deriv2(&self, x: f64) -> f64 {
        let (i, u) = self.locate(x);
        let w = basis_d2(u);
        let n = self.coeffs.len();
        let h = self.period / n as f64;
        let mut s = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let idx = (i + n + k - 1) % n;
            s += wk * self.coeffs[idx];
        }
        s / (h * h)
    }
}

/// Tensor-product periodic bicubic spline on an nx-by-ny uniform grid.
///
/// Samples are stored row-major: `samples[j * nx + i]` is the value at
/// (i * Lx / nx, j * Ly / ny).
#[derive(Debug, Clone)]
pub struct PeriodicSpline2 {
    coeffs: Vec<f64>,
    nx: usize,
    ny: usize,
    periods: [f64; 2],
}

impl PeriodicSpline2 {
    pub fn from_samples(samples: &[f64], nx: usize, ny: usize, periods: [f64; 2]) -> Self {
        assert_eq!(samples.len(), nx * ny);
        // Prefilter along x (each row), then along y (each column).
        let mut coeffs = vec![0.0; nx * ny];
        let mut row = vec![0.0; nx];
        for j in 0..ny {
            row.copy_from_slice(&samples[j * nx..(j + 1) * nx]);
            let c = prefilter_periodic(&row);
            coeffs[j * nx..(j + 1) * nx].copy_from_slice(&c);
        }
        let mut col = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                col[j] = coeffs[j * nx + i];
            }
            let c = prefilter_periodic(&col);
            for j in 0..ny {
                coeffs[j * nx + i] = c[j];
            }
        }
        Self {
            coeffs,
            nx,
            ny,
            periods,
        }
    }

    #[inline]
    fn locate(&self, x: f64, period: f64, n: usize) -> (usize, f64) {
        let nf = n as f64;
        let t = (x / period).rem_euclid(1.0) * nf;
        let i = t.floor();
        let i = if i >= nf { 0.0 } else { i };
        (i as usize, t - i)
    }

    fn tensor(&self, x: [f64; 2], wx: [f64; 4], wy: [f64; 4], ix: usize, iy: usize) -> f64 {
        let _ = x;
        let (nx, ny) = (self.nx, self.ny);
        let mut s = 0.0;
        for (ky, wyk) in wy.iter().enumerate() {
            let j = (iy + ny + ky - 1) % ny;
            let mut sx = 0.0;
            for (kx, wxk) in wx.iter().enumerate() {
                let i = (ix + nx + kx - 1) % nx;
                sx += wxk * self.coeffs[j * nx + i];
            }
            s += wyk * sx;
        }
        s
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        let (ix, ux) = self.locate(x[0], self.periods[0], self.nx);
        let (iy, uy) = self.locate(x[1], self.periods[1], self.ny);
        self.tensor(x, basis(ux), basis(uy), ix, iy)
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let (ix, ux) = self.locate(x[0], self.periods[0], self.nx);
        let (iy, uy) = self.locate(x[1], self.periods[1], self.ny);
        let hx = self.periods[0] / self.nx as f64;
        let hy = self.periods[1] / self.ny as f64;
        [
            self.tensor(x, basis_d1(ux), basis(uy), ix, iy) / hx,
            self.tensor(x, basis(ux), basis_d1(uy), ix, iy) / hy,
        ]
    }

    pub fn hessian(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let (ix, ux) = self.locate(x[0], self.periods[0], self.nx);
        let (iy, uy) = self.locate(x[1], self.periods[1], self.ny);
        let hx = self.periods[0] / self.nx as f64;
        let hy = self.periods[1] / self.ny as f64;
        let uxx = self.tensor(x, basis_d2(ux), basis(uy), ix, iy) / (hx * hx);
        let uxy = self.tensor(x, basis_d1(ux), basis_d1(uy), ix, iy) / (hx * hy);
        let uyy = self.tensor(x, basis(ux), basis_d2(uy), ix, iy) / (hy * hy);
        [[uxx, uxy], [uxy, uyy]]
    }
}
