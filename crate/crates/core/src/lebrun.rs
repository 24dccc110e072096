//! LeBrun reduction on the end of the moduli space: u = log r̂ + v solves
//! Δ_T u + ∂²_r̂ e^u = 0 on T² × ℝ⁺, written in ρ = √r̂ as
//!
//! e^v(ρ²v″ + 3ρv′ + (ρv′)²) + 4ρ²Δ_T v = 0,
//!
//! i.e. L v = Q(v) with L = ρ²∂² + 3ρ∂ + 4ρ²Δ_T. The torus is ℂ/c(ℤ ⊕ τℤ)
//! and v is stored by dual-lattice Fourier modes on a uniform ρ grid.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C;
use rustfft::{Fft, FftPlanner};
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::specfun::{k01_scaled, lattice_shortest_vectors, HalfPlanePoint};
use crate::toymodel::{c_fib, lambda_T, MetricComponents};

pub const SOLVE_TOL: f64 = 1e-9;
pub const UNDERFLOW_FLOOR: f64 = 1e-13;
pub const PERTURBATIVE_BOUND: f64 = 0.2;

/// Dual lattice of c(ℤ ⊕ τℤ). Vectors in ℝ² are stored as complex numbers;
/// mode (m, n) is e^{2πi(mξ + nη)} at the point c(ξ + ητ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualLattice {
    pub tau: HalfPlanePoint,
    pub c: f64,
    pub alpha: C,
    pub beta: C,
}

impl DualLattice {
    pub fn new(tau: HalfPlanePoint, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("c", "lattice scale must be positive"));
        }
        let s = c * tau.im();
        Ok(Self { tau, c, alpha: -C::i() * tau.tau / s, beta: C::i() / s })
    }

    /// The fiber lattice c_fib(ℤ ⊕ τℤ) of the toy model.
    pub fn fiber(tau: HalfPlanePoint) -> Self {
        Self::new(tau, c_fib(tau)).expect("c_fib is positive")
    }

    pub fn vector(&self, m: i32, n: i32) -> C {
        self.alpha * m as f64 + self.beta * n as f64
    }

    pub fn norm(&self, m: i32, n: i32) -> f64 {
        self.vector(m, n).norm()
    }

    /// Physical point (x, y) of lattice coordinates (ξ, η).
    pub fn point(&self, xi: f64, eta: f64) -> (f64, f64) {
        let z = (C::new(xi, 0.0) + self.tau.tau * eta) * self.c;
        (z.re, z.im)
    }

    /// |μ₀|, the length of the shortest nonzero dual vector.
    pub fn shortest_norm(&self) -> f64 {
        let (len, _) = lattice_shortest_vectors(self.tau);
        len / (self.c * self.tau.im())
    }

    /// Decay rate 4π|μ| of the mode φ_μ.
    pub fn kappa(&self, m: i32, n: i32) -> f64 {
        4.0 * PI * self.norm(m, n)
    }
}

/// Complex Fourier coefficients per dual mode (|m|, |n| ≤ M) and ρ node.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusFourierField {
    pub lattice: DualLattice,
    pub m_cut: usize,
    pub rho: Vec<f64>,
    /// coeffs[k][i]: mode k = (m + M)(2M + 1) + (n + M) at rho[i].
    pub coeffs: Vec<Vec<C>>,
}

impl TorusFourierField {
    pub fn zeros(lattice: DualLattice, m_cut: usize, rho: Vec<f64>) -> Self {
        let k = (2 * m_cut + 1) * (2 * m_cut + 1);
        let n = rho.len();
        Self { lattice, m_cut, rho, coeffs: vec![vec![C::new(0.0, 0.0); n]; k] }
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn mode(&self, k: usize) -> (i32, i32) {
        let w = 2 * self.m_cut + 1;
        ((k / w) as i32 - self.m_cut as i32, (k % w) as i32 - self.m_cut as i32)
    }

    pub fn index(&self, m: i32, n: i32) -> Option<usize> {
        let mc = self.m_cut as i32;
        if m.abs() > mc || n.abs() > mc {
            return None;
        }
        Some(((m + mc) * (2 * mc + 1) + (n + mc)) as usize)
    }

    pub fn zero_index(&self) -> usize {
        self.n_modes() / 2
    }

    pub fn coeff(&self, m: i32, n: i32) -> Option<&[C]> {
        self.index(m, n).map(|k| self.coeffs[k].as_slice())
    }

    /// Largest |c(−μ) − conj c(μ)|.
    pub fn reality_defect(&self) -> f64 {
        let k = self.n_modes();
        let mut d: f64 = 0.0;
        for a in 0..k {
            for (x, y) in self.coeffs[a].iter().zip(&self.coeffs[k - 1 - a]) {
                d = d.max((x - y.conj()).norm());
            }
        }
        d
    }

    /// Value at lattice coordinates (ξ, η) and node i, by direct summation.
    /// Returns the full complex sum; the imaginary part measures reality.
    pub fn eval_complex(&self, xi: f64, eta: f64, i: usize) -> C {
        let mut s = C::new(0.0, 0.0);
        for k in 0..self.n_modes() {
            let c = self.coeffs[k][i];
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let (m, n) = self.mode(k);
            s += c * C::from_polar(1.0, 2.0 * PI * (m as f64 * xi + n as f64 * eta));
        }
        s
    }

    pub fn eval(&self, xi: f64, eta: f64, i: usize) -> f64 {
        self.eval_complex(xi, eta, i).re
    }

    /// Largest coefficient modulus on the outermost retained shell relative
    /// to the largest nonzero-mode modulus, at node i.
    pub fn tail_ratio(&self, i: usize) -> f64 {
        let mc = self.m_cut as i32;
        let (mut lead, mut tail) = (0.0f64, 0.0f64);
        for k in 0..self.n_modes() {
            let (m, n) = self.mode(k);
            if m == 0 && n == 0 {
                continue;
            }
            let a = self.coeffs[k][i].norm();
            lead = lead.max(a);
            if m.abs() == mc || n.abs() == mc {
                tail = tail.max(a);
            }
        }
        if lead == 0.0 {
            0.0
        } else {
            tail / lead
        }
    }

    /// Rows rho, mu_m, mu_n, re, im for modes that are not identically zero.
    pub fn to_csv(&self) -> String {
        let mut rows = Vec::new();
        for k in 0..self.n_modes() {
            if self.coeffs[k].iter().all(|c| c.norm_sqr() == 0.0) {
                continue;
            }
            let (m, n) = self.mode(k);
            for (i, c) in self.coeffs[k].iter().enumerate() {
                rows.push(vec![
                    crate::io::fmt_f64(self.rho[i]),
                    m.to_string(),
                    n.to_string(),
                    crate::io::fmt_f64(c.re),
                    crate::io::fmt_f64(c.im),
                ]);
            }
        }
        crate::io::csv_string(&["rho", "mu_m", "mu_n", "re", "im"], rows)
    }

    fn uniform_step(&self) -> Result<f64> {
        uniform_step(&self.rho)
    }
}

fn uniform_step(rho: &[f64]) -> Result<f64> {
    if rho.len() < 5 {
        return Err(Error::GridTooCoarse(format!("need at least 5 radial nodes, got {}", rho.len())));
    }
    if !(rho[0] > 0.0) {
        return Err(invalid("rho", "grid must be positive"));
    }
    let h = (rho[rho.len() - 1] - rho[0]) / (rho.len() - 1) as f64;
    for w in rho.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h {
            return Err(invalid("rho", "grid must be uniform and increasing"));
        }
    }
    Ok(h)
}

/// First and second radial derivatives: five-point fourth-order stencils
/// (one-sided at the ends) when there are at least six nodes, three-point
/// second-order stencils otherwise.
pub(crate) fn radial_derivs(y: &[C], h: f64) -> (Vec<C>, Vec<C>) {
    let n = y.len();
    let mut d1 = vec![C::new(0.0, 0.0); n];
    let mut d2 = vec![C::new(0.0, 0.0); n];
    if n < 6 {
        for i in 1..n - 1 {
            d1[i] = (y[i + 1] - y[i - 1]) / (2.0 * h);
            d2[i] = (y[i + 1] - y[i] * 2.0 + y[i - 1]) / (h * h);
        }
        d1[0] = (y[0] * -3.0 + y[1] * 4.0 - y[2]) / (2.0 * h);
        d1[n - 1] = (y[n - 1] * 3.0 - y[n - 2] * 4.0 + y[n - 3]) / (2.0 * h);
        d2[0] = (y[0] * 2.0 - y[1] * 5.0 + y[2] * 4.0 - y[3]) / (h * h);
        d2[n - 1] = (y[n - 1] * 2.0 - y[n - 2] * 5.0 + y[n - 3] * 4.0 - y[n - 4]) / (h * h);
        return (d1, d2);
    }
    let (h1, h2) = (12.0 * h, 12.0 * h * h);
    for i in 2..n - 2 {
        d1[i] = (-y[i + 2] + y[i + 1] * 8.0 - y[i - 1] * 8.0 + y[i - 2]) / h1;
        d2[i] = (-y[i + 2] + y[i + 1] * 16.0 - y[i] * 30.0 + y[i - 1] * 16.0 - y[i - 2]) / h2;
    }
    let one_sided = |y: &dyn Fn(usize) -> C, s: f64| -> [C; 4] {
        [
            (y(0) * -25.0 + y(1) * 48.0 - y(2) * 36.0 + y(3) * 16.0 - y(4) * 3.0) / h1 * s,
            (y(0) * -3.0 - y(1) * 10.0 + y(2) * 18.0 - y(3) * 6.0 + y(4)) / h1 * s,
            (y(0) * 45.0 - y(1) * 154.0 + y(2) * 214.0 - y(3) * 156.0 + y(4) * 61.0 - y(5) * 10.0) / h2,
            (y(0) * 10.0 - y(1) * 15.0 - y(2) * 4.0 + y(3) * 14.0 - y(4) * 6.0 + y(5)) / h2,
        ]
    };
    let lo = one_sided(&|k| y[k], 1.0);
    let hi = one_sided(&|k| y[n - 1 - k], -1.0);
    d1[0] = lo[0];
    d1[1] = lo[1];
    d2[0] = lo[2];
    d2[1] = lo[3];
    d1[n - 1] = hi[0];
    d1[n - 2] = hi[1];
    d2[n - 1] = hi[2];
    d2[n - 2] = hi[3];
    (d1, d2)
}

/// Cumulative ∫_{ρ_i}^{ρ_end} y with the end-corrected trapezoid rule
/// (fourth order given fourth-order nodal derivatives).
fn tail_integral(y: &[C], h: f64) -> Vec<C> {
    let n = y.len();
    let (d, _) = radial_derivs(y, h);
    let mut out = vec![C::new(0.0, 0.0); n];
    for i in (0..n - 1).rev() {
        let seg = (y[i] + y[i + 1]) * (0.5 * h) - (d[i + 1] - d[i]) * (h * h / 12.0);
        out[i] = out[i + 1] + seg;
    }
    out
}

/// Square collocation grid in lattice coordinates with a shared FFT plan.
#[derive(Clone)]
pub struct Collocation {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Collocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Collocation({})", self.n)
    }
}

impl Collocation {
    pub fn new(n: usize, m_cut: usize) -> Result<Self> {
        if n < 2 * m_cut || n == 0 {
            return Err(Error::Diagnostic(format!(
                "aliasing: collocation grid {n} is smaller than 2 x M_cut = {}",
                2 * m_cut
            )));
        }
        let mut p = FftPlanner::new();
        Ok(Self { n, fwd: p.plan_fft_forward(n), inv: p.plan_fft_inverse(n) })
    }

    pub fn default_size(m_cut: usize) -> usize {
        4 * m_cut + 4
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn fft2(&self, buf: &mut [C], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        for row in buf.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![C::new(0.0, 0.0); n];
        for k in 0..n {
            for j in 0..n {
                col[j] = buf[j * n + k];
            }
            plan.process(&mut col);
            for j in 0..n {
                buf[j * n + k] = col[j];
            }
        }
    }

    /// Grid values at (ξ_j, η_k) = (j/N, k/N), stored row-major in j.
    pub fn to_grid(&self, m_cut: usize, coef: impl Fn(usize) -> C) -> Vec<f64> {
        let n = self.n;
        let w = 2 * m_cut + 1;
        let mut buf = vec![C::new(0.0, 0.0); n * n];
        for k in 0..w * w {
            let m = (k / w) as i64 - m_cut as i64;
            let q = (k % w) as i64 - m_cut as i64;
            let j = m.rem_euclid(n as i64) as usize;
            let l = q.rem_euclid(n as i64) as usize;
            buf[j * n + l] += coef(k);
        }
        self.fft2(&mut buf, true);
        buf.iter().map(|c| c.re).collect()
    }

    /// Retained Fourier coefficients of grid values.
    pub fn from_grid(&self, m_cut: usize, vals: &[f64]) -> Vec<C> {
        let n = self.n;
        let w = 2 * m_cut + 1;
        let mut buf: Vec<C> = vals.iter().map(|&x| C::new(x, 0.0)).collect();
        self.fft2(&mut buf, false);
        let s = 1.0 / (n * n) as f64;
        (0..w * w)
            .map(|k| {
                let m = (k / w) as i64 - m_cut as i64;
                let q = (k % w) as i64 - m_cut as i64;
                let j = m.rem_euclid(n as i64) as usize;
                let l = q.rem_euclid(n as i64) as usize;
                buf[j * n + l] * s
            })
            .collect()
    }
}

/// Radial derivatives of every mode: (v, ρv′, ρ²v″).
fn scaled_derivs(v: &TorusFourierField, h: f64) -> (Vec<Vec<C>>, Vec<Vec<C>>) {
    let mut r1 = Vec::with_capacity(v.n_modes());
    let mut r2 = Vec::with_capacity(v.n_modes());
    for y in &v.coeffs {
        let (d1, d2) = radial_derivs(y, h);
        r1.push(d1.iter().zip(&v.rho).map(|(d, &r)| d * r).collect());
        r2.push(d2.iter().zip(&v.rho).map(|(d, &r)| d * (r * r)).collect());
    }
    (r1, r2)
}

/// Apply a pointwise map of (v, ρv′, ρ²v″) on the collocation grid at every
/// node and return its retained coefficients, coeffs[k][i].
fn pointwise(
    v: &TorusFourierField,
    col: &Collocation,
    r1: &[Vec<C>],
    r2: &[Vec<C>],
    f: impl Fn(f64, f64, f64) -> f64,
) -> Vec<Vec<C>> {
    let (nm, nr) = (v.n_modes(), v.rho.len());
    let mut out = vec![vec![C::new(0.0, 0.0); nr]; nm];
    for i in 0..nr {
        let g0 = col.to_grid(v.m_cut, |k| v.coeffs[k][i]);
        let g1 = col.to_grid(v.m_cut, |k| r1[k][i]);
        let g2 = col.to_grid(v.m_cut, |k| r2[k][i]);
        let vals: Vec<f64> = (0..g0.len()).map(|p| f(g0[p], g1[p], g2[p])).collect();
        for (k, c) in col.from_grid(v.m_cut, &vals).into_iter().enumerate() {
            out[k][i] = c;
        }
    }
    out
}

/// Q(v) = (1 − e^v)(ρ²v″ + 3ρv′) − e^v(ρv′)².
fn q_pointwise(v: f64, r1: f64, r2: f64) -> f64 {
    -v.exp_m1() * (r2 + 3.0 * r1) - v.exp() * r1 * r1
}

/// Lv − Q(v) = e^v(ρ²v″ + 3ρv′ + (ρv′)²) + 4ρ²Δ_T v, per mode and node.
/// Products are formed on a collocation grid of the default size.
pub fn nonlinear_residual(v: &TorusFourierField) -> Result<TorusFourierField> {
    nonlinear_residual_with(v, Collocation::default_size(v.m_cut))
}

pub fn nonlinear_residual_with(v: &TorusFourierField, n_colloc: usize) -> Result<TorusFourierField> {
    let h = v.uniform_step()?;
    let col = Collocation::new(n_colloc, v.m_cut)?;
    let (r1, r2) = scaled_derivs(v, h);
    let e = pointwise(v, &col, &r1, &r2, |v, a, b| v.exp() * (b + 3.0 * a + a * a));
    let mut out = TorusFourierField::zeros(v.lattice, v.m_cut, v.rho.clone());
    for k in 0..v.n_modes() {
        let (m, n) = v.mode(k);
        let kap = v.lattice.kappa(m, n);
        for i in 0..v.rho.len() {
            let r = v.rho[i];
            out.coeffs[k][i] = e[k][i] - v.coeffs[k][i] * (kap * kap * r * r);
        }
    }
    Ok(out)
}

/// φ_μ(ρ) = |μ|^{1/2} ρ⁻¹ K₁(4π|μ|ρ), and ρ⁻² for μ = 0.
pub fn linear_mode_solution(mu: C, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(invalid("rho", "must be positive"));
    }
    let a = mu.norm();
    if a == 0.0 {
        return Ok(rho.powi(-2));
    }
    let z = 4.0 * PI * a * rho;
    let (_, k1s) = k01_scaled(z);
    Ok(a.sqrt() / rho * k1s * (-z).exp())
}

/// Logarithmic derivative φ_μ′/φ_μ = −2/ρ − κK₀(κρ)/K₁(κρ).
pub fn mode_log_derivative(kappa: f64, rho: f64) -> f64 {
    if kappa == 0.0 {
        return -2.0 / rho;
    }
    let (k0s, k1s) = k01_scaled(kappa * rho);
    -2.0 / rho - kappa * k0s / k1s
}

/// Particular solution of L_μ v = f by variation of parameters,
/// v(ρ) = −φ(ρ) ∫_a^ρ φ(s)⁻² s⁻³ ∫_s^∞ σ φ(σ) f(σ) dσ ds,
/// with both integrals evaluated on the sample grid and the tail beyond the
/// last node dropped. `a = None` takes a = ∞.
pub fn solve_mode_inhomogeneous(mu: C, rho: &[f64], f: &[f64], a: Option<f64>) -> Result<Vec<f64>> {
    let h = uniform_step(rho)?;
    if f.len() != rho.len() {
        return Err(invalid("f", "length must match the grid"));
    }
    if f.iter().all(|&x| x == 0.0) {
        return Ok(vec![0.0; rho.len()]);
    }
    let phi: Vec<f64> = rho.iter().map(|&r| linear_mode_solution(mu, r)).collect::<Result<_>>()?;
    let inner: Vec<C> = (0..rho.len()).map(|i| C::new(rho[i] * phi[i] * f[i], 0.0)).collect();
    let big_i = tail_integral(&inner, h);
    let g: Vec<C> = (0..rho.len()).map(|i| big_i[i] / (phi[i] * phi[i] * rho[i].powi(3))).collect();
    let gmax = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tail = tail_integral(&g, h);
    let out = match a {
        None => {
            // g vanishes at the last node by construction (the inner tail is
            // dropped), so look at the final tenth of the grid instead
            let n = g.len();
            let end = g[n - 1 - (n / 10).max(1)..n - 1].iter().map(|z| z.norm()).fold(0.0, f64::max);
            if end > 1e-6 * gmax {
                return Err(Error::Diagnostic(
                    "outer integrand has not decayed by rho_max; a = infinity diverges or is unresolved".into(),
                ));
            }
            (0..rho.len()).map(|i| phi[i] * tail[i].re).collect()
        }
        Some(a) => {
            if !(a >= rho[0] && a <= rho[rho.len() - 1]) {
                return Err(invalid("a", "must lie in the grid range"));
            }
            let ta = interp_linear(rho, &tail, a);
            (0..rho.len()).map(|i| -phi[i] * (ta - tail[i]).re).collect()
        }
    };
    Ok(out)
}

fn interp_linear(x: &[f64], y: &[C], t: f64) -> C {
    let h = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let s = ((t - x[0]) / h).clamp(0.0, (x.len() - 1) as f64);
    let j = (s.floor() as usize).min(x.len() - 2);
    let u = s - j as f64;
    y[j] * (1.0 - u) + y[j + 1] * u
}

/// Radial problem for one mode: L v = f with v(ρ₀) given and
/// v′ = γ v + β at the last node. Solved as w″ − (κ² + 3/(4ρ²))w = ρ^{−1/2} f
/// for w = ρ^{3/2} v with Numerov's scheme; the outer condition uses a
/// fourth-order one-sided difference.
struct ModeSystem<'a> {
    rho: &'a [f64],
    h: f64,
    kappa: f64,
}

impl ModeSystem<'_> {
    fn g(&self, i: usize) -> f64 {
        self.kappa * self.kappa + 0.75 / (self.rho[i] * self.rho[i])
    }

    fn rhs_f(&self, f: &[C], i: usize) -> C {
        f[i] / self.rho[i].sqrt()
    }

    fn coeffs(&self, i: usize) -> (f64, f64, f64) {
        let s = self.h * self.h / 12.0;
        (1.0 - s * self.g(i - 1), -2.0 * (1.0 + 5.0 * s * self.g(i)), 1.0 - s * self.g(i + 1))
    }

    fn numerov_rhs(&self, f: &[C], i: usize) -> C {
        (self.rhs_f(f, i - 1) + self.rhs_f(f, i) * 10.0 + self.rhs_f(f, i + 1)) * (self.h * self.h / 12.0)
    }

    fn outer_row(&self, gamma: f64) -> [f64; 5] {
        let n = self.rho.len() - 1;
        let gw = 1.5 / self.rho[n] + gamma;
        let d = 12.0 * self.h;
        [3.0 / d, -16.0 / d, 36.0 / d, -48.0 / d, 25.0 / d - gw]
    }

    fn solve(&self, f: &[C], v0: C, gamma: f64, beta: C) -> Vec<C> {
        let n = self.rho.len();
        let mut cp = vec![0.0; n];
        let mut e = vec![C::new(0.0, 0.0); n];
        e[0] = v0 * self.rho[0].powf(1.5);
        for i in 1..n - 1 {
            let (a, b, c) = self.coeffs(i);
            let den = b - a * cp[i - 1];
            cp[i] = c / den;
            e[i] = (self.numerov_rhs(f, i) - e[i - 1] * a) / den;
        }
        let mut q = self.outer_row(gamma);
        let last = n - 1;
        let mut s = beta * self.rho[last].powf(1.5);
        for k in 0..4 {
            let j = last - 4 + k;
            s -= e[j] * q[k];
            q[k + 1] -= q[k] * cp[j];
        }
        let mut w = vec![C::new(0.0, 0.0); n];
        w[last] = s / q[4];
        for i in (0..last).rev() {
            w[i] = e[i] - w[i + 1] * cp[i];
        }
        w.iter().zip(self.rho).map(|(w, &r)| w / r.powf(1.5)).collect()
    }

    /// Row residuals in the units of L v − f (interior) and of v′ (outer).
    fn residual(&self, v: &[C], f: &[C], v0: C, gamma: f64, beta: C) -> f64 {
        let n = self.rho.len();
        let w: Vec<C> = v.iter().zip(self.rho).map(|(v, &r)| v * r.powf(1.5)).collect();
        let mut worst = (v[0] - v0).norm();
        for i in 1..n - 1 {
            let (a, b, c) = self.coeffs(i);
            let r = (w[i - 1] * a + w[i] * b + w[i + 1] * c - self.numerov_rhs(f, i)) * (self.rho[i].sqrt() / (self.h * self.h));
            worst = worst.max(r.norm());
        }
        let q = self.outer_row(gamma);
        let mut s = -beta * self.rho[n - 1].powf(1.5);
        for k in 0..5 {
            s += w[n - 5 + k] * q[k];
        }
        worst.max(s.norm() / self.rho[n - 1].powf(1.5))
    }
}

/// Dirichlet data at ρ_min as dual-mode coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InnerData {
    pub modes: Vec<((i32, i32), C)>,
}

impl InnerData {
    pub fn zero() -> Self {
        Self::default()
    }

    /// amp·cos(2π(mξ + nη)).
    pub fn cosine(m: i32, n: i32, amp: f64) -> Self {
        if m == 0 && n == 0 {
            return Self { modes: vec![((0, 0), C::new(amp, 0.0))] };
        }
        Self { modes: vec![((m, n), C::new(0.5 * amp, 0.0)), ((-m, -n), C::new(0.5 * amp, 0.0))] }
    }

    fn coeff(&self, m: i32, n: i32) -> C {
        self.modes.iter().filter(|(mn, _)| *mn == (m, n)).map(|(_, c)| *c).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeBrunConfig {
    pub rho_min: f64,
    pub rho_max: f64,
    /// Target radial step; the grid is uniform with spacing close to this.
    pub h: f64,
    pub m_cut: usize,
    pub n_colloc: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl LeBrunConfig {
    pub fn new(rho_max: f64, m_cut: usize) -> Self {
        Self {
            rho_min: 0.5,
            rho_max,
            h: 0.005,
            m_cut,
            n_colloc: Collocation::default_size(m_cut),
            max_iter: 200,
            tol: SOLVE_TOL,
        }
    }

    /// max(6/(2λ_T), 4).
    pub fn default_rho_max(lambda_t: f64) -> f64 {
        (6.0 / (2.0 * lambda_t)).max(4.0)
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.rho_min > 0.0 && self.rho_max > self.rho_min && self.h > 0.0) {
            return Err(invalid("rho", "need 0 < rho_min < rho_max and h > 0"));
        }
        let n = ((self.rho_max - self.rho_min) / self.h).round() as usize + 1;
        let n = n.max(6);
        let h = (self.rho_max - self.rho_min) / (n - 1) as f64;
        Ok((0..n).map(|i| self.rho_min + h * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeBrunSolution {
    pub v: TorusFourierField,
    /// w = 1/r̂ + (2ρ)⁻¹ ∂_ρ v.
    pub w: TorusFourierField,
    pub wa2: Option<TorusFourierField>,
    pub wa3: Option<TorusFourierField>,
    pub lambda_t: f64,
    /// Modes attaining |μ₀|.
    pub shell: Vec<(i32, i32)>,
    pub residual: f64,
    pub iterations: usize,
    pub n_colloc: usize,
    pub warnings: Vec<String>,
}

fn shortest_shell(lat: &DualLattice, m_cut: usize) -> Result<Vec<(i32, i32)>> {
    let target = lat.shortest_norm();
    let mc = m_cut as i32;
    let mut shell = Vec::new();
    for m in -mc..=mc {
        for n in -mc..=mc {
            if (m, n) != (0, 0) && (lat.norm(m, n) - target).abs() <= 1e-9 * target {
                shell.push((m, n));
            }
        }
    }
    if shell.is_empty() {
        return Err(invalid("M_cut", "retained modes miss the shortest dual vector"));
    }
    Ok(shell)
}

/// Solve Lv = Q(v) by fixed-point iteration on the mode-decoupled linear
/// systems: each step solves L_μ v_μ = Q_μ(v_prev) with Dirichlet data at
/// ρ_min and the K₁ log-derivative Robin condition at ρ_max. For the mean
/// mode the Robin condition is the exact one of the family log(1 + c/ρ²).
pub fn solve_nonlinear(lat: DualLattice, inner: &InnerData, cfg: &LeBrunConfig) -> Result<LeBrunSolution> {
    let rho = cfg.grid()?;
    let h = uniform_step(&rho)?;
    let col = Collocation::new(cfg.n_colloc, cfg.m_cut)?;
    let mut v = TorusFourierField::zeros(lat, cfg.m_cut, rho.clone());
    let nm = v.n_modes();
    let last = rho.len() - 1;

    let mut data = vec![C::new(0.0, 0.0); nm];
    for &((m, n), _) in &inner.modes {
        if v.index(m, n).is_none() {
            return Err(invalid("inner_data", format!("mode ({m}, {n}) outside |m|,|n| <= {}", cfg.m_cut)));
        }
    }
    for (k, d) in data.iter_mut().enumerate() {
        let (m, n) = v.mode(k);
        *d = inner.coeff(m, n);
    }
    for k in 0..nm {
        if (data[k] - data[nm - 1 - k].conj()).norm() > 1e-14 * (1.0 + data[k].norm()) {
            return Err(invalid("inner_data", "coefficients must satisfy c(-mu) = conj c(mu)"));
        }
    }
    let sup = col.to_grid(cfg.m_cut, |k| data[k]).iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if sup > PERTURBATIVE_BOUND {
        return Err(invalid("inner_data", format!("sup |inner| = {sup} exceeds the perturbative bound {PERTURBATIVE_BOUND}")));
    }

    let shell = shortest_shell(&lat, cfg.m_cut)?;
    let mut warnings = Vec::new();
    if shell.len() > 2 {
        warnings.push(format!("{} dual vectors attain the minimal length; fitting the combined shell", shell.len()));
    }

    let systems: Vec<(f64, f64)> = (0..nm)
        .map(|k| {
            let (m, n) = v.mode(k);
            let kap = lat.kappa(m, n);
            (kap, mode_log_derivative(kap, rho[last]))
        })
        .collect();
    let z0 = v.zero_index();
    let beta_of = |v: &TorusFourierField, k: usize| -> C {
        if k != z0 {
            return C::new(0.0, 0.0);
        }
        let x = v.coeffs[k][last].re;
        C::new(2.0 / rho[last] * (x - 1.0 + (-x).exp()), 0.0)
    };

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut prev = f64::INFINITY;
    for it in 0..=cfg.max_iter {
        let (r1, r2) = scaled_derivs(&v, h);
        let q = pointwise(&v, &col, &r1, &r2, q_pointwise);
        let mut res: f64 = 0.0;
        for k in 0..nm {
            let sys = ModeSystem { rho: &rho, h, kappa: systems[k].0 };
            res = res.max(sys.residual(&v.coeffs[k], &q[k], data[k], systems[k].1, beta_of(&v, k)));
        }
        if !res.is_finite() {
            return Err(Error::NoConvergence { iters: it, residual: res });
        }
        residual = res;
        iterations = it;
        if res < 1e-3 * cfg.tol || (it > 2 && res >= 0.9 * prev && res < cfg.tol) {
            break;
        }
        if it == cfg.max_iter || (it > 5 && res > 1e3 * prev) {
            return Err(Error::NoConvergence { iters: it, residual: res });
        }
        prev = res;
        let betas: Vec<C> = (0..nm).map(|k| beta_of(&v, k)).collect();
        for k in 0..nm {
            let sys = ModeSystem { rho: &rho, h, kappa: systems[k].0 };
            v.coeffs[k] = sys.solve(&q[k], data[k], systems[k].1, betas[k]);
        }
    }
    if residual >= cfg.tol {
        return Err(Error::NoConvergence { iters: iterations, residual });
    }

    let w = w_from_v(&v, h);
    Ok(LeBrunSolution {
        v,
        w,
        wa2: None,
        wa3: None,
        lambda_t: lambda_T(lat.tau),
        shell,
        residual,
        iterations,
        n_colloc: cfg.n_colloc,
        warnings,
    })
}

fn w_from_v(v: &TorusFourierField, h: f64) -> TorusFourierField {
    let mut w = TorusFourierField::zeros(v.lattice, v.m_cut, v.rho.clone());
    for k in 0..v.n_modes() {
        let (d1, _) = radial_derivs(&v.coeffs[k], h);
        for i in 0..v.rho.len() {
            w.coeffs[k][i] = d1[i] / (2.0 * v.rho[i]);
        }
    }
    let z = v.zero_index();
    for i in 0..v.rho.len() {
        w.coeffs[z][i] += 1.0 / (v.rho[i] * v.rho[i]);
    }
    w
}

/// Fitted log|y| ≈ a − rate·x + power·log x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub power: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: usize,
}

impl RateFit {
    pub fn to_json(&self, lambda_t: f64) -> Value {
        json!({
            "rate": self.rate,
            "rate_over_2lambdaT": self.rate / (2.0 * lambda_t),
            "prefactor_exponent": self.power,
            "window": [self.x_lo, self.x_hi],
            "points": self.points,
        })
    }
}

/// Least-squares fit on the last decade of |y| above `floor`: the window
/// ends at the last sample above the floor and extends back while |y| stays
/// within a factor 10 of it.
pub fn fit_last_decade(x: &[f64], y: &[f64], floor: f64) -> Result<RateFit> {
    let j = match (0..y.len()).rev().find(|&i| y[i].abs() > floor && y[i].is_finite()) {
        Some(j) => j,
        None => return Err(Error::DegenerateFit("no samples above the underflow floor".into())),
    };
    let top = 10.0 * y[j].abs();
    let mut i0 = j;
    while i0 > 0 && y[i0 - 1].abs() <= top {
        i0 -= 1;
    }
    if i0 == 0 {
        return Err(Error::DegenerateFit("no resolved decade: the profile never rises tenfold above its tail".into()));
    }
    let idx: Vec<usize> = (i0..=j).collect();
    if idx.len() < 8 {
        return Err(Error::DegenerateFit(format!("decade window has only {} samples", idx.len())));
    }
    let nf = idx.len() as f64;
    let mx = idx.iter().map(|&i| x[i]).sum::<f64>() / nf;
    let ml = idx.iter().map(|&i| x[i].ln()).sum::<f64>() / nf;
    let my = idx.iter().map(|&i| y[i].abs().ln()).sum::<f64>() / nf;
    let (mut sxx, mut sxl, mut sll, mut sxy, mut sly) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in &idx {
        let (a, b, c) = (x[i] - mx, x[i].ln() - ml, y[i].abs().ln() - my);
        sxx += a * a;
        sxl += a * b;
        sll += b * b;
        sxy += a * c;
        sly += b * c;
    }
    let det = sxx * sll - sxl * sxl;
    if !(det.abs() > 1e-300) {
        return Err(Error::DegenerateFit("singular normal equations".into()));
    }
    let slope = (sxy * sll - sly * sxl) / det;
    let power = (sxx * sly - sxl * sxy) / det;
    Ok(RateFit { rate: -slope, power, x_lo: x[i0], x_hi: x[j], points: idx.len() })
}

/// Combined modulus of the ±μ₀ shell at every node.
pub fn shell_profile(sol: &LeBrunSolution) -> Vec<f64> {
    let v = &sol.v;
    (0..v.rho.len())
        .map(|i| {
            sol.shell
                .iter()
                .map(|&(m, n)| v.coeff(m, n).map(|c| c[i].norm_sqr()).unwrap_or(0.0))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Decay fit of the shortest-shell coefficient in ρ; expected rate 2λ_T and
/// power −3/2.
pub fn fit_decay(sol: &LeBrunSolution, lambda_t: f64) -> Result<RateFit> {
    if !(lambda_t > 0.0) {
        return Err(invalid("lambda_t", "must be positive"));
    }
    fit_last_decade(&sol.v.rho, &shell_profile(sol), UNDERFLOW_FLOOR)
}

/// Share of Σ|v_μ|² over μ ≠ 0 carried by the shortest shell at node i.
pub fn shell_energy_fraction(sol: &LeBrunSolution, i: usize) -> f64 {
    let v = &sol.v;
    let mut tot = 0.0;
    let mut sh = 0.0;
    for k in 0..v.n_modes() {
        let mn = v.mode(k);
        if mn == (0, 0) {
            continue;
        }
        let e = v.coeffs[k][i].norm_sqr();
        tot += e;
        if sol.shell.contains(&mn) {
            sh += e;
        }
    }
    if tot == 0.0 {
        0.0
    } else {
        sh / tot
    }
}

/// Leading far-field term v ≈ T(x, y)·ρ_c⁻¹K₁(2λ_Tρ_c), ρ_c = √(ρ² + c), where
/// c is the r̂-translation carried by the mean mode, v₀ → log(1 + c/ρ²).
#[derive(Debug, Clone, PartialEq)]
pub struct LeadingTerm {
    pub shift: f64,
    pub amps: Vec<((i32, i32), C)>,
    pub lattice: DualLattice,
}

impl LeadingTerm {
    pub fn t(&self, xi: f64, eta: f64) -> f64 {
        self.amps
            .iter()
            .map(|&((m, n), a)| (a * C::from_polar(1.0, 2.0 * PI * (m as f64 * xi + n as f64 * eta))).re)
            .sum()
    }

    /// (T_x, T_y) in physical coordinates.
    pub fn grad(&self, xi: f64, eta: f64) -> (f64, f64) {
        let (mut gx, mut gy) = (0.0, 0.0);
        for &((m, n), a) in &self.amps {
            let mu = self.lattice.vector(m, n);
            let e = a * C::from_polar(1.0, 2.0 * PI * (m as f64 * xi + n as f64 * eta)) * C::new(0.0, 2.0 * PI);
            gx += (e * mu.re).re;
            gy += (e * mu.im).re;
        }
        (gx, gy)
    }
}

pub fn leading_term(sol: &LeBrunSolution) -> Result<LeadingTerm> {
    let fit = fit_decay(sol, sol.lambda_t)?;
    let v = &sol.v;
    let idx: Vec<usize> = (0..v.rho.len()).filter(|&i| v.rho[i] >= fit.x_lo && v.rho[i] <= fit.x_hi).collect();
    let nf = idx.len() as f64;
    let z = v.zero_index();
    let shift = idx.iter().map(|&i| v.rho[i] * v.rho[i] * v.coeffs[z][i].re.exp_m1()).sum::<f64>() / nf;
    let amps = sol
        .shell
        .iter()
        .map(|&(m, n)| {
            let kap = v.lattice.kappa(m, n);
            let c = v.coeff(m, n).expect("shell inside mode box");
            let a = idx
                .iter()
                .map(|&i| {
                    let rc = (v.rho[i] * v.rho[i] + shift).sqrt();
                    let (_, k1s) = k01_scaled(kap * rc);
                    c[i] * (rc * (kap * rc).exp() / k1s)
                })
                .sum::<C>()
                / nf;
            ((m, n), a)
        })
        .collect();
    Ok(LeadingTerm { shift, amps, lattice: v.lattice })
}

/// Integrate ∂_r̂(wa₂) = −w_x and ∂_r̂(wa₃) = −w_y inward from ρ_max with zero
/// data there; per mode, (wa₂)_μ(ρ) = ∫_ρ^{ρ_max} 4πi s μ_x w_μ(s) ds.
pub fn connection_from_w(sol: &LeBrunSolution) -> Result<LeBrunSolution> {
    let w = &sol.w;
    let h = w.uniform_step()?;
    let mut wa2 = TorusFourierField::zeros(w.lattice, w.m_cut, w.rho.clone());
    let mut wa3 = wa2.clone();
    for k in 0..w.n_modes() {
        let (m, n) = w.mode(k);
        if (m, n) == (0, 0) {
            continue;
        }
        let mu = w.lattice.vector(m, n);
        for (out, comp) in [(&mut wa2, mu.re), (&mut wa3, mu.im)] {
            if comp == 0.0 {
                continue;
            }
            let f: Vec<C> = (0..w.rho.len()).map(|i| w.coeffs[k][i] * C::new(0.0, 4.0 * PI * w.rho[i] * comp)).collect();
            out.coeffs[k] = tail_integral(&f, h);
        }
    }
    let mut out = sol.clone();
    out.wa2 = Some(wa2);
    out.wa3 = Some(wa3);
    Ok(out)
}

fn with_connection(sol: &LeBrunSolution) -> Result<std::borrow::Cow<'_, LeBrunSolution>> {
    if sol.wa2.is_some() && sol.wa3.is_some() {
        Ok(std::borrow::Cow::Borrowed(sol))
    } else {
        Ok(std::borrow::Cow::Owned(connection_from_w(sol)?))
    }
}

/// Coefficients of rw − 1 = e^v(1 + ρv′/2) − 1, which equals w e^u − 1.
fn rw_minus_one_field(v: &TorusFourierField, col: &Collocation) -> Result<TorusFourierField> {
    let h = v.uniform_step()?;
    let (r1, r2) = scaled_derivs(v, h);
    let c = pointwise(v, col, &r1, &r2, |v, a, _| v.exp_m1() + v.exp() * 0.5 * a);
    Ok(TorusFourierField { lattice: v.lattice, m_cut: v.m_cut, rho: v.rho.clone(), coeffs: c })
}

/// sup over μ and ρ of |∂_x(wa₂) + ∂_y(wa₃) − ∂_r̂(w e^u)|, after removing the
/// value at ρ_max (where the connection is normalized to zero).
pub fn curvature_residual(sol: &LeBrunSolution) -> Result<f64> {
    let sol = with_connection(sol)?;
    let v = &sol.v;
    let h = v.uniform_step()?;
    let col = Collocation::new(sol.n_colloc, v.m_cut)?;
    let rw = rw_minus_one_field(v, &col)?;
    let (wa2, wa3) = (sol.wa2.as_ref().unwrap(), sol.wa3.as_ref().unwrap());
    let last = v.rho.len() - 1;
    let mut worst: f64 = 0.0;
    for k in 0..v.n_modes() {
        let (m, n) = v.mode(k);
        let mu = v.lattice.vector(m, n);
        let (d, _) = radial_derivs(&rw.coeffs[k], h);
        let res: Vec<C> = (0..v.rho.len())
            .map(|i| {
                (wa2.coeffs[k][i] * mu.re + wa3.coeffs[k][i] * mu.im) * C::new(0.0, 2.0 * PI) - d[i] / (2.0 * v.rho[i])
            })
            .collect();
        for r in &res {
            worst = worst.max((r - res[last]).norm());
        }
    }
    Ok(worst)
}

/// The map r̂ ↦ r = r̂e^v on the section (x, y) = (0, 0), with rw − 1 there.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialMap {
    pub rho: Vec<f64>,
    pub rhat: Vec<f64>,
    pub r: Vec<f64>,
    pub rw_minus_one: Vec<f64>,
    v: Vec<f64>,
    dv: Vec<f64>,
    d2v: Vec<f64>,
}

impl RadialMap {
    fn at_rho(&self, rho: f64) -> (f64, f64) {
        let n = self.rho.len();
        let h = self.rho[1] - self.rho[0];
        let s = ((rho - self.rho[0]) / h).clamp(0.0, (n - 1) as f64);
        let j = (s.floor() as usize).min(n - 2);
        let t = s - j as f64;
        let herm = |y0: f64, y1: f64, d0: f64, d1: f64| {
            let (t2, t3) = (t * t, t * t * t);
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + t) * h * d0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * h * d1
        };
        let v = herm(self.v[j], self.v[j + 1], self.dv[j], self.dv[j + 1]);
        let dv = herm(self.dv[j], self.dv[j + 1], self.d2v[j], self.d2v[j + 1]);
        (v, dv)
    }

    /// (ρ, rw − 1) at a given r on the section.
    pub fn locate(&self, r: f64) -> Result<(f64, f64)> {
        let n = self.r.len();
        if !(r >= self.r[0] && r <= self.r[n - 1]) {
            return Err(invalid("r", format!("outside the solved range [{}, {}]", self.r[0], self.r[n - 1])));
        }
        let j = self.r.partition_point(|&x| x < r).clamp(1, n - 1);
        let (mut lo, mut hi) = (self.rho[j - 1], self.rho[j]);
        let f = |rho: f64| {
            let (v, _) = self.at_rho(rho);
            rho * rho * v.exp() - r
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * hi {
                break;
            }
        }
        let rho = 0.5 * (lo + hi);
        let (v, dv) = self.at_rho(rho);
        Ok((rho, v.exp_m1() + v.exp() * 0.5 * rho * dv))
    }
}

/// r(x, y, r̂) = r̂e^{v}; checks ∂r/∂r̂ = rw > 0 on every collocation point.
pub fn radial_change(sol: &LeBrunSolution) -> Result<RadialMap> {
    let v = &sol.v;
    let h = v.uniform_step()?;
    let col = Collocation::new(sol.n_colloc, v.m_cut)?;
    let rw = rw_minus_one_field(v, &col)?;
    for i in 0..v.rho.len() {
        let g = col.to_grid(v.m_cut, |k| rw.coeffs[k][i]);
        if g.iter().any(|&x| !(1.0 + x > 0.0)) {
            return Err(Error::Diagnostic(format!("r is not monotone in r-hat near rho = {}", v.rho[i])));
        }
    }
    let n = v.rho.len();
    let (mut sv, mut sd, mut s2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..v.n_modes() {
        let (d1, d2) = radial_derivs(&v.coeffs[k], h);
        for i in 0..n {
            sv[i] += v.coeffs[k][i].re;
            sd[i] += d1[i].re;
            s2[i] += d2[i].re;
        }
    }
    let rhat: Vec<f64> = v.rho.iter().map(|r| r * r).collect();
    let r: Vec<f64> = (0..n).map(|i| rhat[i] * sv[i].exp()).collect();
    let rwm: Vec<f64> = (0..n).map(|i| sv[i].exp_m1() + sv[i].exp() * 0.5 * v.rho[i] * sd[i]).collect();
    Ok(RadialMap { rho: v.rho.clone(), rhat, r, rw_minus_one: rwm, v: sv, dv: sd, d2v: s2 })
}

/// (1/(rw) − 1)·diag(1/r, r) on (dr, dθ) at the section point with radius r.
pub fn hitchin_section_difference(sol: &LeBrunSolution, r: f64) -> Result<MetricComponents> {
    let map = radial_change(sol)?;
    section_difference_from_map(&map, r)
}

pub fn section_difference_from_map(map: &RadialMap, r: f64) -> Result<MetricComponents> {
    let (_, rwm) = map.locate(r)?;
    let d = -rwm / (1.0 + rwm);
    let mut out = MetricComponents::new(&["r", "theta"]);
    out.push(vec![r, 0.0], vec![vec![d / r, 0.0], vec![0.0, d * r]]);
    Ok(out)
}

/// Samples of (√r, rw − 1 + λ_T K₀(2λ_T√r)T(0,0)) on the section.
pub fn section_remainder(sol: &LeBrunSolution) -> Result<(Vec<f64>, Vec<f64>)> {
    let map = radial_change(sol)?;
    let lead = leading_term(sol)?;
    let t0 = lead.t(0.0, 0.0);
    let lt = sol.lambda_t;
    let s: Vec<f64> = map.r.iter().map(|r| r.sqrt()).collect();
    let rem = s
        .iter()
        .zip(&map.rw_minus_one)
        .map(|(&x, &a)| {
            let z = 2.0 * lt * x;
            let (k0s, _) = k01_scaled(z);
            a + lt * k0s * (-z).exp() * t0
        })
        .collect();
    Ok((s, rem))
}

/// Decay fit of the section remainder in √r.
pub fn fit_section_remainder(sol: &LeBrunSolution) -> Result<RateFit> {
    let (s, rem) = section_remainder(sol)?;
    fit_last_decade(&s, &rem, UNDERFLOW_FLOOR)
}

/// Radial node indices (at most ~200) and torus points (4 × 4 in lattice
/// coordinates) used for node-wise metric output.
pub fn sample_nodes(sol: &LeBrunSolution) -> (Vec<usize>, Vec<(f64, f64)>) {
    let n = sol.v.rho.len();
    let stride = (n / 200).max(1);
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    let pts = (0..4).flat_map(|a| (0..4).map(move |b| (a as f64 / 4.0, b as f64 / 4.0))).collect();
    (idx, pts)
}

struct NodeValues {
    rho: f64,
    x: f64,
    y: f64,
    v: f64,
    rv1: f64,
    vx: f64,
    vy: f64,
    wa2: f64,
    wa3: f64,
}

fn node_values(sol: &LeBrunSolution, dv: &[Vec<C>], i: usize, xi: f64, eta: f64) -> NodeValues {
    let v = &sol.v;
    let (wa2, wa3) = (sol.wa2.as_ref().unwrap(), sol.wa3.as_ref().unwrap());
    let rho = v.rho[i];
    let mut out = NodeValues { rho, x: 0.0, y: 0.0, v: 0.0, rv1: 0.0, vx: 0.0, vy: 0.0, wa2: 0.0, wa3: 0.0 };
    (out.x, out.y) = v.lattice.point(xi, eta);
    for k in 0..v.n_modes() {
        let (m, n) = v.mode(k);
        let e = C::from_polar(1.0, 2.0 * PI * (m as f64 * xi + n as f64 * eta));
        let mu = v.lattice.vector(m, n);
        let c = v.coeffs[k][i] * e;
        out.v += c.re;
        out.rv1 += (dv[k][i] * e).re * rho;
        out.vx += (c * C::new(0.0, 2.0 * PI * mu.re)).re;
        out.vy += (c * C::new(0.0, 2.0 * PI * mu.im)).re;
        out.wa2 += (wa2.coeffs[k][i] * e).re;
        out.wa3 += (wa3.coeffs[k][i] * e).re;
    }
    out
}

fn radial_d1(v: &TorusFourierField) -> Result<Vec<Vec<C>>> {
    let h = v.uniform_step()?;
    Ok(v.coeffs.iter().map(|y| radial_derivs(y, h).0).collect())
}

/// g = e^u w(dx² + dy²) + w dr̂² + w⁻¹ω², ω = dθ − wa₃dx + wa₂dy, in
/// coordinates (r̂, θ, x, y) at the sample nodes.
pub fn assemble_metric(sol: &LeBrunSolution) -> Result<MetricComponents> {
    let sol = with_connection(sol)?;
    let dv = radial_d1(&sol.v)?;
    let (idx, pts) = sample_nodes(&sol);
    let mut out = MetricComponents::new(&["rhat", "theta", "x", "y"]);
    for &i in &idx {
        for &(xi, eta) in &pts {
            let nv = node_values(&sol, &dv, i, xi, eta);
            let rhat = nv.rho * nv.rho;
            let euw = 1.0 + nv.v.exp_m1() + nv.v.exp() * 0.5 * nv.rv1;
            let w = 1.0 / rhat + nv.rv1 / (2.0 * rhat);
            let mut g = vec![vec![0.0; 4]; 4];
            g[0][0] = w;
            g[1][1] = 1.0 / w;
            g[1][2] = -nv.wa3 / w;
            g[1][3] = nv.wa2 / w;
            g[2][2] = euw + nv.wa3 * nv.wa3 / w;
            g[3][3] = euw + nv.wa2 * nv.wa2 / w;
            g[2][3] = -nv.wa2 * nv.wa3 / w;
            for a in 0..4 {
                for b in 0..a {
                    g[a][b] = g[b][a];
                }
            }
            out.push(vec![rhat, 0.0, nv.x, nv.y], g);
        }
    }
    if !out.is_positive_definite() {
        return Err(Error::Diagnostic("assembled metric is not positive definite".into()));
    }
    Ok(out)
}

/// g_{L²} − g_sf in coordinates (r, θ, x, y) after r = r̂e^v, split into the
/// K₀ diagonal prediction, the K₁ cross-term prediction and the remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricDifference {
    pub full: MetricComponents,
    pub k0_part: MetricComponents,
    pub k1_part: MetricComponents,
    pub remainder: MetricComponents,
    /// Sample radial indices; nodes are grouped by index, torus points inner.
    pub rho_index: Vec<usize>,
    pub points_per_rho: usize,
}

impl MetricDifference {
    /// (mean √r, largest remainder entry) per radial index.
    pub fn remainder_profile(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.points_per_rho;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (b, nodes) in self.remainder.nodes.chunks(p).enumerate() {
            xs.push(nodes.iter().map(|n| n[0].sqrt()).sum::<f64>() / p as f64);
            let g = &self.remainder.g[b * p..(b + 1) * p];
            ys.push(g.iter().flatten().flatten().fold(0.0f64, |a, x| a.max(x.abs())));
        }
        (xs, ys)
    }

    /// Largest entry of the full difference and of the remainder.
    pub fn sup_norms(&self) -> (f64, f64) {
        let sup = |m: &MetricComponents| m.g.iter().flatten().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        (sup(&self.full), sup(&self.remainder))
    }
}

pub fn metric_difference_full(sol: &LeBrunSolution) -> Result<MetricDifference> {
    let sol = with_connection(sol)?;
    let dv = radial_d1(&sol.v)?;
    let (idx, pts) = sample_nodes(&sol);
    let lead = match leading_term(&sol) {
        Ok(l) => l,
        Err(_) if sol.v.coeffs.iter().flatten().all(|c| c.norm_sqr() == 0.0) => {
            LeadingTerm { shift: 0.0, amps: Vec::new(), lattice: sol.v.lattice }
        }
        Err(e) => return Err(e),
    };
    let lt = sol.lambda_t;
    let coords = ["r", "theta", "x", "y"];
    let mut full = MetricComponents::new(&coords);
    let mut k0p = MetricComponents::new(&coords);
    let mut k1p = MetricComponents::new(&coords);
    let mut rem = MetricComponents::new(&coords);
    let sym = |mut g: Vec<Vec<f64>>| {
        for a in 0..4 {
            for b in 0..a {
                g[a][b] = g[b][a];
            }
        }
        g
    };
    for &i in &idx {
        for &(xi, eta) in &pts {
            let nv = node_values(&sol, &dv, i, xi, eta);
            let r = nv.rho * nv.rho * nv.v.exp();
            let rwm = nv.v.exp_m1() + nv.v.exp() * 0.5 * nv.rv1;
            let rw = 1.0 + rwm;
            let w = rw / r;
            let dd = -rwm / rw;
            let mut g = vec![vec![0.0; 4]; 4];
            g[0][0] = dd / r;
            g[1][1] = dd * r;
            g[2][2] = rwm + (nv.vx * nv.vx + nv.wa3 * nv.wa3) / w;
            g[3][3] = rwm + (nv.vy * nv.vy + nv.wa2 * nv.wa2) / w;
            g[2][3] = (nv.vx * nv.vy - nv.wa3 * nv.wa2) / w;
            g[0][2] = -nv.vx / rw;
            g[0][3] = -nv.vy / rw;
            g[1][2] = -nv.wa3 / w;
            g[1][3] = nv.wa2 / w;

            let z = 2.0 * lt * r.sqrt();
            let (k0s, k1s) = k01_scaled(z);
            let (k0, k1) = (k0s * (-z).exp(), k1s * (-z).exp());
            let p = lt * k0 * lead.t(xi, eta);
            let (tx, ty) = lead.grad(xi, eta);
            let kk = k1 / r.sqrt();
            let mut a = vec![vec![0.0; 4]; 4];
            a[0][0] = p / r;
            a[1][1] = p * r;
            a[2][2] = -p;
            a[3][3] = -p;
            let mut b = vec![vec![0.0; 4]; 4];
            b[0][2] = -kk * tx;
            b[0][3] = -kk * ty;
            b[1][2] = r * kk * ty;
            b[1][3] = -r * kk * tx;
            let mut c = vec![vec![0.0; 4]; 4];
            for s in 0..4 {
                for t in s..4 {
                    c[s][t] = g[s][t] - a[s][t] - b[s][t];
                }
            }
            let node = vec![r, 0.0, nv.x, nv.y];
            full.push(node.clone(), sym(g));
            k0p.push(node.clone(), sym(a));
            k1p.push(node.clone(), sym(b));
            rem.push(node, sym(c));
        }
    }
    Ok(MetricDifference { full, k0_part: k0p, k1_part: k1p, remainder: rem, rho_index: idx, points_per_rho: pts.len() })
}
