//! Radial sinh-Gordon equation m'' + m'/ρ = ½ sinh 2m (the Painlevé III
//! family of McCoy, Tracy and Wu) and the rescaled profiles ℓ_t, m_t.
//!
//! In x = log ρ the equation reads m_xx = ½ e^{2x} sinh 2m, which is
//! discretized by three-point differences on the x-grid. Residuals are
//! reported in this conic normalization, i.e. multiplied by ρ².

use crate::error::{invalid, Error, Result};
use crate::specfun::k01_scaled;
use serde::{Deserialize, Serialize};

const MAX_NEWTON: usize = 60;
const MAX_HALVINGS: usize = 8;
pub const SOLVER_TOL: f64 = 1e-8;

/// Solution of the radial sinh-Gordon equation in the variable ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinhGordonProfile {
    pub sigma: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

/// A profile in the original radial coordinate r of a disc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub sigma: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicWeights {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl ParabolicWeights {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(0.0 <= alpha1 && alpha1 < alpha2 && alpha2 < 1.0) {
            return Err(invalid("alpha", format!("need 0 <= a1 < a2 < 1, got ({alpha1}, {alpha2})")));
        }
        if (alpha1 + alpha2 - 1.0).abs() > 1e-12 {
            return Err(invalid("alpha", format!("a1 + a2 must be 1, got {}", alpha1 + alpha2)));
        }
        Ok(Self { alpha1, alpha2 })
    }

    /// Weights (α₁, 1 − α₁).
    pub fn from_alpha1(alpha1: f64) -> Result<Self> {
        Self::new(alpha1, 1.0 - alpha1)
    }

    /// Weights with α₂ − α₁ = gap.
    pub fn from_gap(gap: f64) -> Result<Self> {
        Self::new(0.5 * (1.0 - gap), 0.5 * (1.0 + gap))
    }

    /// σ = 1 + 2(α₁ − α₂).
    pub fn sigma(&self) -> f64 {
        1.0 + 2.0 * (self.alpha1 - self.alpha2)
    }
}

impl SinhGordonProfile {
    pub fn to_csv(&self) -> String {
        profile_csv(&["rho", "m", "dm"], &self.grid, &self.values, &self.derivs)
    }
}

impl RadialProfile {
    pub fn to_csv(&self) -> String {
        profile_csv(&["r", "value", "deriv"], &self.grid, &self.values, &self.derivs)
    }

    /// Value and derivative at r by cubic Hermite interpolation.
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        hermite_eval(&self.grid, &self.values, &self.derivs, r)
    }

    /// Zero profile on a grid.
    pub fn zero(grid: Vec<f64>) -> Self {
        let n = grid.len();
        Self { sigma: 0.0, grid, values: vec![0.0; n], derivs: vec![0.0; n] }
    }
}

fn profile_csv(header: &[&str], g: &[f64], v: &[f64], d: &[f64]) -> String {
    let rows: Vec<Vec<f64>> = (0..g.len()).map(|i| vec![g[i], v[i], d[i]]).collect();
    crate::io::csv_f64(header, &rows)
}

pub(crate) fn hermite_eval(grid: &[f64], v: &[f64], d: &[f64], r: f64) -> Result<(f64, f64)> {
    let n = grid.len();
    if n == 0 || !(r >= grid[0] * (1.0 - 1e-14) && r <= grid[n - 1] * (1.0 + 1e-14)) {
        return Err(Error::Domain(format!("r = {r} outside profile domain")));
    }
    let k = match grid.binary_search_by(|g| g.total_cmp(&r)) {
        Ok(i) => return Ok((v[i], d[i])),
        Err(i) => i.clamp(1, n - 1),
    };
    let (x0, x1) = (grid[k - 1], grid[k]);
    let h = x1 - x0;
    let s = (r - x0) / h;
    let (h00, h10, h01, h11) = (
        (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
        s * (1.0 - s) * (1.0 - s),
        s * s * (3.0 - 2.0 * s),
        s * s * (s - 1.0),
    );
    let val = h00 * v[k - 1] + h10 * h * d[k - 1] + h01 * v[k] + h11 * h * d[k];
    let der = d[k - 1] + s * (d[k] - d[k - 1]);
    Ok((val, der))
}

/// Log-spaced grid of n points on [a, b].
pub fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                a
            } else if i == n - 1 {
                b
            } else {
                (la + (lb - la) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

fn rhs(x: f64, m: f64) -> (f64, f64) {
    let e = (2.0 * x).exp();
    (0.5 * e * (2.0 * m).sinh(), e * (2.0 * m).cosh())
}

/// Outer Robin coefficient κ with m_x = κ m at ρ, from K₀'/K₀ = −K₁/K₀.
fn outer_kappa(rho: f64) -> f64 {
    let (s0, s1) = k01_scaled(rho);
    -rho * s1 / s0
}

struct Discrete<'a> {
    xs: &'a [f64],
    sigma: f64,
    kappa: f64,
}

impl Discrete<'_> {
    // Residual rows and the tridiagonal Jacobian (sub, diag, sup).
    fn eval(&self, m: &[f64], jac: Option<(&mut [f64], &mut [f64], &mut [f64])>) -> Vec<f64> {
        let n = m.len();
        let xs = self.xs;
        let mut f = vec![0.0; n];
        let mut jac = jac;
        for i in 0..n {
            let (g, dg) = rhs(xs[i], m[i]);
            let (a, b, c, extra, extra_d);
            if i == 0 {
                let h = xs[1] - xs[0];
                a = 0.0;
                c = 2.0 / (h * h);
                b = -c;
                extra = -2.0 * h * self.sigma / (h * h);
                extra_d = 0.0;
            } else if i == n - 1 {
                let h = xs[n - 1] - xs[n - 2];
                a = 2.0 / (h * h);
                c = 0.0;
                b = -a;
                extra = 2.0 * h * self.kappa * m[i] / (h * h);
                extra_d = 2.0 * h * self.kappa / (h * h);
            } else {
                let hm = xs[i] - xs[i - 1];
                let hp = xs[i + 1] - xs[i];
                a = 2.0 / (hm * (hm + hp));
                c = 2.0 / (hp * (hm + hp));
                b = -(a + c);
                extra = 0.0;
                extra_d = 0.0;
            }
            let lo = if i > 0 { a * m[i - 1] } else { 0.0 };
            let hi = if i + 1 < n { c * m[i + 1] } else { 0.0 };
            f[i] = lo + b * m[i] + hi + extra - g;
            if let Some((sub, diag, sup)) = jac.as_mut() {
                sub[i] = a;
                diag[i] = b + extra_d - dg;
                sup[i] = c;
            }
        }
        f
    }
}

/// Thomas algorithm; `rhs` is overwritten by the solution.
pub(crate) fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::Diagnostic("singular tridiagonal system".into()));
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Diagnostic("singular tridiagonal system".into()));
        }
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

/// Newton relaxation on an arbitrary increasing set of ρ-nodes.
pub fn solve_on_nodes(sigma: f64, rho: &[f64]) -> Result<SinhGordonProfile> {
    if !(sigma.abs() < 1.0) {
        return Err(invalid("sigma", format!("|sigma| < 1 required, got {sigma}")));
    }
    if rho.len() < 3 || rho[0] <= 0.0 || rho.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("grid", "need >= 3 strictly increasing positive nodes"));
    }
    let n = rho.len();
    let xs: Vec<f64> = rho.iter().map(|r| r.ln()).collect();
    let disc = Discrete { xs: &xs, sigma, kappa: outer_kappa(rho[n - 1]) };
    // Linearized solution: −σ K₀ has log slope σ at 0 and decays like K₀.
    let mut m: Vec<f64> = rho.iter().map(|&r| -sigma * k01_scaled(r).0 * (-r).exp()).collect();
    let (mut sub, mut diag, mut sup) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut f = disc.eval(&m, Some((&mut sub, &mut diag, &mut sup)));
    let mut res = sup_norm(&f);
    let mut iters = 0;
    while iters < MAX_NEWTON {
        iters += 1;
        let mut delta: Vec<f64> = f.iter().map(|v| -v).collect();
        solve_tridiagonal(&sub, &diag, &sup, &mut delta)?;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = m.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            let ft = disc.eval(&trial, None);
            let rt = sup_norm(&ft);
            if rt.is_finite() && (rt < res || rt < 1e-13) {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(trial) = accepted else { break };
        m = trial;
        f = disc.eval(&m, Some((&mut sub, &mut diag, &mut sup)));
        let newres = sup_norm(&f);
        let dn = sup_norm(&delta) * step;
        res = newres;
        if dn < 1e-14 * (1.0 + sup_norm(&m)) {
            break;
        }
    }
    let interior = sup_norm(&f[1..n - 1]);
    if !(interior < SOLVER_TOL) {
        return Err(Error::NoConvergence { iters, residual: interior });
    }
    let derivs = log_derivative(&xs, &m, sigma, disc.kappa);
    let derivs = derivs.iter().zip(rho).map(|(mx, r)| mx / r).collect();
    Ok(SinhGordonProfile { sigma, grid: rho.to_vec(), values: m, derivs })
}

// m_x at the nodes: boundary conditions at the ends, three-point elsewhere.
fn log_derivative(xs: &[f64], m: &[f64], sigma: f64, kappa: f64) -> Vec<f64> {
    let n = m.len();
    let mut d = vec![0.0; n];
    d[0] = sigma;
    d[n - 1] = kappa * m[n - 1];
    for i in 1..n - 1 {
        let hm = xs[i] - xs[i - 1];
        let hp = xs[i + 1] - xs[i];
        d[i] = (hm * hm * (m[i + 1] - m[i]) + hp * hp * (m[i] - m[i - 1])) / (hm * hp * (hm + hp));
    }
    d
}

/// MTW solution with log slope σ at 0 on a log-spaced grid.
pub fn solve_mtw(sigma: f64, rho_min: f64, rho_max: f64, n_points: usize) -> Result<SinhGordonProfile> {
    if !(0.0 < rho_min && rho_min < rho_max) {
        return Err(invalid("rho", format!("need 0 < rho_min < rho_max, got [{rho_min}, {rho_max}]")));
    }
    if n_points < 64 {
        return Err(invalid("n_points", format!("need >= 64, got {n_points}")));
    }
    solve_on_nodes(sigma, &log_grid(rho_min, rho_max, n_points))
}

/// solve_mtw plus the refinement diagnostic: fails when doubling the
/// resolution moves sup|m| by more than 1e−4.
pub fn solve_mtw_checked(sigma: f64, rho_min: f64, rho_max: f64, n_points: usize) -> Result<SinhGordonProfile> {
    let coarse = solve_mtw(sigma, rho_min, rho_max, n_points)?;
    let fine = solve_mtw(sigma, rho_min, rho_max, 2 * n_points - 1)?;
    let change = (sup_norm(&coarse.values) - sup_norm(&fine.values)).abs();
    if change > 1e-4 {
        return Err(Error::GridTooCoarse(format!(
            "sup|m| moved by {change:e} when doubling n_points = {n_points}"
        )));
    }
    Ok(coarse)
}

/// sup over interior nodes of |ρ²(m'' + m'/ρ) − ½ρ² sinh 2m|, i.e. the
/// equation m_xx = ½ e^{2x} sinh 2m in x = log ρ by central differences.
pub fn ode_residual(p: &SinhGordonProfile) -> f64 {
    let xs: Vec<f64> = p.grid.iter().map(|r| r.ln()).collect();
    conic_residual(&xs, &p.values, |x, m| rhs(x, m).0)
}

pub(crate) fn conic_residual(xs: &[f64], m: &[f64], g: impl Fn(f64, f64) -> f64) -> f64 {
    let n = m.len();
    let mut worst = 0.0f64;
    for i in 1..n.saturating_sub(1) {
        let hm = xs[i] - xs[i - 1];
        let hp = xs[i + 1] - xs[i];
        let mxx = 2.0 * ((m[i + 1] - m[i]) / hp - (m[i] - m[i - 1]) / hm) / (hm + hp);
        worst = worst.max((mxx - g(xs[i], m[i])).abs());
    }
    worst
}

const S_INNER: f64 = 1e-3;
const S_OUTER: f64 = 15.0;

// Images of the r-grid, extended log-uniformly to cover [S_INNER, S_OUTER].
fn extended_nodes(images: &[f64]) -> (Vec<f64>, usize) {
    let n = images.len();
    let mut lower = Vec::new();
    if images[0] > S_INNER {
        let h = if n > 1 { (images[1] / images[0]).ln().min(0.05) } else { 0.05 };
        let mut x = images[0].ln();
        let mut h = h;
        while x > S_INNER.ln() {
            x -= h;
            lower.push(x.exp());
            h = (h * 1.05).min(0.05);
        }
        lower.reverse();
    }
    let offset = lower.len();
    let mut nodes = lower;
    nodes.extend_from_slice(images);
    if images[n - 1] < S_OUTER {
        let mut h = if n > 1 { (images[n - 1] / images[n - 2]).ln().min(0.02) } else { 0.02 };
        let mut x = images[n - 1].ln();
        while x < S_OUTER.ln() {
            x += h;
            nodes.push(x.exp());
            h = (h * 1.05).min(0.02);
        }
    }
    (nodes, offset)
}

fn check_r_grid(t: f64, r_grid: &[f64]) -> Result<()> {
    if !(t >= 1.0) {
        return Err(invalid("t", format!("need t >= 1, got {t}")));
    }
    if r_grid.len() < 3 || r_grid[0] <= 0.0 || r_grid[r_grid.len() - 1] > 1.0 {
        return Err(invalid("r_grid", "need >= 3 nodes in (0, 1]"));
    }
    if r_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("r_grid", "must be strictly increasing"));
    }
    Ok(())
}

/// ℓ_t on r_grid: m_{σ=−1/3}(s) with s = (8/3) t r^{3/2}.
pub fn ell_profile(t: f64, r_grid: &[f64]) -> Result<RadialProfile> {
    check_r_grid(t, r_grid)?;
    ell_profile_nodes(t, r_grid)
}

// As ell_profile, for any increasing positive nodes.
pub(crate) fn ell_profile_nodes(t: f64, r_grid: &[f64]) -> Result<RadialProfile> {
    let sigma = -1.0 / 3.0;
    let images: Vec<f64> = r_grid.iter().map(|&r| 8.0 / 3.0 * t * r.powf(1.5)).collect();
    let (nodes, off) = extended_nodes(&images);
    let sol = solve_on_nodes(sigma, &nodes)?;
    let n = r_grid.len();
    let values = sol.values[off..off + n].to_vec();
    let derivs = (0..n)
        .map(|i| 4.0 * t * r_grid[i].sqrt() * sol.derivs[off + i])
        .collect();
    Ok(RadialProfile { sigma, grid: r_grid.to_vec(), values, derivs })
}

/// m_t on r_grid: m_σ(ρ) with σ = 1 + 2(α₁ − α₂) and ρ = 8 t r^{1/2}.
pub fn m_profile(t: f64, w: ParabolicWeights, r_grid: &[f64]) -> Result<RadialProfile> {
    check_r_grid(t, r_grid)?;
    m_profile_nodes(t, w, r_grid)
}

pub(crate) fn m_profile_nodes(t: f64, w: ParabolicWeights, r_grid: &[f64]) -> Result<RadialProfile> {
    let w = ParabolicWeights::new(w.alpha1, w.alpha2)?;
    let sigma = w.sigma();
    let images: Vec<f64> = r_grid.iter().map(|&r| 8.0 * t * r.sqrt()).collect();
    let (nodes, off) = extended_nodes(&images);
    let sol = solve_on_nodes(sigma, &nodes)?;
    let n = r_grid.len();
    let values = sol.values[off..off + n].to_vec();
    let derivs = (0..n)
        .map(|i| 4.0 * t / r_grid[i].sqrt() * sol.derivs[off + i])
        .collect();
    Ok(RadialProfile { sigma, grid: r_grid.to_vec(), values, derivs })
}

/// sup over interior nodes of |r²(ℓ'' + ℓ'/r) − 8t²r³ sinh 2ℓ|.
pub fn ell_residual(t: f64, p: &RadialProfile) -> f64 {
    let ys: Vec<f64> = p.grid.iter().map(|r| r.ln()).collect();
    conic_residual(&ys, &p.values, |y, l| 8.0 * t * t * (3.0 * y).exp() * (2.0 * l).sinh())
}

/// sup over interior nodes of |r²(m'' + m'/r) − 8t²r sinh 2m|.
pub fn m_residual(t: f64, p: &RadialProfile) -> f64 {
    let ys: Vec<f64> = p.grid.iter().map(|r| r.ln()).collect();
    conic_residual(&ys, &p.values, |y, m| 8.0 * t * t * y.exp() * (2.0 * m).sinh())
}
