//! Approximate solutions: the fiducial profile cut off by a smooth bump χ,
//! and the exponential decay in t of their Hitchin residual.

use crate::error::{invalid, Error, Result};
use crate::fiducial::{case_profile, fields_from_samples, hitchin_residual_on, FieldSample, LocalCase, PolarGrid};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub r_on: f64,
    pub r_off: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self { r_on: 0.5, r_off: 1.0 }
    }
}

impl CutoffSpec {
    /// Annulus [1/64, 1/32] for strong poles, where ρ = 8t√r keeps m_t
    /// above rounding through t = 16.
    pub fn pole_default() -> Self {
        Self { r_on: 1.0 / 64.0, r_off: 1.0 / 32.0 }
    }

    pub fn for_case(case: &LocalCase) -> Self {
        match case {
            LocalCase::StrongPole { .. } => Self::pole_default(),
            _ => Self::default(),
        }
    }

    pub fn new(r_on: f64, r_off: f64) -> Result<Self> {
        if !(0.0 < r_on && r_on < r_off && r_off.is_finite()) {
            return Err(invalid("cutoff", format!("need 0 < r_on < r_off, got ({r_on}, {r_off})")));
        }
        Ok(Self { r_on, r_off })
    }
}

fn bump(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// χ(r): 1 on [0, r_on], 0 on [r_off, ∞), C^∞ and nonincreasing between.
pub fn cutoff_chi(spec: &CutoffSpec, r: f64) -> f64 {
    cutoff_chi_d(spec, r).0
}

/// χ(r) and χ'(r).
pub fn cutoff_chi_d(spec: &CutoffSpec, r: f64) -> (f64, f64) {
    if r <= spec.r_on {
        return (1.0, 0.0);
    }
    if r >= spec.r_off {
        return (0.0, 0.0);
    }
    let d = spec.r_off - spec.r_on;
    let a = (spec.r_off - r) / d;
    let b = (r - spec.r_on) / d;
    let (fa, fb) = (bump(a), bump(b));
    let (dfa, dfb) = (fa / (a * a), fb / (b * b));
    let s = fa + fb;
    (fa / s, -(dfa * fb + fa * dfb) / (d * s * s))
}

/// Fiducial fields with ℓ_t (or m_t) replaced by ℓ_tχ throughout.
pub fn approx_metric(case: &LocalCase, t: f64, grid: &PolarGrid, spec: &CutoffSpec) -> Result<FieldSample> {
    if matches!(case, LocalCase::WeakPole { .. }) {
        return Err(invalid("case", "approximate metrics are built for simple zeros and strong poles"));
    }
    if !(t >= 1.0) {
        return Err(invalid("t", "profiles need t >= 1"));
    }
    if grid.radii[grid.n_r() - 1] < spec.r_off {
        return Err(invalid("grid", "grid must reach r_off"));
    }
    let p = case_profile(case, t, &grid.radii)?;
    let mut vals = p.values.clone();
    let mut ders = p.derivs.clone();
    for (i, &r) in grid.radii.iter().enumerate() {
        if r <= spec.r_on {
            continue;
        }
        let (c, dc) = cutoff_chi_d(spec, r);
        vals[i] = p.values[i] * c;
        ders[i] = p.derivs[i] * c + p.values[i] * dc;
    }
    Ok(fields_from_samples(case, grid, &vals, &ders))
}

/// Sup of the Hitchin residual of the approximate solution over the gluing
/// annulus r_on ≤ r ≤ r_off, on the given grid.
pub fn approx_residual_on_grid(case: &LocalCase, t: f64, grid: &PolarGrid, spec: &CutoffSpec) -> Result<f64> {
    let f = approx_metric(case, t, grid, spec)?;
    hitchin_residual_on(&f, t, spec.r_on, spec.r_off)
}

/// approx_residual_on_grid on log-spaced radii in [1e−3, r_off] (6401 nodes, 8 angles).
pub fn approx_residual(case: &LocalCase, t: f64, spec: &CutoffSpec) -> Result<f64> {
    let grid = PolarGrid::log(1e-3, spec.r_off, crate::fiducial::DEFAULT_NR, 8)?;
    approx_residual_on_grid(case, t, &grid, spec)
}

/// Default t-sweep 4, 6, …, 16.
pub fn default_t_sweep() -> Vec<f64> {
    (2..=8).map(|k| 2.0 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub samples: Vec<(f64, f64)>,
    pub c: f64,
    pub mu: f64,
    pub r2: f64,
}

impl DecayFit {
    pub fn to_json(&self) -> Value {
        json!({"c": self.c, "mu": self.mu, "r2": self.r2})
    }

    pub fn samples_csv(&self) -> String {
        let rows: Vec<Vec<f64>> = self.samples.iter().map(|&(t, e)| vec![t, e]).collect();
        crate::io::csv_f64(&["t", "residual"], &rows)
    }
}

/// Least squares of log e against t: e ≈ c·e^{−μt}.
pub fn fit_exponential_decay(samples: &[(f64, f64)]) -> Result<DecayFit> {
    if samples.len() < 4 {
        return Err(Error::DegenerateFit(format!("need >= 4 samples, got {}", samples.len())));
    }
    if samples.iter().any(|s| !(s.1 > 0.0) || !s.0.is_finite()) {
        return Err(Error::DegenerateFit("all residuals must be positive".into()));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::DegenerateFit("t must be strictly increasing".into()));
    }
    let n = samples.len() as f64;
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let tm = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for (s, y) in samples.iter().zip(&ys) {
        stt += (s.0 - tm) * (s.0 - tm);
        sty += (s.0 - tm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    if syy == 0.0 || samples.iter().all(|s| s.1 == samples[0].1) {
        return Err(Error::DegenerateFit("all residuals equal".into()));
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss_res: f64 = samples
        .iter()
        .zip(&ys)
        .map(|(s, y)| (y - intercept - slope * s.0).powi(2))
        .sum();
    Ok(DecayFit {
        samples: samples.to_vec(),
        c: intercept.exp(),
        mu: -slope,
        r2: 1.0 - ss_res / syy,
    })
}
