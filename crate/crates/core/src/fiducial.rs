//! Model fields (A_t, Φ_t, h_t) near a simple zero, a strongly parabolic
//! point and a weakly parabolic point, in unitary gauge with Q ≡ 1, plus the
//! local diagnostics: eigenvalues of −i⋆M_Φ and indicial roots.

use crate::error::{invalid, Error, Result};
use crate::painleve::{ell_profile_nodes, log_grid, m_profile_nodes, ParabolicWeights, RadialProfile};
use num_complex::Complex64;
use serde_json::{json, Value};
use std::f64::consts::PI;

pub type M2 = [[Complex64; 2]; 2];

pub const DEFAULT_NR: usize = 6401;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn m2_diag(a: Complex64, b: Complex64) -> M2 {
    [[a, ZERO], [ZERO, b]]
}

pub fn m2_mul(a: &M2, b: &M2) -> M2 {
    let mut c = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn m2_adj(a: &M2) -> M2 {
    [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
}

pub fn m2_add(a: &M2, b: &M2) -> M2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

pub fn m2_scale(a: &M2, s: Complex64) -> M2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn m2_comm(a: &M2, b: &M2) -> M2 {
    m2_add(&m2_mul(a, b), &m2_scale(&m2_mul(b, a), -Complex64::new(1.0, 0.0)))
}

pub fn m2_det(a: &M2) -> Complex64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Largest singular value.
pub fn m2_opnorm(a: &M2) -> f64 {
    let fro2: f64 = a.iter().flatten().map(|z| z.norm_sqr()).sum();
    let d = m2_det(a).norm();
    let disc = (fro2 * fro2 - 4.0 * d * d).max(0.0).sqrt();
    (0.5 * (fro2 + disc)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalCase {
    SimpleZero,
    StrongPole { weights: ParabolicWeights },
    WeakPole { weights: ParabolicWeights, sigma: Complex64 },
}

impl LocalCase {
    pub fn weak_pole(weights: ParabolicWeights, sigma: Complex64) -> Result<Self> {
        if !(sigma.norm() > 0.0) {
            return Err(invalid("sigma", "weakly parabolic residue must be nonzero"));
        }
        Ok(Self::WeakPole { weights, sigma })
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::SimpleZero => Ok(()),
            Self::StrongPole { weights } => ParabolicWeights::new(weights.alpha1, weights.alpha2).map(|_| ()),
            Self::WeakPole { weights, sigma } => {
                ParabolicWeights::new(weights.alpha1, weights.alpha2)?;
                Self::weak_pole(*weights, *sigma).map(|_| ())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::SimpleZero => "simplezero",
            Self::StrongPole { .. } => "strongpole",
            Self::WeakPole { .. } => "weakpole",
        }
    }
}

/// Tensor grid of radii and equally spaced angles in [0, 2π).
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGrid {
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
}

impl PolarGrid {
    pub fn new(radii: Vec<f64>, n_theta: usize) -> Result<Self> {
        if radii.is_empty() || radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("radii", "need strictly increasing positive radii"));
        }
        if n_theta == 0 {
            return Err(invalid("n_theta", "need at least one angle"));
        }
        let angles = (0..n_theta).map(|j| 2.0 * PI * j as f64 / n_theta as f64).collect();
        Ok(Self { radii, angles })
    }

    /// Log-spaced radii on [r_min, r_max].
    pub fn log(r_min: f64, r_max: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if !(0.0 < r_min && r_min < r_max) || n_r < 2 {
            return Err(invalid("radii", "need 0 < r_min < r_max and n_r >= 2"));
        }
        Self::new(log_grid(r_min, r_max, n_r), n_theta)
    }

    /// r ∈ [1e−3, 1], 6401 radii, 8 angles.
    pub fn default_disc() -> Self {
        Self::log(1e-3, 1.0, DEFAULT_NR, 8).expect("valid default grid")
    }

    pub fn n_r(&self) -> usize {
        self.radii.len()
    }

    pub fn n_theta(&self) -> usize {
        self.angles.len()
    }

    pub fn z(&self, i: usize, j: usize) -> Complex64 {
        Complex64::from_polar(self.radii[i], self.angles[j])
    }
}

/// Fields on a polar grid; node (i, j) is stored at index i·n_θ + j.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub grid: PolarGrid,
    /// dθ coefficient of the connection.
    pub a_theta: Vec<M2>,
    /// dr coefficient, absent for the radial models.
    pub a_r: Option<Vec<M2>>,
    /// dz coefficient of the Higgs field.
    pub phi: Vec<M2>,
    /// Hermitian metric in the holomorphic frame.
    pub h: Vec<M2>,
}

fn m2_json(m: &M2) -> Value {
    json!([
        [[m[0][0].re, m[0][0].im], [m[0][1].re, m[0][1].im]],
        [[m[1][0].re, m[1][0].im], [m[1][1].re, m[1][1].im]]
    ])
}

impl FieldSample {
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.grid.n_theta() + j
    }

    pub fn to_json(&self) -> Value {
        let nodes: Vec<Value> = (0..self.a_theta.len())
            .map(|k| {
                let mut v = json!({
                    "a_theta": m2_json(&self.a_theta[k]),
                    "phi": m2_json(&self.phi[k]),
                    "h": m2_json(&self.h[k]),
                });
                if let Some(ar) = &self.a_r {
                    v["a_r"] = m2_json(&ar[k]);
                }
                v
            })
            .collect();
        json!({
            "grid": {"r": self.grid.radii, "theta": self.grid.angles},
            "nodes": nodes,
        })
    }
}

/// F⁰_t(r) = ¼(½ + r ℓ_t'(r)).
pub fn f_zero(_t: f64, r: f64, ell: &RadialProfile) -> Result<f64> {
    let (_, d) = ell.eval(r)?;
    Ok(0.25 * (0.5 + r * d))
}

/// Fᵖ_t(r) = ¼(−½ + r m_t'(r)).
pub fn f_pole(_t: f64, r: f64, m: &RadialProfile) -> Result<f64> {
    let (_, d) = m.eval(r)?;
    Ok(0.25 * (-0.5 + r * d))
}

/// Assembles the fields from radial samples (value, derivative) of ℓ or m,
/// one pair per radius. Ignored for the weak pole.
pub(crate) fn fields_from_samples(case: &LocalCase, grid: &PolarGrid, vals: &[f64], ders: &[f64]) -> FieldSample {
    let (nr, nt) = (grid.n_r(), grid.n_theta());
    let mut a_theta = Vec::with_capacity(nr * nt);
    let mut phi = Vec::with_capacity(nr * nt);
    let mut h = Vec::with_capacity(nr * nt);
    let c = |x: f64| Complex64::new(x, 0.0);
    for i in 0..nr {
        let r = grid.radii[i];
        for j in 0..nt {
            let z = grid.z(i, j);
            match case {
                LocalCase::SimpleZero => {
                    let (l, dl) = (vals[i], ders[i]);
                    let f0 = 0.25 * (0.5 + r * dl);
                    a_theta.push(m2_diag(2.0 * f0 * I, -2.0 * f0 * I));
                    let up = r.sqrt() * l.exp();
                    let lo = (-l).exp() / r.sqrt();
                    phi.push([[ZERO, c(up)], [z * lo, ZERO]]);
                    h.push(m2_diag(c(up), c(lo)));
                }
                LocalCase::StrongPole { weights } => {
                    let (m, dm) = (vals[i], ders[i]);
                    let fp = 0.25 * (-0.5 + r * dm);
                    let s = 0.5 * (weights.alpha1 + weights.alpha2);
                    a_theta.push(m2_diag(I * (s + 2.0 * fp), I * (s - 2.0 * fp)));
                    let up = m.exp() / r.sqrt();
                    let lo = r.sqrt() * (-m).exp();
                    phi.push([[ZERO, c(up)], [lo / z, ZERO]]);
                    let pw = r.powf(weights.alpha1 + weights.alpha2);
                    h.push(m2_diag(c(pw * up), c(pw * lo)));
                }
                LocalCase::WeakPole { weights, sigma } => {
                    a_theta.push(m2_diag(I * weights.alpha1, I * weights.alpha2));
                    let e = sigma / z;
                    phi.push(m2_diag(e, -e));
                    h.push(m2_diag(c(r.powf(2.0 * weights.alpha1)), c(r.powf(2.0 * weights.alpha2))));
                }
            }
        }
    }
    FieldSample { grid: grid.clone(), a_theta, a_r: None, phi, h }
}

/// Radial profile appropriate to the case on the grid radii.
pub fn case_profile(case: &LocalCase, t: f64, radii: &[f64]) -> Result<RadialProfile> {
    match case {
        LocalCase::SimpleZero => ell_profile_nodes(t, radii),
        LocalCase::StrongPole { weights } => m_profile_nodes(t, *weights, radii),
        LocalCase::WeakPole { .. } => Ok(RadialProfile::zero(radii.to_vec())),
    }
}

/// The model solution of the rescaled Hitchin equations for the case.
pub fn fiducial_fields(case: &LocalCase, t: f64, grid: &PolarGrid) -> Result<FieldSample> {
    case.validate()?;
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    if !matches!(case, LocalCase::WeakPole { .. }) && grid.radii[grid.n_r() - 1] > 1.0 {
        return Err(invalid("grid", "model profiles are defined for r <= 1"));
    }
    let p = case_profile(case, t.max(1.0), &grid.radii)?;
    if !matches!(case, LocalCase::WeakPole { .. }) && t < 1.0 {
        return Err(invalid("t", "profiles need t >= 1"));
    }
    Ok(fields_from_samples(case, grid, &p.values, &p.derivs))
}

/// Pointwise residual of F_A + t²[Φ, Φ*] as the dr∧dθ coefficient, at
/// interior radial nodes. Entry (i, j) for i in 1..n_r−1.
pub fn hitchin_residual_field(f: &FieldSample, t: f64) -> Result<Vec<(usize, usize, f64)>> {
    let (nr, nt) = (f.grid.n_r(), f.grid.n_theta());
    if nr < 4 || nt < 8 {
        return Err(Error::GridTooCoarse(format!(
            "need >= 4 radial and >= 8 angular nodes, got {nr} x {nt}"
        )));
    }
    let rr = &f.grid.radii;
    let dth = 2.0 * PI / nt as f64;
    let mut out = Vec::with_capacity((nr - 2) * nt);
    for i in 1..nr - 1 {
        let (hm, hp) = (rr[i] - rr[i - 1], rr[i + 1] - rr[i]);
        // three-point weights; wm + w0 + wp = 0, so use differences
        let (wm, wp) = (-hp / (hm * (hm + hp)), hm / (hp * (hm + hp)));
        for j in 0..nt {
            let k = f.idx(i, j);
            let mut curv = [[ZERO; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    let c = f.a_theta[k][a][b];
                    curv[a][b] = wm * (f.a_theta[f.idx(i - 1, j)][a][b] - c) + wp * (f.a_theta[f.idx(i + 1, j)][a][b] - c);
                }
            }
            if let Some(ar) = &f.a_r {
                let (jm, jp) = ((j + nt - 1) % nt, (j + 1) % nt);
                let d = m2_scale(
                    &m2_add(&ar[f.idx(i, jp)], &m2_scale(&ar[f.idx(i, jm)], Complex64::new(-1.0, 0.0))),
                    Complex64::new(-0.5 / dth, 0.0),
                );
                curv = m2_add(&curv, &d);
                curv = m2_add(&curv, &m2_comm(&ar[k], &f.a_theta[k]));
            }
            let br = m2_comm(&f.phi[k], &m2_adj(&f.phi[k]));
            // dz∧dz̄ = −2i r dr∧dθ
            let higgs = m2_scale(&br, Complex64::new(0.0, -2.0 * rr[i] * t * t));
            out.push((i, j, m2_opnorm(&m2_add(&curv, &higgs))));
        }
    }
    Ok(out)
}

/// sup over interior nodes of the operator norm of F_A + t²[Φ, Φ*] (dr∧dθ
/// coefficient, unitary frame).
pub fn hitchin_residual(f: &FieldSample, t: f64) -> Result<f64> {
    Ok(hitchin_residual_field(f, t)?.iter().fold(0.0f64, |m, e| m.max(e.2)))
}

/// Same, restricted to radii in [r_lo, r_hi].
pub fn hitchin_residual_on(f: &FieldSample, t: f64, r_lo: f64, r_hi: f64) -> Result<f64> {
    Ok(hitchin_residual_field(f, t)?
        .iter()
        .filter(|e| f.grid.radii[e.0] >= r_lo && f.grid.radii[e.0] <= r_hi)
        .fold(0.0f64, |m, e| m.max(e.2)))
}

/// Eigenvalues (λ₀, λ₁, λ₂) of −i⋆M_Φ at radius r.
pub fn mphi_eigenvalues(case: &LocalCase, _t: f64, r: f64, profile: &RadialProfile) -> Result<(f64, f64, f64)> {
    if !(r > 0.0) {
        return Err(invalid("r", "must be positive"));
    }
    Ok(match case {
        LocalCase::SimpleZero => {
            let c = (2.0 * profile.eval(r)?.0).cosh();
            (16.0 * r * c, 8.0 * r * (c - 1.0), 8.0 * r * (c + 1.0))
        }
        LocalCase::StrongPole { .. } => {
            let c = (2.0 * profile.eval(r)?.0).cosh();
            (16.0 / r * c, 8.0 / r * (c - 1.0), 8.0 / r * (c + 1.0))
        }
        LocalCase::WeakPole { sigma, .. } => {
            let e = 16.0 * sigma.norm_sqr() / (r * r);
            (0.0, e, e)
        }
    })
}

/// The operator γ ↦ 2([φ,[φ*,γ]] + [φ*,[φ,γ]]) on trace-free Hermitian
/// matrices, in the orthonormal basis (σ₁, σ₂, σ₃)/√2.
pub fn mphi_matrix(phi: &M2) -> [[f64; 3]; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let o = ZERO;
    let basis: [M2; 3] = [
        [[o, Complex64::new(s, 0.0)], [Complex64::new(s, 0.0), o]],
        [[o, Complex64::new(0.0, -s)], [Complex64::new(0.0, s), o]],
        [[Complex64::new(s, 0.0), o], [o, Complex64::new(-s, 0.0)]],
    ];
    let ps = m2_adj(phi);
    let mut m = [[0.0; 3]; 3];
    for (b, g) in basis.iter().enumerate() {
        let img = m2_add(&m2_comm(phi, &m2_comm(&ps, g)), &m2_comm(&ps, &m2_comm(phi, g)));
        let img = m2_scale(&img, Complex64::new(2.0, 0.0));
        for (a, e) in basis.iter().enumerate() {
            // ⟨e, img⟩ = Re tr(e* img)
            let p = m2_mul(&m2_adj(e), &img);
            m[a][b] = (p[0][0] + p[1][1]).re;
        }
    }
    m
}

/// Indicial roots in the open window (lo, hi), sorted and deduplicated.
pub fn indicial_roots(case: &LocalCase, window: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = window;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Vec::new();
    }
    let mut roots = Vec::new();
    let kmin = lo.floor() as i64 - 2;
    let kmax = hi.ceil() as i64 + 2;
    for k in kmin..=kmax {
        let l = k as f64;
        roots.push(l);
        match case {
            LocalCase::SimpleZero => roots.push(l + 0.5),
            LocalCase::StrongPole { weights } => {
                let v = l + weights.alpha1 - weights.alpha2;
                roots.push(v);
                roots.push(-v);
            }
            LocalCase::WeakPole { weights, sigma } => {
                let v = l + weights.alpha1 - weights.alpha2;
                let w = (v * v + 16.0 * sigma.norm_sqr()).sqrt();
                roots.push(w);
                roots.push(-w);
            }
        }
    }
    // Snap to a 1e−12 lattice so that mathematically equal roots coincide.
    let mut roots: Vec<f64> = roots
        .into_iter()
        .map(|x| (x * 1e12).round() / 1e12)
        .filter(|&x| x > lo && x < hi)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}
