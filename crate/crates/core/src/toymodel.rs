//! The four-punctured sphere: Higgs representatives, the special Kähler
//! constant c_sK, spectral-torus periods and modulus, semiflat data, BPS
//! counts and the GMN-predicted correction.

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, integrate_pieces};
use crate::specfun::{inverse_lambda, k0, lattice_shortest_vectors, reduce_to_fundamental, HalfPlanePoint};
use num_complex::Complex64;
use serde_json::{json, Value};
use std::f64::consts::PI;

pub const MIN_SEPARATION: f64 = 1e-3;
pub const CSK_TOL: f64 = 1e-7;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Smallest pairwise distance among 0, 1, p₀.
pub fn min_separation(p0: Complex64) -> f64 {
    p0.norm().min((p0 - 1.0).norm()).min(1.0)
}

pub fn check_p0(p0: Complex64) -> Result<()> {
    if !(p0.re.is_finite() && p0.im.is_finite()) {
        return Err(invalid("p0", "must be finite"));
    }
    let d = min_separation(p0);
    if d < MIN_SEPARATION {
        return Err(Error::Conditioning(format!(
            "p0 = {p0} is within {d:e} of another puncture (minimum {MIN_SEPARATION:e})"
        )));
    }
    Ok(())
}

/// Complex polynomial, coefficients from the constant term up.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<Complex64>);

impl Poly {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.0.iter().rev().fold(c(0.0, 0.0), |acc, &a| acc * z + a)
    }

    pub fn mul(&self, o: &Poly) -> Poly {
        let mut out = vec![c(0.0, 0.0); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn scale(&self, s: Complex64) -> Poly {
        Poly(self.0.iter().map(|a| a * s).collect())
    }

    pub fn add_const(&self, s: Complex64) -> Poly {
        let mut v = self.0.clone();
        v[0] += s;
        Poly(v)
    }

    /// Synthetic division by (z − x): (quotient, remainder).
    pub fn div_linear(&self, x: Complex64) -> (Poly, Complex64) {
        let n = self.0.len();
        let mut q = vec![c(0.0, 0.0); n.saturating_sub(1).max(1)];
        let mut carry = c(0.0, 0.0);
        for k in (0..n).rev() {
            let v = self.0[k] + carry * x;
            if k == 0 {
                return (Poly(q), v);
            }
            q[k - 1] = v;
            carry = v;
        }
        (Poly(q), c(0.0, 0.0))
    }

    /// z(z − 1)(z − p₀).
    pub fn cubic(p0: Complex64) -> Poly {
        Poly(vec![c(0.0, 0.0), c(1.0, 0.0)])
            .mul(&Poly(vec![c(-1.0, 0.0), c(1.0, 0.0)]))
            .mul(&Poly(vec![-p0, c(1.0, 0.0)]))
    }
}

/// A point (x, u) of the spectral curve B x(x−1)(x−p₀) + u² = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralFiberPoint {
    pub p0: Complex64,
    pub b: Complex64,
    pub x: Complex64,
    pub u: Complex64,
}

impl SpectralFiberPoint {
    pub fn new(p0: Complex64, b: Complex64, x: Complex64, u: Complex64) -> Result<Self> {
        if b.norm() == 0.0 {
            return Err(invalid("B", "must be nonzero"));
        }
        let cub = b * x * (x - 1.0) * (x - p0);
        let defect = (cub + u * u).norm();
        if defect > 1e-10 * (1.0f64).max(cub.norm()) {
            return Err(invalid("u", format!("off the spectral curve by {defect:e}")));
        }
        Ok(Self { p0, b, x, u })
    }

    /// The point over x with u = √(−B x(x−1)(x−p₀)) (principal root).
    pub fn over(p0: Complex64, b: Complex64, x: Complex64) -> Result<Self> {
        let u = (-b * x * (x - 1.0) * (x - p0)).sqrt();
        Self::new(p0, b, x, u)
    }
}

/// φ = numerator / denominator · dz with polynomial entries.
#[derive(Debug, Clone, PartialEq)]
pub struct HiggsField {
    pub numerator: [[Poly; 2]; 2],
    pub denominator: Poly,
}

impl HiggsField {
    /// dz coefficient at z.
    pub fn eval(&self, z: Complex64) -> [[Complex64; 2]; 2] {
        let d = self.denominator.eval(z);
        let n = &self.numerator;
        [
            [n[0][0].eval(z) / d, n[0][1].eval(z) / d],
            [n[1][0].eval(z) / d, n[1][1].eval(z) / d],
        ]
    }

    pub fn det(&self, z: Complex64) -> Complex64 {
        let m = self.eval(z);
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// Representative of the large stratum through a point of the spectral curve.
pub fn higgs_representative(pt: &SpectralFiberPoint) -> Result<HiggsField> {
    let cub = Poly::cubic(pt.p0);
    let top = cub.scale(pt.b).add_const(pt.u * pt.u);
    let (q, rem) = top.div_linear(pt.x);
    let scale = top.0.iter().map(|a| a.norm()).fold(1.0, f64::max) * (1.0 + pt.x.norm()).powi(3);
    if rem.norm() > 1e-10 * scale {
        return Err(Error::InexactDivision(rem.norm()));
    }
    let one = c(1.0, 0.0);
    Ok(HiggsField {
        numerator: [
            [Poly(vec![pt.u]), q.scale(-one)],
            [Poly(vec![-pt.x, one]), Poly(vec![-pt.u])],
        ],
        denominator: cub,
    })
}

/// Representative of the small stratum: ((0, 1), (−B/(z(z−1)(z−p₀)), 0)) dz.
pub fn higgs_representative_small(p0: Complex64, b: Complex64) -> Result<HiggsField> {
    if b.norm() == 0.0 {
        return Err(invalid("B", "must be nonzero"));
    }
    let cub = Poly::cubic(p0);
    Ok(HiggsField {
        numerator: [[Poly(vec![c(0.0, 0.0)]), cub.clone()], [Poly(vec![-b]), Poly(vec![c(0.0, 0.0)])]],
        denominator: cub,
    })
}

fn smooth_step(u: f64) -> f64 {
    // 1 for u ≤ ½, 0 for u ≥ 1
    if u <= 0.5 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    let f = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = f(2.0 * (1.0 - u));
    let b = f(2.0 * (u - 0.5));
    a / (a + b)
}

/// c_sK with the default relative tolerance 1e−7.
pub fn csk(p0: Complex64) -> Result<f64> {
    csk_with_tol(p0, CSK_TOL)
}

/// c_sK = ∫_ℂ dA / |z(z−1)(z−p₀)|.
///
/// A smooth partition of unity splits ℂP¹ into discs of radius ¼·(minimum
/// pairwise distance) around 0, 1, p₀ (integrated in polar coordinates, which
/// cancels the 1/|z − a| singularity), a neighbourhood of ∞ in the chart
/// w = 1/z, and a smooth compactly supported remainder.
pub fn csk_with_tol(p0: Complex64, rel_tol: f64) -> Result<f64> {
    check_p0(p0)?;
    let pts = [c(0.0, 0.0), c(1.0, 0.0), p0];
    let rho = 0.25 * min_separation(p0);
    let r1 = 2.0 * p0.norm().max(1.0);
    let r2 = 2.0 * r1;
    let inner = rel_tol * 1e-4;
    let mut total = 0.0;
    let mut err = 0.0;

    // Discs around the three finite punctures.
    for (k, &a) in pts.iter().enumerate() {
        let others: Vec<Complex64> = (0..3).filter(|&j| j != k).map(|j| pts[j]).collect();
        let mut radial = |s: f64| {
            let mut ang = |th: f64| {
                let z = a + Complex64::from_polar(s, th);
                smooth_step(s / rho) / ((z - others[0]).norm() * (z - others[1]).norm())
            };
            integrate(&mut ang, 0.0, 2.0 * PI, 0.0, inner).0
        };
        let (v, e) = integrate_pieces(&mut radial, &[0.0, 0.5 * rho, rho], 0.0, rel_tol * 1e-2);
        total += v;
        err += e;
    }

    // Neighbourhood of ∞: |w|⁻¹ / |(1−w)(1−p₀w)| dA_w, polar in w.
    {
        let mut radial = |s: f64| {
            let mut ang = |th: f64| {
                let w = Complex64::from_polar(s, th);
                (1.0 - smooth_step(1.0 / (s * r2))) / ((1.0 - w).norm() * (1.0 - p0 * w).norm())
            };
            integrate(&mut ang, 0.0, 2.0 * PI, 0.0, inner).0
        };
        let (v, e) = integrate_pieces(&mut radial, &[0.0, 1.0 / r2, 1.0 / r1], 0.0, rel_tol * 1e-2);
        total += v;
        err += e;
    }

    // Remainder, polar around 0.
    {
        let weight = |z: Complex64| {
            let mut w = smooth_step(z.norm() / r2);
            for a in pts.iter() {
                w *= 1.0 - smooth_step((z - a).norm() / rho);
            }
            w
        };
        let mut radial = |s: f64| {
            let mut ang = |th: f64| {
                let z = Complex64::from_polar(s, th);
                let w = weight(z);
                if w == 0.0 {
                    0.0
                } else {
                    w * s / (z.norm() * (z - 1.0).norm() * (z - p0).norm())
                }
            };
            // Break the angular range at the directions of 1 and p₀.
            let mut cuts = vec![0.0, 2.0 * PI];
            for a in [c(1.0, 0.0), p0] {
                let dist = (s - a.norm()).abs();
                if dist < rho {
                    let th0 = a.arg().rem_euclid(2.0 * PI);
                    let half = (rho / s.max(rho)).min(PI / 2.0);
                    for th in [th0 - half, th0 - 0.5 * half, th0, th0 + 0.5 * half, th0 + half] {
                        cuts.push(th.rem_euclid(2.0 * PI));
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            integrate_pieces(&mut ang, &cuts, 0.0, inner).0
        };
        let mut br = vec![0.0, 0.5 * rho, rho, r1, r2];
        for a in [c(1.0, 0.0), p0] {
            let m = a.norm();
            for d in [-rho, -0.5 * rho, 0.0, 0.5 * rho, rho] {
                br.push((m + d).max(0.0));
            }
        }
        br.sort_by(f64::total_cmp);
        br.dedup();
        let (v, e) = integrate_pieces(&mut radial, &br, 0.0, rel_tol * 1e-2);
        total += v;
        err += e;
    }
    if !(err <= rel_tol * total) {
        return Err(Error::Tolerance { estimate: total, error: err });
    }
    Ok(total)
}

/// Integral of dz/√(z(z−1)(z−p₀)) along the straight segment from e_a to e_b,
/// with the branch continued along the path. Uses z = e_a + (e_b−e_a)(1−cos φ)/2.
fn segment_integral(ea: Complex64, eb: Complex64, ec: Complex64) -> Result<Complex64> {
    let d = eb - ea;
    let n = 4096usize;
    // Continuous branch of √(z − e_c) along the path.
    let z_of = |phi: f64| ea + d * (0.5 * (1.0 - phi.cos()));
    let mut prev = (z_of(0.0) - ec).sqrt();
    let mut roots = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let phi = PI * k as f64 / n as f64;
        let mut s = (z_of(phi) - ec).sqrt();
        if (s - prev).norm() > (s + prev).norm() {
            s = -s;
        }
        if (s - prev).norm() > 0.5 * s.norm().max(prev.norm()) && k > 0 {
            return Err(Error::Diagnostic("branch tracking failed along period contour".into()));
        }
        roots.push(s);
        prev = s;
    }
    // √((z−e_a)(z−e_b)) = i (d/2) sin φ on the path, so the integrand in φ is
    // 1/(i √(z − e_c)).
    let sign_at = |phi: f64| -> Complex64 {
        let k = ((phi / PI) * n as f64).round() as usize;
        let s = (z_of(phi) - ec).sqrt();
        if (s - roots[k.min(n)]).norm() <= (s + roots[k.min(n)]).norm() {
            s
        } else {
            -s
        }
    };
    let i = Complex64::i();
    let mut re = |phi: f64| (1.0 / (i * sign_at(phi))).re;
    let (vr, _) = integrate(&mut re, 0.0, PI, 1e-15, 1e-14);
    let mut im = |phi: f64| (1.0 / (i * sign_at(phi))).im;
    let (vi, _) = integrate(&mut im, 0.0, PI, 1e-15, 1e-14);
    Ok(c(vr, vi))
}

/// Periods (ω₁, ω₂) of dz/√(z(z−1)(z−p₀)) over a homology basis of the
/// spectral torus, with Im(ω₂/ω₁) > 0.
///
/// Each period is a dumbbell around a cut between two finite branch points,
/// i.e. twice the segment integral. The two cuts share one branch point, so
/// the cycles meet once; the pair is chosen to keep the third point away
/// from both segments.
pub fn periods(p0: Complex64) -> Result<(Complex64, Complex64)> {
    check_p0(p0)?;
    let e = [c(0.0, 0.0), c(1.0, 0.0), p0];
    // Shared endpoint: the vertex whose opposite side passes closest to it
    // is avoided; choose the shared point maximising the clearance.
    let dist_to_seg = |p: Complex64, a: Complex64, b: Complex64| {
        let ab = b - a;
        let t = (((p - a) * ab.conj()).re / ab.norm_sqr()).clamp(0.0, 1.0);
        (p - (a + ab * t)).norm()
    };
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..3 {
        let (a, b) = ((k + 1) % 3, (k + 2) % 3);
        let clear = dist_to_seg(e[b], e[k], e[a]).min(dist_to_seg(e[a], e[k], e[b]));
        if clear > best.1 {
            best = (k, clear);
        }
    }
    let k = best.0;
    let (a, b) = ((k + 1) % 3, (k + 2) % 3);
    let w1 = 2.0 * segment_integral(e[k], e[a], e[b])?;
    let mut w2 = 2.0 * segment_integral(e[k], e[b], e[a])?;
    if (w2 / w1).im < 0.0 {
        w2 = -w2;
    }
    Ok((w1, w2))
}

/// Area |Im(ω̄₁ω₂)| of the period lattice.
pub fn period_area(w1: Complex64, w2: Complex64) -> f64 {
    (w1.conj() * w2).im.abs()
}

/// τ = ω₂/ω₁ reduced to the fundamental domain.
pub fn tau_from_periods(w1: Complex64, w2: Complex64) -> Result<HalfPlanePoint> {
    HalfPlanePoint::new(reduce_to_fundamental(w2 / w1))
}

pub fn fiber_area() -> f64 {
    2.0 * PI * PI
}

/// √(2/Im τ), the square root of the first eigenvalue of −Δ on the fiber.
#[allow(non_snake_case)]
pub fn lambda_T(tau: HalfPlanePoint) -> f64 {
    (2.0 / tau.im()).sqrt()
}

/// π√(2/Im τ).
pub fn c_fib(tau: HalfPlanePoint) -> f64 {
    PI * (2.0 / tau.im()).sqrt()
}

/// BPS index Ω(nγ).
pub fn bps_omega(n: u32) -> Result<i64> {
    match n {
        0 => Err(invalid("n", "must be >= 1")),
        1 => Ok(8),
        2 => Ok(-2),
        _ => Ok(0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub p0: Complex64,
    pub tau: HalfPlanePoint,
    pub c_sk: f64,
    pub c_fib: f64,
    pub lambda_t: f64,
    pub warnings: Vec<String>,
}

impl ToyConfig {
    pub fn new(p0: Complex64) -> Result<Self> {
        check_p0(p0)?;
        let tau = inverse_lambda(p0)?;
        let c_sk = csk(p0)?;
        let mut warnings = Vec::new();
        let (_, count) = lattice_shortest_vectors(tau);
        if count > 1 {
            warnings.push(format!(
                "shortest lattice vector of tau = {} is attained by {count} inequivalent vectors",
                tau.tau
            ));
        }
        Ok(Self { p0, tau, c_sk, c_fib: c_fib(tau), lambda_t: lambda_T(tau), warnings })
    }

    /// Generators c_fib·1 and c_fib·τ of the fiber lattice.
    pub fn fiber_lattice(&self) -> [Complex64; 2] {
        [c(self.c_fib, 0.0), self.tau.tau * self.c_fib]
    }

    pub fn to_json(&self, b: Complex64) -> Value {
        json!({
            "p0": [self.p0.re, self.p0.im],
            "tau": [self.tau.tau.re, self.tau.tau.im],
            "c_sk": self.c_sk,
            "c_fib": self.c_fib,
            "lambda_t": self.lambda_t,
            "M_B": shortest_geodesic(self, b),
            "fiber_area": fiber_area(),
            "bps": (1..=3).map(|n| bps_omega(n).expect("n >= 1")).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasePoint {
    pub b: Complex64,
    pub r: f64,
    pub theta: f64,
}

impl BasePoint {
    pub fn new(cfg: &ToyConfig, b: Complex64) -> Result<Self> {
        if b.norm() == 0.0 {
            return Err(invalid("B", "must be nonzero"));
        }
        Ok(Self { b, r: cfg.c_sk * b.norm(), theta: b.arg() })
    }
}

/// c_sK |Ḃ|² / |B|.
pub fn semiflat_base_norm(cfg: &ToyConfig, b: Complex64, bdot: Complex64) -> Result<f64> {
    if b.norm() == 0.0 {
        return Err(invalid("B", "must be nonzero"));
    }
    Ok(cfg.c_sk * bdot.norm_sqr() / b.norm())
}

/// M_B = √(2|B| c_sK / Im τ).
pub fn shortest_geodesic(cfg: &ToyConfig, b: Complex64) -> f64 {
    (2.0 * b.norm() * cfg.c_sk / cfg.tau.im()).sqrt()
}

/// Symmetric metric coefficients at grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricComponents {
    pub coords: Vec<String>,
    pub nodes: Vec<Vec<f64>>,
    pub g: Vec<Vec<Vec<f64>>>,
}

impl MetricComponents {
    pub fn new(coords: &[&str]) -> Self {
        Self { coords: coords.iter().map(|s| s.to_string()).collect(), nodes: Vec::new(), g: Vec::new() }
    }

    pub fn push(&mut self, node: Vec<f64>, g: Vec<Vec<f64>>) {
        self.nodes.push(node);
        self.g.push(g);
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.g.iter().all(|m| {
            (0..m.len()).all(|i| (0..m.len()).all(|j| (m[i][j] - m[j][i]).abs() <= tol * (1.0 + m[i][j].abs())))
        })
    }

    /// Cholesky test at every node.
    pub fn is_positive_definite(&self) -> bool {
        self.g.iter().all(|m| cholesky_ok(m))
    }

    pub fn determinants(&self) -> Vec<f64> {
        self.g.iter().map(|m| det(m)).collect()
    }

    pub fn to_csv(&self) -> String {
        let d = self.coords.len();
        let mut header: Vec<String> = self.coords.clone();
        for i in 0..d {
            for j in i..d {
                header.push(format!("g_{}_{}", self.coords[i], self.coords[j]));
            }
        }
        let hdr: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        let rows: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .zip(&self.g)
            .map(|(n, m)| {
                let mut row = n.clone();
                for i in 0..d {
                    for j in i..d {
                        row.push(m[i][j]);
                    }
                }
                row
            })
            .collect();
        crate::io::csv_f64(&hdr, &rows)
    }
}

fn cholesky_ok(m: &[Vec<f64>]) -> bool {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return false;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    true
}

fn det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut d = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            d = -d;
        }
        d *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
        }
    }
    d
}

/// Coefficient −(2/π)·8·K₀(2√(2r/Im τ)) / (2r Im τ) of dr² + r²dθ².
pub fn gmn_coefficient(cfg: &ToyConfig, r: f64) -> f64 {
    let im = cfg.tau.im();
    -(2.0 / PI) * 8.0 * k0(2.0 * (2.0 * r / im).sqrt()) / (2.0 * r * im)
}

/// Predicted g_{L²} − g_sf on the Hitchin section, base block in (r, θ).
pub fn gmn_correction(cfg: &ToyConfig, r: f64) -> Result<MetricComponents> {
    if !(r > 0.0) {
        return Err(invalid("r", "must be positive"));
    }
    let a = gmn_coefficient(cfg, r);
    let mut m = MetricComponents::new(&["r", "theta"]);
    m.push(vec![r, 0.0], vec![vec![a, 0.0], vec![0.0, a * r * r]]);
    Ok(m)
}

/// Semiflat metric at a base point: diag(1/r, r) on (r, θ), flat dx² + dy²
/// on the fiber ℂ/(c_fib(ℤ ⊕ τℤ)).
pub fn semiflat_metric(_cfg: &ToyConfig, base: &BasePoint) -> Result<MetricComponents> {
    semiflat_at(base.r, base.theta)
}

pub(crate) fn semiflat_at(r: f64, theta: f64) -> Result<MetricComponents> {
    if !(r > 0.0) {
        return Err(invalid("r", "must be positive"));
    }
    let mut m = MetricComponents::new(&["r", "theta", "x", "y"]);
    let mut g = vec![vec![0.0; 4]; 4];
    g[0][0] = 1.0 / r;
    g[1][1] = r;
    g[2][2] = 1.0;
    g[3][3] = 1.0;
    m.push(vec![r, theta, 0.0, 0.0], g);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poly_division() {
        let p = Poly::cubic(c(0.3, 0.0));
        let (q, r) = p.div_linear(c(1.0, 0.0));
        assert!(r.norm() < 1e-15);
        for z in [c(0.2, 0.7), c(-1.0, 2.0)] {
            assert!((q.eval(z) * (z - 1.0) - p.eval(z)).norm() < 1e-13);
        }
    }

    #[test]
    fn representative_determinant() {
        let p0 = c(0.3, 0.1);
        let b = c(1.0, 0.0);
        let pt = SpectralFiberPoint::over(p0, b, c(2.0, 0.0)).unwrap();
        let phi = higgs_representative(&pt).unwrap();
        for z in [c(0.5, 0.5), c(-2.0, 1.0), c(3.0, -0.2)] {
            let cub = Poly::cubic(p0).eval(z);
            assert!((phi.det(z) * cub - b).norm() < 1e-12);
        }
        let small = higgs_representative_small(p0, b).unwrap();
        let z = c(0.4, 0.9);
        let m = small.eval(z);
        assert!(m[0][0].norm() == 0.0 && (m[0][1] - 1.0).norm() < 1e-15);
        assert!((m[1][0] + b / Poly::cubic(p0).eval(z)).norm() < 1e-14);
    }

    #[test]
    fn inexact_division_rejected() {
        let pt = SpectralFiberPoint { p0: c(0.3, 0.0), b: c(1.0, 0.0), x: c(2.0, 0.0), u: c(1.0, 0.0) };
        assert!(matches!(higgs_representative(&pt), Err(Error::InexactDivision(_))));
        assert!(SpectralFiberPoint::new(c(0.3, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn u_zero_at_roots() {
        for x in [c(0.0, 0.0), c(1.0, 0.0), c(0.3, 0.2)] {
            let pt = SpectralFiberPoint::over(c(0.3, 0.2), c(1.0, 0.0), x).unwrap();
            assert!(pt.u.norm() < 1e-15);
        }
    }

    #[test]
    fn bps_table() {
        assert_eq!(bps_omega(1).unwrap(), 8);
        assert_eq!(bps_omega(2).unwrap(), -2);
        assert_eq!(bps_omega(5).unwrap(), 0);
        assert!(bps_omega(0).is_err());
    }

    #[test]
    fn conditioning() {
        assert!(matches!(csk(c(1e-4, 0.0)), Err(Error::Conditioning(_))));
        assert!(matches!(ToyConfig::new(c(1.0, 5e-4)), Err(Error::Conditioning(_))));
    }

    #[test]
    fn matrices() {
        let m = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        assert!((det(&m) - 5.0).abs() < 1e-15);
        assert!(cholesky_ok(&m));
        assert!(!cholesky_ok(&[vec![1.0, 2.0], vec![2.0, 1.0]]));
    }
}
