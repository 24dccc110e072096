//! Modified Bessel functions K₀, K₁, K₂, Jacobi theta functions, the modular
//! lambda function and its inverse, and shortest vectors of plane lattices.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// A point of the upper half plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlanePoint {
    pub tau: Complex64,
}

impl HalfPlanePoint {
    pub fn new(tau: Complex64) -> Result<Self> {
        if !(tau.im > 0.0) || !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(Error::Domain(format!("Im tau must be positive, got {tau}")));
        }
        Ok(Self { tau })
    }

    pub fn im(&self) -> f64 {
        self.tau.im
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BesselOrder {
    Zero,
    One,
    Two,
}

impl BesselOrder {
    pub fn from_int(nu: u32) -> Result<Self> {
        match nu {
            0 => Ok(Self::Zero),
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            _ => Err(Error::Domain(format!("Bessel order {nu} not in {{0,1,2}}"))),
        }
    }
}

/// K_ν(x) for ν ∈ {0, 1, 2}.
pub fn bessel_k(nu: BesselOrder, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_k needs x > 0, got {x}")));
    }
    let (k0, k1) = k01(x);
    Ok(match nu {
        BesselOrder::Zero => k0,
        BesselOrder::One => k1,
        BesselOrder::Two => k0 + 2.0 / x * k1,
    })
}

/// (K₀(x), K₁(x)) for x > 0. Underflows to zero past x ≈ 700.
pub fn k01(x: f64) -> (f64, f64) {
    let (s0, s1) = k01_scaled(x);
    let e = (-x).exp();
    (s0 * e, s1 * e)
}

pub fn k0(x: f64) -> f64 {
    k01(x).0
}

pub fn k1(x: f64) -> f64 {
    k01(x).1
}

pub fn k2(x: f64) -> f64 {
    let (a, b) = k01(x);
    a + 2.0 / x * b
}

/// (e^x K₀(x), e^x K₁(x)), usable far beyond the underflow of K itself.
pub fn k01_scaled(x: f64) -> (f64, f64) {
    debug_assert!(x > 0.0);
    if x < 2.0 {
        let (a, b) = k01_series(x);
        let e = x.exp();
        (a * e, b * e)
    } else {
        k01_steed_scaled(x)
    }
}

fn k01_series(x: f64) -> (f64, f64) {
    let y = 0.25 * x * x;
    let l = (0.5 * x).ln();
    // I0, I1 and the digamma-weighted sums share the same power terms.
    let mut i0 = 0.0;
    let mut i1 = 0.0;
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut term = 1.0; // y^k / (k!)^2
    let mut h = 0.0; // harmonic number H_k
    for k in 0..60 {
        let kf = k as f64;
        if k > 0 {
            term *= y / (kf * kf);
            h += 1.0 / kf;
        }
        let t1 = term / (kf + 1.0); // y^k / (k! (k+1)!)
        i0 += term;
        i1 += t1;
        s0 += term * h;
        // psi(k+1) + psi(k+2) = 2 H_k + 1/(k+1) - 2 gamma
        s1 += t1 * (2.0 * h + 1.0 / (kf + 1.0) - 2.0 * EULER_GAMMA);
        if term < 1e-18 * i0 && k > 1 {
            break;
        }
    }
    let i1 = 0.5 * x * i1;
    let k0 = -(l + EULER_GAMMA) * i0 + s0;
    let k1 = 1.0 / x + i1 * l - 0.25 * x * s1;
    (k0, k1)
}

// Steed's continued fraction (Temme's CF2) at order zero, scaled by e^x.
fn k01_steed_scaled(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// Jacobi theta function θ_k(τ), k ∈ {2, 3, 4}, from the nome q = e^{iπτ}.
pub fn jacobi_theta(kind: u8, tau: HalfPlanePoint) -> Result<Complex64> {
    let tau = HalfPlanePoint::new(tau.tau)?.tau;
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    match kind {
        3 | 4 => {
            let sign: f64 = if kind == 3 { 1.0 } else { -1.0 };
            let mut sum = one;
            let mut n = 1i64;
            loop {
                let t = (i * PI * tau * (n * n) as f64).exp() * sign.powi(n as i32);
                if t.norm() < 1e-16 {
                    break;
                }
                sum += 2.0 * t;
                n += 1;
                if n > 10_000 {
                    break;
                }
            }
            Ok(sum)
        }
        2 => {
            let mut sum = Complex64::new(0.0, 0.0);
            let mut n = 0i64;
            loop {
                let t = (i * PI * tau * (n * (n + 1)) as f64).exp();
                if t.norm() < 1e-16 && n > 0 {
                    break;
                }
                sum += t;
                n += 1;
                if n > 10_000 {
                    break;
                }
            }
            Ok(2.0 * (i * PI * tau / 4.0).exp() * sum)
        }
        _ => Err(Error::Domain(format!("theta kind {kind} not in {{2,3,4}}"))),
    }
}

/// λ(τ) = θ₂(τ)⁴ / θ₃(τ)⁴.
pub fn modular_lambda(tau: HalfPlanePoint) -> Result<Complex64> {
    let t2 = jacobi_theta(2, tau)?;
    let t3 = jacobi_theta(3, tau)?;
    Ok((t2 / t3).powi(4))
}

/// The six values {p, 1−p, 1/p, 1/(1−p), p/(p−1), (p−1)/p}.
pub fn lambda_orbit(p: Complex64) -> [Complex64; 6] {
    let one = Complex64::new(1.0, 0.0);
    [
        p,
        one - p,
        one / p,
        one / (one - p),
        p / (p - one),
        (p - one) / p,
    ]
}

/// Distance from `lam` to the nearest element of the λ-orbit of `p`.
pub fn orbit_defect(lam: Complex64, p: Complex64) -> f64 {
    lambda_orbit(p)
        .iter()
        .map(|q| (lam - q).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Maps τ into {|τ| ≥ 1, −½ < Re τ ≤ ½} by translations and inversion.
pub fn reduce_to_fundamental(tau: Complex64) -> Complex64 {
    let mut t = tau;
    for _ in 0..200 {
        t.re -= t.re.round();
        if t.re <= -0.5 {
            t.re += 1.0;
        }
        if t.norm_sqr() < 1.0 - 1e-15 {
            t = -1.0 / t;
        } else {
            break;
        }
    }
    if t.re <= -0.5 + 1e-13 {
        t.re += 1.0;
    }
    // On the unit arc keep the representative with Re τ ≥ 0.
    if (t.norm() - 1.0).abs() < 1e-13 && t.re < 0.0 {
        t = -1.0 / t;
    }
    t
}

/// Result of inverting λ, with the orbit element actually hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaInverse {
    pub tau: HalfPlanePoint,
    /// λ(τ), an element of the orbit of the input.
    pub lambda: Complex64,
    /// Index into [`lambda_orbit`] of the element hit.
    pub orbit_index: usize,
    pub defect: f64,
}

/// τ in the fundamental domain with λ(τ) in the λ-orbit of `p0`.
pub fn inverse_lambda(p0: Complex64) -> Result<HalfPlanePoint> {
    inverse_lambda_detail(p0).map(|r| r.tau)
}

fn lambda_and_derivative(tau: Complex64) -> Option<(Complex64, Complex64)> {
    let hp = HalfPlanePoint::new(tau).ok()?;
    let t2 = jacobi_theta(2, hp).ok()?;
    let t3 = jacobi_theta(3, hp).ok()?;
    let t4 = jacobi_theta(4, hp).ok()?;
    let lam = (t2 / t3).powi(4);
    // dλ/dτ = iπ λ θ₄⁴
    let d = Complex64::i() * PI * lam * t4.powi(4);
    Some((lam, d))
}

fn newton_lambda(p: Complex64, seed: Complex64) -> Option<Complex64> {
    let mut tau = seed;
    let scale = p.norm().max(1e-300);
    for _ in 0..80 {
        let (lam, d) = lambda_and_derivative(tau)?;
        let f = lam - p;
        if f.norm() < 1e-15 * scale.max(1.0) {
            return Some(tau);
        }
        let mut step = f / d;
        let cap = 0.25 * tau.im.max(0.05);
        if step.norm() > cap {
            step *= cap / step.norm();
        }
        let mut next = tau - step;
        while next.im <= 0.0 {
            step *= 0.5;
            next = tau - step;
        }
        tau = next;
    }
    let (lam, _) = lambda_and_derivative(tau)?;
    ((lam - p).norm() < 1e-11 * scale.max(1.0)).then_some(tau)
}

pub fn inverse_lambda_detail(p0: Complex64) -> Result<LambdaInverse> {
    let one = Complex64::new(1.0, 0.0);
    if !(p0.re.is_finite() && p0.im.is_finite()) || p0.norm() < 1e-14 || (p0 - one).norm() < 1e-14 {
        return Err(Error::Domain(format!("inverse_lambda needs p0 not in {{0,1}}, got {p0}")));
    }
    // Coarse seed grid over the fundamental domain and its Γ(2) neighbours.
    let mut seeds: Vec<(Complex64, Complex64)> = Vec::new();
    for a in 0..=20 {
        let re = -1.0 + 0.1 * a as f64;
        for b in 0..14 {
            let im = 0.3 * (1.25f64).powi(b);
            let tau = Complex64::new(re, im);
            if let Some((lam, _)) = lambda_and_derivative(tau) {
                seeds.push((tau, lam));
            }
        }
    }
    let orbit = lambda_orbit(p0);
    let mut best: Option<LambdaInverse> = None;
    for p in orbit.iter() {
        let mut cands: Vec<Complex64> = Vec::new();
        let mut ranked: Vec<&(Complex64, Complex64)> = seeds.iter().collect();
        ranked.sort_by(|x, y| (x.1 - p).norm().total_cmp(&(y.1 - p).norm()));
        cands.extend(ranked.iter().take(3).map(|s| s.0));
        // Near the cusp at infinity λ ≈ 16 q.
        if p.norm() < 0.05 {
            let t = (p / 16.0).ln() / (Complex64::i() * PI);
            if t.im > 0.0 {
                cands.push(t);
            }
        }
        for seed in cands {
            let Some(tau) = newton_lambda(*p, seed) else { continue };
            let red = reduce_to_fundamental(tau);
            let mut images = vec![red];
            if (red.re - 0.5).abs() < 1e-9 {
                images.push(red - 1.0);
            }
            if (red.norm() - 1.0).abs() < 1e-9 {
                images.push(-1.0 / red);
            }
            for img in images {
                let Some((lam, _)) = lambda_and_derivative(img) else { continue };
                let (idx, defect) = orbit
                    .iter()
                    .enumerate()
                    .map(|(k, q)| (k, (lam - q).norm()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                let cand = LambdaInverse {
                    tau: HalfPlanePoint { tau: red },
                    lambda: lam,
                    orbit_index: idx,
                    defect,
                };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let d_new = (lam - p0).norm();
                        let d_old = (b.lambda - p0).norm();
                        (cand.defect < 1e-9 && b.defect >= 1e-9)
                            || ((cand.defect < 1e-9) == (b.defect < 1e-9) && d_new < d_old - 1e-12)
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        if let Some(b) = &best {
            if b.defect < 1e-12 && b.orbit_index == 0 {
                break;
            }
        }
    }
    match best {
        Some(b) if b.defect < 1e-9 => Ok(b),
        Some(b) => Err(Error::NoConvergence { iters: 80, residual: b.defect }),
        None => Err(Error::NoConvergence { iters: 80, residual: f64::INFINITY }),
    }
}

/// min |m + nτ| over nonzero integer pairs.
pub fn lattice_shortest(tau: HalfPlanePoint) -> f64 {
    lattice_shortest_vectors(tau).0
}

/// Shortest length and the number of shortest vectors up to sign.
pub fn lattice_shortest_vectors(tau: HalfPlanePoint) -> (f64, usize) {
    let t = tau.tau;
    let bound = (2.0 + 2.0 / t.im).ceil() as i64;
    let mut lens = Vec::new();
    for m in -bound..=bound {
        for n in -bound..=bound {
            if m == 0 && n == 0 {
                continue;
            }
            lens.push((m as f64 + n as f64 * t).norm());
        }
    }
    let min = lens.iter().copied().fold(f64::INFINITY, f64::min);
    let count = lens.iter().filter(|&&l| (l - min).abs() < 1e-9 * min).count() / 2;
    (min, count)
}
