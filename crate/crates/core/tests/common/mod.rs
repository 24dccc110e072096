#![allow(dead_code)]

use std::f64::consts::PI;

use hitchin_core::Complex64;

/// Dormand–Prince 5(4) integration of y' = f(x, y) from x0 to x1 (either
/// direction), adaptive with mixed tolerance `tol`.
pub fn dopri<const N: usize>(
    f: &dyn Fn(f64, &[f64; N]) -> [f64; N],
    x0: f64,
    y0: [f64; N],
    x1: f64,
    tol: f64,
) -> [f64; N] {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0,
    ];
    let dir = (x1 - x0).signum();
    let mut x = x0;
    let mut y = y0;
    let mut h = dir * ((x1 - x0).abs() / 100.0).max(1e-12);
    while (x1 - x) * dir > 0.0 {
        if (x + h - x1) * dir > 0.0 {
            h = x1 - x;
        }
        let mut k = [[0.0; N]; 7];
        for s in 0..7 {
            let mut ys = y;
            for j in 0..s {
                for q in 0..N {
                    ys[q] += h * A[s][j] * k[j][q];
                }
            }
            k[s] = f(x + C[s] * h, &ys);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for q in 0..N {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][q];
                d4 += B4[s] * k[s][q];
            }
            y5[q] += h * d5;
            let sc = tol * (1.0 + y[q].abs().max(y5[q].abs()));
            err = err.max((h * (d5 - d4)).abs() / sc);
        }
        if err <= 1.0 {
            x += h;
            y = y5;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    y
}

/// Shooting solution of m_xx = ½ e^{2x} sinh 2m from ρ_max inward, starting on
/// the K₀ tail A·K₀ and tuning A so that the log slope at ρ_min equals σ.
/// Returns m at the requested ρ-nodes.
pub fn shoot_mtw(sigma: f64, nodes: &[f64]) -> Vec<f64> {
    use hitchin_core::specfun::{k0, k1};
    let rmax = *nodes.last().unwrap();
    let f = |x: f64, y: &[f64; 2]| [y[1], 0.5 * (2.0 * x).exp() * (2.0 * y[0]).sinh()];
    let run = |a: f64| -> Vec<[f64; 2]> {
        let mut out = vec![[0.0; 2]; nodes.len()];
        let mut y = [a * k0(rmax), -rmax * a * k1(rmax)];
        let mut x = rmax.ln();
        out[nodes.len() - 1] = y;
        for i in (0..nodes.len() - 1).rev() {
            let xn = nodes[i].ln();
            y = dopri(&f, x, y, xn, 1e-13);
            x = xn;
            out[i] = y;
        }
        out
    };
    let slope = |a: f64| run(a)[0][1] - sigma;
    let (mut a0, mut a1) = (-sigma, -0.9 * sigma);
    let (mut f0, mut f1) = (slope(a0), slope(a1));
    for _ in 0..60 {
        if (f1 - f0).abs() < 1e-300 || f1.abs() < 1e-14 {
            break;
        }
        let a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
        a0 = a1;
        f0 = f1;
        a1 = a2;
        f1 = slope(a1);
    }
    run(a1).iter().map(|y| y[0]).collect()
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Log-spaced samples in [a, b].
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (a.ln() + (b.ln() - a.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

pub fn uniform(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

// ρ²φ″ + 3ρφ′ − κ²ρ²φ with five-point differences, relative to the largest term.
pub fn mode_fd_residual(mu: Complex64, rho: f64, h: f64) -> f64 {
    let f = |r: f64| hitchin_core::lebrun::linear_mode_solution(mu, r).unwrap();
    let (a, b, c, d, e) = (f(rho - 2.0 * h), f(rho - h), f(rho), f(rho + h), f(rho + 2.0 * h));
    let d1 = (a - 8.0 * b + 8.0 * d - e) / (12.0 * h);
    let d2 = (-a + 16.0 * b - 30.0 * c + 16.0 * d - e) / (12.0 * h * h);
    let kap = 4.0 * PI * mu.norm();
    let terms = [rho * rho * d2, 3.0 * rho * d1, -kap * kap * rho * rho * c];
    terms.iter().sum::<f64>().abs() / terms.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

// Second-order tridiagonal solve of ρ²v″ + 3ρv′ − κ²ρ²v = f on a uniform grid,
// v(ρ₀) = 0 and v′ = s·v at the far end (ghost point).
pub fn tridiagonal_bvp(kap: f64, s: f64, rho: &[f64], f: &[f64]) -> Vec<f64> {
    let n = rho.len();
    let h = rho[1] - rho[0];
    let (mut a, mut b, mut c, mut d) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], f.to_vec());
    b[0] = 1.0;
    d[0] = 0.0;
    for i in 1..n {
        let r = rho[i];
        let lo = r * r / (h * h) - 1.5 * r / h;
        let hi = r * r / (h * h) + 1.5 * r / h;
        a[i] = lo;
        b[i] = -2.0 * r * r / (h * h) - kap * kap * r * r;
        c[i] = hi;
        if i == n - 1 {
            a[i] += hi;
            b[i] += hi * 2.0 * h * s;
            c[i] = 0.0;
        }
    }
    for i in 1..n {
        let w = a[i] / b[i - 1];
        b[i] -= w * c[i - 1];
        d[i] -= w * d[i - 1];
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1] / b[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
    }
    x
}

// Smallest nonzero eigenvalue (2π|μ|)² of −Δ on ℂ/Λ, with μ running over
// the dual lattice {μ : Re(μ̄λ) ∈ ℤ for λ ∈ Λ}, |m|, |n| ≤ 10.
pub fn brute_first_eigenvalue(e1: Complex64, e2: Complex64) -> f64 {
    // dual basis: Re(f̄_i e_j) = δ_ij
    let det = e1.re * e2.im - e1.im * e2.re;
    let f1 = Complex64::new(e2.im / det, -e2.re / det);
    let f2 = Complex64::new(-e1.im / det, e1.re / det);
    assert!(((f1.conj() * e1).re - 1.0).abs() < 1e-14 && (f1.conj() * e2).re.abs() < 1e-14);
    let mut best = f64::INFINITY;
    for m in -10i32..=10 {
        for n in -10i32..=10 {
            if m != 0 || n != 0 {
                let mu = f1 * m as f64 + f2 * n as f64;
                best = best.min((2.0 * PI * mu.norm()).powi(2));
            }
        }
    }
    best
}
