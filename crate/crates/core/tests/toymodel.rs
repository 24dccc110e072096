mod common;

use std::f64::consts::PI;
use std::sync::OnceLock;

use hitchin_core::specfun::{inverse_lambda, k0, modular_lambda, orbit_defect, reduce_to_fundamental, HalfPlanePoint};
use hitchin_core::toymodel::*;
use hitchin_core::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn square() -> &'static ToyConfig {
    static CFG: OnceLock<ToyConfig> = OnceLock::new();
    CFG.get_or_init(|| ToyConfig::new(c(0.5, 0.0)).unwrap())
}

fn generic() -> &'static ToyConfig {
    static CFG: OnceLock<ToyConfig> = OnceLock::new();
    CFG.get_or_init(|| ToyConfig::new(c(0.3, 0.0)).unwrap())
}

#[test]
fn square_torus_constants() {
    let cfg = square();
    assert!((cfg.tau.tau - c(0.0, 1.0)).norm() < 1e-10);
    assert!((cfg.lambda_t - 2f64.sqrt()).abs() < 1e-10);
    let m = shortest_geodesic(cfg, c(1.0, 0.0));
    assert!((m - (2.0 * cfg.c_sk).sqrt()).abs() < 1e-9);
    assert!(!cfg.warnings.is_empty());
    assert!(generic().warnings.is_empty());
}

#[test]
fn torus_spectrum_by_enumeration() {
    let w = Complex64::from_polar(1.0, PI / 3.0);
    for tau in [c(0.0, 1.0), c(0.2, 1.3), w] {
        let t = HalfPlanePoint::new(tau).unwrap();
        let cf = c_fib(t);
        let ev = common::brute_first_eigenvalue(c(cf, 0.0), tau * cf);
        assert!((ev - 2.0 / tau.im).abs() < 1e-12, "tau={tau}");
        assert!((ev.sqrt() - lambda_T(t)).abs() < 1e-12);
        assert!((cf * cf * tau.im - 2.0 * PI * PI).abs() < 1e-12);
        // scaling the lattice by s scales the eigenvalue by 1/s²
        let ev2 = common::brute_first_eigenvalue(c(2.0 * cf, 0.0), tau * 2.0 * cf);
        assert!((ev2 * 4.0 - ev).abs() < 1e-12);
    }
    assert!((fiber_area() - 2.0 * PI * PI).abs() < 1e-15);
    let im: f64 = 1.7;
    assert!((im * (PI / im).powi(2) * (2.0 * im) - fiber_area()).abs() < 1e-12);
}

#[test]
fn csk_against_periods_and_symmetry() {
    for p0 in [c(0.5, 0.0), c(0.3, 0.0), c(0.3, 0.1)] {
        let a = csk(p0).unwrap();
        let (w1, w2) = periods(p0).unwrap();
        assert!((2.0 * a / period_area(w1, w2) - 1.0).abs() < 1e-6, "p0={p0}");
        let b = csk(1.0 - p0).unwrap();
        assert!((a - b).abs() < 1e-8 * a, "p0={p0}");
    }
}

#[test]
fn csk_self_convergence() {
    let p0 = c(0.3, 0.1);
    let a = csk_with_tol(p0, CSK_TOL).unwrap();
    let b = csk_with_tol(p0, CSK_TOL / 2.0).unwrap();
    assert!((a - b).abs() < 1e-7 * a);
}

#[test]
fn tau_from_periods_matches_inverse_lambda() {
    let w = Complex64::from_polar(1.0, PI / 3.0);
    for p0 in [c(0.5, 0.0), w, c(0.3, 0.0), c(0.3, 0.1)] {
        let (w1, w2) = periods(p0).unwrap();
        let a = tau_from_periods(w1, w2).unwrap();
        let b = inverse_lambda(p0).unwrap();
        assert!((a.tau - b.tau).norm() < 1e-8, "p0={p0}: {} vs {}", a.tau, b.tau);
        assert!(orbit_defect(modular_lambda(a).unwrap(), p0) < 1e-9);
        // swapping the cycles: −ω₁/ω₂ reduces to the same point
        let swapped = reduce_to_fundamental(-w1 / w2);
        assert!((swapped - a.tau).norm() < 1e-8);
    }
}

#[test]
fn base_norm_examples() {
    let cfg = generic();
    let b = c(1.0, 0.0);
    assert_eq!(semiflat_base_norm(cfg, b, c(0.0, 0.0)).unwrap(), 0.0);
    assert!((semiflat_base_norm(cfg, b, c(1.0, 0.0)).unwrap() - cfg.c_sk).abs() < 1e-15);
    let x = semiflat_base_norm(cfg, c(0.3, -0.7), c(0.2, 0.4)).unwrap();
    let y = semiflat_base_norm(cfg, c(1.2, -2.8), c(0.4, 0.8)).unwrap();
    assert!((x - y).abs() < 1e-14 * x);
}

#[test]
fn gmn_correction_shape() {
    let cfg = generic();
    let im = cfg.tau.im();
    for r in [10.0, 20.0, 40.0] {
        let a = gmn_coefficient(cfg, r);
        let b = gmn_coefficient(cfg, 4.0 * r);
        let z = |r: f64| 2.0 * (2.0 * r / im).sqrt();
        // K₀(x) ≈ √(π/2x)e^{−x}
        let asym = |r: f64| (PI / (2.0 * z(r))).sqrt() * (-z(r)).exp() / r;
        assert!(((a / b) / (asym(r) / asym(4.0 * r)) - 1.0).abs() < 0.02, "r={r}");
        assert!((a - -(16.0 / PI) * k0(z(r)) / (2.0 * r * im)).abs() < 1e-15 * a.abs());
        let m = gmn_correction(cfg, r).unwrap();
        assert!((m.g[0][0][0] - m.g[0][1][1] / (r * r)).abs() < 1e-15 * a.abs());
    }
}

#[test]
fn semiflat_blocks() {
    let cfg = generic();
    let base = BasePoint::new(cfg, c(1.0 / cfg.c_sk, 0.0)).unwrap();
    assert!((base.r - 1.0).abs() < 1e-15);
    let m = semiflat_metric(cfg, &base).unwrap();
    assert!((m.g[0][0][0] - 1.0).abs() < 1e-15 && (m.g[0][1][1] - 1.0).abs() < 1e-15);
    let [e1, e2] = cfg.fiber_lattice();
    let area = (e1.conj() * e2).im * m.g[0][2][2].sqrt() * m.g[0][3][3].sqrt();
    assert!((area - fiber_area()).abs() < 1e-12);
    assert!(m.is_symmetric(0.0) && m.is_positive_definite());
}

#[test]
fn higgs_determinant_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p0 = c(0.3, 0.1);
    let b = c(0.8, -0.6);
    let big = higgs_representative(&SpectralFiberPoint::over(p0, b, c(2.0, 0.5)).unwrap()).unwrap();
    let small = higgs_representative_small(p0, b).unwrap();
    for _ in 0..20 {
        let z = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let cub = z * (z - 1.0) * (z - p0);
        for phi in [&big, &small] {
            let det = phi.det(z);
            assert!((det * cub / b - 1.0).norm() < 1e-12, "z={z}");
        }
    }
}

#[test]
fn rejects_bad_p0() {
    for p0 in [c(0.0, 0.0), c(1.0, 0.0), c(1e-4, 0.0)] {
        assert!(ToyConfig::new(p0).is_err());
        assert!(check_p0(p0).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lambda_t_squared_times_im_tau(re in -0.5f64..0.5, im in 0.5f64..4.0) {
        let t = HalfPlanePoint::new(c(re, im)).unwrap();
        prop_assert!((lambda_T(t).powi(2) * im - 2.0).abs() < 1e-14);
        prop_assert!((c_fib(t).powi(2) * im - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn base_norm_in_polar_coordinates(br in 0.1f64..3.0, bth in -3.0f64..3.0, s in -2.0f64..2.0, w in -2.0f64..2.0) {
        // Ḃ = B(s + iω) moves r = c_sK|B| with ṙ = r s and θ with θ̇ = ω
        let cfg = generic();
        let b = Complex64::from_polar(br, bth);
        let bdot = b * c(s, w);
        let r = cfg.c_sk * br;
        let norm = semiflat_base_norm(cfg, b, bdot).unwrap();
        let want = (r * s).powi(2) / r + r * w * w;
        prop_assert!((norm - want).abs() < 1e-12 * want.max(1e-12));
    }

    #[test]
    fn geodesic_scaling(br in 0.1f64..5.0, bth in -3.0f64..3.0, t in 0.2f64..5.0) {
        let cfg = generic();
        let b = Complex64::from_polar(br, bth);
        let m = shortest_geodesic(cfg, b);
        prop_assert!((shortest_geodesic(cfg, b * t * t) - t * m).abs() < 1e-12 * t * m);
        prop_assert!((m * m * cfg.tau.im() / (2.0 * cfg.c_sk) - br).abs() < 1e-12 * br);
    }

    #[test]
    fn gmn_coefficient_negative(r in 0.01f64..200.0) {
        prop_assert!(gmn_coefficient(generic(), r) < 0.0);
    }

    #[test]
    fn semiflat_base_block_unimodular(r in 0.01f64..100.0, th in -3.0f64..3.0) {
        let cfg = generic();
        let base = BasePoint::new(cfg, Complex64::from_polar(r / cfg.c_sk, th)).unwrap();
        let m = semiflat_metric(cfg, &base).unwrap();
        prop_assert!((m.g[0][0][0] * m.g[0][1][1] - 1.0).abs() < 1e-12);
        prop_assert!((m.determinants()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_points_give_consistent_representatives(xr in -2.0f64..3.0, xi in -2.0f64..2.0) {
        let p0 = c(0.3, 0.1);
        let b = c(1.0, 0.0);
        let pt = SpectralFiberPoint::over(p0, b, c(xr, xi)).unwrap();
        let phi = higgs_representative(&pt).unwrap();
        let z = c(1.7, -0.4);
        prop_assert!((phi.det(z) * z * (z - 1.0) * (z - p0) - b).norm() < 1e-10);
    }
}
