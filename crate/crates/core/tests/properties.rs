use std::f64::consts::PI;

use proptest::prelude::*;
use spdr_core::audit::{alpha0, derive_params_ns, NsTableInput};
use spdr_core::dynamics::StateMetric;
use spdr_core::noise::{ForcingFamily, NoiseSpec};
use spdr_core::ns::{NavierStokes, NsParams};
use spdr_core::oracles::{AffineChain, Amplitude, OuModel};
use spdr_core::rng::{SeqRng, StepRng};
use spdr_core::spectral::{Grid, SpectralField};
use spdr_core::transport::{assignment, wasserstein, Semimetric, SemimetricParams};
use spdr_core::Complex64;

struct Line;

impl StateMetric<f64> for Line {
    fn distance(&self, x: &f64, y: &f64) -> f64 {
        (x - y).abs()
    }
    fn h_norm_sq(&self, x: &f64) -> f64 {
        x * x
    }
    fn v_norm_sq(&self, x: &f64) -> f64 {
        x * x
    }
}

fn random_field(g: &std::sync::Arc<Grid>, rng: &mut SeqRng, decay: f64) -> SpectralField {
    let mut f = SpectralField::zeros(g);
    for &i in g.canonical() {
        let (m, n) = g.wavevector(i);
        let amp = (1.0 + g.lambda(i)).powf(-decay);
        f.set(m, n, Complex64::new(amp * rng.normal(), amp * rng.normal())).unwrap();
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alpha0_is_monotone(k1 in 0.0f64..10.0, k2 in 0.01f64..10.0, g in 0.01f64..10.0, bump in 0.0f64..5.0) {
        let (_, base) = alpha0(k1, k2, g).unwrap();
        prop_assert!(base > 0.0 && base <= 0.5);
        // Larger υ (via κ₁) never raises α₀; larger γ never lowers it.
        prop_assert!(alpha0(k1 + bump, k2, g).unwrap().1 <= base);
        prop_assert!(alpha0(k1, k2, g + bump).unwrap().1 >= base);
    }

    #[test]
    fn ns_table_matches_formulas(
        nu in 0.01f64..2.0,
        trace_q in 0.01f64..5.0,
        f_sq in 0.0f64..5.0,
        frac in 0.01f64..0.99,
        k0 in 0.0f64..3.0,
    ) {
        let input = NsTableInput { nu, lambda1: 1.0, lambda_n: 9.0, trace_q, f_sup_sq: f_sq, gamma: 0.0, k0 };
        let gamma = frac * input.gamma_cap();
        let p = derive_params_ns(&NsTableInput { gamma, ..input }).unwrap();
        let kappa2 = nu - gamma * trace_q;
        prop_assert!((p.kappa2 - kappa2).abs() <= 1e-12 * nu);
        prop_assert_eq!(p.kappa0, 9.0 * nu);
        prop_assert_eq!(p.kappa1, k0 * k0 / nu);
        prop_assert_eq!(p.kappa_eps, trace_q + f_sq / nu);
        prop_assert_eq!(p.feasible, p.kappa0 * p.kappa2 > p.kappa1 * p.kappa_eps);
    }

    #[test]
    fn semimetric_is_capped_and_symmetric(
        x in -5.0f64..5.0, y in -5.0f64..5.0,
        alpha in 0.05f64..0.5, upsilon in 0.0f64..2.0, n in 1.0f64..10.0,
    ) {
        let s = Semimetric::new(&Line, SemimetricParams::new(alpha, upsilon, n).unwrap());
        let d = s.d_n(&x, &y);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, s.d_n(&y, &x));
        prop_assert_eq!(s.d_tilde(&x, &y), s.d_tilde(&y, &x));
        prop_assert!(s.d_tilde(&x, &y) <= (1.0 + (x * x + y * y)).sqrt());
        let wider = Semimetric::new(&Line, SemimetricParams::new(alpha, upsilon, 2.0 * n).unwrap());
        prop_assert!(wider.d_n(&x, &y) >= d);
    }

    #[test]
    fn assignment_beats_every_fixed_matching(seed in any::<u64>(), n in 1usize..20, shift in 0usize..20) {
        let mut rng = SeqRng::new(seed);
        let c: Vec<f64> = (0..n * n).map(|_| rng.uniform()).collect();
        let a = assignment(&c, n).unwrap();
        let cyclic: f64 = (0..n).map(|i| c[i * n + (i + shift) % n]).sum::<f64>() / n as f64;
        prop_assert!(a.cost <= cyclic + 1e-12);
        for (i, &j) in a.target.iter().enumerate() {
            prop_assert!((a.u[i] + a.v[j] - c[i * n + j]).abs() < 1e-9);
        }
    }

    #[test]
    fn wasserstein_of_a_sample_with_itself_vanishes(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = SeqRng::new(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut ys = xs.clone();
        ys.reverse();
        let s = Semimetric::new(&Line, SemimetricParams::new(0.25, 1.0, 1.0).unwrap());
        prop_assert_eq!(wasserstein(&xs, &ys, |p, q| s.d_tilde(p, q)).unwrap().cost, 0.0);
    }

    #[test]
    fn streams_are_pure_functions_of_their_key(seed in any::<u64>(), traj in any::<u32>(), step in any::<u64>()) {
        let mut a = StepRng::new(seed, traj, step);
        let mut b = StepRng::new(seed, traj, step);
        for _ in 0..9 {
            prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn random_chains_satisfy_the_response_identity(seed in any::<u64>(), d in 2usize..12, a in -1.0f64..1.0) {
        let mut rng = SeqRng::new(seed);
        let chain = AffineChain::random_smooth(d, 0.3, &mut rng).unwrap();
        let phi: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let exact = chain.response_exact(a, &phi).unwrap();
        let direct = chain.response_by_differentiation(a, &phi).unwrap();
        prop_assert!((exact - direct).abs() <= 1e-10);
        let shifted: Vec<f64> = phi.iter().map(|p| p + 3.0).collect();
        prop_assert!((chain.response_exact(a, &shifted).unwrap() - exact).abs() <= 1e-10);
    }

    #[test]
    fn ou_linear_response_ignores_noise(lambda in 0.2f64..3.0, s1 in 0.1f64..2.0, s2 in 0.1f64..2.0, f0 in -2.0f64..2.0) {
        use spdr_core::observable::VectorObservable;
        let obs = VectorObservable::Linear { c: vec![1.0], clip: f64::INFINITY };
        let r1 = OuModel::new(&[lambda], vec![s1], vec![f0], Amplitude::Linear, 0.01).unwrap().exact(0.3, &obs).unwrap().1;
        let r2 = OuModel::new(&[lambda], vec![s2], vec![f0], Amplitude::Linear, 0.01).unwrap().exact(0.3, &obs).unwrap().1;
        prop_assert!((r1 - f0 / lambda).abs() < 1e-12 && (r1 - r2).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn advection_is_energy_neutral(seed in any::<u64>()) {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let m = NavierStokes::new(&g, NsParams::new(0.1, 0.01), NoiseSpec::zero(&g), ForcingFamily::zero(&g)).unwrap();
        let mut rng = SeqRng::new(seed);
        let u = random_field(&g, &mut rng, 1.0);
        let v = random_field(&g, &mut rng, 1.0);
        let scale = (u.norm_sq(-1.0) * u.norm_sq(0.0) * v.norm_sq(0.0)).sqrt();
        prop_assert!(m.trilinear(&u, &v, &v).abs() <= 1e-11 * scale.max(1.0));
        let swap = m.trilinear(&u, &v, &u) + m.trilinear(&u, &u, &v);
        prop_assert!(swap.abs() <= 1e-11 * scale.max(1.0));
    }

    #[test]
    fn spectral_round_trip(seed in any::<u64>()) {
        let g = Grid::new(2.0 * PI, 16).unwrap();
        let mut rng = SeqRng::new(seed);
        let f = random_field(&g, &mut rng, 0.5);
        let back = SpectralField::from_physical(&g, &f.to_physical()).unwrap();
        for (a, b) in f.coeffs().iter().zip(back.coeffs()) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }
}
