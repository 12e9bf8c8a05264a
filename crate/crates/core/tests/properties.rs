use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use superradiant::analytic::{critical_coupling, steady_state};
use superradiant::currents::CurrentReport;
use superradiant::meanfield::{self, MeanFieldState, Sampling};
use superradiant::model::validate;
use superradiant::ode::Dopri5;
use superradiant::stability::{eigenvalues, linearise};
use superradiant::{Branch, SystemParams, ValidatedParams};

fn params(freqs: Vec<f64>, j: f64, kappa: f64, g: f64) -> ValidatedParams {
    validate(&SystemParams {
        omega_emitter: 1.0,
        n_cavities: freqs.len(),
        cavity_freqs: freqs,
        hopping: j,
        coupling: g,
        cavity_loss: kappa,
        emitter_loss: 0.0,
        n_emitters: None,
    })
    .unwrap()
}

fn ladder(delta: f64, kappa: f64, g: f64) -> ValidatedParams {
    params(vec![0.1, 0.1 + delta, 0.1 + 2.0 * delta], 0.2, kappa, g)
}

fn arb_state(nc: usize) -> impl Strategy<Value = MeanFieldState> {
    (prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), nc), 0.0..std::f64::consts::TAU, 0.0..std::f64::consts::PI)
        .prop_map(|(a, phi, theta)| MeanFieldState {
            alphas: a.into_iter().map(|(re, im)| Complex64::new(re, im)).collect(),
            x: 0.5 * theta.sin() * phi.cos(),
            y: 0.5 * theta.sin() * phi.sin(),
            z: 0.5 * theta.cos(),
        })
}

fn arb_params() -> impl Strategy<Value = ValidatedParams> {
    (3usize..6, 0.05..1.5f64, 0.0..0.5f64, 0.0..0.6f64, 0.0..1.0f64, 0.0..0.8f64).prop_map(
        |(nc, wc, delta, j, kappa, g)| params((0..nc).map(|k| wc + k as f64 * delta).collect(), j, kappa, g),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn flow_is_parity_equivariant(p in arb_params(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nc = p.n_cavities();
        let s = MeanFieldState {
            alphas: (0..nc).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect(),
            x: rng.gen_range(-0.3..0.3),
            y: rng.gen_range(-0.3..0.3),
            z: -0.3,
        };
        let a = meanfield::rhs(&s.parity_flipped(), &p);
        let b = meanfield::rhs(&s, &p).parity_flipped();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lossless_steady_amplitudes_are_real(delta in 0.0..1.0f64, g in 0.0..0.8f64) {
        let p = ladder(delta, 0.0, g);
        if let Ok(s) = steady_state(&p, Branch::Plus) {
            for a in &s.state.alphas {
                prop_assert!(a.im.abs() <= 1e-14 * a.re.abs().max(1e-300) || a.im == 0.0, "{a}");
            }
        }
    }

    #[test]
    fn rescaling_all_frequencies_is_invisible(p in arb_params()) {
        let lambda = 2.0;
        let mut raw = p.to_params();
        raw.omega_emitter *= lambda;
        raw.cavity_freqs.iter_mut().for_each(|w| *w *= lambda);
        raw.hopping *= lambda;
        raw.coupling *= lambda;
        raw.cavity_loss *= lambda;
        let q = validate(&raw).unwrap();
        prop_assert_eq!(q.omega_scale(), lambda);
        prop_assert_eq!(q.to_params(), p.to_params());
        if let (Ok(a), Ok(b)) = (critical_coupling(&p), critical_coupling(&q)) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn node_balance_is_the_photon_number_rate((p, s) in arb_params().prop_flat_map(|p| {
        let nc = p.n_cavities();
        (Just(p), arb_state(nc))
    })) {
        let r = CurrentReport::from_state(&s, &p, 1e-8);
        // Second-order one-sided difference of |alpha_n|^2 along the flow.
        let h = 1e-3;
        let tight = Dopri5 { rtol: 1e-13, atol: 1e-15, ..Dopri5::default() };
        let traj = meanfield::integrate(&s, &p, 2.0 * h, &tight, Sampling::Uniform(h)).unwrap();
        prop_assert_eq!(traj.times.len(), 3);
        for n in 0..p.n_cavities() {
            let [n0, n1, n2] = [0, 1, 2].map(|k| traj.states[k].alphas[n].norm_sqr());
            let rate = (-3.0 * n0 + 4.0 * n1 - n2) / (2.0 * h);
            let expected = r.kirchhoff_residuals[n];
            prop_assert!((rate - expected).abs() <= 1e-4 * (1.0 + rate.abs()), "{} vs {}", rate, expected);
        }
    }
}

/// Photons flow from lower- to higher-frequency cavities along both routes
/// of the ladder, at random superradiant points of the lossy ring.
#[test]
fn flow_runs_up_the_ladder() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 10 {
        let delta = rng.gen_range(0.05..0.6);
        let kappa = rng.gen_range(0.1..0.6);
        let base = ladder(delta, kappa, 0.0);
        let Ok(g_c) = critical_coupling(&base) else { continue };
        if g_c + 0.01 >= 0.6 {
            continue;
        }
        let p = base.with_coupling(rng.gen_range(g_c + 0.01..0.6)).unwrap();
        let s = steady_state(&p, Branch::Plus).unwrap();
        let r = CurrentReport::from_state(&s.state, &p, 1e-8);
        assert!(r.bond[0] > 0.0 && r.bond[1] > 0.0 && r.bond[2] < 0.0, "{delta} {kappa}: {:?}", r.bond);
        checked += 1;
    }
}

/// Small displacements from a steady state evolve by the linearised flow.
#[test]
fn linearisation_predicts_small_displacements() {
    let p = ladder(0.5, 0.3, 0.35);
    let s = steady_state(&p, Branch::Plus).unwrap().state;
    let m = linearise(&s, &p).unwrap().matrix;
    let eps = 1e-6;
    let dim = m.nrows();
    let r2 = std::f64::consts::SQRT_2;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut start = s.clone();
    for n in 0..3 {
        start.alphas[n] += Complex64::new(v[2 * n], v[2 * n + 1]) * (eps / r2);
    }
    start.x += eps * v[6];
    start.y += eps * v[7];
    start.z = -(0.25 - start.x * start.x - start.y * start.y).sqrt();

    let tight = Dopri5 { rtol: 1e-13, atol: 1e-16, ..Dopri5::default() };
    let end = meanfield::integrate(&start, &p, 1.0, &tight, Sampling::EveryStep).unwrap();
    let end = end.last();
    let mut observed = Vec::with_capacity(dim);
    for n in 0..3 {
        let d = end.alphas[n] - s.alphas[n];
        observed.extend([r2 * d.re, r2 * d.im]);
    }
    observed.extend([end.x - s.x, end.y - s.y]);

    let predicted = m.exp() * nalgebra::DVector::from_vec(v.iter().map(|x| x * eps).collect());
    let err = observed.iter().zip(predicted.iter()).fold(0.0f64, |a, (o, q)| a.max((o - q).abs()));
    assert!(err <= 1e-3 * eps, "{err:e}");
    // Sanity: the displacement itself is of order eps.
    assert!(predicted.amax() > 0.1 * eps);
}

/// Every computed eigenvalue is a root of the characteristic polynomial,
/// and trace and determinant are reproduced.
#[test]
fn eigenvalues_are_characteristic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let a = DMatrix::<f64>::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let ev = eigenvalues(&a).unwrap();
        assert_eq!(ev.len(), 8);
        let trace: Complex64 = ev.iter().sum();
        assert!((trace.re - a.trace()).abs() < 1e-12 && trace.im.abs() < 1e-12);
        let det: Complex64 = ev.iter().product();
        assert!((det.re - a.determinant()).abs() < 1e-10 * (1.0 + a.determinant().abs()) && det.im.abs() < 1e-10);
        let ac = a.map(|x| Complex64::new(x, 0.0));
        let scale = a.norm();
        for &l in &ev {
            let shifted = &ac - DMatrix::<Complex64>::identity(8, 8) * l;
            let sv = shifted.singular_values();
            let smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(smallest <= 1e-10 * scale, "{l}: {smallest:e}");
        }
    }
}
