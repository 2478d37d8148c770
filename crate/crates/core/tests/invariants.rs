use kasner_core::background::KasnerBackground;
use kasner_core::diagnostics::{energy_norm_comparison, vtd_ratio, SIGMA_STAR};
use kasner_core::initial::{make_data, DataSpec};
use kasner_core::integrator::{integrate, IntegratorOptions, Trajectory};
use kasner_core::{parabolic, Gauge};

fn run(sigma: f64, gauge: Gauge, k_max: i32, t_min: f64) -> Trajectory {
    let bg = KasnerBackground::with_anisotropy(sigma, true).unwrap();
    let data = make_data(&bg, gauge, &DataSpec::random(11, k_max)).unwrap();
    integrate(&data, &IntegratorOptions { t_min, ..Default::default() }).unwrap()
}

#[test]
fn energy_norm_comparison_holds_out() {
    for sigma in [0.0, 0.05] {
        let traj = run(sigma, Gauge::Cmc, 3, 1e-8);
        for order in [0, 3] {
            let c = energy_norm_comparison(&traj, SIGMA_STAR, order).unwrap();
            assert!(c.passed, "sigma {sigma} order {order}: {c:?}");
            if sigma == 0.0 {
                assert!(c.energy_over_norm.min_holdout_exponent < 0.02, "{c:?}");
                assert!(c.norm_over_energy.min_holdout_exponent < 0.02, "{c:?}");
            }
        }
    }
}

#[test]
fn spatial_terms_become_negligible() {
    for sigma in [0.0, 0.05] {
        let traj = run(sigma, Gauge::Cmc, 2, 1e-8);
        let late: Vec<f64> = traj.states.iter().filter(|s| s.t <= 1e-2).map(vtd_ratio).collect();
        assert!(late.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "sigma {sigma}: {late:?}");
        assert!(late.last().unwrap() < &(0.6 * late[0]));
    }
}

#[test]
fn parabolic_constraints_propagate() {
    for (sigma, lambda) in [(0.0, 3.0), (0.1, 3.0), (0.05, 1.5)] {
        let traj = run(sigma, Gauge::Parabolic { lambda }, 2, 1e-6);
        for s in &traj.states {
            let c = parabolic::constraint_summary(s).unwrap();
            assert!(c.max_vs_solution() < 1e-7, "sigma {sigma} lambda {lambda} t {}: {c:?}", s.t);
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let bg = KasnerBackground::with_anisotropy(0.05, true).unwrap();
    let data = make_data(&bg, Gauge::Cmc, &DataSpec::random(5, 3)).unwrap();
    let opts = IntegratorOptions { t_min: 1e-4, ..Default::default() };
    let on = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| integrate(&data, &opts)).unwrap()
    };
    let (a, b) = (on(1), on(4));
    for (x, y) in a.states.iter().zip(&b.states) {
        assert_eq!(x.modes, y.modes);
    }
    assert_eq!(a.integrals, b.integrals);
}
