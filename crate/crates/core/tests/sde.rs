use proptest::prelude::*;

use chemostat::deterministic::State;
use chemostat::sde::{deficit_diagnostic, simulate_ensemble, simulate_path, Population, Scheme, SdeControls};
use chemostat::{ChemostatParams, NoiseSpec};

fn noise() -> impl Strategy<Value = NoiseSpec> {
    prop_oneof![
        (0.0..0.3f64).prop_map(|sigma| NoiseSpec::DilutionRate { sigma }),
        (0.0..0.6f64, 0.0..0.6f64, 0.0..0.6f64).prop_map(|(a, b, c)| NoiseSpec::General { sigma1: a, sigma2: b, sigma3: c }),
    ]
}

fn scheme() -> impl Strategy<Value = Scheme> {
    prop_oneof![Just(Scheme::EulerMaruyama), Just(Scheme::Milstein)]
}

fn controls(p: &ChemostatParams, t_end: f64, scheme: Scheme) -> SdeControls {
    let mut c = SdeControls::new(p, t_end);
    c.scheme = scheme;
    c.record_every = 1;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn paths_are_addressed_not_ordered(seed in any::<u64>(), n in noise(), sch in scheme(), k in 0u32..6) {
        let p = ChemostatParams::table1(1.0, n).unwrap().with_z_f(50.0).unwrap();
        let s0 = State::on_line_split(p.z_f);
        let c = controls(&p, 0.5, sch);
        let e = simulate_ensemble(&p, s0, &c, seed, 6).unwrap();
        let lone = simulate_path(&p, s0, &c, seed, k).unwrap();
        prop_assert_eq!(&e.trajectories[k as usize], &lone);
        let again = simulate_path(&p, s0, &c, seed, k).unwrap();
        prop_assert!(lone.states.iter().zip(&again.states).all(|(a, b)| a.to_array().map(f64::to_bits) == b.to_array().map(f64::to_bits)));
    }

    #[test]
    fn states_stay_nonnegative_and_absorbed(
        seed in any::<u64>(),
        n in noise(),
        sch in scheme(),
        theta in 0.8..1.2f64,
        x0 in 0.0..30.0f64,
        y0 in 0.0..30.0f64,
        z0 in 0.0..30.0f64,
    ) {
        let p = ChemostatParams::table1(theta, n).unwrap().with_z_f(30.0).unwrap();
        let tr = simulate_path(&p, State::new(x0, y0, z0), &controls(&p, 2.0, sch), seed, 0).unwrap();
        let mut gone = [false; 2];
        for s in &tr.states {
            prop_assert!(s.x >= 0.0 && s.y >= 0.0 && s.z >= 0.0 && s.is_finite());
            for (g, v) in gone.iter_mut().zip([s.x, s.y]) {
                prop_assert!(!(*g && v != 0.0), "population revived");
                *g |= v == 0.0;
            }
        }
        if gone[0] {
            prop_assert!(tr.extinction_time(Population::X).is_some());
        }
        if gone[1] {
            prop_assert!(tr.extinction_time(Population::Y).is_some());
        }
    }

    #[test]
    fn deficit_recursion_is_exact(seed in any::<u64>(), sigma in 0.0..0.3f64, theta in 0.5..1.5f64, w0 in -0.5..0.5f64, every in 1u64..20) {
        let p = ChemostatParams::table1(theta, NoiseSpec::DilutionRate { sigma }).unwrap().with_z_f(200.0).unwrap();
        let s0 = State::new(60.0, 60.0, 80.0 * (1.0 + w0));
        let mut c = SdeControls::new(&p, 3.0);
        c.record_every = every;
        let tr = simulate_path(&p, s0, &c, seed, 1).unwrap();
        let dev = deficit_diagnostic(&tr, &p).unwrap();
        prop_assert!(dev <= 1e-9 * p.z_f, "{}", dev);
    }
}

#[test]
fn ensemble_deficit_mean_decays_at_dilution_rate() {
    let noise = NoiseSpec::General { sigma1: 0.2, sigma2: 0.2, sigma3: 0.2 };
    let p = ChemostatParams::table1(1.0, noise).unwrap().with_z_f(1500.0).unwrap();
    let s0 = State::new(600.0, 600.0, 200.0);
    let c = SdeControls::new(&p, 2.0);
    let e = simulate_ensemble(&p, s0, &c, 77, 2000).unwrap();
    assert!(e.failures.is_empty());
    let w: Vec<f64> = e.trajectories.iter().map(|t| p.z_f - t.last().total()).collect();
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let steps = c.steps() as i32;
    let expect = 100.0 * (1.0 - p.theta * c.dt).powi(steps);
    assert!(((expect - 100.0 * (-2.0f64).exp()) / expect).abs() < 2e-3);
    assert!((mean - expect).abs() < 3.0 * se, "mean {mean} expect {expect} se {se}");
    assert!(e.trajectories.iter().all(|t| t.clamps.is_empty()));
}
