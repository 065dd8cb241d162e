use proptest::prelude::*;

use chemostat::asymptotics::{singularity_line, stage5_integrate, stage5_zbar, ReducedState};
use chemostat::{ChemostatParams, NoiseSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reduced_total_relaxes_exponentially(theta in 0.9..1.1f64, total in 0.6..1.6f64, share in 0.05..0.95f64) {
        let p = ChemostatParams::table1(theta, NoiseSpec::None).unwrap();
        let (x, y) = (total * share, total * (1.0 - share));
        prop_assume!(y - singularity_line(&p, x) > 0.05);
        let tr = stage5_integrate(&p, ReducedState::new(&p, x, y).unwrap(), 8.0, 40).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let expect = 1.0 + (total - 1.0) * (-theta * t).exp();
            prop_assert!((s.x_bar + s.y_bar - expect).abs() < 1e-8, "t {t}: {} vs {expect}", s.x_bar + s.y_bar);
            prop_assert!((s.x_bar * p.f(s.z_bar) + s.y_bar * p.g(s.z_bar) - theta).abs() < 1e-10);
        }
    }

    #[test]
    fn balance_on_the_unit_line_is_break_even(x in 0.0..1.0f64) {
        let p = ChemostatParams::table1(1.0, NoiseSpec::None).unwrap();
        let z = stage5_zbar(&p, x, 1.0 - x).unwrap();
        prop_assert!((z - 1.0).abs() < 1e-10);
    }
}

#[test]
fn unit_dilution_settles_on_the_line_at_break_even() {
    let p = ChemostatParams::table1(1.0, NoiseSpec::None).unwrap();
    let tr = stage5_integrate(&p, ReducedState::new(&p, 0.9, 0.5).unwrap(), 30.0, 30).unwrap();
    let end = tr.last();
    assert!((end.x_bar + end.y_bar - 1.0).abs() < 1e-9);
    assert!((end.z_bar - 1.0).abs() < 1e-8);
    let start = tr.states[0];
    assert!(end.x_bar < start.x_bar && end.y_bar < start.y_bar);
}
