//! End-to-end acceptance suite: one PASS/FAIL line per criterion.
//!
//! Set `CHEMOSTAT_ACCEPTANCE=3,8` to run a subset and
//! `CHEMOSTAT_ACCEPTANCE_STRICT=1` to turn FAIL lines into a test failure.

use std::io::Write as _;
use std::time::Instant;

use nalgebra::{Matrix2, Matrix3};

use chemostat::asymptotics::{composite_vs_full, growth_margin, stage5_roots, stage5_zbar};
use chemostat::cli::{parse_config, read_manifest, run_recipe};
use chemostat::deterministic::{
    eigenvalue_coexistence_line, eigenvalues_single_survivor, eigenvalues_washout, integrate_ode, rhs,
    single_survivor_state, IntegrationControls, State, Survivor,
};
use chemostat::fokker_planck::{crosscheck_field, mass_in, run_fokker_planck, Advection, FpConfig, FpRun, Region, ReducedSdeConfig};
use chemostat::model::{TABLE1_X, TABLE1_Y, TABLE3_X, TABLE3_Y};
use chemostat::rng::philox4x32;
use chemostat::sde::{
    deficit_diagnostic, simulate_ensemble, simulate_path, strong_order_study, OrderStudyConfig, Scheme, SdeControls,
    SurvivorTally,
};
use chemostat::{ChemostatParams, GrowthCurve, NoiseSpec};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

struct Uniform {
    key: [u32; 2],
    n: u64,
}

impl Uniform {
    fn new(seed: u64) -> Self {
        Uniform { key: [seed as u32, (seed >> 32) as u32], n: 0 }
    }

    fn next(&mut self) -> f64 {
        let r = philox4x32([self.n as u32, (self.n >> 32) as u32, 0xACCE, 0], self.key);
        self.n += 1;
        (r[0] as f64 + 0.5) / 4294967296.0
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}

fn table1(theta: f64, noise: NoiseSpec) -> ChemostatParams {
    ChemostatParams::table1(theta, noise).unwrap()
}

fn dilution(sigma: f64) -> NoiseSpec {
    NoiseSpec::DilutionRate { sigma }
}

fn c1() -> Verdict {
    let r = [TABLE1_X, TABLE1_Y].map(|c| (c.rate(1.0) - 1.0).abs());
    verdict(r.iter().all(|&e| e <= 1e-9), format!("|f(1)-1| = {:.1e}, |g(1)-1| = {:.1e}", r[0], r[1]))
}

fn c2() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut got = Vec::new();
    for c in [TABLE3_X, TABLE3_Y] {
        let g = GrowthCurve::break_even(c.a, c.b).unwrap().gamma;
        worst = worst.max((g - c.gamma).abs());
        got.push(format!("{g:.6}"));
    }
    verdict(worst <= 1e-5, format!("gamma = ({}, {}), max deviation {worst:.1e}", got[0], got[1]))
}

fn c3() -> Verdict {
    let p = table1(1.0, NoiseSpec::None);
    let controls = IntegrationControls { n_out: 500, ..Default::default() };
    let tr = integrate_ode(&p, State::new(1.0, 1.0, 0.0), 30.0, &controls).unwrap();
    let worst = tr
        .times
        .iter()
        .zip(&tr.states)
        .map(|(&t, s)| {
            let exact = p.z_f - (p.z_f - 2.0) * (-t).exp();
            (s.total() - exact).abs() / exact
        })
        .fold(0.0, f64::max);
    verdict(worst <= 1e-6, format!("max relative mass error {worst:.2e} over {} points", tr.times.len()))
}

fn jacobian3(p: &ChemostatParams, s: [f64; 3]) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for c in 0..3 {
        let h = 1e-6 * s[c].abs().max(1.0);
        let (mut up, mut dn) = (s, s);
        up[c] += h;
        dn[c] -= h;
        let (fu, fd) = (rhs(p, &State::from_array(up)), rhs(p, &State::from_array(dn)));
        for r in 0..3 {
            j[(r, c)] = (fu[r] - fd[r]) / (2.0 * h);
        }
    }
    j
}

fn real_eigs(j: &Matrix3<f64>) -> Option<Vec<f64>> {
    let e = j.complex_eigenvalues();
    let scale = j.norm().max(1.0);
    if e.iter().any(|c| c.im.abs() > 1e-9 * scale) {
        return None;
    }
    let mut v: Vec<f64> = e.iter().map(|c| c.re).collect();
    v.sort_by(f64::total_cmp);
    Some(v)
}

// Removes the `-theta` mode of the total mass and compares the rest.
fn eig_error(j: &Matrix3<f64>, theta: f64, closed: (f64, f64)) -> f64 {
    let Some(mut num) = real_eigs(j) else { return f64::INFINITY };
    let k = num.iter().enumerate().min_by(|a, b| (a.1 + theta).abs().total_cmp(&(b.1 + theta).abs())).unwrap().0;
    num.remove(k);
    let mut c = [closed.0, closed.1];
    c.sort_by(f64::total_cmp);
    num.iter().zip(c).map(|(n, c)| (n - c).abs() / c.abs().max(1.0)).fold(0.0, f64::max)
}

fn c4() -> Verdict {
    let mut u = Uniform::new(4);
    let mut worst: f64 = 0.0;
    let mut worst_sv: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..200 {
        let cx = GrowthCurve::new(u.range(1.2, 4.0), u.range(0.2, 3.0), u.range(0.0, 0.3)).unwrap();
        let cy = GrowthCurve::new(u.range(1.2, 4.0), u.range(0.2, 3.0), u.range(0.0, 0.3)).unwrap();
        let z_f = 10f64.powf(u.range(1.0, 4.0));
        let theta = u.range(0.3, 1.5);
        let p = ChemostatParams::new(theta, z_f, cx, cy, NoiseSpec::None).unwrap();
        let j = jacobian3(&p, [0.0, 0.0, z_f]);
        worst = worst.max(eig_error(&j, theta, eigenvalues_washout(&p)));
        checked += 1;
        for which in [Survivor::X, Survivor::Y] {
            if let Ok(s) = single_survivor_state(&p, which) {
                let closed = eigenvalues_single_survivor(&p, which).unwrap();
                worst = worst.max(eig_error(&jacobian3(&p, s), theta, closed));
                checked += 1;
            }
        }
        let bx = u.range(0.2, 3.0);
        let by = u.range(0.2, 3.0);
        let line = ChemostatParams::new(
            1.0,
            z_f,
            GrowthCurve::break_even(bx + 1.0, bx).unwrap(),
            GrowthCurve::break_even(by + 1.0, by).unwrap(),
            NoiseSpec::None,
        )
        .unwrap();
        let a = u.range(0.05, 0.95) * (z_f - 1.0);
        let s = [z_f - 1.0 - a, a, 1.0];
        let closed = eigenvalue_coexistence_line(&line, a).unwrap();
        let j = jacobian3(&line, s);
        worst = worst.max(eig_error(&j, 1.0, closed));
        let h = 1e-6 * z_f;
        let f2 = |x: f64, y: f64| {
            let d = rhs(&line, &State::new(x, y, z_f - x - y));
            [d[0], d[1]]
        };
        let (xp, xm) = (f2(s[0] + h, s[1]), f2(s[0] - h, s[1]));
        let (yp, ym) = (f2(s[0], s[1] + h), f2(s[0], s[1] - h));
        let jr = Matrix2::new(
            (xp[0] - xm[0]) / (2.0 * h),
            (yp[0] - ym[0]) / (2.0 * h),
            (xp[1] - xm[1]) / (2.0 * h),
            (yp[1] - ym[1]) / (2.0 * h),
        );
        let sv = jr.svd(false, false).singular_values;
        worst_sv = worst_sv.max(sv.min() / jr.norm());
        checked += 1;
    }
    verdict(
        worst <= 1e-6 && worst_sv < 1e-8,
        format!("{checked} steady states, max relative eigenvalue error {worst:.1e}, line sigma_min/norm {worst_sv:.1e}"),
    )
}

fn c5() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for sigma in [0.001, 0.03] {
        let p = table1(1.0, dilution(sigma));
        let mut c = SdeControls::new(&p, 1.0);
        c.dt = 1e-4;
        c.t_end = 10.0;
        c.record_every = 1;
        for path in 0..4 {
            let tr = simulate_path(&p, State::on_line_split(p.z_f), &c, 5, path).unwrap();
            steps = steps.max(*tr.steps.last().unwrap());
            worst = worst.max(deficit_diagnostic(&tr, &p).unwrap() / p.z_f);
        }
    }
    verdict(worst <= 1e-9, format!("{steps} steps per path, max deviation / z_f = {worst:.1e}"))
}

fn c6() -> Verdict {
    let p = table1(1.0, NoiseSpec::General { sigma1: 0.5, sigma2: 0.5, sigma3: 0.5 }).with_z_f(5.0).unwrap();
    let cfg = OrderStudyConfig {
        s0: State::new(1.0, 1.0, 1.0),
        t_end: 1.0,
        dt_coarse: 0.05,
        levels: 4,
        reference_refinement: 4,
        n_paths: 200,
        seed: 6,
    };
    let em = strong_order_study(&p, Scheme::EulerMaruyama, &cfg).unwrap().slope;
    let mil = strong_order_study(&p, Scheme::Milstein, &cfg).unwrap().slope;
    verdict(
        (0.35..=0.65).contains(&em) && (0.85..=1.15).contains(&mil),
        format!("EM slope {em:.3}, Milstein slope {mil:.3}"),
    )
}

fn tally(p: &ChemostatParams, t_end: f64, seed: u64) -> SurvivorTally {
    let mut c = SdeControls::new(p, t_end);
    c.stop_on_extinction = true;
    c.record_every = 100_000;
    simulate_ensemble(p, State::on_line_split(p.z_f), &c, seed, 20).unwrap().tally
}

fn c7() -> Verdict {
    let desk = |theta, sigma| table1(theta, dilution(sigma)).with_z_f(1500.0).unwrap();
    // Off the line the loser decays exponentially; on it the selection is
    // noise-driven and needs a horizon of order 1/sigma^2.
    let runs = [
        ("theta=1.02 sigma=0.0006 x", desk(1.02, 0.0006), 5000.0, true),
        ("theta=0.98 sigma=0.0006 y", desk(0.98, 0.0006), 5000.0, false),
        ("theta=1 sigma=0.0006 x", desk(1.0, 0.0006), 200_000.0, true),
        ("theta=1 sigma=0.001 x", desk(1.0, 0.001), 200_000.0, true),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (label, p, t_end, want_x)) in runs.into_iter().enumerate() {
        let t = tally(&p, t_end, 70 + i as u64);
        let wins = if want_x { t.x } else { t.y };
        pass &= wins >= 18;
        parts.push(format!("{label} {wins}/20 (undetermined {})", t.undetermined));
    }
    verdict(pass, parts.join("; "))
}

fn c8() -> Verdict {
    let p = table1(1.0, NoiseSpec::None);
    let mut u = Uniform::new(8);
    let (mut worst_res, mut worst_other, mut n) = (0.0f64, f64::NEG_INFINITY, 0);
    while n < 10_000 {
        let (x, y) = (u.range(0.0, 3.0), u.range(0.0, 3.0));
        if growth_margin(&p, x, y) >= -1e-6 {
            continue;
        }
        let (z, other) = stage5_roots(&p, x, y).unwrap();
        worst_res = worst_res.max((x * p.f(z) + y * p.g(z) - p.theta).abs());
        worst_other = worst_other.max(other);
        n += 1;
    }
    let z = stage5_zbar(&p, 0.8, 0.4).unwrap();
    let h = |z: f64| 0.8 * p.f(z) + 0.4 * p.g(z) - p.theta;
    let mut scan = f64::NAN;
    let step = 1e-6;
    let mut prev = h(0.0);
    for k in 1..5_000_000 {
        let zz = k as f64 * step;
        let cur = h(zz);
        if prev.signum() != cur.signum() {
            scan = zz - step * cur / (cur - prev);
            break;
        }
        prev = cur;
    }
    verdict(
        worst_res <= 1e-10 && worst_other <= 0.0 && (z - 0.73770).abs() <= 1e-4 && (scan - z).abs() <= 1e-6,
        format!("max residual {worst_res:.1e}, max discarded root {worst_other:.4}, z(0.8, 0.4) = {z:.6}, scan {scan:.6}"),
    )
}

fn c9() -> Verdict {
    let p = table1(1.0, NoiseSpec::None);
    let r = composite_vs_full(&p, 1.0, 1.0, &[1e3, 1e4, 1e5], 40.0).unwrap();
    let exp_err = r.rows.iter().flat_map(|row| row.exponent_rel_err).fold(0.0, f64::max);
    let ends = r.series("5-endpoint");
    verdict(
        exp_err <= 0.01 && r.is_decreasing("5-endpoint"),
        format!("max exponent error {:.2}%, endpoint distances {:?}", 100.0 * exp_err, ends.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()),
    )
}

fn fp_config(horizon: f64) -> FpConfig {
    FpConfig { horizon, h: 0.01, dt: 0.05, advection: Advection::Limited, ..FpConfig::default() }
}

fn mass_range(run: &FpRun) -> (f64, f64, f64) {
    let m = run.field.ledger.iter().map(|r| r.mass);
    let lo = m.clone().fold(f64::INFINITY, f64::min);
    let hi = m.fold(f64::NEG_INFINITY, f64::max);
    let clip = run.field.ledger.iter().map(|r| r.clipped).fold(0.0, f64::max);
    (lo, hi, clip)
}

fn c10_11(which: &[u32]) -> Vec<(u32, Verdict)> {
    let p = table1(1.0, dilution(0.03));
    let cfg = fp_config(500.0);
    let run = run_fokker_planck(&p, &cfg).unwrap();
    let mut out = Vec::new();
    if which.contains(&10) {
        let (lo, hi, clip) = mass_range(&run);
        let low_y = mass_in(&run.field, &run.domain, &Region::below_y(0.1));
        out.push((
            10,
            verdict(
                lo >= 0.99 && hi <= 1.01 && low_y >= 0.9,
                format!("mass in [{lo:.10}, {hi:.10}], max clip/step {clip:.1e}, mass(y < 0.1) at t=500 {low_y:.4} (need 0.9)"),
            ),
        ));
    }
    if which.contains(&11) {
        let sde = ReducedSdeConfig { n_paths: 10_000, ..Default::default() };
        let r = crosscheck_field(&p, &run.domain, &run.field, &cfg, &sde, 30).unwrap();
        out.push((
            11,
            verdict(
                r.tv_distance <= 0.15,
                format!("TV {:.4} on 30x30 bins, {} paths, {} failed", r.tv_distance, r.sde_paths, r.sde_failures),
            ),
        ));
    }
    out
}

fn c12() -> Verdict {
    let low = table1(0.99, dilution(0.03));
    let run = run_fokker_planck(&low, &fp_config(100.0)).unwrap();
    let left = mass_in(&run.field, &run.domain, &Region::left_of_x(0.1));
    let (lo, hi, _) = mass_range(&run);
    let high = table1(0.99, dilution(0.2));
    let run_h = run_fokker_planck(&high, &fp_config(100.0)).unwrap();
    let below = mass_in(&run_h.field, &run_h.domain, &Region::HalfPlane { a: -1.0, b: 1.0, c: 0.0 });
    let (lo_h, hi_h, clip_h) = mass_range(&run_h);
    verdict(
        left >= 0.9 && below > 0.5 && lo.min(lo_h) >= 0.99 && hi.max(hi_h) <= 1.01,
        format!(
            "sigma=0.03: mass(x < 0.1) at t=100 {left:.4} (need 0.9); sigma=0.2: mass(y < x) at t=100 {below:.4} (need > 0.5), max clip/step {clip_h:.1e}"
        ),
    )
}

fn c13() -> Verdict {
    let p = ChemostatParams::table3(1.0, NoiseSpec::General { sigma1: 0.0006, sigma2: 0.0007, sigma3: 9.0 })
        .unwrap()
        .with_z_f(1500.0)
        .unwrap();
    let net = (p.curve_x.a - p.curve_x.gamma, p.curve_y.a - p.curve_y.gamma);
    let t = tally(&p, 10_000.0, 13);
    verdict(
        net.1 > net.0 && t.y >= 18,
        format!("a-gamma = ({:.4}, {:.4}), y wins {}/20 (undetermined {})", net.0, net.1, t.y, t.undetermined),
    )
}

fn c14() -> Verdict {
    let text = "schema_version = 1\nseed = 14\n";
    let cfg = parse_config(text).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut manifests = Vec::new();
    for d in &dirs {
        manifests.push(run_recipe("fig20", &cfg, text, d.path(), false).unwrap());
    }
    let mut same = 0;
    let mut differ = Vec::new();
    for o in &manifests[0][0].outputs {
        let a = std::fs::read(dirs[0].path().join(&o.path)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&o.path)).unwrap();
        if a == b {
            same += 1;
        } else {
            differ.push(o.path.clone());
        }
    }
    let fp_equal = manifests[0][0].fingerprint() == manifests[1][0].fingerprint();
    let on_disk = read_manifest(&dirs[1].path().join("fig20")).unwrap() == manifests[1][0];
    verdict(
        differ.is_empty() && fp_equal && on_disk && same > 0,
        format!("{same} files byte-identical, differing {differ:?}, manifest fingerprints equal: {fp_equal}"),
    )
}

fn selected() -> Vec<u32> {
    match std::env::var("CHEMOSTAT_ACCEPTANCE") {
        Ok(s) if !s.trim().is_empty() => s.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        _ => (1..=14).collect(),
    }
}

#[test]
fn acceptance() {
    let which = selected();
    let mut results: Vec<(u32, Verdict, f64)> = Vec::new();
    let timed = |f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let v = f();
        (v, t.elapsed().as_secs_f64())
    };
    let single: [(u32, fn() -> Verdict); 11] =
        [(1, c1), (2, c2), (3, c3), (4, c4), (5, c5), (6, c6), (7, c7), (8, c8), (9, c9), (12, c12), (13, c13)];
    for (n, f) in single {
        if which.contains(&n) {
            let (v, s) = timed(&f);
            results.push((n, v, s));
        }
    }
    if which.contains(&10) || which.contains(&11) {
        let t = Instant::now();
        let vs = c10_11(&which);
        let s = t.elapsed().as_secs_f64();
        for (n, v) in vs {
            results.push((n, v, s));
        }
    }
    if which.contains(&14) {
        let (v, s) = timed(&c14);
        results.push((14, v, s));
    }
    results.sort_by_key(|r| r.0);
    let mut failed = Vec::new();
    let mut report = String::new();
    for (n, v, s) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        report += &format!("criterion {n:>2}: {tag}  {}  [{s:.1}s]\n", v.detail);
        if !v.pass {
            failed.push(*n);
        }
    }
    report += &format!("acceptance: {} of {} pass; failing {failed:?}\n", results.len() - failed.len(), results.len());
    std::io::stderr().write_all(report.as_bytes()).unwrap();
    if std::env::var("CHEMOSTAT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert!(failed.is_empty(), "failing criteria {failed:?}");
    }
}
