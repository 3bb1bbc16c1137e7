//! Acceptance battery. Prints one line per criterion and exits nonzero if a
//! criterion fails that is not listed in `KNOWN_LIMITATIONS`.

mod common;

use std::f64::consts::{E, PI};
use std::time::Instant;

use peaklab::analysis::{asymptotic_fit, concentration_report, pohozaev_check, pohozaev_radial, ConcentrationReport};
use peaklab::green::{constants, find_critical_points, green_bundle, robin_patch, CriticalKind};
use peaklab::leastenergy::{continuation_sweep, minimize_cp, solve_fixed_point, NonlinearOptions};
use peaklab::radial::{radial_energy_report, solve_radial, RadialOptions};
use peaklab::{boundary_facets, build_grid, DomainSpec, LinearSolveOptions};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

/// Sub-criteria expected to fail, with the reason printed next to them.
const KNOWN_LIMITATIONS: &[(&str, &str)] = &[(
    "6b",
    "at h = 1/12 the solution is a discrete delta from p = 20 on, so the annulus error \
     saturates at the discretization floor instead of decreasing",
)];

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Ledger {
    lines: Vec<Line>,
}

impl Ledger {
    fn record(&mut self, id: &'static str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = match (pass, KNOWN_LIMITATIONS.iter().find(|(k, _)| *k == id)) {
            (false, Some((_, why))) => format!(" [known limitation: {why}]"),
            _ => String::new(),
        };
        println!("criterion {id:<3} [{tag}] {detail}{note}");
        self.lines.push(Line { id, pass, detail });
    }

    fn unexpected_failures(&self) -> Vec<&Line> {
        self.lines
            .iter()
            .filter(|l| !l.pass && !KNOWN_LIMITATIONS.iter().any(|(k, _)| *k == l.id))
            .collect()
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn radial_criteria(led: &mut Ledger) {
    let t = Instant::now();
    let c = constants::<f64>(4).unwrap();
    let schedule: Vec<f64> = (0..8).map(|k| 10.0 * 2f64.powi(k)).collect();
    let opts = RadialOptions::default();
    let reports: Vec<_> = schedule
        .iter()
        .map(|&p| radial_energy_report(&solve_radial::<f64>(4, p, 1.0, &opts).expect("radial solve")))
        .collect();
    let fit = asymptotic_fit(&reports, 4).expect("fit");
    let elapsed = t.elapsed().as_secs_f64();

    let cp = &fit.rows[0];
    let closed = 8.0 * PI * E.sqrt();
    let gap = (cp.q_inf - closed).abs() / closed;
    led.record(
        "1",
        cp.monotone_tail && gap <= 0.10 && (c.cp_limit - closed).abs() < 1e-12 * closed,
        format!(
            "c_p p^(1/2) tail monotone = {}, fitted limit (p >= {}) {:.4} vs 8 pi sqrt(e) = {:.5} (gap {:.2}%), last {:.4}, {:.1} s",
            cp.monotone_tail,
            fit.fit_from,
            cp.q_inf,
            closed,
            100.0 * gap,
            cp.values.last().unwrap(),
            elapsed
        ),
    );

    let worst = reports.iter().map(|r| r.identity_defect()).fold(0.0, f64::max);
    let en = &fit.rows[1];
    let target = 64.0 * PI * PI * E;
    let egap = (en.q_inf - target).abs() / target;
    led.record(
        "2",
        worst <= 1e-4 && egap <= 0.15,
        format!(
            "max |p int u^(p+1) / p int |Lu|^2 - 1| = {:.2e}, fitted limit (p >= {}) {:.1} vs 64 pi^2 e = {:.1} (gap {:.2}%)",
            worst,
            fit.fit_from,
            en.q_inf,
            target,
            100.0 * egap
        ),
    );

    let gammas: Vec<f64> = reports.iter().filter(|r| r.p >= 40.0).map(|r| r.gamma_p).collect();
    let ratio = gammas.iter().cloned().fold(f64::MIN, f64::max) / gammas.iter().cloned().fold(f64::MAX, f64::min);
    led.record(
        "3",
        ratio <= 1.5,
        format!("gamma_p over p in [40, 1280]: max/min = {ratio:.4} ({gammas:.4?})"),
    );

    let upper = 64.0 * PI * PI;
    led.record(
        "4a",
        fit.l0 >= 1.0 && fit.l0 <= upper && (fit.l0_bracket.1 - upper).abs() < 1e-9 * upper,
        format!("L0 tail estimate {:.4} in [1, 64 pi^2 = {:.2}]", fit.l0, upper),
    );
}

fn concentration_criteria(led: &mut Ledger) {
    let t = Instant::now();
    let h = 1.0 / 12.0;
    let grid = build_grid(DomainSpec::ball(4, 1.0).unwrap(), h).unwrap();
    let opts = NonlinearOptions::default();
    let bundle = green_bundle(&grid, &[0.0; 4], &opts.linear).expect("green bundle");
    let schedule = [3.0, 6.0, 10.0, 20.0, 40.0, 80.0];
    let sweep = continuation_sweep(&grid, &schedule, &opts).expect("grid sweep");
    let reports: Vec<ConcentrationReport<f64>> = sweep
        .iter()
        .filter(|(s, _)| s.p >= 20.0)
        .map(|(s, _)| concentration_report(s, Some(&bundle)).expect("concentration"))
        .collect();
    let elapsed = t.elapsed().as_secs_f64();

    let cards: Vec<usize> = reports.iter().map(|r| r.card_s_estimate).collect();
    led.record(
        "4b",
        cards.iter().all(|&c| c == 1),
        format!("card(S) estimate on the ball for p = 20, 40, 80: {cards:?}"),
    );

    let k = reports[0]
        .f_mass_outside
        .iter()
        .position(|(r, _)| (r - 0.2).abs() < 1e-12)
        .expect("radius 0.2 tabulated");
    let outside: Vec<f64> = reports.iter().map(|r| r.f_mass_outside[k].1).collect();
    let inside: Vec<f64> = reports.iter().map(|r| r.f_mass_profile[k].1).collect();
    let at80 = 1.0 - outside[2];
    led.record(
        "5",
        strictly_decreasing(&outside) && at80 > 0.9,
        format!(
            "f_p mass in B_0.2(peak) at h = 1/12: {:?} (mass outside {:.2e}, {:.2e}, {:.2e}), {:.0} s",
            inside, outside[0], outside[1], outside[2], elapsed
        ),
    );

    let errs: Vec<f64> = reports.iter().map(|r| r.gtilde_compare.unwrap_or(f64::INFINITY)).collect();
    led.record(
        "6a",
        errs[2] <= 0.10,
        format!("annulus sup error |w_p - G~| / |G~| at p = 80: {:.3}%", 100.0 * errs[2]),
    );
    led.record(
        "6b",
        strictly_decreasing(&errs),
        format!("annulus sup error decreasing over p = 20, 40, 80: {errs:.7?}"),
    );
}

fn green_criterion(led: &mut Ledger) {
    let h = 0.05;
    let grid = build_grid(DomainSpec::ball(4, 1.0).unwrap(), h).unwrap();
    let b = green_bundle(&grid, &[0.0; 4], &LinearSolveOptions::default()).expect("green bundle");
    let k = 4.0 * PI * PI;
    let g_err = (b.g_diag + 1.0 / k).abs() * k;
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let r = norm(&grid.position(i));
        if r < 3.0 * h {
            continue;
        }
        let exact = (1.0 / (r * r) - 1.0) / k;
        worst = worst.max((b.green.values()[i] - exact).abs() / exact);
    }
    led.record(
        "7",
        g_err <= 0.01 && worst <= 0.02,
        format!("h = 0.05: g(0,0) relative error {g_err:.2e}, nodal G max relative error outside 3h {worst:.2e}"),
    );
}

fn pohozaev_criterion(led: &mut Ledger) {
    let radial: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&p| pohozaev_radial(&solve_radial::<f64>(4, p, 1.0, &RadialOptions::default()).unwrap()).rel_residual)
        .collect();
    let grid = build_grid(DomainSpec::ball(4, 1.0).unwrap(), 1.0 / 16.0).unwrap();
    let facets = boundary_facets(&grid).unwrap();
    let sweep = continuation_sweep(&grid, &[3.0, 6.0], &NonlinearOptions::default()).expect("grid sweep");
    let on_grid: Vec<f64> = sweep
        .iter()
        .map(|(s, _)| pohozaev_check(s, &[0.0; 4], &facets).unwrap().rel_residual)
        .collect();
    led.record(
        "8",
        radial.iter().all(|r| *r <= 1e-3) && on_grid.iter().all(|r| *r <= 0.05),
        format!("radial residuals (p = 10, 100, 1000) {}, grid h = 1/16 (p = 3, 6) {}", sci(&radial), sci(&on_grid)),
    );
}

struct PeakRun {
    h: f64,
    peak: Vec<f64>,
    critical: Option<Vec<f64>>,
    grads: Vec<f64>,
}

fn peak_run(h: f64) -> PeakRun {
    let grid = build_grid(DomainSpec::ellipsoid(vec![1.0, 1.0, 1.0, 1.3]).unwrap(), h).unwrap();
    let facets = boundary_facets(&grid).unwrap();
    let opts = NonlinearOptions::default();
    let sweep = continuation_sweep(&grid, &[3.0, 6.0, 10.0, 20.0, 40.0], &opts).expect("ellipsoid sweep");
    let mut grads = Vec::new();
    let mut peak = Vec::new();
    for (s, _) in &sweep {
        let c = concentration_report(s, None).expect("concentration");
        peak = c.peaks[0].position.clone();
        grads.push(norm(&pohozaev_check(s, &peak, &facets).unwrap().grad_vector));
    }
    let centre = grid.domain().center().to_vec();
    let lat = robin_patch(&grid, &centre, 2.0 * h, 4, true, &opts.linear).expect("robin patch");
    let critical = find_critical_points(&lat, 0.0)
        .expect("critical points")
        .into_iter()
        .filter(|c| c.kind == CriticalKind::Maximum)
        .min_by(|a, b| dist(&a.position, &peak).total_cmp(&dist(&b.position, &peak)))
        .map(|c| c.position);
    PeakRun {
        h,
        peak,
        critical,
        grads,
    }
}

fn peak_criterion(led: &mut Ledger) {
    let t = Instant::now();
    let runs = [peak_run(0.125), peak_run(0.125 / 2f64.sqrt())];
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &runs {
        let d = r.critical.as_ref().map(|c| dist(c, &r.peak));
        pass &= d.is_some_and(|d| d <= 3.0 * r.h) && strictly_decreasing(&r.grads);
        parts.push(format!(
            "h = {:.4}: peak {:.3?}, critical point {:.3?}, distance {}, |grad| over p {}",
            r.h,
            r.peak,
            r.critical,
            d.map_or("none".into(), |d| format!("{:.2} h", d / r.h)),
            sci(&r.grads)
        ));
    }
    let stable = match (&runs[0].critical, &runs[1].critical) {
        (Some(a), Some(b)) => dist(a, b) <= 3.0 * runs[0].h,
        _ => false,
    };
    led.record(
        "9",
        pass && stable,
        format!("{}; refinement stable = {stable}; {:.0} s", parts.join("; "), t.elapsed().as_secs_f64()),
    );
}

fn run_property<S, F>(name: &str, strategy: S, cases: u32, check: F) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> common::Check,
{
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner
        .run(&strategy, |v| check(v).map_err(TestCaseError::fail))
        .map_err(|e| format!("{name}: {e}"))
}

fn invariant_criterion(led: &mut Ledger) {
    use common::*;
    let t = Instant::now();
    let results = [
        run_property("maximum principle", (domain_case(), any::<u64>()), 24, |(c, s)| monotone_solve(&c, s)),
        run_property("self-adjointness", (domain_case(), any::<u64>()), 24, |(c, s)| self_adjoint(&c, s)),
        run_property("solve after apply", (domain_case(), any::<u64>()), 24, |(c, s)| solve_inverts_apply(&c, s)),
        run_property("solution invariants", (domain_case(), 1.6..6.0f64), 8, |(c, p)| solution_invariants(&c, p)),
        run_property("b0 C_N = N", 3usize..=10, 8, constants_identity),
        run_property(
            "Green splitting",
            (domain_case(), prop::collection::vec(-1.0..1.0f64, 4)),
            8,
            |(c, o)| green_splitting(&c, &o),
        ),
        run_property("scaling invariances", (domain_case(), 2.0..40.0f64, 0.1..10.0f64), 24, |(c, p, k)| {
            analysis_scaling(&c, p, k)
        }),
        run_property("fit exactness", (-50.0..50.0f64, -20.0..20.0f64, -20.0..20.0f64), 24, |(q, a, b)| {
            fit_is_exact(q, a, b)
        }),
    ];

    // minimizer path and fixed-point path on the same grid
    let grid = build_grid(DomainSpec::ball(3, 1.0).unwrap(), 0.125).unwrap();
    let opts = NonlinearOptions::default();
    let fp: f64 = solve_fixed_point(&grid, 3.0, None, &opts).expect("fixed point").energy_report().c_p;
    let mn = minimize_cp(&grid, 3.0, None, &opts).expect("minimizer").c_p;
    let cross = (fp - mn).abs() / fp;
    let radial = radial_energy_report(&solve_radial::<f64>(3, 3.0, 1.0, &RadialOptions::default()).unwrap()).c_p;
    let disc = (fp - radial).abs() / radial;

    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    led.record(
        "10",
        failures.is_empty() && cross <= 1e-4 && disc <= 0.03,
        format!(
            "{} property suites, failures {:?}; c_p minimizer vs fixed point {:.1e}, grid h = 0.125 vs radial {:.2e}; {:.0} s",
            results.len(),
            failures,
            cross,
            disc,
            t.elapsed().as_secs_f64()
        ),
    );
}

fn main() {
    let mut led = Ledger::default();
    radial_criteria(&mut led);
    green_criterion(&mut led);
    pohozaev_criterion(&mut led);
    invariant_criterion(&mut led);
    concentration_criteria(&mut led);
    peak_criterion(&mut led);

    let bad = led.unexpected_failures();
    let total = led.lines.len();
    let passed = led.lines.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{total} passed, {} unexpected failures", bad.len());
    if !bad.is_empty() {
        for l in &bad {
            println!("unexpected failure {}: {}", l.id, l.detail);
        }
        std::process::exit(1);
    }
}
