//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any failed.

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use dcf_delay::delay::{self, DelayReport, TrafficSpec};
use dcf_delay::experiment::{self, Experiment, ExperimentSpec, JensenTally, RowNote, Settings};
use dcf_delay::mac::{self, SlotModel};
use dcf_delay::sim::{self, SimConfig};
use dcf_delay::MacPhyParams;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

/// Backoff-chain attempt probability in its textbook rational form.
fn oracle_beta(p: f64, w: f64, m: i32) -> f64 {
    2.0 * (1.0 - 2.0 * p) / ((w + 1.0) * (1.0 - 2.0 * p) + p * w * (1.0 - (2.0 * p).powi(m)))
}

/// Scans `p` on a uniform grid and returns the grid point with the smallest
/// fixed-point mismatch.
fn grid_oracle(n: u32, w: f64, m: i32, step: f64) -> f64 {
    let steps = (1.0 / step) as u64;
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..steps {
        let p = k as f64 * step;
        if (1.0 - 2.0 * p).abs() < 1e-12 {
            continue;
        }
        let b = oracle_beta(p, w, m);
        let g = (p - (1.0 - (1.0 - b).powi(n as i32 - 1))).abs();
        if g < best.0 {
            best = (g, p);
        }
    }
    best.1
}

fn fixed_point_solver() -> Verdict {
    let p = MacPhyParams::dot11b_1mbps();
    let ns = [2u32, 3, 5, 10, 20];
    let start = Instant::now();
    let solved: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| mac::solve_attempt_probability(n, &p, mac::DEFAULT_TOL).unwrap())
        .collect();
    let solve_time = start.elapsed();
    let mut worst_gap: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for (&n, &(beta, pc)) in ns.iter().zip(&solved) {
        let oracle = grid_oracle(n, p.w_min as f64, p.m_stages as i32, 1e-7);
        worst_gap = worst_gap.max((pc - oracle).abs());
        worst_residual = worst_residual.max(mac::fixed_point_residual(pc, n, p.w_min, p.m_stages).abs());
        assert!(beta > 0.0 && beta < 1.0);
    }
    verdict(
        worst_gap <= 1e-6 && worst_residual < 1e-12 && solve_time < Duration::from_secs(1),
        format!("max |p - grid| = {worst_gap:.2e}, max residual = {worst_residual:.2e}, solve time {solve_time:?}"),
    )
}

fn saturation_capacity_value() -> Verdict {
    let c = mac::saturation_capacity(&MacPhyParams::dot11b_1mbps(), 10).unwrap();
    let err = (c - experiment::REFERENCE_CAPACITY).abs() / experiment::REFERENCE_CAPACITY;
    verdict(err <= 0.05, format!("S(10) = {c:.3} pkts/s, {:.2}% from 72.8", 100.0 * err))
}

fn saturation_plateau() -> Verdict {
    let p = MacPhyParams::dot11b_1mbps();
    let curve: Vec<f64> = (5..=50).map(|n| SlotModel::solve(n, &p).unwrap().throughput()).collect();
    let spread = experiment::plateau_spread(curve.iter().copied()).unwrap();
    verdict(
        spread < 0.10,
        format!(
            "spread over n in [5,50] = {:.2}% (S(5) = {:.2}, S(50) = {:.2})",
            100.0 * spread,
            curve[0],
            curve[45]
        ),
    )
}

fn single_node_reduction() -> Verdict {
    let c = 72.8;
    let mut worst: f64 = 0.0;
    for k in 1..=9 {
        let lambda = c * k as f64 / 10.0;
        let d = delay::mean_delay_homogeneous(1, lambda, c).unwrap();
        let mm1 = 1.0 / (c - lambda);
        worst = worst.max((d - mm1).abs() / mm1);
    }
    verdict(worst <= 1e-12, format!("max relative gap to 1/(C-lambda) = {worst:.2e}"))
}

fn light_load_limit() -> Verdict {
    let c = mac::saturation_capacity(&MacPhyParams::dot11b_1mbps(), 10).unwrap();
    let mut worst: f64 = 0.0;
    for n in [2, 5, 10] {
        let d = delay::mean_delay_homogeneous(n, c * 1e-6, c).unwrap();
        worst = worst.max((d * c - 1.0).abs());
    }
    verdict(worst <= 1e-3, format!("max relative gap to 1/C = {worst:.2e}"))
}

fn nonhomogeneous_solver() -> Verdict {
    let c = 72.8;
    let mut worst_equal: f64 = 0.0;
    for (n, lambda) in [(2usize, 5.0), (5, 13.0), (10, 3.0), (20, 3.5), (3, 0.01)] {
        let m = delay::solve_service_rate_nonhomogeneous(&vec![lambda; n], c, delay::DEFAULT_TOL).unwrap();
        let hom = delay::service_rate_bound_homogeneous(n as u32, lambda, c).unwrap();
        worst_equal = worst_equal.max((m - hom).abs() / hom);
    }
    let mut worst_quad: f64 = 0.0;
    for (a, b) in [(10.0, 20.0), (1.0, 30.0), (5.0, 5.0), (0.5, 60.0)] {
        let m = delay::solve_service_rate_nonhomogeneous(&[a, b], c, delay::DEFAULT_TOL).unwrap();
        let q = (a + b) / c;
        let root = ((a + b) + ((a + b) * (a + b) - 4.0 * q * a * b).sqrt()) / (2.0 * q);
        worst_quad = worst_quad.max((m - root).abs() / root);
    }
    verdict(
        worst_equal <= 1e-9 && worst_quad <= 1e-9,
        format!("equal-rate gap {worst_equal:.2e}, two-node quadratic gap {worst_quad:.2e}"),
    )
}

fn saturated_cross_validation(jensen: &mut JensenTally) -> Verdict {
    let p = MacPhyParams::dot11b_1mbps();
    let c = mac::saturation_capacity(&p, 10).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [5u32, 10, 20] {
        let start = Instant::now();
        let m = sim::run_simulation(&SimConfig::saturated(n as usize, p, 2000.0, 100 + n as u64)).unwrap();
        let took = start.elapsed();
        let analytic = mac::saturation_throughput(n, &p).unwrap();
        let err = (m.sim_throughput - analytic).abs() / analytic;
        ok &= err <= 0.05 && took < Duration::from_secs(60);
        tally(jensen, &m, c);
        parts.push(format!("n={n}: {:.2}% in {:.2?}", 100.0 * err, took));
    }
    verdict(ok, parts.join(", "))
}

fn tally(jensen: &mut JensenTally, m: &sim::SimMetrics, c: f64) {
    if let Ok(b) = sim::occupancy_bound_check(m, c) {
        jensen.checked += 1;
        jensen.violations += usize::from(!b.holds);
    }
}

fn merge(into: &mut JensenTally, from: JensenTally) {
    into.checked += from.checked;
    into.violations += from.violations;
}

fn table_reproduction(jensen: &mut JensenTally) -> Verdict {
    let s = Settings::default();
    let table = experiment::table_check(&s).unwrap();
    merge(jensen, table.jensen);
    let mut ok = true;
    let mut lines = Vec::new();
    for row in &table.rows {
        let mismatched = row.has_note(RowNote::UtilizationMismatch);
        let err = row.rel_error.unwrap_or(f64::INFINITY);
        let printed = row.printed_utilization.unwrap();
        let util_ok = (row.utilization - printed).abs() <= s.utilization_tolerance;
        // the printed n=5 rate and utilization disagree; that row is reported only
        if mismatched && row.n == 5 {
            lines.push(format!(
                "    n={} lambda={:.2}: rho={:.3} vs printed {printed:.2}, err {:.1}% [discrepancy, not asserted]",
                row.n,
                row.lambda,
                row.utilization,
                100.0 * err
            ));
            continue;
        }
        if !row.has_note(RowNote::RatioDerived) {
            ok &= util_ok;
        }
        ok &= err <= s.error_threshold;
        lines.push(format!(
            "    n={} lambda={:.2}: rho={:.3} (printed {printed:.2}{}), analytic {:.2} ms, sim {:.2} +/- {:.2} ms, err {:.1}%{}",
            row.n,
            row.lambda,
            row.utilization,
            if util_ok { "" } else { " MISMATCH" },
            1e3 * row.analytic_delay.unwrap_or(f64::NAN),
            1e3 * row.sim_mean_delay.unwrap_or(f64::NAN),
            1e3 * row.ci_halfwidth.unwrap_or(f64::NAN),
            100.0 * err,
            if row.has_note(RowNote::RatioDerived) { " [rate from printed utilization]" } else { "" },
        ));
    }
    let contrast = experiment::sweep_delay_vs_lambda(&s, 5, &[5.0, 14.0]).unwrap();
    merge(jensen, contrast.jensen);
    let light = contrast.rows[0].rel_error.unwrap();
    let heavy = contrast.rows[1].rel_error.unwrap();
    ok &= heavy > light && contrast.rows[1].has_note(RowNote::HeavyLoad);
    lines.push(format!(
        "    heavy-load contrast: err(5, 14) = {:.1}% vs err(5, 5) = {:.1}%",
        100.0 * heavy,
        100.0 * light
    ));
    verdict(ok, format!("30 replications x 2000 s, 95% CI\n{}", lines.join("\n")))
}

fn jensen_everywhere(jensen: &mut JensenTally) -> Verdict {
    let p = MacPhyParams::dot11b_1mbps();
    let c = mac::saturation_capacity(&p, 10).unwrap();
    for (i, rates) in [
        vec![5.0; 5],
        vec![13.0; 5],
        vec![2.0, 4.0, 8.0],
        vec![10.0, 20.0],
        vec![1.0; 20],
        vec![30.0],
        vec![0.5, 0.5, 25.0, 0.0],
    ]
    .into_iter()
    .enumerate()
    {
        let mut cfg = SimConfig::homogeneous(rates.len(), 0.0, p, 500.0, 900 + i as u64);
        cfg.rates = rates;
        tally(jensen, &sim::run_simulation(&cfg).unwrap(), c);
        cfg.idle_arrival = sim::IdleArrival::Immediate;
        tally(jensen, &sim::run_simulation(&cfg).unwrap(), c);
    }
    verdict(
        jensen.violations == 0 && jensen.checked > 0,
        format!("{} traces checked, {} violations", jensen.checked, jensen.violations),
    )
}

fn determinism() -> Verdict {
    let settings = Settings { measure_time: 300.0, replications: 6, seed: 42, ..Settings::default() };
    let specs = [
        ExperimentSpec::new(Experiment::DelayVsLambda { n: 4, lambdas: vec![9.0, 3.0, 13.0] }, settings.clone()),
        ExperimentSpec::new(Experiment::DelayVsN { lambda: 3.0, ns: vec![10, 2, 6] }, settings.clone()),
        ExperimentSpec::new(Experiment::NonHomogeneous { rates: vec![2.0, 4.0, 8.0] }, settings.clone()),
        ExperimentSpec::new(Experiment::ThroughputVsN { ns: vec![1, 5, 10] }, settings),
    ];
    let render = |spec: &ExperimentSpec, threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| experiment::render_csv(spec, &experiment::run(spec).unwrap()).unwrap())
    };
    let mut identical = 0;
    for spec in &specs {
        let a = render(spec, 1);
        let b = render(spec, 1);
        let c = render(spec, 4);
        identical += usize::from(a == b && b == c);
    }
    verdict(
        identical == specs.len(),
        format!("{identical}/{} experiments byte-identical across reruns and thread counts", specs.len()),
    )
}

fn property_suite() -> Verdict {
    // a runner counts cases across calls, so every property gets its own
    let runner = || TestRunner::new(Config { cases: 200, failure_persistence: None, ..Config::default() });
    let c = 72.8;
    let mut failures = Vec::new();

    let monotone_lambda = runner().run(&(1u32..40, 0.01f64..0.98, 0.01f64..0.98), |(n, a, b)| {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assume!(hi - lo > 1e-6);
        let d_lo = delay::mean_delay_homogeneous(n, lo * c / n as f64, c).unwrap();
        let d_hi = delay::mean_delay_homogeneous(n, hi * c / n as f64, c).unwrap();
        prop_assert!(d_lo < d_hi);
        Ok(())
    });
    if let Err(e) = monotone_lambda {
        failures.push(format!("monotone in lambda: {e}"));
    }

    let monotone_n = runner().run(&(1u32..30, 0.01f64..1.0), |(n, lambda)| {
        prop_assume!((n + 1) as f64 * lambda < c * 0.999);
        let a = delay::mean_delay_homogeneous(n, lambda, c).unwrap();
        let b = delay::mean_delay_homogeneous(n + 1, lambda, c).unwrap();
        prop_assert!(a < b);
        Ok(())
    });
    if let Err(e) = monotone_n {
        failures.push(format!("monotone in n: {e}"));
    }

    let diverges = runner().run(&(1u32..30), |n| {
        let lambda = c / n as f64 * (1.0 - 1e-9);
        let near = delay::mean_delay_homogeneous(n, lambda, c).unwrap();
        let law = (1e-9f64.powf(-1.0 / n as f64) - 1.0) / lambda;
        prop_assert!((near - law).abs() <= 1e-6 * law);
        let farther = delay::mean_delay_homogeneous(n, c / n as f64 * (1.0 - 1e-6), c).unwrap();
        prop_assert!(near > farther);
        prop_assert!(delay::mean_delay_homogeneous(n, c / n as f64, c).is_err());
        Ok(())
    });
    if let Err(e) = diverges {
        failures.push(format!("divergence: {e}"));
    }

    let p_sum = runner().run(&(0.0f64..=1.0, 1u32..100), |(beta, n)| {
        let (ps, pi, pc) = mac::slot_probabilities(beta, n).unwrap();
        prop_assert!((ps + pi + pc - 1.0).abs() < 1e-12);
        prop_assert!(ps >= 0.0 && pi >= 0.0 && pc >= -1e-15);
        Ok(())
    });
    if let Err(e) = p_sum {
        failures.push(format!("p_s + p_i + p_c: {e}"));
    }

    let mut sim_runner = TestRunner::new(Config { cases: 12, failure_persistence: None, ..Config::default() });
    let conservation = sim_runner.run(&(prop::collection::vec(0.0f64..25.0, 1..8), any::<u64>()), |(rates, seed)| {
        let mut cfg = SimConfig::homogeneous(rates.len(), 0.0, MacPhyParams::default(), 60.0, seed);
        cfg.rates = rates;
        let m = sim::run_simulation(&cfg).unwrap();
        for node in &m.per_node {
            prop_assert_eq!(node.generated, node.delivered + node.residual);
        }
        Ok(())
    });
    if let Err(e) = conservation {
        failures.push(format!("conservation: {e}"));
    }

    // a heterogeneous bound never exceeds capacity
    let report = DelayReport::analyze(&TrafficSpec::new(vec![2.0, 4.0, 8.0]).unwrap(), c).unwrap();
    if report.m_avg_bound.is_nan() || report.m_avg_bound > c {
        failures.push("service rate above capacity".into());
    }

    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "monotone in lambda and n, divergence, p-sum, conservation".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mut jensen = JensenTally::default();
    let results: Vec<(&str, Verdict)> = vec![
        ("1 fixed-point solver vs grid oracle", fixed_point_solver()),
        ("2a saturation capacity S(10) = 72.8 +/- 5%", saturation_capacity_value()),
        ("2b saturation plateau spread < 10%", saturation_plateau()),
        ("3 single-node M/M/1 reduction", single_node_reduction()),
        ("4 light-load limit 1/C", light_load_limit()),
        ("5 non-homogeneous solver", nonhomogeneous_solver()),
        ("6 saturated simulation vs S(n)", saturated_cross_validation(&mut jensen)),
        ("7 published table reproduction", table_reproduction(&mut jensen)),
        ("8 occupancy Jensen bound on every trace", jensen_everywhere(&mut jensen)),
        ("9 byte-identical reruns", determinism()),
        ("10 property suite", property_suite()),
    ];

    println!();
    let mut failed = 0;
    for (name, v) in &results {
        println!("{} criterion {name}: {}", if v.ok { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.ok);
    }
    println!("\nacceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
