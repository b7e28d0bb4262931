//! Replicated simulation experiments and analytic-vs-simulated comparisons.
//!
//! Every experiment is a pure function of its [`ExperimentSpec`]: replication
//! seeds derive from `(seed, replication index)`, replications are gathered in
//! index order and rows are sorted by their grid key, so the CSV output is
//! byte-identical across reruns.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::delay::{self, DelayReport, TrafficSpec};
use crate::error::{Error, Result};
use crate::mac;
use crate::params::MacPhyParams;
use crate::sim::{self, IdleArrival, OccupancyTrace, SimConfig, RNG_ALGORITHM};
use crate::stats::{mean_ci, ConfidenceInterval};

/// `(n, lambda, printed n*lambda/C)` rows of the published light-load table.
pub const REFERENCE_TABLE: [(usize, f64, f64); 8] = [
    (3, 17.0, 0.70),
    (4, 13.0, 0.71),
    (5, 13.0, 0.69),
    (6, 6.0, 0.49),
    (7, 4.0, 0.39),
    (8, 3.0, 0.33),
    (9, 3.0, 0.37),
    (10, 3.0, 0.41),
];

/// Capacity the published table was computed with, packets/s.
pub const REFERENCE_CAPACITY: f64 = 72.8;

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    ThroughputVsN { ns: Vec<u32> },
    DelayVsLambda { n: usize, lambdas: Vec<f64> },
    DelayVsN { lambda: f64, ns: Vec<usize> },
    TableCheck,
    NonHomogeneous { rates: Vec<f64> },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::ThroughputVsN { .. } => "throughput_vs_n",
            Experiment::DelayVsLambda { .. } => "delay_vs_lambda",
            Experiment::DelayVsN { .. } => "delay_vs_n",
            Experiment::TableCheck => "table_check",
            Experiment::NonHomogeneous { .. } => "nonhomogeneous",
        }
    }
}

/// Knobs shared by every experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub params: MacPhyParams,
    /// Virtual seconds measured per replication.
    pub measure_time: f64,
    /// `None` uses [`sim::default_warmup`].
    pub warmup_time: Option<f64>,
    pub seed: u64,
    pub replications: usize,
    pub confidence: f64,
    /// Contender count whose saturation throughput is the capacity `C`.
    pub n_ref: u32,
    /// Relative error a comparison row must stay within to pass.
    pub error_threshold: f64,
    /// The tighter bound claimed against the reference simulator; reported
    /// alongside.
    pub reference_threshold: f64,
    /// Rows at or above this utilization are flagged as heavy load.
    pub heavy_load: f64,
    /// Largest tolerated gap between computed and printed table utilization.
    pub utilization_tolerance: f64,
    pub idle_arrival: IdleArrival,
    pub queue_cap: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            params: MacPhyParams::dot11b_1mbps(),
            measure_time: 2000.0,
            warmup_time: None,
            seed: 1,
            replications: 30,
            confidence: 0.95,
            n_ref: mac::DEFAULT_N_REF,
            error_threshold: 0.15,
            reference_threshold: 0.10,
            heavy_load: 0.8,
            utilization_tolerance: 0.01,
            idle_arrival: IdleArrival::Backoff,
            queue_cap: sim::DEFAULT_QUEUE_CAP,
        }
    }
}

impl Settings {
    pub fn capacity(&self) -> Result<f64> {
        mac::saturation_capacity(&self.params, self.n_ref)
    }

    fn sim_config(&self, rates: Vec<f64>, saturated: bool) -> SimConfig {
        let mut cfg = if saturated {
            SimConfig::saturated(rates.len(), self.params, self.measure_time, self.seed)
        } else {
            SimConfig::homogeneous(rates.len(), 0.0, self.params, self.measure_time, self.seed)
        };
        if !saturated {
            cfg.rates = rates;
        }
        if let Some(w) = self.warmup_time {
            cfg.warmup_time = w;
        }
        cfg.idle_arrival = self.idle_arrival;
        cfg.queue_cap = self.queue_cap;
        cfg
    }

    pub fn warmup(&self) -> f64 {
        self.warmup_time
            .unwrap_or_else(|| sim::default_warmup(self.measure_time, &self.params))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub settings: Settings,
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, settings: Settings) -> Self {
        ExperimentSpec { experiment, settings }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.settings;
        s.params.validate()?;
        if s.replications < 2 {
            return Err(Error::invalid("replications", format!("need at least 2, got {}", s.replications)));
        }
        if !(s.confidence > 0.0 && s.confidence < 1.0) {
            return Err(Error::invalid("confidence", format!("must be in (0, 1), got {}", s.confidence)));
        }
        if !(s.measure_time > 0.0) {
            return Err(Error::invalid("measure_time", "must be > 0"));
        }
        let empty = match &self.experiment {
            Experiment::ThroughputVsN { ns } => ns.is_empty() || ns.contains(&0),
            Experiment::DelayVsLambda { n, lambdas } => *n == 0 || lambdas.is_empty(),
            Experiment::DelayVsN { ns, .. } => ns.is_empty() || ns.contains(&0),
            Experiment::TableCheck => false,
            Experiment::NonHomogeneous { rates } => rates.is_empty(),
        };
        if empty {
            return Err(Error::invalid("grid", "sweep grid is empty or contains zero nodes"));
        }
        Ok(())
    }
}

/// Seed of replication `index` of a family rooted at `base`.
pub fn replication_seed(base: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over a combined key
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What one replication contributes to the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub mean_delay: f64,
    pub node_mean_delay: Vec<Option<f64>>,
    pub throughput: f64,
    pub delivered: usize,
    pub occupancy: OccupancyTrace,
    pub conserved: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub mean_delay: ConfidenceInterval,
    pub node_delay: Vec<Option<ConfidenceInterval>>,
    pub throughput: ConfidenceInterval,
    pub runs: Vec<RunSummary>,
}

fn summarize(seed: u64, m: &sim::SimMetrics) -> Result<RunSummary> {
    let mean_delay = m
        .mean_delay()
        .ok_or_else(|| Error::invalid("rates", format!("replication with seed {seed} delivered no packets")))?;
    Ok(RunSummary {
        seed,
        mean_delay,
        node_mean_delay: (0..m.per_node.len()).map(|i| m.node_mean_delay(i)).collect(),
        throughput: m.sim_throughput,
        delivered: m.delivered(),
        occupancy: m.occupancy.clone(),
        conserved: m.per_node.iter().all(|c| c.generated == c.delivered + c.residual),
    })
}

/// Runs `runs` independent replications of `base` and aggregates the per-run
/// mean delays into a Student-t interval.
pub fn replicate(base: &SimConfig, runs: usize, confidence: f64) -> Result<Replication> {
    if runs < 2 {
        return Err(Error::invalid("replications", format!("need at least 2, got {runs}")));
    }
    let results: Vec<Result<RunSummary>> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = replication_seed(base.seed, i);
            let cfg = SimConfig { seed, ..base.clone() };
            sim::run_simulation(&cfg).and_then(|m| summarize(seed, &m))
        })
        .collect();
    if results.iter().all(Result::is_err) {
        let first = results.into_iter().next().and_then(Result::err).expect("runs >= 2");
        return Err(Error::AllRunsFailed(Box::new(first)));
    }
    let runs: Vec<RunSummary> = results.into_iter().collect::<Result<_>>()?;
    aggregate(runs, confidence)
}

fn aggregate(runs: Vec<RunSummary>, confidence: f64) -> Result<Replication> {
    let delays: Vec<f64> = runs.iter().map(|r| r.mean_delay).collect();
    let tput: Vec<f64> = runs.iter().map(|r| r.throughput).collect();
    let nodes = runs[0].node_mean_delay.len();
    let node_delay = (0..nodes)
        .map(|i| {
            let xs: Option<Vec<f64>> = runs.iter().map(|r| r.node_mean_delay[i]).collect();
            xs.map(|xs| mean_ci(&xs, confidence)).transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Replication {
        mean_delay: mean_ci(&delays, confidence)?,
        node_delay,
        throughput: mean_ci(&tput, confidence)?,
        runs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JensenTally {
    pub checked: usize,
    pub violations: usize,
}

impl JensenTally {
    fn record(&mut self, runs: &[RunSummary], c: f64) {
        for r in runs {
            // traces with no busy time carry no information
            if let Ok(b) = sim::occupancy_bound(&r.occupancy, c) {
                self.checked += 1;
                if !b.holds {
                    self.violations += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowNote {
    /// Analytic formula undefined: utilization >= 1.
    Unstable,
    /// Simulated queues outgrew the cap.
    SimOverflow,
    HeavyLoad,
    /// Computed utilization disagrees with the printed table value.
    UtilizationMismatch,
    /// Rate recomputed from the printed utilization instead of the printed rate.
    RatioDerived,
}

impl RowNote {
    pub fn as_str(self) -> &'static str {
        match self {
            RowNote::Unstable => "unstable",
            RowNote::SimOverflow => "sim-overflow",
            RowNote::HeavyLoad => "heavy-load",
            RowNote::UtilizationMismatch => "utilization-mismatch",
            RowNote::RatioDerived => "ratio-derived",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub n: usize,
    /// Set for per-node rows of a non-homogeneous run.
    pub node: Option<usize>,
    pub lambda: f64,
    /// Total offered load over `C`.
    pub utilization: f64,
    pub analytic_delay: Option<f64>,
    pub sim_mean_delay: Option<f64>,
    pub ci_halfwidth: Option<f64>,
    /// `|analytic - sim| / sim`.
    pub rel_error: Option<f64>,
    pub printed_utilization: Option<f64>,
    pub within_reference: Option<bool>,
    pub pass: Option<bool>,
    pub notes: Vec<RowNote>,
}

impl ComparisonRow {
    pub fn has_note(&self, note: RowNote) -> bool {
        self.notes.contains(&note)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub capacity_c: f64,
    pub rows: Vec<ComparisonRow>,
    pub jensen: JensenTally,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputRow {
    pub n: u32,
    pub analytic: f64,
    pub simulated: ConfidenceInterval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub capacity_c: f64,
    pub rows: Vec<ThroughputRow>,
    /// `(max - min) / max` of the analytic curve over `n >= 5`.
    pub plateau_spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Comparison(ComparisonReport),
    Throughput(ThroughputReport),
}

fn relative_error(analytic: Option<f64>, sim: Option<f64>) -> Option<f64> {
    Some((analytic? - sim?).abs() / sim?)
}

/// One homogeneous operating point: analytic prediction plus replicated
/// simulation.
fn homogeneous_row(s: &Settings, c: f64, n: usize, lambda: f64, jensen: &mut JensenTally) -> Result<ComparisonRow> {
    let utilization = n as f64 * lambda / c;
    let mut notes = Vec::new();
    let analytic = match delay::mean_delay_homogeneous(n as u32, lambda, c) {
        Ok(d) => Some(d),
        Err(Error::UnstableLoad { .. }) => {
            notes.push(RowNote::Unstable);
            None
        }
        Err(e) => return Err(e),
    };
    if utilization >= s.heavy_load {
        notes.push(RowNote::HeavyLoad);
    }
    let cfg = s.sim_config(vec![lambda; n], false);
    let (sim_mean, half) = match replicate(&cfg, s.replications, s.confidence) {
        Ok(rep) => {
            jensen.record(&rep.runs, c);
            (Some(rep.mean_delay.mean), Some(rep.mean_delay.half_width))
        }
        Err(Error::QueueOverflow { .. }) => {
            notes.push(RowNote::SimOverflow);
            (None, None)
        }
        Err(Error::AllRunsFailed(e)) if matches!(*e, Error::QueueOverflow { .. }) => {
            notes.push(RowNote::SimOverflow);
            (None, None)
        }
        Err(e) => return Err(e),
    };
    let rel_error = relative_error(analytic, sim_mean);
    Ok(ComparisonRow {
        n,
        node: None,
        lambda,
        utilization,
        analytic_delay: analytic,
        sim_mean_delay: sim_mean,
        ci_halfwidth: half,
        rel_error,
        printed_utilization: None,
        within_reference: rel_error.map(|e| e <= s.reference_threshold),
        pass: rel_error.map(|e| e <= s.error_threshold),
        notes,
    })
}

/// Mean delay against `lambda` at fixed `n`.
pub fn sweep_delay_vs_lambda(s: &Settings, n: usize, lambdas: &[f64]) -> Result<ComparisonReport> {
    let c = s.capacity()?;
    let mut jensen = JensenTally::default();
    let mut grid = lambdas.to_vec();
    grid.sort_by(f64::total_cmp);
    let rows = grid
        .iter()
        .map(|&l| homogeneous_row(s, c, n, l, &mut jensen))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { capacity_c: c, rows, jensen })
}

/// Mean delay against `n` at fixed `lambda`.
pub fn sweep_delay_vs_n(s: &Settings, lambda: f64, ns: &[usize]) -> Result<ComparisonReport> {
    let c = s.capacity()?;
    let mut jensen = JensenTally::default();
    let mut grid = ns.to_vec();
    grid.sort_unstable();
    let rows = grid
        .iter()
        .map(|&n| homogeneous_row(s, c, n, lambda, &mut jensen))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { capacity_c: c, rows, jensen })
}

/// Re-runs the published `(n, lambda)` table. A row whose computed
/// utilization disagrees with the printed one is kept and flagged, and a
/// second row with the rate implied by the printed utilization follows it.
pub fn table_check(s: &Settings) -> Result<ComparisonReport> {
    let c = s.capacity()?;
    let mut jensen = JensenTally::default();
    let mut rows = Vec::new();
    for (n, lambda, printed) in REFERENCE_TABLE {
        let mut row = homogeneous_row(s, c, n, lambda, &mut jensen)?;
        row.printed_utilization = Some(printed);
        let mismatch = (row.utilization - printed).abs() > s.utilization_tolerance;
        if mismatch {
            row.notes.push(RowNote::UtilizationMismatch);
        }
        rows.push(row);
        if mismatch {
            let implied = printed * c / n as f64;
            let mut alt = homogeneous_row(s, c, n, implied, &mut jensen)?;
            alt.printed_utilization = Some(printed);
            alt.notes.push(RowNote::RatioDerived);
            rows.push(alt);
        }
    }
    Ok(ComparisonReport { capacity_c: c, rows, jensen })
}

/// Analytic `S(n)` beside simulated saturated throughput.
pub fn throughput_curve(s: &Settings, ns: &[u32]) -> Result<ThroughputReport> {
    let c = s.capacity()?;
    let mut grid = ns.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let rows = grid
        .iter()
        .map(|&n| {
            let analytic = mac::saturation_throughput(n, &s.params)?;
            let cfg = s.sim_config(vec![0.0; n as usize], true);
            let rep = replicate(&cfg, s.replications, s.confidence)?;
            Ok(ThroughputRow { n, analytic, simulated: rep.throughput })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThroughputReport {
        capacity_c: c,
        plateau_spread: plateau_spread(rows.iter().filter(|r| r.n >= 5).map(|r| r.analytic)),
        rows,
    })
}

/// `(max - min) / max`, or `None` for an empty sequence.
pub fn plateau_spread(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (hi >= lo).then(|| (hi - lo) / hi)
}

/// Per-node analytic delay bounds against per-node simulated sojourns.
pub fn nonhomogeneous_check(s: &Settings, rates: &[f64]) -> Result<ComparisonReport> {
    let c = s.capacity()?;
    let traffic = TrafficSpec::new(rates.to_vec())?;
    let report = DelayReport::analyze(&traffic, c)?;
    let cfg = s.sim_config(rates.to_vec(), false);
    let rep = replicate(&cfg, s.replications, s.confidence)?;
    let mut jensen = JensenTally::default();
    jensen.record(&rep.runs, c);
    let heavy = report.utilization >= s.heavy_load;
    let rows = rates
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let analytic = Some(report.per_node_delay_bound[i]);
            let ci = rep.node_delay[i];
            let rel_error = relative_error(analytic, ci.map(|c| c.mean));
            ComparisonRow {
                n: rates.len(),
                node: Some(i),
                lambda,
                utilization: report.utilization,
                analytic_delay: analytic,
                sim_mean_delay: ci.map(|c| c.mean),
                ci_halfwidth: ci.map(|c| c.half_width),
                rel_error,
                printed_utilization: None,
                within_reference: rel_error.map(|e| e <= s.reference_threshold),
                pass: rel_error.map(|e| e <= s.error_threshold),
                notes: if heavy { vec![RowNote::HeavyLoad] } else { vec![] },
            }
        })
        .collect();
    Ok(ComparisonReport { capacity_c: c, rows, jensen })
}

pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let s = &spec.settings;
    Ok(match &spec.experiment {
        Experiment::ThroughputVsN { ns } => Report::Throughput(throughput_curve(s, ns)?),
        Experiment::DelayVsLambda { n, lambdas } => Report::Comparison(sweep_delay_vs_lambda(s, *n, lambdas)?),
        Experiment::DelayVsN { lambda, ns } => Report::Comparison(sweep_delay_vs_n(s, *lambda, ns)?),
        Experiment::TableCheck => Report::Comparison(table_check(s)?),
        Experiment::NonHomogeneous { rates } => Report::Comparison(nonhomogeneous_check(s, rates)?),
    })
}

/// Nine significant digits.
fn num(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn flag(x: Option<bool>) -> String {
    x.map(|b| b.to_string()).unwrap_or_default()
}

fn metadata(spec: &ExperimentSpec, capacity: f64, extra: &[(&str, String)]) -> String {
    let s = &spec.settings;
    let mut out = String::new();
    let _ = writeln!(out, "# experiment = {}", spec.experiment.name());
    for line in s.params.to_string().lines() {
        let _ = writeln!(out, "# profile.{line}");
    }
    let idle = match s.idle_arrival {
        IdleArrival::Backoff => "backoff",
        IdleArrival::Immediate => "immediate",
    };
    for (k, v) in [
        ("capacity_c", num(capacity)),
        ("n_ref", s.n_ref.to_string()),
        ("seed", s.seed.to_string()),
        ("generator", RNG_ALGORITHM.to_string()),
        ("replications", s.replications.to_string()),
        ("confidence", s.confidence.to_string()),
        ("measure_time_s", s.measure_time.to_string()),
        ("warmup_time_s", s.warmup().to_string()),
        ("idle_arrival", idle.to_string()),
        ("error_threshold", s.error_threshold.to_string()),
        ("reference_threshold", s.reference_threshold.to_string()),
    ] {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for (k, v) in extra {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out
}

fn csv_body(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

pub const COMPARISON_HEADER: [&str; 13] = [
    "n",
    "node",
    "lambda",
    "utilization",
    "analytic_delay",
    "sim_mean_delay",
    "ci_halfwidth",
    "rel_error",
    "printed_utilization",
    "within_reference",
    "pass",
    "notes",
    "",
];

/// Renders a report as a `#`-commented metadata block followed by CSV.
pub fn render_csv(spec: &ExperimentSpec, report: &Report) -> Result<String> {
    match report {
        Report::Comparison(r) => {
            let mut out = metadata(
                spec,
                r.capacity_c,
                &[
                    ("jensen_traces_checked", r.jensen.checked.to_string()),
                    ("jensen_violations", r.jensen.violations.to_string()),
                ],
            );
            let rows = r.rows.iter().map(|row| {
                vec![
                    row.n.to_string(),
                    row.node.map(|i| i.to_string()).unwrap_or_default(),
                    num(row.lambda),
                    num(row.utilization),
                    opt(row.analytic_delay),
                    opt(row.sim_mean_delay),
                    opt(row.ci_halfwidth),
                    opt(row.rel_error),
                    opt(row.printed_utilization),
                    flag(row.within_reference),
                    flag(row.pass),
                    row.notes.iter().map(|n| n.as_str()).collect::<Vec<_>>().join(";"),
                ]
            });
            out.push_str(&csv_body(&COMPARISON_HEADER[..12], rows)?);
            Ok(out)
        }
        Report::Throughput(r) => {
            let spread = r.plateau_spread.map(num).unwrap_or_else(|| "n/a".into());
            let mut out = metadata(spec, r.capacity_c, &[("plateau_spread_n_ge_5", spread)]);
            let rows = r.rows.iter().map(|row| {
                vec![
                    row.n.to_string(),
                    num(row.analytic),
                    num(row.simulated.mean),
                    num(row.simulated.half_width),
                ]
            });
            out.push_str(&csv_body(&["n", "analytic_throughput", "sim_throughput", "sim_ci_halfwidth"], rows)?);
            Ok(out)
        }
    }
}
