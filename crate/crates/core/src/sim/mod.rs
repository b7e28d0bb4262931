//! Slot-synchronous discrete-event simulator of `n` DCF nodes sending
//! Poisson traffic to a common root.
//!
//! Time advances in contention rounds. Every node with a packet holds a
//! backoff counter; the medium stays idle for as many slots as the smallest
//! counter, then every node whose counter reached zero transmits. A lone
//! transmitter succeeds and its head-of-line packet departs at the end of
//! the success slot; two or more collide, double their window (up to
//! `2^m W`) and redraw. Other contenders freeze during the busy slot.
//!
//! The simulator integrates, over the measurement window, how long exactly
//! `i` queues were non-empty. That histogram is the empirical stationary
//! distribution of the number of busy queues.

mod arrivals;
mod trace;

use std::collections::VecDeque;
use std::io::Write;

use rand_chacha::ChaCha8Rng;

use crate::delay::TrafficSpec;
use crate::error::{Error, Result};
use crate::mac::{slot_durations, SlotDurations};
use crate::params::MacPhyParams;

pub use arrivals::{poisson_arrival_stream, rng_stream, PoissonSource, RNG_ALGORITHM};
pub use trace::{SlotEvent, TraceRecord};

use arrivals::draw_backoff;

pub const DEFAULT_QUEUE_CAP: usize = 1_000_000;

/// Warmup floor, in idle slots.
const MIN_WARMUP_SLOTS: f64 = 50_000.0;

/// What a node does when a packet reaches its empty queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IdleArrival {
    /// Draw a fresh stage-0 backoff and join the next contention round.
    #[default]
    Backoff,
    /// Transmit at the next slot boundary if the node finished its
    /// post-transmission backoff while the medium was idle; otherwise
    /// behave like [`IdleArrival::Backoff`].
    Immediate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_nodes: usize,
    /// Per-node arrival rate in packets/s. Zero means the node never
    /// generates traffic.
    pub rates: Vec<f64>,
    pub mac_phy: MacPhyParams,
    pub warmup_time: f64,
    pub measure_time: f64,
    pub seed: u64,
    /// Every queue always holds a packet.
    pub saturated: bool,
    pub idle_arrival: IdleArrival,
    pub queue_cap: usize,
}

impl SimConfig {
    pub fn homogeneous(n_nodes: usize, lambda: f64, mac_phy: MacPhyParams, measure_time: f64, seed: u64) -> Self {
        Self::with_rates(vec![lambda; n_nodes], mac_phy, measure_time, seed)
    }

    pub fn from_traffic(traffic: &TrafficSpec, mac_phy: MacPhyParams, measure_time: f64, seed: u64) -> Self {
        Self::with_rates(traffic.rates().to_vec(), mac_phy, measure_time, seed)
    }

    pub fn saturated(n_nodes: usize, mac_phy: MacPhyParams, measure_time: f64, seed: u64) -> Self {
        SimConfig {
            saturated: true,
            ..Self::with_rates(vec![0.0; n_nodes], mac_phy, measure_time, seed)
        }
    }

    fn with_rates(rates: Vec<f64>, mac_phy: MacPhyParams, measure_time: f64, seed: u64) -> Self {
        SimConfig {
            n_nodes: rates.len(),
            rates,
            warmup_time: default_warmup(measure_time, &mac_phy),
            mac_phy,
            measure_time,
            seed,
            saturated: false,
            idle_arrival: IdleArrival::default(),
            queue_cap: DEFAULT_QUEUE_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mac_phy.validate()?;
        if self.n_nodes == 0 {
            return Err(Error::invalid("n_nodes", "need at least one node"));
        }
        if self.rates.len() != self.n_nodes {
            return Err(Error::invalid(
                "rates",
                format!("{} rates for {} nodes", self.rates.len(), self.n_nodes),
            ));
        }
        if let Some(&r) = self.rates.iter().find(|&&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid("rates", format!("rates must be finite and >= 0, got {r}")));
        }
        if !(self.measure_time > 0.0) || !self.measure_time.is_finite() {
            return Err(Error::invalid("measure_time", format!("must be > 0, got {}", self.measure_time)));
        }
        if !(self.warmup_time >= 0.0) || !self.warmup_time.is_finite() {
            return Err(Error::invalid("warmup_time", format!("must be >= 0, got {}", self.warmup_time)));
        }
        if self.queue_cap == 0 {
            return Err(Error::invalid("queue_cap", "must be > 0"));
        }
        Ok(())
    }
}

/// Larger of 10% of the measurement window and 50,000 idle slots.
pub fn default_warmup(measure_time: f64, params: &MacPhyParams) -> f64 {
    (0.1 * measure_time).max(MIN_WARMUP_SLOTS * params.slot_time)
}

/// Time-weighted histogram of the number of non-empty queues.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyTrace {
    /// Seconds spent with exactly `i` non-empty queues, `i = 0..=n`.
    pub time_at: Vec<f64>,
}

impl OccupancyTrace {
    pub fn total_time(&self) -> f64 {
        self.time_at.iter().sum()
    }

    /// Empirical stationary distribution.
    pub fn pi_hat(&self) -> Vec<f64> {
        let total = self.total_time();
        self.time_at.iter().map(|t| t / total).collect()
    }

    /// Fraction of time with at least one non-empty queue.
    pub fn busy_fraction(&self) -> f64 {
        let total = self.total_time();
        self.time_at[1..].iter().sum::<f64>() / total
    }

    /// Time average of `N_s` over the whole window.
    pub fn mean_occupancy(&self) -> f64 {
        let total = self.total_time();
        self.time_at.iter().enumerate().map(|(i, t)| i as f64 * t).sum::<f64>() / total
    }

    /// Time average of `1/N_s` over busy time only.
    pub fn mean_inverse_busy(&self) -> f64 {
        let busy: f64 = self.time_at[1..].iter().sum();
        self.time_at
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, t)| t / i as f64)
            .sum::<f64>()
            / busy
    }
}

/// One delivered packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub node: u32,
    /// Arrival instant (saturated mode: the instant it became head of line).
    pub arrival: f64,
    pub departure: f64,
}

impl PacketRecord {
    pub fn delay(&self) -> f64 {
        self.departure - self.arrival
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeCounters {
    /// Packets that arrived inside the measurement window.
    pub generated: u64,
    /// Of those, packets that departed before the window closed.
    pub delivered: u64,
    /// Of those, packets still queued when the window closed.
    pub residual: u64,
    /// Successful transmissions inside the window, whatever the arrival time.
    pub successes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SlotCounts {
    pub idle: u64,
    pub success: u64,
    pub collision: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    /// Packets that arrived in the measurement window and departed within it,
    /// in departure order.
    pub packets: Vec<PacketRecord>,
    pub sim_throughput: f64,
    pub occupancy: OccupancyTrace,
    pub per_node: Vec<NodeCounters>,
    /// Slot outcomes over the whole run, warmup included.
    pub slots: SlotCounts,
    /// Time with no contender at all (medium silent between slot grids).
    pub silent_time: f64,
    /// Virtual clock when the run stopped.
    pub elapsed: f64,
    pub durations: SlotDurations,
}

impl SimMetrics {
    pub fn delivered(&self) -> usize {
        self.packets.len()
    }

    pub fn delays(&self) -> impl Iterator<Item = f64> + '_ {
        self.packets.iter().map(PacketRecord::delay)
    }

    pub fn mean_delay(&self) -> Option<f64> {
        (!self.packets.is_empty()).then(|| self.delays().sum::<f64>() / self.packets.len() as f64)
    }

    /// Mean delay of packets from `node`.
    pub fn node_mean_delay(&self, node: usize) -> Option<f64> {
        let (sum, count) = self
            .packets
            .iter()
            .filter(|p| p.node as usize == node)
            .fold((0.0, 0usize), |(s, c), p| (s + p.delay(), c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    pub fn busy_fraction(&self) -> f64 {
        self.occupancy.busy_fraction()
    }

    pub fn pi_hat(&self) -> Vec<f64> {
        self.occupancy.pi_hat()
    }

    /// Time average of `C/N_s` over busy time.
    pub fn empirical_m_avg(&self, c: f64) -> f64 {
        c * self.occupancy.mean_inverse_busy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupancyBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Sample-path form of the service-rate lower bound: the busy-time average
/// of `C/N_s` is at least `C * busy_fraction / mean(N_s)`.
pub fn occupancy_bound_check(metrics: &SimMetrics, c: f64) -> Result<OccupancyBound> {
    occupancy_bound(&metrics.occupancy, c)
}

pub fn occupancy_bound(trace: &OccupancyTrace, c: f64) -> Result<OccupancyBound> {
    let busy_time: f64 = trace.time_at.iter().skip(1).sum();
    if !(busy_time > 0.0) {
        return Err(Error::DegenerateTrace);
    }
    let lhs = c * trace.mean_inverse_busy();
    let rhs = c * trace.busy_fraction() / trace.mean_occupancy();
    // equality case (constant N_s) may differ in the last bits
    let holds = lhs >= rhs * (1.0 - 8.0 * f64::EPSILON);
    Ok(OccupancyBound { lhs, rhs, holds })
}

#[derive(Debug)]
struct Node {
    queue: VecDeque<f64>,
    counter: u64,
    stage: u32,
    contending: bool,
    /// Immediate mode: post-transmission backoff still running on an empty
    /// queue.
    post_backoff: bool,
    source: PoissonSource,
    backoff_rng: ChaCha8Rng,
}

struct Engine<'a, 't> {
    cfg: &'a SimConfig,
    d: SlotDurations,
    w_min: u64,
    m: u32,
    start: f64,
    end: f64,
    t: f64,
    nodes: Vec<Node>,
    nonempty: usize,
    occ_last: f64,
    time_at: Vec<f64>,
    packets: Vec<PacketRecord>,
    per_node: Vec<NodeCounters>,
    slots: SlotCounts,
    silent_time: f64,
    measured_successes: u64,
    trace: Option<&'t mut dyn Write>,
}

/// Runs one replication.
pub fn run_simulation(config: &SimConfig) -> Result<SimMetrics> {
    run_simulation_traced(config, None)
}

/// Runs one replication, writing one [`TraceRecord`] per slot to `trace`.
pub fn run_simulation_traced(config: &SimConfig, trace: Option<&mut dyn Write>) -> Result<SimMetrics> {
    config.validate()?;
    Engine::new(config, trace)?.run()
}

impl<'a, 't> Engine<'a, 't> {
    fn new(cfg: &'a SimConfig, trace: Option<&'t mut dyn Write>) -> Result<Self> {
        let d = slot_durations(&cfg.mac_phy)?;
        let w_min = u64::from(cfg.mac_phy.w_min);
        let nodes = (0..cfg.n_nodes)
            .map(|i| {
                let id = i as u64;
                let rate = if cfg.saturated { 0.0 } else { cfg.rates[i] };
                Node {
                    queue: VecDeque::new(),
                    counter: 0,
                    stage: 0,
                    contending: false,
                    post_backoff: false,
                    source: PoissonSource::new(rate, rng_stream(cfg.seed, 2 * id)),
                    backoff_rng: rng_stream(cfg.seed, 2 * id + 1),
                }
            })
            .collect();
        let start = cfg.warmup_time;
        Ok(Engine {
            cfg,
            d,
            w_min,
            m: cfg.mac_phy.m_stages,
            start,
            end: start + cfg.measure_time,
            t: 0.0,
            nodes,
            nonempty: 0,
            occ_last: 0.0,
            time_at: vec![0.0; cfg.n_nodes + 1],
            packets: Vec::new(),
            per_node: vec![NodeCounters::default(); cfg.n_nodes],
            slots: SlotCounts::default(),
            silent_time: 0.0,
            measured_successes: 0,
            trace,
        })
    }

    fn run(mut self) -> Result<SimMetrics> {
        if self.cfg.saturated {
            self.init_saturated();
        }
        let slot_eps = self.d.t_idle * 1e-9;
        while self.t < self.end {
            self.admit_until(self.t + slot_eps)?;

            let min_counter = self.nodes.iter().filter(|n| n.contending).map(|n| n.counter).min();
            let Some(min_counter) = min_counter else {
                // nobody has traffic: jump to the next arrival
                let next = self.next_arrival(|_| true);
                if next >= self.end {
                    break;
                }
                self.advance_post_backoff_silent(next);
                self.silent_time += next - self.t;
                self.t = next;
                continue;
            };

            if min_counter > 0 {
                // idle slots until the first counter expires or a silent
                // node gets a packet, whichever comes first
                let join = self.next_arrival(|n| !n.contending);
                let join_slots = if join.is_finite() {
                    ((join - self.t) / self.d.t_idle).ceil().max(1.0)
                } else {
                    f64::INFINITY
                };
                let step = if (min_counter as f64) <= join_slots { min_counter } else { join_slots as u64 };
                self.idle_slots(step)?;
                continue;
            }

            let transmitters: Vec<usize> = self
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.contending && n.counter == 0)
                .map(|(i, _)| i)
                .collect();
            let busy = if transmitters.len() == 1 { self.d.t_success } else { self.d.t_collision };
            if self.t + busy > self.end {
                break;
            }
            let t_end = self.t + busy;
            // arrivals during the busy slot queue up but cannot contend yet
            self.admit_until_deferred(t_end)?;
            if transmitters.len() == 1 {
                self.success(transmitters[0], t_end)?;
            } else {
                self.collision(&transmitters, t_end)?;
            }
        }

        // whatever arrived before the window closed stays queued
        self.admit_until_deferred(self.end)?;
        self.flush_occupancy(self.end);
        for (node, counters) in self.nodes.iter().zip(self.per_node.iter_mut()) {
            counters.residual = node.queue.iter().filter(|&&a| a >= self.start && a < self.end).count() as u64;
        }
        Ok(SimMetrics {
            packets: self.packets,
            sim_throughput: self.measured_successes as f64 / self.cfg.measure_time,
            occupancy: OccupancyTrace { time_at: self.time_at },
            per_node: self.per_node,
            slots: self.slots,
            silent_time: self.silent_time,
            elapsed: self.t,
            durations: self.d,
        })
    }

    fn init_saturated(&mut self) {
        let counted = self.in_window(0.0);
        for (node, counters) in self.nodes.iter_mut().zip(self.per_node.iter_mut()) {
            node.queue.push_back(0.0);
            counters.generated += u64::from(counted);
            node.contending = true;
            node.counter = draw_backoff(&mut node.backoff_rng, self.w_min);
        }
        self.nonempty = self.nodes.len();
    }

    fn window(&self, stage: u32) -> u64 {
        self.w_min << stage
    }

    fn next_arrival(&self, filter: impl Fn(&Node) -> bool) -> f64 {
        self.nodes
            .iter()
            .filter(|n| filter(n))
            .map(|n| n.source.peek())
            .fold(f64::INFINITY, f64::min)
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    /// Integrates the occupancy histogram up to `t`, clipped to the
    /// measurement window.
    fn flush_occupancy(&mut self, t: f64) {
        let a = self.occ_last.clamp(self.start, self.end);
        let b = t.clamp(self.start, self.end);
        if b > a {
            self.time_at[self.nonempty] += b - a;
        }
        if t > self.occ_last {
            self.occ_last = t;
        }
    }

    /// Admits every arrival up to `limit` in time order. Nodes that were
    /// silent start contending immediately.
    fn admit_until(&mut self, limit: f64) -> Result<()> {
        self.admit(limit, true)
    }

    /// Admits arrivals up to `limit` while the medium is busy; silent nodes
    /// that receive a packet start contending with a fresh backoff.
    fn admit_until_deferred(&mut self, limit: f64) -> Result<()> {
        self.admit(limit, false)
    }

    fn admit(&mut self, limit: f64, medium_idle: bool) -> Result<()> {
        if self.cfg.saturated {
            return Ok(());
        }
        loop {
            let (idx, at) = match self
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| (i, n.source.peek()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
            {
                Some((i, at)) if at <= limit => (i, at),
                _ => return Ok(()),
            };
            if at >= self.end {
                return Ok(());
            }
            self.flush_occupancy(at);
            let arrival = self.nodes[idx].source.pop();
            if self.in_window(arrival) {
                self.per_node[idx].generated += 1;
            }
            let cap = self.cfg.queue_cap;
            let policy = self.cfg.idle_arrival;
            let w0 = self.w_min;
            let node = &mut self.nodes[idx];
            if node.queue.len() >= cap {
                return Err(Error::QueueOverflow { node: idx, cap });
            }
            node.queue.push_back(arrival);
            if node.queue.len() == 1 {
                self.nonempty += 1;
            }
            if !node.contending {
                node.contending = true;
                node.stage = 0;
                let ready = policy == IdleArrival::Immediate && !node.post_backoff && medium_idle;
                if policy == IdleArrival::Immediate && node.post_backoff {
                    // keep the residual post-transmission backoff
                } else if ready {
                    node.counter = 0;
                } else {
                    node.counter = draw_backoff(&mut node.backoff_rng, w0);
                }
                node.post_backoff = false;
            }
        }
    }

    /// Runs post-transmission backoffs down while the medium is silent.
    fn advance_post_backoff_silent(&mut self, until: f64) {
        let slots = ((until - self.t) / self.d.t_idle).floor().max(0.0) as u64;
        for node in self.nodes.iter_mut().filter(|n| n.post_backoff) {
            node.counter = node.counter.saturating_sub(slots);
            if node.counter == 0 {
                node.post_backoff = false;
            }
        }
    }

    fn idle_slots(&mut self, step: u64) -> Result<()> {
        for node in self.nodes.iter_mut().filter(|n| n.contending || n.post_backoff) {
            node.counter = node.counter.saturating_sub(step);
            if node.post_backoff && node.counter == 0 {
                node.post_backoff = false;
            }
        }
        if self.trace.is_some() {
            for k in 0..step {
                let at = self.t + k as f64 * self.d.t_idle;
                self.emit(at, SlotEvent::Idle, None)?;
            }
        }
        self.slots.idle += step;
        self.t += step as f64 * self.d.t_idle;
        Ok(())
    }

    fn success(&mut self, winner: usize, t_end: f64) -> Result<()> {
        self.emit(self.t, SlotEvent::Success, Some(winner))?;
        self.flush_occupancy(t_end);
        self.slots.success += 1;
        if self.in_window(t_end) || t_end == self.end {
            self.measured_successes += 1;
            self.per_node[winner].successes += 1;
        }
        let saturated = self.cfg.saturated;
        let policy = self.cfg.idle_arrival;
        let w0 = self.w_min;
        let node = &mut self.nodes[winner];
        let arrival = node.queue.pop_front().expect("transmitter has a packet");
        node.stage = 0;
        node.counter = draw_backoff(&mut node.backoff_rng, w0);
        if saturated {
            // the next packet is already waiting
            node.queue.push_back(t_end);
            if t_end >= self.start && t_end < self.end {
                self.per_node[winner].generated += 1;
            }
        } else if node.queue.is_empty() {
            node.contending = false;
            node.post_backoff = policy == IdleArrival::Immediate && node.counter > 0;
            self.nonempty -= 1;
        }
        if arrival >= self.start && arrival < self.end {
            self.packets.push(PacketRecord {
                node: winner as u32,
                arrival,
                departure: t_end,
            });
            self.per_node[winner].delivered += 1;
        }
        self.t = t_end;
        Ok(())
    }

    fn collision(&mut self, colliders: &[usize], t_end: f64) -> Result<()> {
        self.emit(self.t, SlotEvent::Collision, None)?;
        self.slots.collision += 1;
        for &i in colliders {
            let stage = (self.nodes[i].stage + 1).min(self.m);
            let window = self.window(stage);
            let node = &mut self.nodes[i];
            node.stage = stage;
            node.counter = draw_backoff(&mut node.backoff_rng, window);
        }
        self.t = t_end;
        Ok(())
    }

    fn emit(&mut self, at: f64, event: SlotEvent, winner: Option<usize>) -> Result<()> {
        if let Some(w) = self.trace.as_deref_mut() {
            let rec = TraceRecord {
                time_us: at * 1e6,
                event,
                winner: winner.map(|x| x as u32),
                n_nonempty: self.nonempty as u32,
            };
            writeln!(w, "{rec}")?;
        }
        Ok(())
    }
}
