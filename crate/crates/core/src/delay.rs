//! Mean packet delay under the decoupled-queue approximation.
//!
//! Each node's queue is treated as an independent M/M/1 queue whose service
//! rate is the shared capacity `C` divided by the number of non-empty queues.
//! Jensen's inequality on `1/N` yields a lower bound on the long-run service
//! rate a busy queue sees; matching the probability that all decoupled queues
//! are empty against the aggregate queue gives, at equality,
//!
//! ```text
//! 1 - sum(lambda_i)/C = prod(1 - lambda_i/M)
//! ```
//!
//! which has the closed form `M = lambda / (1 - (1 - n*lambda/C)^(1/n))` for
//! equal rates. Per-node mean delays are then `1/(M - lambda_i)`. All bounds
//! are evaluated at equality to give point predictions.

use crate::bisect::{self, MAX_ITERATIONS};
use crate::error::{Error, Result};

/// Residual tolerance for the non-homogeneous service-rate root.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Per-node Poisson arrival rates, packets per second.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    rates: Vec<f64>,
}

impl TrafficSpec {
    pub fn homogeneous(n: usize, lambda: f64) -> Result<Self> {
        Self::new(vec![lambda; n])
    }

    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::invalid("rates", "need at least one node"));
        }
        if let Some(&bad) = rates.iter().find(|&&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::invalid("rates", format!("every rate must be finite and > 0, got {bad}")));
        }
        Ok(TrafficSpec { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn n(&self) -> usize {
        self.rates.len()
    }

    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.rates.iter().all(|&r| r == self.rates[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub utilization: f64,
    pub stable: bool,
}

/// `sum(rates)/C`; stable iff strictly below one.
pub fn stability_check(rates: &[f64], c: f64) -> Stability {
    let utilization = rates.iter().sum::<f64>() / c;
    Stability {
        utilization,
        stable: utilization < 1.0,
    }
}

fn require_stable(total: f64, c: f64) -> Result<f64> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::invalid("c", format!("capacity must be finite and > 0, got {c}")));
    }
    let utilization = total / c;
    if utilization >= 1.0 {
        return Err(Error::UnstableLoad { utilization });
    }
    Ok(utilization)
}

fn check_homogeneous(n: u32, lambda: f64, c: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one node"));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("must be finite and > 0, got {lambda}")));
    }
    require_stable(f64::from(n) * lambda, c)
}

/// Service rate seen by a busy queue, `lambda / (1 - (1 - n*lambda/C)^(1/n))`.
pub fn service_rate_bound_homogeneous(n: u32, lambda: f64, c: f64) -> Result<f64> {
    let rho = check_homogeneous(n, lambda, c)?;
    // 1 - (1-rho)^(1/n) without cancellation at light load
    let denom = -(f64::ln_1p(-rho) / f64::from(n)).exp_m1();
    Ok(lambda / denom)
}

/// `1 - lambda/M`: the probability that a decoupled queue is empty.
pub fn empty_probability(lambda: f64, m_avg: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be > 0, got {lambda}")));
    }
    if lambda >= m_avg {
        return Err(Error::UnstableQueue { lambda, service_rate: m_avg });
    }
    Ok(1.0 - lambda / m_avg)
}

/// Closed-form mean delay `(1/lambda) * ((1 - n*lambda/C)^(-1/n) - 1)`.
pub fn mean_delay_homogeneous(n: u32, lambda: f64, c: f64) -> Result<f64> {
    let rho = check_homogeneous(n, lambda, c)?;
    Ok((-f64::ln_1p(-rho) / f64::from(n)).exp_m1() / lambda)
}

/// Root `M > max(lambda_i)` of `1 - sum(lambda_i)/C = prod(1 - lambda_i/M)`.
pub fn solve_service_rate_nonhomogeneous(rates: &[f64], c: f64, tol: f64) -> Result<f64> {
    let traffic = TrafficSpec::new(rates.to_vec())?;
    let rho = require_stable(traffic.total(), c)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }
    if traffic.n() == 1 {
        return Ok(c);
    }
    let lhs = 1.0 - rho;
    let ln_lhs = f64::ln_1p(-rho);
    // increasing in M on (max rate, inf); log form keeps light loads accurate
    let g = |m: f64| rates.iter().map(|&r| f64::ln_1p(-r / m)).sum::<f64>() - ln_lhs;

    let lo = traffic.max_rate() * (1.0 + 1e-12);
    let mut hi = c;
    while g(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
        }
    }
    if g(lo) >= 0.0 {
        // root is squeezed against max rate; the bracket cannot be formed
        return Err(Error::NoConvergence { iterations: 0, residual: g(lo) });
    }
    let root = bisect::bisect(g, lo, hi, f64::MAX, MAX_ITERATIONS)?;
    let residual = (product_empty(rates, root.x) - lhs).abs();
    if residual >= tol {
        return Err(Error::NoConvergence { iterations: root.iterations, residual });
    }
    Ok(root.x)
}

fn product_empty(rates: &[f64], m: f64) -> f64 {
    rates.iter().map(|&r| 1.0 - r / m).product()
}

/// Per-node mean delays `1/(M - lambda_i)`.
pub fn mean_delay_per_node(rates: &[f64], c: f64) -> Result<Vec<f64>> {
    let m = solve_service_rate_nonhomogeneous(rates, c, DEFAULT_TOL)?;
    Ok(rates.iter().map(|&r| 1.0 / (m - r)).collect())
}

/// Analytic outputs for one traffic pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayReport {
    pub capacity_c: f64,
    pub m_avg_bound: f64,
    /// Empty probability of each node's decoupled queue.
    pub p_empty: Vec<f64>,
    pub per_node_delay_bound: Vec<f64>,
    pub utilization: f64,
}

impl DelayReport {
    pub fn analyze(traffic: &TrafficSpec, c: f64) -> Result<Self> {
        let rates = traffic.rates();
        let (m_avg, delays) = if traffic.is_homogeneous() {
            let n = u32::try_from(traffic.n()).map_err(|_| Error::invalid("rates", "too many nodes"))?;
            let m = service_rate_bound_homogeneous(n, rates[0], c)?;
            let d = mean_delay_homogeneous(n, rates[0], c)?;
            (m, vec![d; traffic.n()])
        } else {
            let m = solve_service_rate_nonhomogeneous(rates, c, DEFAULT_TOL)?;
            (m, rates.iter().map(|&r| 1.0 / (m - r)).collect())
        };
        let p_empty = rates
            .iter()
            .map(|&r| empty_probability(r, m_avg))
            .collect::<Result<Vec<_>>>()?;
        Ok(DelayReport {
            capacity_c: c,
            m_avg_bound: m_avg,
            p_empty,
            per_node_delay_bound: delays,
            utilization: traffic.total() / c,
        })
    }

    /// Rate-weighted mean delay across nodes (what a packet sees on average).
    pub fn mean_delay(&self, traffic: &TrafficSpec) -> f64 {
        let total = traffic.total();
        traffic
            .rates()
            .iter()
            .zip(&self.per_node_delay_bound)
            .map(|(r, d)| r * d)
            .sum::<f64>()
            / total
    }
}
