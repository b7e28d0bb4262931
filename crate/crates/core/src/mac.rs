//! Saturation analysis of the DCF contention game.
//!
//! A backlogged node attempts in a generic slot with probability `beta`.
//! The backoff chain ties `beta` to the conditional collision probability
//! `p`, and independence of the other `n - 1` contenders ties `p` back to
//! `beta`; the two curves cross exactly once on `[0, 1]`. From the crossing
//! we get slot-outcome probabilities and, by renewal-reward over slots, the
//! saturation throughput `S(n)`.

use crate::bisect::{self, MAX_ITERATIONS};
use crate::error::{Error, Result};
use crate::params::MacPhyParams;

/// Residual tolerance for the attempt-probability fixed point.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Reference contender count whose saturation throughput is used as the
/// capacity `C`.
pub const DEFAULT_N_REF: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDurations {
    pub t_idle: f64,
    pub t_success: f64,
    pub t_collision: f64,
}

/// Durations and outcome probabilities of a generic contention slot with
/// `n` saturated nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotModel {
    pub n: u32,
    pub t_idle: f64,
    pub t_success: f64,
    pub t_collision: f64,
    /// Attempt probability.
    pub beta: f64,
    /// Conditional collision probability.
    pub p_coll: f64,
    pub p_s: f64,
    pub p_i: f64,
    pub p_c: f64,
}

impl SlotModel {
    pub fn solve(n: u32, params: &MacPhyParams) -> Result<Self> {
        let d = slot_durations(params)?;
        let (beta, p_coll) = solve_attempt_probability(n, params, DEFAULT_TOL)?;
        let (p_s, p_i, p_c) = slot_probabilities(beta, n)?;
        Ok(SlotModel {
            n,
            t_idle: d.t_idle,
            t_success: d.t_success,
            t_collision: d.t_collision,
            beta,
            p_coll,
            p_s,
            p_i,
            p_c,
        })
    }

    /// Mean length of a generic slot.
    pub fn mean_slot(&self) -> f64 {
        self.p_i * self.t_idle + self.p_s * self.t_success + self.p_c * self.t_collision
    }

    /// Successful packets per second.
    pub fn throughput(&self) -> f64 {
        self.p_s / self.mean_slot()
    }
}

/// Basic-access slot durations.
///
/// A success carries header, frame, SIFS, ACK and DIFS plus two propagation
/// delays; a collision carries the frame and DIFS only (no ACK timeout).
pub fn slot_durations(params: &MacPhyParams) -> Result<SlotDurations> {
    params.validate()?;
    let frame_air = params.phy_header_time
        + f64::from(params.mac_header_bytes + params.payload_bytes) * 8.0 / params.data_rate;
    let ack_air = params.phy_header_time + f64::from(params.ack_bytes) * 8.0 / params.data_rate;
    Ok(SlotDurations {
        t_idle: params.slot_time,
        t_success: frame_air + params.sifs + ack_air + params.difs + 2.0 * params.prop_delay,
        t_collision: frame_air + params.difs + params.prop_delay,
    })
}

fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

/// Attempt probability implied by the backoff chain:
///
/// `2(1-2p) / ((W+1)(1-2p) + pW(1-(2p)^m))`
///
/// evaluated as `2 / ((W+1) + pW * sum_{k<m} (2p)^k)`, which is the same
/// function with the removable singularity at `p = 1/2` cancelled.
pub fn beta_backoff(p: f64, w_min: u32, m_stages: u32) -> Result<f64> {
    check_probability(p)?;
    let w = f64::from(w_min);
    let two_p = 2.0 * p;
    let mut geometric = 0.0;
    let mut term = 1.0;
    for _ in 0..m_stages {
        geometric += term;
        term *= two_p;
    }
    Ok(2.0 / ((w + 1.0) + p * w * geometric))
}

/// Attempt probability implied by `n - 1` independent contenders:
/// `1 - (1-p)^(1/(n-1))`.
pub fn beta_collision(p: f64, n: u32) -> Result<f64> {
    check_probability(p)?;
    if n < 2 {
        return Err(Error::invalid("n", format!("needs at least 2 contenders, got {n}")));
    }
    let exponent = 1.0 / f64::from(n - 1);
    // 1 - exp(ln(1-p)/(n-1)), accurate for small p
    Ok(-(f64::ln_1p(-p) * exponent).exp_m1())
}

/// Solves the attempt-probability fixed point for `n` saturated nodes.
///
/// Returns `(beta, p)`. A lone node never collides, so `n = 1` yields
/// `p = 0` and `beta = 2/(W+1)` directly.
pub fn solve_attempt_probability(n: u32, params: &MacPhyParams, tol: f64) -> Result<(f64, f64)> {
    params.validate()?;
    if n == 0 {
        return Err(Error::invalid("n", "needs at least one node"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }
    let (w, m) = (params.w_min, params.m_stages);
    if n == 1 {
        return Ok((beta_backoff(0.0, w, m)?, 0.0));
    }
    let root = bisect::bisect(
        |p| fixed_point_residual(p, n, w, m),
        0.0,
        1.0,
        tol,
        MAX_ITERATIONS,
    )?;
    let p = root.x;
    Ok((beta_backoff(p, w, m)?, p))
}

/// `beta_backoff(p) - beta_collision(p, n)`; positive left of the fixed
/// point, negative right of it.
pub fn fixed_point_residual(p: f64, n: u32, w_min: u32, m_stages: u32) -> f64 {
    // both curves are total on [0, 1] and n >= 2 here
    beta_backoff(p, w_min, m_stages).unwrap() - beta_collision(p, n).unwrap()
}

/// `(p_s, p_i, p_c)` for `n` nodes each attempting with probability `beta`.
pub fn slot_probabilities(beta: f64, n: u32) -> Result<(f64, f64, f64)> {
    check_probability(beta)?;
    if n == 0 {
        return Err(Error::invalid("n", "needs at least one node"));
    }
    let rest = (1.0 - beta).powi(n as i32 - 1);
    let p_s = f64::from(n) * beta * rest;
    let p_i = (1.0 - beta) * rest;
    let p_c = (1.0 - p_s - p_i).max(0.0);
    Ok((p_s, p_i, p_c))
}

/// Renewal-reward saturation throughput `S(n)` in packets per second.
pub fn saturation_throughput(n: u32, params: &MacPhyParams) -> Result<f64> {
    Ok(SlotModel::solve(n, params)?.throughput())
}

/// The capacity `C` fed to the delay model: `S(n_ref)`.
pub fn saturation_capacity(params: &MacPhyParams, n_ref: u32) -> Result<f64> {
    if n_ref < 2 {
        return Err(Error::invalid("n_ref", format!("must be >= 2, got {n_ref}")));
    }
    saturation_throughput(n_ref, params)
}
