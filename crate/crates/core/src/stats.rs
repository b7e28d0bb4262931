//! Replication statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
    pub samples: usize,
}

impl ConfidenceInterval {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &ConfidenceInterval) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// Two-sided Student-t critical value for `confidence` with `dof` degrees
/// of freedom.
pub fn t_critical(confidence: f64, dof: usize) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::invalid("confidence", format!("must be in (0, 1), got {confidence}")));
    }
    if dof == 0 {
        return Err(Error::invalid("replications", "need at least two samples"));
    }
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::invalid("dof", e.to_string()))?;
    Ok(t.inverse_cdf(0.5 + confidence / 2.0))
}

/// Sample mean and t-based half-width of `samples`.
pub fn mean_ci(samples: &[f64], confidence: f64) -> Result<ConfidenceInterval> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("replications", format!("need at least two samples, got {n}")));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half_width = t_critical(confidence, n - 1)? * (var / n as f64).sqrt();
    Ok(ConfidenceInterval { mean, half_width, samples: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn t_table_values() {
        // two-sided 95% and 99% rows of the standard t-table
        assert_relative_eq!(t_critical(0.95, 29).unwrap(), 2.045, max_relative = 5e-4);
        assert_relative_eq!(t_critical(0.95, 1).unwrap(), 12.706, max_relative = 5e-4);
        assert_relative_eq!(t_critical(0.95, 9).unwrap(), 2.262, max_relative = 5e-4);
        assert_relative_eq!(t_critical(0.99, 29).unwrap(), 2.756, max_relative = 5e-4);
        assert_relative_eq!(t_critical(0.90, 4).unwrap(), 2.132, max_relative = 5e-4);
    }

    #[test]
    fn zero_variance_gives_zero_width() {
        let ci = mean_ci(&[0.25; 30], 0.95).unwrap();
        assert_eq!(ci.mean, 0.25);
        assert_eq!(ci.half_width, 0.0);
    }

    #[test]
    fn half_width_uses_standard_error() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ci = mean_ci(&xs, 0.95).unwrap();
        let se = (2.5f64 / 5.0).sqrt();
        assert_relative_eq!(ci.half_width, 2.776_445 * se, max_relative = 1e-5);
        assert!(ci.overlaps(&ConfidenceInterval { mean: 5.0, half_width: 0.1, samples: 2 }));
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(mean_ci(&[1.0], 0.95).is_err());
        assert!(mean_ci(&[1.0, 2.0], 1.0).is_err());
        assert!(t_critical(0.95, 0).is_err());
    }
}
