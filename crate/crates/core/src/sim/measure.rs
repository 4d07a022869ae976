//! Replication statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Per-station mean throughput across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputEstimate {
    pub mean: Vec<f64>,
    /// Student-t 95% half-widths; `None` for a single replication.
    pub half_width: Option<Vec<f64>>,
    pub replications: usize,
}

/// `replications[k][i]` is station `i`'s throughput in replication `k`, bits/s.
pub fn measure_throughput(replications: &[Vec<f64>]) -> Result<ThroughputEstimate> {
    let k = replications.len();
    let n = replications.first().map_or(0, Vec::len);
    if k == 0 || replications.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidParams(
            "need at least one replication with one value per station".into(),
        ));
    }
    let mean: Vec<f64> = (0..n)
        .map(|i| replications.iter().map(|r| r[i]).sum::<f64>() / k as f64)
        .collect();
    if k == 1 {
        return Ok(ThroughputEstimate {
            mean,
            half_width: None,
            replications: 1,
        });
    }
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let half_width = (0..n)
        .map(|i| {
            let var = replications
                .iter()
                .map(|r| (r[i] - mean[i]).powi(2))
                .sum::<f64>()
                / (k - 1) as f64;
            t * (var / k as f64).sqrt()
        })
        .collect();
    Ok(ThroughputEstimate {
        mean,
        half_width: Some(half_width),
        replications: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_replications_have_zero_width() {
        let e = measure_throughput(&vec![vec![3.0, 4.0]; 5]).unwrap();
        assert_eq!(e.mean, vec![3.0, 4.0]);
        assert_eq!(e.half_width, Some(vec![0.0, 0.0]));
    }

    #[test]
    fn single_replication_is_ci_free() {
        let e = measure_throughput(&[vec![1.0]]).unwrap();
        assert_eq!(e.half_width, None);
        assert!(measure_throughput(&[]).is_err());
    }

    #[test]
    fn two_point_half_width() {
        // mean 1, s = sqrt(2), t_{0.975,1} = 12.706
        let e = measure_throughput(&[vec![0.0], vec![2.0]]).unwrap();
        let hw = e.half_width.unwrap()[0];
        assert!((hw - 12.706_204_736 * 1.0).abs() < 1e-6);
    }
}
