//! Two-sample Kolmogorov–Smirnov test and Wilson score intervals.

use serde::Serialize;

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsReport {
    pub statistic: f64,
    pub n1: usize,
    pub n2: usize,
    pub p_value: f64,
}

/// Exact sup-distance between the two empirical CDFs, with the asymptotic
/// Kolmogorov p-value at the effective size `n1·n2/(n1+n2)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsReport> {
    if a.len() < 10 || b.len() < 10 {
        return config(format!(
            "two-sample KS needs at least 10 values per sample, got {} and {}",
            a.len(),
            b.len()
        ));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return config("KS samples contain NaN");
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = a[i].min(b[j]);
        // step past every copy of v in both samples before comparing
        while i < n1 && a[i] == v {
            i += 1;
        }
        while j < n2 && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let en = ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    let p_value = kolmogorov_q((en + 0.12 + 0.11 / en) * d);
    Ok(KsReport {
        statistic: d,
        n1,
        n2,
        p_value,
    })
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    let q = if z < 1.18 {
        // Jacobi-transformed series, fast for small z
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * z * z)).exp();
        let p = (2.0 * std::f64::consts::PI).sqrt() / z * (y + y.powi(9) + y.powi(25) + y.powi(49));
        1.0 - p
    } else {
        let x = (-2.0 * z * z).exp();
        2.0 * (x - x.powi(4) + x.powi(9))
    };
    q.clamp(0.0, 1.0)
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the bounds contain the estimate exactly, also at 0 and n successes
    ((centre - half).clamp(0.0, p), (centre + half).clamp(p, 1.0))
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
