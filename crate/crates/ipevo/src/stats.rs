//! Small statistics toolkit for the verification harness.

use statrs::distribution::{ContinuousCDF, InverseGamma, Normal};

/// Family-wise two-sided error rate matching a 3 SE band for a single cell.
pub const FAMILY_ERROR: f64 = 0.0027;

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// SE multiplier for `m` simultaneous two-sided cells (Bonferroni). `m = 1` gives 3.
pub fn bonferroni_k(m: usize) -> f64 {
    normal_quantile(1.0 - FAMILY_ERROR / (2.0 * m.max(1) as f64))
}

/// Mean and batch-means standard error. Uses `batches` equal batches,
/// dropping the remainder; falls back to the iid formula below 2 per batch.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let b = batches.max(2);
    let per = n / b;
    if per < 2 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        return (mean, (var / n as f64).sqrt());
    }
    let bm: Vec<f64> = xs.chunks_exact(per).take(b).map(|c| c.iter().sum::<f64>() / per as f64).collect();
    let m = bm.iter().sum::<f64>() / b as f64;
    let var = bm.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}

/// Kolmogorov limiting tail probability P(K > lambda).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let t = 2.0 * (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// One-sample KS distance and asymptotic p-value.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

/// Two-sample KS distance and asymptotic p-value. Ties are handled by
/// advancing both samples past equal values before comparing.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sn = ne.sqrt();
    (d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d))
}

/// CDF of InverseGamma(shape, scale): P(T <= t) = Q(shape, scale / t).
pub fn inverse_gamma_cdf(shape: f64, scale: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    InverseGamma::new(shape, scale).expect("valid inverse gamma").cdf(t)
}

/// Least-squares slope and intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma_ur;

    #[test]
    fn quantiles_and_k() {
        assert!((bonferroni_k(1) - 3.0).abs() < 2e-3);
        assert!(bonferroni_k(16) > bonferroni_k(4));
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn inverse_gamma_matches_incomplete_gamma() {
        for &(a, b, t) in &[(1.5, 1.0, 0.7), (1.3, 0.5, 2.0), (1.7, 2.0, 0.1)] {
            assert!((inverse_gamma_cdf(a, b, t) - gamma_ur(a, b / t)).abs() < 1e-12);
        }
    }

    #[test]
    fn ks_basics() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!(d <= 5e-4 + 1e-12 && p > 0.99);
        let (d2, _) = ks_two_sample(&xs, &xs);
        assert_eq!(d2, 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        let (d3, p3) = ks_two_sample(&xs, &shifted);
        assert!((d3 - 0.5).abs() <= 1.5e-3 && p3 < 1e-10, "{d3} {p3}");
    }

    #[test]
    fn batch_se_iid_scale() {
        let xs: Vec<f64> = (0..3000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (m, se) = batch_means(&xs, 30);
        assert_eq!(m, 0.0);
        assert!(se < 1e-12);
    }
}
