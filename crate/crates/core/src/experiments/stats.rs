//! Small-sample statistics used by the reports and the acceptance suite.

/// Median of `values`; `None` when empty. Even counts average the middle pair.
pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> Option<(f64, f64)> {
    let m = mean(values)?;
    if values.len() < 2 {
        return Some((m, f64::NAN));
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
    Some((m, (var / values.len() as f64).sqrt()))
}

/// Ordinary least squares fit `y = slope * x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Kolmogorov-Smirnov distance between the empirical distribution of integer
/// `samples` and `cdf`, evaluated at every jump point.
pub fn ks_statistic_discrete(samples: &[u64], cdf: impl Fn(u64) -> f64) -> f64 {
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let x = v[i];
        let below = i as f64 / n;
        while i < v.len() && v[i] == x {
            i += 1;
        }
        let at = i as f64 / n;
        let f = cdf(x);
        let f_before = if x == 0 { 0.0 } else { cdf(x - 1) };
        d = d.max((at - f).abs()).max((below - f_before).abs());
    }
    d
}

/// Asymptotic one-sample KS critical value at level `alpha` for `n` samples.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Pearson statistic of observed counts against expected probabilities.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> f64 {
    let total = observed.iter().sum::<u64>() as f64;
    observed.iter().zip(probs).map(|(&o, &p)| (o as f64 - total * p).powi(2) / (total * p)).sum()
}

/// Median of right-censored values: a censored entry takes part as its lower
/// bound. The result is a lower bound on the true median and is exact when
/// fewer than half the entries are censored and every censored entry is at
/// least every exact one.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CensoredMedian {
    pub value: f64,
    pub censored_fraction: f64,
    pub too_censored: bool,
}

pub fn censored_median(values: &[(f64, bool)]) -> Option<CensoredMedian> {
    let plain: Vec<f64> = values.iter().map(|v| v.0).collect();
    let value = median(&plain)?;
    let censored = values.iter().filter(|v| v.1).count() as f64 / values.len() as f64;
    Some(CensoredMedian { value, censored_fraction: censored, too_censored: censored >= 0.5 })
}
