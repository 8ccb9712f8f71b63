//! Plaintext population statistics, used as oracles for reports and tests.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance, computed on centered values.
pub fn variance(x: &[f64]) -> f64 {
    central_moment(x, 2)
}

pub fn central_moment(x: &[f64], k: i32) -> f64 {
    let mu = mean(x);
    x.iter().map(|v| (v - mu).powi(k)).sum::<f64>() / x.len() as f64
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

pub fn zscores(x: &[f64]) -> Vec<f64> {
    let mu = mean(x);
    let sigma = std_dev(x);
    x.iter().map(|v| (v - mu) / sigma).collect()
}

pub fn skewness(x: &[f64]) -> f64 {
    central_moment(x, 3) / variance(x).powf(1.5)
}

/// Fourth standardized moment; subtract 3 for the excess.
pub fn kurtosis(x: &[f64]) -> f64 {
    central_moment(x, 4) / variance(x).powi(2)
}

pub fn coeff_variation(x: &[f64]) -> f64 {
    std_dev(x) / mean(x)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
    cov / (std_dev(x) * std_dev(y))
}
