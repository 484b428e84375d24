//! Log-domain helpers. `-inf` is an ordinary value here: it stands for a
//! likelihood of exactly zero and propagates through sums without sentinels.

/// `log(sum(exp(x)))` over a slice, stable for large magnitudes.
///
/// Returns `-inf` for an empty slice or when every term is `-inf`, and `+inf`
/// if any term is `+inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(exp(a) + exp(b))`.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi.is_infinite() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log(1 - p)` with full precision for small `p`; `-inf` at `p = 1`.
pub fn log1m(p: f64) -> f64 {
    (-p).ln_1p()
}
