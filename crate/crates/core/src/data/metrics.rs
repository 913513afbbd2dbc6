use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::Theta;

/// Count predictions `⌊exp(offset + β0 + xᵀβ)⌋`.
pub fn poisson_predictions(data: &Dataset, theta: &Theta) -> Vec<i64> {
    data.iter()
        .map(|o| (o.offset + theta.linear_predictor(&o.x)).exp().floor() as i64)
        .collect()
}

/// Root trimmed mean squared prediction error.
///
/// The squared errors are sorted and the smallest
/// `h = ⌊(n+1)(1-α)⌋` of them are averaged (`h` is capped at `n`).
pub fn rtmspe(predictions: &[i64], truths: &[i64], alpha_trim: f64) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} responses",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("prediction list"));
    }
    if !(0.0..1.0).contains(&alpha_trim) {
        return Err(Error::InvalidInput(format!(
            "trim fraction must lie in [0, 1), got {alpha_trim}"
        )));
    }
    let n = predictions.len();
    let h = (((n + 1) as f64) * (1.0 - alpha_trim)).floor() as usize;
    let h = h.min(n);
    if h == 0 {
        return Err(Error::InvalidTrim { alpha: alpha_trim, n });
    }
    let mut sq: Vec<f64> = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| {
            let e = (*t - *p) as f64;
            e * e
        })
        .collect();
    sq.sort_by(f64::total_cmp);
    let mean = sq[..h].iter().sum::<f64>() / h as f64;
    Ok(mean.sqrt())
}
