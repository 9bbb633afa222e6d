//! Loss functions. Values accumulate in `f64`; gradients come back as `f32`
//! tensors shaped like the prediction.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NnError;

const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Mean squared error over all elements.
    Mse,
    /// Binary cross-entropy, mean over all elements; inputs clamped to
    /// `[1e-7, 1 - 1e-7]`.
    Bce,
    /// Categorical cross-entropy against a one-hot target, mean over rows.
    CrossEntropy,
    /// KL divergence of `N(mu, sigma^2)` from `N(0, I)`; the prediction rows
    /// are `(mu .. , logvar ..)` halves and the target is ignored. Mean over
    /// rows, sum over latent dimensions.
    GaussianKl,
}

pub fn loss(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Result<f64, NnError> {
    Ok(loss_grad(kind, prediction, target)?.0)
}

/// Loss value and its gradient with respect to the prediction.
pub fn loss_grad(
    kind: LossKind,
    prediction: &Tensor,
    target: &Tensor,
) -> Result<(f64, Tensor), NnError> {
    check_inputs(kind, prediction, target)?;
    let rows = prediction.rows().max(1);
    let mut grad = Tensor::zeros(prediction.shape());
    let n = prediction.numel().max(1);
    let mut total = 0.0f64;

    match kind {
        LossKind::Mse => {
            for ((gv, &p), &t) in grad
                .data_mut()
                .iter_mut()
                .zip(prediction.data())
                .zip(target.data())
            {
                let d = p as f64 - t as f64;
                total += d * d;
                *gv = (2.0 * d / n as f64) as f32;
            }
            total /= n as f64;
        }
        LossKind::Bce => {
            for ((gv, &p), &t) in grad
                .data_mut()
                .iter_mut()
                .zip(prediction.data())
                .zip(target.data())
            {
                let p = (p as f64).clamp(PROB_EPS, 1.0 - PROB_EPS);
                let t = t as f64;
                total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                *gv = (((p - t) / (p * (1.0 - p))) / n as f64) as f32;
            }
            total /= n as f64;
        }
        LossKind::CrossEntropy => {
            for ((gv, &p), &t) in grad
                .data_mut()
                .iter_mut()
                .zip(prediction.data())
                .zip(target.data())
            {
                let p = (p as f64).clamp(PROB_EPS, 1.0 - PROB_EPS);
                let t = t as f64;
                total -= t * p.ln();
                *gv = ((-t / p) / rows as f64) as f32;
            }
            total /= rows as f64;
        }
        LossKind::GaussianKl => {
            let cols = *prediction.shape().last().unwrap();
            let half = cols / 2;
            for (grow, prow) in grad
                .data_mut()
                .chunks_mut(cols)
                .zip(prediction.data().chunks(cols))
            {
                for d in 0..half {
                    let mu = prow[d] as f64;
                    let lv = prow[half + d] as f64;
                    // -(1 + lv - mu^2 - e^lv)/2 >= 0 for all (mu, lv); clamp
                    // away the negative rounding noise near the optimum.
                    total += (-0.5 * (1.0 + lv - mu * mu - lv.exp())).max(0.0);
                    grow[d] = (mu / rows as f64) as f32;
                    grow[half + d] = (0.5 * (lv.exp() - 1.0) / rows as f64) as f32;
                }
            }
            total /= rows as f64;
        }
    }
    Ok((total, grad))
}

/// Per-sample loss values, one per batch row (dim 0), without the mean over
/// the batch. Used where a batch carries independent objectives.
pub fn loss_per_row(
    kind: LossKind,
    prediction: &Tensor,
    target: &Tensor,
) -> Result<Vec<f64>, NnError> {
    check_inputs(kind, prediction, target)?;
    let batch = prediction.shape()[0].max(1);
    let cols = prediction.numel() / batch;
    let mut out = Vec::with_capacity(batch);
    match kind {
        LossKind::Mse => {
            for (prow, trow) in prediction.data().chunks(cols).zip(target.data().chunks(cols)) {
                let s: f64 = prow
                    .iter()
                    .zip(trow)
                    .map(|(&p, &t)| {
                        let d = p as f64 - t as f64;
                        d * d
                    })
                    .sum();
                out.push(s / cols as f64);
            }
        }
        LossKind::Bce => {
            for (prow, trow) in prediction.data().chunks(cols).zip(target.data().chunks(cols)) {
                let s: f64 = prow
                    .iter()
                    .zip(trow)
                    .map(|(&p, &t)| {
                        let p = (p as f64).clamp(PROB_EPS, 1.0 - PROB_EPS);
                        -(t as f64 * p.ln() + (1.0 - t as f64) * (1.0 - p).ln())
                    })
                    .sum();
                out.push(s / cols as f64);
            }
        }
        LossKind::CrossEntropy => {
            for (prow, trow) in prediction.data().chunks(cols).zip(target.data().chunks(cols)) {
                let s: f64 = prow
                    .iter()
                    .zip(trow)
                    .map(|(&p, &t)| {
                        let p = (p as f64).clamp(PROB_EPS, 1.0 - PROB_EPS);
                        -(t as f64) * p.ln()
                    })
                    .sum();
                out.push(s);
            }
        }
        LossKind::GaussianKl => {
            let half = cols / 2;
            for prow in prediction.data().chunks(cols) {
                let mut s = 0.0;
                for d in 0..half {
                    let mu = prow[d] as f64;
                    let lv = prow[half + d] as f64;
                    s += (-0.5 * (1.0 + lv - mu * mu - lv.exp())).max(0.0);
                }
                out.push(s);
            }
        }
    }
    Ok(out)
}

fn check_inputs(kind: LossKind, prediction: &Tensor, target: &Tensor) -> Result<(), NnError> {
    if !prediction.is_finite() || !target.is_finite() {
        return Err(NnError::NonFiniteLossInput);
    }
    match kind {
        LossKind::GaussianKl => {
            let cols = *prediction.shape().last().unwrap_or(&0);
            if cols == 0 || cols % 2 != 0 {
                return Err(NnError::Shape {
                    layer: 0,
                    msg: format!(
                        "gaussian_kl needs an even last dim (mu, logvar), got {:?}",
                        prediction.shape()
                    ),
                });
            }
        }
        _ => {
            if prediction.shape() != target.shape() {
                return Err(NnError::Shape {
                    layer: 0,
                    msg: format!(
                        "loss shapes differ: {:?} vs {:?}",
                        prediction.shape(),
                        target.shape()
                    ),
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_identical_tensors_is_zero() {
        let x = Tensor::from_vec(&[2, 3], vec![0.5, -1.0, 2.0, 0.0, 3.0, -0.25]);
        assert_eq!(loss(LossKind::Mse, &x, &x).unwrap(), 0.0);
    }

    #[test]
    fn cross_entropy_of_exact_onehot_is_tiny() {
        let pred = Tensor::from_vec(&[1, 4], vec![0.0, 0.0, 0.0, 1.0]);
        let target = pred.clone();
        let v = loss(LossKind::CrossEntropy, &pred, &target).unwrap();
        assert!(v <= 1e-6, "{v}");
    }

    #[test]
    fn standard_normal_kl_is_zero() {
        let pred = Tensor::zeros(&[1, 8]); // mu = 0, logvar = 0
        let v = loss(LossKind::GaussianKl, &pred, &Tensor::zeros(&[1, 8])).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn nan_input_is_rejected() {
        let pred = Tensor::from_vec(&[1, 2], vec![f32::NAN, 0.0]);
        let target = Tensor::zeros(&[1, 2]);
        match loss(LossKind::Mse, &pred, &target) {
            Err(NnError::NonFiniteLossInput) => {}
            other => panic!("expected non-finite loss input, got {other:?}"),
        }
    }

    #[test]
    fn kl_is_nonnegative_everywhere() {
        for i in 0..50 {
            let mu = (i as f32 * 0.7).sin() * 3.0;
            let lv = (i as f32 * 1.3).cos() * 4.0;
            let pred = Tensor::from_vec(&[1, 2], vec![mu, lv]);
            let v = loss(LossKind::GaussianKl, &pred, &Tensor::zeros(&[1, 2])).unwrap();
            assert!(v >= 0.0);
        }
    }
}
