//! Reconstruction, KL and vector-quantization losses.
//!
//! Tensor-level functions compute values for evaluation; the `*_graph`
//! variants record the same quantities on a [`Tape`] for training.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{Aux, Forward};
use crate::tensor::Tensor;
use crate::Real;

/// Floor applied by [`nmse_db`] so a perfect prediction stays finite.
pub const NMSE_DB_FLOOR: f64 = -100.0;

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean of squared differences over all elements.
pub fn mse<T: Real>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<f64> {
    same_shape(x, x_hat, "mse")?;
    let sum: f64 = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum();
    Ok(sum / x.numel() as f64)
}

/// Population variance of the elements.
pub fn variance<T: Real>(x: &[T]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    x.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n
}

/// `mse(x, x̂) / Var(x)`.
pub fn nmse<T: Real>(x: &Tensor<T>, x_hat: &Tensor<T>) -> Result<f64> {
    let m = mse(x, x_hat)?;
    let var = variance(x.data());
    if var.is_nan() || var <= 0.0 {
        return Err(Error::Degenerate("NMSE reference has zero variance".into()));
    }
    Ok(m / var)
}

/// `10·log10(nmse)`, floored at [`NMSE_DB_FLOOR`].
pub fn nmse_db(nmse: f64) -> f64 {
    if nmse <= 0.0 {
        return NMSE_DB_FLOOR;
    }
    (10.0 * nmse.log10()).max(NMSE_DB_FLOOR)
}

fn batch_of(shape: &[usize]) -> usize {
    if shape.len() == 4 {
        shape[0]
    } else {
        1
    }
}

/// KL divergence of `N(μ, e^logvar)` from `N(0, 1)`, summed over elements
/// and averaged over the batch (leading axis of a 4-D tensor).
pub fn kl_gaussian<T: Real>(mu: &Tensor<T>, logvar: &Tensor<T>) -> Result<f64> {
    same_shape(mu, logvar, "kl_gaussian")?;
    let sum: f64 = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (m.as_f64(), lv.as_f64());
            0.5 * (m * m + lv.exp() - lv - 1.0)
        })
        .sum();
    Ok(sum / batch_of(mu.shape()) as f64)
}

/// Number of latent vectors in a `[d,h,w]` or `[N,d,h,w]` grid.
fn positions(shape: &[usize]) -> Result<usize> {
    match shape {
        [_, h, w] => Ok(h * w),
        [n, _, h, w] => Ok(n * h * w),
        _ => Err(Error::shape(format!(
            "latent grid must be 3-D or 4-D, got {shape:?}"
        ))),
    }
}

pub fn mse_graph<T: Real>(tape: &mut Tape<T>, prediction: Var, target: Var) -> Result<Var> {
    let d = tape.sub(prediction, target)?;
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

pub fn kl_graph<T: Real>(tape: &mut Tape<T>, mu: Var, logvar: Var) -> Result<Var> {
    let batch = batch_of(tape.shape(mu));
    let mu2 = tape.square(mu);
    let var = tape.exp(logvar);
    let a = tape.add(mu2, var)?;
    let b = tape.sub(a, logvar)?;
    let c = tape.add_scalar(b, -T::one());
    let s = tape.sum(c);
    Ok(tape.mul_scalar(s, T::lit(0.5 / batch as f64)))
}

/// Codebook term `‖sg[z_e] − z_q‖²` and commitment term
/// `β·‖z_e − sg[z_q]‖²`, each averaged over latent positions.
pub fn vq_graph<T: Real>(tape: &mut Tape<T>, z_e: Var, z_q: Var, beta: f64) -> Result<(Var, Var)> {
    let n = positions(tape.shape(z_e))? as f64;
    let ze_sg = tape.detach(z_e);
    let zq_sg = tape.detach(z_q);

    let d = tape.sub(ze_sg, z_q)?;
    let sq = tape.square(d);
    let s = tape.sum(sq);
    let vq = tape.mul_scalar(s, T::lit(1.0 / n));

    let d = tape.sub(z_e, zq_sg)?;
    let sq = tape.square(d);
    let s = tape.sum(sq);
    let commit = tape.mul_scalar(s, T::lit(beta / n));
    Ok((vq, commit))
}

/// Per-batch loss values. `total = mse + kl_weight·kl + vq + commit`;
/// `commit` already includes β.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
    pub vq: f64,
    pub commit: f64,
}

impl LossBreakdown {
    pub fn combine(mse: f64, kl: f64, vq: f64, commit: f64, kl_weight: f64) -> Self {
        Self {
            total: mse + kl_weight * kl + vq + commit,
            mse,
            kl,
            vq,
            commit,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.total, self.mse, self.kl, self.vq, self.commit]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Element-wise sum, for accumulating epoch averages.
    pub fn accumulate(&mut self, other: &Self, weight: f64) {
        self.total += weight * other.total;
        self.mse += weight * other.mse;
        self.kl += weight * other.kl;
        self.vq += weight * other.vq;
        self.commit += weight * other.commit;
    }
}

/// Loss weights shared by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub kl_weight: f64,
    pub commit_beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kl_weight: 2.5e-5,
            commit_beta: 0.25,
        }
    }
}

/// Record the model loss for a forward pass; returns the scalar to
/// differentiate and its breakdown.
pub fn model_loss_graph<T: Real>(
    tape: &mut Tape<T>,
    forward: &Forward,
    target: Var,
    weights: LossWeights,
) -> Result<(Var, LossBreakdown)> {
    let mse = mse_graph(tape, forward.prediction, target)?;
    let scalar = |tape: &Tape<T>, v: Var| tape.value(v).data()[0].as_f64();
    match &forward.aux {
        Aux::None => {
            let m = scalar(tape, mse);
            Ok((
                mse,
                LossBreakdown::combine(m, 0.0, 0.0, 0.0, weights.kl_weight),
            ))
        }
        Aux::Gaussian { mu, logvar } => {
            let kl = kl_graph(tape, *mu, *logvar)?;
            let weighted = tape.mul_scalar(kl, T::lit(weights.kl_weight));
            let total = tape.add(mse, weighted)?;
            let b = LossBreakdown::combine(
                scalar(tape, mse),
                scalar(tape, kl),
                0.0,
                0.0,
                weights.kl_weight,
            );
            Ok((total, b))
        }
        Aux::Quantized { z_e, z_q, .. } => {
            let (vq, commit) = vq_graph(tape, *z_e, *z_q, weights.commit_beta)?;
            let t = tape.add(mse, vq)?;
            let total = tape.add(t, commit)?;
            let b = LossBreakdown::combine(
                scalar(tape, mse),
                0.0,
                scalar(tape, vq),
                scalar(tape, commit),
                weights.kl_weight,
            );
            Ok((total, b))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn mse_by_hand() {
        assert_eq!(
            mse(&t(&[2], &[0.0, 0.0]), &t(&[2], &[1.0, 1.0])).unwrap(),
            1.0
        );
        assert!(mse(&t(&[2], &[0.0, 0.0]), &t(&[1], &[1.0])).is_err());
    }

    #[test]
    fn nmse_cases() {
        let x = t(&[4], &[1.0, 2.0, 3.0, 6.0]);
        assert_eq!(nmse(&x, &x).unwrap(), 0.0);
        assert_eq!(nmse_db(0.0), NMSE_DB_FLOOR);
        let c = t(&[4], &[3.0; 4]);
        assert!((nmse(&x, &c).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(nmse(&c, &x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn kl_closed_forms() {
        let one = t(&[1, 2, 1, 1], &[1.0, 1.0]);
        let zero = t(&[1, 2, 1, 1], &[0.0, 0.0]);
        assert!((kl_gaussian(&one, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(kl_gaussian(&zero, &zero).unwrap(), 0.0);
        let ln4 = t(&[1], &[4f64.ln()]);
        let k = kl_gaussian(&t(&[1], &[0.0]), &ln4).unwrap();
        assert!((k - 0.5 * (4.0 - 4f64.ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn kl_graph_matches_value() {
        let mu = t(&[2, 1, 1, 2], &[0.3, -0.2, 1.1, 0.0]);
        let lv = t(&[2, 1, 1, 2], &[0.1, -0.5, 0.7, 0.0]);
        let mut tape = Tape::new();
        let (a, b) = (tape.constant(mu.clone()), tape.constant(lv.clone()));
        let k = kl_graph(&mut tape, a, b).unwrap();
        let want = kl_gaussian(&mu, &lv).unwrap();
        assert!((tape.value(k).data()[0] - want).abs() < 1e-14);
    }

    #[test]
    fn vq_terms_by_hand() {
        let mut tape = Tape::new();
        let ze = tape.leaf(t(&[2, 1, 1], &[0.2, 0.1]).with_requires_grad(true));
        let zq = tape.leaf(t(&[2, 1, 1], &[0.0, 0.0]).with_requires_grad(true));
        let (vq, commit) = vq_graph(&mut tape, ze, zq, 0.25).unwrap();
        assert!((tape.value(vq).data()[0] - 0.05).abs() < 1e-15);
        assert!((tape.value(commit).data()[0] - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn breakdown_identity() {
        let b = LossBreakdown::combine(0.5, 3.0, 0.25, 0.125, 0.5);
        assert_eq!(b.total, 0.5 + 1.5 + 0.25 + 0.125);
    }
}
