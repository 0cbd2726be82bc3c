//! Binary cross-entropy plus soft Dice on the crack class.

use crackseq_tensor::{Float, Tensor, Var};

use crate::error::{invalid, Error, Result};

/// Smoothing term of the soft Dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;

pub struct LossParts<'g, F: Float> {
    /// `bce + dice`, differentiable.
    pub total: Var<'g, F>,
    pub bce: f64,
    /// Crack-class loss: mean soft Dice loss over the samples of the batch.
    pub dice: f64,
}

/// Loss for logits and a binary target of the same shape; the leading axis is
/// the sample axis. Soft Dice is taken per sample and averaged over the
/// batch; samples whose target has no crack pixel contribute 0 to it.
pub fn segmentation_loss<'g, F: Float>(logits: &Var<'g, F>, target: &Tensor<F>) -> Result<LossParts<'g, F>> {
    if logits.shape() != target.shape() {
        return Err(invalid!("logits {:?} and target {:?} differ in shape", logits.shape(), target.shape()));
    }
    if !logits.value().is_finite() {
        return Err(Error::Runtime("non-finite logits".into()));
    }
    let g = logits.graph();
    let n = logits.shape()[0];
    let m = target.len() / n.max(1);
    let bce = logits.bce_with_logits(target);

    let t_sum: Vec<F> = target.data().chunks(m).map(|c| c.iter().copied().sum()).collect();
    let weights: Vec<F> = t_sum.iter().map(|&s| if s > F::zero() { F::one() } else { F::zero() }).collect();
    let p = logits.sigmoid().reshape(&[n, m]);
    let t = g.constant(target.clone().reshape(&[n, m]).expect("same length"));
    let s = F::lit(DICE_SMOOTH);
    let inter = p.mul(&t).sum_axes_keepdim(&[1]).scale(F::lit(2.0)).add_scalar(s);
    let denom = p.sum_axes_keepdim(&[1]).add(&g.constant(Tensor::from_vec(&[n, 1], t_sum).unwrap())).add_scalar(s);
    let per_sample = inter.div(&denom).neg().add_scalar(F::one());
    let dice = per_sample
        .mul(&g.constant(Tensor::from_vec(&[n, 1], weights).unwrap()))
        .sum_all()
        .scale(F::one() / F::lit(n as f64));
    let (bce_v, dice_v) = (bce.value().item().as_f64(), dice.value().item().as_f64());
    if !(bce_v.is_finite() && dice_v.is_finite()) {
        return Err(Error::Runtime("non-finite loss".into()));
    }
    Ok(LossParts { total: bce.add(&dice), bce: bce_v, dice: dice_v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crackseq_tensor::Graph;

    #[test]
    fn zero_logits_on_empty_target() {
        let g = Graph::<f64>::new();
        let l = segmentation_loss(&g.constant(Tensor::zeros(&[2, 1, 4, 4])), &Tensor::zeros(&[2, 1, 4, 4])).unwrap();
        assert!((l.bce - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(l.dice, 0.0);
    }

    #[test]
    fn confident_correct_prediction_has_near_zero_loss() {
        let g = Graph::<f64>::new();
        let t = Tensor::from_vec(&[1, 1, 2, 3], vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap();
        let logits = t.map(|v| if v > 0.5 { 40.0 } else { -40.0 });
        let l = segmentation_loss(&g.constant(logits), &t).unwrap();
        assert!(l.total.value().item() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let g = Graph::<f32>::new();
        let nan = Tensor::from_vec(&[1, 2], vec![f32::NAN, 0.0]).unwrap();
        assert!(matches!(segmentation_loss(&g.constant(nan), &Tensor::zeros(&[1, 2])), Err(Error::Runtime(_))));
        assert!(segmentation_loss(&g.constant(Tensor::zeros(&[1, 2])), &Tensor::zeros(&[2, 1])).is_err());
    }
}
