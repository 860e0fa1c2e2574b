use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean absolute error and its gradient `sign(pred - target) / count`,
/// with the subgradient at ties taken as 0.
pub fn l1_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "l1_loss",
            left: pred.shape(),
            right: target.shape(),
        });
    }
    let count = pred.numel() as f64;
    let inv = T::from_f64(1.0 / count);
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p.to_f64() - t.to_f64()).abs())
        .sum();
    let grad = pred.zip_with(target, "l1_loss", |p, t| (p - t).signum_or_zero() * inv)?;
    Ok((total / count, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn closed_forms() {
        let t = Tensor::<f64>::from_fn(Shape::new(1, 3, 4, 4), |i| i as f64 / 48.0);
        let (l, g) = l1_loss(&t, &t).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));
        let (l, _) = l1_loss(&t.map(|v| v + 0.5), &t).unwrap();
        assert!((l - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences_away_from_ties() {
        let shape = Shape::new(1, 2, 3, 3);
        let target = Tensor::<f64>::from_fn(shape, |i| (i as f64 * 0.37).sin());
        let pred = Tensor::<f64>::from_fn(shape, |i| (i as f64 * 0.37).sin() + if i % 2 == 0 { 0.3 } else { -0.2 });
        let (_, g) = l1_loss(&pred, &target).unwrap();
        let h = 1e-4;
        for i in 0..pred.numel() {
            let mut plus = pred.clone();
            plus.data_mut()[i] += h;
            let mut minus = pred.clone();
            minus.data_mut()[i] -= h;
            let fd = (l1_loss(&plus, &target).unwrap().0 - l1_loss(&minus, &target).unwrap().0) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() <= 1e-8 * g.data()[i].abs().max(1.0), "{i}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f32>::zeros(Shape::new(1, 3, 2, 2));
        let b = Tensor::<f32>::zeros(Shape::new(1, 3, 2, 3));
        assert!(matches!(l1_loss(&a, &b), Err(Error::ShapeMismatch { .. })));
    }
}
