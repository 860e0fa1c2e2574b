use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x * Phi(x)` with the erf-based normal CDF.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let half = T::from_f64(0.5);
    let k = T::from_f64(FRAC_1_SQRT_2);
    x.map(|v| half * v * (T::one() + (v * k).erf()))
}

/// `grad_out * (Phi(x) + x * phi(x))`.
pub fn gelu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let half = T::from_f64(0.5);
    let k = T::from_f64(FRAC_1_SQRT_2);
    let c = T::from_f64(INV_SQRT_2PI);
    x.zip_with(grad_out, "gelu_backward", |v, g| {
        let cdf = half * (T::one() + (v * k).erf());
        let pdf = c * (-(half * v * v)).exp();
        g * (cdf + v * pdf)
    })
}

/// Two-way softmax per element: `wa = e^a / (e^a + e^b)`, evaluated after
/// subtracting `max(a, b)` so large logits never overflow.
pub fn softmax_pair<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let wa = a.zip_with(b, "softmax_pair", |x, y| {
        let m = x.max(y);
        let (ex, ey) = ((x - m).exp(), (y - m).exp());
        ex / (ex + ey)
    })?;
    let wb = a.zip_with(b, "softmax_pair", |x, y| {
        let m = x.max(y);
        let (ex, ey) = ((x - m).exp(), (y - m).exp());
        ey / (ex + ey)
    })?;
    Ok((wa, wb))
}

/// Given the forward weights and gradients w.r.t. both outputs, returns
/// gradients w.r.t. the two logits.
pub fn softmax_pair_backward<T: Scalar>(
    wa: &Tensor<T>,
    wb: &Tensor<T>,
    grad_wa: &Tensor<T>,
    grad_wb: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let diff = grad_wa.sub(grad_wb)?;
    let prod = wa.mul(wb)?;
    let ga = prod.mul(&diff)?;
    let gb = ga.scale(-T::one());
    Ok((ga, gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    /// erf by its Maclaurin series, summed until terms vanish.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 {
            n += 1.0;
            term *= -x * x / n;
            sum += term / (2.0 * n + 1.0);
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![v]).unwrap()
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(&scalar(0.0)).data()[0], 0.0);
        let want = 0.5 * (1.0 + erf_series(1.0 / 2f64.sqrt()));
        assert!((gelu(&scalar(1.0)).data()[0] - want).abs() < 1e-15);
        assert!(gelu(&scalar(-10.0)).data()[0].abs() < 1e-20);
        assert!((gelu(&scalar(30.0)).data()[0] - 30.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_pair_limits() {
        let a = Tensor::<f64>::from_fn(Shape::new(1, 2, 2, 2), |i| i as f64);
        let (wa, wb) = softmax_pair(&a, &a).unwrap();
        assert!(wa.data().iter().chain(wb.data()).all(|&v| v == 0.5));
        let b = a.map(|v| v - 100.0);
        let (wa, wb) = softmax_pair(&a, &b).unwrap();
        for (&x, &y) in wa.data().iter().zip(wb.data()) {
            assert!((x - 1.0).abs() < 1e-15);
            assert!((y - 3.720075976020836e-44).abs() < 1e-56);
        }
    }
}
