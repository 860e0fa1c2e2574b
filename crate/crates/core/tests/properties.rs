use d2net::io::{decode_ppm, encode_ppm, Rgb8};
use d2net::spectral::{dft2, dft2_naive, idft2, spectral_product, spectral_product_adjoint, Grid};
use d2net::{Shape, Tensor};
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = Grid> {
    (1usize..=12, 1usize..=12).prop_flat_map(|(h, w)| {
        proptest::collection::vec(-10.0f64..10.0, h * w).prop_map(move |d| Grid::new(h, w, d))
    })
}

fn pair(c: usize, side: usize) -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>)> {
    let n = c * side * side;
    let s = Shape::new(1, c, side, side);
    (
        proptest::collection::vec(-1.0f64..1.0, n),
        proptest::collection::vec(-1.0f64..1.0, n),
    )
        .prop_map(move |(a, b)| (Tensor::from_vec(s, a).unwrap(), Tensor::from_vec(s, b).unwrap()))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_matches_direct_sum_and_inverts(x in grid()) {
        let fast = dft2(&x);
        let naive = dft2_naive(&x);
        let scale = max_abs(&naive.re).max(max_abs(&naive.im)).max(1e-300);
        for (a, b) in fast.re.iter().zip(&naive.re).chain(fast.im.iter().zip(&naive.im)) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        let back = idft2(&fast).unwrap();
        let xs = max_abs(&x.data).max(1e-300);
        for (a, b) in back.data.iter().zip(&x.data) {
            prop_assert!((a - b).abs() <= 1e-12 * xs);
        }
        let energy: f64 = x.data.iter().map(|v| v * v).sum();
        let spectral: f64 = fast.re.iter().zip(&fast.im).map(|(r, i)| r * r + i * i).sum();
        prop_assert!((energy - spectral).abs() <= 1e-10 * energy.max(1e-300));
    }

    #[test]
    fn spectral_product_commutes((q, k) in pair(2, 16)) {
        let qk = spectral_product(&q, &k, 8).unwrap();
        let kq = spectral_product(&k, &q, 8).unwrap();
        let scale = max_abs(qk.data()).max(1e-300);
        for (a, b) in qk.data().iter().zip(kq.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity((q, k) in pair(3, 8), (g, _) in pair(3, 8)) {
        let lhs = dot(&spectral_product(&q, &k, 4).unwrap(), &g);
        let rhs = dot(&q, &spectral_product_adjoint(&g, &k, 4).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
    }

    #[test]
    fn tiles_are_independent((q, k) in pair(1, 16), tile in 0usize..4, value in -1.0f64..1.0) {
        let base = spectral_product(&q, &k, 8).unwrap();
        let (ty, tx) = (tile / 2 * 8, tile % 2 * 8);
        let mut bumped = q.clone();
        bumped.data_mut()[ty * 16 + tx] += value;
        let out = spectral_product(&bumped, &k, 8).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                if (y / 8 * 8, x / 8 * 8) != (ty, tx) {
                    prop_assert_eq!(out.data()[y * 16 + x], base.data()[y * 16 + x]);
                }
            }
        }
    }

    #[test]
    fn ppm_round_trips_exactly(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let pixels = (0..w * h * 3)
            .map(|i| (seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407)) >> 56) as u8)
            .collect();
        let img = Rgb8::new(w, h, pixels).unwrap();
        let bytes = encode_ppm(&img);
        let back = decode_ppm(&bytes).unwrap();
        prop_assert_eq!(&back, &img);
        prop_assert_eq!(encode_ppm(&back), bytes);
        let t = img.to_tensor::<f32>();
        prop_assert_eq!(Rgb8::from_tensor(&t).unwrap(), img);
    }
}
