//! Central finite-difference certification of the hand-written backward
//! passes, in double precision.
//!
//! Every check reduces a layer's output to the scalar `<out, R>` with a fixed
//! random `R`, so the analytic gradient is the layer's backward applied to
//! `R`. Coordinates are parameters followed by inputs; all are checked when
//! there are at most [`CheckOptions::max_full`], otherwise a seeded random
//! subset.

use crate::blocks::{Afmm, Fem, FemConfig, Ffn, Fgfe, Mlfe};
use crate::error::Result;
use crate::network::{D2Net, NetworkConfig};
use crate::nn::{self, ConvSpec, ModuleParams, ParamBuilder};
use crate::spectral;
use crate::tensor::{Shape, Tensor};
use crate::training::l1_loss;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

pub const SINGLE_OP_TOL: f64 = 1e-6;
pub const COMPOSITE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    pub step: f64,
    pub max_full: usize,
    pub subset: usize,
    /// Relative errors use `max(|analytic|, |numeric|, floor)` as the
    /// denominator, with `floor = floor_fraction * rms(analytic)`, so
    /// coordinates whose true gradient is nearly zero are judged on the
    /// scale of the whole gradient.
    pub floor_fraction: f64,
    pub seed: u64,
    /// Multiplies every analytic gradient by `1 + 1e-3`, simulating a
    /// backward pass with a wrong constant. Used to show the harness fails.
    pub corrupt: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            step: 1e-4,
            max_full: 2000,
            subset: 400,
            floor_fraction: 1e-2,
            seed: 0,
            corrupt: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub coords: usize,
    pub max_rel: f64,
    pub mean_rel: f64,
    /// Coordinate index with the largest error.
    pub worst: usize,
    pub tol: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel <= self.tol
    }

    pub const CSV_HEADER: &'static str = "check,coords,max_rel_err,mean_rel_err,tol,worst_coord,verdict";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{},{}",
            self.name,
            self.coords,
            self.max_rel,
            self.mean_rel,
            self.tol,
            self.worst,
            if self.passed() { "pass" } else { "fail" }
        )
    }
}

impl fmt::Display for CheckRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<20} {:>5} coords  max rel {:.2e}  mean rel {:.2e}  tol {:.0e}  {}",
            self.name,
            self.coords,
            self.max_rel,
            self.mean_rel,
            self.tol,
            if self.passed() { "pass" } else { "FAIL" }
        )
    }
}

/// Compares `analytic` against central differences of `f` at `point`.
pub fn finite_diff_check(
    name: &str,
    f: impl Fn(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    tol: f64,
    opts: &CheckOptions,
) -> CheckRow {
    assert_eq!(point.len(), analytic.len());
    let n = point.len();
    let coords: Vec<usize> = if n <= opts.max_full {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xfd);
        let mut idx = sample(&mut rng, n, opts.subset.min(n)).into_vec();
        idx.sort_unstable();
        idx
    };
    let scale = 1.0 + if opts.corrupt { 1e-3 } else { 0.0 };
    let rms = (analytic.iter().map(|a| a * a).sum::<f64>() / n.max(1) as f64).sqrt();
    let floor = (opts.floor_fraction * rms).max(f64::MIN_POSITIVE);
    let mut x = point.to_vec();
    let (mut max_rel, mut sum_rel, mut worst) = (0.0f64, 0.0, 0);
    for &i in &coords {
        let orig = x[i];
        x[i] = orig + opts.step;
        let fp = f(&x);
        x[i] = orig - opts.step;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * opts.step);
        let a = analytic[i] * scale;
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        sum_rel += rel;
        if rel > max_rel || rel.is_nan() {
            max_rel = rel;
            worst = i;
        }
    }
    CheckRow {
        name: name.to_string(),
        coords: coords.len(),
        max_rel,
        mean_rel: sum_rel / coords.len().max(1) as f64,
        worst,
        tol,
    }
}

/// Largest relative mismatch between `<analytic, v>` and the central
/// difference of `f` along `v`, over `directions` random unit-range `v`.
pub fn directional_check(f: impl Fn(&[f64]) -> f64, point: &[f64], analytic: &[f64], directions: usize, step: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..directions {
        let v: Vec<f64> = (0..point.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted = |s: f64| -> Vec<f64> { point.iter().zip(&v).map(|(p, d)| p + s * d).collect() };
        let numeric = (f(&shifted(step)) - f(&shifted(-step))) / (2.0 * step);
        let exact: f64 = analytic.iter().zip(&v).map(|(a, d)| a * d).sum();
        worst = worst.max((exact - numeric).abs() / exact.abs().max(numeric.abs()).max(1e-12));
    }
    worst
}

type Forward<'a> = dyn Fn(&ModuleParams<f64>, &[Tensor<f64>]) -> Result<Tensor<f64>> + 'a;
type Backward<'a> =
    dyn Fn(&ModuleParams<f64>, &[Tensor<f64>], &Tensor<f64>, &mut ModuleParams<f64>) -> Result<Vec<Tensor<f64>>> + 'a;

fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn unflatten(flat: &[f64], params: &ModuleParams<f64>, inputs: &[Tensor<f64>]) -> (ModuleParams<f64>, Vec<Tensor<f64>>) {
    let mut p = params.clone();
    let mut at = 0;
    for (_, t) in p.iter_mut() {
        let n = t.numel();
        t.data_mut().copy_from_slice(&flat[at..at + n]);
        at += n;
    }
    let xs = inputs
        .iter()
        .map(|t| {
            let n = t.numel();
            let out = Tensor::from_vec(t.shape(), flat[at..at + n].to_vec()).expect("same length");
            at += n;
            out
        })
        .collect();
    (p, xs)
}

/// Checks a layer given by `forward`/`backward` with respect to all its
/// parameters and inputs.
pub fn check_layer(
    name: &str,
    params: &ModuleParams<f64>,
    inputs: &[Tensor<f64>],
    forward: &Forward<'_>,
    backward: &Backward<'_>,
    tol: f64,
    opts: &CheckOptions,
) -> Result<CheckRow> {
    let out = forward(params, inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let r = random_tensor(out.shape(), &mut rng);
    let mut grads = params.zeros_like();
    let input_grads = backward(params, inputs, &r, &mut grads)?;
    let mut analytic = grads.flatten();
    for g in &input_grads {
        analytic.extend_from_slice(g.data());
    }
    let mut point = params.flatten();
    for x in inputs {
        point.extend_from_slice(x.data());
    }
    let f = |flat: &[f64]| -> f64 {
        let (p, xs) = unflatten(flat, params, inputs);
        forward(&p, &xs).and_then(|o| o.dot(&r)).unwrap_or(f64::NAN)
    };
    Ok(finite_diff_check(name, f, &point, &analytic, tol, opts))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Ops,
    Blocks,
    Network,
}

impl std::str::FromStr for Scope {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ops" => Ok(Scope::Ops),
            "blocks" => Ok(Scope::Blocks),
            "network" => Ok(Scope::Network),
            _ => Err(crate::Error::Config(format!("scope must be ops, blocks or network, got `{s}`"))),
        }
    }
}

pub fn run_scope(scope: Scope, opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    match scope {
        Scope::Ops => op_suite(opts),
        Scope::Blocks => block_suite(opts),
        Scope::Network => network_suite(&NetworkConfig::toy(4), 32, opts).map(|r| vec![r]),
    }
}

fn conv_check(name: &str, spec: ConvSpec, hw: (usize, usize), opts: &CheckOptions) -> Result<CheckRow> {
    let mut b = ParamBuilder::new(opts.seed);
    let conv = b.conv("conv", spec, true)?;
    let mut p: ModuleParams<f64> = b.finish();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 1);
    // Non-zero biases so their gradients are exercised at a generic point.
    for (_, t) in p.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
    }
    let x = random_tensor(Shape::new(1, spec.in_channels, hw.0, hw.1), &mut rng);
    check_layer(
        name,
        &p,
        &[x],
        &|p, xs| conv.forward(p, &xs[0]),
        &|p, xs, g, grads| Ok(vec![conv.backward(p, &xs[0], g, grads, true)?.expect("input grad")]),
        SINGLE_OP_TOL,
        opts,
    )
}

fn op_suite(opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 7);
    let none = ModuleParams::<f64>::new();
    let s = Shape::new(1, 3, 5, 4);
    let (a, b) = (random_tensor(s, &mut rng), random_tensor(s, &mut rng));

    rows.push(check_layer(
        "add",
        &none,
        &[a.clone(), b.clone()],
        &|_, xs| xs[0].add(&xs[1]),
        &|_, _, g, _| Ok(vec![g.clone(), g.clone()]),
        SINGLE_OP_TOL,
        opts,
    )?);
    rows.push(check_layer(
        "mul",
        &none,
        &[a.clone(), b.clone()],
        &|_, xs| xs[0].mul(&xs[1]),
        &|_, xs, g, _| Ok(vec![g.mul(&xs[1])?, g.mul(&xs[0])?]),
        SINGLE_OP_TOL,
        opts,
    )?);
    rows.push(conv_check("conv3x3", ConvSpec::full(3, 4, 3, 3), (6, 6), opts)?);
    rows.push(conv_check("conv1x1", ConvSpec::full(4, 3, 1, 1), (5, 7), opts)?);
    rows.push(conv_check("dwconv5x5", ConvSpec::depthwise(2, 5, 5), (7, 6), opts)?);
    rows.push(conv_check("dwconv1x11", ConvSpec::depthwise(2, 1, 11), (6, 8), opts)?);
    rows.push(conv_check("dwconv11x1", ConvSpec::depthwise(2, 11, 1), (8, 6), opts)?);
    rows.push(check_layer(
        "gelu",
        &none,
        &[a.scale(2.0)],
        &|_, xs| Ok(nn::gelu(&xs[0])),
        &|_, xs, g, _| Ok(vec![nn::gelu_backward(&xs[0], g)?]),
        SINGLE_OP_TOL,
        opts,
    )?);
    rows.push(check_layer(
        "softmax_pair",
        &none,
        &[a.scale(2.0), b.scale(2.0)],
        &|_, xs| {
            let (wa, wb) = nn::softmax_pair(&xs[0], &xs[1])?;
            Tensor::concat_channels(&[&wa, &wb])
        },
        &|_, xs, g, _| {
            let (wa, wb) = nn::softmax_pair(&xs[0], &xs[1])?;
            let gs = g.split_channels(&[3, 3])?;
            let (ga, gb) = nn::softmax_pair_backward(&wa, &wb, &gs[0], &gs[1])?;
            Ok(vec![ga, gb])
        },
        SINGLE_OP_TOL,
        opts,
    )?);
    {
        let mut bld = ParamBuilder::new(opts.seed);
        let ln = bld.layer_norm("norm", 4)?;
        let mut p: ModuleParams<f64> = bld.finish();
        for (_, t) in p.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
        }
        let x = random_tensor(Shape::new(2, 4, 3, 3), &mut rng);
        rows.push(check_layer(
            "layer_norm",
            &p,
            &[x],
            &|p, xs| ln.forward(p, &xs[0]),
            &|p, xs, g, grads| {
                let (_, t) = ln.forward_traced(p, &xs[0])?;
                Ok(vec![ln.backward(p, &t, g, grads)?])
            },
            SINGLE_OP_TOL,
            opts,
        )?);
    }
    let even = random_tensor(Shape::new(1, 2, 4, 6), &mut rng);
    rows.push(check_layer(
        "space_to_depth",
        &none,
        std::slice::from_ref(&even),
        &|_, xs| nn::space_to_depth(&xs[0]),
        &|_, _, g, _| Ok(vec![nn::depth_to_space(g)?]),
        SINGLE_OP_TOL,
        opts,
    )?);
    let deep = random_tensor(Shape::new(1, 8, 2, 3), &mut rng);
    rows.push(check_layer(
        "depth_to_space",
        &none,
        &[deep],
        &|_, xs| nn::depth_to_space(&xs[0]),
        &|_, _, g, _| Ok(vec![nn::space_to_depth(g)?]),
        SINGLE_OP_TOL,
        opts,
    )?);
    {
        let mut bld = ParamBuilder::new(opts.seed);
        let down = nn::Downsample {
            conv: bld.conv("down", ConvSpec::full(8, 4, 1, 1), true)?,
        };
        let up = nn::Upsample {
            conv: bld.conv("up", ConvSpec::full(2, 4, 1, 1), true)?,
        };
        let p: ModuleParams<f64> = bld.finish();
        rows.push(check_layer(
            "downsample",
            &p,
            std::slice::from_ref(&even),
            &|p, xs| down.forward(p, &xs[0]),
            &|p, xs, g, grads| {
                let (_, u) = down.forward_traced(p, &xs[0])?;
                Ok(vec![down.backward(p, &u, g, grads)?])
            },
            SINGLE_OP_TOL,
            opts,
        )?);
        rows.push(check_layer(
            "upsample",
            &p,
            std::slice::from_ref(&even),
            &|p, xs| up.forward(p, &xs[0]),
            &|p, xs, g, grads| Ok(vec![up.backward(p, &xs[0], g, grads)?]),
            SINGLE_OP_TOL,
            opts,
        )?);
    }
    let sq = Shape::new(1, 2, 16, 16);
    let (q, k) = (random_tensor(sq, &mut rng), random_tensor(sq, &mut rng));
    rows.push(check_layer(
        "spectral_product",
        &none,
        &[q, k],
        &|_, xs| spectral::spectral_product(&xs[0], &xs[1], 8),
        &|_, xs, g, _| {
            Ok(vec![
                spectral::spectral_product_adjoint(g, &xs[1], 8)?,
                spectral::spectral_product_adjoint(g, &xs[0], 8)?,
            ])
        },
        SINGLE_OP_TOL,
        opts,
    )?);
    let small = random_tensor(Shape::new(1, 2, 3, 4), &mut rng);
    rows.push(check_layer(
        "pad_mirror",
        &none,
        &[small],
        &|_, xs| Ok(xs[0].pad_mirror(1, 5, 2, 6)),
        &|_, _, g, _| Ok(vec![g.unpad_mirror_adjoint(1, 5, 2, 6)]),
        SINGLE_OP_TOL,
        opts,
    )?);
    {
        // Offsets of at least 0.1 keep every coordinate away from the kink.
        let target = random_tensor(s, &mut rng);
        let pred = target.zip_with(&a, "offset", |t, o| t + o.signum() * (0.1 + o.abs()))?;
        let fwd = |_: &ModuleParams<f64>, xs: &[Tensor<f64>]| -> Result<Tensor<f64>> {
            let (l, _) = l1_loss(&xs[0], &target)?;
            Ok(Tensor::full(Shape::new(1, 1, 1, 1), l))
        };
        rows.push(check_layer(
            "l1_loss",
            &none,
            &[pred],
            &fwd,
            &|_, xs, g, _| Ok(vec![l1_loss(&xs[0], &target)?.1.scale(g.data()[0])]),
            SINGLE_OP_TOL,
            opts,
        )?);
    }
    Ok(rows)
}

/// Randomizes every parameter slightly so zero-initialized biases and unit
/// norm gains do not hide mistakes.
fn jitter(p: &mut ModuleParams<f64>, rng: &mut ChaCha8Rng, amount: f64) {
    for (_, t) in p.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-amount..amount));
    }
}

/// Builds one layer in its own registry (so sampled coordinates belong to
/// it) and jitters its parameters.
fn built<L>(
    opts: &CheckOptions,
    rng: &mut ChaCha8Rng,
    f: impl FnOnce(&mut ParamBuilder) -> Result<L>,
) -> Result<(L, ModuleParams<f64>)> {
    let mut b = ParamBuilder::new(opts.seed);
    let layer = f(&mut b)?;
    let mut p = b.finish();
    jitter(&mut p, rng, 0.1);
    Ok((layer, p))
}

fn block_suite(opts: &CheckOptions) -> Result<Vec<CheckRow>> {
    let cfg = FemConfig {
        channels: 4,
        branch_ratio: 0.25,
        ..FemConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 11);
    let (fgfe, p_fgfe) = built(opts, &mut rng, |b| Fgfe::build(b, "fgfe", &cfg))?;
    let (mlfe, p_mlfe) = built(opts, &mut rng, |b| Mlfe::build(b, "mlfe", &cfg))?;
    let (afmm, p_afmm) = built(opts, &mut rng, |b| Afmm::build(b, "afmm", 4))?;
    let (ffn, p_ffn) = built(opts, &mut rng, |b| Ffn::build(b, "ffn", &cfg))?;
    let (fem, p_fem) = built(opts, &mut rng, |b| Fem::build(b, "fem", &cfg))?;
    let s = Shape::new(1, 4, 16, 16);
    let (x, y) = (random_tensor(s, &mut rng), random_tensor(s, &mut rng));
    let mut rows = Vec::new();
    rows.push(check_layer(
        "fgfe",
        &p_fgfe,
        std::slice::from_ref(&x),
        &|p, xs| fgfe.forward(p, &xs[0]),
        &|p, xs, g, grads| {
            let (_, t) = fgfe.forward_traced(p, &xs[0])?;
            Ok(vec![fgfe.backward(p, &xs[0], &t, g, grads)?])
        },
        COMPOSITE_TOL,
        opts,
    )?);
    rows.push(check_layer(
        "mlfe",
        &p_mlfe,
        std::slice::from_ref(&x),
        &|p, xs| mlfe.forward(p, &xs[0]),
        &|p, xs, g, grads| {
            let (_, t) = mlfe.forward_traced(p, &xs[0])?;
            Ok(vec![mlfe.backward(p, &t, g, grads)?])
        },
        COMPOSITE_TOL,
        opts,
    )?);
    rows.push(check_layer(
        "afmm",
        &p_afmm,
        &[x.clone(), y],
        &|p, xs| afmm.forward(p, &xs[0], &xs[1]),
        &|p, xs, g, grads| {
            let (_, t) = afmm.forward_traced(p, &xs[0], &xs[1])?;
            let (ge, gd) = afmm.backward(p, &xs[0], &xs[1], &t, g, grads)?;
            Ok(vec![ge, gd])
        },
        COMPOSITE_TOL,
        opts,
    )?);
    rows.push(check_layer(
        "ffn",
        &p_ffn,
        std::slice::from_ref(&x),
        &|p, xs| ffn.forward(p, &xs[0]),
        &|p, xs, g, grads| {
            let (_, t) = ffn.forward_traced(p, &xs[0])?;
            Ok(vec![ffn.backward(p, &xs[0], &t, g, grads)?])
        },
        COMPOSITE_TOL,
        opts,
    )?);
    rows.push(check_layer(
        "fem",
        &p_fem,
        &[x],
        &|p, xs| fem.forward(p, &xs[0]),
        &|p, xs, g, grads| {
            let (_, t) = fem.forward_traced(p, &xs[0])?;
            Ok(vec![fem.backward(p, &xs[0], &t, g, grads)?])
        },
        COMPOSITE_TOL,
        opts,
    )?);
    Ok(rows)
}

/// Whole-network check on a `side x side` input.
pub fn network_suite(config: &NetworkConfig, side: usize, opts: &CheckOptions) -> Result<CheckRow> {
    let (net, mut p) = D2Net::build::<f64>(config, opts.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 13);
    jitter(&mut p, &mut rng, 0.05);
    let x = Tensor::from_fn(Shape::new(1, 3, side, side), |_| rng.random_range(0.0..1.0));
    check_layer(
        "network",
        &p,
        &[x],
        &|p, xs| net.forward(p, &xs[0]),
        &|p, xs, g, grads| {
            let (_, t) = net.forward_traced(p, &xs[0])?;
            Ok(vec![net.backward(p, &xs[0], &t, g, grads)?])
        },
        COMPOSITE_TOL,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let point: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let analytic: Vec<f64> = point.iter().map(|x| 2.0 * x).collect();
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let row = finite_diff_check("sq", f, &point, &analytic, 1e-10, &CheckOptions::default());
        assert!(row.passed(), "{row}");
        assert_eq!(row.coords, 10);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let point = vec![0.5, -0.25, 1.5];
        let wrong = vec![1.0, -0.5, 3.3];
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let row = finite_diff_check("sq", f, &point, &wrong, 1e-4, &CheckOptions::default());
        assert!(!row.passed());
        assert_eq!(row.worst, 2);
    }

    #[test]
    fn subset_for_large_inputs() {
        let point = vec![0.1; 5000];
        let analytic = vec![0.2; 5000];
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let row = finite_diff_check("big", f, &point, &analytic, 1e-8, &CheckOptions::default());
        assert_eq!(row.coords, 400);
        assert!(row.passed());
    }

    #[test]
    fn gelu_is_tight() {
        let point: Vec<f64> = (0..41).map(|i| -2.0 + i as f64 * 0.1).collect();
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 41), point.clone()).unwrap();
        let ones = Tensor::full(x.shape(), 1.0);
        let analytic = nn::gelu_backward(&x, &ones).unwrap().into_vec();
        let f = |v: &[f64]| nn::gelu(&Tensor::from_vec(Shape::new(1, 1, 1, 41), v.to_vec()).unwrap()).sum();
        let row = finite_diff_check("gelu", f, &point, &analytic, 1e-7, &CheckOptions::default());
        assert!(row.passed(), "{row}");
    }

    #[test]
    fn csv_row() {
        let row = CheckRow {
            name: "x".into(),
            coords: 3,
            max_rel: 1e-9,
            mean_rel: 1e-10,
            worst: 1,
            tol: 1e-6,
        };
        assert_eq!(row.csv(), "x,3,1e-9,1e-10,1e-6,1,pass");
    }
}
