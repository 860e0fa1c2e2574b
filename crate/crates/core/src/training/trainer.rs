use super::data::make_batch;
use super::degrade::{degrade, DegradationSpec};
use super::loss::l1_loss;
use super::optim::{AdamConfig, OptimState};
use crate::error::{Error, Result};
use crate::eval::{psnr, ssim};
use crate::network::D2Net;
use crate::nn::ModuleParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimum number of clean training images.
pub const MIN_TRAIN_IMAGES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub spec: DegradationSpec,
    pub iters: usize,
    pub batch: usize,
    pub crop: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Held-out evaluation every this many steps (and after the last).
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn new(spec: DegradationSpec) -> Self {
        TrainConfig {
            spec,
            iters: 2000,
            batch: 4,
            crop: 64,
            adam: AdamConfig::default(),
            seed: 0,
            eval_every: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    /// `(psnr, ssim)` of the restored held-out set, on evaluation steps.
    pub eval: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub degraded_psnr: f64,
    pub restored_psnr: f64,
    pub degraded_ssim: f64,
    pub restored_ssim: f64,
}

impl EvalSummary {
    pub fn gain_db(&self) -> f64 {
        self.restored_psnr - self.degraded_psnr
    }
}

pub struct TrainOutcome<T: Scalar> {
    pub params: ModuleParams<T>,
    pub trace: Vec<TrainRecord>,
    pub eval: EvalSummary,
}

impl<T: Scalar> TrainOutcome<T> {
    /// Columns `step,lr,loss,eval_psnr,eval_ssim`; the eval columns are
    /// empty on steps without evaluation.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("step,lr,loss,eval_psnr,eval_ssim\n");
        for r in &self.trace {
            let (p, s) = r.eval.map(|(p, s)| (p.to_string(), s.to_string())).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", r.step, r.lr, r.loss, p, s));
        }
        out
    }
}

/// Mean training loss over the `window` steps ending at `step` (1-based).
pub fn smoothed_loss(trace: &[TrainRecord], step: usize, window: usize) -> Option<f64> {
    if step == 0 || step > trace.len() || window == 0 {
        return None;
    }
    let lo = step.saturating_sub(window);
    let part = &trace[lo..step];
    Some(part.iter().map(|r| r.loss).sum::<f64>() / part.len() as f64)
}

fn mean_metrics<T: Scalar>(outputs: &[Tensor<T>], clean: &[Tensor<T>]) -> Result<(f64, f64)> {
    let mut p = 0.0;
    let mut s = 0.0;
    for (o, c) in outputs.iter().zip(clean) {
        // An exact match is capped so that averages stay finite.
        p += psnr(o, c, 1.0)?.db().min(100.0);
        s += ssim(o, c)?;
    }
    let n = outputs.len() as f64;
    Ok((p / n, s / n))
}

fn evaluate<T: Scalar>(net: &D2Net, params: &ModuleParams<T>, degraded: &[Tensor<T>], clean: &[Tensor<T>]) -> Result<(f64, f64)> {
    let restored = degraded
        .iter()
        .map(|d| Ok(net.forward_full_resolution(params, d)?.map(|v| v.max(T::zero()).min(T::one()))))
        .collect::<Result<Vec<_>>>()?;
    mean_metrics(&restored, clean)
}

/// Trains `params` on random crops of `train` corrupted by `cfg.spec`.
///
/// Training starts from the residual identity: the tail conv is zeroed
/// first, so with `iters == 0` the network returns its input. Held-out
/// images are degraded once with a seed derived from `cfg.seed`; the final
/// summary compares the restored and degraded held-out sets against the
/// clean ones. The run is a pure function of its arguments.
pub fn train_toy<T: Scalar>(
    net: &D2Net,
    mut params: ModuleParams<T>,
    cfg: &TrainConfig,
    train: &[Tensor<T>],
    held_out: &[Tensor<T>],
    mut on_step: impl FnMut(&TrainRecord),
) -> Result<TrainOutcome<T>> {
    if train.len() < MIN_TRAIN_IMAGES {
        return Err(Error::InsufficientData {
            found: train.len(),
            required: MIN_TRAIN_IMAGES,
        });
    }
    if held_out.is_empty() {
        return Err(Error::InsufficientData { found: 0, required: 1 });
    }
    net.zero_tail(&mut params);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_e7a1);
    let degraded: Vec<Tensor<T>> = held_out.iter().map(|c| degrade(c, &cfg.spec, &mut eval_rng)).collect();
    let (degraded_psnr, degraded_ssim) = mean_metrics(&degraded, held_out)?;

    let mut state = OptimState::new(&params, cfg.adam, cfg.iters as u64);
    let mut trace = Vec::with_capacity(cfg.iters);
    for step in 1..=cfg.iters {
        let batch_seed = cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(step as u64);
        let (input, target) = make_batch(train, &cfg.spec, cfg.crop, cfg.batch, batch_seed)?;
        let (pred, net_trace) = net.forward_traced(&params, &input)?;
        let (loss, grad) = l1_loss(&pred, &target)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        drop(pred);
        let mut grads = params.zeros_like();
        net.backward(&params, &input, &net_trace, &grad, &mut grads)?;
        drop(net_trace);
        let lr = state.step(&mut params, &grads)?;
        let eval = if (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.iters {
            Some(evaluate(net, &params, &degraded, held_out)?)
        } else {
            None
        };
        let record = TrainRecord { step, lr, loss, eval };
        on_step(&record);
        trace.push(record);
    }
    let (restored_psnr, restored_ssim) = match trace.last().and_then(|r| r.eval) {
        Some(e) => e,
        None => evaluate(net, &params, &degraded, held_out)?,
    };
    Ok(TrainOutcome {
        params,
        trace,
        eval: EvalSummary {
            degraded_psnr,
            restored_psnr,
            degraded_ssim,
            restored_ssim,
        },
    })
}
