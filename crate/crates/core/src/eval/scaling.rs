//! Peak activation memory of the Fourier-domain block versus the naive
//! attention reference, and log-log fits of how each grows with `H * W`.

use super::attention::NaiveAttention;
use crate::blocks::{FemConfig, Fgfe};
use crate::error::{Error, Result};
use crate::memory::MemoryLedger;
use crate::nn::ParamBuilder;
use crate::tensor::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn probe_input(channels: usize, h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(Shape::new(1, channels, h, w), |_| rng.random_range(-1.0..1.0))
}

/// Peak live elements during one inference forward of an FGFE block,
/// including its output but not its input or parameters.
pub fn fgfe_peak_floats(cfg: &FemConfig, h: usize, w: usize, seed: u64) -> Result<u64> {
    let mut b = ParamBuilder::new(seed);
    let block = Fgfe::build(&mut b, "fgfe", cfg)?;
    let p = b.finish::<f32>();
    let x = probe_input(cfg.channels, h, w, seed);
    let (out, report) = MemoryLedger::measure("fgfe", || block.forward(&p, &x));
    out?;
    Ok(report.peak_floats)
}

/// Same measurement for the naive reference; refuses above the guard.
pub fn naive_peak_floats(channels: usize, h: usize, w: usize, seed: u64) -> Result<u64> {
    let mut b = ParamBuilder::new(seed);
    let block = NaiveAttention::build(&mut b, "naive", channels)?;
    let p = b.finish::<f32>();
    let x = probe_input(channels, h, w, seed);
    let (out, report) = MemoryLedger::measure("naive", || block.forward(&p, &x));
    out?;
    Ok(report.peak_floats)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub label: &'static str,
    pub h: usize,
    pub w: usize,
    /// `None` when the size was refused.
    pub peak_floats: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub channels: usize,
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    fn fit(&self, label: &str) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.label == label)
            .filter_map(|r| r.peak_floats.map(|p| ((r.h * r.w) as f64, p as f64)))
            .collect();
        fit_exponent(&pts)
    }

    pub fn fgfe_exponent(&self) -> Option<f64> {
        self.fit("fgfe")
    }

    pub fn naive_exponent(&self) -> Option<f64> {
        self.fit("naive")
    }

    pub fn peak(&self, label: &str, h: usize, w: usize) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.h == h && r.w == w)
            .and_then(|r| r.peak_floats)
    }

    /// Naive-to-FGFE peak ratio at one size, when both were measured.
    pub fn ratio_at(&self, h: usize, w: usize) -> Option<f64> {
        Some(self.peak("naive", h, w)? as f64 / self.peak("fgfe", h, w)? as f64)
    }

    /// Columns `label,H,W,peak_floats,refused`; refused rows leave
    /// `peak_floats` empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,H,W,peak_floats,refused\n");
        for r in &self.rows {
            let peak = r.peak_floats.map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.label,
                r.h,
                r.w,
                peak,
                u8::from(r.peak_floats.is_none())
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let show = |e: Option<f64>| e.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
        format!(
            "fgfe_exponent={}\nnaive_exponent={}\n",
            show(self.fgfe_exponent()),
            show(self.naive_exponent())
        )
    }
}

/// Measures the FGFE block at every size in `fgfe_sizes` and the naive
/// reference at every size in `naive_sizes` (sizes above the guard are
/// recorded as refused), both with `channels` channels.
pub fn memory_scaling_report(
    fgfe_sizes: &[(usize, usize)],
    naive_sizes: &[(usize, usize)],
    channels: usize,
    seed: u64,
) -> Result<ScalingReport> {
    let cfg = FemConfig::default().with_channels(channels);
    let mut rows = Vec::new();
    for &(h, w) in fgfe_sizes {
        rows.push(ScalingRow {
            label: "fgfe",
            h,
            w,
            peak_floats: Some(fgfe_peak_floats(&cfg, h, w, seed)?),
        });
    }
    for &(h, w) in naive_sizes {
        let peak = match naive_peak_floats(channels, h, w, seed) {
            Ok(p) => Some(p),
            Err(Error::QuadraticRefused { .. }) => None,
            Err(e) => return Err(e),
        };
        rows.push(ScalingRow {
            label: "naive",
            h,
            w,
            peak_floats: peak,
        });
    }
    Ok(ScalingReport { channels, rows })
}
