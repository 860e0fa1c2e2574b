//! Multi-scale local features: the channels are split into a square-kernel
//! branch, a horizontal band branch, a vertical band branch (each `g`
//! channels, depthwise) and an identity branch, then concatenated back.

use super::FemConfig;
use crate::error::{Error, Result};
use crate::memory;
use crate::nn::{ConvSpec, Conv2d, ModuleParams, ParamBuilder};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Mlfe {
    pub channels: usize,
    pub branch: usize,
    /// Square, `1 x k_b`, `k_b x 1`; empty when `g == 0`.
    pub convs: Vec<Conv2d>,
}

pub struct MlfeTrace<T: Scalar> {
    /// Split inputs, one per conv branch.
    pub parts: Vec<Tensor<T>>,
}

impl Mlfe {
    pub fn build(b: &mut ParamBuilder, name: &str, cfg: &FemConfig) -> Result<Self> {
        cfg.validate()?;
        let g = cfg.branch_channels();
        let (ks, kb) = (cfg.square_kernel, cfg.band_kernel);
        b.scope(name, |b| {
            let convs = if g == 0 {
                Vec::new()
            } else {
                vec![
                    b.conv("square", ConvSpec::depthwise(g, ks, ks), true)?,
                    b.conv("band_w", ConvSpec::depthwise(g, 1, kb), true)?,
                    b.conv("band_h", ConvSpec::depthwise(g, kb, 1), true)?,
                ]
            };
            Ok(Mlfe {
                channels: cfg.channels,
                branch: g,
                convs,
            })
        })
    }

    fn sizes(&self) -> Vec<usize> {
        let g = self.branch;
        let rest = self.channels - 3 * g;
        [g, g, g, rest].into_iter().filter(|&s| s > 0).collect()
    }

    fn check(&self, x: &Tensor<impl Scalar>) -> Result<()> {
        if x.shape().c != self.channels {
            return Err(Error::layer(
                "mlfe",
                format!("input has {} channels, block expects {}", x.shape().c, self.channels),
            ));
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(x)?;
        if self.branch == 0 {
            return Ok(x.clone());
        }
        memory::scope("mlfe", || {
            let mut parts = x.split_channels(&self.sizes())?;
            for (part, conv) in parts.iter_mut().zip(&self.convs) {
                *part = conv.forward(p, part)?;
            }
            let refs: Vec<&Tensor<T>> = parts.iter().collect();
            Tensor::concat_channels(&refs)
        })
    }

    pub fn forward_traced<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, MlfeTrace<T>)> {
        self.check(x)?;
        if self.branch == 0 {
            return Ok((x.clone(), MlfeTrace { parts: Vec::new() }));
        }
        let mut parts = x.split_channels(&self.sizes())?;
        let mut outs = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            outs.push(match self.convs.get(i) {
                Some(conv) => conv.forward(p, part)?,
                None => part.clone(),
            });
        }
        let refs: Vec<&Tensor<T>> = outs.iter().collect();
        let out = Tensor::concat_channels(&refs)?;
        parts.truncate(3);
        Ok((out, MlfeTrace { parts }))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        t: &MlfeTrace<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        if self.branch == 0 {
            return Ok(grad_out.clone());
        }
        let mut g = grad_out.split_channels(&self.sizes())?;
        for (i, conv) in self.convs.iter().enumerate() {
            g[i] = conv.backward(p, &t.parts[i], &g[i], grads, true)?.expect("input grad");
        }
        let refs: Vec<&Tensor<T>> = g.iter().collect();
        Tensor::concat_channels(&refs)
    }
}
