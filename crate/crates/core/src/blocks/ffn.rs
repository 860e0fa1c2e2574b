use super::FemConfig;
use crate::error::Result;
use crate::memory;
use crate::nn::{gelu, gelu_backward, ConvSpec, Conv2d, ModuleParams, ParamBuilder};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `1x1(GELU(3x3(x)))`: expand to the hidden width, activate, contract.
#[derive(Clone, Debug)]
pub struct Ffn {
    pub expand: Conv2d,
    pub contract: Conv2d,
}

pub struct FfnTrace<T: Scalar> {
    pub hidden: Tensor<T>,
    pub activated: Tensor<T>,
}

impl Ffn {
    pub fn build(b: &mut ParamBuilder, name: &str, cfg: &FemConfig) -> Result<Self> {
        cfg.validate()?;
        let (c, h) = (cfg.channels, cfg.ffn_hidden());
        b.scope(name, |b| {
            Ok(Ffn {
                expand: b.conv("expand", ConvSpec::full(c, h, 3, 3), true)?,
                contract: b.conv("contract", ConvSpec::full(h, c, 1, 1), true)?,
            })
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.expand.spec.out_channels
    }

    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        memory::scope("ffn", || {
            let hidden = self.expand.forward(p, x)?;
            let act = gelu(&hidden);
            drop(hidden);
            self.contract.forward(p, &act)
        })
    }

    pub fn forward_traced<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, FfnTrace<T>)> {
        let hidden = self.expand.forward(p, x)?;
        let activated = gelu(&hidden);
        let out = self.contract.forward(p, &activated)?;
        Ok((out, FfnTrace { hidden, activated }))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        x: &Tensor<T>,
        t: &FfnTrace<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        let g_act = self.contract.backward(p, &t.activated, grad_out, grads, true)?.expect("input grad");
        let g_hidden = gelu_backward(&t.hidden, &g_act)?;
        Ok(self.expand.backward(p, x, &g_hidden, grads, true)?.expect("input grad"))
    }
}
