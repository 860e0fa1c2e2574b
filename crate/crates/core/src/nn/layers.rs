//! Parameterized layers. A layer holds only [`ParamId`]s into a
//! [`ModuleParams`], so one graph works with any precision and with any
//! checkpoint of the matching layout.

use crate::error::Result;
use crate::nn::conv::{self, ConvSpec};
use crate::nn::norm::{self, LayerNormTrace};
use crate::nn::params::{ModuleParams, ParamId};
use crate::nn::resample::{depth_to_space, space_to_depth};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub name: String,
    pub spec: ConvSpec,
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv2d {
    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv::conv2d_named(&self.name, x, &self.spec, p.get(self.weight), self.bias.map(|b| p.get(b)))
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx` when
    /// `need_input` is set.
    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
        need_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        conv::conv2d_grad_weight(&self.name, x, &self.spec, grad_out, grads.get_mut(self.weight).data_mut())?;
        if let Some(b) = self.bias {
            conv::conv2d_grad_bias(grad_out, grads.get_mut(b).data_mut());
        }
        if !need_input {
            return Ok(None);
        }
        conv::conv2d_grad_input(&self.name, x.shape(), &self.spec, p.get(self.weight), grad_out).map(Some)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub name: String,
    pub channels: usize,
    pub gain: ParamId,
    pub offset: ParamId,
}

impl LayerNorm {
    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        norm::layer_norm(x, p.get(self.gain), p.get(self.offset))
    }

    pub fn forward_traced<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        x: &Tensor<T>,
    ) -> Result<(Tensor<T>, LayerNormTrace<T>)> {
        norm::layer_norm_traced(x, p.get(self.gain), p.get(self.offset))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        trace: &LayerNormTrace<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        let mut gg = vec![T::zero(); self.channels];
        let mut go = vec![T::zero(); self.channels];
        let gx = norm::layer_norm_backward(trace, p.get(self.gain), grad_out, &mut gg, &mut go)?;
        for (a, b) in grads.get_mut(self.gain).data_mut().iter_mut().zip(gg) {
            *a += b;
        }
        for (a, b) in grads.get_mut(self.offset).data_mut().iter_mut().zip(go) {
            *a += b;
        }
        Ok(gx)
    }
}

/// Pixel unshuffle (factor 2) then a 1x1 conv `4C -> 2C`.
#[derive(Clone, Debug)]
pub struct Downsample {
    pub conv: Conv2d,
}

impl Downsample {
    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = space_to_depth(x)?;
        self.conv.forward(p, &s)
    }

    /// Returns the output and the unshuffled input kept for backward.
    pub fn forward_traced<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let s = space_to_depth(x)?;
        let y = self.conv.forward(p, &s)?;
        Ok((y, s))
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        unshuffled: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        let g = self.conv.backward(p, unshuffled, grad_out, grads, true)?.expect("input grad");
        depth_to_space(&g)
    }
}

/// A 1x1 conv `C -> 2C` then pixel shuffle (factor 2), giving `C/2` channels.
#[derive(Clone, Debug)]
pub struct Upsample {
    pub conv: Conv2d,
}

impl Upsample {
    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.conv.forward(p, x)?;
        depth_to_space(&y)
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        let g = space_to_depth(grad_out)?;
        Ok(self.conv.backward(p, x, &g, grads, true)?.expect("input grad"))
    }
}
