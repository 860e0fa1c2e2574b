use super::{Ffn, FfnTrace, Fgfe, FgfeTrace, Mlfe, MlfeTrace, FemConfig, NormKind};
use crate::error::Result;
use crate::memory;
use crate::nn::norm::LayerNormTrace;
use crate::nn::{LayerNorm, ModuleParams, ParamBuilder};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Feature extraction module: three pre-norm residual stages,
/// `x += FGFE(norm(x))`, `x += MLFE(norm(x))`, `x += FFN(norm(x))`.
#[derive(Clone, Debug)]
pub struct Fem {
    pub norms: [Option<LayerNorm>; 3],
    pub fgfe: Fgfe,
    pub mlfe: Mlfe,
    pub ffn: Ffn,
}

pub struct StageTrace<T: Scalar> {
    norm: Option<LayerNormTrace<T>>,
    /// Normalized stage input (the sub-block's input).
    normed: Option<Tensor<T>>,
}

pub struct FemTrace<T: Scalar> {
    stages: [StageTrace<T>; 3],
    /// Input of the last stage.
    x2: Tensor<T>,
    fgfe: FgfeTrace<T>,
    mlfe: MlfeTrace<T>,
    ffn: FfnTrace<T>,
}

impl Fem {
    pub fn build(b: &mut ParamBuilder, name: &str, cfg: &FemConfig) -> Result<Self> {
        cfg.validate()?;
        b.scope(name, |b| {
            let norm = |i: usize, b: &mut ParamBuilder| -> Result<Option<LayerNorm>> {
                match cfg.norm {
                    NormKind::LayerNorm => Ok(Some(b.layer_norm(&format!("norm{i}"), cfg.channels)?)),
                    NormKind::None => Ok(None),
                }
            };
            let norms = [norm(0, b)?, norm(1, b)?, norm(2, b)?];
            Ok(Fem {
                norms,
                fgfe: Fgfe::build(b, "fgfe", cfg)?,
                mlfe: Mlfe::build(b, "mlfe", cfg)?,
                ffn: Ffn::build(b, "ffn", cfg)?,
            })
        })
    }

    fn normed<T: Scalar>(&self, i: usize, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Option<Tensor<T>>> {
        self.norms[i].as_ref().map(|n| n.forward(p, x)).transpose()
    }

    pub fn forward<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        memory::scope("fem", || {
            let n0 = self.normed(0, p, x)?;
            let mut out = self.fgfe.forward(p, n0.as_ref().unwrap_or(x))?;
            drop(n0);
            out.add_assign(x)?;
            let n1 = self.normed(1, p, &out)?;
            let d = self.mlfe.forward(p, n1.as_ref().unwrap_or(&out))?;
            drop(n1);
            out.add_assign(&d)?;
            drop(d);
            let n2 = self.normed(2, p, &out)?;
            let d = self.ffn.forward(p, n2.as_ref().unwrap_or(&out))?;
            drop(n2);
            out.add_assign(&d)?;
            Ok(out)
        })
    }

    fn stage_in<T: Scalar>(&self, i: usize, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<StageTrace<T>> {
        match &self.norms[i] {
            Some(n) => {
                let (y, t) = n.forward_traced(p, x)?;
                Ok(StageTrace {
                    norm: Some(t),
                    normed: Some(y),
                })
            }
            None => Ok(StageTrace { norm: None, normed: None }),
        }
    }

    pub fn forward_traced<T: Scalar>(&self, p: &ModuleParams<T>, x: &Tensor<T>) -> Result<(Tensor<T>, FemTrace<T>)> {
        let s0 = self.stage_in(0, p, x)?;
        let (d0, fgfe) = self.fgfe.forward_traced(p, s0.normed.as_ref().unwrap_or(x))?;
        let x1 = x.add(&d0)?;
        drop(d0);
        let s1 = self.stage_in(1, p, &x1)?;
        let (d1, mlfe) = self.mlfe.forward_traced(p, s1.normed.as_ref().unwrap_or(&x1))?;
        let x2 = x1.add(&d1)?;
        drop(d1);
        let s2 = self.stage_in(2, p, &x2)?;
        let (d2, ffn) = self.ffn.forward_traced(p, s2.normed.as_ref().unwrap_or(&x2))?;
        let out = x2.add(&d2)?;
        Ok((
            out,
            FemTrace {
                stages: [s0, s1, s2],
                x2,
                fgfe,
                mlfe,
                ffn,
            },
        ))
    }

    /// Adds the gradient through the norm of stage `i` onto the residual
    /// gradient `g`.
    fn through_norm<T: Scalar>(
        &self,
        i: usize,
        p: &ModuleParams<T>,
        t: &StageTrace<T>,
        g_sub: Tensor<T>,
        g: &mut Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<()> {
        match (&self.norms[i], &t.norm) {
            (Some(n), Some(nt)) => g.add_assign(&n.backward(p, nt, &g_sub, grads)?),
            _ => g.add_assign(&g_sub),
        }
    }

    pub fn backward<T: Scalar>(
        &self,
        p: &ModuleParams<T>,
        x: &Tensor<T>,
        t: &FemTrace<T>,
        grad_out: &Tensor<T>,
        grads: &mut ModuleParams<T>,
    ) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        let [s0, s1, s2] = &t.stages;
        let g_sub = self.ffn.backward(p, s2.normed.as_ref().unwrap_or(&t.x2), &t.ffn, &g, grads)?;
        self.through_norm(2, p, s2, g_sub, &mut g, grads)?;
        let g_sub = self.mlfe.backward(p, &t.mlfe, &g, grads)?;
        self.through_norm(1, p, s1, g_sub, &mut g, grads)?;
        let g_sub = self.fgfe.backward(p, s0.normed.as_ref().unwrap_or(x), &t.fgfe, &g, grads)?;
        self.through_norm(0, p, s0, g_sub, &mut g, grads)?;
        Ok(g)
    }
}
