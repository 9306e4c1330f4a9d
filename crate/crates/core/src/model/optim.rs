use serde::{Deserialize, Serialize};

use super::{Gradients, ModelState};
use crate::error::{arg, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Momentum { lr: f64, beta: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn sgd(lr: f64) -> Self {
        OptimizerKind::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Stable numeric id recorded in checkpoints.
    pub fn id(&self) -> u32 {
        match self {
            OptimizerKind::Sgd { .. } => 0,
            OptimizerKind::Momentum { .. } => 1,
            OptimizerKind::Adam { .. } => 2,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { lr } | OptimizerKind::Momentum { lr, .. } | OptimizerKind::Adam { lr, .. } => lr,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::Sgd { lr } => lr >= 0.0 && lr.is_finite(),
            OptimizerKind::Momentum { lr, beta } => lr >= 0.0 && lr.is_finite() && (0.0..1.0).contains(&beta),
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                lr >= 0.0
                    && lr.is_finite()
                    && (0.0..1.0).contains(&beta1)
                    && (0.0..1.0).contains(&beta2)
                    && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(arg(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone, Default)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Slot {
    fn step(&mut self, kind: OptimizerKind, t: u64, params: &mut [f64], grad: &[f64]) {
        match kind {
            OptimizerKind::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Momentum { lr, beta } => {
                self.m.resize(params.len(), 0.0);
                for ((p, g), m) in params.iter_mut().zip(grad).zip(self.m.iter_mut()) {
                    *m = beta * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                self.m.resize(params.len(), 0.0);
                self.v.resize(params.len(), 0.0);
                let c1 = 1.0 - beta1.powi(t as i32);
                let c2 = 1.0 - beta2.powi(t as i32);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Applies gradients to `e_v`, `e_r` and (optionally) the bias.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    steps: u64,
    slots: [Slot; 3],
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            steps: 0,
            slots: Default::default(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step(&mut self, state: &mut ModelState, grads: &Gradients) -> Result<()> {
        check(&state.e_v, &grads.e_v)?;
        check(&state.e_r, &grads.e_r)?;
        self.steps += 1;
        let t = self.steps;
        let [sv, sr, sb] = &mut self.slots;
        sv.step(self.kind, t, state.e_v.as_mut_slice(), grads.e_v.as_slice());
        sr.step(self.kind, t, state.e_r.as_mut_slice(), grads.e_r.as_slice());
        if state.config.train_bias {
            let mut b = [state.bias];
            sb.step(self.kind, t, &mut b, &[grads.bias]);
            state.bias = b[0];
        }
        state.invalidate();
        Ok(())
    }
}

fn check(p: &Matrix, g: &Matrix) -> Result<()> {
    if (p.rows(), p.cols()) != (g.rows(), g.cols()) {
        return Err(crate::error::shape("gradient shape differs from parameter shape"));
    }
    Ok(())
}
