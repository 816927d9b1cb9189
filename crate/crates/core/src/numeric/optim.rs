use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Per-parameter moment accumulators for the configured update rule.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    first_moment: ParamSet,
    second_moment: ParamSet,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ParamSet) -> Self {
        Self {
            config,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient aborts the step before any
    /// parameter or moment is touched.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        params.check_same_layout(grads)?;
        params.check_same_layout(&self.first_moment)?;
        for block in grads.blocks() {
            if let Some(index) = block.values.iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient {
                    block: block.name.clone(),
                    index,
                });
            }
        }
        self.step += 1;
        let cfg = self.config;
        match cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.blocks_mut().iter_mut().zip(grads.blocks()) {
                    for (v, gv) in p.values.iter_mut().zip(&g.values) {
                        *v -= cfg.learning_rate * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let bias1 = 1.0 - cfg.beta1.powi(t);
                let bias2 = 1.0 - cfg.beta2.powi(t);
                for (bi, (p, g)) in params.blocks_mut().iter_mut().zip(grads.blocks()).enumerate() {
                    let m = &mut self.first_moment.block_mut(bi).values;
                    let v = &mut self.second_moment.block_mut(bi).values;
                    for k in 0..p.values.len() {
                        let gk = g.values[k];
                        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                        let m_hat = m[k] / bias1;
                        let v_hat = v[k] / bias2;
                        p.values[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ParameterBlock;

    fn single(value: f64) -> ParamSet {
        ParamSet::from_blocks(vec![ParameterBlock::filled("p", vec![1], value)]).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for cfg in [OptimizerConfig::adam(0.1), OptimizerConfig::sgd(0.1)] {
            let mut p = ParamSet::from_blocks(vec![ParameterBlock::filled("w", vec![2, 2], 0.7)]).unwrap();
            let before = p.clone();
            let g = p.zeros_like();
            let mut opt = OptimizerState::new(cfg, &p);
            for _ in 0..3 {
                opt.step(&mut p, &g).unwrap();
            }
            assert_eq!(p, before);
        }
    }

    #[test]
    fn sgd_rule() {
        let mut p = ParamSet::from_blocks(vec![ParameterBlock::new("w", vec![3], vec![1.0, -2.0, 0.5]).unwrap()]).unwrap();
        let g = ParamSet::from_blocks(vec![ParameterBlock::new("w", vec![3], vec![0.5, 1.0, -4.0]).unwrap()]).unwrap();
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1), &p);
        opt.step(&mut p, &g).unwrap();
        assert_eq!(p.block(0).values, vec![1.0 - 0.05, -2.0 - 0.1, 0.5 + 0.4]);
    }

    #[test]
    fn adam_hand_trace_three_steps() {
        // lr 0.1, betas 0.9 / 0.999, eps 1e-8, gradients 1.0, -2.0, 0.5
        //
        // t=1: m=0.1        v=0.001        m̂=1.0   v̂=1.0    Δ=-0.1
        // t=2: m=-0.11      v=0.004999     m̂=-0.11/0.19     v̂=0.004999/0.001999
        // t=3: m=-0.049     v=0.005244001  m̂=-0.049/0.271   v̂=0.005244001/0.002997001
        let mut p = single(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.1), &p);
        let mut expected = 1.0f64;
        let traces = [(1.0, 1.0, 1.0), (-2.0, -0.11 / 0.19, 0.004999 / 0.001999), (0.5, -0.049 / 0.271, 0.005244001 / 0.002997001)];
        for (g, m_hat, v_hat) in traces {
            opt.step(&mut p, &single(g)).unwrap();
            expected -= 0.1 * m_hat / (f64::sqrt(v_hat) + 1e-8);
            assert!((p.block(0).values[0] - expected).abs() < 1e-12, "{} vs {expected}", p.block(0).values[0]);
        }
        assert_eq!(opt.steps_taken(), 3);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = single(1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.1), &p);
        let err = opt.step(&mut p, &single(f64::NAN)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 0, .. }));
        assert_eq!(p.block(0).values[0], 1.0);
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn deterministic_replay() {
        let run = || {
            let mut p = ParamSet::from_blocks(vec![ParameterBlock::filled("w", vec![4], 0.3)]).unwrap();
            let mut opt = OptimizerState::new(OptimizerConfig::adam(0.01), &p);
            for s in 0..50 {
                let g = ParamSet::from_blocks(vec![ParameterBlock::new(
                    "w",
                    vec![4],
                    (0..4).map(|k| ((s * 7 + k) as f64).sin()).collect(),
                )
                .unwrap()])
                .unwrap();
                opt.step(&mut p, &g).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a.block(0).checksum(), b.block(0).checksum());
    }
}
