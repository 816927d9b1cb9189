//! Central-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParamSet;

/// Gradients smaller than this in magnitude are compared on an absolute
/// scale; below it central differences are dominated by rounding noise.
pub const REL_ERR_FLOOR: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, REL_ERR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Coordinates sampled per block; blocks with fewer are checked fully.
    pub samples_per_block: usize,
    pub seed: u64,
    /// Blocks excluded from the check.
    pub frozen: Vec<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            samples_per_block: 200,
            seed: 0,
            frozen: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(block, index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
    pub coordinates_checked: usize,
    pub blocks_checked: Vec<String>,
}

/// Compares the analytic gradient returned by `loss_and_grad` against
/// central differences of its loss, coordinate by coordinate.
///
/// `loss_and_grad` must return gradients laid out like `params`. Frozen
/// blocks are skipped.
pub fn gradient_check<F>(params: &ParamSet, config: &GradCheckConfig, mut loss_and_grad: F) -> GradCheckReport
where
    F: FnMut(&ParamSet) -> (f64, ParamSet),
{
    let (_, analytic) = loss_and_grad(params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        coordinates_checked: 0,
        blocks_checked: Vec::new(),
    };
    for bi in 0..params.len() {
        let name = params.block(bi).name.clone();
        if config.frozen.contains(&name) {
            continue;
        }
        let len = params.block(bi).len();
        let indices: Vec<usize> = if len <= config.samples_per_block {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, config.samples_per_block).into_vec();
            v.sort_unstable();
            v
        };
        let grad_block = analytic
            .get(&name)
            .map(|b| b.values.clone())
            .unwrap_or_else(|| vec![0.0; len]);
        for idx in indices {
            let original = probe.block(bi).values[idx];
            probe.block_mut(bi).values[idx] = original + config.epsilon;
            let (plus, _) = loss_and_grad(&probe);
            probe.block_mut(bi).values[idx] = original - config.epsilon;
            let (minus, _) = loss_and_grad(&probe);
            probe.block_mut(bi).values[idx] = original;
            let numeric = (plus - minus) / (2.0 * config.epsilon);
            let a = grad_block[idx];
            let err = relative_error(a, numeric);
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((name.clone(), idx, a, numeric));
            }
            report.coordinates_checked += 1;
        }
        report.blocks_checked.push(name);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ParameterBlock;

    fn set(values: Vec<f64>) -> ParamSet {
        let n = values.len();
        ParamSet::from_blocks(vec![
            ParameterBlock::new("w", vec![n], values).unwrap(),
            ParameterBlock::filled("frozen", vec![2], 0.5),
        ])
        .unwrap()
    }

    #[test]
    fn quadratic_is_exact() {
        // loss = Σ c_k w_k² + w_k, linear gradient: central differences are exact
        // up to rounding.
        let coeffs = [0.5, -1.5, 2.0, 3.0];
        let params = set(vec![0.3, -0.7, 1.1, 2.0]);
        let report = gradient_check(&params, &GradCheckConfig::default(), |p| {
            let w = &p.block(0).values;
            let loss = w.iter().zip(&coeffs).map(|(x, c)| c * x * x + x).sum();
            let mut g = p.zeros_like();
            for (k, x) in w.iter().enumerate() {
                g.block_mut(0).values[k] = 2.0 * coeffs[k] * x + 1.0;
            }
            (loss, g)
        });
        assert!(report.max_relative_error < 1e-10, "{report:?}");
    }

    #[test]
    fn wrong_gradient_detected() {
        let params = set(vec![1.0, 2.0]);
        let report = gradient_check(&params, &GradCheckConfig::default(), |p| {
            let w = &p.block(0).values;
            let mut g = p.zeros_like();
            g.block_mut(0).values[0] = 2.0 * w[0];
            g.block_mut(0).values[1] = 3.0 * w[1];
            (w[0] * w[0] + w[1] * w[1], g)
        });
        assert!(report.max_relative_error > 0.1);
        let (block, idx, _, _) = report.worst.unwrap();
        assert_eq!((block.as_str(), idx), ("w", 1));
    }

    #[test]
    fn frozen_blocks_skipped() {
        let params = set(vec![1.0]);
        let config = GradCheckConfig {
            frozen: vec!["frozen".into()],
            ..Default::default()
        };
        // gradient for the frozen block is deliberately wrong
        let report = gradient_check(&params, &config, |p| {
            let w = p.block(0).values[0];
            let f = p.block(1).values[0];
            let mut g = p.zeros_like();
            g.block_mut(0).values[0] = 2.0 * w;
            (w * w + 5.0 * f, g)
        });
        assert_eq!(report.blocks_checked, vec!["w".to_string()]);
        assert!(report.max_relative_error < 1e-9);
    }

    #[test]
    fn subsamples_large_blocks() {
        let params = ParamSet::from_blocks(vec![ParameterBlock::filled("big", vec![1000], 0.1)]).unwrap();
        let config = GradCheckConfig {
            samples_per_block: 200,
            ..Default::default()
        };
        let report = gradient_check(&params, &config, |p| {
            let loss = p.block(0).values.iter().map(|v| v * v).sum();
            let mut g = p.clone();
            g.scale(2.0);
            (loss, g)
        });
        assert_eq!(report.coordinates_checked, 200);
    }
}
