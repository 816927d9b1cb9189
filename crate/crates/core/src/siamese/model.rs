use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ClipFeatureSequence;
use crate::error::{Error, Result};
use crate::numeric::{
    bce_with_logit, dense_backward, dense_forward, lstm_sequence_backward, lstm_sequence_forward, sigmoid,
    Activation, DenseCache, GradientTape, LstmGrads, LstmParams, LstmSequenceCache, ParamSet, ParameterBlock,
};

/// Width of the first dense layer (`Y`).
pub const DENSE1_WIDTH: usize = 128;
/// Width of the second dense layer (`Z`); also the regression head's input.
pub const DENSE2_WIDTH: usize = 64;

pub(crate) const ENC_W_IH: usize = 0;
pub(crate) const ENC_W_HH: usize = 1;
pub(crate) const ENC_BIAS: usize = 2;
pub(crate) const D1_W: usize = 3;
pub(crate) const D1_B: usize = 4;
pub(crate) const D2_W: usize = 5;
pub(crate) const D2_B: usize = 6;
pub(crate) const OUT_W: usize = 7;
pub(crate) const OUT_B: usize = 8;

pub(crate) const BLOCK_NAMES: [&str; 9] = [
    "encoder.w_ih",
    "encoder.w_hh",
    "encoder.bias",
    "dense1.weight",
    "dense1.bias",
    "dense2.weight",
    "dense2.bias",
    "output.weight",
    "output.bias",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Clip feature dimension `D`.
    pub input_dim: usize,
    /// Embedding size `M`.
    pub hidden: usize,
    /// Activation of both dense layers.
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 4096,
            hidden: 256,
            activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(Error::Config("input_dim and hidden must be positive".into()));
        }
        if !matches!(self.activation, Activation::Relu | Activation::Identity) {
            return Err(Error::Config(format!(
                "dense activation must be relu or identity, got {}",
                self.activation.as_str()
            )));
        }
        Ok(())
    }
}

/// Shared encoder plus the dense stack `2M → 128 → 64 → 1`.
///
/// There is exactly one copy of the encoder blocks; both twins read it.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseParams {
    pub blocks: ParamSet,
    pub config: ModelConfig,
}

/// Activations from one pair forward pass.
#[derive(Debug, Clone)]
pub struct SiameseCache {
    pub enc_p: LstmSequenceCache,
    pub enc_q: LstmSequenceCache,
    pub dense1: DenseCache,
    pub dense2: DenseCache,
    pub output: DenseCache,
}

fn layout(config: &ModelConfig) -> [(&'static str, Vec<usize>); 9] {
    let (d, m) = (config.input_dim, config.hidden);
    [
        (BLOCK_NAMES[0], vec![4 * m, d]),
        (BLOCK_NAMES[1], vec![4 * m, m]),
        (BLOCK_NAMES[2], vec![4 * m]),
        (BLOCK_NAMES[3], vec![DENSE1_WIDTH, 2 * m]),
        (BLOCK_NAMES[4], vec![DENSE1_WIDTH]),
        (BLOCK_NAMES[5], vec![DENSE2_WIDTH, DENSE1_WIDTH]),
        (BLOCK_NAMES[6], vec![DENSE2_WIDTH]),
        (BLOCK_NAMES[7], vec![1, DENSE2_WIDTH]),
        (BLOCK_NAMES[8], vec![1]),
    ]
}

impl SiameseParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let blocks = ParamSet::from_blocks(
            layout(&config)
                .into_iter()
                .map(|(name, shape)| ParameterBlock::zeros(name, shape))
                .collect(),
        )?;
        Ok(Self { blocks, config })
    }

    /// Weights uniform in `±1/√fan_in`, biases zero except the forget gate
    /// bias, which starts at 1.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, m) = (config.input_dim, config.hidden);
        let fan_ins = [d + m, d + m, 0, 2 * m, 0, DENSE1_WIDTH, 0, DENSE2_WIDTH, 0];
        let mut blocks = Vec::with_capacity(9);
        for ((name, shape), fan_in) in layout(&config).into_iter().zip(fan_ins) {
            let block = if fan_in == 0 {
                ParameterBlock::zeros(name, shape)
            } else {
                ParameterBlock::uniform(name, shape, 1.0 / (fan_in as f64).sqrt(), &mut rng)
            };
            blocks.push(block);
        }
        blocks[ENC_BIAS].values[m..2 * m].fill(1.0);
        Ok(Self {
            blocks: ParamSet::from_blocks(blocks)?,
            config,
        })
    }

    /// Rebuilds from named blocks (e.g. a checkpoint), checking the layout.
    pub fn from_blocks(blocks: ParamSet, activation: Activation) -> Result<Self> {
        let w_ih = blocks
            .get(BLOCK_NAMES[0])
            .ok_or_else(|| Error::Checkpoint("missing encoder.w_ih".into()))?;
        if w_ih.shape.len() != 2 || w_ih.shape[0] % 4 != 0 {
            return Err(Error::Checkpoint("malformed encoder.w_ih".into()));
        }
        let config = ModelConfig {
            input_dim: w_ih.shape[1],
            hidden: w_ih.shape[0] / 4,
            activation,
        };
        let expected = Self::zeros(config)?;
        let mut ordered = Vec::with_capacity(9);
        for b in expected.blocks.blocks() {
            let got = blocks
                .get(&b.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing block `{}`", b.name)))?;
            if got.shape != b.shape {
                return Err(Error::Checkpoint(format!(
                    "block `{}` has shape {:?}, expected {:?}",
                    b.name, got.shape, b.shape
                )));
            }
            ordered.push(got.clone());
        }
        Ok(Self {
            blocks: ParamSet::from_blocks(ordered)?,
            config,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn activation(&self) -> Activation {
        self.config.activation
    }

    pub fn encoder(&self) -> LstmParams<'_> {
        LstmParams {
            w_ih: self.blocks.block(ENC_W_IH),
            w_hh: self.blocks.block(ENC_W_HH),
            bias: self.blocks.block(ENC_BIAS),
        }
    }

    /// The encoder as seen by each twin. Both views borrow the same blocks.
    pub fn twin_encoders(&self) -> (LstmParams<'_>, LstmParams<'_>) {
        (self.encoder(), self.encoder())
    }

    /// Final hidden state of the shared encoder.
    pub fn embed(&self, seq: &ClipFeatureSequence) -> Result<Vec<f64>> {
        Ok(lstm_sequence_forward(&self.encoder(), seq.as_flat(), seq.dim())?.0)
    }

    fn check_pair(&self, seq_p: &ClipFeatureSequence, seq_q: &ClipFeatureSequence) -> Result<()> {
        if seq_p.len() != seq_q.len() {
            return Err(Error::shape("pair sequence lengths (pad first)", seq_p.len(), seq_q.len()));
        }
        for s in [seq_p, seq_q] {
            if s.dim() != self.input_dim() {
                return Err(Error::shape("clip dimension", self.input_dim(), s.dim()));
            }
        }
        Ok(())
    }

    /// `Z`: the second dense layer's output for `[o_p ‖ o_q]`.
    pub fn dense_features(&self, o_p: &[f64], o_q: &[f64]) -> Result<Vec<f64>> {
        Ok(self.dense_stack(o_p, o_q)?.0)
    }

    fn dense_stack(&self, o_p: &[f64], o_q: &[f64]) -> Result<(Vec<f64>, DenseCache, DenseCache)> {
        let m = self.hidden();
        if o_p.len() != m || o_q.len() != m {
            return Err(Error::shape("embedding length", m, o_p.len().max(o_q.len())));
        }
        let mut x = Vec::with_capacity(2 * m);
        x.extend_from_slice(o_p);
        x.extend_from_slice(o_q);
        let act = self.activation();
        let (y, c1) = dense_forward(self.blocks.block(D1_W), self.blocks.block(D1_B), &x, act)?;
        let (z, c2) = dense_forward(self.blocks.block(D2_W), self.blocks.block(D2_B), &y, act)?;
        Ok((z, c1, c2))
    }

    /// Output logit from a pair of embeddings.
    pub fn logit_from_embeddings(&self, o_p: &[f64], o_q: &[f64]) -> Result<f64> {
        let z = self.dense_features(o_p, o_q)?;
        let w = &self.blocks.block(OUT_W).values;
        Ok(w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + self.blocks.block(OUT_B).values[0])
    }

    /// Match probability from a pair of embeddings.
    pub fn prob_from_embeddings(&self, o_p: &[f64], o_q: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit_from_embeddings(o_p, o_q)?))
    }

    /// Full forward pass keeping every activation; returns the logit.
    pub fn forward_cached(&self, seq_p: &ClipFeatureSequence, seq_q: &ClipFeatureSequence) -> Result<(f64, SiameseCache)> {
        self.check_pair(seq_p, seq_q)?;
        let enc = self.encoder();
        let (o_p, enc_p) = lstm_sequence_forward(&enc, seq_p.as_flat(), seq_p.dim())?;
        let (o_q, enc_q) = lstm_sequence_forward(&enc, seq_q.as_flat(), seq_q.dim())?;
        let (z, dense1, dense2) = self.dense_stack(&o_p, &o_q)?;
        let (logit, output) = dense_forward(
            self.blocks.block(OUT_W),
            self.blocks.block(OUT_B),
            &z,
            Activation::Identity,
        )?;
        Ok((
            logit[0],
            SiameseCache {
                enc_p,
                enc_q,
                dense1,
                dense2,
                output,
            },
        ))
    }

    /// Forward pass that records its activations on `tape`; returns the match
    /// probability.
    pub fn forward_with_tape(
        &self,
        tape: &mut GradientTape<SiameseCache>,
        seq_p: &ClipFeatureSequence,
        seq_q: &ClipFeatureSequence,
    ) -> Result<f64> {
        let (logit, cache) = self.forward_cached(seq_p, seq_q)?;
        tape.record(cache);
        Ok(sigmoid(logit))
    }

    /// Backpropagates `d_logit` through the pass recorded on `tape`,
    /// accumulating into the tape's gradients.
    pub fn backward(&self, tape: &mut GradientTape<SiameseCache>, d_logit: f64) -> Result<()> {
        let cache = tape.take_cache()?;
        self.backward_from_cache(&cache, d_logit, tape.grads_mut())
    }

    /// Accumulates the gradient of `d_logit · logit` into `grads`.
    pub fn backward_from_cache(&self, cache: &SiameseCache, d_logit: f64, grads: &mut ParamSet) -> Result<()> {
        self.blocks.check_same_layout(grads)?;
        let m = self.hidden();
        let [g_w_ih, g_w_hh, g_bias, g_d1w, g_d1b, g_d2w, g_d2b, g_ow, g_ob] = grads.blocks_mut() else {
            return Err(Error::State("gradient set has the wrong number of blocks"));
        };
        let dz = dense_backward(self.blocks.block(OUT_W), &cache.output, &[d_logit], g_ow, g_ob)?;
        let dy = dense_backward(self.blocks.block(D2_W), &cache.dense2, &dz, g_d2w, g_d2b)?;
        let dx = dense_backward(self.blocks.block(D1_W), &cache.dense1, &dy, g_d1w, g_d1b)?;
        let enc = self.encoder();
        let mut enc_grads = LstmGrads {
            w_ih: g_w_ih,
            w_hh: g_w_hh,
            bias: g_bias,
        };
        lstm_sequence_backward(&enc, &cache.enc_p, &dx[..m], &mut enc_grads)?;
        lstm_sequence_backward(&enc, &cache.enc_q, &dx[m..], &mut enc_grads)?;
        Ok(())
    }
}

/// Match probability for an ordered pair of padded sequences.
pub fn dml_forward(params: &SiameseParams, seq_p: &ClipFeatureSequence, seq_q: &ClipFeatureSequence) -> Result<f64> {
    Ok(sigmoid(params.forward_cached(seq_p, seq_q)?.0))
}

/// Binary cross-entropy of one labeled pair and its gradient for every block.
pub fn pair_loss_and_grad(
    params: &SiameseParams,
    seq_p: &ClipFeatureSequence,
    seq_q: &ClipFeatureSequence,
    label: u8,
) -> Result<(f64, ParamSet)> {
    let (logit, cache) = params.forward_cached(seq_p, seq_q)?;
    let (loss, d_logit) = bce_with_logit(logit, label);
    let mut grads = params.blocks.zeros_like();
    params.backward_from_cache(&cache, d_logit, &mut grads)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{gradient_check, GradCheckConfig};
    use rand::Rng;

    fn config(d: usize, m: usize, activation: Activation) -> ModelConfig {
        ModelConfig {
            input_dim: d,
            hidden: m,
            activation,
        }
    }

    fn random_seq(rng: &mut ChaCha8Rng, n: usize, d: usize) -> ClipFeatureSequence {
        ClipFeatureSequence::new((0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(), d).unwrap()
    }

    #[test]
    fn zero_parameters_give_half() {
        let p = SiameseParams::zeros(config(3, 4, Activation::Relu)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_seq(&mut rng, 5, 3);
        let b = random_seq(&mut rng, 5, 3);
        assert_eq!(dml_forward(&p, &a, &b).unwrap(), 0.5);
        assert_eq!(p.embed(&a).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn layer_shapes_chain() {
        let p = SiameseParams::init(config(6, 5, Activation::Relu), 0).unwrap();
        let shapes: Vec<Vec<usize>> = p.blocks.blocks().iter().map(|b| b.shape.clone()).collect();
        assert_eq!(shapes[3], vec![128, 10]);
        assert_eq!(shapes[5], vec![64, 128]);
        assert_eq!(shapes[7], vec![1, 64]);
        // forget gate bias starts at 1
        assert!(p.blocks.block(ENC_BIAS).values[5..10].iter().all(|&v| v == 1.0));
        assert!(p.blocks.block(ENC_BIAS).values[..5].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn concatenation_is_ordered() {
        let p = SiameseParams::init(config(3, 4, Activation::Relu), 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_seq(&mut rng, 4, 3);
        let b = random_seq(&mut rng, 4, 3);
        let ab = dml_forward(&p, &a, &b).unwrap();
        let ba = dml_forward(&p, &b, &a).unwrap();
        assert_ne!(ab, ba);
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let cfg = config(3, 4, Activation::Relu);
        let p = SiameseParams::init(cfg, 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_seq(&mut rng, 6, 3);
        let b = random_seq(&mut rng, 6, 3);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let v = |i: usize| &p.blocks.block(i).values;
        let encode = |s: &ClipFeatureSequence| {
            let (m, d) = (4, 3);
            let mut h = vec![0.0; m];
            let mut c = vec![0.0; m];
            for x in s.clips() {
                let mut z = vec![0.0; 4 * m];
                for r in 0..4 * m {
                    z[r] = v(ENC_BIAS)[r];
                    for j in 0..d {
                        z[r] += v(ENC_W_IH)[r * d + j] * x[j];
                    }
                    for j in 0..m {
                        z[r] += v(ENC_W_HH)[r * m + j] * h[j];
                    }
                }
                for k in 0..m {
                    c[k] = sig(z[m + k]) * c[k] + sig(z[k]) * z[2 * m + k].tanh();
                    h[k] = sig(z[3 * m + k]) * c[k].tanh();
                }
            }
            h
        };
        let mut x = encode(&a);
        x.extend(encode(&b));
        let layer = |w: &[f64], bias: &[f64], input: &[f64]| -> Vec<f64> {
            (0..bias.len())
                .map(|r| {
                    let s: f64 = (0..input.len()).map(|j| w[r * input.len() + j] * input[j]).sum::<f64>() + bias[r];
                    s.max(0.0)
                })
                .collect()
        };
        let y = layer(v(D1_W), v(D1_B), &x);
        let z = layer(v(D2_W), v(D2_B), &y);
        let logit: f64 = (0..64).map(|k| v(OUT_W)[k] * z[k]).sum::<f64>() + v(OUT_B)[0];
        let expected = sig(logit);
        assert!((dml_forward(&p, &a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_shape_error() {
        let p = SiameseParams::init(config(3, 4, Activation::Relu), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_seq(&mut rng, 4, 3);
        let b = random_seq(&mut rng, 5, 3);
        assert!(matches!(dml_forward(&p, &a, &b), Err(Error::Shape { .. })));
        let c = random_seq(&mut rng, 4, 2);
        assert!(dml_forward(&p, &a, &c).is_err());
    }

    #[test]
    fn twins_share_one_encoder() {
        let p = SiameseParams::init(config(3, 4, Activation::Relu), 0).unwrap();
        let (a, b) = p.twin_encoders();
        assert!(std::ptr::eq(a.w_ih, b.w_ih));
        assert!(std::ptr::eq(a.w_hh, b.w_hh));
        assert_eq!(a.w_ih.checksum(), b.w_ih.checksum());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_seq(&mut rng, 4, 3);
        let (_, cache) = p.forward_cached(&s, &s).unwrap();
        let m = 4;
        assert_eq!(cache.dense1.input[..m], cache.dense1.input[m..]);
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let p = SiameseParams::init(config(3, 4, Activation::Relu), 0).unwrap();
        let mut tape = GradientTape::new(&p.blocks);
        assert!(matches!(p.backward(&mut tape, 1.0), Err(Error::State(_))));
    }

    #[test]
    fn tape_gradients_scale_linearly() {
        let p = SiameseParams::init(config(3, 4, Activation::Relu), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_seq(&mut rng, 4, 3);
        let b = random_seq(&mut rng, 4, 3);
        let mut t1 = GradientTape::new(&p.blocks);
        p.forward_with_tape(&mut t1, &a, &b).unwrap();
        p.backward(&mut t1, 0.7).unwrap();
        let mut t2 = GradientTape::new(&p.blocks);
        p.forward_with_tape(&mut t2, &a, &b).unwrap();
        p.backward(&mut t2, 1.4).unwrap();
        for (g1, g2) in t1.grads().blocks().iter().zip(t2.grads().blocks()) {
            for (x, y) in g1.values.iter().zip(&g2.values) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn output_independent_block_has_zero_gradient() {
        // With a zero output weight the logit does not depend on anything
        // below it, so every lower block's gradient is exactly zero.
        let mut p = SiameseParams::init(config(3, 4, Activation::Relu), 9).unwrap();
        p.blocks.block_mut(OUT_W).values.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_seq(&mut rng, 4, 3);
        let (_, grads) = pair_loss_and_grad(&p, &a, &a, 1).unwrap();
        for i in 0..OUT_W {
            assert!(grads.block(i).values.iter().all(|&g| g == 0.0), "{}", grads.block(i).name);
        }
        assert!(grads.block(OUT_B).values[0] != 0.0);
    }

    #[test]
    fn composite_gradient_check() {
        for activation in [Activation::Relu, Activation::Identity] {
            let p = SiameseParams::init(config(3, 5, activation), 12).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let a = random_seq(&mut rng, 4, 3);
            let b = random_seq(&mut rng, 4, 3);
            let report = gradient_check(&p.blocks, &GradCheckConfig::default(), |blocks| {
                let probe = SiameseParams {
                    blocks: blocks.clone(),
                    config: p.config,
                };
                pair_loss_and_grad(&probe, &a, &b, 1).unwrap()
            });
            assert!(report.max_relative_error < 1e-6, "{activation:?}: {report:?}");
            assert_eq!(report.blocks_checked.len(), 9);
        }
    }
}
