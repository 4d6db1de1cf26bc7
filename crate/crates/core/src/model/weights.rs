use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::Result;
use crate::tensor::Matrix;

/// Projections of one decoder layer. All matrices are stored input-major
/// (`in_dim × out_dim`) so a row vector is multiplied on the left.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub(crate) wq: Matrix,
    pub(crate) wk: Matrix,
    pub(crate) wv: Matrix,
    pub(crate) wo: Matrix,
    pub(crate) w_up: Matrix,
    pub(crate) w_down: Matrix,
}

/// Immutable weights of the toy decoder.
///
/// Everything is drawn from a ChaCha8 stream seeded with `config.seed`, in a
/// fixed order, using only uniform draws and multiplication, so the same
/// config produces bit-identical weights on every platform.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub(crate) config: ModelConfig,
    pub(crate) embed: Matrix,
    pub(crate) layers: Vec<LayerWeights>,
    pub(crate) unembed: Matrix,
    /// Trailing model dimensions excluded from positional encoding; nonzero
    /// only after a planted circuit claims them.
    pub(crate) reserved_dims: usize,
}

const EMBED_SCALE: f64 = 1.0;
const PROJ_GAIN: f64 = 1.0;
const OUT_GAIN: f64 = 0.5;

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
        .collect();
    Matrix::new(rows, cols, data).expect("uniform draws are finite")
}

/// Seeded initialization. Same config gives identical weights.
pub fn init_model(config: &ModelConfig) -> Result<ModelWeights> {
    config.validate()?;
    let d = config.model_dim;
    let m = config.ffn_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // Uniform(-s, s) has variance s^2/3; s = sqrt(3/fan_in) keeps unit gain.
    let fan = |n: usize| (3.0 / n as f64).sqrt();
    let embed = uniform(&mut rng, config.vocab_size, d, EMBED_SCALE);
    let layers = (0..config.layers)
        .map(|_| LayerWeights {
            wq: uniform(&mut rng, d, d, PROJ_GAIN * fan(d)),
            wk: uniform(&mut rng, d, d, PROJ_GAIN * fan(d)),
            wv: uniform(&mut rng, d, d, fan(d)),
            wo: uniform(&mut rng, d, d, OUT_GAIN * fan(d)),
            w_up: uniform(&mut rng, d, m, fan(d)),
            w_down: uniform(&mut rng, m, d, OUT_GAIN * fan(m)),
        })
        .collect();
    let unembed = uniform(&mut rng, d, config.vocab_size, fan(d));
    Ok(ModelWeights {
        config: config.clone(),
        embed,
        layers,
        unembed,
        reserved_dims: 0,
    })
}

impl ModelWeights {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn reserved_dims(&self) -> usize {
        self.reserved_dims
    }
}

impl LayerWeights {
    /// `(rows, cols)` of the q, k, v, o, up, down projections.
    pub fn shapes(&self) -> [(usize, usize); 6] {
        [
            self.wq.shape(),
            self.wk.shape(),
            self.wv.shape(),
            self.wo.shape(),
            self.w_up.shape(),
            self.w_down.shape(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ModelConfig {
        ModelConfig {
            layers: 2,
            heads: 2,
            model_dim: 8,
            ffn_dim: 16,
            vocab_size: 32,
            seed,
            end_token: None,
        }
    }

    #[test]
    fn same_seed_same_weights() {
        assert_eq!(
            init_model(&small(7)).unwrap(),
            init_model(&small(7)).unwrap()
        );
    }

    #[test]
    fn different_seed_differs() {
        let a = init_model(&small(1)).unwrap();
        let b = init_model(&small(2)).unwrap();
        assert!(a.embed.max_abs_diff(&b.embed) > 0.0);
    }

    #[test]
    fn projection_shapes() {
        let w = init_model(&small(0)).unwrap();
        assert_eq!(w.config().head_dim(), 4);
        for layer in w.layers() {
            assert_eq!(
                layer.shapes(),
                [(8, 8), (8, 8), (8, 8), (8, 8), (8, 16), (16, 8)]
            );
        }
        assert_eq!(w.embed.shape(), (32, 8));
        assert_eq!(w.unembed.shape(), (8, 32));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ModelConfig {
            heads: 3,
            ..small(0)
        };
        assert!(init_model(&cfg).is_err());
    }
}
