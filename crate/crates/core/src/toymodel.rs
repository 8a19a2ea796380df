//! Seeded synthetic attention stacks for fixtures and tests.
//!
//! Everything derives from a splitmix64 stream:
//!
//! * uniforms take the top 53 bits of a draw, `u = (x >> 11) * 2^-53`;
//! * normals come in Box–Muller pairs from two uniforms `u1, u2`, emitting
//!   `r cos(2π u2)` then `r sin(2π u2)` with `r = sqrt(-2 ln(1 - u1))`;
//! * query embeddings (`L0 × dim`) then image embeddings (`L1 × dim`) are
//!   drawn row-major from the stream seeded with `seed`;
//! * every `(tag, layer, head)` block draws its two `dim × dim` projections
//!   from a substream seeded with [`substream_seed`], tag 0 for
//!   cross-attention, tag 1 for image self-attention and tag 2 for query
//!   self-attention.
//!
//! Logits are `(Wq x)·(Wk y) / (sqrt(dim) · temperature)` with projection
//! entries scaled by `1/sqrt(dim)`; rows are softmaxed with max subtraction.

use crate::error::{CatpError, Result};
use crate::tensor::{AttnTensor, EmbeddingMatrix, SelfAttnTensor};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller.
    pub fn next_gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Seed of the independent substream for one `(tag, layer, head)` block.
pub fn substream_seed(seed: u64, tag: u8, layer: usize, head: usize) -> u64 {
    let key =
        ((tag as u64) << 56) | ((layer as u64 & 0x0FFF_FFFF) << 28) | (head as u64 & 0x0FFF_FFFF);
    mix64(seed ^ mix64(key.wrapping_add(1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub seed: u64,
    pub layers: usize,
    pub heads: usize,
    pub n_query: usize,
    pub n_image: usize,
    pub dim: usize,
    pub temperature: f64,
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0
            || self.heads == 0
            || self.n_query == 0
            || self.n_image == 0
            || self.dim == 0
        {
            return Err(CatpError::InvalidConfig("all counts must be at least 1"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(CatpError::InvalidConfig(
                "temperature must be positive and finite",
            ));
        }
        Ok(())
    }
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            layers: 2,
            heads: 2,
            n_query: 4,
            n_image: 5,
            dim: 8,
            temperature: 1.0,
        }
    }
}

/// Generated fixture: cross-attention, image self-attention, query embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyFixture {
    pub cross: AttnTensor,
    pub self_attn: SelfAttnTensor,
    pub embeddings: EmbeddingMatrix,
}

const TAG_CROSS: u8 = 0;
const TAG_IMAGE_SELF: u8 = 1;
const TAG_QUERY_SELF: u8 = 2;

fn gaussian_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    (0..rows * cols)
        .map(|_| rng.next_gaussian() * scale)
        .collect()
}

/// `x` (n × dim) times `w` (dim × dim), row-major.
fn project(x: &[f64], w: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (xr, or) in x.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
        for (k, &xv) in xr.iter().enumerate() {
            let wr = &w[k * dim..(k + 1) * dim];
            for (o, &wv) in or.iter_mut().zip(wr) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// Appends the row-softmaxed attention of `queries` over `keys` to `out`.
fn attention_block(queries: &[f64], keys: &[f64], dim: usize, scale: f64, out: &mut Vec<f32>) {
    let mut logits = Vec::with_capacity(keys.len() / dim);
    for q in queries.chunks_exact(dim) {
        logits.clear();
        logits.extend(
            keys.chunks_exact(dim)
                .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale),
        );
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        out.extend(logits.iter().map(|&e| (e / total) as f32));
    }
}

fn draw_embeddings(cfg: &ToyConfig) -> (Vec<f64>, Vec<f64>) {
    let mut rng = SplitMix64::new(cfg.seed);
    let queries = gaussian_matrix(&mut rng, cfg.n_query, cfg.dim, 1.0);
    let images = gaussian_matrix(&mut rng, cfg.n_image, cfg.dim, 1.0);
    (queries, images)
}

/// Attention of `senders` over `receivers` for every layer and head, each
/// block projected through its own `tag` substream.
fn attention_stack(cfg: &ToyConfig, tag: u8, senders: &[f64], receivers: &[f64]) -> Vec<f32> {
    let dim = cfg.dim;
    let w_scale = 1.0 / (dim as f64).sqrt();
    let logit_scale = 1.0 / ((dim as f64).sqrt() * cfg.temperature);
    let rows = senders.len() / dim;
    let cols = receivers.len() / dim;
    let mut out = Vec::with_capacity(cfg.layers * cfg.heads * rows * cols);
    for layer in 0..cfg.layers {
        for head in 0..cfg.heads {
            let mut sub = SplitMix64::new(substream_seed(cfg.seed, tag, layer, head));
            let wq = gaussian_matrix(&mut sub, dim, dim, w_scale);
            let wk = gaussian_matrix(&mut sub, dim, dim, w_scale);
            attention_block(
                &project(senders, &wq, dim),
                &project(receivers, &wk, dim),
                dim,
                logit_scale,
                &mut out,
            );
        }
    }
    out
}

pub fn generate(cfg: &ToyConfig) -> Result<ToyFixture> {
    cfg.validate()?;
    let (queries, images) = draw_embeddings(cfg);
    let cross = attention_stack(cfg, TAG_CROSS, &queries, &images);
    let self_attn = attention_stack(cfg, TAG_IMAGE_SELF, &images, &images);
    Ok(ToyFixture {
        cross: AttnTensor::new(cfg.layers, cfg.heads, cfg.n_query, cfg.n_image, cross)?,
        self_attn: SelfAttnTensor::new(cfg.layers, cfg.heads, cfg.n_image, self_attn)?,
        embeddings: EmbeddingMatrix::new(
            cfg.n_query,
            cfg.dim,
            queries.iter().map(|&x| x as f32).collect(),
        )?,
    })
}

/// Self-attention among the query tokens, the input of the self-attention
/// baseline. Shares the query embeddings of [`generate`].
pub fn generate_query_self_attention(cfg: &ToyConfig) -> Result<SelfAttnTensor> {
    cfg.validate()?;
    let (queries, _) = draw_embeddings(cfg);
    let data = attention_stack(cfg, TAG_QUERY_SELF, &queries, &queries);
    SelfAttnTensor::new(cfg.layers, cfg.heads, cfg.n_query, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::validate_normalization;

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs of splitmix64 seeded with 0.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn uniforms_in_unit_interval() {
        let mut rng = SplitMix64::new(42);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = SplitMix64::new(123);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.next_gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn seed7_fixture_is_normalized() {
        let fx = generate(&ToyConfig::default()).unwrap();
        assert_eq!(fx.cross.dims(), [2, 2, 4, 5]);
        assert_eq!(fx.self_attn.dims(), [2, 2, 5, 5]);
        assert_eq!((fx.embeddings.n_tokens(), fx.embeddings.dim()), (4, 8));
        assert!(validate_normalization(&fx.cross, 1e-6).is_empty());
        assert!(validate_normalization(&fx.self_attn, 1e-6).is_empty());
        // independent summation
        for row in fx.cross.data().chunks(5) {
            let s: f64 = row.iter().map(|&x| x as f64).sum();
            assert!((s - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ToyConfig {
            seed: 99,
            layers: 3,
            ..ToyConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = ToyConfig {
            seed: 100,
            ..cfg.clone()
        };
        assert_ne!(
            generate(&cfg).unwrap().cross,
            generate(&other).unwrap().cross
        );
    }

    #[test]
    fn hot_softmax_is_nearly_uniform() {
        let cfg = ToyConfig {
            temperature: 1e6,
            ..ToyConfig::default()
        };
        let fx = generate(&cfg).unwrap();
        for &p in fx.cross.data() {
            assert!((p as f64 - 0.2).abs() < 1e-3);
        }
    }

    #[test]
    fn no_ties_at_unit_temperature() {
        for seed in [1u64, 7, 42, 2024] {
            let cfg = ToyConfig {
                seed,
                layers: 3,
                heads: 2,
                n_query: 8,
                n_image: 16,
                dim: 8,
                temperature: 1.0,
            };
            let fx = generate(&cfg).unwrap();
            let mut col = Vec::new();
            for l in 0..3 {
                for h in 0..2 {
                    for i in 0..16 {
                        fx.cross.column_into(l, h, i, &mut col);
                        let mut sorted = col.clone();
                        sorted.sort_by(f32::total_cmp);
                        assert!(
                            sorted.windows(2).all(|w| w[0] != w[1]),
                            "tie at seed {seed}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn query_self_attention_shape() {
        let cfg = ToyConfig::default();
        let sa = generate_query_self_attention(&cfg).unwrap();
        assert_eq!(sa.dims(), [2, 2, 4, 4]);
        assert!(validate_normalization(&sa, 1e-6).is_empty());
        assert_ne!(
            sa.data(),
            &generate(&cfg).unwrap().self_attn.data()[..sa.data().len()]
        );
    }

    #[test]
    fn config_validation() {
        assert!(generate(&ToyConfig {
            dim: 0,
            ..ToyConfig::default()
        })
        .is_err());
        assert!(generate(&ToyConfig {
            temperature: 0.0,
            ..ToyConfig::default()
        })
        .is_err());
        assert!(generate(&ToyConfig {
            temperature: f64::NAN,
            ..ToyConfig::default()
        })
        .is_err());
    }
}
