//! Rank-based voting over cross-attention columns.
//!
//! For every selected layer, every head and every image token, the image
//! token ranks all query tokens by the probability it receives from them and
//! hands out `L0 - n` points to the query token in `n`-th place (`n` counted
//! from 1), so a column always distributes `0, 1, ..., L0 - 1`. A query
//! token's importance is the sum of the points it collects.
//!
//! Ties inside a column are broken by index: the lower query index takes the
//! better rank.

use crate::baselines::received_attention;
use crate::error::{CatpError, Result};
use crate::layers::LayerSelection;
use crate::tensor::{AttnTensor, SelfAttnTensor};

/// Points one image token awards to each query token; a permutation of
/// `0..L0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VotePoints(Vec<u32>);

impl VotePoints {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&p| p as u64).sum()
    }
}

/// Reusable buffers for ranking many columns of the same length.
#[derive(Debug, Default)]
struct Ranker {
    order: Vec<usize>,
}

impl Ranker {
    /// Writes the points for `column` into `points`.
    fn rank(&mut self, column: &[f32], points: &mut Vec<u32>) {
        let n = column.len();
        self.order.clear();
        self.order.extend(0..n);
        // stable sort: equal values keep ascending index order
        self.order
            .sort_by(|&a, &b| column[b].partial_cmp(&column[a]).unwrap());
        points.clear();
        points.resize(n, 0);
        for (rank, &q) in self.order.iter().enumerate() {
            points[q] = (n - 1 - rank) as u32;
        }
    }
}

/// Ranks one column of probabilities. The largest value earns `L0 - 1`
/// points, the smallest earns 0.
pub fn rank_points(column: &[f32]) -> Result<VotePoints> {
    if column.is_empty() {
        return Err(CatpError::EmptyColumn);
    }
    if let Some(index) = column.iter().position(|v| !v.is_finite()) {
        return Err(CatpError::NonFiniteValue { index });
    }
    let mut points = Vec::with_capacity(column.len());
    Ranker::default().rank(column, &mut points);
    Ok(VotePoints(points))
}

/// Per-query-token importance scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceVector {
    scores: Vec<f64>,
}

impl ImportanceVector {
    /// Wraps externally computed scores; they must be finite and non-negative.
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(index) = scores.iter().position(|v| !v.is_finite()) {
            return Err(CatpError::NonFiniteValue { index });
        }
        if let Some(index) = scores.iter().position(|&v| v < 0.0) {
            return Err(CatpError::NegativeValue {
                index,
                value: scores[index],
            });
        }
        Ok(Self { scores })
    }

    pub(crate) fn from_trusted(scores: Vec<f64>) -> Self {
        Self { scores }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }
}

/// Per-image-token voting weights, non-negative and summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageWeights {
    weights: Vec<f64>,
}

impl ImageWeights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(CatpError::InvalidWeights("no weights".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(CatpError::InvalidWeights(format!(
                "weight {i} is {}",
                weights[i]
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(CatpError::InvalidWeights(format!("weights sum to {sum}")));
        }
        Ok(Self { weights })
    }

    /// Divides non-negative raw scores by their sum.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if let Some(token) = raw.iter().position(|&v| v < 0.0) {
            return Err(CatpError::NegativeScore {
                token,
                value: raw[token],
            });
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(CatpError::ZeroMassWeights);
        }
        Self::new(raw.iter().map(|&r| r / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Unweighted vote totals in exact integer arithmetic.
pub fn vote_totals(prob: &AttnTensor, sel: &LayerSelection) -> Result<Vec<u64>> {
    let layers = sel.resolve(prob.layers())?;
    let mut totals = vec![0u64; prob.n_query()];
    for_each_column(prob, &layers, |_, points| {
        for (t, &p) in totals.iter_mut().zip(points) {
            *t += p as u64;
        }
    });
    Ok(totals)
}

/// Accumulates votes over the selected layers, every head and every image
/// token. With `weights`, each image token's points are scaled by its weight
/// and summed layer-major, then head, then image token.
pub fn importance(
    prob: &AttnTensor,
    sel: &LayerSelection,
    weights: Option<&ImageWeights>,
) -> Result<ImportanceVector> {
    let Some(weights) = weights else {
        let totals = vote_totals(prob, sel)?;
        return Ok(ImportanceVector::from_trusted(
            totals.into_iter().map(|t| t as f64).collect(),
        ));
    };
    if weights.len() != prob.n_image() {
        return Err(CatpError::WeightLengthMismatch {
            expected: prob.n_image(),
            actual: weights.len(),
        });
    }
    let layers = sel.resolve(prob.layers())?;
    let w = weights.as_slice();
    let mut scores = vec![0f64; prob.n_query()];
    for_each_column(prob, &layers, |image, points| {
        for (s, &p) in scores.iter_mut().zip(points) {
            *s += w[image] * p as f64;
        }
    });
    Ok(ImportanceVector::from_trusted(scores))
}

fn for_each_column(prob: &AttnTensor, layers: &[usize], mut visit: impl FnMut(usize, &[u32])) {
    let mut ranker = Ranker::default();
    let mut column = Vec::with_capacity(prob.n_query());
    let mut points = Vec::with_capacity(prob.n_query());
    for &layer in layers {
        for head in 0..prob.heads() {
            for image in 0..prob.n_image() {
                prob.column_into(layer, head, image, &mut column);
                ranker.rank(&column, &mut points);
                visit(image, &points);
            }
        }
    }
}

/// Image-token weights from the attention each token receives in the last
/// self-attention layer, summed over heads and senders, then divided by the
/// total.
pub fn image_weights_from_self_attention(sa: &SelfAttnTensor) -> Result<ImageWeights> {
    let last = sa.layers() - 1;
    let raw = received_attention(sa, &[last]);
    ImageWeights::normalize(&raw)
}
