//! In-memory containers for attention probability maps and embeddings.
//!
//! All containers store `f32` values row-major in their declared axis order
//! and are immutable once constructed. Constructors check the dimension and
//! value invariants; row normalization is checked separately by
//! [`validate_normalization`] because externally produced dumps often carry
//! float drift.

use std::fmt;

use crate::error::{CatpError, Result};
use crate::layers::LayerSelection;

/// Kind code stored in the file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorKind {
    CrossAttention = 0,
    SelfAttention = 1,
    Embedding = 2,
}

impl TensorKind {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(TensorKind::CrossAttention),
            1 => Ok(TensorKind::SelfAttention),
            2 => Ok(TensorKind::Embedding),
            other => Err(CatpError::UnknownKind(other)),
        }
    }
}

impl fmt::Display for TensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TensorKind::CrossAttention => "cross-attention",
            TensorKind::SelfAttention => "self-attention",
            TensorKind::Embedding => "embedding",
        })
    }
}

fn check_dims(dims: &[usize], len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(CatpError::InvalidDims {
            dims: dims.to_vec(),
            reason: "every dimension must be at least 1",
        });
    }
    if dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(CatpError::InvalidDims {
            dims: dims.to_vec(),
            reason: "dimension does not fit in u32",
        });
    }
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(CatpError::InvalidDims {
            dims: dims.to_vec(),
            reason: "element count overflows",
        })?;
    if expected != len {
        return Err(CatpError::InvalidDims {
            dims: dims.to_vec(),
            reason: "data length does not match dimensions",
        });
    }
    Ok(())
}

pub(crate) fn check_finite(data: &[f32]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(CatpError::NonFiniteValue { index }),
        None => Ok(()),
    }
}

fn check_probabilities(data: &[f32]) -> Result<()> {
    check_finite(data)?;
    match data.iter().position(|&v| v < 0.0) {
        Some(index) => Err(CatpError::NegativeValue {
            index,
            value: data[index] as f64,
        }),
        None => Ok(()),
    }
}

/// Cross-attention probabilities indexed `[layer][head][query][image]`.
///
/// Each `(layer, head, query)` row is a distribution over image tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnTensor {
    layers: usize,
    heads: usize,
    n_query: usize,
    n_image: usize,
    data: Vec<f32>,
}

impl AttnTensor {
    pub fn new(
        layers: usize,
        heads: usize,
        n_query: usize,
        n_image: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        check_dims(&[layers, heads, n_query, n_image], data.len())?;
        check_probabilities(&data)?;
        Ok(Self {
            layers,
            heads,
            n_query,
            n_image,
            data,
        })
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(dims: [usize; 4], data: Vec<f32>) -> Self {
        let [layers, heads, n_query, n_image] = dims;
        Self {
            layers,
            heads,
            n_query,
            n_image,
            data,
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn n_query(&self) -> usize {
        self.n_query
    }

    pub fn n_image(&self) -> usize {
        self.n_image
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.layers, self.heads, self.n_query, self.n_image]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    fn offset(&self, layer: usize, head: usize, query: usize) -> usize {
        ((layer * self.heads + head) * self.n_query + query) * self.n_image
    }

    pub fn get(&self, layer: usize, head: usize, query: usize, image: usize) -> f32 {
        self.data[self.offset(layer, head, query) + image]
    }

    /// Probabilities of one query token over all image tokens.
    pub fn row(&self, layer: usize, head: usize, query: usize) -> &[f32] {
        let start = self.offset(layer, head, query);
        &self.data[start..start + self.n_image]
    }

    /// The `[query][image]` block of one head, flattened.
    pub fn head_block(&self, layer: usize, head: usize) -> &[f32] {
        let start = self.offset(layer, head, 0);
        &self.data[start..start + self.n_query * self.n_image]
    }

    /// Probabilities every query token assigns to one image token, written
    /// into `out` (cleared first).
    pub fn column_into(&self, layer: usize, head: usize, image: usize, out: &mut Vec<f32>) {
        out.clear();
        let block = self.head_block(layer, head);
        out.extend(block.iter().skip(image).step_by(self.n_image).copied());
    }
}

/// Self-attention probabilities indexed `[layer][head][sender][receiver]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttnTensor {
    layers: usize,
    heads: usize,
    n_tokens: usize,
    data: Vec<f32>,
}

impl SelfAttnTensor {
    pub fn new(layers: usize, heads: usize, n_tokens: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(&[layers, heads, n_tokens, n_tokens], data.len())?;
        check_probabilities(&data)?;
        Ok(Self {
            layers,
            heads,
            n_tokens,
            data,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.layers, self.heads, self.n_tokens, self.n_tokens]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, layer: usize, head: usize, sender: usize, receiver: usize) -> f32 {
        let n = self.n_tokens;
        self.data[((layer * self.heads + head) * n + sender) * n + receiver]
    }

    pub fn head_block(&self, layer: usize, head: usize) -> &[f32] {
        let n = self.n_tokens;
        let start = (layer * self.heads + head) * n * n;
        &self.data[start..start + n * n]
    }
}

/// Token embeddings indexed `[token][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n_tokens: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(n_tokens: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(&[n_tokens, dim], data.len())?;
        check_finite(&data)?;
        Ok(Self {
            n_tokens,
            dim,
            data,
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, token: usize) -> &[f32] {
        &self.data[token * self.dim..(token + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }
}

/// A tensor of any kind the file format can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    Cross(AttnTensor),
    SelfAttn(SelfAttnTensor),
    Embedding(EmbeddingMatrix),
}

impl AnyTensor {
    pub fn kind(&self) -> TensorKind {
        match self {
            AnyTensor::Cross(_) => TensorKind::CrossAttention,
            AnyTensor::SelfAttn(_) => TensorKind::SelfAttention,
            AnyTensor::Embedding(_) => TensorKind::Embedding,
        }
    }

    /// Dimensions as written in the file header.
    pub fn header_dims(&self) -> [usize; 4] {
        match self {
            AnyTensor::Cross(t) => t.dims(),
            AnyTensor::SelfAttn(t) => t.dims(),
            AnyTensor::Embedding(e) => [1, 1, e.n_tokens, e.dim],
        }
    }

    pub fn data(&self) -> &[f32] {
        match self {
            AnyTensor::Cross(t) => t.data(),
            AnyTensor::SelfAttn(t) => t.data(),
            AnyTensor::Embedding(e) => e.data(),
        }
    }

    fn mismatch(&self, expected: TensorKind) -> CatpError {
        CatpError::KindMismatch {
            expected,
            found: self.kind(),
        }
    }

    pub fn into_cross(self) -> Result<AttnTensor> {
        match self {
            AnyTensor::Cross(t) => Ok(t),
            other => Err(other.mismatch(TensorKind::CrossAttention)),
        }
    }

    pub fn into_self_attn(self) -> Result<SelfAttnTensor> {
        match self {
            AnyTensor::SelfAttn(t) => Ok(t),
            other => Err(other.mismatch(TensorKind::SelfAttention)),
        }
    }

    pub fn into_embedding(self) -> Result<EmbeddingMatrix> {
        match self {
            AnyTensor::Embedding(e) => Ok(e),
            other => Err(other.mismatch(TensorKind::Embedding)),
        }
    }
}

impl From<AttnTensor> for AnyTensor {
    fn from(t: AttnTensor) -> Self {
        AnyTensor::Cross(t)
    }
}

impl From<SelfAttnTensor> for AnyTensor {
    fn from(t: SelfAttnTensor) -> Self {
        AnyTensor::SelfAttn(t)
    }
}

impl From<EmbeddingMatrix> for AnyTensor {
    fn from(e: EmbeddingMatrix) -> Self {
        AnyTensor::Embedding(e)
    }
}

/// Probability tensors whose innermost axis is softmax-normalized.
pub trait RowNormalized {
    /// `(layers, heads, rows per head)`.
    fn row_layout(&self) -> (usize, usize, usize);
    fn row_len(&self) -> usize;
    fn values(&self) -> &[f32];
}

impl RowNormalized for AttnTensor {
    fn row_layout(&self) -> (usize, usize, usize) {
        (self.layers, self.heads, self.n_query)
    }

    fn row_len(&self) -> usize {
        self.n_image
    }

    fn values(&self) -> &[f32] {
        &self.data
    }
}

impl RowNormalized for SelfAttnTensor {
    fn row_layout(&self) -> (usize, usize, usize) {
        (self.layers, self.heads, self.n_tokens)
    }

    fn row_len(&self) -> usize {
        self.n_tokens
    }

    fn values(&self) -> &[f32] {
        &self.data
    }
}

/// A row whose sum strays from 1 by more than the tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowViolation {
    pub layer: usize,
    pub head: usize,
    pub row: usize,
    pub sum: f64,
}

/// Lists every `(layer, head, row)` whose normalized axis does not sum to 1
/// within `tol`, in lexicographic order. Sums are accumulated in `f64`.
///
/// Panics if `tol` is not strictly positive.
pub fn validate_normalization<T: RowNormalized + ?Sized>(t: &T, tol: f64) -> Vec<RowViolation> {
    assert!(tol > 0.0, "tolerance must be positive, got {tol}");
    let (_, heads, rows) = t.row_layout();
    t.values()
        .chunks_exact(t.row_len())
        .enumerate()
        .filter_map(|(flat, row)| {
            let sum: f64 = row.iter().map(|&v| v as f64).sum();
            ((sum - 1.0).abs() > tol).then(|| RowViolation {
                layer: flat / (heads * rows),
                head: (flat / rows) % heads,
                row: flat % rows,
                sum,
            })
        })
        .collect()
}

/// Returns a tensor holding exactly the selected layers, in ascending
/// original order.
pub fn slice_layers(t: &AttnTensor, sel: &LayerSelection) -> Result<AttnTensor> {
    let picked = sel.resolve(t.layers)?;
    let per_layer = t.heads * t.n_query * t.n_image;
    let mut data = Vec::with_capacity(picked.len() * per_layer);
    for &layer in &picked {
        data.extend_from_slice(&t.data[layer * per_layer..(layer + 1) * per_layer]);
    }
    AttnTensor::new(picked.len(), t.heads, t.n_query, t.n_image, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn six_layer() -> AttnTensor {
        let data: Vec<f32> = (0..6 * 2 * 2)
            .flat_map(|i| {
                let a = (i % 7) as f32 / 10.0;
                [a, 1.0 - a]
            })
            .collect();
        AttnTensor::new(6, 2, 2, 2, data).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            AttnTensor::new(0, 1, 1, 1, vec![]),
            Err(CatpError::InvalidDims { .. })
        ));
        assert!(matches!(
            AttnTensor::new(1, 1, 1, 2, vec![1.0]),
            Err(CatpError::InvalidDims { .. })
        ));
        assert!(matches!(
            AttnTensor::new(1, 1, 1, 2, vec![f32::NAN, 1.0]),
            Err(CatpError::NonFiniteValue { index: 0 })
        ));
        assert!(matches!(
            AttnTensor::new(1, 1, 1, 2, vec![1.5, -0.5]),
            Err(CatpError::NegativeValue { index: 1, .. })
        ));
        assert!(EmbeddingMatrix::new(1, 2, vec![-3.0, 4.0]).is_ok());
        assert!(EmbeddingMatrix::new(1, 2, vec![f32::INFINITY, 4.0]).is_err());
    }

    #[test]
    fn column_reads_query_axis() {
        let t = AttnTensor::new(
            1,
            1,
            3,
            3,
            vec![0.8, 0.1, 0.1, 0.5, 0.35, 0.15, 0.4, 0.3, 0.3],
        )
        .unwrap();
        let mut col = Vec::new();
        t.column_into(0, 0, 1, &mut col);
        assert_eq!(col, vec![0.1, 0.35, 0.3]);
        assert_eq!(t.row(0, 0, 2), &[0.4, 0.3, 0.3]);
        assert_eq!(t.get(0, 0, 1, 0), 0.5);
    }

    #[test]
    fn normalization_examples() {
        let ok = AttnTensor::new(1, 1, 1, 3, vec![0.8, 0.1, 0.1]).unwrap();
        assert!(validate_normalization(&ok, 1e-4).is_empty());

        let bad = AttnTensor::new(1, 1, 1, 2, vec![0.5, 0.4]).unwrap();
        let v = validate_normalization(&bad, 1e-4);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].layer, v[0].head, v[0].row), (0, 0, 0));
        assert!((v[0].sum - 0.9).abs() < 1e-6);
    }

    #[test]
    fn normalization_reports_sorted_triples() {
        let mut data = vec![0.5f32; 2 * 2 * 3 * 2];
        // break (0,1,2) and (1,0,0)
        data[(3 + 2) * 2] = 0.9;
        data[(2 * 3) * 2 + 1] = 0.0;
        let t = AttnTensor::new(2, 2, 3, 2, data).unwrap();
        let triples: Vec<_> = validate_normalization(&t, 1e-4)
            .iter()
            .map(|v| (v.layer, v.head, v.row))
            .collect();
        assert_eq!(triples, vec![(0, 1, 2), (1, 0, 0)]);
    }

    #[test]
    fn self_attention_normalizes_over_receivers() {
        let sa = SelfAttnTensor::new(1, 1, 2, vec![0.6, 0.4, 0.1, 0.9]).unwrap();
        assert!(validate_normalization(&sa, 1e-6).is_empty());
        // columns do not sum to 1, which must not matter
        let lopsided = SelfAttnTensor::new(1, 1, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(validate_normalization(&lopsided, 1e-6).is_empty());
    }

    #[test]
    fn slice_all_is_identity() {
        let t = six_layer();
        assert_eq!(slice_layers(&t, &LayerSelection::All).unwrap(), t);
    }

    #[test]
    fn slice_first_is_layer_zero() {
        let t = six_layer();
        let first = slice_layers(&t, &LayerSelection::First).unwrap();
        assert_eq!(first.layers(), 1);
        assert_eq!(first.data(), &t.data()[..8]);
    }

    #[test]
    fn slice_subset_keeps_order() {
        let t = six_layer();
        let s = slice_layers(&t, &LayerSelection::subset(vec![1, 4]).unwrap()).unwrap();
        assert_eq!(s.layers(), 2);
        assert_eq!(&s.data()[..8], &t.data()[8..16]);
        assert_eq!(&s.data()[8..], &t.data()[32..40]);
    }

    #[test]
    fn slice_out_of_range() {
        let t = six_layer();
        assert!(matches!(
            slice_layers(&t, &LayerSelection::Single(6)),
            Err(CatpError::LayerOutOfRange {
                index: 6,
                layers: 6
            })
        ));
    }

    #[test]
    fn kind_mismatch_on_conversion() {
        let e: AnyTensor = EmbeddingMatrix::new(1, 1, vec![1.0]).unwrap().into();
        assert!(matches!(
            e.into_cross(),
            Err(CatpError::KindMismatch {
                expected: TensorKind::CrossAttention,
                found: TensorKind::Embedding
            })
        ));
    }
}
