//! Comparison importance rules: embedding magnitude and accumulated
//! self-attention received.

use crate::error::Result;
use crate::layers::LayerSelection;
use crate::tensor::{EmbeddingMatrix, SelfAttnTensor};
use crate::voting::ImportanceVector;

/// Euclidean norm of every token's embedding.
pub fn l2_importance(emb: &EmbeddingMatrix) -> ImportanceVector {
    let scores = emb
        .rows()
        .map(|row| {
            row.iter()
                .map(|&x| (x as f64) * (x as f64))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    ImportanceVector::from_trusted(scores)
}

/// Cumulative attention each token receives over the selected layers, all
/// heads and all senders.
pub fn selfattn_importance(sa: &SelfAttnTensor, sel: &LayerSelection) -> Result<ImportanceVector> {
    let layers = sel.resolve(sa.layers())?;
    Ok(ImportanceVector::from_trusted(received_attention(
        sa, &layers,
    )))
}

/// Column sums of the given layers' attention maps.
///
/// The summands of each column are added in ascending value order, so the
/// result does not depend on how the tokens are numbered.
pub(crate) fn received_attention(sa: &SelfAttnTensor, layers: &[usize]) -> Vec<f64> {
    let n = sa.n_tokens();
    let mut terms: Vec<Vec<f32>> = vec![Vec::with_capacity(layers.len() * sa.heads() * n); n];
    for &layer in layers {
        for head in 0..sa.heads() {
            for row in sa.head_block(layer, head).chunks_exact(n) {
                for (col, &v) in terms.iter_mut().zip(row) {
                    col.push(v);
                }
            }
        }
    }
    terms
        .into_iter()
        .map(|mut col| {
            col.sort_by(f32::total_cmp);
            col.into_iter().map(|v| v as f64).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CatpError;

    #[test]
    fn l2_examples() {
        let e = EmbeddingMatrix::new(2, 2, vec![3.0, 4.0, 0.0, 0.0]).unwrap();
        assert_eq!(l2_importance(&e).scores(), &[5.0, 0.0]);
        let e = EmbeddingMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(l2_importance(&e).scores(), &[1.0, 1.0]);
    }

    #[test]
    fn l2_matches_per_row_recomputation() {
        let data: Vec<f32> = (0..12)
            .map(|i| ((i * 37 % 11) as f32 - 5.0) / 3.0)
            .collect();
        let e = EmbeddingMatrix::new(4, 3, data.clone()).unwrap();
        let got = l2_importance(&e);
        for (q, &s) in got.scores().iter().enumerate() {
            let mut acc = 0f64;
            for d in 0..3 {
                let x = data[q * 3 + d] as f64;
                acc += x * x;
            }
            assert!((s - acc.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn selfattn_column_sums() {
        let sa = SelfAttnTensor::new(1, 1, 2, vec![0.6, 0.4, 0.1, 0.9]).unwrap();
        let imp = selfattn_importance(&sa, &LayerSelection::All).unwrap();
        assert!((imp.scores()[0] - 0.7).abs() < 1e-7);
        assert!((imp.scores()[1] - 1.3).abs() < 1e-7);
    }

    #[test]
    fn uniform_attention_scores_layers_times_heads() {
        let (layers, heads, n) = (3, 2, 4);
        let sa = SelfAttnTensor::new(layers, heads, n, vec![0.25; layers * heads * n * n]).unwrap();
        let imp = selfattn_importance(&sa, &LayerSelection::All).unwrap();
        assert!(imp.scores().iter().all(|&s| s == 6.0));
        let imp = selfattn_importance(&sa, &LayerSelection::Single(2)).unwrap();
        assert!(imp.scores().iter().all(|&s| s == 2.0));
    }

    #[test]
    fn joint_token_permutation_permutes_scores() {
        let n = 3;
        let data = vec![0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.3, 0.1];
        let sa = SelfAttnTensor::new(1, 1, n, data.clone()).unwrap();
        let perm = [2, 0, 1];
        let mut pdata = vec![0.0; 9];
        for (i, &pi) in perm.iter().enumerate() {
            for (j, &pj) in perm.iter().enumerate() {
                pdata[i * n + j] = data[pi * n + pj];
            }
        }
        let psa = SelfAttnTensor::new(1, 1, n, pdata).unwrap();
        let a = selfattn_importance(&sa, &LayerSelection::All).unwrap();
        let b = selfattn_importance(&psa, &LayerSelection::All).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            assert_eq!(b.scores()[i], a.scores()[pi]);
        }
    }

    #[test]
    fn selfattn_layer_bounds() {
        let sa = SelfAttnTensor::new(1, 1, 1, vec![1.0]).unwrap();
        assert!(matches!(
            selfattn_importance(&sa, &LayerSelection::Single(1)),
            Err(CatpError::LayerOutOfRange { .. })
        ));
    }
}
