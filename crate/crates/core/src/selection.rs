//! Keep/prune decisions from importance scores.

use crate::error::{CatpError, Result};
use crate::voting::ImportanceVector;

/// Kept and pruned query-token ids, both ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneDecision {
    pub kept: Vec<usize>,
    pub pruned: Vec<usize>,
    pub keep_count: usize,
    pub ratio: f64,
}

/// Number of tokens kept at prune ratio `p`: `L0 - floor(L0 * p)`.
pub fn keep_count(n_query: usize, p: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&p) {
        return Err(CatpError::RatioOutOfRange(p));
    }
    let pruned = (n_query as f64 * p).floor() as usize;
    Ok(n_query - pruned.min(n_query))
}

/// Token ids ordered from most to least important; equal scores keep the
/// lower index first.
pub fn importance_order(imp: &ImportanceVector) -> Vec<usize> {
    let s = imp.scores();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    order
}

/// Keeps the `k` highest-scoring tokens. The recorded ratio is `(L0 - k) / L0`.
pub fn select_tokens(imp: &ImportanceVector, k: usize) -> Result<PruneDecision> {
    let n = imp.len();
    if k > n {
        return Err(CatpError::KOutOfRange { k, n });
    }
    let order = importance_order(imp);
    let mut kept = order[..k].to_vec();
    let mut pruned = order[k..].to_vec();
    kept.sort_unstable();
    pruned.sort_unstable();
    let ratio = if n == 0 {
        0.0
    } else {
        (n - k) as f64 / n as f64
    };
    Ok(PruneDecision {
        kept,
        pruned,
        keep_count: k,
        ratio,
    })
}

/// Prunes the `floor(L0 * p)` least important tokens.
pub fn prune(imp: &ImportanceVector, p: f64) -> Result<PruneDecision> {
    let k = keep_count(imp.len(), p)?;
    let mut decision = select_tokens(imp, k)?;
    decision.ratio = p;
    Ok(decision)
}
