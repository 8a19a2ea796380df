//! Method dispatch and cross-method comparison observables.
//!
//! Without the downstream model there is no accuracy to measure, so methods
//! are contrasted through kept-set Jaccard overlap and retained importance
//! mass.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{l2_importance, selfattn_importance};
use crate::error::{CatpError, Result};
use crate::layers::LayerSelection;
use crate::selection::{prune, PruneDecision};
use crate::tensor::{AttnTensor, EmbeddingMatrix, SelfAttnTensor};
use crate::voting::{image_weights_from_self_attention, importance, ImportanceVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Catp,
    L2,
    SelfAttn,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Catp => "catp",
            Method::L2 => "l2",
            Method::SelfAttn => "selfattn",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "catp" => Ok(Method::Catp),
            "l2" => Ok(Method::L2),
            "selfattn" => Ok(Method::SelfAttn),
            other => Err(format!(
                "unknown method {other:?} (expected catp, l2 or selfattn)"
            )),
        }
    }
}

/// One configured importance method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub layers: LayerSelection,
    pub weighted: bool,
}

impl MethodSpec {
    pub fn catp(layers: LayerSelection) -> Self {
        Self {
            method: Method::Catp,
            layers,
            weighted: false,
        }
    }

    /// Short label such as `catp[all]`, `catp+w[first]`, `l2`.
    pub fn label(&self) -> String {
        match self.method {
            Method::L2 => "l2".to_string(),
            Method::Catp if self.weighted => format!("catp+w[{}]", self.layers),
            m => format!("{m}[{}]", self.layers),
        }
    }
}

/// Inputs a method may draw on.
#[derive(Debug, Default, Clone, Copy)]
pub struct Inputs<'a> {
    pub cross: Option<&'a AttnTensor>,
    /// Image-token self-attention; source of the vote weights.
    pub image_self_attn: Option<&'a SelfAttnTensor>,
    /// Query-token self-attention; input of the self-attention baseline.
    pub query_self_attn: Option<&'a SelfAttnTensor>,
    pub embeddings: Option<&'a EmbeddingMatrix>,
}

fn missing(what: &str, spec: &MethodSpec) -> CatpError {
    CatpError::InvalidSelection(format!("method {} needs a {what} input", spec.label()))
}

pub fn run_method(spec: &MethodSpec, inputs: &Inputs<'_>) -> Result<ImportanceVector> {
    match spec.method {
        Method::Catp => {
            let cross = inputs
                .cross
                .ok_or_else(|| missing("cross-attention", spec))?;
            if spec.weighted {
                let sa = inputs
                    .image_self_attn
                    .ok_or_else(|| missing("image self-attention", spec))?;
                let w = image_weights_from_self_attention(sa)?;
                importance(cross, &spec.layers, Some(&w))
            } else {
                importance(cross, &spec.layers, None)
            }
        }
        Method::L2 => {
            let emb = inputs
                .embeddings
                .ok_or_else(|| missing("embedding", spec))?;
            Ok(l2_importance(emb))
        }
        Method::SelfAttn => {
            let sa = inputs
                .query_self_attn
                .ok_or_else(|| missing("query self-attention", spec))?;
            selfattn_importance(sa, &spec.layers)
        }
    }
}

/// `|A ∩ B| / |A ∪ B|` over sorted id lists; two empty sets score 1.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Share of total importance carried by `kept`. A vector with zero total
/// mass loses nothing, so it retains 1.
pub fn retained_mass(imp: &ImportanceVector, kept: &[usize]) -> f64 {
    let total = imp.total();
    if total <= 0.0 {
        return 1.0;
    }
    let kept_mass: f64 = kept.iter().map(|&i| imp.scores()[i]).sum();
    (kept_mass / total).clamp(0.0, 1.0)
}

/// One compared method: its label, importance and prune decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonEntry {
    pub label: String,
    pub importance: ImportanceVector,
    pub decision: PruneDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub ratio: f64,
    pub entries: Vec<ComparisonEntry>,
    pub jaccard: Vec<Vec<f64>>,
    /// Each entry's kept mass under its own importance.
    pub retained_mass: Vec<f64>,
    /// Index of the entry whose importance scores every kept set.
    pub reference: usize,
    /// Each entry's kept mass under the reference importance.
    pub reference_mass: Vec<f64>,
}

pub fn compare(
    specs: &[MethodSpec],
    inputs: &Inputs<'_>,
    ratio: f64,
    reference: usize,
) -> Result<Comparison> {
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let imp = run_method(spec, inputs)?;
        let decision = prune(&imp, ratio)?;
        entries.push(ComparisonEntry {
            label: spec.label(),
            importance: imp,
            decision,
        });
    }
    compare_entries(entries, ratio, reference)
}

pub fn compare_entries(
    entries: Vec<ComparisonEntry>,
    ratio: f64,
    reference: usize,
) -> Result<Comparison> {
    if entries.is_empty() {
        return Err(CatpError::InvalidSelection("nothing to compare".into()));
    }
    if reference >= entries.len() {
        return Err(CatpError::InvalidSelection(format!(
            "reference entry {reference} out of range"
        )));
    }
    let n = entries[0].importance.len();
    if let Some(e) = entries.iter().find(|e| e.importance.len() != n) {
        return Err(CatpError::InvalidSelection(format!(
            "{} scores {} tokens but {} scores {n}",
            e.label,
            e.importance.len(),
            entries[0].label
        )));
    }
    let jaccard = entries
        .iter()
        .map(|a| {
            entries
                .iter()
                .map(|b| jaccard(&a.decision.kept, &b.decision.kept))
                .collect()
        })
        .collect();
    let retained = entries
        .iter()
        .map(|e| retained_mass(&e.importance, &e.decision.kept))
        .collect();
    let ref_imp = &entries[reference].importance;
    let reference_mass = entries
        .iter()
        .map(|e| retained_mass(ref_imp, &e.decision.kept))
        .collect();
    Ok(Comparison {
        ratio,
        entries,
        jaccard,
        retained_mass: retained,
        reference,
        reference_mass,
    })
}

/// CATP on each single layer, then on all layers; the all-layers entry is
/// the reference.
pub fn sweep(cross: &AttnTensor, ratio: f64) -> Result<Comparison> {
    let mut specs: Vec<MethodSpec> = (0..cross.layers())
        .map(|k| MethodSpec::catp(LayerSelection::Single(k)))
        .collect();
    specs.push(MethodSpec::catp(LayerSelection::All));
    let inputs = Inputs {
        cross: Some(cross),
        ..Inputs::default()
    };
    compare(&specs, &inputs, ratio, specs.len() - 1)
}
