use std::fmt;
use std::str::FromStr;

use crate::error::{CatpError, Result};

/// Which cross-attention layers feed the vote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    All,
    First,
    Single(usize),
    /// Ascending, unique layer indices.
    Subset(Vec<usize>),
}

impl LayerSelection {
    /// Builds a subset selection, rejecting empty, unsorted or duplicated lists.
    pub fn subset(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(CatpError::InvalidSelection("empty subset".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CatpError::InvalidSelection(format!(
                "subset indices must be strictly ascending: {indices:?}"
            )));
        }
        Ok(LayerSelection::Subset(indices))
    }

    /// Resolves the selection against a tensor with `layers` layers.
    pub fn resolve(&self, layers: usize) -> Result<Vec<usize>> {
        let check = |index: usize| {
            if index < layers {
                Ok(index)
            } else {
                Err(CatpError::LayerOutOfRange { index, layers })
            }
        };
        match self {
            LayerSelection::All => Ok((0..layers).collect()),
            LayerSelection::First => Ok(vec![check(0)?]),
            LayerSelection::Single(k) => Ok(vec![check(*k)?]),
            LayerSelection::Subset(v) => {
                if v.is_empty() || v.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CatpError::InvalidSelection(format!("{v:?}")));
                }
                v.iter().map(|&i| check(i)).collect()
            }
        }
    }
}

impl fmt::Display for LayerSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelection::All => f.write_str("all"),
            LayerSelection::First => f.write_str("first"),
            LayerSelection::Single(k) => write!(f, "single:{k}"),
            LayerSelection::Subset(v) => {
                f.write_str("subset:")?;
                for (i, idx) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{idx}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for LayerSelection {
    type Err = CatpError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CatpError::InvalidSelection(s.to_string());
        match s {
            "all" => return Ok(LayerSelection::All),
            "first" => return Ok(LayerSelection::First),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("single:") {
            return k.parse().map(LayerSelection::Single).map_err(|_| bad());
        }
        if let Some(list) = s.strip_prefix("subset:") {
            let indices = list
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            return LayerSelection::subset(indices);
        }
        Err(bad())
    }
}
