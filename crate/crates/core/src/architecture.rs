use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::activation::{parse_activation, ActivationKind};
use crate::error::{Error, Result};

/// Ordered per-layer activation assignment; entry `i` follows linear layer `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Architecture(Vec<ActivationKind>);

impl Architecture {
    pub fn new(kinds: Vec<ActivationKind>) -> Self {
        Self(kinds)
    }

    /// `ReLU` in every hidden layer, `Softmax` on the output.
    pub fn standard(n_layers: usize) -> Result<Self> {
        if n_layers < 2 {
            return Err(Error::contract(format!(
                "standard architecture needs at least 2 layers, got {n_layers}"
            )));
        }
        let mut kinds = vec![ActivationKind::Relu; n_layers - 1];
        kinds.push(ActivationKind::Softmax);
        Ok(Self(kinds))
    }

    /// Maps registry indices to kinds.
    pub fn from_indices(indices: &[usize]) -> Result<Self> {
        indices
            .iter()
            .map(|&i| {
                ActivationKind::from_index(i)
                    .ok_or_else(|| Error::contract(format!("activation index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|k| k.index()).collect()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.0.iter().map(|k| k.name()).collect()
    }

    pub fn kinds(&self) -> &[ActivationKind] {
        &self.0
    }
}

impl Deref for Architecture {
    type Target = [ActivationKind];

    fn deref(&self) -> &[ActivationKind] {
        &self.0
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join(","))
    }
}

/// Accepts a comma-separated list of canonical names (`"Sinh,Abs,ReLU6,Exp,LogSoftmax"`)
/// or the `standard:<layers>` shorthand.
impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("standard:") {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Config(format!("bad layer count in `{s}`")))?;
            return Self::standard(n);
        }
        if s.is_empty() {
            return Err(Error::Config("empty architecture".into()));
        }
        s.split(',')
            .map(|name| parse_activation(name.trim()))
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}
