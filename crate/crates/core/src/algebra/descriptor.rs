//! JSON group descriptors with 1-based basis indices.

use super::CarnotGroup;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Serialized form of a [`CarnotGroup`].
///
/// Each structure constant is `[i, j, k, value]` meaning
/// `[X_i, X_j] = value * X_k + ...`. Listing only one orientation of a pair is
/// enough; the antisymmetric partner is filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupDescriptor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub step: usize,
    pub layer_dims: Vec<usize>,
    pub structure_constants: Vec<(usize, usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizontal_metric: Option<Vec<Vec<f64>>>,
}

impl GroupDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("group descriptor: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("descriptor serializes")
    }

    pub fn build(&self) -> Result<CarnotGroup> {
        if self.step != self.layer_dims.len() {
            return Err(Error::group(
                "layer structure",
                format!("step {} but {} layer dimensions", self.step, self.layer_dims.len()),
            ));
        }
        let mut constants = Vec::with_capacity(self.structure_constants.len());
        for &(i, j, k, v) in &self.structure_constants {
            if i == 0 || j == 0 || k == 0 {
                return Err(Error::group("index range", "indices are 1-based"));
            }
            constants.push((i - 1, j - 1, k - 1, v));
        }
        let metric = match &self.horizontal_metric {
            None => None,
            Some(rows) => {
                let d = rows.len();
                if rows.iter().any(|r| r.len() != d) {
                    return Err(Error::group(
                        "horizontal metric shape",
                        "metric rows must form a square matrix",
                    ));
                }
                Some(DMatrix::from_fn(d, d, |a, b| rows[a][b]))
            }
        };
        let name = self.name.clone().unwrap_or_else(|| "custom".into());
        CarnotGroup::from_structure_constants(name, self.layer_dims.clone(), &constants, metric)
    }
}

impl CarnotGroup {
    pub fn from_json(text: &str) -> Result<Self> {
        GroupDescriptor::from_json(text)?.build()
    }

    /// Descriptor listing each bracket once with `i < j`.
    pub fn descriptor(&self) -> GroupDescriptor {
        let d = self.horizontal_dim();
        let metric = self.metric();
        GroupDescriptor {
            name: Some(self.name().to_string()),
            step: self.step(),
            layer_dims: self.layer_dims().to_vec(),
            structure_constants: self
                .structure_constants()
                .iter()
                .map(|c| (c.i + 1, c.j + 1, c.k + 1, c.value))
                .collect(),
            horizontal_metric: Some((0..d).map(|a| (0..d).map(|b| metric[(a, b)]).collect()).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_heisenberg_from_json() {
        let g = CarnotGroup::from_json(
            r#"{"step": 2, "layer_dims": [2, 1], "structure_constants": [[1, 2, 3, 1.0]],
                "horizontal_metric": [[1, 0], [0, 1]]}"#,
        )
        .unwrap();
        assert_eq!(
            g.multiply(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(),
            vec![1.0, 1.0, 0.5]
        );
    }

    #[test]
    fn accepts_both_orientations() {
        let g = CarnotGroup::from_json(
            r#"{"step": 2, "layer_dims": [2, 1], "structure_constants": [[1, 2, 3, 1.0], [2, 1, 3, -1.0]]}"#,
        )
        .unwrap();
        assert_eq!(g.structure_constants().len(), 1);
    }

    #[test]
    fn round_trips_engel() {
        let g = CarnotGroup::engel();
        let back = CarnotGroup::from_json(&g.descriptor().to_json()).unwrap();
        assert_eq!(back.descriptor(), g.descriptor());
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(CarnotGroup::from_json(r#"{"step": 2}"#).is_err());
        assert!(CarnotGroup::from_json(
            r#"{"step": 3, "layer_dims": [2, 1], "structure_constants": [[1, 2, 3, 1.0]]}"#
        )
        .is_err());
        assert!(CarnotGroup::from_json(
            r#"{"step": 2, "layer_dims": [2, 1], "structure_constants": [[0, 2, 3, 1.0]]}"#
        )
        .is_err());
        assert!(CarnotGroup::from_json(
            r#"{"step": 2, "layer_dims": [2, 1], "structure_constants": [[1, 2, 3, 1.0]], "extra": 1}"#
        )
        .is_err());
    }
}
