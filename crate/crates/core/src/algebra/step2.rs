//! Closed-form group law for step-2 groups.
//!
//! With `h = x^(1)` the horizontal part, the product is
//! `(x * y)_j = x_j + y_j + h_x^T A_j h_y` for each second-layer index `j`,
//! where the `A_j` are skew-symmetric.

use super::CarnotGroup;
use crate::error::{check_len, Error, Result};
use nalgebra::DMatrix;

/// Skew-symmetric bilinear forms of a step-2 group.
#[derive(Clone, Debug, PartialEq)]
pub struct Step2Law {
    horizontal_dim: usize,
    /// One matrix per second-layer coordinate.
    forms: Vec<DMatrix<f64>>,
}

impl Step2Law {
    /// Reads `A_j[k][l] = c_kl^j / 2` off a step-2 group.
    pub fn from_group(group: &CarnotGroup) -> Result<Self> {
        if group.step() != 2 {
            return Err(Error::NotStep2(group.step()));
        }
        let d1 = group.horizontal_dim();
        let d2 = group.layer_dims()[1];
        let mut forms = vec![DMatrix::zeros(d1, d1); d2];
        for c in group.structure_constants() {
            let a = &mut forms[c.k - d1];
            a[(c.i, c.j)] += 0.5 * c.value;
            a[(c.j, c.i)] -= 0.5 * c.value;
        }
        Ok(Step2Law {
            horizontal_dim: d1,
            forms,
        })
    }

    /// Wraps explicit matrices, checking shape and skew-symmetry.
    pub fn new(forms: Vec<DMatrix<f64>>) -> Result<Self> {
        let d1 = forms
            .first()
            .map(|a| a.nrows())
            .ok_or_else(|| Error::group("layer structure", "no second-layer forms given"))?;
        for (idx, a) in forms.iter().enumerate() {
            if a.nrows() != d1 || a.ncols() != d1 {
                return Err(Error::group(
                    "form shape",
                    format!("A_{} is {}x{}, expected {d1}x{d1}", idx + 1, a.nrows(), a.ncols()),
                ));
            }
            let skew = (a + a.transpose()).amax();
            if skew > super::STRUCTURE_TOL || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::group(
                    "antisymmetry A = -A^T",
                    format!("A_{} has max |A + A^T| = {skew:e}", idx + 1),
                ));
            }
        }
        Ok(Step2Law {
            horizontal_dim: d1,
            forms,
        })
    }

    pub fn horizontal_dim(&self) -> usize {
        self.horizontal_dim
    }

    pub fn forms(&self) -> &[DMatrix<f64>] {
        &self.forms
    }

    /// `Q_j(x, y) = x^(1)T A_j y^(1)` for every second-layer `j`.
    pub fn q(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let d1 = self.horizontal_dim;
        self.forms
            .iter()
            .map(|a| {
                let mut s = 0.0;
                for k in 0..d1 {
                    if x[k] == 0.0 {
                        continue;
                    }
                    for l in 0..d1 {
                        s += x[k] * a[(k, l)] * y[l];
                    }
                }
                s
            })
            .collect()
    }

    /// Closed-form product.
    pub fn multiply(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let n = self.horizontal_dim + self.forms.len();
        check_len(n, x.len())?;
        check_len(n, y.len())?;
        let q = self.q(x, y);
        let mut out: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        for (j, v) in q.into_iter().enumerate() {
            out[self.horizontal_dim + j] += v;
        }
        Ok(out)
    }
}

/// Closed-form product of a step-2 law.
pub fn step2_multiply(law: &Step2Law, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    law.multiply(x, y)
}
