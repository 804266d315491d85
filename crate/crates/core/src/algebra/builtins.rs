//! Built-in example groups.

use super::CarnotGroup;
use crate::error::{Error, Result};
use nalgebra::DMatrix;

impl CarnotGroup {
    /// Heisenberg group of horizontal dimension `d1 = 2n`:
    /// `[X_i, X_{n+i}] = X_{2n+1}`, so the product carries the factor 1/2.
    pub fn heisenberg(d1: usize) -> Result<Self> {
        if d1 == 0 || d1 % 2 != 0 {
            return Err(Error::invalid(format!(
                "Heisenberg horizontal dimension must be even and positive, got {d1}"
            )));
        }
        let n = d1 / 2;
        let constants: Vec<_> = (0..n).map(|i| (i, n + i, d1, 1.0)).collect();
        Self::from_structure_constants(format!("heisenberg({d1})"), vec![d1, 1], &constants, None)
    }

    /// Engel group, layers `[2, 1, 1]`, with `[X_1, X_2] = X_3` and
    /// `[X_1, X_3] = X_4`.
    pub fn engel() -> Self {
        Self::from_structure_constants("engel", vec![2, 1, 1], &[(0, 1, 2, 1.0), (0, 2, 3, 1.0)], None)
            .expect("built-in Engel constants are valid")
    }

    /// Filiform group of the given step: layers `[2, 1, ..., 1]`,
    /// `[X_1, X_k] = X_{k+1}` for `k = 2..=step`.
    pub fn filiform(step: usize) -> Result<Self> {
        if step < 2 {
            return Err(Error::invalid(format!("filiform step must be >= 2, got {step}")));
        }
        let mut dims = vec![2];
        dims.extend(std::iter::repeat_n(1, step - 1));
        let constants: Vec<_> = (1..step).map(|k| (0, k, k + 1, 1.0)).collect();
        Self::from_structure_constants(format!("filiform({step})"), dims, &constants, None)
    }

    /// Abelian `R^d` viewed as a step-1 group; the product is vector addition.
    pub fn euclidean(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("Euclidean dimension must be positive"));
        }
        Self::from_structure_constants(format!("euclidean({d})"), vec![d], &[], None)
    }

    /// Step-2 group whose product is `x + y + (h_x^T A_j h_y)_j` for the given
    /// skew-symmetric matrices. Requires the `A_j` to be linearly independent.
    pub fn step2_from_matrices(forms: &[DMatrix<f64>], metric: Option<DMatrix<f64>>) -> Result<Self> {
        let law = super::Step2Law::new(forms.to_vec())?;
        let d1 = law.horizontal_dim();
        let mut constants = Vec::new();
        for (j, a) in forms.iter().enumerate() {
            for k in 0..d1 {
                for l in (k + 1)..d1 {
                    let v = 2.0 * a[(k, l)];
                    if v != 0.0 {
                        constants.push((k, l, d1 + j, v));
                    }
                }
            }
        }
        Self::from_structure_constants(
            format!("step2({d1},{})", forms.len()),
            vec![d1, forms.len()],
            &constants,
            metric,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_pass_validation() {
        for g in [
            CarnotGroup::heisenberg(2).unwrap(),
            CarnotGroup::heisenberg(6).unwrap(),
            CarnotGroup::engel(),
            CarnotGroup::filiform(6).unwrap(),
            CarnotGroup::euclidean(3).unwrap(),
        ] {
            assert!(g.validation().iter().all(|c| c.passed), "{}", g.name());
        }
    }

    #[test]
    fn heisenberg_rejects_odd_dimension() {
        assert!(CarnotGroup::heisenberg(3).is_err());
        assert!(CarnotGroup::heisenberg(0).is_err());
    }

    #[test]
    fn step2_matrices_round_trip() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, -0.2, -0.5, 0.0, 0.3, 0.2, -0.3, 0.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        let g = CarnotGroup::step2_from_matrices(&[a.clone(), b.clone()], None).unwrap();
        let law = g.step2_law().unwrap();
        assert!((&law.forms()[0] - &a).amax() < 1e-15);
        assert!((&law.forms()[1] - &b).amax() < 1e-15);
    }

    #[test]
    fn step2_matrices_reject_dependent_forms() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let err = CarnotGroup::step2_from_matrices(&[a.clone(), a * 2.0], None).unwrap_err();
        assert!(matches!(err, Error::InvalidGroup { ref identity, .. } if identity.contains("generation")));
    }

    #[test]
    fn euclidean_product_is_sum() {
        let g = CarnotGroup::euclidean(2).unwrap();
        assert_eq!(g.multiply(&[1.0, 2.0], &[0.5, -1.0]).unwrap(), vec![1.5, 1.0]);
        assert_eq!(g.homogeneous_norm(&[3.0, 4.0]), 5.0);
    }
}
