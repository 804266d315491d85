//! Sub-exponential parameter bookkeeping and random symplectic forms.
//!
//! A window `(k, l)` selects the skew-symmetric Toeplitz matrix `A` with
//! `a_ij = -a_ji = 1` for `k+1 <= i < j <= l`. Its Hilbert-Schmidt norm is
//! reported both from a direct entry count, `(l-k)(l-k-1)`, and from the
//! closed form `(l-k+1)(l-k)` quoted alongside the Gaussian-chaos bound; the
//! two disagree and both are kept.

use crate::error::{Error, Result};
use crate::par;
use crate::rate::{CumulantModel, ModelKind};
use crate::walk::trial_rng;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// `E exp(lambda X) <= exp(nu2 lambda^2 / 2)` for `|lambda| < 1/alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubExpParams {
    pub nu2: f64,
    pub alpha: f64,
}

impl SubExpParams {
    pub fn new(nu2: f64, alpha: f64) -> Result<Self> {
        if !(nu2 >= 0.0) || !(alpha >= 0.0) || !nu2.is_finite() || !alpha.is_finite() {
            return Err(Error::invalid(format!(
                "sub-exponential parameters must be finite and >= 0, got ({nu2}, {alpha})"
            )));
        }
        Ok(SubExpParams { nu2, alpha })
    }
}

/// Parameters of a sum: `alpha = max alpha_i`, and `nu2 = sum nu2_i` for
/// independent summands or `(sum nu_i)^2` otherwise.
pub fn combine_subexp(params: &[SubExpParams], independent: bool) -> Result<SubExpParams> {
    if params.is_empty() {
        return Err(Error::invalid("need at least one summand"));
    }
    let alpha = params.iter().map(|p| p.alpha).fold(0.0, f64::max);
    let nu2 = if independent {
        params.iter().map(|p| p.nu2).sum()
    } else {
        params.iter().map(|p| p.nu2.sqrt()).sum::<f64>().powi(2)
    };
    Ok(SubExpParams { nu2, alpha })
}

/// Norms of the window matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowNorms {
    pub k: usize,
    pub l: usize,
    /// Nonzero entries of `A`, counted one by one.
    pub nonzero_entries: u64,
    /// `sqrt(nonzero_entries)`.
    pub hs: f64,
    /// `l - k`.
    pub op_bound: f64,
    /// `sqrt((l-k+1)(l-k))`.
    pub stated_hs: f64,
    /// Whether the two Hilbert-Schmidt values differ.
    pub discrepancy: bool,
}

fn check_window(k: usize, l: usize) -> Result<()> {
    if k > l {
        return Err(Error::invalid(format!("window needs k <= l, got k = {k}, l = {l}")));
    }
    Ok(())
}

fn in_window(k: usize, l: usize, i: usize, j: usize) -> bool {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    a != b && a > k && b <= l
}

/// `A` as an `l x l` matrix (1-based indices `i, j` map to `i-1, j-1`).
pub fn window_matrix(k: usize, l: usize) -> Result<DMatrix<f64>> {
    check_window(k, l)?;
    Ok(DMatrix::from_fn(l, l, |r, c| {
        let (i, j) = (r + 1, c + 1);
        if !in_window(k, l, i, j) {
            0.0
        } else if i < j {
            1.0
        } else {
            -1.0
        }
    }))
}

pub fn window_matrix_norms(k: usize, l: usize) -> Result<WindowNorms> {
    check_window(k, l)?;
    let mut count = 0u64;
    for i in 1..=l {
        for j in 1..=l {
            count += in_window(k, l, i, j) as u64;
        }
    }
    let w = (l - k) as u64;
    let stated = (w + 1) * w;
    Ok(WindowNorms {
        k,
        l,
        nonzero_entries: count,
        hs: (count as f64).sqrt(),
        op_bound: w as f64,
        stated_hs: (stated as f64).sqrt(),
        discrepancy: count != stated,
    })
}

/// Which pairs `(i, j)` a window sums over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowConvention {
    /// `omega(v^1 + ... + v^k, v^1 + ... + v^l)`.
    PartialSums,
    /// `sum_{i=1}^{k} sum_{j=i+1}^{l} omega(v^i, v^j)`.
    Leading,
    /// `sum_{i=k+1}^{l} sum_{j=i+1}^{l} omega(v^i, v^j) = X^T A Y`.
    Trailing,
}

impl WindowConvention {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "partial_sums" => Ok(WindowConvention::PartialSums),
            "leading" => Ok(WindowConvention::Leading),
            "trailing" => Ok(WindowConvention::Trailing),
            _ => Err(Error::invalid(format!("unknown window convention `{text}`"))),
        }
    }
}

/// Canonical symplectic form on `R^N x R^N`, vectors laid out as `(x, y)`.
pub fn symplectic(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() / 2;
    (0..n).map(|i| a[i] * b[n + i] - a[n + i] * b[i]).sum()
}

fn check_values(values: &[Vec<f64>]) -> Result<()> {
    let Some(first) = values.first() else {
        return Ok(());
    };
    if first.len() % 2 != 0 || first.is_empty() {
        return Err(Error::invalid("vectors must have even length (x, y)"));
    }
    if values.iter().any(|v| v.len() != first.len()) {
        return Err(Error::invalid("all vectors must have the same length"));
    }
    Ok(())
}

fn partial_sum(values: &[Vec<f64>], upto: usize, dim: usize) -> Vec<f64> {
    let mut s = vec![0.0; dim];
    for v in &values[..upto] {
        s.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    s
}

/// `omega(v^1 + ... + v^a, v^1 + ... + v^b)`.
pub fn partial_sum_form(values: &[Vec<f64>], a: usize, b: usize) -> Result<f64> {
    check_values(values)?;
    if a > values.len() || b > values.len() {
        return Err(Error::invalid(format!(
            "partial sum index out of range (n = {})",
            values.len()
        )));
    }
    let dim = values.first().map_or(2, |v| v.len());
    Ok(symplectic(&partial_sum(values, a, dim), &partial_sum(values, b, dim)))
}

/// `W_{k,l}(v)` under the chosen convention; requires `k <= l <= n`.
pub fn window_form(values: &[Vec<f64>], k: usize, l: usize, convention: WindowConvention) -> Result<f64> {
    check_window(k, l)?;
    check_values(values)?;
    if l > values.len() {
        return Err(Error::invalid(format!("window end {l} exceeds n = {}", values.len())));
    }
    let pairs = |lo: usize, hi_i: usize| -> f64 {
        let mut s = 0.0;
        for i in lo..=hi_i {
            for j in i + 1..=l {
                s += symplectic(&values[i - 1], &values[j - 1]);
            }
        }
        s
    };
    Ok(match convention {
        WindowConvention::PartialSums => partial_sum_form(values, k, l)?,
        WindowConvention::Leading => pairs(1, k),
        WindowConvention::Trailing => pairs(k + 1, l),
    })
}

/// One `(k, l, lambda)` cell of the empirical MGF table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfRow {
    pub k: usize,
    pub l: usize,
    pub lambda: f64,
    /// Empirical `E exp(lambda W)`.
    pub mgf: f64,
    pub log_mgf: f64,
    /// `log_mgf / lambda^2` (absent at `lambda = 0`).
    pub ratio: Option<f64>,
    /// `ratio / (l-k)^2`.
    pub scaled_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgfTable {
    pub rows: Vec<MgfRow>,
    /// `lambda` values dropped because `exp(lambda W)` overflowed.
    pub pruned: Vec<f64>,
    pub notices: Vec<String>,
}

impl MgfTable {
    /// `c` in `log_mgf ~ c lambda^2`, fitted by least squares through the origin.
    pub fn curvature(&self, k: usize, l: usize) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for r in self.rows.iter().filter(|r| r.k == k && r.l == l) {
            let x = r.lambda * r.lambda;
            num += x * r.log_mgf;
            den += x * x;
        }
        (den > 0.0).then(|| num / den)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let mut out = String::from("k,l,lambda,mgf,log_mgf,ratio,scaled_ratio\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{},{}\n",
                r.k,
                r.l,
                r.lambda,
                r.mgf,
                r.log_mgf,
                opt(r.ratio),
                opt(r.scaled_ratio)
            ));
        }
        out
    }
}

/// Largest `|lambda|` accepted by [`mgf_bound_check`].
pub const MAX_MGF_LAMBDA: f64 = 0.5;

/// Empirical MGF of `W_{k,l}` for i.i.d. pairs `(x_i, y_i)` drawn from
/// `kind` on `R^2`, over each window and `lambda`.
pub fn mgf_bound_check(
    kind: ModelKind,
    windows: &[(usize, usize)],
    lambdas: &[f64],
    trials: u64,
    seed: u64,
    convention: WindowConvention,
) -> Result<MgfTable> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    if windows.is_empty() {
        return Err(Error::invalid("need at least one window"));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(l.abs() <= MAX_MGF_LAMBDA)) {
        return Err(Error::invalid(format!(
            "|lambda| must be <= {MAX_MGF_LAMBDA}, got {bad}"
        )));
    }
    for &(k, l) in windows {
        check_window(k, l)?;
    }
    let model = CumulantModel::standard(kind, 2);
    let n = windows.iter().map(|w| w.1).max().unwrap_or(0);
    let samples: Vec<Vec<f64>> = par::map_indexed(trials as usize, |t| {
        let mut rng = trial_rng(seed, t as u64);
        let values: Vec<Vec<f64>> = (0..n).map(|_| model.sample(&mut rng)).collect();
        windows
            .iter()
            .map(|&(k, l)| window_form(&values, k, l, convention).expect("validated window"))
            .collect()
    });
    let mut rows = Vec::new();
    let mut pruned = Vec::new();
    let mut notices = Vec::new();
    for &lambda in lambdas {
        let mut overflow = false;
        let mut cells = Vec::with_capacity(windows.len());
        for (w, &(k, l)) in windows.iter().enumerate() {
            let top = samples.iter().map(|s| lambda * s[w]).fold(f64::NEG_INFINITY, f64::max);
            if top > 700.0 {
                overflow = true;
                break;
            }
            let sum: f64 = samples.iter().map(|s| (lambda * s[w] - top).exp()).sum();
            let log_mgf = top + (sum / trials as f64).ln();
            let ratio = (lambda != 0.0).then(|| log_mgf / (lambda * lambda));
            let width = ((l - k) as f64).powi(2);
            cells.push(MgfRow {
                k,
                l,
                lambda,
                mgf: log_mgf.exp(),
                log_mgf,
                ratio,
                scaled_ratio: ratio.filter(|_| width > 0.0).map(|r| r / width),
            });
        }
        if overflow {
            pruned.push(lambda);
            notices.push(format!("lambda = {lambda} pruned: exp(lambda W) overflows"));
        } else {
            rows.extend(cells);
        }
    }
    Ok(MgfTable { rows, pruned, notices })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(nu2: f64, alpha: f64) -> SubExpParams {
        SubExpParams::new(nu2, alpha).unwrap()
    }

    #[test]
    fn subexp_sums() {
        assert_eq!(combine_subexp(&[p(3.0, 2.0)], true).unwrap(), p(3.0, 2.0));
        assert_eq!(combine_subexp(&[p(1.0, 1.0), p(1.0, 1.0)], true).unwrap(), p(2.0, 1.0));
        assert_eq!(combine_subexp(&[p(1.0, 1.0), p(1.0, 1.0)], false).unwrap(), p(4.0, 1.0));
        assert_eq!(
            combine_subexp(&[p(4.0, 0.5), p(9.0, 3.0)], false).unwrap(),
            p(25.0, 3.0)
        );
        assert!(combine_subexp(&[], true).is_err());
        assert!(SubExpParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn window_norm_values() {
        let w = window_matrix_norms(1, 3).unwrap();
        assert_eq!(w.nonzero_entries, 2);
        assert_eq!(w.hs, 2f64.sqrt());
        assert_eq!(w.stated_hs, 6f64.sqrt());
        assert!(w.discrepancy);
        assert_eq!(window_matrix_norms(4, 4).unwrap().hs, 0.0);
        assert!(window_matrix_norms(5, 4).is_err());
    }

    #[test]
    fn matrix_is_skew() {
        let a = window_matrix(2, 7).unwrap();
        assert_eq!(a.transpose(), -a.clone());
        assert_eq!(
            a.iter().filter(|v| **v != 0.0).count() as u64,
            window_matrix_norms(2, 7).unwrap().nonzero_entries
        );
    }

    #[test]
    fn canonical_pair() {
        let v = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(
            partial_sum_form(&v, 1, 2).unwrap() - partial_sum_form(&v, 1, 1).unwrap(),
            1.0
        );
        assert_eq!(window_form(&v, 0, 2, WindowConvention::PartialSums).unwrap(), 0.0);
        assert_eq!(window_form(&v, 0, 2, WindowConvention::Trailing).unwrap(), 1.0);
        assert!(window_form(&v, 1, 3, WindowConvention::Trailing).is_err());
        assert!(WindowConvention::parse("sideways").is_err());
    }

    #[test]
    fn zero_lambda_gives_unit_mgf() {
        let t = mgf_bound_check(
            ModelKind::Gaussian,
            &[(0, 4)],
            &[0.0, 0.1],
            1000,
            2,
            WindowConvention::Trailing,
        )
        .unwrap();
        assert_eq!(t.rows[0].mgf, 1.0);
        assert!(t.rows[0].ratio.is_none());
        assert!(mgf_bound_check(
            ModelKind::Gaussian,
            &[(0, 4)],
            &[0.6],
            10,
            2,
            WindowConvention::Trailing
        )
        .is_err());
    }
}
