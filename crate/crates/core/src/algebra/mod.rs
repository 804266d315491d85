//! Homogeneous Carnot groups in exponential coordinates of the first kind.
//!
//! A group is described by its layer dimensions `d_1..d_r`, structure
//! constants `c_ij^k` in an adapted basis and an inner product on the first
//! layer `H`. Group elements and Lie algebra vectors are both plain coordinate
//! vectors of length `N = sum d_i`: `exp` and `log` are the identity on
//! coordinates and `x^{-1} = -x`.
//!
//! All operations are generic over [`Real`] so the same group law runs in
//! `f64` and in double-double precision.

mod bcdh;
mod builtins;
mod descriptor;
mod step2;

pub use bcdh::{dynkin_coefficient, BcdhTable, Letter};
pub use descriptor::GroupDescriptor;
pub use step2::{step2_multiply, Step2Law};

use crate::error::{check_len, Error, Result};
use crate::real::Real;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Largest supported nilpotency step.
pub const MAX_STEP: usize = 6;

/// Absolute tolerance on structure-constant identities (Jacobi, antisymmetry).
pub const STRUCTURE_TOL: f64 = 1e-12;

/// One nonzero bracket `[X_i, X_j] = c X_k` with `i < j` (0-based).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureConstant {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

/// Outcome of one structural check performed at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckResult {
    pub identity: String,
    pub passed: bool,
    pub max_residual: f64,
}

/// Immutable, validated descriptor of a homogeneous Carnot group.
#[derive(Clone, Debug)]
pub struct CarnotGroup {
    name: String,
    step: usize,
    layer_dims: Vec<usize>,
    layer_offsets: Vec<usize>,
    homogeneity: Vec<usize>,
    /// Sparse constants with `i < j`.
    constants: Vec<StructureConstant>,
    metric: DMatrix<f64>,
    /// Lower Cholesky factor `L` with `metric = L L^T`.
    metric_factor: DMatrix<f64>,
    table: Arc<BcdhTable>,
    pushforward: Vec<(i64, i64)>,
    checks: Vec<CheckResult>,
}

impl CarnotGroup {
    /// Builds and validates a group from 0-based structure constants.
    ///
    /// `constants` may list each bracket once (either orientation) or both
    /// orientations; listing both with inconsistent values is rejected.
    pub fn from_structure_constants(
        name: impl Into<String>,
        layer_dims: Vec<usize>,
        constants: &[(usize, usize, usize, f64)],
        metric: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let step = layer_dims.len();
        if step == 0 {
            return Err(Error::group("layer structure", "no layers given"));
        }
        if step > MAX_STEP {
            return Err(Error::group(
                "supported step",
                format!("step {step} exceeds the cap of {MAX_STEP}"),
            ));
        }
        if layer_dims.contains(&0) {
            return Err(Error::group("layer structure", "every layer needs d_i >= 1"));
        }
        let n: usize = layer_dims.iter().sum();
        let mut layer_offsets = Vec::with_capacity(step + 1);
        let mut homogeneity = Vec::with_capacity(n);
        let mut acc = 0;
        for (layer, &d) in layer_dims.iter().enumerate() {
            layer_offsets.push(acc);
            acc += d;
            homogeneity.extend(std::iter::repeat_n(layer + 1, d));
        }
        layer_offsets.push(acc);

        let d1 = layer_dims[0];
        let metric = metric.unwrap_or_else(|| DMatrix::identity(d1, d1));
        let metric_factor = validate_metric(&metric, d1)?;

        let dense = densify(n, constants)?;
        let mut checks = Vec::new();
        checks.push(check_antisymmetry(n, &dense)?);
        checks.push(check_grading(n, &dense, &homogeneity)?);
        checks.push(check_jacobi(n, &dense)?);
        checks.push(check_generation(&layer_dims, &layer_offsets, &dense)?);
        checks.push(CheckResult {
            identity: "horizontal metric positive definite".into(),
            passed: true,
            max_residual: 0.0,
        });

        let mut sparse = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in 0..n {
                    let value = dense[(i * n + j) * n + k];
                    if value != 0.0 {
                        sparse.push(StructureConstant { i, j, k, value });
                    }
                }
            }
        }

        let table = Arc::new(BcdhTable::new(step));
        let pushforward = table
            .pushforward_coefficients()
            .into_iter()
            .map(|r| (*r.numer(), *r.denom()))
            .collect();

        Ok(CarnotGroup {
            name: name.into(),
            step,
            layer_dims,
            layer_offsets,
            homogeneity,
            constants: sparse,
            metric,
            metric_factor,
            table,
            pushforward,
            checks,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Topological dimension `N`.
    pub fn dim(&self) -> usize {
        *self.layer_offsets.last().unwrap()
    }

    /// Dimension `d_1` of the horizontal layer.
    pub fn horizontal_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Homogeneity `sigma_j` of each coordinate.
    pub fn homogeneity(&self) -> &[usize] {
        &self.homogeneity
    }

    /// `sum_i i * d_i`.
    pub fn homogeneous_dimension(&self) -> usize {
        self.layer_dims.iter().enumerate().map(|(i, d)| (i + 1) * d).sum()
    }

    /// Coordinate range of layer `layer` (1-based).
    pub fn layer_range(&self, layer: usize) -> std::ops::Range<usize> {
        self.layer_offsets[layer - 1]..self.layer_offsets[layer]
    }

    pub fn structure_constants(&self) -> &[StructureConstant] {
        &self.constants
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// Lower Cholesky factor `L` of the horizontal metric.
    pub fn metric_factor(&self) -> &DMatrix<f64> {
        &self.metric_factor
    }

    pub fn validation(&self) -> &[CheckResult] {
        &self.checks
    }

    pub fn bcdh_table(&self) -> &BcdhTable {
        &self.table
    }

    pub fn identity<S: Real>(&self) -> Vec<S> {
        vec![S::zero(); self.dim()]
    }

    fn check_dim<S>(&self, v: &[S]) -> Result<()> {
        check_len(self.dim(), v.len())
    }

    /// `[X, Y]` accumulated into `out` (`out += [x, y]`).
    #[inline]
    pub(crate) fn bracket_acc<S: Real>(&self, x: &[S], y: &[S], out: &mut [S]) {
        for c in &self.constants {
            let w = x[c.i] * y[c.j] - x[c.j] * y[c.i];
            if !w.is_zero() {
                out[c.k] += w * S::from_f64(c.value);
            }
        }
    }

    /// Lie bracket `[X, Y] = sum_{i,j} x_i y_j c_ij^k X_k`.
    pub fn bracket<S: Real>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let mut out = self.identity();
        self.bracket_acc(x, y, &mut out);
        Ok(out)
    }

    /// `log(e^X e^Y)` from the truncated series.
    pub fn bcdh<S: Real>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let mut out = vec![S::zero(); x.len()];
        self.bcdh_into(x, y, &mut out);
        Ok(out)
    }

    /// Unchecked product written into `out`.
    pub(crate) fn bcdh_into<S: Real>(&self, x: &[S], y: &[S], out: &mut [S]) {
        let n = x.len();
        for k in 0..n {
            out[k] = x[k] + y[k];
        }
        if self.step < 2 {
            return;
        }
        if self.step == 2 {
            let mut br = vec![S::zero(); n];
            self.bracket_acc(x, y, &mut br);
            let half = S::from_f64(0.5);
            for k in 0..n {
                out[k] += half * br[k];
            }
            return;
        }
        let nodes = self.table.nodes();
        let mut values: Vec<Vec<S>> = Vec::with_capacity(nodes.len());
        values.push(x.to_vec());
        for node in &nodes[1..] {
            let mut v = vec![S::zero(); n];
            let arg = match node.letter {
                Letter::X => x,
                Letter::Y => y,
            };
            self.bracket_acc(arg, &values[node.parent], &mut v);
            if *node.coeff.numer() != 0 {
                let c = S::from_ratio(*node.coeff.numer(), *node.coeff.denom());
                for k in 0..n {
                    out[k] += c * v[k];
                }
            }
            values.push(v);
        }
    }

    /// Group product `x * y`.
    pub fn multiply<S: Real>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        self.bcdh(x, y)
    }

    /// Product together with its directional derivative along `(dx, dy)`.
    pub fn multiply_tangent<S: Real>(&self, x: &[S], y: &[S], dx: &[S], dy: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        for v in [x, y, dx, dy] {
            self.check_dim(v)?;
        }
        let n = x.len();
        let mut out = vec![S::zero(); n];
        let mut dout = vec![S::zero(); n];
        self.multiply_tangent_into(x, y, dx, dy, &mut out, &mut dout);
        Ok((out, dout))
    }

    pub(crate) fn multiply_tangent_into<S: Real>(
        &self,
        x: &[S],
        y: &[S],
        dx: &[S],
        dy: &[S],
        out: &mut [S],
        dout: &mut [S],
    ) {
        let n = x.len();
        for k in 0..n {
            out[k] = x[k] + y[k];
            dout[k] = dx[k] + dy[k];
        }
        if self.step < 2 {
            return;
        }
        let nodes = self.table.nodes();
        let mut values: Vec<(Vec<S>, Vec<S>)> = Vec::with_capacity(nodes.len());
        values.push((x.to_vec(), dx.to_vec()));
        for node in &nodes[1..] {
            let (arg, darg) = match node.letter {
                Letter::X => (x, dx),
                Letter::Y => (y, dy),
            };
            let (pv, pdv) = &values[node.parent];
            let mut v = vec![S::zero(); n];
            let mut dv = vec![S::zero(); n];
            self.bracket_acc(arg, pv, &mut v);
            self.bracket_acc(darg, pv, &mut dv);
            self.bracket_acc(arg, pdv, &mut dv);
            if *node.coeff.numer() != 0 {
                let c = S::from_ratio(*node.coeff.numer(), *node.coeff.denom());
                for k in 0..n {
                    out[k] += c * v[k];
                    dout[k] += c * dv[k];
                }
            }
            values.push((v, dv));
        }
    }

    /// Jacobians of `(x, y) -> x * y` at `(x, y)`: the full `N x N` block in
    /// `x` and the `N x d_1` block in the horizontal part of `y`, both
    /// row-major.
    pub fn multiply_jacobians(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let d1 = self.horizontal_dim();
        let mut jx = vec![0.0; n * n];
        let mut jy = vec![0.0; n * d1];
        let zero = vec![0.0; n];
        let mut unit = vec![0.0; n];
        let mut out = vec![0.0; n];
        let mut dout = vec![0.0; n];
        for col in 0..n {
            unit[col] = 1.0;
            self.multiply_tangent_into(x, y, &unit, &zero, &mut out, &mut dout);
            for row in 0..n {
                jx[row * n + col] = dout[row];
            }
            if col < d1 {
                self.multiply_tangent_into(x, y, &zero, &unit, &mut out, &mut dout);
                for row in 0..n {
                    jy[row * d1 + col] = dout[row];
                }
            }
            unit[col] = 0.0;
        }
        (jx, jy)
    }

    /// `x^{-1} = -x`.
    pub fn inverse<S: Real>(&self, x: &[S]) -> Vec<S> {
        x.iter().map(|v| -*v).collect()
    }

    /// `x^{-1} * y`, the left-invariant difference element.
    pub fn difference<S: Real>(&self, x: &[S], y: &[S]) -> Result<Vec<S>> {
        self.multiply(&self.inverse(x), y)
    }

    /// Dilation `D_a`: coordinate `j` scaled by `a^{sigma_j}`.
    pub fn dilate<S: Real>(&self, a: f64, x: &[S]) -> Result<Vec<S>> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::invalid(format!("dilation factor must be > 0, got {a}")));
        }
        self.check_dim(x)?;
        let a = S::from_f64(a);
        let mut powers = vec![S::from_f64(1.0); self.step + 1];
        for i in 1..=self.step {
            powers[i] = powers[i - 1] * a;
        }
        Ok(x.iter().zip(&self.homogeneity).map(|(v, &s)| *v * powers[s]).collect())
    }

    /// `(L_x)_* v = v + sum_{p=1}^{r-1} c_p ad_X^p v`.
    pub fn left_pushforward<S: Real>(&self, x: &[S], v: &[S]) -> Result<Vec<S>> {
        self.check_dim(x)?;
        self.check_dim(v)?;
        let mut out = v.to_vec();
        self.pushforward_acc(x, v, &mut out);
        Ok(out)
    }

    /// `out += sum_p c_p ad_X^p v`.
    pub(crate) fn pushforward_acc<S: Real>(&self, x: &[S], v: &[S], out: &mut [S]) {
        let n = x.len();
        let mut cur = v.to_vec();
        for &(num, den) in &self.pushforward {
            let mut next = vec![S::zero(); n];
            self.bracket_acc(x, &cur, &mut next);
            if num != 0 {
                let c = S::from_ratio(num, den);
                for k in 0..n {
                    out[k] += c * next[k];
                }
            }
            cur = next;
        }
    }

    /// Horizontal logarithm `L(x) = P_H(log x)`: the layer-1 slice.
    pub fn horizontal_log<S: Real>(&self, x: &[S]) -> Vec<S> {
        x[..self.horizontal_dim()].to_vec()
    }

    /// Embeds `h in H` as a group element `exp(h)`.
    pub fn exp_horizontal<S: Real>(&self, h: &[S]) -> Result<Vec<S>> {
        check_len(self.horizontal_dim(), h.len())?;
        let mut x = self.identity();
        x[..h.len()].copy_from_slice(h);
        Ok(x)
    }

    /// `|h|_H = sqrt(h^T G h)`.
    pub fn horizontal_norm(&self, h: &[f64]) -> f64 {
        self.horizontal_inner(h, h).max(0.0).sqrt()
    }

    pub fn horizontal_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.horizontal_dim();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += a[i] * self.metric[(i, j)] * b[j];
            }
        }
        s
    }

    /// `|x|_G = (sum_j ||x^(j)||^{2 r!/j})^{1/(2 r!)}`, evaluated in scaled form
    /// so the large exponents cannot overflow.
    pub fn homogeneous_norm(&self, x: &[f64]) -> f64 {
        let p = 2.0 * (1..=self.step).map(|i| i as f64).product::<f64>();
        let roots: Vec<f64> = (1..=self.step)
            .map(|j| {
                let r = self.layer_range(j);
                let e = x[r].iter().map(|v| v * v).sum::<f64>().sqrt();
                e.powf(1.0 / j as f64)
            })
            .collect();
        let top = roots.iter().cloned().fold(0.0, f64::max);
        if top == 0.0 || !top.is_finite() {
            return top;
        }
        let s: f64 = roots.iter().map(|t| (t / top).powf(p)).sum();
        top * s.powf(1.0 / p)
    }

    /// `|x^{-1} * y|_G`, the homogeneous-norm surrogate for `rho(x, y)`.
    pub fn norm_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.homogeneous_norm(&self.difference(x, y)?))
    }

    /// Step-2 closed-form law derived from this group's constants.
    pub fn step2_law(&self) -> Result<Step2Law> {
        Step2Law::from_group(self)
    }
}

fn validate_metric(metric: &DMatrix<f64>, d1: usize) -> Result<DMatrix<f64>> {
    if metric.nrows() != d1 || metric.ncols() != d1 {
        return Err(Error::group(
            "horizontal metric shape",
            format!("expected {d1}x{d1}, got {}x{}", metric.nrows(), metric.ncols()),
        ));
    }
    let asym = (metric - metric.transpose()).amax();
    if asym > STRUCTURE_TOL || metric.iter().any(|v| !v.is_finite()) {
        return Err(Error::group(
            "horizontal metric symmetric",
            format!("max |G - G^T| = {asym:e}"),
        ));
    }
    let eig = metric.clone().symmetric_eigen().eigenvalues;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::group(
            "horizontal metric positive definite",
            format!("smallest eigenvalue {min:e}"),
        ));
    }
    let chol = metric
        .clone()
        .cholesky()
        .ok_or_else(|| Error::group("horizontal metric positive definite", "Cholesky failed"))?;
    Ok(chol.l())
}

fn densify(n: usize, constants: &[(usize, usize, usize, f64)]) -> Result<Vec<f64>> {
    let mut dense = vec![0.0; n * n * n];
    let mut seen = vec![false; n * n * n];
    for &(i, j, k, value) in constants {
        if i >= n || j >= n || k >= n {
            return Err(Error::group(
                "index range",
                format!("constant ({}, {}, {}) outside 1..={n}", i + 1, j + 1, k + 1),
            ));
        }
        if !value.is_finite() {
            return Err(Error::group(
                "finite constants",
                format!("c_{}{}^{} = {value}", i + 1, j + 1, k + 1),
            ));
        }
        let idx = (i * n + j) * n + k;
        if seen[idx] {
            return Err(Error::group(
                "unique constants",
                format!("c_{}{}^{} listed twice", i + 1, j + 1, k + 1),
            ));
        }
        seen[idx] = true;
        dense[idx] = value;
    }
    // complete the antisymmetric partner where only one orientation was given
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let a = (i * n + j) * n + k;
                let b = (j * n + i) * n + k;
                if seen[a] && !seen[b] {
                    dense[b] = -dense[a];
                }
            }
        }
    }
    Ok(dense)
}

fn check_antisymmetry(n: usize, c: &[f64]) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let r = (c[(i * n + j) * n + k] + c[(j * n + i) * n + k]).abs();
                worst = worst.max(r);
            }
        }
    }
    if worst > STRUCTURE_TOL {
        return Err(Error::group(
            "antisymmetry c_ij^k = -c_ji^k",
            format!("max residual {worst:e}"),
        ));
    }
    Ok(CheckResult {
        identity: "antisymmetry".into(),
        passed: true,
        max_residual: worst,
    })
}

fn check_grading(n: usize, c: &[f64], sigma: &[usize]) -> Result<CheckResult> {
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = c[(i * n + j) * n + k];
                if v != 0.0 && sigma[k] != sigma[i] + sigma[j] {
                    return Err(Error::group(
                        "grading [V_i, V_j] in V_{i+j}",
                        format!(
                            "c_{}{}^{} = {v} but sigma = ({}, {}, {})",
                            i + 1,
                            j + 1,
                            k + 1,
                            sigma[i],
                            sigma[j],
                            sigma[k]
                        ),
                    ));
                }
            }
        }
    }
    Ok(CheckResult {
        identity: "grading".into(),
        passed: true,
        max_residual: 0.0,
    })
}

fn check_jacobi(n: usize, c: &[f64]) -> Result<CheckResult> {
    let at = |i: usize, j: usize, k: usize| c[(i * n + j) * n + k];
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                for out in 0..n {
                    // [X_i,[X_j,X_l]] + [X_j,[X_l,X_i]] + [X_l,[X_i,X_j]]
                    let mut s = 0.0;
                    for m in 0..n {
                        s += at(j, l, m) * at(i, m, out) + at(l, i, m) * at(j, m, out) + at(i, j, m) * at(l, m, out);
                    }
                    worst = worst.max(s.abs());
                }
            }
        }
    }
    if worst > STRUCTURE_TOL {
        return Err(Error::group("Jacobi identity", format!("max residual {worst:e}")));
    }
    Ok(CheckResult {
        identity: "Jacobi".into(),
        passed: true,
        max_residual: worst,
    })
}

fn check_generation(dims: &[usize], offsets: &[usize], c: &[f64]) -> Result<CheckResult> {
    let n = *offsets.last().unwrap();
    for layer in 2..=dims.len() {
        let lo = offsets[layer - 1];
        let d = dims[layer - 1];
        let prev = offsets[layer - 2]..offsets[layer - 1];
        let mut cols: Vec<f64> = Vec::new();
        let mut count = 0;
        for a in 0..dims[0] {
            for b in prev.clone() {
                for k in 0..d {
                    cols.push(c[(a * n + b) * n + lo + k]);
                }
                count += 1;
            }
        }
        let m = DMatrix::from_column_slice(d, count, &cols);
        let rank = m.rank(1e-9 * m.amax().max(1.0));
        if rank < d {
            return Err(Error::group(
                "generation [V_1, V_{i-1}] = V_i",
                format!("layer {layer} has dimension {d} but brackets span rank {rank}"),
            ));
        }
    }
    Ok(CheckResult {
        identity: "generation".into(),
        passed: true,
        max_residual: 0.0,
    })
}
