//! Step distributions on `H` described by their cumulant generating function.
//!
//! Every model is defined in an `H`-orthonormal frame: with `G = L L^T` the
//! horizontal metric, a step is `X = L^{-T} Z` where `Z` has one of the
//! shipped laws on `R^{d_1}`. Then `Lambda(lambda) = kappa(L^T lambda)` and
//! `Lambda*(u) = kappa*(L^T u)`, where `kappa` is the cumulant generating
//! function of `Z`.

use crate::algebra::CarnotGroup;
use crate::error::{check_len, Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Law of `Z` in the orthonormal frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ModelKind {
    /// Standard normal.
    Gaussian,
    /// Independent uniform coordinates on `[-1, 1]`.
    UniformCube,
    /// Uniform on the sphere of the given radius.
    Sphere { radius: f64 },
    /// Uniform on the ball of the given radius.
    Ball { radius: f64 },
    /// Independent symmetric signs.
    Rademacher,
}

impl ModelKind {
    pub fn name(&self) -> String {
        match self {
            ModelKind::Gaussian => "gaussian".into(),
            ModelKind::UniformCube => "uniform_cube".into(),
            ModelKind::Sphere { radius } => format!("sphere({radius})"),
            ModelKind::Ball { radius } => format!("ball({radius})"),
            ModelKind::Rademacher => "rademacher".into(),
        }
    }

    /// Parses `gaussian`, `uniform_cube`, `rademacher`, `sphere`, `sphere:R`,
    /// `ball`, `ball:R`.
    pub fn parse(text: &str) -> Result<Self> {
        let (head, arg) = match text.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (text, None),
        };
        let radius = || -> Result<f64> {
            let r = match arg {
                None => 1.0,
                Some(a) => a
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad radius in model `{text}`")))?,
            };
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::invalid(format!("radius must be > 0 in model `{text}`")));
            }
            Ok(r)
        };
        let kind = match head {
            "gaussian" => ModelKind::Gaussian,
            "uniform_cube" | "uniform" => ModelKind::UniformCube,
            "rademacher" => ModelKind::Rademacher,
            "sphere" => ModelKind::Sphere { radius: radius()? },
            "ball" => ModelKind::Ball { radius: radius()? },
            _ => return Err(Error::invalid(format!("unknown step model `{text}`"))),
        };
        if arg.is_some()
            && matches!(
                kind,
                ModelKind::Gaussian | ModelKind::UniformCube | ModelKind::Rademacher
            )
        {
            return Err(Error::invalid(format!("model `{head}` takes no parameter")));
        }
        Ok(kind)
    }
}

/// Increment law on `H` for a given group's metric.
#[derive(Clone, Debug)]
pub struct CumulantModel {
    kind: ModelKind,
    dim: usize,
    factor: DMatrix<f64>,
    /// `L^{-T}`, mapping frame samples to coordinates.
    sample_map: DMatrix<f64>,
    identity_frame: bool,
}

const NEWTON_MAX_ITER: usize = 500;

impl CumulantModel {
    pub fn new(kind: ModelKind, group: &CarnotGroup) -> Self {
        Self::with_factor(kind, group.metric_factor().clone())
    }

    /// Model on `R^dim` with the Euclidean inner product.
    pub fn standard(kind: ModelKind, dim: usize) -> Self {
        Self::with_factor(kind, DMatrix::identity(dim, dim))
    }

    fn with_factor(kind: ModelKind, factor: DMatrix<f64>) -> Self {
        let dim = factor.nrows();
        let sample_map = factor
            .clone()
            .try_inverse()
            .expect("Cholesky factor of an SPD matrix is invertible")
            .transpose();
        let identity_frame = factor == DMatrix::identity(dim, dim);
        CumulantModel {
            kind,
            dim,
            factor,
            sample_map,
            identity_frame,
        }
    }

    pub fn gaussian(group: &CarnotGroup) -> Self {
        Self::new(ModelKind::Gaussian, group)
    }

    pub fn uniform_cube(group: &CarnotGroup) -> Self {
        Self::new(ModelKind::UniformCube, group)
    }

    pub fn sphere(group: &CarnotGroup, radius: f64) -> Self {
        Self::new(ModelKind::Sphere { radius }, group)
    }

    pub fn ball(group: &CarnotGroup, radius: f64) -> Self {
        Self::new(ModelKind::Ball { radius }, group)
    }

    pub fn rademacher(group: &CarnotGroup) -> Self {
        Self::new(ModelKind::Rademacher, group)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn name(&self) -> String {
        self.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether `Lambda*` is finite on all of `H`.
    pub fn full_domain(&self) -> bool {
        matches!(self.kind, ModelKind::Gaussian)
    }

    /// `L^T v`.
    fn to_frame(&self, v: &[f64]) -> Vec<f64> {
        if self.identity_frame {
            return v.to_vec();
        }
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.factor[(j, i)] * v[j]).sum())
            .collect()
    }

    /// `L w`.
    fn from_frame(&self, w: &[f64]) -> Vec<f64> {
        if self.identity_frame {
            return w.to_vec();
        }
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|j| self.factor[(i, j)] * w[j]).sum())
            .collect()
    }

    /// `Lambda(lambda) = log E exp(<lambda, X>_H)`.
    pub fn cgf(&self, lambda: &[f64]) -> Result<f64> {
        check_len(self.dim, lambda.len())?;
        Ok(kappa(self.kind, &self.to_frame(lambda)))
    }

    /// Coordinate gradient of `Lambda`.
    pub fn cgf_grad(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, lambda.len())?;
        Ok(self.from_frame(&kappa_grad(self.kind, &self.to_frame(lambda))))
    }

    /// `Lambda*(u) = sup_v <v, u>_H - Lambda(v)`; `+inf` outside the
    /// effective domain.
    pub fn legendre(&self, u: &[f64]) -> Result<f64> {
        Ok(self.legendre_with_grad(u)?.0)
    }

    /// `Lambda*(u)` together with its coordinate gradient.
    pub fn legendre_with_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len(self.dim, u.len())?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Legendre argument must be finite"));
        }
        let z = self.to_frame(u);
        let (value, w) = kappa_star(self.kind, &z)?;
        Ok((value, self.from_frame(&w)))
    }

    /// `Lambda*(u)` by damped Newton ascent on `<v,u>_H - Lambda(v)`, started
    /// from 0 and from `u`; used to cross-check the specialised solvers.
    pub fn legendre_numeric(&self, u: &[f64]) -> Result<f64> {
        check_len(self.dim, u.len())?;
        let z = self.to_frame(u);
        if !in_domain(self.kind, &z) {
            return Ok(f64::INFINITY);
        }
        let mut best = f64::NEG_INFINITY;
        let mut last_err = None;
        for start in [vec![0.0; self.dim], z.clone()] {
            match newton_ascent(self.kind, &z, start) {
                Ok(v) => best = best.max(v),
                Err(Error::NonConvergence { best_lower_bound }) => {
                    last_err = Some(best_lower_bound);
                }
                Err(e) => return Err(e),
            }
        }
        if best > f64::NEG_INFINITY {
            Ok(best)
        } else {
            Err(Error::NonConvergence {
                best_lower_bound: last_err.unwrap_or(0.0),
            })
        }
    }

    /// Draws one step in coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut out);
        out
    }

    /// Writes one step into `out` (length `d_1`).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        if self.identity_frame {
            sample_frame(self.kind, rng, out);
            return;
        }
        let d = self.dim;
        let mut z = vec![0.0; d];
        sample_frame(self.kind, rng, &mut z);
        for i in 0..d {
            out[i] = (0..d).map(|j| self.sample_map[(i, j)] * z[j]).sum();
        }
    }

    /// Whether every step is bounded (used by walk studies).
    pub fn bounded(&self) -> bool {
        !matches!(self.kind, ModelKind::Gaussian)
    }
}

fn sample_frame<R: Rng + ?Sized>(kind: ModelKind, rng: &mut R, out: &mut [f64]) {
    match kind {
        ModelKind::Gaussian => out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
        ModelKind::UniformCube => out.iter_mut().for_each(|v| *v = rng.random_range(-1.0..=1.0)),
        ModelKind::Rademacher => out
            .iter_mut()
            .for_each(|v| *v = if rng.random::<bool>() { 1.0 } else { -1.0 }),
        ModelKind::Sphere { radius } | ModelKind::Ball { radius } => {
            let d = out.len();
            let mut norm;
            loop {
                out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    break;
                }
            }
            let mut scale = radius / norm;
            if matches!(kind, ModelKind::Ball { .. }) {
                scale *= rng.random::<f64>().powf(1.0 / d as f64);
            }
            out.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Order of the Bessel function in the radial cgf.
fn bessel_order(kind: ModelKind, d: usize) -> f64 {
    match kind {
        ModelKind::Sphere { .. } => d as f64 / 2.0 - 1.0,
        ModelKind::Ball { .. } => d as f64 / 2.0,
        _ => unreachable!("only radial models have a Bessel order"),
    }
}

fn in_domain(kind: ModelKind, z: &[f64]) -> bool {
    match kind {
        ModelKind::Gaussian => true,
        ModelKind::UniformCube => z.iter().all(|v| v.abs() < 1.0),
        ModelKind::Rademacher => z.iter().all(|v| v.abs() < 1.0),
        ModelKind::Sphere { radius } | ModelKind::Ball { radius } => norm(z) < radius,
    }
}

fn kappa(kind: ModelKind, w: &[f64]) -> f64 {
    match kind {
        ModelKind::Gaussian => 0.5 * w.iter().map(|v| v * v).sum::<f64>(),
        ModelKind::UniformCube => w.iter().map(|v| scalar::log_sinhc(*v)).sum(),
        ModelKind::Rademacher => w.iter().map(|v| scalar::log_cosh(*v)).sum(),
        ModelKind::Sphere { radius } | ModelKind::Ball { radius } => {
            let nu = bessel_order(kind, w.len());
            radial::log_mgf(nu, radius * norm(w))
        }
    }
}

fn kappa_grad(kind: ModelKind, w: &[f64]) -> Vec<f64> {
    match kind {
        ModelKind::Gaussian => w.to_vec(),
        ModelKind::UniformCube => w.iter().map(|v| scalar::langevin(*v)).collect(),
        ModelKind::Rademacher => w.iter().map(|v| v.tanh()).collect(),
        ModelKind::Sphere { radius } | ModelKind::Ball { radius } => {
            let nu = bessel_order(kind, w.len());
            let r = norm(w);
            if r == 0.0 {
                return vec![0.0; w.len()];
            }
            let a = radial::ratio(nu, radius * r);
            w.iter().map(|v| radius * a * v / r).collect()
        }
    }
}

fn kappa_hess(kind: ModelKind, w: &[f64]) -> DMatrix<f64> {
    let d = w.len();
    match kind {
        ModelKind::Gaussian => DMatrix::identity(d, d),
        ModelKind::UniformCube => {
            DMatrix::from_diagonal(&DVector::from_iterator(d, w.iter().map(|v| scalar::langevin_deriv(*v))))
        }
        ModelKind::Rademacher => {
            DMatrix::from_diagonal(&DVector::from_iterator(d, w.iter().map(|v| 1.0 - v.tanh().powi(2))))
        }
        ModelKind::Sphere { radius } | ModelKind::Ball { radius } => {
            let nu = bessel_order(kind, d);
            let r = norm(w);
            if r == 0.0 {
                return DMatrix::identity(d, d) * (radius * radius / (2.0 * nu + 2.0));
            }
            let s = radius * r;
            let a = radial::ratio(nu, s);
            let da = radial::ratio_deriv(nu, s, a);
            let dir = DVector::from_iterator(d, w.iter().map(|v| v / r));
            let proj = &dir * dir.transpose();
            &proj * (radius * radius * da) + (DMatrix::identity(d, d) - &proj) * (radius * a / r)
        }
    }
}

/// `(kappa*(z), argmax)`.
fn kappa_star(kind: ModelKind, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    match kind {
        ModelKind::Gaussian => Ok((0.5 * z.iter().map(|v| v * v).sum::<f64>(), z.to_vec())),
        ModelKind::Rademacher => {
            let mut value = 0.0;
            let mut w = Vec::with_capacity(z.len());
            for &x in z {
                let (v, g) = scalar::rademacher_star(x);
                value += v;
                w.push(g);
            }
            Ok((value, w))
        }
        ModelKind::UniformCube => {
            let mut value = 0.0;
            let mut w = Vec::with_capacity(z.len());
            for &x in z {
                let (v, g) = scalar::cube_star(x)?;
                value += v;
                w.push(g);
            }
            Ok((value, w))
        }
        ModelKind::Sphere { radius } | ModelKind::Ball { radius } => {
            let nu = bessel_order(kind, z.len());
            let r = norm(z);
            let q = r / radius;
            if q >= 1.0 {
                if nu == -0.5 && q == 1.0 {
                    return Ok((std::f64::consts::LN_2, vec![f64::INFINITY.copysign(z[0])]));
                }
                return Ok((f64::INFINITY, vec![f64::NAN; z.len()]));
            }
            if r == 0.0 {
                return Ok((0.0, vec![0.0; z.len()]));
            }
            let (value, s) = radial::star(nu, q)?;
            Ok((value, z.iter().map(|v| s / radius * v / r).collect()))
        }
    }
}

fn newton_ascent(kind: ModelKind, z: &[f64], start: Vec<f64>) -> Result<f64> {
    let d = z.len();
    let phi = |w: &[f64]| -> f64 { w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - kappa(kind, w) };
    let mut w = start;
    let mut value = phi(&w);
    if !value.is_finite() {
        w = vec![0.0; d];
        value = 0.0;
    }
    let tol = 1e-12 * (1.0 + norm(z));
    for _ in 0..NEWTON_MAX_ITER {
        let grad: Vec<f64> = kappa_grad(kind, &w).iter().zip(z).map(|(g, zz)| zz - g).collect();
        if norm(&grad) <= tol {
            return Ok(value);
        }
        let h = kappa_hess(kind, &w);
        let rhs = DVector::from_column_slice(&grad);
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => rhs.clone(),
        };
        let mut t = 1.0;
        let slope: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
        // Newton decrement below rounding: no further progress is measurable
        if 0.5 * slope <= 1e-16 * (1.0 + value.abs()) {
            return Ok(value);
        }
        loop {
            let cand: Vec<f64> = w.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let v = phi(&cand);
            if v.is_finite() && v >= value + 1e-4 * t * slope - 1e-15 * value.abs() {
                w = cand;
                value = v;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                return Err(Error::NonConvergence {
                    best_lower_bound: value,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        best_lower_bound: value,
    })
}

/// One-dimensional special functions.
pub(crate) mod scalar {
    use crate::error::{Error, Result};

    /// `log cosh w`, overflow free.
    pub fn log_cosh(w: f64) -> f64 {
        let a = w.abs();
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    }

    /// `log(sinh w / w)`.
    pub fn log_sinhc(w: f64) -> f64 {
        let a = w.abs();
        if a <= 1.0 {
            // sinh(w)/w - 1 = sum_{k>=1} w^{2k} / (2k+1)!
            let w2 = a * a;
            let mut term = 1.0;
            let mut sum = 0.0;
            for k in 1..=10 {
                term *= w2 / ((2 * k) as f64 * (2 * k + 1) as f64);
                sum += term;
            }
            sum.ln_1p()
        } else {
            a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln()
        }
    }

    const COTH_SERIES: [f64; 6] = [
        1.0 / 3.0,
        -1.0 / 45.0,
        2.0 / 945.0,
        -1.0 / 4725.0,
        2.0 / 93555.0,
        -1382.0 / 638512875.0,
    ];

    /// Langevin function `coth w - 1/w`, the derivative of [`log_sinhc`].
    pub fn langevin(w: f64) -> f64 {
        let a = w.abs();
        let v = if a < 0.1 {
            let w2 = a * a;
            let mut p = 0.0;
            for c in COTH_SERIES.iter().rev() {
                p = p * w2 + c;
            }
            a * p
        } else {
            1.0 / a.tanh() - 1.0 / a
        };
        v.copysign(w)
    }

    /// Derivative of [`langevin`].
    pub fn langevin_deriv(w: f64) -> f64 {
        let a = w.abs();
        if a < 0.1 {
            let w2 = a * a;
            let mut p = 0.0;
            for (k, c) in COTH_SERIES.iter().enumerate().rev() {
                p = p * w2 + c * (2 * k + 1) as f64;
            }
            p
        } else if a > 40.0 {
            1.0 / (a * a)
        } else {
            let s = a.sinh();
            1.0 / (a * a) - 1.0 / (s * s)
        }
    }

    /// Legendre transform of `log cosh` and its maximiser.
    pub fn rademacher_star(z: f64) -> (f64, f64) {
        let a = z.abs();
        if a > 1.0 {
            return (f64::INFINITY, f64::NAN);
        }
        if a == 1.0 {
            return (std::f64::consts::LN_2, f64::INFINITY.copysign(z));
        }
        let v = 0.5 * (1.0 + a) * a.ln_1p() + 0.5 * (1.0 - a) * (-a).ln_1p();
        (v, z.atanh())
    }

    /// Legendre transform of `log(sinh w / w)` and its maximiser.
    pub fn cube_star(z: f64) -> Result<(f64, f64)> {
        let a = z.abs();
        if a >= 1.0 {
            return Ok((f64::INFINITY, f64::NAN));
        }
        if a == 0.0 {
            return Ok((0.0, 0.0));
        }
        // solve langevin(w) = a on w > 0
        let mut lo = 0.0;
        let mut hi = 1.0 / (1.0 - a) + 1.0;
        while langevin(hi) < a {
            hi *= 2.0;
        }
        let mut w = if a < 0.5 { 3.0 * a } else { 1.0 / (1.0 - a) };
        w = w.clamp(lo, hi);
        for _ in 0..super::NEWTON_MAX_ITER {
            let f = langevin(w) - a;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = w;
            } else {
                lo = w;
            }
            let next = w - f / langevin_deriv(w);
            let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if (next - w).abs() <= 4.0 * f64::EPSILON * w {
                w = next;
                break;
            }
            w = next;
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        let value = w * a - log_sinhc(w);
        if !value.is_finite() {
            return Err(Error::NonConvergence { best_lower_bound: 0.0 });
        }
        Ok((value, w.copysign(z)))
    }
}

/// Cumulant generating function of uniform laws on spheres and balls,
/// written through modified Bessel functions of order `nu`:
/// `g(s) = log(Gamma(nu+1) (2/s)^nu I_nu(s))` with `g'(s) = I_{nu+1}(s)/I_nu(s)`.
pub(crate) mod radial {
    use crate::error::{Error, Result};

    const SERIES_LIMIT: f64 = 300.0;

    /// Power series `sum_k t_k` with `t_k = (s^2/4)^k Gamma(nu+1) / (k! Gamma(nu+k+1))`
    /// and `sum_k 2k t_k / s`.
    fn series(nu: f64, s: f64) -> (f64, f64) {
        let q = 0.25 * s * s;
        let mut t = 1.0;
        let mut sum = 1.0;
        let mut dsum = 0.0;
        let mut k = 1.0;
        loop {
            t *= q / (k * (nu + k));
            sum += t;
            dsum += 2.0 * k * t;
            if t <= 1e-17 * sum && k > 0.5 * s {
                break;
            }
            k += 1.0;
        }
        (sum, if s > 0.0 { dsum / s } else { 0.0 })
    }

    /// `log P_nu(s)` where `I_nu(s) = e^s / sqrt(2 pi s) * P_nu(s)` asymptotically.
    fn asymptotic_log_p(nu: f64, s: f64) -> f64 {
        let mu = 4.0 * nu * nu;
        let mut a = 1.0;
        let mut sum = 1.0;
        for k in 1..=12 {
            let kf = k as f64;
            a *= -(mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * s);
            sum += a;
            if a.abs() < 1e-17 {
                break;
            }
        }
        sum.ln()
    }

    fn ln_gamma(x: f64) -> f64 {
        statrs::function::gamma::ln_gamma(x)
    }

    pub fn log_mgf(nu: f64, s: f64) -> f64 {
        if s <= SERIES_LIMIT {
            series(nu, s).0.ln()
        } else {
            ln_gamma(nu + 1.0) + nu * (2.0 / s).ln() + s - 0.5 * (2.0 * std::f64::consts::PI * s).ln()
                + asymptotic_log_p(nu, s)
        }
    }

    /// `I_{nu+1}(s) / I_nu(s)`.
    pub fn ratio(nu: f64, s: f64) -> f64 {
        if s <= SERIES_LIMIT {
            let (sum, dsum) = series(nu, s);
            dsum / sum
        } else {
            (asymptotic_log_p(nu + 1.0, s) - asymptotic_log_p(nu, s)).exp()
        }
    }

    /// Derivative of [`ratio`] from `A' = 1 - (2 nu + 1) A / s - A^2`.
    pub fn ratio_deriv(nu: f64, s: f64, a: f64) -> f64 {
        if s == 0.0 {
            return 1.0 / (2.0 * nu + 2.0);
        }
        if s < 1e-3 {
            // leading terms of the series to avoid cancellation
            let c = 2.0 * nu + 2.0;
            return 1.0 / c - 3.0 * s * s / (c * c * (2.0 * nu + 4.0));
        }
        1.0 - (2.0 * nu + 1.0) * a / s - a * a
    }

    /// `sup_s (s q - g(s))` for `0 < q < 1`, with the maximiser.
    pub fn star(nu: f64, q: f64) -> Result<(f64, f64)> {
        let mut lo = 0.0;
        let mut hi = (2.0 * nu + 2.0) / (1.0 - q) + 1.0;
        while ratio(nu, hi) < q {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::NonConvergence { best_lower_bound: 0.0 });
            }
        }
        let mut s = if q < 0.5 {
            (2.0 * nu + 2.0) * q
        } else {
            (nu + 0.5).max(0.5) / (1.0 - q)
        };
        s = s.clamp(lo, hi);
        for _ in 0..super::NEWTON_MAX_ITER {
            let a = ratio(nu, s);
            let f = a - q;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let next = s - f / ratio_deriv(nu, s, a);
            let next = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if (next - s).abs() <= 4.0 * f64::EPSILON * s.max(f64::MIN_POSITIVE) {
                s = next;
                break;
            }
            s = next;
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        let value = s * q - log_mgf(nu, s);
        if !value.is_finite() {
            return Err(Error::NonConvergence { best_lower_bound: 0.0 });
        }
        Ok((value.max(0.0), s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn plane() -> CarnotGroup {
        CarnotGroup::heisenberg(2).unwrap()
    }

    fn line() -> CarnotGroup {
        CarnotGroup::euclidean(1).unwrap()
    }

    #[test]
    fn gaussian_closed_form() {
        let m = CumulantModel::gaussian(&plane());
        assert_eq!(m.legendre(&[0.6, -0.8]).unwrap(), 0.5);
        assert_eq!(m.cgf(&[0.6, -0.8]).unwrap(), 0.5);
        assert!((m.legendre_numeric(&[0.6, -0.8]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_mean_models_vanish_at_origin() {
        let g = plane();
        for kind in [
            ModelKind::Gaussian,
            ModelKind::UniformCube,
            ModelKind::Rademacher,
            ModelKind::Sphere { radius: 1.5 },
            ModelKind::Ball { radius: 0.7 },
        ] {
            let m = CumulantModel::new(kind, &g);
            assert_eq!(m.legendre(&[0.0, 0.0]).unwrap(), 0.0, "{}", m.name());
            assert_eq!(m.cgf(&[0.0, 0.0]).unwrap(), 0.0, "{}", m.name());
        }
    }

    #[test]
    fn uniform_interval_matches_grid_sup() {
        let m = CumulantModel::uniform_cube(&line());
        let u = 0.5;
        let mut best = f64::NEG_INFINITY;
        let steps = 1_000_000;
        for i in 0..=steps {
            let v = -50.0 + 100.0 * i as f64 / steps as f64;
            let val = v * u - scalar::log_sinhc(v);
            best = best.max(val);
        }
        let exact = m.legendre(&[u]).unwrap();
        assert!((exact - best).abs() < 1e-8, "{exact} vs {best}");
        assert!(exact >= best - 1e-15);
    }

    #[test]
    fn bounded_models_are_infinite_outside_domain() {
        let g = plane();
        assert_eq!(
            CumulantModel::uniform_cube(&g).legendre(&[1.0, 0.0]).unwrap(),
            f64::INFINITY
        );
        assert_eq!(
            CumulantModel::rademacher(&g).legendre(&[1.2, 0.0]).unwrap(),
            f64::INFINITY
        );
        assert_eq!(
            CumulantModel::sphere(&g, 2.0).legendre(&[2.0, 0.1]).unwrap(),
            f64::INFINITY
        );
        assert_eq!(
            CumulantModel::ball(&g, 1.0).legendre(&[0.8, 0.8]).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn rademacher_edge_value() {
        let m = CumulantModel::rademacher(&line());
        assert!((m.legendre(&[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_radial_models_reduce_to_known_laws() {
        let g = line();
        // sphere of radius 2 in one dimension is +-2 with equal mass
        let s = CumulantModel::sphere(&g, 2.0);
        let r = CumulantModel::rademacher(&g);
        for u in [0.3, 1.1, 1.9] {
            let a = s.legendre(&[u]).unwrap();
            let b = r.legendre(&[u / 2.0]).unwrap();
            assert!((a - b).abs() < 1e-12, "{u}: {a} vs {b}");
        }
        // ball of radius 1 in one dimension is uniform on [-1, 1]
        let b = CumulantModel::ball(&g, 1.0);
        let c = CumulantModel::uniform_cube(&g);
        for u in [0.05, 0.5, 0.95] {
            let x = b.legendre(&[u]).unwrap();
            let y = c.legendre(&[u]).unwrap();
            assert!((x - y).abs() < 1e-12, "{u}: {x} vs {y}");
        }
        for w in [0.01, 1.0, 30.0, 400.0] {
            let x = b.cgf(&[w]).unwrap();
            let y = c.cgf(&[w]).unwrap();
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "{w}: {x} vs {y}");
        }
    }

    #[test]
    fn three_dimensional_sphere_has_sinhc_cgf() {
        let g = CarnotGroup::euclidean(3).unwrap();
        let m = CumulantModel::sphere(&g, 1.0);
        for w in [0.0, 0.2, 3.0, 250.0, 350.0] {
            let got = m.cgf(&[w, 0.0, 0.0]).unwrap();
            let want = scalar::log_sinhc(w);
            assert!((got - want).abs() < 1e-12 * (1.0 + want), "{w}: {got} vs {want}");
        }
    }

    #[test]
    fn specialised_solvers_agree_with_newton() {
        let g = plane();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for kind in [
            ModelKind::UniformCube,
            ModelKind::Rademacher,
            ModelKind::Sphere { radius: 1.0 },
            ModelKind::Ball { radius: 2.0 },
        ] {
            let m = CumulantModel::new(kind, &g);
            for _ in 0..50 {
                let u: Vec<f64> = (0..2).map(|_| rng.random_range(-0.6..0.6)).collect();
                let a = m.legendre(&u).unwrap();
                let b = m.legendre_numeric(&u).unwrap();
                assert!((a - b).abs() < 1e-10 * (1.0 + a), "{} {u:?}: {a} vs {b}", m.name());
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = plane();
        for kind in [
            ModelKind::Gaussian,
            ModelKind::UniformCube,
            ModelKind::Rademacher,
            ModelKind::Sphere { radius: 1.0 },
            ModelKind::Ball { radius: 1.0 },
        ] {
            let m = CumulantModel::new(kind, &g);
            let u = [0.31, -0.42];
            let (_, grad) = m.legendre_with_grad(&u).unwrap();
            let lam = [0.7, 1.3];
            let cg = m.cgf_grad(&lam).unwrap();
            let h = 1e-6;
            for i in 0..2 {
                let mut p = u;
                let mut q = u;
                p[i] += h;
                q[i] -= h;
                let fd = (m.legendre(&p).unwrap() - m.legendre(&q).unwrap()) / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-7, "{} legendre {i}", m.name());
                let mut p = lam;
                let mut q = lam;
                p[i] += h;
                q[i] -= h;
                let fd = (m.cgf(&p).unwrap() - m.cgf(&q).unwrap()) / (2.0 * h);
                assert!((fd - cg[i]).abs() < 1e-7, "{} cgf {i}", m.name());
            }
        }
    }

    #[test]
    fn metric_enters_through_the_frame() {
        let metric = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g =
            CarnotGroup::from_structure_constants("h", vec![2, 1], &[(0, 1, 2, 1.0)], Some(metric.clone())).unwrap();
        let m = CumulantModel::gaussian(&g);
        let u = [0.3, -0.7];
        let quad = 0.5 * (u[0] * (2.0 * u[0] + 0.5 * u[1]) + u[1] * (0.5 * u[0] + u[1]));
        assert!((m.legendre(&u).unwrap() - quad).abs() < 1e-15);
        // sample covariance approximates G^{-1}
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let mut c = [0.0; 3];
        for _ in 0..n {
            let x = m.sample(&mut rng);
            c[0] += x[0] * x[0];
            c[1] += x[0] * x[1];
            c[2] += x[1] * x[1];
        }
        let inv = metric.try_inverse().unwrap();
        assert!((c[0] / n as f64 - inv[(0, 0)]).abs() < 0.02);
        assert!((c[1] / n as f64 - inv[(0, 1)]).abs() < 0.02);
        assert!((c[2] / n as f64 - inv[(1, 1)]).abs() < 0.02);
    }

    #[test]
    fn samplers_respect_support() {
        let g = CarnotGroup::euclidean(3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let s = CumulantModel::sphere(&g, 2.0);
        let b = CumulantModel::ball(&g, 2.0);
        let c = CumulantModel::uniform_cube(&g);
        for _ in 0..1000 {
            assert!((norm(&s.sample(&mut rng)) - 2.0).abs() < 1e-12);
            assert!(norm(&b.sample(&mut rng)) <= 2.0);
            assert!(c.sample(&mut rng).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn parse_model_names() {
        assert_eq!(ModelKind::parse("gaussian").unwrap(), ModelKind::Gaussian);
        assert_eq!(
            ModelKind::parse("sphere:2.5").unwrap(),
            ModelKind::Sphere { radius: 2.5 }
        );
        assert_eq!(ModelKind::parse("ball").unwrap(), ModelKind::Ball { radius: 1.0 });
        assert!(ModelKind::parse("sphere:-1").is_err());
        assert!(ModelKind::parse("gaussian:2").is_err());
        assert!(ModelKind::parse("cauchy").is_err());
    }
}
