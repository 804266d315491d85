//! Horizontal controls and the paths they generate.
//!
//! A path starts at the identity and follows `gamma' = (L_gamma)_* c(t)`.
//! The horizontal layer of the solution is `int_0^t c`, which is written in
//! closed form; the upper layers are advanced by fixed-step RK4 with every
//! control breakpoint on the grid.

use crate::algebra::CarnotGroup;
use crate::error::{check_len, Error, Result};
use crate::real::Real;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Common interface of controls that can be integrated.
///
/// Times and values are produced in the caller's precision so breakpoints
/// such as `k/m` are not rounded to `f64` first.
pub trait Control {
    /// Dimension of the horizontal layer.
    fn horizontal_dim(&self) -> usize;
    /// Number of intervals between breakpoints.
    fn intervals(&self) -> usize;
    /// Bounds of interval `i`; consecutive intervals share endpoints and
    /// together cover `[0, 1]`.
    fn bounds<S: Real>(&self, i: usize) -> (S, S);
    /// Control value at time `t` inside interval `i`.
    fn value<S: Real>(&self, i: usize, t: S) -> Vec<S>;
    /// Integral of the control over interval `i` from its start to `t`.
    fn displacement<S: Real>(&self, i: usize, t: S) -> Vec<S>;
}

/// Control that is constant on each of `m` equal segments.
///
/// `values[k]` is the control on segment `k` itself (not the increment), so
/// the segment's displacement in the horizontal layer is `values[k] / m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseControl {
    pub m: usize,
    pub values: Vec<Vec<f64>>,
}

impl PiecewiseControl {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let control = PiecewiseControl {
            m: values.len(),
            values,
        };
        control.validate()?;
        Ok(control)
    }

    /// Control whose segment displacements are `increments` (`values = m * u`).
    pub fn from_increments(increments: &[Vec<f64>]) -> Result<Self> {
        let m = increments.len() as f64;
        Self::new(increments.iter().map(|u| u.iter().map(|v| v * m).collect()).collect())
    }

    /// Segment displacements `u_k = values[k] / m`.
    pub fn increments(&self) -> Vec<Vec<f64>> {
        self.increments_with()
    }

    /// [`Self::increments`] in a chosen precision.
    pub fn increments_with<S: Real>(&self) -> Vec<Vec<S>> {
        let m = S::from_f64(self.m as f64);
        self.values
            .iter()
            .map(|v| v.iter().map(|x| S::from_f64(*x) / m).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::invalid("control needs at least one segment"));
        }
        check_len(self.m, self.values.len())?;
        let d = self.values[0].len();
        for v in &self.values {
            check_len(d, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("control values must be finite"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: PiecewiseControl = serde_json::from_str(text).map_err(|e| Error::invalid(format!("control: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("control serializes")
    }

    /// `int_0^1 c dt`, accumulated segment by segment.
    pub fn integral(&self) -> Vec<f64> {
        let d = self.values[0].len();
        let mut acc = vec![0.0; d];
        for k in 0..self.m {
            let p = self.displacement(k, self.bounds::<f64>(k).1);
            for i in 0..d {
                acc[i] += p[i];
            }
        }
        acc
    }
}

impl Control for PiecewiseControl {
    fn horizontal_dim(&self) -> usize {
        self.values[0].len()
    }

    fn intervals(&self) -> usize {
        self.m
    }

    fn bounds<S: Real>(&self, i: usize) -> (S, S) {
        let m = self.m as i64;
        (S::from_ratio(i as i64, m), S::from_ratio(i as i64 + 1, m))
    }

    fn value<S: Real>(&self, i: usize, _t: S) -> Vec<S> {
        self.values[i].iter().map(|v| S::from_f64(*v)).collect()
    }

    fn displacement<S: Real>(&self, i: usize, t: S) -> Vec<S> {
        let dt = t - self.bounds::<S>(i).0;
        self.values[i].iter().map(|v| S::from_f64(*v) * dt).collect()
    }
}

/// Control sampled on a grid and interpolated linearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledControl {
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl SampledControl {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::invalid("sampled control needs at least two grid points"));
        }
        check_len(grid.len(), values.len())?;
        if grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
            return Err(Error::invalid("sampled control grid must start at 0 and end at 1"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("sampled control grid must be strictly increasing"));
        }
        let d = values[0].len();
        for v in &values {
            check_len(d, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("control values must be finite"));
            }
        }
        Ok(SampledControl { grid, values })
    }
}

impl Control for SampledControl {
    fn horizontal_dim(&self) -> usize {
        self.values[0].len()
    }

    fn intervals(&self) -> usize {
        self.grid.len() - 1
    }

    fn bounds<S: Real>(&self, i: usize) -> (S, S) {
        (S::from_f64(self.grid[i]), S::from_f64(self.grid[i + 1]))
    }

    fn value<S: Real>(&self, i: usize, t: S) -> Vec<S> {
        let (a, b) = self.bounds::<S>(i);
        let s = (t - a) / (b - a);
        self.values[i]
            .iter()
            .zip(&self.values[i + 1])
            .map(|(x, y)| {
                let (x, y) = (S::from_f64(*x), S::from_f64(*y));
                x + s * (y - x)
            })
            .collect()
    }

    fn displacement<S: Real>(&self, i: usize, t: S) -> Vec<S> {
        let (a, b) = self.bounds::<S>(i);
        let dt = t - a;
        let s = dt / (b - a);
        let half = S::from_f64(0.5);
        self.values[i]
            .iter()
            .zip(&self.values[i + 1])
            .map(|(x, y)| {
                let (x, y) = (S::from_f64(*x), S::from_f64(*y));
                dt * (x + half * s * (y - x))
            })
            .collect()
    }
}

/// Sampled path `t -> gamma(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTrace {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl PathTrace {
    pub fn endpoint(&self) -> &[f64] {
        self.points.last().expect("trace is never empty")
    }

    /// CSV with header `t,x_1,...,x_N`.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |p| p.len());
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for (t, p) in self.times.iter().zip(&self.points) {
            out.push_str(&format!("{t:?}"));
            for v in p {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("step size must be > 0, got {step}")));
    }
    Ok(())
}

/// Integrates `control` and returns every grid point.
pub fn integrate(group: &CarnotGroup, control: &impl Control, step: f64) -> Result<PathTrace> {
    let mut times = Vec::new();
    let mut points = Vec::new();
    integrate_with::<f64>(group, control, step, |t, x| {
        times.push(t);
        points.push(x.to_vec());
    })?;
    Ok(PathTrace { times, points })
}

/// Endpoint `gamma(1)` in the chosen precision.
pub fn integrate_endpoint<S: Real>(group: &CarnotGroup, control: &impl Control, step: f64) -> Result<Vec<S>> {
    let mut last = Vec::new();
    integrate_with::<S>(group, control, step, |_, x| {
        last.clear();
        last.extend_from_slice(x);
    })?;
    Ok(last)
}

/// Core RK4 loop; `visit` sees `(t, gamma(t))` at every grid point.
pub fn integrate_with<S: Real>(
    group: &CarnotGroup,
    control: &impl Control,
    step: f64,
    mut visit: impl FnMut(f64, &[S]),
) -> Result<()> {
    check_step(step)?;
    let d1 = group.horizontal_dim();
    check_len(d1, control.horizontal_dim())?;
    let n = group.dim();

    let embed = |h: Vec<S>| -> Result<Vec<S>> {
        if h.iter().any(|v| !v.to_f64().is_finite()) {
            return Err(Error::invalid("control values must be finite"));
        }
        let mut v = vec![S::zero(); n];
        v[..d1].copy_from_slice(&h);
        Ok(v)
    };
    let field = |x: &[S], c: &[S]| -> Vec<S> {
        let mut out = c.to_vec();
        group.pushforward_acc(x, c, &mut out);
        out
    };
    let half = S::from_f64(0.5);
    let two = S::from_f64(2.0);
    let sixth = S::from_f64(1.0) / S::from_f64(6.0);

    let mut x = vec![S::zero(); n];
    visit(0.0, &x);
    for interval in 0..control.intervals() {
        let (a, b) = control.bounds::<S>(interval);
        let width = (b - a).to_f64();
        let steps = (width / step).ceil().max(1.0) as usize;
        let h = (b - a) / S::from_f64(steps as f64);
        let start_h: Vec<S> = x[..d1].to_vec();
        let mut t = a;
        for i in 0..steps {
            let t_next = if i + 1 == steps {
                b
            } else {
                a + S::from_f64((i + 1) as f64) * h
            };
            let c0 = embed(control.value(interval, t))?;
            let cm = embed(control.value(interval, t + half * h))?;
            let c1 = embed(control.value(interval, t_next))?;
            let k1 = field(&x, &c0);
            let y: Vec<S> = x.iter().zip(&k1).map(|(a, k)| *a + half * h * *k).collect();
            let k2 = field(&y, &cm);
            let y: Vec<S> = x.iter().zip(&k2).map(|(a, k)| *a + half * h * *k).collect();
            let k3 = field(&y, &cm);
            let y: Vec<S> = x.iter().zip(&k3).map(|(a, k)| *a + h * *k).collect();
            let k4 = field(&y, &c1);
            for j in d1..n {
                x[j] += h * sixth * (k1[j] + two * k2[j] + two * k3[j] + k4[j]);
            }
            let p = control.displacement(interval, t_next);
            for j in 0..d1 {
                x[j] = start_h[j] + p[j];
            }
            t = t_next;
            visit(t.to_f64(), &x);
        }
    }
    Ok(())
}

/// `Psi_m(u) = exp(u_1) * ... * exp(u_m)`.
pub fn endpoint_product(group: &CarnotGroup, increments: &[Vec<f64>]) -> Result<Vec<f64>> {
    endpoint_product_with::<f64>(group, increments)
}

/// [`endpoint_product`] in a chosen precision.
pub fn endpoint_product_with<S: Real>(group: &CarnotGroup, increments: &[Vec<S>]) -> Result<Vec<S>> {
    let n = group.dim();
    let d1 = group.horizontal_dim();
    let mut acc = vec![S::zero(); n];
    let mut next = vec![S::zero(); n];
    let mut e = vec![S::zero(); n];
    for u in increments {
        check_len(d1, u.len())?;
        e[..d1].copy_from_slice(u);
        group.bcdh_into(&acc, &e, &mut next);
        std::mem::swap(&mut acc, &mut next);
    }
    Ok(acc)
}

/// `int |c|_H dt`: exact for piecewise-constant controls.
pub fn length(group: &CarnotGroup, control: &PiecewiseControl) -> f64 {
    let m = control.m as f64;
    control.values.iter().map(|v| group.horizontal_norm(v)).sum::<f64>() / m
}

/// `int |c|_H^2 dt`: exact for piecewise-constant controls.
pub fn energy(group: &CarnotGroup, control: &PiecewiseControl) -> f64 {
    let m = control.m as f64;
    control.values.iter().map(|v| group.horizontal_inner(v, v)).sum::<f64>() / m
}

const SIMPSON_PANELS: usize = 8;

fn simpson(control: &SampledControl, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut total = 0.0;
    for k in 0..control.grid.len() - 1 {
        let (a, b) = (control.grid[k], control.grid[k + 1]);
        let h = (b - a) / (2 * SIMPSON_PANELS) as f64;
        let mut s = 0.0;
        for i in 0..=2 * SIMPSON_PANELS {
            let w = if i == 0 || i == 2 * SIMPSON_PANELS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * f(&control.value(k, a + i as f64 * h));
        }
        total += s * h / 3.0;
    }
    total
}

/// `int |c|_H dt` by composite Simpson.
pub fn sampled_length(group: &CarnotGroup, control: &SampledControl) -> f64 {
    simpson(control, |c| group.horizontal_norm(c))
}

/// `int |c|_H^2 dt` by composite Simpson (exact for linear interpolation).
pub fn sampled_energy(group: &CarnotGroup, control: &SampledControl) -> f64 {
    simpson(control, |c| group.horizontal_inner(c, c))
}

/// Closed-form path generated by a piecewise control on a step-2 group.
///
/// On segment `k` (`(k-1)/m < t < k/m`) the horizontal part is
/// `sum_{j<k} u_j + (t - (k-1)/m) m u_k` and the second layer is
/// `sum_{j<l<k} Q(u_j, u_l) + (t - (k-1)/m) Q(sum_{j<k} u_j, m u_k)`.
pub fn step2_explicit_path(group: &CarnotGroup, increments: &[Vec<f64>], t: f64) -> Result<Vec<f64>> {
    let law = group.step2_law()?;
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time must lie in [0, 1], got {t}")));
    }
    let d1 = group.horizontal_dim();
    let n = group.dim();
    let m = increments.len();
    if m == 0 {
        return Err(Error::invalid("need at least one increment"));
    }
    for u in increments {
        check_len(d1, u.len())?;
    }
    let mf = m as f64;
    // segment index k (0-based) with t in [k/m, (k+1)/m]
    let k = ((t * mf).floor() as usize).min(m - 1);
    let tau = t - k as f64 / mf;

    let mut sum = vec![0.0; n];
    let mut vertical = vec![0.0; n - d1];
    for u in &increments[..k] {
        let q = law.q(&sum, &pad(u, n));
        for (v, qv) in vertical.iter_mut().zip(q) {
            *v += qv;
        }
        for i in 0..d1 {
            sum[i] += u[i];
        }
    }
    let mu: Vec<f64> = pad(&increments[k], n).iter().map(|v| v * mf).collect();
    let q = law.q(&sum, &mu);
    let mut out = sum.clone();
    for i in 0..d1 {
        out[i] += tau * mu[i];
    }
    for j in 0..n - d1 {
        out[d1 + j] = vertical[j] + tau * q[j];
    }
    Ok(out)
}

fn pad(u: &[f64], n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[..u.len()].copy_from_slice(u);
    v
}

/// One row of the endpoint stability study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    /// `int |c_sigma - c_gamma|_H dt`.
    pub control_distance: f64,
    /// `|sigma(1)^{-1} * gamma(1)|_G`.
    pub norm_gap: f64,
    /// `||sigma(1) - gamma(1)||` in coordinates.
    pub coordinate_gap: f64,
}

/// Perturbs `base` by random controls at `L^1` distance exactly `epsilon`
/// and records the endpoint gaps.
///
/// The coordinate gap is linear in `epsilon` for a fixed base control; the
/// homogeneous-norm gap only scales like `epsilon^{1/r}`.
pub fn endpoint_gap_study(
    group: &CarnotGroup,
    base: &PiecewiseControl,
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<GapRow>> {
    use rand::SeedableRng;
    if !(epsilon >= 0.0) {
        return Err(Error::invalid("perturbation scale must be >= 0"));
    }
    base.validate()?;
    let d1 = group.horizontal_dim();
    check_len(d1, base.horizontal_dim())?;
    let m = base.m;
    let sigma = endpoint_product(group, &base.increments())?;
    let mut rows = Vec::with_capacity(trials);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let dirs: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d1).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let raw: f64 = dirs.iter().map(|d| group.horizontal_norm(d)).sum::<f64>() / m as f64;
        let scale = if raw > 0.0 { epsilon / raw } else { 0.0 };
        let values: Vec<Vec<f64>> = base
            .values
            .iter()
            .zip(&dirs)
            .map(|(v, d)| v.iter().zip(d).map(|(a, b)| a + scale * b).collect())
            .collect();
        let perturbed = PiecewiseControl { m, values };
        let distance: f64 = base
            .values
            .iter()
            .zip(&perturbed.values)
            .map(|(a, b)| {
                let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
                group.horizontal_norm(&diff)
            })
            .sum::<f64>()
            / m as f64;
        let gamma = endpoint_product(group, &perturbed.increments())?;
        let coordinate_gap = sigma
            .iter()
            .zip(&gamma)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        rows.push(GapRow {
            control_distance: distance,
            norm_gap: group.norm_distance(&sigma, &gamma)?,
            coordinate_gap,
        });
    }
    Ok(rows)
}
