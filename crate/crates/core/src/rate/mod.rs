//! Discrete rate functionals `I_m`, their endpoint-constrained minima `J_m`
//! and the Carnot-Caratheodory distance.
//!
//! `J_m(x)` is the infimum of `I_m(u) = (1/m) sum_k Lambda*(m u_k)` over
//! increments `u_1..u_m` in `H` with `exp(u_1) * ... * exp(u_m) = x`. It is
//! computed by a quadratic-penalty continuation with Barzilai-Borwein
//! gradient descent, followed by minimum-norm Gauss-Newton steps that restore
//! feasibility, over several seeded restarts.

mod models;

pub use models::{CumulantModel, ModelKind};

use crate::algebra::CarnotGroup;
use crate::error::{check_len, Error, Result};
use crate::par;
use crate::real::DoubleF64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// `(1/m) sum_k Lambda*(m u_k)`.
pub fn discrete_rate(model: &CumulantModel, increments: &[Vec<f64>]) -> Result<f64> {
    let m = increments.len();
    if m == 0 {
        return Err(Error::invalid("need at least one increment"));
    }
    let mf = m as f64;
    let mut total = 0.0;
    for u in increments {
        check_len(model.dim(), u.len())?;
        let scaled: Vec<f64> = u.iter().map(|v| v * mf).collect();
        total += model.legendre(&scaled)?;
    }
    Ok(total / mf)
}

/// Optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSettings {
    /// Number of random restarts.
    pub restarts: usize,
    pub seed: u64,
    /// Feasibility tolerance on `|Psi_m(u)^{-1} * x|_G`.
    pub tolerance: f64,
    pub penalty_start: f64,
    pub penalty_factor: f64,
    pub penalty_rounds: usize,
    /// Iteration cap per penalty round.
    pub max_iterations: usize,
    /// Convergence: relative objective change below `stall_tolerance` over
    /// `stall_window` iterations.
    pub stall_tolerance: f64,
    pub stall_window: usize,
    /// Gauss-Newton feasibility restoration steps.
    pub restoration_steps: usize,
}

impl Default for RateSettings {
    fn default() -> Self {
        RateSettings {
            restarts: 8,
            seed: 0,
            tolerance: 1e-6,
            penalty_start: 1.0,
            penalty_factor: 10.0,
            penalty_rounds: 7,
            max_iterations: 20_000,
            stall_tolerance: 1e-9,
            stall_window: 10,
            restoration_steps: 50,
        }
    }
}

/// One minimization of `I_m` subject to `Psi_m(u) = target`.
#[derive(Clone, Debug)]
pub struct RateProblem<'a> {
    pub group: &'a CarnotGroup,
    pub model: &'a CumulantModel,
    pub target: Vec<f64>,
    pub m: usize,
    pub settings: RateSettings,
}

/// Outcome of one restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartReport {
    /// `straight_line` or `random`.
    pub start: String,
    pub index: usize,
    pub value: f64,
    pub residual: f64,
    pub feasible: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateDiagnostics {
    pub group: String,
    pub model: String,
    pub tolerance: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartReport>,
}

/// Minimizer of `I_m` on the fibre over the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    /// `J_m(x)`.
    pub value: f64,
    /// `|Psi_m(u)^{-1} * x|_G` at the returned increments.
    pub residual: f64,
    pub m: usize,
    /// Increments `u_1..u_m`.
    pub control: Vec<Vec<f64>>,
    pub diagnostics: RateDiagnostics,
}

impl RateResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rate result serializes")
    }
}

/// Objective pieces for a fixed problem.
struct Objective<'a> {
    group: &'a CarnotGroup,
    model: &'a CumulantModel,
    target: &'a [f64],
    m: usize,
    d1: usize,
    n: usize,
}

impl<'a> Objective<'a> {
    fn blocks<'u>(&self, u: &'u [f64]) -> impl Iterator<Item = &'u [f64]> {
        u.chunks(self.d1)
    }

    /// `I_m(u)` and optionally its gradient.
    fn rate(&self, u: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let mf = self.m as f64;
        let mut total = 0.0;
        let mut grad = grad;
        for (k, block) in self.blocks(u).enumerate() {
            let scaled: Vec<f64> = block.iter().map(|v| v * mf).collect();
            if let Some(g) = grad.as_deref_mut() {
                let (v, dv) = self.model.legendre_with_grad(&scaled)?;
                total += v;
                g[k * self.d1..(k + 1) * self.d1].copy_from_slice(&dv);
            } else {
                total += self.model.legendre(&scaled)?;
            }
            if !total.is_finite() {
                return Ok(f64::INFINITY);
            }
        }
        Ok(total / mf)
    }

    fn endpoint(&self, u: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n];
        let mut next = vec![0.0; self.n];
        let mut e = vec![0.0; self.n];
        for block in self.blocks(u) {
            e[..self.d1].copy_from_slice(block);
            self.group.bcdh_into(&acc, &e, &mut next);
            std::mem::swap(&mut acc, &mut next);
        }
        acc
    }

    /// Forward pass storing the per-step Jacobians.
    fn endpoint_with_jacobians(&self, u: &[f64]) -> (Vec<f64>, Vec<(Vec<f64>, Vec<f64>)>) {
        let mut acc = vec![0.0; self.n];
        let mut next = vec![0.0; self.n];
        let mut e = vec![0.0; self.n];
        let mut jac = Vec::with_capacity(self.m);
        for block in self.blocks(u) {
            e[..self.d1].copy_from_slice(block);
            jac.push(self.group.multiply_jacobians(&acc, &e));
            self.group.bcdh_into(&acc, &e, &mut next);
            std::mem::swap(&mut acc, &mut next);
        }
        (acc, jac)
    }

    /// Reverse accumulation of `adjoint^T dPsi/du` into `grad`.
    fn pull_back(&self, jac: &[(Vec<f64>, Vec<f64>)], adjoint: &[f64], grad: &mut [f64]) {
        let (n, d1) = (self.n, self.d1);
        let mut adj = adjoint.to_vec();
        let mut tmp = vec![0.0; n];
        for k in (0..self.m).rev() {
            let (jx, jy) = &jac[k];
            for c in 0..d1 {
                let mut s = 0.0;
                for r in 0..n {
                    s += jy[r * d1 + c] * adj[r];
                }
                grad[k * d1 + c] += s;
            }
            for c in 0..n {
                let mut s = 0.0;
                for r in 0..n {
                    s += jx[r * n + c] * adj[r];
                }
                tmp[c] = s;
            }
            std::mem::swap(&mut adj, &mut tmp);
        }
    }

    /// Penalized objective and gradient.
    fn penalized(&self, u: &[f64], mu: f64, grad: &mut [f64]) -> Result<f64> {
        let rate = self.rate(u, Some(grad))?;
        if !rate.is_finite() {
            return Ok(f64::INFINITY);
        }
        let (end, jac) = self.endpoint_with_jacobians(u);
        let r: Vec<f64> = end.iter().zip(self.target).map(|(a, b)| a - b).collect();
        let adj: Vec<f64> = r.iter().map(|v| 2.0 * mu * v).collect();
        self.pull_back(&jac, &adj, grad);
        Ok(rate + mu * r.iter().map(|v| v * v).sum::<f64>())
    }

    fn penalized_value(&self, u: &[f64], mu: f64) -> Result<f64> {
        let rate = self.rate(u, None)?;
        if !rate.is_finite() {
            return Ok(f64::INFINITY);
        }
        let end = self.endpoint(u);
        Ok(rate + mu * end.iter().zip(self.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
    }

    /// `|Psi_m(u)^{-1} * target|_G`, evaluated in double-double.
    fn residual(&self, u: &[f64]) -> f64 {
        let mut acc = vec![DoubleF64::new(0.0); self.n];
        let mut next = acc.clone();
        let mut e = acc.clone();
        for block in self.blocks(u) {
            for (slot, v) in e.iter_mut().zip(block) {
                *slot = DoubleF64::new(*v);
            }
            self.group.bcdh_into(&acc, &e, &mut next);
            std::mem::swap(&mut acc, &mut next);
        }
        let inv: Vec<DoubleF64> = acc.iter().map(|v| -*v).collect();
        let t: Vec<DoubleF64> = self.target.iter().map(|v| DoubleF64::new(*v)).collect();
        let mut diff = acc;
        self.group.bcdh_into(&inv, &t, &mut diff);
        let d: Vec<f64> = diff.iter().map(|v| v.hi() + v.lo()).collect();
        self.group.homogeneous_norm(&d)
    }

    /// Full `N x (m d_1)` Jacobian of `Psi_m`.
    fn endpoint_jacobian(&self, u: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let (end, jac) = self.endpoint_with_jacobians(u);
        let cols = self.m * self.d1;
        let mut j = DMatrix::zeros(self.n, cols);
        let mut unit = vec![0.0; self.n];
        let mut row = vec![0.0; cols];
        for i in 0..self.n {
            unit[i] = 1.0;
            row.iter_mut().for_each(|v| *v = 0.0);
            self.pull_back(&jac, &unit, &mut row);
            for c in 0..cols {
                j[(i, c)] = row[c];
            }
            unit[i] = 0.0;
        }
        (end, j)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient descent with Barzilai-Borwein steps and Armijo backtracking.
fn descend(obj: &Objective, u: &mut Vec<f64>, mu: f64, settings: &RateSettings, alpha: &mut f64) -> Result<usize> {
    let len = u.len();
    let mut grad = vec![0.0; len];
    let mut f = obj.penalized(u, mu, &mut grad)?;
    if !f.is_finite() {
        return Ok(0);
    }
    let mut history = vec![f];
    let mut cand = vec![0.0; len];
    let mut cand_grad = vec![0.0; len];
    for it in 0..settings.max_iterations {
        let g2 = dot(&grad, &grad);
        if g2 == 0.0 {
            return Ok(it);
        }
        let mut step = *alpha;
        let mut accepted = false;
        for _ in 0..80 {
            for i in 0..len {
                cand[i] = u[i] - step * grad[i];
            }
            let fc = obj.penalized_value(&cand, mu)?;
            if fc.is_finite() && fc <= f - 1e-4 * step * g2 {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok(it);
        }
        cand_grad.iter_mut().for_each(|v| *v = 0.0);
        let fc = obj.penalized(&cand, mu, &mut cand_grad)?;
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..len {
            let s = cand[i] - u[i];
            let y = cand_grad[i] - grad[i];
            ss += s * s;
            sy += s * y;
        }
        *alpha = if sy > 0.0 {
            (ss / sy).clamp(1e-16, 1e8)
        } else {
            (step * 2.0).min(1e8)
        };
        std::mem::swap(u, &mut cand);
        std::mem::swap(&mut grad, &mut cand_grad);
        f = fc;
        history.push(f);
        let w = settings.stall_window;
        if history.len() > w {
            let old = history[history.len() - 1 - w];
            if (old - f).abs() <= settings.stall_tolerance * f.abs().max(1e-300) {
                return Ok(it + 1);
            }
        }
    }
    Ok(settings.max_iterations)
}

/// Minimum-norm Gauss-Newton steps towards `Psi_m(u) = target`.
fn restore(obj: &Objective, u: &mut Vec<f64>, settings: &RateSettings) -> f64 {
    let mut residual = obj.residual(u);
    for _ in 0..settings.restoration_steps {
        if residual <= 1e-3 * settings.tolerance {
            break;
        }
        let (end, j) = obj.endpoint_jacobian(u);
        let r = DVector::from_iterator(obj.n, end.iter().zip(obj.target).map(|(a, b)| a - b));
        let jjt = &j * j.transpose();
        let svd = jjt.svd(true, true);
        let eps = 1e-14 * svd.singular_values.max().max(1e-300);
        let Ok(y) = svd.solve(&r, eps) else { break };
        let delta = j.transpose() * y;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = u.iter().zip(delta.iter()).map(|(a, d)| a - t * d).collect();
            let res = obj.residual(&cand);
            if res < residual {
                *u = cand;
                residual = res;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    residual
}

struct Candidate {
    u: Vec<f64>,
    report: RestartReport,
}

fn run_restart(
    obj: &Objective,
    settings: &RateSettings,
    start: &str,
    index: usize,
    mut u: Vec<f64>,
) -> Result<Candidate> {
    let mut mu = settings.penalty_start;
    let mut alpha = 1e-3;
    let mut iterations = 0;
    for _ in 0..settings.penalty_rounds {
        iterations += descend(obj, &mut u, mu, settings, &mut alpha)?;
        mu *= settings.penalty_factor;
        alpha /= settings.penalty_factor;
    }
    let residual = restore(obj, &mut u, settings);
    let value = obj.rate(&u, None)?;
    let feasible = residual <= settings.tolerance && value.is_finite();
    Ok(Candidate {
        u,
        report: RestartReport {
            start: start.into(),
            index,
            value,
            residual,
            feasible,
            iterations,
        },
    })
}

fn straight_line(obj: &Objective) -> Vec<f64> {
    let mf = obj.m as f64;
    let h: Vec<f64> = obj.target[..obj.d1].iter().map(|v| v / mf).collect();
    (0..obj.m).flat_map(|_| h.iter().copied()).collect()
}

/// Computes `J_m(target)`.
pub fn minimize_rate(problem: &RateProblem) -> Result<RateResult> {
    let group = problem.group;
    check_len(group.dim(), problem.target.len())?;
    check_len(group.horizontal_dim(), problem.model.dim())?;
    if problem.m == 0 {
        return Err(Error::invalid("m must be >= 1"));
    }
    if problem.target.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("target coordinates must be finite"));
    }
    let s = &problem.settings;
    if !(s.tolerance > 0.0) || !(s.penalty_start > 0.0) || !(s.penalty_factor > 1.0) {
        return Err(Error::invalid(
            "tolerance, penalty start and penalty factor must be positive (factor > 1)",
        ));
    }
    let obj = Objective {
        group,
        model: problem.model,
        target: &problem.target,
        m: problem.m,
        d1: group.horizontal_dim(),
        n: group.dim(),
    };

    // the straight segment is exact whenever it is feasible (horizontal targets)
    let line = straight_line(&obj);
    let line_residual = obj.residual(&line);
    let line_value = obj.rate(&line, None)?;
    let mut candidates = vec![Candidate {
        report: RestartReport {
            start: "straight_line".into(),
            index: 0,
            value: line_value,
            residual: line_residual,
            feasible: line_residual <= s.tolerance && line_value.is_finite(),
            iterations: 0,
        },
        u: line.clone(),
    }];

    let scale = group.homogeneous_norm(&problem.target).max(1e-3);
    let mf = problem.m as f64;
    let runs = par::map_indexed(s.restarts, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(i as u64);
        let spread = if i == 0 { 0.1 } else { 1.0 } * scale / mf.sqrt();
        let u0: Vec<f64> = line
            .iter()
            .map(|v| v + spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        run_restart(&obj, s, "random", i + 1, u0)
    });
    for r in runs {
        candidates.push(r?);
    }

    let best = candidates.iter().filter(|c| c.report.feasible).min_by(|a, b| {
        a.report
            .value
            .total_cmp(&b.report.value)
            .then(a.report.index.cmp(&b.report.index))
    });
    let Some(best) = best else {
        let best_residual = candidates
            .iter()
            .map(|c| c.report.residual)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::Infeasible {
            best_residual,
            tolerance: s.tolerance,
        });
    };
    let d1 = obj.d1;
    Ok(RateResult {
        value: best.report.value,
        residual: best.report.residual,
        m: problem.m,
        control: best.u.chunks(d1).map(|c| c.to_vec()).collect(),
        diagnostics: RateDiagnostics {
            group: group.name().to_string(),
            model: problem.model.name(),
            tolerance: s.tolerance,
            best_restart: best.report.index,
            restarts: candidates.iter().map(|c| c.report.clone()).collect(),
        },
    })
}

/// `J_m` along an increasing schedule of `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateLimit {
    pub entries: Vec<RateResult>,
    /// `min_m J_m`, an upper estimate of `J`.
    pub estimate: f64,
    /// Schedule positions where `J_m` rose by more than the noise level.
    pub warnings: Vec<String>,
    /// Set when the optional relative-change stopping rule ended the schedule.
    pub stopped_early: bool,
}

/// Relative increase of `J_m` along the schedule tolerated as optimizer noise.
pub const MONOTONE_NOISE: f64 = 1e-4;

/// Runs [`minimize_rate`] for every `m` in the schedule.
///
/// With `stop_rel_change = Some(r)` the schedule stops once consecutive
/// values differ by less than `r` relatively.
pub fn rate_limit(
    group: &CarnotGroup,
    model: &CumulantModel,
    target: &[f64],
    schedule: &[usize],
    settings: &RateSettings,
    stop_rel_change: Option<f64>,
) -> Result<RateLimit> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("m schedule must be non-empty and strictly increasing"));
    }
    let mut entries: Vec<RateResult> = Vec::new();
    let mut warnings = Vec::new();
    let mut stopped_early = false;
    for &m in schedule {
        let res = minimize_rate(&RateProblem {
            group,
            model,
            target: target.to_vec(),
            m,
            settings: settings.clone(),
        })?;
        if let Some(prev) = entries.last() {
            if res.value > prev.value * (1.0 + MONOTONE_NOISE) + 1e-12 {
                warnings.push(format!(
                    "J_{m} = {:.9e} exceeds J_{} = {:.9e}",
                    res.value, prev.m, prev.value
                ));
            }
        }
        let change = entries
            .last()
            .map(|p| (p.value - res.value).abs() / p.value.abs().max(1e-300));
        entries.push(res);
        if let (Some(r), Some(c)) = (stop_rel_change, change) {
            if c < r {
                stopped_early = entries.len() < schedule.len();
                break;
            }
        }
    }
    let estimate = entries.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
    Ok(RateLimit {
        entries,
        estimate,
        warnings,
        stopped_early,
    })
}

/// `d_cc(e, x) = sqrt(2 J_m(x))` for the standard Gaussian model.
pub fn cc_distance(group: &CarnotGroup, target: &[f64], m: usize, settings: &RateSettings) -> Result<f64> {
    let model = CumulantModel::gaussian(group);
    let res = minimize_rate(&RateProblem {
        group,
        model: &model,
        target: target.to_vec(),
        m,
        settings: settings.clone(),
    })?;
    Ok((2.0 * res.value).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heis() -> CarnotGroup {
        CarnotGroup::heisenberg(2).unwrap()
    }

    fn problem<'a>(g: &'a CarnotGroup, model: &'a CumulantModel, target: Vec<f64>, m: usize) -> RateProblem<'a> {
        RateProblem {
            group: g,
            model,
            target,
            m,
            settings: RateSettings::default(),
        }
    }

    #[test]
    fn discrete_rate_examples() {
        let line = CarnotGroup::euclidean(1).unwrap();
        let model = CumulantModel::gaussian(&line);
        assert_eq!(discrete_rate(&model, &[vec![0.5], vec![0.5]]).unwrap(), 0.5);
        assert_eq!(
            discrete_rate(&model, &[vec![0.7]]).unwrap(),
            model.legendre(&[0.7]).unwrap()
        );
        assert_eq!(discrete_rate(&model, &vec![vec![0.0]; 4]).unwrap(), 0.0);
    }

    #[test]
    fn identity_target_costs_nothing() {
        let g = heis();
        let model = CumulantModel::gaussian(&g);
        let res = minimize_rate(&problem(&g, &model, vec![0.0; 3], 4)).unwrap();
        assert_eq!(res.value, 0.0);
        assert!(res.control.iter().all(|u| u.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = CarnotGroup::engel();
        let model = CumulantModel::gaussian(&g);
        let target = vec![0.3, -0.2, 0.4, 0.1];
        let obj = Objective {
            group: &g,
            model: &model,
            target: &target,
            m: 5,
            d1: 2,
            n: 4,
        };
        let u: Vec<f64> = (0..10).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.13).collect();
        let mu = 3.0;
        let mut grad = vec![0.0; 10];
        obj.penalized(&u, mu, &mut grad).unwrap();
        let h = 1e-6;
        for i in 0..10 {
            let mut p = u.clone();
            let mut q = u.clone();
            p[i] += h;
            q[i] -= h;
            let fd = (obj.penalized_value(&p, mu).unwrap() - obj.penalized_value(&q, mu).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-5, "{i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn horizontal_target_is_half_squared_norm() {
        let g = heis();
        let model = CumulantModel::gaussian(&g);
        for m in [1, 3, 8] {
            let res = minimize_rate(&problem(&g, &model, vec![0.6, -0.8, 0.0], m)).unwrap();
            assert!((res.value - 0.5).abs() < 1e-9, "m={m}: {}", res.value);
            assert!(res.residual <= 1e-6);
        }
    }

    #[test]
    fn infeasible_reports_best_residual() {
        let g = heis();
        let model = CumulantModel::uniform_cube(&g);
        // steps bounded by 1 per coordinate cannot reach a displacement of 5 in one segment
        let mut p = problem(&g, &model, vec![5.0, 0.0, 0.0], 1);
        p.settings.restarts = 2;
        p.settings.max_iterations = 200;
        let err = minimize_rate(&p).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }), "{err:?}");
    }

    #[test]
    fn rate_limit_rejects_bad_schedule() {
        let g = heis();
        let model = CumulantModel::gaussian(&g);
        let s = RateSettings::default();
        assert!(rate_limit(&g, &model, &[0.0; 3], &[4, 2], &s, None).is_err());
        assert!(rate_limit(&g, &model, &[0.0; 3], &[], &s, None).is_err());
    }

    #[test]
    fn rate_result_json_has_expected_fields() {
        let g = heis();
        let model = CumulantModel::gaussian(&g);
        let res = minimize_rate(&problem(&g, &model, vec![0.2, 0.0, 0.0], 2)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&res.to_json()).unwrap();
        for key in ["value", "residual", "m", "control", "diagnostics"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
