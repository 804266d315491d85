//! Subcommand drivers.

use crate::config::Resolved;
use crate::error::CliError;
use crate::output::OutputDir;
use carnot_core::diagnostics::{combine_subexp, mgf_bound_check, window_matrix_norms, SubExpParams, WindowNorms};
use carnot_core::mc::{approximation_decay_study, slope_study, SlopeReport};
use carnot_core::par;
use carnot_core::rate::{minimize_rate, rate_limit, RateProblem};
use carnot_core::walk::{approximation_gap, sample_walk_trial};
use serde::Serialize;
use std::io::Write;
use std::path::PathBuf;

fn out_dir(res: &Resolved, command: &str) -> PathBuf {
    res.config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("carnot-out").join(command))
}

fn start(res: &Resolved, command: &str) -> Result<OutputDir, CliError> {
    let mut out = OutputDir::prepare(&out_dir(res, command))?;
    out.write_json("config.json", &res.config)?;
    Ok(out)
}

fn finish(out: OutputDir, res: &Resolved, command: &str) -> Result<(), CliError> {
    let manifest = out.finish(command, &res.hash)?;
    let names: Vec<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
    // a closed pipe on stdout is not an error for the run
    let _ = writeln!(
        std::io::stdout(),
        "{command}: wrote {} to {}",
        names.join(", "),
        out_dir(res, command).display()
    );
    Ok(())
}

fn csv_float(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct CheckRow {
    identity: String,
    passed: bool,
    max_residual: f64,
}

#[derive(Serialize)]
struct GroupInfo {
    name: String,
    step: usize,
    dim: usize,
    layer_dims: Vec<usize>,
    homogeneity: Vec<usize>,
    homogeneous_dimension: usize,
    validation: Vec<CheckRow>,
    descriptor: carnot_core::GroupDescriptor,
}

pub fn group_info(res: &Resolved, write_files: bool) -> Result<(), CliError> {
    let g = &res.group;
    let info = GroupInfo {
        name: g.name().into(),
        step: g.step(),
        dim: g.dim(),
        layer_dims: g.layer_dims().to_vec(),
        homogeneity: g.homogeneity().to_vec(),
        homogeneous_dimension: g.homogeneous_dimension(),
        validation: g
            .validation()
            .iter()
            .map(|c| CheckRow {
                identity: c.identity.clone(),
                passed: c.passed,
                max_residual: c.max_residual,
            })
            .collect(),
        descriptor: g.descriptor(),
    };
    let _ = writeln!(
        std::io::stdout(),
        "{}",
        serde_json::to_string_pretty(&info).expect("report serializes")
    );
    if write_files {
        let mut out = start(res, "group-info")?;
        out.write_json("group_info.json", &info)?;
        let manifest = out.finish("group-info", &res.hash)?;
        debug_assert!(!manifest.files.is_empty());
    }
    Ok(())
}

#[derive(Serialize)]
struct WalkSummary {
    group: String,
    distribution: String,
    n: usize,
    trials: u64,
    m: Option<usize>,
    mean_rescaled_norm: f64,
    median_rescaled_norm: f64,
    median_gap: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn walk(res: &Resolved) -> Result<(), CliError> {
    let g = &res.group;
    let dist = res.distribution()?;
    let wc = &res.config.walk;
    let seed = res.config.seed;
    let runs = par::map_indexed(wc.trials as usize, |t| -> Result<_, CliError> {
        let run = sample_walk_trial(g, &dist, wc.n, seed, t as u64, wc.m.is_some())?;
        let gap = match wc.m {
            Some(m) => Some(approximation_gap(g, &run, m)?),
            None => None,
        };
        Ok((run, gap))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_, _>>()?;

    let dim = g.dim();
    let mut csv = String::from("seed,trial,n,m,gap");
    for i in 1..=dim {
        csv.push_str(&format!(",s_{i}"));
    }
    for i in 1..=dim {
        csv.push_str(&format!(",r_{i}"));
    }
    csv.push('\n');
    for (run, gap) in &runs {
        csv.push_str(&format!(
            "{},{},{},{},{}",
            run.seed,
            run.trial,
            run.n,
            wc.m.map(|m| m.to_string()).unwrap_or_default(),
            gap.map(csv_float).unwrap_or_default()
        ));
        for v in run.terminal.iter().chain(&run.rescaled) {
            csv.push(',');
            csv.push_str(&csv_float(*v));
        }
        csv.push('\n');
    }
    let norms: Vec<f64> = runs.iter().map(|(r, _)| g.homogeneous_norm(&r.rescaled)).collect();
    let summary = WalkSummary {
        group: g.name().into(),
        distribution: dist.name(),
        n: wc.n,
        trials: wc.trials,
        m: wc.m,
        mean_rescaled_norm: norms.iter().sum::<f64>() / norms.len() as f64,
        median_rescaled_norm: median(norms),
        median_gap: wc.m.map(|_| median(runs.iter().filter_map(|r| r.1).collect())),
    };
    let mut out = start(res, "walk")?;
    out.write("walks.csv", &csv)?;
    out.write_json("walk.json", &summary)?;
    finish(out, res, "walk")
}

fn control_csv(control: &[Vec<f64>]) -> String {
    let d = control.first().map_or(0, |u| u.len());
    let mut csv = String::from("k");
    for i in 1..=d {
        csv.push_str(&format!(",u_{i}"));
    }
    csv.push('\n');
    for (k, u) in control.iter().enumerate() {
        csv.push_str(&(k + 1).to_string());
        for v in u {
            csv.push(',');
            csv.push_str(&csv_float(*v));
        }
        csv.push('\n');
    }
    csv
}

pub fn rate(res: &Resolved) -> Result<(), CliError> {
    let g = &res.group;
    let dist = res.distribution()?;
    let rc = &res.config.rate;
    let target = rc.target.clone().unwrap_or_else(|| g.identity());
    let mut out = start(res, "rate")?;
    match &rc.m_schedule {
        Some(schedule) => {
            let limit = rate_limit(g, dist.model(), &target, schedule, &rc.settings, None)?;
            let mut csv = String::from("m,value,residual\n");
            for e in &limit.entries {
                csv.push_str(&format!("{},{},{}\n", e.m, csv_float(e.value), csv_float(e.residual)));
            }
            let last = limit.entries.last().expect("non-empty schedule");
            out.write("control.csv", &control_csv(&last.control))?;
            out.write("schedule.csv", &csv)?;
            out.write_json("rate.json", &limit)?;
        }
        None => {
            let result = minimize_rate(&RateProblem {
                group: g,
                model: dist.model(),
                target,
                m: rc.m,
                settings: rc.settings.clone(),
            })?;
            out.write("control.csv", &control_csv(&result.control))?;
            out.write_json("rate.json", &result)?;
        }
    }
    finish(out, res, "rate")
}

fn long_table(report: &SlopeReport) -> String {
    let mut csv = String::from("series,n,value\n");
    let mut row = |series: &str, n: usize, v: f64| {
        csv.push_str(&format!("{series},{n},{}\n", csv_float(v)));
    };
    for e in &report.estimates {
        if e.hits > 0 {
            row("log_p_hat", e.n, e.p_hat.ln());
            row("log_ci_low", e.n, e.ci_low.ln());
        }
        row("log_ci_high", e.n, e.ci_high.ln());
    }
    if let Some(fit) = &report.fit {
        for e in &report.estimates {
            row("fit", e.n, fit.intercept + fit.slope * e.n as f64);
            if let Some(s) = report.reference_slope {
                row("reference", e.n, fit.intercept + s * e.n as f64);
            }
        }
    }
    csv
}

pub fn mc_slope(res: &Resolved) -> Result<(), CliError> {
    let g = &res.group;
    let dist = res.distribution()?;
    let mc = &res.config.mc;
    let report = slope_study(
        g,
        &dist,
        &mc.event,
        &mc.n_schedule,
        mc.trials,
        res.config.seed,
        mc.reference.as_ref(),
    )?;
    if report.estimates.iter().all(|e| e.hits == 0) {
        return Err(CliError::new(
            "mc_zero_hits",
            format!("no trial hit the event at any n ({} trials each)", mc.trials),
        ));
    }
    let mut out = start(res, "mc-slope")?;
    out.write("slope.csv", &report.to_csv())?;
    out.write("slope_long.csv", &long_table(&report))?;
    out.write_json("slope.json", &report)?;
    finish(out, res, "mc-slope")
}

pub fn approx_study(res: &Resolved) -> Result<(), CliError> {
    let g = &res.group;
    let dist = res.distribution()?;
    let ac = &res.config.approx;
    let study = approximation_decay_study(
        g,
        &dist,
        ac.delta,
        &ac.n_schedule,
        &ac.m_list,
        ac.trials,
        res.config.seed,
    )?;
    let mut out = start(res, "approx-study")?;
    out.write("approx.csv", &study.to_csv())?;
    out.write_json("approx.json", &study)?;
    finish(out, res, "approx-study")
}

#[derive(Serialize)]
struct DiagReport {
    window_norms: Vec<WindowNorms>,
    subexp_sum: Option<SubExpParams>,
    independent: bool,
    curvature: Vec<(usize, usize, Option<f64>)>,
    pruned_lambdas: Vec<f64>,
    notices: Vec<String>,
}

pub fn diag(res: &Resolved) -> Result<(), CliError> {
    let dc = &res.config.diag;
    let kind = res.model_kind()?;
    let norms: Vec<WindowNorms> = dc
        .windows
        .iter()
        .map(|&(k, l)| window_matrix_norms(k, l))
        .collect::<Result<_, _>>()?;
    let table = mgf_bound_check(
        kind,
        &dc.windows,
        &dc.lambdas,
        dc.trials,
        res.config.seed,
        dc.convention,
    )?;
    let subexp_sum = if dc.subexp.is_empty() {
        None
    } else {
        Some(combine_subexp(&dc.subexp, dc.independent)?)
    };
    let mut csv = String::from("k,l,nonzero_entries,hs,op_bound,stated_hs,discrepancy\n");
    for w in &norms {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            w.k,
            w.l,
            w.nonzero_entries,
            csv_float(w.hs),
            csv_float(w.op_bound),
            csv_float(w.stated_hs),
            w.discrepancy
        ));
    }
    let report = DiagReport {
        curvature: dc.windows.iter().map(|&(k, l)| (k, l, table.curvature(k, l))).collect(),
        window_norms: norms,
        subexp_sum,
        independent: dc.independent,
        pruned_lambdas: table.pruned.clone(),
        notices: table.notices.clone(),
    };
    let mut out = start(res, "diag")?;
    out.write("window_norms.csv", &csv)?;
    out.write("mgf.csv", &table.to_csv())?;
    out.write_json("diag.json", &report)?;
    finish(out, res, "diag")
}
