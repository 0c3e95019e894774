use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use super::{ExperimentConfig, ExperimentKind, ExperimentRecord, Fit, Row, RowStatus};
use crate::concentration::{empirical_tail, estimate_sphere_mean, levy_tail_bound, Center};
use crate::error::{invalid, Result};
use crate::linf::{james_iterate, ConstantSource, VectorSystem};
use crate::norms::{comparison_constants, figiel_exponent, figiel_norm_spec, parse_norm, Exponent, NormSpec};
use crate::random::{sample_gaussian_vector, sample_sphere, sample_subspace, stable_hash, RandomSource};
use crate::sections::{
    kmax_search, measure_distortion_with, milman_candidate_dim, KmaxOptions, MeasureOptions, OptimizerSettings,
};
use crate::stats::linear_fit;

/// Dispatch on `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    match config.experiment {
        ExperimentKind::LpScaling => run_lp_scaling(config),
        ExperimentKind::LinfLogn => run_linf_logn(config),
        ExperimentKind::Figiel => run_figiel(config),
        ExperimentKind::Concentration => run_concentration(config),
        ExperimentKind::JamesDemo => run_james_demo(config),
    }
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.experiment != kind {
        return Err(invalid(format!("config is for {}, not {kind}", config.experiment)));
    }
    config.validate()
}

/// Stream for one grid point: a stable hash of the point's description.
fn point_rng(config: &ExperimentConfig, key: &str) -> RandomSource {
    let desc = format!("{}|{key}", config.experiment);
    RandomSource::new(config.seed, stable_hash(desc.as_bytes()))
}

struct RowBuilder<'a> {
    config: &'a ExperimentConfig,
    label: String,
    norm_json: String,
    n: usize,
    eps: f64,
}

impl RowBuilder<'_> {
    fn ok(&self, k: Option<usize>, values: BTreeMap<String, f64>) -> Row {
        Row {
            experiment: self.config.experiment.name().into(),
            label: self.label.clone(),
            norm_json: self.norm_json.clone(),
            n: self.n,
            k,
            eps: self.eps,
            seed: self.config.seed,
            status: RowStatus::Ok,
            detail: String::new(),
            values,
        }
    }

    fn failed(&self, k: Option<usize>, err: impl std::fmt::Display) -> Row {
        Row {
            status: RowStatus::Failed,
            detail: err.to_string(),
            ..self.ok(k, BTreeMap::new())
        }
    }
}

fn values<const N: usize>(pairs: [(&str, f64); N]) -> BTreeMap<String, f64> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Per-series least-squares fit of `value` against `n`.
fn fit_series(
    rows: &[Row],
    labels: &[String],
    value: &str,
    log_x: bool,
    log_y: bool,
    x_name: &str,
    y_name: &str,
) -> Vec<Fit> {
    let t = |v: f64, log: bool| if log { v.ln() } else { v };
    labels
        .iter()
        .filter_map(|label| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| &r.label == label && r.is_ok())
                .filter_map(|r| r.value(value).map(|v| (r.n as f64, v)))
                .filter(|&(x, y)| (!log_x || x > 0.0) && (!log_y || y > 0.0))
                .map(|(x, y)| (t(x, log_x), t(y, log_y)))
                .unzip();
            let f = linear_fit(&xs, &ys)?;
            Some(Fit {
                series: label.clone(),
                x: x_name.into(),
                y: y_name.into(),
                log_x,
                log_y,
                slope: f.slope,
                intercept: f.intercept,
                slope_stderr: f.slope_stderr,
                points: f.points,
            })
        })
        .collect()
}

fn record(config: &ExperimentConfig, rows: Vec<Row>, fits: Vec<Fit>, started: Instant) -> ExperimentRecord {
    ExperimentRecord {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        rows,
        fits,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    }
}

/// `(norm, n)` grid points in canonical order.
fn norm_grid(config: &ExperimentConfig) -> Vec<(String, usize)> {
    config
        .norms
        .iter()
        .flat_map(|norm| config.n_grid.iter().map(move |&n| (norm.clone(), n)))
        .collect()
}

fn kmax_row(config: &ExperimentConfig, norm: &str, n: usize) -> Row {
    let b = RowBuilder {
        config,
        label: norm.into(),
        norm_json: String::new(),
        n,
        eps: config.eps,
    };
    let spec = match parse_norm(norm, n) {
        Ok(s) => s,
        Err(e) => return b.failed(None, e),
    };
    let b = RowBuilder {
        norm_json: spec.to_json(),
        ..b
    };
    let mut rng = point_rng(config, &format!("{norm}|{n}"));
    let opts = KmaxOptions {
        samples: config.samples,
        restarts: config.restarts,
        settings: OptimizerSettings::fast(),
    };
    match kmax_search(&spec, n, config.eps, config.attempts, &mut rng, &opts) {
        Ok(rep) => {
            let at = rep.trials.iter().find(|t| t.k == rep.kmax);
            let mut v = values([
                ("kmax", rep.kmax as f64),
                ("trials", rep.trials.len() as f64),
                ("best_distortion", at.map_or(1.0, |t| t.best_distortion)),
                ("log_n", (n as f64).ln()),
                ("k_over_log_n", rep.kmax as f64 / (n as f64).ln()),
            ]);
            if let NormSpec::Lp { p: Exponent::Finite(p), .. } = spec {
                v.insert("two_over_p".into(), 2.0 / p);
            }
            b.ok(Some(rep.kmax), v)
        }
        Err(e) => b.failed(None, e),
    }
}

/// `kmax_search` per `(norm, n)`, with `ln k = α ln n + β` fitted per norm.
pub fn run_lp_scaling(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    expect_kind(config, ExperimentKind::LpScaling)?;
    let started = Instant::now();
    let rows: Vec<Row> = norm_grid(config)
        .par_iter()
        .map(|(norm, n)| kmax_row(config, norm, *n))
        .collect();
    let fits = fit_series(&rows, &config.norms, "kmax", true, true, "ln n", "ln kmax");
    Ok(record(config, rows, fits, started))
}

/// `kmax_search` on `ℓ∞ⁿ`, fitted as `k = s·ln n + c`; rows also carry
/// the upper bound `4 ln n / ln(1/(32ε))` when `ε < 1/32`.
pub fn run_linf_logn(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    expect_kind(config, ExperimentKind::LinfLogn)?;
    let started = Instant::now();
    let rows: Vec<Row> = norm_grid(config)
        .par_iter()
        .map(|(norm, n)| {
            let mut row = kmax_row(config, norm, *n);
            if row.is_ok() && config.eps < 1.0 / 32.0 && *n >= 2 {
                if let Ok(bound) = crate::linf::linf_upper_bound_dim(*n, config.eps) {
                    let k = row.value("kmax").unwrap_or(0.0);
                    row.values.insert("upper_bound".into(), bound);
                    row.values.insert("within_upper_bound".into(), flag(k <= bound));
                }
            }
            row
        })
        .collect();
    let fits = fit_series(&rows, &config.norms, "kmax", true, false, "ln n", "kmax");
    Ok(record(config, rows, fits, started))
}

/// Minimal observed distortion of random `k`-sections of Figiel's norm per
/// `k`, and the empirical threshold `k*` where it crosses `1+ε`.
pub fn run_figiel(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    expect_kind(config, ExperimentKind::Figiel)?;
    let started = Instant::now();
    let eps = config.eps;
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        let base = RowBuilder {
            config,
            label: "whole-space".into(),
            norm_json: String::new(),
            n,
            eps,
        };
        let spec = match figiel_norm_spec(n, eps) {
            Ok(s) => s,
            Err(e) => {
                rows.push(base.failed(None, e));
                continue;
            }
        };
        let norm_json = spec.to_json();
        let c = comparison_constants(&spec)?;
        let p = figiel_exponent(n, eps);
        let base = RowBuilder { norm_json, ..base };
        rows.push(base.ok(
            Some(n),
            values([
                ("b_upper", c.b_upper),
                ("b_lower", c.b_lower),
                ("whole_space_distortion", c.distortion()),
                ("p", p),
            ]),
        ));

        let ks: Vec<usize> = config.k_grid.iter().copied().filter(|&k| k >= 1 && k <= n).collect();
        let section = RowBuilder {
            label: "section".into(),
            ..base
        };
        let measured: Vec<Row> = ks
            .par_iter()
            .map(|&k| {
                let rng = point_rng(config, &format!("{n}|{k}"));
                let mut best = f64::INFINITY;
                for attempt in 0..config.attempts {
                    let mut local = rng.substream(attempt as u64);
                    let frame = match sample_subspace(n, k, &mut local) {
                        Ok(f) => f,
                        Err(e) => return section.failed(Some(k), e),
                    };
                    let opts = MeasureOptions {
                        samples: config.samples,
                        restarts: config.restarts,
                        settings: OptimizerSettings::fast(),
                        abort_above: None,
                    };
                    match measure_distortion_with(&spec, &frame, &opts, &mut local) {
                        Ok(m) => best = best.min(m.distortion),
                        Err(e) => return section.failed(Some(k), e),
                    }
                }
                section.ok(
                    Some(k),
                    values([
                        ("min_distortion", best),
                        ("success", flag(best <= 1.0 + eps)),
                    ]),
                )
            })
            .collect();
        let k_star = measured
            .iter()
            .filter(|r| r.is_ok() && r.value("success") == Some(1.0))
            .filter_map(|r| r.k)
            .max()
            .unwrap_or(0);
        rows.extend(measured);

        let mut rng = point_rng(config, &format!("{n}|mean"));
        let threshold = RowBuilder {
            label: "threshold".into(),
            ..section
        };
        match estimate_sphere_mean(&spec, n, config.samples.max(2000), &mut rng) {
            Ok(stats) => {
                let eps2n = eps * eps * n as f64;
                let milman = milman_candidate_dim(stats.mean, c.b_upper, eps, n, 1.0).unwrap_or(1);
                rows.push(threshold.ok(
                    Some(k_star),
                    values([
                        ("k_star", k_star as f64),
                        ("eps2_n", eps2n),
                        ("c_fit", k_star as f64 / eps2n),
                        ("mean", stats.mean),
                        ("milman_candidate", milman as f64),
                        // 1 when every k in the grid succeeded: k* is then
                        // only a lower bound on the threshold.
                        ("censored", flag(ks.last().is_some_and(|&k| k == k_star))),
                    ]),
                ));
            }
            Err(e) => rows.push(threshold.failed(Some(k_star), e)),
        }
    }
    let mut fit_rows: Vec<Row> = rows.iter().filter(|r| r.label == "section").cloned().collect();
    // Fit ln(min distortion − 1) against ln k, reusing the n column for k.
    for r in &mut fit_rows {
        r.n = r.k.unwrap_or(0);
        let d = r.value("min_distortion").unwrap_or(f64::NAN) - 1.0;
        r.values.insert("excess".into(), d);
    }
    let fits = fit_series(&fit_rows, &["section".to_string()], "excess", true, true, "ln k", "ln(distortion - 1)");
    Ok(record(config, rows, fits, started))
}

/// Empirical tails `μ{|‖x‖ − E| > t·E}` next to Levy's bound.
pub fn run_concentration(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    expect_kind(config, ExperimentKind::Concentration)?;
    let started = Instant::now();
    let cells: Vec<(String, usize, f64)> = norm_grid(config)
        .into_iter()
        .flat_map(|(norm, n)| config.eps_grid.iter().map(move |&f| (norm.clone(), n, f)))
        .collect();
    let rows: Vec<Row> = cells
        .par_iter()
        .map(|(norm, n, factor)| {
            let n = *n;
            let b = RowBuilder {
                config,
                label: norm.clone(),
                norm_json: String::new(),
                n,
                eps: *factor,
            };
            let spec = match parse_norm(norm, n) {
                Ok(s) => s,
                Err(e) => return b.failed(None, e),
            };
            let b = RowBuilder {
                norm_json: spec.to_json(),
                ..b
            };
            let mut rng = point_rng(config, &format!("{norm}|{n}|{factor}"));
            let mut cell = || -> Result<Row> {
                let lipschitz = comparison_constants(&spec)?.b_upper;
                let mean = estimate_sphere_mean(&spec, n, config.samples, &mut rng.fork())?.mean;
                let eps_abs = factor * mean;
                let tail = empirical_tail(&spec, n, eps_abs, config.samples, &mut rng, Center::Mean)?;
                let bound = levy_tail_bound(eps_abs, n, lipschitz)?;
                Ok(b.ok(
                    None,
                    values([
                        ("mean", mean),
                        ("eps_abs", eps_abs),
                        ("empirical", tail.fraction),
                        ("sigma", tail.sigma),
                        ("levy_bound", bound),
                        ("lipschitz", lipschitz),
                        ("dominated", flag(tail.fraction <= bound + 3.0 * tail.sigma)),
                    ]),
                ))
            };
            cell().unwrap_or_else(|e| b.failed(None, e))
        })
        .collect();
    Ok(record(config, rows, Vec::new(), started))
}

/// The generated systems used by `james-demo`, by name.
pub fn demo_system(name: &str, m: usize, rng: &mut RandomSource) -> Result<VectorSystem> {
    match name {
        "linf-basis" => VectorSystem::standard_basis(NormSpec::linf(m)),
        "aligned" => VectorSystem::aligned(NormSpec::linf(2), vec![1.0, 0.0], m),
        "random-l2" => {
            let d = 16;
            VectorSystem::new(NormSpec::l2(d), (0..m).map(|_| sample_sphere(d, rng)).collect(), 1.0)
        }
        "perturbed-linf" => {
            let spec = NormSpec::linf(m);
            let vectors = (0..m)
                .map(|i| {
                    let mut v: Vec<f64> = sample_gaussian_vector(m, rng).iter().map(|g| 0.05 * g).collect();
                    v[i] += 1.0;
                    let r = spec.eval(&v);
                    v.iter().map(|x| x / r).collect()
                })
                .collect();
            VectorSystem::new(spec, vectors, 1.0 - 1e-12)
        }
        other => Err(invalid(format!(
            "unknown james-demo system {other:?} (expected linf-basis, aligned, random-l2 or perturbed-linf)"
        ))),
    }
}

/// James iteration on generated systems, one row per level.
pub fn run_james_demo(config: &ExperimentConfig) -> Result<ExperimentRecord> {
    expect_kind(config, ExperimentKind::JamesDemo)?;
    let started = Instant::now();
    let per_system: Vec<Vec<Row>> = config
        .norms
        .par_iter()
        .map(|name| {
            let b = RowBuilder {
                config,
                label: name.clone(),
                norm_json: String::new(),
                n: 0,
                eps: config.eps,
            };
            let mut rng = point_rng(config, &format!("{name}|{}", config.m));
            let sys = match demo_system(name, config.m, &mut rng) {
                Ok(s) => s,
                Err(e) => return vec![b.failed(None, e)],
            };
            let b = RowBuilder {
                norm_json: sys.ambient.to_json(),
                n: sys.dim(),
                ..b
            };
            let it = match james_iterate(&sys, config.eps, None) {
                Ok(it) => it,
                Err(e) => return vec![b.failed(None, e)],
            };
            let mut rows: Vec<Row> = it
                .levels
                .iter()
                .enumerate()
                .map(|(level, l)| {
                    let mut v = values([
                        ("level", level as f64),
                        ("constant", l.constant),
                        (
                            "exact",
                            flag(matches!(l.source, ConstantSource::Exact | ConstantSource::ClosedForm)),
                        ),
                    ]);
                    if level > 0 {
                        let prev = it.levels[level - 1].constant.sqrt();
                        v.insert("sqrt_previous".into(), prev);
                        v.insert("contract_ok".into(), flag(l.constant <= prev + 1e-12));
                    }
                    b.ok(Some(l.length), v)
                })
                .collect();
            let mut v = values([
                ("planned_steps", it.planned_steps as f64),
                ("steps_taken", it.steps_taken as f64),
                ("final_constant", it.final_constant),
                ("reached_target", flag(it.reached_target)),
            ]);
            if let (Some(lo), Some(hi), Some(ok)) = (it.vertex_min, it.vertex_max, it.two_sided) {
                v.insert("vertex_min".into(), lo);
                v.insert("vertex_max".into(), hi);
                v.insert("two_sided".into(), flag(ok));
            }
            let summary = RowBuilder {
                label: format!("{name}/final"),
                ..b
            };
            rows.push(match &it.note {
                Some(note) if !it.reached_target => Row {
                    detail: note.clone(),
                    ..summary.ok(Some(it.system.len()), v)
                },
                _ => summary.ok(Some(it.system.len()), v),
            });
            rows
        })
        .collect();
    Ok(record(config, per_system.into_iter().flatten().collect(), Vec::new(), started))
}
