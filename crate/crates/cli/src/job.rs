//! Running a configured job and writing its artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use jcfb::linear::{find_poles, linear_spectrum, transfer_denominator};
use jcfb::model::system_hamiltonian;
use jcfb::observables::{g1_output, g2_output, power_spectrum, trace_fourier};
use jcfb::oracle::{closed_evolve, lindblad_evolve};
use jcfb::{
    run, DensityMatrix, LinearParams, ModelParams, PoleWindow, Recorder, RunOutput, RunPlan,
    TimeSeries,
};

use crate::config::{JobConfig, Mode};
use crate::error::CliError;
use crate::output::{write_atomic, Table};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointInfo {
    pub label: String,
    pub file: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_value: Option<f64>,
    pub max_bond: usize,
    pub discarded_weight: f64,
    pub steps_completed: usize,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub params: ModelParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Complete,
    Partial,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub version: String,
    pub mode: Mode,
    pub status: Status,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub points: Vec<PointInfo>,
}

/// `manifest.toml`: what ran, how it went, and the full configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_info: RunInfo,
    pub job: JobConfig,
}

pub struct JobReport {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
    /// First failure, if any point did not complete.
    pub failure: Option<CliError>,
}

struct PointResult {
    table: Option<Table>,
    max_bond: usize,
    discarded_weight: f64,
    steps_completed: usize,
    notes: Vec<String>,
    error: Option<CliError>,
}

impl PointResult {
    fn failed(error: CliError) -> Self {
        Self {
            table: None,
            max_bond: 0,
            discarded_weight: 0.0,
            steps_completed: 0,
            notes: Vec::new(),
            error: Some(error),
        }
    }
}

fn recorder_unit(r: Recorder) -> &'static str {
    match r {
        Recorder::OutputFlux => "g",
        _ => "1",
    }
}

fn system_recorder(r: Recorder) -> bool {
    matches!(
        r,
        Recorder::TlsPopulation | Recorder::Inversion | Recorder::CavityPhotons | Recorder::InstantaneousG2
    )
}

fn steps_for(cfg: &JobConfig, p: &ModelParams) -> usize {
    ((cfg.run.t_end / p.g / p.dt).round() as usize).max(1)
}

fn lags_for(cfg: &JobConfig, p: &ModelParams) -> usize {
    ((cfg.correlations.max_lag / p.g / p.dt).round() as usize).max(1)
}

fn plan_for(cfg: &JobConfig, p: &ModelParams, mode: Mode) -> Result<RunPlan, CliError> {
    let init = cfg.run.initial.vector(p.n_fock)?;
    let mut plan = RunPlan::new(p.clone(), steps_for(cfg, p), init).with_recorders(&cfg.run.recorders);
    plan.stride = cfg.run.stride;
    plan.step_mode = cfg.run.step_mode;
    plan.failure_threshold = cfg.run.failure_threshold;
    let needed = if matches!(mode, Mode::Correlations | Mode::Spectrum) {
        let lags = lags_for(cfg, p);
        // bins still inside the loop at the end are not output yet
        let in_loop = if p.has_feedback() { p.delay_steps()? } else { 0 };
        if lags + in_loop >= plan.n_steps {
            return Err(CliError::Config(format!(
                "correlations.max_lag = {} plus the delay needs more than run.t_end = {}",
                cfg.correlations.max_lag, cfg.run.t_end
            )));
        }
        lags + 1
    } else {
        0
    };
    plan.retain_outputs = match cfg.run.retain_outputs {
        0 => None,
        n => Some(n.max(needed)),
    };
    Ok(plan)
}

/// Merges recorded series on a common step axis, `NaN` where a series has no
/// sample.
fn series_table(series: &BTreeMap<String, TimeSeries>, recorders: &[Recorder], p: &ModelParams) -> Table {
    let key = |t: f64| (t / p.dt).round() as i64;
    let mut steps: Vec<i64> = series.values().flat_map(|s| s.t.iter().map(|&t| key(t))).collect();
    steps.sort_unstable();
    steps.dedup();
    let pos: BTreeMap<i64, usize> = steps.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let mut table = Table::new("t", "1/g", steps.iter().map(|&k| k as f64 * p.dt * p.g).collect());
    for &r in recorders {
        let Some(s) = series.get(r.name()) else { continue };
        let scale = if r == Recorder::OutputFlux { 1.0 / p.g } else { 1.0 };
        let mut col = vec![f64::NAN; steps.len()];
        for (t, v) in s.t.iter().zip(s.real_values()) {
            col[pos[&key(*t)]] = v * scale;
        }
        table.push(r.name(), recorder_unit(r), col);
    }
    table
}

fn engine_point(cfg: &JobConfig, p: &ModelParams, mode: Mode) -> PointResult {
    let plan = match plan_for(cfg, p, mode) {
        Ok(plan) => plan,
        Err(e) => return PointResult::failed(e),
    };
    let mut recorders = plan.recorders.clone();
    recorders.sort();
    recorders.dedup();
    let (out, error) = match run(&plan) {
        Ok(o) => (o, None),
        Err(abort) => match abort.partial {
            Some(o) => (o, Some(CliError::from(abort.error))),
            None => return PointResult::failed(abort.error.into()),
        },
    };
    let mut res = PointResult {
        table: None,
        max_bond: out.max_bond,
        discarded_weight: out.discarded_weight,
        steps_completed: out.steps_completed,
        notes: Vec::new(),
        error,
    };
    if res.error.is_some() {
        // only the traces are meaningful for an aborted run
        res.table = Some(series_table(&out.series, &recorders, p));
        return res;
    }
    match derived_table(cfg, p, mode, &out, &recorders, &mut res.notes) {
        Ok(t) => res.table = Some(t),
        Err(e) => res.error = Some(e),
    }
    res
}

fn derived_table(
    cfg: &JobConfig,
    p: &ModelParams,
    mode: Mode,
    out: &RunOutput,
    recorders: &[Recorder],
    notes: &mut Vec<String>,
) -> Result<Table, CliError> {
    let base = || {
        out.newest_released_bin()
            .ok_or_else(|| CliError::Config("no released bins to correlate; increase run.t_end".into()))
    };
    let floor = cfg.correlations.floor;
    Ok(match mode {
        Mode::Simulate => series_table(&out.series, recorders, p),
        Mode::Correlations => {
            let lags = lags_for(cfg, p);
            let base = base()?;
            let g1 = g1_output(&out.state, base, lags, p.dt, floor)?;
            let g2 = g2_output(&out.state, base, lags, p.dt, floor)?;
            notes.push(format!("base bin {base}, occupation {:e}", g1.normalization));
            let mut t = Table::new("tau", "1/g", g1.tau.iter().map(|x| x * p.g).collect());
            t.push("g1_re", "1", g1.values.iter().map(|z| z.re).collect());
            t.push("g1_im", "1", g1.values.iter().map(|z| z.im).collect());
            t.push("g2", "1", g2.real());
            t
        }
        Mode::Spectrum => {
            let g1 = g1_output(&out.state, base()?, lags_for(cfg, p), p.dt, floor)?;
            let s = power_spectrum(&g1, &cfg.spectrum.grid, p.g, cfg.spectrum.normalize)?;
            let unit = if s.normalized { "1" } else { "1/g" };
            let scale = if s.normalized { 1.0 } else { p.g };
            let mut t = Table::new("omega", "g", s.omega);
            t.push("spectrum", unit, s.values.iter().map(|v| v * scale).collect());
            t
        }
        Mode::TraceFft => {
            let mut table: Option<Table> = None;
            for &r in recorders.iter().filter(|r| system_recorder(**r)) {
                let s = &out.series[r.name()];
                let pad = (cfg.spectrum.pad_to > 0).then_some(cfg.spectrum.pad_to);
                let f = match trace_fourier(s, cfg.spectrum.window, p.g, pad) {
                    Ok(f) => f,
                    Err(e) => {
                        notes.push(format!("{}: {e}", r.name()));
                        continue;
                    }
                };
                let t = table.get_or_insert_with(|| Table::new("omega", "g", f.omega.clone()));
                t.push(&format!("fft_{}", r.name()), "1/g", f.values.iter().map(|v| v * p.g).collect());
            }
            table.ok_or_else(|| CliError::Config("trace-fft needs a finite system recorder".into()))?
        }
        _ => unreachable!("not an engine mode"),
    })
}

fn oracle_point(cfg: &JobConfig, p: &ModelParams) -> Result<PointResult, CliError> {
    let init = cfg.run.initial.vector(p.n_fock)?;
    let steps = steps_for(cfg, p);
    let times: Vec<f64> = (0..=steps).step_by(cfg.run.stride).map(|k| k as f64 * p.dt).collect();
    let mut notes = Vec::new();
    let kappa = p.kappa1 + p.kappa2;
    let out = if kappa == 0.0 {
        notes.push("closed-system evolution".into());
        closed_evolve(&system_hamiltonian(p)?, &init, &times)?
    } else {
        if p.has_feedback() {
            notes.push(format!("master equation without feedback, kappa = {kappa}"));
        }
        lindblad_evolve(p, &DensityMatrix::pure(&init)?, &times)?
    };
    notes.extend(out.warning.clone());
    let mut table = Table::new("t", "1/g", times.iter().map(|t| t * p.g).collect());
    let mut recorders = cfg.run.recorders.clone();
    recorders.sort();
    recorders.dedup();
    for r in recorders {
        if r == Recorder::OutputFlux {
            let n = out.values("cavity_photons").unwrap();
            table.push(r.name(), "g", n.iter().map(|n| 2.0 * kappa * n / p.g).collect());
        } else if let Some(v) = out.values(r.name()) {
            table.push(r.name(), recorder_unit(r), v);
        }
    }
    Ok(PointResult {
        table: Some(table),
        max_bond: 1,
        discarded_weight: 0.0,
        steps_completed: steps,
        notes,
        error: None,
    })
}

fn linear_point(cfg: &JobConfig, p: &ModelParams, mode: Mode) -> Result<PointResult, CliError> {
    let lp = LinearParams::from(p);
    let mut notes = Vec::new();
    let table = if mode == Mode::LinearSpectrum {
        let ls = linear_spectrum(&cfg.spectrum.grid, &lp, cfg.spectrum.form, cfg.spectrum.normalize)?;
        if !ls.excluded.is_empty() {
            notes.push(format!("singular frequencies excluded: {:?}", ls.excluded));
        }
        let unit = if ls.spectrum.normalized { "1" } else { "arb" };
        let mut t = Table::new("omega", "g", ls.spectrum.omega);
        t.push("spectrum", unit, ls.spectrum.values);
        t
    } else {
        let w = cfg.poles.window;
        let window = PoleWindow {
            re_min: w.re_min * p.g.abs(),
            re_max: w.re_max * p.g.abs(),
            im_min: w.im_min * p.g.abs(),
            im_max: w.im_max * p.g.abs(),
        };
        let g = if p.g == 0.0 { 1.0 } else { p.g.abs() };
        let set = find_poles(&lp, &window, cfg.poles.density)?;
        notes.push(format!("winding number {}, grid density {}", set.winding, set.density));
        for (a, b) in &set.flagged_cells {
            notes.push(format!("no convergence in cell {a} .. {b}"));
        }
        let abs_d: Vec<f64> = set
            .poles
            .iter()
            .map(|s| transfer_denominator(*s, &lp).map(|d| d.norm() / g))
            .collect::<Result<_, _>>()?;
        let mut t = Table::new("re_s", "g", set.poles.iter().map(|s| s.re / g).collect());
        t.push("im_s", "g", set.poles.iter().map(|s| s.im / g).collect());
        t.push("abs_d", "g", abs_d);
        t
    };
    Ok(PointResult {
        table: Some(table),
        max_bond: 0,
        discarded_weight: 0.0,
        steps_completed: 0,
        notes,
        error: None,
    })
}

fn compute_point(cfg: &JobConfig, p: &ModelParams) -> PointResult {
    let mode = cfg.point_mode();
    let attempt = match mode {
        m if m.uses_engine() => Ok(engine_point(cfg, p, m)),
        Mode::Oracle => oracle_point(cfg, p),
        m => linear_point(cfg, p, m),
    };
    attempt.unwrap_or_else(PointResult::failed)
}

struct Point {
    label: String,
    stem: String,
    sweep_value: Option<f64>,
    params: ModelParams,
}

fn points(cfg: &JobConfig) -> Result<Vec<Point>, CliError> {
    let mode = cfg.point_mode();
    if !cfg.sweep.is_active() {
        return Ok(vec![Point {
            label: mode.name().into(),
            stem: mode.name().into(),
            sweep_value: None,
            params: cfg.params.clone(),
        }]);
    }
    let mut pts: Vec<Point> = cfg
        .sweep_points()?
        .into_iter()
        .zip(&cfg.sweep.values)
        .enumerate()
        .map(|(i, (params, &v))| Point {
            label: format!("{} = {v}", cfg.sweep.parameter),
            stem: format!("{}_{i:03}", mode.name()),
            sweep_value: Some(v),
            params,
        })
        .collect();
    if cfg.sweep.baseline {
        pts.push(Point {
            label: "no feedback".into(),
            stem: format!("{}_baseline", mode.name()),
            sweep_value: None,
            params: cfg.params.without_feedback(),
        });
    }
    Ok(pts)
}

/// Runs every point of the job on `jobs` workers (0 picks the machine
/// default) and writes CSVs, `resolved_config.toml` and `manifest.toml`.
pub fn run_job(cfg: &JobConfig, out_dir: &Path, jobs: usize) -> Result<JobReport, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    write_atomic(&out_dir.join("resolved_config.toml"), &cfg.to_toml())?;
    let pts = points(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Numerical(format!("worker pool: {e}")))?;
    let results: Vec<PointResult> = pool.install(|| pts.par_iter().map(|pt| compute_point(cfg, &pt.params)).collect());

    let mut infos = Vec::new();
    let mut files = Vec::new();
    let mut failure = None;
    let mut index = Table::new("index", "1", Vec::new());
    let mut index_values = Vec::new();
    let mut index_status = Vec::new();
    for (i, (pt, res)) in pts.iter().zip(results).enumerate() {
        let status = match (&res.error, &res.table) {
            (None, Some(_)) => Status::Complete,
            (Some(_), Some(_)) => Status::Partial,
            _ => Status::Failed,
        };
        let file = match status {
            Status::Complete => format!("{}.csv", pt.stem),
            Status::Partial => format!("{}.partial.csv", pt.stem),
            Status::Failed => String::new(),
        };
        if let Some(t) = &res.table {
            let t = if status == Status::Complete { t.select(&cfg.emit.columns)? } else { t.clone() };
            write_atomic(&out_dir.join(&file), &t.to_csv())?;
            files.push(file.clone());
        }
        index.columns[0].push(i as f64);
        index_values.push(pt.sweep_value.unwrap_or(f64::NAN));
        index_status.push(match status {
            Status::Complete => 0.0,
            Status::Partial => 1.0,
            Status::Failed => 2.0,
        });
        infos.push(PointInfo {
            label: pt.label.clone(),
            file,
            status,
            sweep_value: pt.sweep_value,
            max_bond: res.max_bond,
            discarded_weight: res.discarded_weight,
            steps_completed: res.steps_completed,
            notes: res.notes,
            error: res.error.as_ref().map(|e| e.to_string()),
            params: pt.params.clone(),
        });
        if failure.is_none() {
            failure = res.error;
        }
    }
    if cfg.sweep.is_active() {
        index.push(&cfg.sweep.parameter, "param", index_values);
        index.push("status", "0 complete; 1 partial; 2 failed", index_status);
        write_atomic(&out_dir.join("index.csv"), &index.to_csv())?;
        files.push("index.csv".into());
    }
    let status = if infos.iter().all(|i| i.status == Status::Complete) {
        Status::Complete
    } else if infos.iter().any(|i| i.status != Status::Failed) {
        Status::Partial
    } else {
        Status::Failed
    };
    let manifest = Manifest {
        run_info: RunInfo {
            version: env!("CARGO_PKG_VERSION").into(),
            mode: cfg.mode,
            status,
            wall_time_s: start.elapsed().as_secs_f64(),
            files,
            points: infos,
        },
        job: cfg.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Numerical(format!("manifest: {e}")))?;
    write_atomic(&out_dir.join("manifest.toml"), &text)?;
    Ok(JobReport {
        manifest,
        out_dir: out_dir.to_path_buf(),
        failure,
    })
}
