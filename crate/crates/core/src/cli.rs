//! The `blockcast` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::baselines::{
    count_points, predict_all, BaselineConfig, BaselineParams, DbscanParams, Prediction, Problem,
};
use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, ProblemResult};
use crate::io;
use crate::prep::{build_dictionary, preprocess_trajectory, ScrConfig, ScrCounts};
use crate::simulator::{simulate, ScenarioConfig};
use crate::windowing::{
    balance, materialize, plan_windows, DatasetManifest, LidarInput, ObservationWindow,
    WindowConfig,
};

/// Everything a run needs, as read from `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Overrides `scenario.seed` when set; `--seed` overrides both.
    pub seed: Option<u64>,
    /// Default output directory for commands run without `--out`.
    pub out: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub scr: ScrConfig,
    pub window: WindowConfig,
    pub dbscan: DbscanParams,
    pub baseline: BaselineConfig,
    /// Horizons evaluated by `pipeline`.
    pub horizons: Vec<usize>,
    /// Feed SCR output (true) or raw scans (false) to the windows.
    pub use_scr: bool,
    /// Subsample the majority occurrence class of each window set.
    pub balance: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out: None,
            scenario: ScenarioConfig::default(),
            scr: ScrConfig::default(),
            window: WindowConfig::default(),
            dbscan: DbscanParams::default(),
            baseline: BaselineConfig::default(),
            horizons: (1..=10).collect(),
            use_scr: true,
            balance: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: RunConfig = match path {
            Some(p) => io::read_json(p)?,
            None => RunConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.scr.validate()?;
        self.window.validate()?;
        self.dbscan.validate()?;
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::config("horizons", "must be a non-empty list of values >= 1"));
        }
        Ok(())
    }

    /// Seed after applying the config-level and command-line overrides.
    pub fn seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.seed).unwrap_or(self.scenario.seed)
    }
}

#[derive(Debug, Parser)]
#[command(name = "blockcast", version, about = "Simulate, denoise and predict mmWave link blockages")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Build the static dictionary from the object-free instances of a trajectory.
    BuildDict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        traj: PathBuf,
    },
    /// Run SCR over a trajectory.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        dict: PathBuf,
    },
    /// Cut a trajectory into labelled observation windows.
    Windows {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        traj: PathBuf,
        /// Directory written by `preprocess`; required with `--scr on`.
        #[arg(long)]
        prep: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=10))]
        horizon: Option<u64>,
        #[arg(long, value_enum)]
        scr: Option<Switch>,
        #[arg(long)]
        balance: bool,
    },
    /// Fit baseline parameters; merges into an existing params file in `--out`.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        windows: PathBuf,
        /// 1 occurrence, 2 time, 3 severity, 4 direction; all when omitted.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        problem: Option<u8>,
    },
    /// Predict with fitted baselines.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        windows: PathBuf,
        /// Params file, or a directory holding `baseline_params.json`.
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        problem: Option<u8>,
    },
    /// Score predictions against window labels.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Predictions file; pairs with the `--windows` at the same position.
        #[arg(long, required = true)]
        preds: Vec<PathBuf>,
        #[arg(long, required = true)]
        windows: Vec<PathBuf>,
    },
    /// Simulate train and test trajectories and run every step for each horizon.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common }
            | Command::BuildDict { common, .. }
            | Command::Preprocess { common, .. }
            | Command::Windows { common, .. }
            | Command::Fit { common, .. }
            | Command::Predict { common, .. }
            | Command::Eval { common, .. }
            | Command::Pipeline { common } => common,
        }
    }
}

fn out_dir(common: &Common, cfg: &RunConfig) -> Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::config("out", "no output directory given (--out or config.out)"))
}

fn problems(code: Option<u8>) -> Vec<Problem> {
    match code {
        Some(c) => vec![Problem::try_from(c).expect("validated by clap")],
        None => Problem::ALL.to_vec(),
    }
}

/// Summary of a preprocessing run, stored next to `prep_scans.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepInfo {
    pub scr: ScrConfig,
    pub instances: usize,
    pub points_before: usize,
    pub points_after: usize,
    pub scr_rate: f64,
}

pub const PREP_INFO_JSON: &str = "prep.json";

pub fn cmd_simulate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let scenario = ScenarioConfig {
        seed,
        ..cfg.scenario.clone()
    };
    let traj = simulate(&scenario)?;
    log::info!(
        "simulated {} instances, {} objects, {} blocked",
        traj.len(),
        traj.objects.len(),
        traj.link_status.iter().filter(|&&x| x == 1).count()
    );
    io::write_trajectory(out, &traj)
}

pub fn cmd_build_dict(cfg: &RunConfig, traj_dir: &Path, out: &Path) -> Result<()> {
    let traj = io::read_trajectory(traj_dir)?;
    let frames: Vec<_> = traj
        .object_free_instances()
        .into_iter()
        .map(|t| traj.scans[t].clone())
        .collect();
    if frames.is_empty() {
        return Err(Error::invalid(format!(
            "trajectory {} has no object-free instance",
            traj_dir.display()
        )));
    }
    let dict = build_dictionary(&frames, &cfg.scr)?;
    log::info!("dictionary: {} pairs from {} frames", dict.len(), dict.source_frame_count);
    io::write_dictionary(out, &dict, &cfg.scr)
}

pub fn cmd_preprocess(traj_dir: &Path, dict_dir: &Path, out: &Path) -> Result<()> {
    let traj = io::read_trajectory(traj_dir)?;
    let (dict, scr) = io::read_dictionary(dict_dir)?;
    let scans = preprocess_trajectory(&traj.scans, &dict, &scr)?;
    let counts = ScrCounts::tally(&traj.scans, &scans, &scr);
    io::create_dir(out)?;
    io::write_prep_scans(&out.join(io::PREP_SCANS_CSV), &scans)?;
    let info = PrepInfo {
        scr,
        instances: traj.len(),
        points_before: counts.before,
        points_after: counts.after,
        scr_rate: counts.rate().unwrap_or(0.0),
    };
    log::info!("SCR kept {} of {} points", counts.after, counts.before);
    io::write_json(&out.join(PREP_INFO_JSON), &info)
}

pub struct WindowRequest<'a> {
    pub traj: &'a Path,
    pub prep: Option<&'a Path>,
    pub window: WindowConfig,
    pub use_scr: bool,
    pub balance: bool,
    pub seed: u64,
}

pub fn cmd_windows(req: &WindowRequest<'_>, out: &Path) -> Result<()> {
    let traj = io::read_trajectory(req.traj)?;
    let id = req
        .traj
        .file_name()
        .map_or_else(|| "trajectory".to_string(), |n| n.to_string_lossy().into_owned());
    let mut plans = plan_windows(&traj, &req.window)?;
    if req.balance {
        plans = balance(plans, req.seed, |p| p.labels.occurrence == 1);
    }
    let (windows, input) = if req.use_scr {
        let prep = req
            .prep
            .ok_or_else(|| Error::config("prep", "--prep is required with --scr on"))?;
        let info: PrepInfo = io::read_json(&prep.join(PREP_INFO_JSON))?;
        if info.instances != traj.len() {
            return Err(Error::invalid(format!(
                "{} was preprocessed from {} instances, trajectory has {}",
                prep.display(),
                info.instances,
                traj.len()
            )));
        }
        let scans = io::read_prep_scans(&prep.join(io::PREP_SCANS_CSV), traj.len(), &info.scr)?;
        let w = materialize(&traj, LidarInput::Scr(&scans, &info.scr), req.window.obs_len, &plans, &id)?;
        (w, "scr")
    } else {
        let w = materialize(&traj, LidarInput::Raw, req.window.obs_len, &plans, &id)?;
        (w, "raw")
    };
    let manifest = DatasetManifest::summarize(&windows, &req.window, input);
    log::info!(
        "{} windows ({} positive) at horizon {}",
        manifest.total,
        manifest.positives,
        req.window.horizon
    );
    io::write_windows(out, &windows, &manifest)
}

fn params_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(io::PARAMS_JSON)
    } else {
        p.to_path_buf()
    }
}

pub fn cmd_fit(cfg: &RunConfig, windows_dir: &Path, problems: &[Problem], out: &Path) -> Result<()> {
    let (windows, manifest) = io::read_windows(windows_dir)?;
    let path = out.join(io::PARAMS_JSON);
    let mut params = if path.exists() {
        io::read_params(&path)?
    } else {
        BaselineParams::new(cfg.dbscan, cfg.baseline.clone())
    };
    params.dbscan = cfg.dbscan;
    params.options = cfg.baseline.clone();
    for &p in problems {
        params.fit(p, manifest.window.horizon, &windows)?;
    }
    io::create_dir(out)?;
    io::write_params(&path, &params)
}

pub fn cmd_predict(windows_dir: &Path, params: &Path, problems: &[Problem], out: &Path) -> Result<()> {
    let (windows, manifest) = io::read_windows(windows_dir)?;
    let params = io::read_params(&params_path(params))?;
    let mut preds = Vec::new();
    for &p in problems {
        preds.extend(predict_all(&params, p, manifest.window.horizon, &windows)?);
    }
    io::create_dir(out)?;
    io::write_preds(&out.join(io::PREDS_CSV), &preds)
}

/// Aligns predictions with window targets and scores every problem present.
pub fn score_predictions(
    preds: &[Prediction],
    windows: &[ObservationWindow],
    horizon: usize,
) -> Result<Vec<ProblemResult>> {
    let by_id: BTreeMap<usize, &ObservationWindow> = windows.iter().map(|w| (w.id, w)).collect();
    let mut grouped: BTreeMap<Problem, BTreeMap<usize, f64>> = BTreeMap::new();
    for p in preds {
        let w = by_id
            .get(&p.window_id)
            .ok_or_else(|| Error::invalid(format!("prediction for unknown window {}", p.window_id)))?;
        if p.problem.target(w).is_none() {
            return Err(Error::invalid(format!(
                "window {} has no target for problem {}",
                p.window_id, p.problem
            )));
        }
        if grouped.entry(p.problem).or_default().insert(p.window_id, p.prediction).is_some() {
            return Err(Error::invalid(format!(
                "duplicate prediction for window {} problem {}",
                p.window_id, p.problem
            )));
        }
    }
    let mut results = Vec::new();
    for (problem, rows) in grouped {
        let posed: Vec<&ObservationWindow> =
            windows.iter().filter(|w| problem.target(w).is_some()).collect();
        if posed.len() != rows.len() {
            return Err(Error::invalid(format!(
                "problem {problem}: {} predictions for {} windows",
                rows.len(),
                posed.len()
            )));
        }
        let targets: Vec<f64> = posed.iter().filter_map(|w| problem.target(w)).collect();
        let values: Vec<f64> = posed.iter().map(|w| rows[&w.id]).collect();
        results.push(ProblemResult::score(problem, horizon, &values, &targets)?);
    }
    Ok(results)
}

pub fn cmd_eval(preds: &[PathBuf], windows: &[PathBuf], out: &Path) -> Result<()> {
    if preds.len() != windows.len() {
        return Err(Error::config(
            "eval",
            format!("{} --preds for {} --windows", preds.len(), windows.len()),
        ));
    }
    let mut results = Vec::new();
    let mut datasets = BTreeMap::new();
    for (p, w) in preds.iter().zip(windows) {
        let (ws, manifest) = io::read_windows(w)?;
        let rows = io::read_preds(p)?;
        let horizon = manifest.window.horizon;
        results.extend(score_predictions(&rows, &ws, horizon)?);
        let echo = serde_json::to_value(&manifest)
            .map_err(|e| Error::Internal(format!("manifest echo: {e}")))?;
        datasets.insert(format!("horizon_{horizon:02}"), echo);
    }
    let report = EvalReport::new(results, datasets)?;
    io::create_dir(out)?;
    io::write_text(&out.join("report.json"), &report.to_json()?)?;
    io::write_text(&out.join("report.txt"), &report.to_text())?;
    io::write_text(&out.join("curves.csv"), &report.to_curves_csv())
}

/// Train on trajectory `seed`, test on `seed + 1`, for every configured horizon.
pub fn cmd_pipeline(cfg: &RunConfig, seed: u64, out: &Path) -> Result<()> {
    let splits = [("train", seed), ("test", seed.wrapping_add(1))];
    for (name, s) in splits {
        cmd_simulate(cfg, s, &out.join(name).join("traj"))?;
    }
    // The street is shared, so the training dictionary serves both splits.
    let dict = out.join("train").join("dict");
    cmd_build_dict(cfg, &out.join("train").join("traj"), &dict)?;
    for (name, _) in splits {
        let base = out.join(name);
        cmd_preprocess(&base.join("traj"), &dict, &base.join("prep"))?;
    }

    let params_dir = out.join("params");
    let mut preds_paths = Vec::new();
    let mut windows_paths = Vec::new();
    for &h in &cfg.horizons {
        let hdir = out.join(format!("h{h:02}"));
        for (name, s) in splits {
            let base = out.join(name);
            let req = WindowRequest {
                traj: &base.join("traj"),
                prep: Some(&base.join("prep")),
                window: WindowConfig {
                    horizon: h,
                    ..cfg.window.clone()
                },
                use_scr: cfg.use_scr,
                balance: cfg.balance,
                seed: s,
            };
            cmd_windows(&req, &hdir.join(format!("{name}_windows")))?;
        }
        let train = hdir.join("train_windows");
        let test = hdir.join("test_windows");
        let (train_windows, _) = io::read_windows(&train)?;
        let fit_problems = fittable_problems(cfg, &params_dir, h, &train_windows)?;
        if !fit_problems.is_empty() {
            cmd_fit(cfg, &train, &fit_problems, &params_dir)?;
        }
        cmd_predict(&test, &params_dir, &fit_problems_or_occurrence(&fit_problems), &hdir)?;
        preds_paths.push(hdir.join(io::PREDS_CSV));
        windows_paths.push(test);
    }
    cmd_eval(&preds_paths, &windows_paths, &out.join("report"))
}

fn fit_problems_or_occurrence(p: &[Problem]) -> Vec<Problem> {
    if p.contains(&Problem::Occurrence) {
        p.to_vec()
    } else {
        let mut v = vec![Problem::Occurrence];
        v.extend_from_slice(p);
        v
    }
}

/// Problems that can be fitted on `train`. A training set without positive
/// windows gets an all-negative occurrence threshold and no other problem.
fn fittable_problems(
    cfg: &RunConfig,
    params_dir: &Path,
    horizon: usize,
    train: &[ObservationWindow],
) -> Result<Vec<Problem>> {
    if train.iter().any(|w| w.labels.occurrence == 1) {
        if train.iter().all(|w| w.labels.occurrence == 1) {
            return Err(Error::invalid(format!(
                "horizon {horizon}: every training window is positive"
            )));
        }
        return Ok(Problem::ALL.to_vec());
    }
    log::warn!("horizon {horizon}: no positive training windows; predicting all-negative");
    let path = params_dir.join(io::PARAMS_JSON);
    let mut params = if path.exists() {
        io::read_params(&path)?
    } else {
        BaselineParams::new(cfg.dbscan, cfg.baseline.clone())
    };
    let max = train.iter().map(count_points).max().unwrap_or(0).max(1);
    params.occurrence.insert(horizon, max);
    io::create_dir(params_dir)?;
    io::write_params(&path, &params)?;
    Ok(vec![])
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.command.common();
    let cfg = RunConfig::load(common.config.as_deref())?;
    let seed = cfg.seed(common.seed);
    match &cli.command {
        Command::Simulate { common } => cmd_simulate(&cfg, seed, &out_dir(common, &cfg)?),
        Command::BuildDict { common, traj } => cmd_build_dict(&cfg, traj, &out_dir(common, &cfg)?),
        Command::Preprocess { common, traj, dict } => {
            cmd_preprocess(traj, dict, &out_dir(common, &cfg)?)
        }
        Command::Windows {
            common,
            traj,
            prep,
            horizon,
            scr,
            balance,
        } => {
            let mut window = cfg.window.clone();
            if let Some(h) = horizon {
                window.horizon = *h as usize;
            }
            let req = WindowRequest {
                traj,
                prep: prep.as_deref(),
                window,
                use_scr: scr.map_or(cfg.use_scr, |s| s == Switch::On),
                balance: *balance || cfg.balance,
                seed,
            };
            cmd_windows(&req, &out_dir(common, &cfg)?)
        }
        Command::Fit {
            common,
            windows,
            problem,
        } => cmd_fit(&cfg, windows, &problems(*problem), &out_dir(common, &cfg)?),
        Command::Predict {
            common,
            windows,
            params,
            problem,
        } => cmd_predict(windows, params, &problems(*problem), &out_dir(common, &cfg)?),
        Command::Eval {
            common,
            preds,
            windows,
        } => cmd_eval(preds, windows, &out_dir(common, &cfg)?),
        Command::Pipeline { common } => cmd_pipeline(&cfg, seed, &out_dir(common, &cfg)?),
    }
}

/// One-line, machine-parseable error report.
pub fn error_line(kind: &str, msg: &str) -> String {
    let flat = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
    format!("error: kind={kind} msg={:?}", flat)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        let err = serde_json::from_str::<RunConfig>(r#"{"seeds": 3}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let err = serde_json::from_str::<RunConfig>(r#"{"scenario": {"lanes": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn seed_precedence() {
        let mut cfg = RunConfig::default();
        cfg.scenario.seed = 1;
        assert_eq!(cfg.seed(None), 1);
        cfg.seed = Some(2);
        assert_eq!(cfg.seed(None), 2);
        assert_eq!(cfg.seed(Some(3)), 3);
    }

    #[test]
    fn error_lines_are_single_line() {
        let line = error_line("parse", "bad\n  value \"x\"");
        assert_eq!(line, r#"error: kind=parse msg="bad value \"x\"""#);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["blockcast", "frobnicate"]), 2);
        assert_eq!(main_with_args(["blockcast", "fit", "--windows", "w", "--problem", "7"]), 2);
        assert_eq!(main_with_args(["blockcast", "--help"]), 0);
    }

    #[test]
    fn scoring_requires_complete_predictions() {
        use crate::windowing::{Labels, WindowSource};
        let w = |id, occ: u8| ObservationWindow {
            id,
            source: WindowSource { trajectory: "t".into(), start: id },
            labels: if occ == 1 {
                Labels { occurrence: 1, instance: Some(2), severity: Some(2), direction: Some(0) }
            } else {
                Labels::negative()
            },
            lidar: vec![],
            power: vec![],
        };
        let windows = vec![w(0, 0), w(1, 1)];
        let p = |id, problem, prediction| Prediction { window_id: id, problem, prediction };
        let ok = score_predictions(
            &[p(0, Problem::Occurrence, 0.0), p(1, Problem::Occurrence, 0.0), p(1, Problem::Time, 2.5)],
            &windows,
            3,
        )
        .unwrap();
        assert_eq!(ok[0].top1, Some(0.5));
        assert_eq!(ok[1].mae, Some(0.5));
        assert!(score_predictions(&[p(0, Problem::Occurrence, 0.0)], &windows, 3).is_err());
        assert!(score_predictions(&[p(0, Problem::Time, 1.0)], &windows, 3).is_err());
        assert!(score_predictions(&[p(9, Problem::Occurrence, 1.0)], &windows, 3).is_err());
    }
}
