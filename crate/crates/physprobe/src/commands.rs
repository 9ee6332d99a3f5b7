//! Subcommand drivers. Each writes its artifacts into `config.out`.

use std::path::{Path, PathBuf};

use physprobe_core::envproto::{Environment, EpisodeRecord, Policy, RandomizedInteractions};
use physprobe_core::evalkit::{self, EvalSummary, GapBin, OlsFit, RandomizedComparison, SweepRow};
use physprobe_core::nnet::{AgentParams, LstmPolicy};
use physprobe_core::oracle::{self, ScanPolicy, SuccessiveElimination};
use physprobe_core::rng::{self, stream};
use physprobe_core::trainer::{self, CurvePoint, TrainError, TrainOutcome};
use serde::{Deserialize, Serialize};

use crate::config::{EnvSpec, RunConfig};
use crate::output::{write_atomic, write_csv, write_ndjson};
use crate::{checkpoint, Error, VERSION};

pub const CHECKPOINT_FILE: &str = "agent.ckpt";
pub const CURVE_FILE: &str = "learning_curve.csv";
pub const RECORDS_FILE: &str = "records.ndjson";
pub const RANDOMIZED_RECORDS_FILE: &str = "records_randomized.ndjson";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRACE_FILE: &str = "trajectories.ndjson";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub seed: u64,
    pub version: String,
}

/// Creates `cfg.out` and records the resolved config, seed and version in it.
pub fn prepare_out_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf, Error> {
    let dir = cfg.out.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    write_atomic(&dir.join("config.json"), cfg.to_json().as_bytes())?;
    let info = RunInfo { command: command.to_string(), seed: cfg.seed, version: VERSION.to_string() };
    write_atomic(&dir.join("run.json"), serde_json::to_string_pretty(&info).expect("info serializes").as_bytes())?;
    write_atomic(&dir.join("seed"), format!("{}\n", cfg.seed).as_bytes())?;
    Ok(dir)
}

fn env_factory(spec: EnvSpec) -> Result<impl FnMut() -> Box<dyn Environment + Send>, Error> {
    spec.build()?;
    Ok(move || spec.build().expect("environment config was validated"))
}

/// Trains an agent; writes the checkpoint and learning curve. On divergence
/// the last finite parameters are still written before the error is returned.
pub fn train(cfg: &RunConfig, threads: usize) -> Result<TrainOutcome, Error> {
    let dir = prepare_out_dir(cfg, "train")?;
    let factory = env_factory(cfg.env)?;
    let parallel = threads > 1;
    let run = || trainer::train_with(factory, &cfg.train, parallel, |_, _| {});
    let result = if parallel {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("threads: {e}")))?;
        pool.install(run)
    } else {
        run()
    };
    match result {
        Ok(out) => {
            checkpoint::save(&dir.join(CHECKPOINT_FILE), &out.params)?;
            write_csv(&dir.join(CURVE_FILE), &out.curve)?;
            Ok(out)
        }
        Err(TrainError::Diverged { episode, last_good }) => {
            checkpoint::save(&dir.join(CHECKPOINT_FILE), &last_good)?;
            Err(Error::Train(TrainError::Diverged { episode, last_good }))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Loads a checkpoint and checks it fits the configured environment.
pub fn load_agent(cfg: &RunConfig, path: &Path) -> Result<AgentParams, Error> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!("{}: no such file", path.display())));
    }
    let params = checkpoint::load(path)?;
    let env = cfg.env.build()?;
    let s = params.shape();
    if s.obs_dim != env.observation_dim() || s.n_actions != env.action_space().size() {
        return Err(Error::ShapeMismatch(format!(
            "checkpoint has obs_dim {} and {} actions, {} needs {} and {}",
            s.obs_dim,
            s.n_actions,
            env.name(),
            env.observation_dim(),
            env.action_space().size()
        )));
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub condition: String,
    pub policy: String,
    pub n_episodes: usize,
    pub n_labeled: usize,
    pub n_correct: usize,
    pub p_correct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub median_length: f64,
    pub mean_length: f64,
    pub median_sim_seconds: f64,
    pub timeouts: usize,
    pub frac_touch_all: f64,
}

impl SummaryRow {
    pub fn new(policy: &str, s: &EvalSummary) -> Self {
        Self {
            condition: s.condition.clone(),
            policy: policy.to_string(),
            n_episodes: s.n_episodes,
            n_labeled: s.n_labeled,
            n_correct: s.n_correct,
            p_correct: s.p_correct,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            median_length: s.median_length,
            mean_length: s.mean_length,
            median_sim_seconds: s.median_sim_seconds,
            timeouts: s.timeouts,
            frac_touch_all: s.frac_touch_all,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow<'a> {
    pub condition: &'a str,
    pub interactions: usize,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub n: usize,
    pub mean_length: f64,
    pub sd_length: f64,
    pub ols_slope: f64,
    pub ols_intercept: f64,
    pub ols_slope_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub episode: usize,
    pub t: f64,
    pub body_id: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub summary: EvalSummary,
    pub records: Vec<EpisodeRecord>,
    pub comparison: Option<RandomizedComparison>,
    pub gap_fit: Option<OlsFit>,
}

fn gap_rows(bins: &[GapBin], fit: Option<OlsFit>) -> Vec<GapRow> {
    let (slope, intercept, se) = fit.map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.slope, f.intercept, f.slope_se));
    bins.iter()
        .map(|b| GapRow { bin_lo: b.lo, bin_hi: b.hi, n: b.n, mean_length: b.mean_length, sd_length: b.sd_length, ols_slope: slope, ols_intercept: intercept, ols_slope_se: se })
        .collect()
}

/// Body positions after every step of the first `n` evaluation episodes.
pub fn trace_episodes<E, P>(env: &mut E, policy: &mut P, n: usize, seed: u64) -> Result<Vec<TraceLine>, Error>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let mut lines = Vec::new();
    let control_dt = env.episode_config().control_dt();
    for episode in 0..n {
        let s = evalkit::eval_seed(seed, episode);
        let mut obs = env.reset(s);
        policy.begin_episode(s);
        let mut t = 0.0;
        loop {
            for (body_id, p) in env.positions().into_iter().enumerate() {
                lines.push(TraceLine { episode, t, body_id, x: p.x, y: p.y, z: p.z });
            }
            let r = env.step(policy.act(&obs).action)?;
            t += control_dt;
            obs = r.observation;
            if r.done {
                break;
            }
        }
    }
    Ok(lines)
}

/// Shared evaluation path of `eval` and `oracle`.
pub fn evaluate<P: Policy>(cfg: &RunConfig, dir: &Path, policy_name: &str, policy: &mut P) -> Result<EvalReport, Error> {
    let mut env = cfg.env.build()?;
    let condition = cfg.env.condition();
    let budget = cfg.eval.step_budget;
    let space = env.action_space();
    let (records, comparison) = if cfg.eval.compare_randomized {
        let (cmp, learned, randomized) = evalkit::randomized_comparison(&condition, &mut env, policy, budget, cfg.seed)?;
        write_ndjson(&dir.join(RANDOMIZED_RECORDS_FILE), &randomized)?;
        let name = match cfg.env {
            EnvSpec::Heavier(_) => "fig4.csv",
            EnvSpec::Towers(_) => "fig7.csv",
        };
        write_csv(&dir.join(name), &[SummaryRow::new(policy_name, &cmp.learned), SummaryRow::new("randomized", &cmp.randomized)])?;
        (learned, Some(cmp))
    } else if cfg.eval.randomized {
        let mut wrapped = RandomizedInteractions::new(&mut *policy, space);
        (evalkit::eval_run(&mut env, &mut wrapped, budget, cfg.seed)?, None)
    } else {
        (evalkit::eval_run(&mut env, policy, budget, cfg.seed)?, None)
    };
    write_ndjson(&dir.join(RECORDS_FILE), &records)?;
    let summary = evalkit::summarize(&condition, &records);
    let label = if cfg.eval.randomized && !cfg.eval.compare_randomized { "randomized" } else { policy_name };
    write_csv(&dir.join(SUMMARY_FILE), &[SummaryRow::new(label, &summary)])?;

    let mut gap_fit = None;
    if let EnvSpec::Heavier(_) = cfg.env {
        let hist: Vec<HistogramRow> = summary
            .histogram
            .bins()
            .map(|(interactions, count)| HistogramRow { condition: &condition, interactions, count })
            .collect();
        write_csv(&dir.join("fig3_left.csv"), &hist)?;
        let points = evalkit::gap_length_points(&records);
        gap_fit = evalkit::ols_fit(&points).ok();
        write_csv(&dir.join("fig3_right.csv"), &gap_rows(&evalkit::gap_bins(&points, 10), gap_fit))?;
    }
    if cfg.eval.trace_episodes > 0 {
        let lines = if cfg.eval.randomized {
            let mut wrapped = RandomizedInteractions::new(&mut *policy, space);
            trace_episodes(&mut env, &mut wrapped, cfg.eval.trace_episodes, cfg.seed)?
        } else {
            trace_episodes(&mut env, policy, cfg.eval.trace_episodes, cfg.seed)?
        };
        write_ndjson(&dir.join(TRACE_FILE), &lines)?;
    }
    Ok(EvalReport { summary, records, comparison, gap_fit })
}

pub fn eval(cfg: &RunConfig, checkpoint_path: &Path) -> Result<EvalReport, Error> {
    let params = load_agent(cfg, checkpoint_path)?;
    let dir = prepare_out_dir(cfg, "eval")?;
    let space = cfg.env.build()?.action_space();
    let mut policy = LstmPolicy::new(&params, space).with_selection(cfg.eval.selection);
    evaluate(cfg, &dir, "learned", &mut policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleName {
    Scan,
    Elimination,
}

impl OracleName {
    pub fn as_str(&self) -> &'static str {
        match self {
            OracleName::Scan => "scan",
            OracleName::Elimination => "elimination",
        }
    }
}

pub fn oracle(cfg: &RunConfig, name: OracleName) -> Result<EvalReport, Error> {
    let EnvSpec::Heavier(hc) = cfg.env else {
        return Err(Error::Config("scripted baselines exist only for env.kind = heavier".into()));
    };
    let dir = prepare_out_dir(cfg, &format!("oracle {}", name.as_str()))?;
    match name {
        OracleName::Scan => evaluate(cfg, &dir, name.as_str(), &mut ScanPolicy::for_config(&hc)),
        OracleName::Elimination => {
            evaluate(cfg, &dir, name.as_str(), &mut SuccessiveElimination::for_config(cfg.eval.oracle_delta, &hc))
        }
    }
}

pub fn sweep(cfg: &RunConfig, checkpoint_path: &Path) -> Result<Vec<SweepRow>, Error> {
    let EnvSpec::Towers(tc) = cfg.env else {
        return Err(Error::Config("the control step sweep needs env.kind = towers".into()));
    };
    let params = load_agent(cfg, checkpoint_path)?;
    let dir = prepare_out_dir(cfg, "sweep")?;
    let space = cfg.env.build()?.action_space();
    let mut policy = LstmPolicy::new(&params, space).with_selection(cfg.eval.selection);
    let (rows, records) = evalkit::control_dt_sweep(&mut policy, &tc, &cfg.eval.dts, cfg.eval.sweep_episodes, cfg.seed)?;
    write_ndjson(&dir.join("sweep_records.ndjson"), &records)?;
    write_csv(&dir.join("fig5.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub beta: f64,
    pub x: f64,
    pub cdf: f64,
}

/// Number of x grid points in `fig1_right.csv`.
pub const CDF_POINTS: usize = 101;

pub fn gapdist(cfg: &RunConfig, betas: &[f64], n: usize) -> Result<Vec<CdfRow>, Error> {
    if betas.iter().any(|&b| !(b.is_finite() && b >= 1.0)) {
        return Err(Error::Config("betas must be >= 1".into()));
    }
    let dir = prepare_out_dir(cfg, "gapdist")?;
    let mut rows = Vec::new();
    for (i, &beta) in betas.iter().enumerate() {
        let mut r = rng::stream_rng(rng::derive_seed(cfg.seed, i as u64), stream::INSTANCE);
        let d = oracle::gap_cdf(beta, n, &mut r);
        rows.extend(d.table(CDF_POINTS).into_iter().map(|(x, cdf)| CdfRow { beta, x, cdf }));
    }
    write_csv(&dir.join("fig1_right.csv"), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_in(dir: &Path) -> RunConfig {
        RunConfig { out: dir.to_path_buf(), ..RunConfig::default() }.resolve(Some(4), None).unwrap()
    }

    #[test]
    fn out_dir_holds_config_seed_and_version() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = cfg_in(tmp.path());
        prepare_out_dir(&cfg, "train").unwrap();
        let copy = RunConfig::load(&tmp.path().join("config.json")).unwrap();
        assert_eq!(copy, cfg);
        let info: RunInfo = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run.json")).unwrap()).unwrap();
        assert_eq!(info.seed, 4);
        assert_eq!(info.version, VERSION);
    }

    #[test]
    fn missing_checkpoint_is_explicit() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = cfg_in(tmp.path());
        let e = eval(&cfg, &tmp.path().join("nope.ckpt")).unwrap_err();
        assert_eq!(e.kind(), "checkpoint");
    }

    #[test]
    fn oracle_on_towers_is_a_config_error() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = cfg_in(tmp.path());
        cfg.env = EnvSpec::Towers(Default::default());
        assert_eq!(oracle(&cfg, OracleName::Scan).unwrap_err().kind(), "config");
    }

    #[test]
    fn trace_covers_every_body() {
        let mut env = EnvSpec::Towers(physprobe_core::TowersConfig::with_actuator(physprobe_core::Actuator::Fist)).build().unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let cfg = cfg_in(tmp.path());
        let mut p = ScanPolicy::new(0.0);
        // ScanPolicy is Heavier-shaped but only emits indices < 4, valid here too
        let lines = trace_episodes(&mut env, &mut p, 1, cfg.seed).unwrap();
        assert!(lines.len().is_multiple_of(6) && !lines.is_empty());
        assert_eq!(lines[0].t, 0.0);
    }
}
