//! Behavioral analyses over episode records: accuracy with Wilson intervals,
//! episode-length histograms, the length-vs-gap regression, randomized
//! interaction comparisons and the control time step sweep.
//!
//! Accuracy always excludes timed-out episodes. Everything except the runners
//! is a pure function of a record slice.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::envproto::{run_episode, EnvError, Environment, EpisodeRecord, Policy, RandomizedInteractions};
use crate::math;
use crate::rng::{self, stream};
use crate::towers::{TowersConfig, TowersEnv};

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Interaction count at which every Heavier block can have been touched once.
pub const TOUCH_ALL: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("x values have zero variance")]
    ZeroVariance,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Seed of the `index`-th evaluation episode.
pub fn eval_seed(run_seed: u64, index: usize) -> u64 {
    rng::derive_seed(rng::derive_seed(run_seed, stream::EPISODE ^ 0x4556_414c), index as u64)
}

/// Runs whole episodes until the next one would push the total step count past
/// `step_budget`; that last episode is discarded.
pub fn eval_run<E, P>(env: &mut E, policy: &mut P, step_budget: usize, seed: u64) -> Result<Vec<EpisodeRecord>, EnvError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let mut records = Vec::new();
    let mut used = 0;
    let mut index = 0;
    while used < step_budget {
        let (record, _) = run_episode(env, policy, eval_seed(seed, index))?;
        index += 1;
        if used + record.steps > step_budget {
            break;
        }
        used += record.steps;
        records.push(record);
    }
    Ok(records)
}

/// Runs exactly `n` episodes.
pub fn eval_episodes<E, P>(env: &mut E, policy: &mut P, n: usize, seed: u64) -> Result<Vec<EpisodeRecord>, EnvError>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    (0..n).map(|i| run_episode(env, policy, eval_seed(seed, i)).map(|(r, _)| r)).collect()
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * math::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Counts per integer length; `counts[l]` is the number of episodes of length `l`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub counts: Vec<usize>,
}

impl LengthHistogram {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = Vec::new();
        for l in lengths {
            if counts.len() <= l {
                counts.resize(l + 1, 0);
            }
            counts[l] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn fraction_at_least(&self, k: usize) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.counts.iter().skip(k).sum::<usize>() as f64 / total as f64
    }

    /// Lengths with a nonzero count, as `(length, count)`.
    pub fn bins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.counts.iter().copied().enumerate().filter(|&(_, c)| c > 0)
    }
}

/// Histogram of interaction counts (label step excluded) over labeled episodes.
pub fn length_histogram(records: &[EpisodeRecord]) -> LengthHistogram {
    LengthHistogram::from_lengths(records.iter().filter(|r| !r.timed_out()).map(EpisodeRecord::interactions))
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub condition: String,
    pub n_episodes: usize,
    pub n_labeled: usize,
    pub n_correct: usize,
    pub p_correct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Median episode length in steps, label included, over all episodes.
    pub median_length: f64,
    pub mean_length: f64,
    pub median_sim_seconds: f64,
    pub timeouts: usize,
    pub histogram: LengthHistogram,
    /// Share of labeled episodes with at least [`TOUCH_ALL`] interactions.
    pub frac_touch_all: f64,
}

pub fn summarize(condition: &str, records: &[EpisodeRecord]) -> EvalSummary {
    let labeled: Vec<&EpisodeRecord> = records.iter().filter(|r| !r.timed_out()).collect();
    let n_correct = labeled.iter().filter(|r| r.correct).count();
    let (ci_low, ci_high) = wilson(n_correct, labeled.len(), Z95);
    let mut lengths: Vec<f64> = records.iter().map(|r| r.steps as f64).collect();
    let mut seconds: Vec<f64> = records.iter().map(|r| r.sim_seconds).collect();
    let histogram = length_histogram(records);
    EvalSummary {
        condition: String::from(condition),
        n_episodes: records.len(),
        n_labeled: labeled.len(),
        n_correct,
        p_correct: if labeled.is_empty() { 0.0 } else { n_correct as f64 / labeled.len() as f64 },
        ci_low,
        ci_high,
        mean_length: if records.is_empty() { 0.0 } else { lengths.iter().sum::<f64>() / records.len() as f64 },
        median_length: median(&mut lengths),
        median_sim_seconds: median(&mut seconds),
        timeouts: records.len() - labeled.len(),
        frac_touch_all: histogram.fraction_at_least(TOUCH_ALL),
        histogram,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub n: usize,
}

/// Simple linear regression `y = intercept + slope x`.
pub fn ols_fit(points: &[(f64, f64)]) -> Result<OlsFit, EvalError> {
    let n = points.len();
    if n < 2 {
        return Err(EvalError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if n > 2 {
        let ssr: f64 = points.iter().map(|p| {
            let r = p.1 - intercept - slope * p.0;
            r * r
        }).sum();
        math::sqrt(ssr / (nf - 2.0) / sxx)
    } else {
        0.0
    };
    Ok(OlsFit { slope, intercept, slope_se, n })
}

/// `(mass_gap, steps)` of every labeled Heavier episode.
pub fn gap_length_points(records: &[EpisodeRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| !r.timed_out())
        .filter_map(|r| r.instance.mass_gap().map(|g| (g, r.steps as f64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub mean_length: f64,
    /// Population standard deviation of lengths in the bin.
    pub sd_length: f64,
}

/// Equal-width bins over [0, 1]; the last bin is closed on the right.
pub fn gap_bins(points: &[(f64, f64)], n_bins: usize) -> Vec<GapBin> {
    let mut sums = vec![(0usize, 0.0, 0.0); n_bins];
    for &(g, l) in points {
        let b = ((g * n_bins as f64) as usize).min(n_bins - 1);
        sums[b].0 += 1;
        sums[b].1 += l;
        sums[b].2 += l * l;
    }
    sums.iter()
        .enumerate()
        .map(|(i, &(n, s, ss))| {
            let (mean, sd) = if n == 0 {
                (0.0, 0.0)
            } else {
                let m = s / n as f64;
                (m, math::sqrt((ss / n as f64 - m * m).max(0.0)))
            };
            GapBin { lo: i as f64 / n_bins as f64, hi: (i + 1) as f64 / n_bins as f64, n, mean_length: mean, sd_length: sd }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedComparison {
    pub learned: EvalSummary,
    pub randomized: EvalSummary,
}

impl RandomizedComparison {
    /// Learned minus randomized accuracy.
    pub fn accuracy_gap(&self) -> f64 {
        self.learned.p_correct - self.randomized.p_correct
    }
}

/// Evaluates `policy` twice with the same seed and budget, the second time with
/// its interaction choices replaced by uniform draws.
pub fn randomized_comparison<E, P>(
    condition: &str,
    env: &mut E,
    policy: &mut P,
    step_budget: usize,
    seed: u64,
) -> Result<(RandomizedComparison, Vec<EpisodeRecord>, Vec<EpisodeRecord>), EnvError>
where
    E: Environment + ?Sized,
    P: Policy,
{
    let learned_records = eval_run(env, policy, step_budget, seed)?;
    let space = env.action_space();
    let mut wrapped = RandomizedInteractions::new(policy, space);
    let random_records = eval_run(env, &mut wrapped, step_budget, seed)?;
    let cmp = RandomizedComparison {
        learned: summarize(condition, &learned_records),
        randomized: summarize(condition, &random_records),
    };
    Ok((cmp, learned_records, random_records))
}

/// Time steps probed by the control sweep.
pub const SWEEP_DTS: [f64; 5] = [0.01, 0.025, 0.05, 0.075, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dt: f64,
    pub n_episodes: usize,
    pub p_correct: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub median_steps: f64,
    pub median_sim_seconds: f64,
    pub timeouts: usize,
}

/// Towers config for evaluating at control step `dt`. The step limit is
/// rescaled so the episode's real-time budget matches the training one.
pub fn config_at_dt(trained: &TowersConfig, dt: f64) -> TowersConfig {
    let budget = trained.timeout_steps as f64 * trained.control_dt;
    let steps = libm::ceil(budget / dt - 1e-9) as usize;
    TowersConfig { control_dt: dt, timeout_steps: steps.max(1), ..*trained }
}

/// Evaluates `policy` for `n_episodes` at each control step in `dts`.
pub fn control_dt_sweep<P: Policy>(
    policy: &mut P,
    trained: &TowersConfig,
    dts: &[f64],
    n_episodes: usize,
    seed: u64,
) -> Result<(Vec<SweepRow>, Vec<EpisodeRecord>), EnvError> {
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for &dt in dts {
        let mut env = TowersEnv::new(config_at_dt(trained, dt))?;
        let records = eval_episodes(&mut env, policy, n_episodes, seed)?;
        let s = summarize("", &records);
        rows.push(SweepRow {
            dt,
            n_episodes: records.len(),
            p_correct: s.p_correct,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            median_steps: s.median_length,
            median_sim_seconds: s.median_sim_seconds,
            timeouts: s.timeouts,
        });
        all.extend(records);
    }
    Ok((rows, all))
}
