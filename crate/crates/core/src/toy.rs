//! Ground-truth arithmetic benchmark for explanation methods.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{explain, LrpConfig, LrpRule, Method, OcclusionMode};
use crate::lstm::{InputSequence, ModelParams};
use crate::seed;
use crate::train::{train_toy_model, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToyTask {
    Addition,
    Subtraction,
}

impl ToyTask {
    pub fn name(self) -> &'static str {
        match self {
            ToyTask::Addition => "addition",
            ToyTask::Subtraction => "subtraction",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "addition" | "add" => Ok(ToyTask::Addition),
            "subtraction" | "sub" => Ok(ToyTask::Subtraction),
            _ => Err(Error::invalid(format!("unknown toy task {s:?}"))),
        }
    }

    fn sample_number(self, rng: &mut impl Rng) -> f64 {
        match self {
            ToyTask::Addition => {
                let m = rng.gen_range(0.5..=1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            }
            ToyTask::Subtraction => rng.gen_range(0.5..=1.0),
        }
    }

    pub fn target(self, n_a: f64, n_b: f64) -> f64 {
        match self {
            ToyTask::Addition => n_a + n_b,
            ToyTask::Subtraction => n_a - n_b,
        }
    }
}

/// One sequence: `n_a` at position `a` and `n_b` at `b` in the first input
/// dimension, every other position carrying its number in the second.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySample {
    pub inputs: InputSequence,
    pub a: usize,
    pub b: usize,
    pub n_a: f64,
    pub n_b: f64,
    pub target: f64,
}

pub fn gen_toy_dataset(
    task: ToyTask,
    count: usize,
    lengths: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Result<Vec<ToySample>> {
    let (lo, hi) = (*lengths.start(), *lengths.end());
    if lo < 2 || hi < lo {
        return Err(Error::invalid(format!(
            "sequence lengths {lo}..={hi} must be a non-empty range with minimum at least 2"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.gen_range(lo..=hi);
        let pair = rand::seq::index::sample(&mut rng, t, 2);
        let (a, b) = {
            let (x, y) = (pair.index(0), pair.index(1));
            (x.min(y), x.max(y))
        };
        let mut data = vec![0.0; 2 * t];
        let mut n_a = 0.0;
        let mut n_b = 0.0;
        for pos in 0..t {
            let n = task.sample_number(&mut rng);
            if pos == a {
                n_a = n;
                data[2 * pos] = n;
            } else if pos == b {
                n_b = n;
                data[2 * pos] = n;
            } else {
                data[2 * pos + 1] = n;
            }
        }
        out.push(ToySample {
            inputs: InputSequence::new(2, data)?,
            a,
            b,
            n_a,
            n_b,
            target: task.target(n_a, n_b),
        });
    }
    Ok(out)
}

/// Length-disjoint train / validation / test splits.
#[derive(Debug, Clone)]
pub struct ToySplits {
    pub task: ToyTask,
    pub train: Vec<ToySample>,
    pub val: Vec<ToySample>,
    pub test: Vec<ToySample>,
}

impl ToySplits {
    /// 10000 training sequences of length 4..=10, 2500 validation sequences
    /// of length 11..=12, 2500 test sequences of length 13..=14.
    pub fn standard(task: ToyTask, data_seed: u64) -> Result<Self> {
        Self::sized(task, data_seed, 10_000, 2_500, 2_500)
    }

    pub fn sized(task: ToyTask, data_seed: u64, train: usize, val: usize, test: usize) -> Result<Self> {
        Ok(Self {
            task,
            train: gen_toy_dataset(task, train, 4..=10, seed::derive(data_seed, 1, 0))?,
            val: gen_toy_dataset(task, val, 11..=12, seed::derive(data_seed, 2, 0))?,
            test: gen_toy_dataset(task, test, 13..=14, seed::derive(data_seed, 3, 0))?,
        })
    }
}

/// One line per sample: marked positions, their numbers, the target and the
/// sequence as `number,marker` pairs.
pub fn dataset_tsv(samples: &[ToySample]) -> String {
    let mut out = String::from("index\tlength\ta\tb\tn_a\tn_b\ttarget\tsequence\n");
    for (i, s) in samples.iter().enumerate() {
        let steps: Vec<String> = (0..s.inputs.len())
            .map(|t| {
                let x = s.inputs.step(t);
                format!("{},{}", x[0], x[1])
            })
            .collect();
        out.push_str(&format!(
            "{i}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            s.inputs.len(),
            s.a,
            s.b,
            s.n_a,
            s.n_b,
            s.target,
            steps.join(" ")
        ));
    }
    out
}

pub fn regression_pairs(samples: &[ToySample]) -> Vec<(InputSequence, f64)> {
    samples.iter().map(|s| (s.inputs.clone(), s.target)).collect()
}

/// Table statistics of one method on one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyStats {
    pub rho_a: f64,
    pub rho_b: f64,
    pub portion: f64,
    pub gap: f64,
    /// Set when a relevance series had zero variance and its correlation
    /// was reported as 0.
    pub degenerate: bool,
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n == 0 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Statistics over aligned word relevances, samples and model outputs.
pub fn toy_stats(relevances: &[Vec<f64>], samples: &[ToySample], predictions: &[f64]) -> Result<ToyStats> {
    if relevances.len() != samples.len() || predictions.len() != samples.len() || samples.is_empty() {
        return Err(Error::invalid("relevances, samples and predictions must be aligned and non-empty"));
    }
    let mut ra = Vec::with_capacity(samples.len());
    let mut rb = Vec::with_capacity(samples.len());
    let mut portion = 0.0;
    let mut gap = 0.0;
    for ((r, s), &y) in relevances.iter().zip(samples).zip(predictions) {
        if r.len() != s.inputs.len() {
            return Err(Error::shape("relevance length differs from sequence length"));
        }
        let (a, b) = (r[s.a], r[s.b]);
        ra.push(a);
        rb.push(b);
        let total: f64 = r.iter().map(|v| v.abs()).sum();
        if total > 0.0 {
            portion += (a.abs() + b.abs()) / total;
        }
        gap += (a + b - y).powi(2);
    }
    let n = samples.len() as f64;
    let na: Vec<f64> = samples.iter().map(|s| s.n_a).collect();
    let nb: Vec<f64> = samples.iter().map(|s| s.n_b).collect();
    let rho_a = pearson(&ra, &na);
    let rho_b = pearson(&rb, &nb);
    Ok(ToyStats {
        rho_a: rho_a.unwrap_or(0.0),
        rho_b: rho_b.unwrap_or(0.0),
        portion: portion / n,
        gap: gap / n,
        degenerate: rho_a.is_none() || rho_b.is_none(),
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// A method's statistics across the model cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyStatsRow {
    pub method: Method,
    pub per_model: Vec<ToyStats>,
    pub rho_a: (f64, f64),
    pub rho_b: (f64, f64),
    pub portion: (f64, f64),
    pub gap: (f64, f64),
    pub degenerate_models: usize,
}

impl ToyStatsRow {
    pub fn aggregate(method: Method, per_model: Vec<ToyStats>) -> Self {
        let col = |f: fn(&ToyStats) -> f64| mean_std(&per_model.iter().map(f).collect::<Vec<_>>());
        Self {
            method,
            rho_a: col(|s| s.rho_a),
            rho_b: col(|s| s.rho_b),
            portion: col(|s| s.portion),
            gap: col(|s| s.gap),
            degenerate_models: per_model.iter().filter(|s| s.degenerate).count(),
            per_model,
        }
    }
}

/// Methods of the toy table, with the LRP stabilizer switched off.
pub fn default_toy_methods() -> Vec<Method> {
    let mut m = vec![Method::GradientXInput, Method::OCCLUSION_F];
    m.extend(LrpRule::ALL_RULES.iter().map(|&r| Method::Lrp(LrpConfig::unstabilized(r))));
    m.push(Method::Cd);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyBenchConfig {
    pub task: ToyTask,
    pub n_models: usize,
    /// Training attempts allowed before giving up with a partial table.
    pub max_attempts: usize,
    pub methods: Vec<Method>,
    /// Master seed; data and model seeds are derived from it.
    pub seed: u64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub train: TrainConfig,
}

impl ToyBenchConfig {
    pub fn new(task: ToyTask) -> Self {
        Self {
            task,
            n_models: 50,
            max_attempts: 200,
            methods: default_toy_methods(),
            seed: 0,
            train_size: 10_000,
            val_size: 2_500,
            test_size: 2_500,
            train: TrainConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_models == 0 || self.max_attempts < self.n_models {
            return Err(Error::invalid("need n_models >= 1 and max_attempts >= n_models"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods selected"));
        }
        if let Some(m) = self.methods.iter().find(|m| matches!(m, Method::Occlusion { mode: OcclusionMode::PDiff, .. })) {
            return Err(Error::invalid(format!("{} needs a classifier; the toy models are regressors", m.label())));
        }
        if self.train_size == 0 || self.val_size == 0 || self.test_size == 0 {
            return Err(Error::invalid("dataset sizes must be positive"));
        }
        self.train.validate()
    }

    /// The data splits the benchmark runs on.
    pub fn splits(&self) -> Result<ToySplits> {
        ToySplits::sized(self.task, seed::derive(self.seed, 1, 0), self.train_size, self.val_size, self.test_size)
    }
}

/// Outcome of one training attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub seed: u64,
    pub converged: bool,
    pub diverged: bool,
    pub best_val_mse: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct ToyBenchReport {
    pub config: ToyBenchConfig,
    pub attempts: Vec<AttemptRecord>,
    /// Converged models used for the table, in attempt order.
    pub models: Vec<ModelParams>,
    pub rows: Vec<ToyStatsRow>,
}

impl ToyBenchReport {
    pub fn converged(&self) -> usize {
        self.models.len()
    }

    pub fn is_complete(&self) -> bool {
        self.models.len() == self.config.n_models
    }

    /// Tab-separated table: one row per method, mean and std per statistic.
    pub fn table(&self) -> String {
        let mut out = format!(
            "# task={} models={}/{} attempts={}\n",
            self.config.task.name(),
            self.converged(),
            self.config.n_models,
            self.attempts.len()
        );
        out.push_str(
            "method\trho_a_mean\trho_a_std\trho_b_mean\trho_b_std\tportion_mean\tportion_std\tgap_mean\tgap_std\tn_models\tdegenerate\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3e}\t{:.3e}\t{}\t{}\n",
                r.method.label(),
                r.rho_a.0,
                r.rho_a.1,
                r.rho_b.0,
                r.rho_b.1,
                r.portion.0,
                r.portion.1,
                r.gap.0,
                r.gap.1,
                r.per_model.len(),
                r.degenerate_models
            ));
        }
        out
    }

    pub fn row(&self, method: &Method) -> Option<&ToyStatsRow> {
        self.rows.iter().find(|r| &r.method == method)
    }
}

/// Trains attempts in order until `n` have converged or the budget runs out.
///
/// Attempts are trained in parallel in waves sized to the number of models
/// still missing, and accepted in attempt order, so the selected cohort does
/// not depend on the thread count.
pub fn train_cohort(
    cfg: &ToyBenchConfig,
    splits: &ToySplits,
) -> Result<(Vec<ModelParams>, Vec<AttemptRecord>)> {
    let train = regression_pairs(&splits.train);
    let val = regression_pairs(&splits.val);
    let mut models = Vec::new();
    let mut log = Vec::new();
    while models.len() < cfg.n_models && log.len() < cfg.max_attempts {
        let first = log.len();
        let wave = (cfg.n_models - models.len()).min(cfg.max_attempts - first);
        let results = (first..first + wave)
            .into_par_iter()
            .map(|attempt| {
                let mut tc = cfg.train.clone();
                tc.seed = seed::derive(cfg.seed, 10, attempt as u64);
                train_toy_model(&train, &val, &tc).map(|o| (attempt, tc.seed, o))
            })
            .collect::<Result<Vec<_>>>()?;
        for (attempt, s, out) in results {
            log.push(AttemptRecord {
                attempt,
                seed: s,
                converged: out.converged && !out.diverged,
                diverged: out.diverged,
                best_val_mse: out.best_val_mse,
                steps: out.history.last().map_or(0, |h| h.step),
            });
            if out.converged && !out.diverged && models.len() < cfg.n_models {
                models.push(out.model);
            }
        }
    }
    Ok((models, log))
}

/// Word relevances of `method` on every test sample, with the model output
/// as the explained quantity.
pub fn evaluate_method(model: &ModelParams, method: &Method, test: &[ToySample]) -> Result<ToyStats> {
    let mut rel = Vec::with_capacity(test.len());
    let mut pred = Vec::with_capacity(test.len());
    for s in test {
        let map = explain(model, &s.inputs, 0, method)?;
        pred.push(map.logits[0]);
        rel.push(map.per_word);
    }
    toy_stats(&rel, test, &pred)
}

/// Statistics table for an existing cohort.
pub fn evaluate_cohort(models: &[ModelParams], methods: &[Method], test: &[ToySample]) -> Result<Vec<ToyStatsRow>> {
    let per_model = models
        .par_iter()
        .map(|m| methods.iter().map(|method| evaluate_method(m, method, test)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, &method)| ToyStatsRow::aggregate(method, per_model.iter().map(|row| row[k]).collect()))
        .collect())
}

/// Generates the data, trains the cohort and evaluates every method. A
/// cohort smaller than requested still yields a (partial) table; callers
/// check [`ToyBenchReport::is_complete`].
pub fn run_toy_benchmark(cfg: &ToyBenchConfig) -> Result<ToyBenchReport> {
    cfg.validate()?;
    let splits = cfg.splits()?;
    let (models, attempts) = train_cohort(cfg, &splits)?;
    let rows = if models.is_empty() {
        Vec::new()
    } else {
        evaluate_cohort(&models, &cfg.methods, &splits.test)?
    };
    Ok(ToyBenchReport {
        config: cfg.clone(),
        attempts,
        models,
        rows,
    })
}
