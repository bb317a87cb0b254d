//! The experiment matrix: training fractions × seeds × arms on a source
//! (party A) and target (party B) cohort, scored on a held-out target split.
//!
//! Per fraction and seed both parties subsample their training patients,
//! impute with their own subsample means and standardize with their own
//! scaler. Arms:
//!
//! | arm | training data |
//! |---|---|
//! | `lr`, `nn`, `gru`, `sofanet_lc`, `sofanet_lc_womc` | target only |
//! | `finetune` | source, then target |
//! | `collab` | both, through the two-party protocol |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{train_lr, train_nn, FlatData};
use crate::config::RunConfig;
use crate::data::{
    impute, screen_cohort, split_patients, subsample_patients, windows_for_cohort, Cohort,
    EncodedSet, FeatureScaler,
};
use crate::metrics::{evaluate_scores, MetricReport, ScoredSet};
use crate::model::SofaNet;
use crate::nn::ParamSet;
use crate::protocol::train_collab;
use crate::train::{finetune, train_local, TrainConfig};

const EVAL_CHUNK: usize = 512;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("preparing {party} data (fraction {fraction}, seed {seed}): {message}")]
    Data {
        party: &'static str,
        fraction: f64,
        seed: u64,
        message: String,
    },
    #[error("arm {arm} (fraction {fraction}, seed {seed}): {message}")]
    Arm {
        arm: &'static str,
        fraction: f64,
        seed: u64,
        message: String,
    },
    #[error("{0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Share of target patients held out for evaluation.
    pub test_frac: f64,
    pub split_seed: u64,
    pub max_missing: f64,
    /// Synthetic cohort size per party when no cohort directories are given.
    pub n_patients: usize,
    pub source_seed: u64,
    pub target_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            fractions: vec![0.01, 0.05, 0.10],
            seeds: (0..5).collect(),
            test_frac: 0.1,
            split_seed: 7,
            max_missing: 0.8,
            n_patients: 10_000,
            source_seed: 1,
            target_seed: 2,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.fractions.is_empty() || self.seeds.is_empty() {
            return Err("experiment.fractions and experiment.seeds must be non-empty".into());
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(format!("experiment fraction {f} outside (0, 1]"));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err("experiment.test_frac must be in (0, 1)".into());
        }
        if !(self.max_missing > 0.0 && self.max_missing <= 1.0) {
            return Err("experiment.max_missing must be in (0, 1]".into());
        }
        if self.n_patients < 2 {
            return Err("experiment.n_patients must be at least 2".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Lr,
    Nn,
    Gru,
    SofanetLc,
    SofanetLcWomc,
    Finetune,
    Collab,
}

impl Arm {
    pub const ALL: [Arm; 7] = [
        Arm::Lr,
        Arm::Nn,
        Arm::Gru,
        Arm::SofanetLc,
        Arm::SofanetLcWomc,
        Arm::Finetune,
        Arm::Collab,
    ];

    /// Recurrent arms trained on target data alone.
    pub const LOCAL_GRU: [Arm; 3] = [Arm::Gru, Arm::SofanetLc, Arm::SofanetLcWomc];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Lr => "lr",
            Arm::Nn => "nn",
            Arm::Gru => "gru",
            Arm::SofanetLc => "sofanet_lc",
            Arm::SofanetLcWomc => "sofanet_lc_womc",
            Arm::Finetune => "finetune",
            Arm::Collab => "collab",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Arm::ALL.into_iter().find(|a| a.name() == s)
    }
}

/// Imputation means and scaler fitted on one party's training patients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub means: Vec<f64>,
    pub scaler: FeatureScaler,
}

impl Preprocessor {
    pub fn fit(train: &Cohort) -> Self {
        let means = train.feature_means.clone();
        let filled: Vec<_> = train.patients.iter().map(|p| impute(p, &means)).collect();
        let scaler = FeatureScaler::fit(&filled, train.schema.len());
        Self { means, scaler }
    }

    pub fn encode(&self, cohort: &Cohort) -> Result<EncodedSet, String> {
        let windows = windows_for_cohort(cohort, &self.means).map_err(|e| e.to_string())?;
        Ok(EncodedSet::encode(&windows, &self.scaler))
    }
}

/// Scores a trained recurrent model on an encoded set.
pub fn evaluate_net(
    net: &SofaNet,
    params: &ParamSet,
    set: &EncodedSet,
) -> Result<MetricReport, String> {
    let scores = net
        .score_set(params, set, EVAL_CHUNK)
        .map_err(|e| e.to_string())?;
    evaluate(scores, set)
}

fn evaluate(scores: Vec<f64>, set: &EncodedSet) -> Result<MetricReport, String> {
    let scored = ScoredSet::new(scores, set.sepsis.clone()).map_err(|e| e.to_string())?;
    evaluate_scores(&scored).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub fraction: f64,
    pub seed: u64,
    pub arm: Arm,
    pub metrics: MetricReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation over seeds (`n − 1` denominator; 0 for one seed).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub fraction: f64,
    pub arm: Arm,
    pub n_seeds: usize,
    pub auroc: MeanStd,
    pub auprc: MeanStd,
    pub min_se_pplus: MeanStd,
}

/// Per-fraction comparison of the collaborative, finetune and best local
/// recurrent arms on seed means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionSummary {
    pub fraction: f64,
    pub collab_auroc: f64,
    pub finetune_auroc: f64,
    pub best_local_auroc: f64,
    pub collab_min_se_pplus: f64,
    pub finetune_min_se_pplus: f64,
    pub best_local_min_se_pplus: f64,
}

impl FractionSummary {
    pub fn auroc_gap(&self) -> f64 {
        self.collab_auroc - self.best_local_auroc
    }

    pub fn min_se_pplus_gap(&self) -> f64 {
        self.collab_min_se_pplus - self.best_local_min_se_pplus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub rows: Vec<RunRow>,
    pub table: Vec<AggregateRow>,
    pub summary: Vec<FractionSummary>,
}

pub fn aggregate(rows: &[RunRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(f64, Arm)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(f, a)| f == r.fraction && a == r.arm) {
            keys.push((r.fraction, r.arm));
        }
    }
    keys.into_iter()
        .map(|(fraction, arm)| {
            let sel: Vec<&MetricReport> = rows
                .iter()
                .filter(|r| r.fraction == fraction && r.arm == arm)
                .map(|r| &r.metrics)
                .collect();
            let col = |f: fn(&MetricReport) -> f64| {
                MeanStd::of(&sel.iter().map(|m| f(m)).collect::<Vec<_>>())
            };
            AggregateRow {
                fraction,
                arm,
                n_seeds: sel.len(),
                auroc: col(|m| m.auroc),
                auprc: col(|m| m.auprc),
                min_se_pplus: col(|m| m.min_se_pplus),
            }
        })
        .collect()
}

/// Summaries for every fraction where the collab, finetune and at least one
/// local recurrent arm were run.
pub fn summarize(table: &[AggregateRow]) -> Vec<FractionSummary> {
    let mut fractions: Vec<f64> = Vec::new();
    for r in table {
        if !fractions.contains(&r.fraction) {
            fractions.push(r.fraction);
        }
    }
    fractions
        .into_iter()
        .filter_map(|fraction| {
            let get = |arm: Arm| {
                table
                    .iter()
                    .find(|r| r.fraction == fraction && r.arm == arm)
            };
            let collab = get(Arm::Collab)?;
            let ft = get(Arm::Finetune)?;
            let locals: Vec<&AggregateRow> =
                Arm::LOCAL_GRU.iter().filter_map(|&a| get(a)).collect();
            let best = |f: fn(&AggregateRow) -> f64| locals.iter().map(|r| f(r)).reduce(f64::max);
            Some(FractionSummary {
                fraction,
                collab_auroc: collab.auroc.mean,
                finetune_auroc: ft.auroc.mean,
                best_local_auroc: best(|r| r.auroc.mean)?,
                collab_min_se_pplus: collab.min_se_pplus.mean,
                finetune_min_se_pplus: ft.min_se_pplus.mean,
                best_local_min_se_pplus: best(|r| r.min_se_pplus.mean)?,
            })
        })
        .collect()
}

struct PartyData {
    train: EncodedSet,
    test: Option<EncodedSet>,
}

fn prepare(
    party: &'static str,
    train: &Cohort,
    test: Option<&Cohort>,
    fraction: f64,
    seed: u64,
) -> Result<PartyData, ExperimentError> {
    let err = |message: String| ExperimentError::Data {
        party,
        fraction,
        seed,
        message,
    };
    let sub = subsample_patients(train, fraction, seed).map_err(|e| err(e.to_string()))?;
    let pre = Preprocessor::fit(&sub);
    let train = pre.encode(&sub).map_err(err)?;
    if train.is_empty() {
        return Err(err("no training windows".into()));
    }
    let test = test.map(|t| pre.encode(t)).transpose().map_err(err)?;
    Ok(PartyData { train, test })
}

/// Runs one (fraction, seed) cell for the requested arms.
fn run_cell(
    cfg: &RunConfig,
    arms: &[Arm],
    source: &Cohort,
    target_train: &Cohort,
    target_test: &Cohort,
    fraction: f64,
    seed: u64,
) -> Result<Vec<RunRow>, ExperimentError> {
    let a = prepare("source", source, None, fraction, seed ^ 0xA5A5)?;
    let b = prepare("target", target_train, Some(target_test), fraction, seed)?;
    let test = b.test.as_ref().expect("target test set encoded");
    let train_cfg = TrainConfig { seed, ..cfg.train };
    let model = cfg.model.model_config(target_train.schema.len());

    let mut rows = Vec::with_capacity(arms.len());
    for &arm in arms {
        log::info!("fraction {fraction} seed {seed} arm {}", arm.name());
        let metrics =
            run_arm(arm, model, &train_cfg, &a.train, &b.train, test).map_err(|message| {
                ExperimentError::Arm {
                    arm: arm.name(),
                    fraction,
                    seed,
                    message,
                }
            })?;
        rows.push(RunRow {
            fraction,
            seed,
            arm,
            metrics,
        });
    }
    Ok(rows)
}

fn run_arm(
    arm: Arm,
    model: crate::model::ModelConfig,
    cfg: &TrainConfig,
    source: &EncodedSet,
    target: &EncodedSet,
    test: &EncodedSet,
) -> Result<MetricReport, String> {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    match arm {
        Arm::Lr | Arm::Nn => {
            let data = FlatData::from_set(target);
            let test_x = FlatData::from_set(test).x;
            let scores = if arm == Arm::Lr {
                train_lr(&data, cfg)
                    .map_err(|e| s(&e))?
                    .0
                    .predict_proba(test_x.view())
            } else {
                train_nn(&data, cfg, model.hidden_dim)
                    .map_err(|e| s(&e))?
                    .0
                    .predict_proba(test_x.view())
                    .map_err(|e| s(&e))?
            };
            evaluate(scores, test)
        }
        Arm::Gru | Arm::SofanetLc | Arm::SofanetLcWomc => {
            let mc = match arm {
                Arm::Gru => model.plain_gru(),
                Arm::SofanetLcWomc => model.without_multi_channel(),
                _ => model,
            };
            let net = SofaNet::new(mc).map_err(|e| s(&e))?;
            let (params, _) = train_local(&net, cfg, target).map_err(|e| s(&e))?;
            evaluate_net(&net, &params, test)
        }
        Arm::Finetune => {
            let net = SofaNet::new(model).map_err(|e| s(&e))?;
            let (params, _) = finetune(&net, cfg, source, target).map_err(|e| s(&e))?;
            evaluate_net(&net, &params, test)
        }
        Arm::Collab => {
            let net = SofaNet::new(model).map_err(|e| s(&e))?;
            let (params, _) = train_collab(&net, cfg, source, target).map_err(|e| s(&e))?;
            evaluate_net(&net, &params, test)
        }
    }
}

/// Runs every configured fraction and seed over `arms`.
///
/// `source` and `target` are screened first; the target's held-out split is
/// fixed by `experiment.split_seed` and shared by all cells.
pub fn run_suite(
    cfg: &RunConfig,
    arms: &[Arm],
    source: &Cohort,
    target: &Cohort,
) -> Result<SuiteReport, ExperimentError> {
    cfg.validate()
        .map_err(|e| ExperimentError::Setup(e.to_string()))?;
    let exp = &cfg.experiment;
    let setup =
        |what: &str, e: &dyn std::fmt::Display| ExperimentError::Setup(format!("{what}: {e}"));
    let source =
        screen_cohort(source, exp.max_missing).map_err(|e| setup("screening source", &e))?;
    let target =
        screen_cohort(target, exp.max_missing).map_err(|e| setup("screening target", &e))?;
    let (target_train, target_test) = split_patients(&target, exp.test_frac, exp.split_seed)
        .map_err(|e| setup("splitting target", &e))?;

    let mut rows = Vec::new();
    for &fraction in &exp.fractions {
        for &seed in &exp.seeds {
            rows.extend(run_cell(
                cfg,
                arms,
                &source,
                &target_train,
                &target_test,
                fraction,
                seed,
            )?);
        }
    }
    let table = aggregate(&rows);
    let summary = summarize(&table);
    Ok(SuiteReport {
        rows,
        table,
        summary,
    })
}

impl SuiteReport {
    /// One row per (fraction, seed, arm).
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("fraction,seed,arm,auroc,auprc,min_se_pplus,n,n_pos\n");
        for r in &self.rows {
            let m = &r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.fraction,
                r.seed,
                r.arm.name(),
                m.auroc,
                m.auprc,
                m.min_se_pplus,
                m.n,
                m.n_pos
            ));
        }
        out
    }

    /// Mean and sample standard deviation of every metric per fraction and arm.
    pub fn table_csv(&self) -> String {
        let mut out = String::from(
            "fraction,arm,n_seeds,auroc_mean,auroc_std,auprc_mean,auprc_std,min_se_pplus_mean,min_se_pplus_std\n",
        );
        for r in &self.table {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.fraction,
                r.arm.name(),
                r.n_seeds,
                r.auroc.mean,
                r.auroc.std,
                r.auprc.mean,
                r.auprc.std,
                r.min_se_pplus.mean,
                r.min_se_pplus.std
            ));
        }
        out
    }

    /// Min(Se,P+) against training fraction, one column per arm.
    pub fn figure_csv(&self) -> String {
        let mut arms: Vec<Arm> = self.table.iter().map(|r| r.arm).collect();
        arms.sort();
        arms.dedup();
        let mut fractions: Vec<f64> = Vec::new();
        for r in &self.table {
            if !fractions.contains(&r.fraction) {
                fractions.push(r.fraction);
            }
        }
        let mut out = String::from("fraction");
        for a in &arms {
            out.push(',');
            out.push_str(a.name());
        }
        out.push('\n');
        for f in fractions {
            out.push_str(&f.to_string());
            for &a in &arms {
                out.push(',');
                if let Some(r) = self.table.iter().find(|r| r.fraction == f && r.arm == a) {
                    out.push_str(&r.min_se_pplus.mean.to_string());
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "fraction,collab_auroc,finetune_auroc,best_local_auroc,auroc_gap,collab_min_se_pplus,finetune_min_se_pplus,best_local_min_se_pplus,min_se_pplus_gap\n",
        );
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.fraction,
                s.collab_auroc,
                s.finetune_auroc,
                s.best_local_auroc,
                s.auroc_gap(),
                s.collab_min_se_pplus,
                s.finetune_min_se_pplus,
                s.best_local_min_se_pplus,
                s.min_se_pplus_gap()
            ));
        }
        out
    }
}
