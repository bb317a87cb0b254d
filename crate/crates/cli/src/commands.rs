use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sofanet::baselines::{train_lr, train_nn, FlatData};
use sofanet::config::{RunConfig, RunManifest};
use sofanet::data::{parse_psv, read_cohort_dir, screen_cohort, write_psv, Cohort, CohortManifest};
use sofanet::experiment::{run_suite, Arm, Preprocessor};
use sofanet::metrics::{evaluate_scores, MetricReport, ScoredSet};
use sofanet::sofa::{columns, score_cardiovascular, score_coagulation, score_liver, score_renal};
use sofanet::synth::{generate_cohort, Profile};
use sofanet::train::{finetune, train_local};
use sofanet::{FeatureSchema, SofaNet};

use crate::checkpoint::{Checkpoint, ModelKind, Sidecar};
use crate::{write_json, write_text, Cli, CliError, Command, ProfileArg};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match cli.command {
        Command::GenSynth {
            profile,
            n,
            prevalence,
            missing_rate,
        } => gen_synth(
            profile,
            n,
            prevalence,
            missing_rate,
            cli.seed.unwrap_or(0),
            need_out(out)?,
        ),
        Command::Ingest { cohort } => ingest(&cfg, &cohort, out),
        Command::SofaScore { input } => sofa_score(&input, out),
        Command::TrainLocal { model, cohort } => {
            train_local_cmd(&cfg, model, &cohort, need_out(out)?)
        }
        Command::Finetune { source, target } => {
            finetune_cmd(&cfg, &source, &target, need_out(out)?)
        }
        Command::TrainCollab {
            role,
            listen,
            peer,
            cohort,
            peer_cohort,
            tap,
            audit_cohort,
        } => crate::collab::run(
            &cfg,
            crate::collab::CollabArgs {
                role,
                listen,
                peer,
                cohort,
                peer_cohort,
                tap,
                audit_cohorts: audit_cohort,
            },
            need_out(out)?,
        ),
        Command::Evaluate {
            checkpoint,
            cohort,
            csv,
            run_id,
        } => evaluate_cmd(&checkpoint, &cohort, csv.as_deref(), run_id, out),
        Command::ExperimentSuite {
            source,
            target,
            arms,
            seeds,
        } => suite(cfg, source.zip(target), arms, seeds, need_out(out)?),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(CliError::validation)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn need_out(out: Option<&Path>) -> Result<&Path, CliError> {
    out.ok_or_else(|| CliError::Validation("--out is required for this subcommand".into()))
}

/// Reads a PSV directory with the standard schema and screens it.
pub fn load_cohort(dir: &Path, cfg: &RunConfig) -> Result<Cohort, CliError> {
    let raw = read_cohort_dir(dir, &FeatureSchema::standard()).map_err(CliError::validation)?;
    screen_cohort(&raw, cfg.experiment.max_missing)
        .map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))
}

fn gen_synth(
    profile: ProfileArg,
    n: usize,
    prevalence: Option<f64>,
    missing_rate: Option<f64>,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let profile = match profile {
        ProfileArg::MimicLike => Profile::MimicLike,
        ProfileArg::ChallengeLike => Profile::ChallengeLike,
    };
    let mut gen = profile.config(n, seed);
    if let Some(p) = prevalence {
        gen.sepsis_prevalence = p;
    }
    if let Some(m) = missing_rate {
        gen.missing_rate = m;
    }
    let cohort = generate_cohort(&gen).map_err(CliError::validation)?;
    let written = write_psv(&cohort, out).map_err(CliError::runtime)?;
    write_json(&out.join("cohort.json"), &cohort.manifest())?;
    log::info!("wrote {written} patients to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct IngestReport {
    manifest: RunManifest,
    n_read: usize,
    n_retained: usize,
    n_windows: usize,
    n_positive_windows: usize,
    cohort: CohortManifest,
}

fn ingest(cfg: &RunConfig, dir: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let raw = read_cohort_dir(dir, &FeatureSchema::standard()).map_err(CliError::validation)?;
    let screened = screen_cohort(&raw, cfg.experiment.max_missing)
        .map_err(|e| CliError::Validation(format!("{}: {e}", dir.display())))?;
    let pre = Preprocessor::fit(&screened);
    let set = pre.encode(&screened).map_err(CliError::Validation)?;
    let mut manifest = RunManifest::new("ingest", cfg);
    manifest.inputs.push(dir.display().to_string());
    manifest
        .outputs
        .extend(out.map(|p| p.display().to_string()));
    let report = IngestReport {
        manifest,
        n_read: raw.len(),
        n_retained: screened.len(),
        n_windows: set.len(),
        n_positive_windows: set.n_positive(),
        cohort: screened.manifest(),
    };
    match out {
        Some(p) => write_json(p, &report),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(CliError::runtime)?
            );
            Ok(())
        }
    }
}

/// Forward fills each column, then scores the four systems wherever their
/// input has been observed; earlier hours are left blank.
fn sofa_score(input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let schema = FeatureSchema::standard();
    let text = std::fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
    let id = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = parse_psv(&text, &schema, &id)
        .map_err(CliError::validation)?
        .series;
    let col = |name: &'static str| {
        schema
            .index_of(name)
            .ok_or_else(|| CliError::Validation(format!("schema lacks {name}")))
    };
    let cols = [
        col(columns::PLATELETS)?,
        col(columns::BILIRUBIN)?,
        col(columns::MAP)?,
        col(columns::CREATININE)?,
    ];
    let mut last: [Option<f64>; 4] = [None; 4];
    let mut csv = String::from("hour,coag,liver,cardio,renal\n");
    for hour in 0..series.m() {
        let row = series.row(hour);
        for (slot, &j) in last.iter_mut().zip(&cols) {
            if let Some(v) = row[j] {
                *slot = Some(v);
            }
        }
        let bad = |e: sofanet::sofa::SofaError| CliError::Validation(format!("hour {hour}: {e}"));
        let scores = [
            last[0].map(score_coagulation).transpose().map_err(bad)?,
            last[1].map(score_liver).transpose().map_err(bad)?,
            last[2]
                .map(|m| score_cardiovascular(m, None))
                .transpose()
                .map_err(bad)?,
            last[3]
                .map(|c| score_renal(c, None))
                .transpose()
                .map_err(bad)?,
        ];
        csv.push_str(&hour.to_string());
        for s in scores {
            csv.push(',');
            if let Some(s) = s {
                csv.push_str(&s.to_string());
            }
        }
        csv.push('\n');
    }
    match out {
        Some(p) => write_text(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn sidecar(
    cfg: &RunConfig,
    kind: ModelKind,
    cohort: &Cohort,
    pre: Preprocessor,
    round: usize,
) -> Sidecar {
    Sidecar {
        kind,
        model: cfg.model.model_config(cohort.schema.len()),
        seed: cfg.train.seed,
        round,
        config_hash: cfg.config_hash(),
        schema_hash: cohort.schema.schema_hash().to_string(),
        preprocessor: pre,
    }
}

fn train_local_cmd(
    cfg: &RunConfig,
    kind: ModelKind,
    dir: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let cohort = load_cohort(dir, cfg)?;
    let pre = Preprocessor::fit(&cohort);
    let set = pre.encode(&cohort).map_err(CliError::Validation)?;
    let base = cfg.model.model_config(cohort.schema.len());
    let (params, history) = match kind.net_config(base) {
        Some(mc) => {
            let net = SofaNet::new(mc).map_err(CliError::validation)?;
            train_local(&net, &cfg.train, &set).map_err(CliError::runtime)?
        }
        None => {
            let data = FlatData::from_set(&set);
            if kind == ModelKind::Lr {
                let (m, h) = train_lr(&data, &cfg.train).map_err(CliError::runtime)?;
                (m.params, h)
            } else {
                let (m, h) =
                    train_nn(&data, &cfg.train, base.hidden_dim).map_err(CliError::runtime)?;
                (m.params, h)
            }
        }
    };
    Checkpoint {
        sidecar: sidecar(cfg, kind, &cohort, pre, cfg.train.rounds),
        params,
    }
    .save(out)?;
    write_json(&out.join("history.json"), &history)?;
    log::info!(
        "trained {} on {} windows; final loss {:.4}",
        kind.name(),
        set.len(),
        history.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn finetune_cmd(cfg: &RunConfig, source: &Path, target: &Path, out: &Path) -> Result<(), CliError> {
    let src = load_cohort(source, cfg)?;
    let tgt = load_cohort(target, cfg)?;
    let src_set = Preprocessor::fit(&src)
        .encode(&src)
        .map_err(CliError::Validation)?;
    let tgt_pre = Preprocessor::fit(&tgt);
    let tgt_set = tgt_pre.encode(&tgt).map_err(CliError::Validation)?;
    let net =
        SofaNet::new(cfg.model.model_config(tgt.schema.len())).map_err(CliError::validation)?;
    let (params, history) =
        finetune(&net, &cfg.train, &src_set, &tgt_set).map_err(CliError::runtime)?;
    Checkpoint {
        sidecar: sidecar(cfg, ModelKind::Sofanet, &tgt, tgt_pre, 2 * cfg.train.rounds),
        params,
    }
    .save(out)?;
    write_json(&out.join("history.json"), &history)
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    run_id: &'a str,
    seed: u64,
    model: &'static str,
    cohort: String,
    #[serde(flatten)]
    metrics: MetricReport,
}

fn evaluate_cmd(
    ckpt_dir: &Path,
    cohort_dir: &Path,
    csv: Option<&Path>,
    run_id: Option<String>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(ckpt_dir)?;
    let cohort =
        read_cohort_dir(cohort_dir, &FeatureSchema::standard()).map_err(CliError::validation)?;
    if cohort.schema.schema_hash() != ckpt.sidecar.schema_hash {
        return Err(CliError::Validation(
            "cohort schema differs from the checkpoint's".into(),
        ));
    }
    let set = ckpt
        .sidecar
        .preprocessor
        .encode(&cohort)
        .map_err(CliError::Validation)?;
    let scores = ckpt.score(&set)?;
    let scored = ScoredSet::new(scores, set.sepsis.clone()).map_err(CliError::runtime)?;
    let metrics = evaluate_scores(&scored).map_err(CliError::validation)?;
    let run_id = run_id.unwrap_or_else(|| ckpt_dir.display().to_string());
    let record = EvalRecord {
        run_id: &run_id,
        seed: ckpt.sidecar.seed,
        model: ckpt.sidecar.kind.name(),
        cohort: cohort_dir.display().to_string(),
        metrics,
    };
    let json = serde_json::to_string(&record).map_err(CliError::runtime)?;
    println!("{json}");
    if let Some(p) = out {
        write_json(p, &record)?;
    }
    if let Some(p) = csv {
        append_csv(p, &record)?;
    }
    Ok(())
}

fn append_csv(path: &Path, r: &EvalRecord) -> Result<(), CliError> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    let mut text = String::new();
    if fresh {
        text.push_str("run_id,seed,model,cohort,auroc,auprc,min_se_pplus,n,n_pos\n");
    }
    let m = &r.metrics;
    text.push_str(&format!(
        "{},{},{},{},{},{},{},{},{}\n",
        r.run_id, r.seed, r.model, r.cohort, m.auroc, m.auprc, m.min_se_pplus, m.n, m.n_pos
    ));
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

fn suite(
    mut cfg: RunConfig,
    dirs: Option<(PathBuf, PathBuf)>,
    arms: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    out: &Path,
) -> Result<(), CliError> {
    if let Some(seeds) = seeds {
        cfg.experiment.seeds = seeds;
    }
    cfg.validate().map_err(CliError::validation)?;
    let arms: Vec<Arm> = match arms {
        None => Arm::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| Arm::parse(n).ok_or_else(|| CliError::Validation(format!("unknown arm {n}"))))
            .collect::<Result<_, _>>()?,
    };
    let mut manifest = RunManifest::new("experiment-suite", &cfg);
    let exp = &cfg.experiment;
    let (source, target) = match &dirs {
        Some((s, t)) => {
            manifest.inputs = vec![s.display().to_string(), t.display().to_string()];
            (load_cohort(s, &cfg)?, load_cohort(t, &cfg)?)
        }
        None => {
            let gen = |p: Profile, seed: u64| {
                generate_cohort(&p.config(exp.n_patients, seed)).map_err(CliError::validation)
            };
            manifest.inputs = vec![
                format!(
                    "synthetic:{}:n={}:seed={}",
                    Profile::MimicLike.name(),
                    exp.n_patients,
                    exp.source_seed
                ),
                format!(
                    "synthetic:{}:n={}:seed={}",
                    Profile::ChallengeLike.name(),
                    exp.n_patients,
                    exp.target_seed
                ),
            ];
            (
                gen(Profile::MimicLike, exp.source_seed)?,
                gen(Profile::ChallengeLike, exp.target_seed)?,
            )
        }
    };
    let report = run_suite(&cfg, &arms, &source, &target).map_err(CliError::runtime)?;

    let files = [
        ("runs.csv", report.runs_csv()),
        ("table2.csv", report.table_csv()),
        ("figure2.csv", report.figure_csv()),
        ("summary.csv", report.summary_csv()),
    ];
    manifest.outputs = files
        .iter()
        .map(|(name, _)| name.to_string())
        .chain(["manifest.json".to_string(), "report.json".to_string()])
        .collect();
    let header = format!(
        "# manifest {}\n",
        serde_json::to_string(&manifest).map_err(CliError::runtime)?
    );
    for (name, body) in &files {
        write_text(&out.join(name), &format!("{header}{body}"))?;
    }
    write_json(&out.join("manifest.json"), &manifest)?;
    write_json(
        &out.join("report.json"),
        &serde_json::json!({ "manifest": manifest, "config": cfg, "report": report }),
    )?;
    print!("{}", report.summary_csv());
    Ok(())
}
