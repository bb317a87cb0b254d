use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sofanet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sofanet"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_config(dir: &Path) -> String {
    let cfg = dir.join("tiny.toml");
    fs::write(
        &cfg,
        "[model]\nhidden_dim = 2\n[train]\nbatch_size = 16\nrounds = 20\nseed = 4\n[transport]\nkind = \"in-process\"\n",
    )
    .unwrap();
    cfg.to_str().unwrap().to_string()
}

fn gen(dir: &Path, name: &str, profile: &str, n: &str, seed: &str) -> String {
    let out = dir.join(name);
    let o = sofanet(&[
        "gen-synth",
        "--profile",
        profile,
        "--n",
        n,
        "--seed",
        seed,
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.to_str().unwrap().to_string()
}

#[test]
fn gen_synth_then_ingest_reports_the_cohort() {
    let tmp = TempDir::new().unwrap();
    let cohort = gen(tmp.path(), "c", "mimic-like", "12", "5");
    let psv = fs::read_dir(&cohort)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "psv")
        })
        .count();
    assert_eq!(psv, 12);
    let o = sofanet(&["ingest", "--cohort", &cohort]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["n_read"], 12);
    assert!(report["n_windows"].as_u64().unwrap() > 0);
}

#[test]
fn gen_synth_is_reproducible_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    let a = gen(tmp.path(), "a", "challenge-like", "5", "9");
    let b = gen(tmp.path(), "b", "challenge-like", "5", "9");
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        assert_eq!(
            fs::read(Path::new(&a).join(&name)).unwrap(),
            fs::read(Path::new(&b).join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn sofa_score_blanks_hours_before_the_first_observation() {
    let tmp = TempDir::new().unwrap();
    let schema = [
        "Age",
        "Gender",
        "ICU_hours",
        "HR",
        "Temp",
        "SBP",
        "MAP",
        "DBP",
        "Resp",
        "FiO2",
        "SaO2",
        "pH",
        "AST",
        "BUN",
        "Calcium",
        "Chloride",
        "Creatinine",
        "Glucose",
        "Potassium",
        "TotalBilirubin",
        "Hct",
        "Hgb",
        "PTT",
        "WBC",
        "Platelets",
        "BUN_CR",
        "SaO2_FiO2",
    ];
    let mut text = schema.join("|");
    text.push_str("|SepsisLabel\n");
    let row = |map: &str, creat: &str, bili: &str, plt: &str| {
        schema
            .iter()
            .map(|c| match *c {
                "MAP" => map,
                "Creatinine" => creat,
                "TotalBilirubin" => bili,
                "Platelets" => plt,
                _ => "NaN",
            })
            .collect::<Vec<_>>()
            .join("|")
            + "|0\n"
    };
    text.push_str(&row("NaN", "NaN", "NaN", "NaN"));
    text.push_str(&row("65", "2.5", "NaN", "120"));
    text.push_str(&row("NaN", "NaN", "13", "NaN"));
    let input = tmp.path().join("p1.psv");
    fs::write(&input, text).unwrap();
    let o = sofanet(&["sofa-score", "--input", path(&input)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        "hour,coag,liver,cardio,renal\n0,,,,\n1,1,,1,2\n2,1,4,1,2\n"
    );
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[train]\nrounds = \"many\"\n").unwrap();
    let o = sofanet(&[
        "--config",
        path(&bad),
        "ingest",
        "--cohort",
        path(tmp.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));

    let o = sofanet(&["gen-synth", "--profile", "mimic-like", "--n", "3"]);
    assert_eq!(o.status.code(), Some(2), "missing --out");

    let o = sofanet(&["ingest", "--cohort", path(&tmp.path().join("absent"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_local_then_evaluate_appends_csv_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path());
    let train = gen(tmp.path(), "train", "mimic-like", "30", "1");
    let test = gen(tmp.path(), "test", "mimic-like", "30", "2");
    let csv = tmp.path().join("results.csv");
    for model in ["lr", "nn", "gru", "sofanet"] {
        let ckpt = tmp.path().join(format!("ckpt-{model}"));
        let o = sofanet(&[
            "--config",
            &cfg,
            "--out",
            path(&ckpt),
            "train-local",
            "--model",
            model,
            "--cohort",
            &train,
        ]);
        assert!(
            o.status.success(),
            "{model}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let o = sofanet(&[
            "evaluate",
            "--checkpoint",
            path(&ckpt),
            "--cohort",
            &test,
            "--csv",
            path(&csv),
        ]);
        assert!(
            o.status.success(),
            "{model}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let record: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        let auroc = record["auroc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auroc), "{model}: {auroc}");
        assert_eq!(record["model"], model);
    }
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("run_id,seed,model,cohort,auroc,auprc,min_se_pplus,n,n_pos\n"));
}

#[test]
fn finetune_and_in_process_collab_write_checkpoints() {
    let tmp = TempDir::new().unwrap();
    let cfg = tiny_config(tmp.path());
    let a = gen(tmp.path(), "a", "mimic-like", "20", "1");
    let b = gen(tmp.path(), "b", "challenge-like", "20", "2");

    let ft = tmp.path().join("ft");
    let o = sofanet(&[
        "--config",
        &cfg,
        "--out",
        path(&ft),
        "finetune",
        "--source",
        &a,
        "--target",
        &b,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ft.join("params.bin").exists());

    let collab = tmp.path().join("collab");
    let tap = tmp.path().join("tap.bin");
    let o = sofanet(&[
        "--config",
        &cfg,
        "--out",
        path(&collab),
        "train-collab",
        "--cohort",
        &a,
        "--peer-cohort",
        &b,
        "--tap",
        path(&tap),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(collab.join("checkpoint-a/params.bin")).unwrap(),
        fs::read(collab.join("checkpoint-b/params.bin")).unwrap()
    );
    let audit: serde_json::Value =
        serde_json::from_slice(&fs::read(collab.join("audit.json")).unwrap()).unwrap();
    assert!(audit["findings"].as_array().unwrap().is_empty());
    assert!(fs::metadata(&tap).unwrap().len() > 0);
}

#[test]
fn train_collab_without_a_peer_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let a = gen(tmp.path(), "a", "mimic-like", "10", "1");
    let o = sofanet(&[
        "--out",
        path(&tmp.path().join("o")),
        "train-collab",
        "--cohort",
        &a,
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = sofanet(&[
        "--out",
        path(&tmp.path().join("o")),
        "train-collab",
        "--role",
        "a",
        "--cohort",
        &a,
    ]);
    assert_eq!(o.status.code(), Some(2));
}
