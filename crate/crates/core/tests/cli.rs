use std::path::Path;
use std::process::{Command, Output};

use localrank::io::{self, ModelFile};
use localrank::simulator::SimConfig;
use localrank::{Dataset, LinearModel};

fn localrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_localrank"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = localrank(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY_SIM: &str = r#"
seed = 5
list_size = 10
locales = [
  { code = "US", query_count = 40, template_count = 120 },
  { code = "JP", query_count = 21, template_count = 40 },
  { code = "FR", query_count = 19, template_count = 40 },
  { code = "DE", query_count = 20, template_count = 40 },
  { code = "GB", query_count = 20, template_count = 40 },
]
"#;

fn simulate_tiny(dir: &Path, extra: &str) -> std::path::PathBuf {
    let config = dir.join("sim.toml");
    std::fs::write(&config, format!("{TINY_SIM}\n{extra}")).unwrap();
    let out = dir.join("sim");
    ok(&["simulate", "--config", s(&config), "--out", s(&out)]);
    out
}

#[test]
fn help_documents_config_fields_and_defaults() {
    let help = ok(&["--help"]);
    for field in [
        "lambda_rank",
        "warmup_epochs",
        "per_locale_eta",
        "exposure_tilt",
        "position_bias_exponent",
    ] {
        assert!(help.contains(field), "{field} missing from --help");
    }
    assert!(help.contains("[0.1]"), "learning-rate default missing");
    let train_help = ok(&["train", "--help"]);
    assert!(train_help.contains("eta") && train_help.contains("[2.0]"));
    let sim_help = ok(&["simulate", "--help"]);
    assert!(sim_help.contains("sessions_per_query") && sim_help.contains("[3]"));
}

#[test]
fn simulate_writes_five_locales_and_an_exact_split() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_tiny(tmp.path(), "");
    let train = io::read_dataset(sim.join("train.jsonl")).unwrap();
    let eval = io::read_dataset(sim.join("eval.jsonl")).unwrap();
    let config: SimConfig = io::read_sim_config(tmp.path().join("sim.toml")).unwrap();
    for spec in &config.locales {
        let count = |ds: &Dataset| {
            ds.queries
                .iter()
                .filter(|q| q.locale.as_deref() == Some(spec.code.as_str()))
                .count()
        };
        let (t, e) = (count(&train), count(&eval));
        assert_eq!(t + e, spec.query_count);
        let target = 0.8 * spec.query_count as f64;
        assert!(
            (t as f64 - target).abs() <= 1.0,
            "{}: {t} vs {target}",
            spec.code
        );
    }

    let again = tmp.path().join("again");
    ok(&[
        "simulate",
        "--config",
        s(&tmp.path().join("sim.toml")),
        "--out",
        s(&again),
    ]);
    assert_eq!(
        std::fs::read(sim.join("manifest.json")).unwrap(),
        std::fs::read(again.join("manifest.json")).unwrap()
    );

    let reseeded = tmp.path().join("reseeded");
    ok(&[
        "simulate",
        "--config",
        s(&tmp.path().join("sim.toml")),
        "--out",
        s(&reseeded),
        "--seed",
        "6",
    ]);
    assert_ne!(
        std::fs::read(sim.join("train.jsonl")).unwrap(),
        std::fs::read(reseeded.join("train.jsonl")).unwrap()
    );
}

#[test]
fn train_evaluate_compare_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_tiny(tmp.path(), "");
    let train = sim.join("train.jsonl");
    let eval = sim.join("eval.jsonl");
    let models = tmp.path().join("models");
    for v in ["prod", "mo", "la-mo"] {
        let stdout = ok(&[
            "train",
            "--dataset",
            s(&train),
            "--variant",
            v,
            "--epochs",
            "15",
            "--out",
            s(&models.join(format!("{v}.json"))),
        ]);
        assert!(stdout.lines().next().unwrap().contains("combined"));
        assert_eq!(
            stdout
                .lines()
                .filter(|l| l.trim_start().starts_with(char::is_numeric))
                .count(),
            15
        );
        assert!(models.join(format!("{v}.history.json")).exists());
    }
    let file = io::read_model(models.join("prod.json")).unwrap();
    assert_eq!(file.variant.map(|v| v.as_str()), Some("prod"));
    assert_eq!(file.weights[0], 0.0);
    let ds = io::read_dataset(&train).unwrap();
    assert_eq!(
        file.provenance.dataset_digest,
        Some(io::dataset_digest(&ds))
    );

    let report_dir = tmp.path().join("report");
    let text = ok(&[
        "evaluate",
        "--dataset",
        s(&eval),
        "--model",
        s(&models.join("la-mo.json")),
        "--k",
        "5,20",
        "--out",
        s(&report_dir),
    ]);
    assert!(text.contains("Region match rate"));
    assert!(text.contains("NDCG@20"));
    assert_eq!(
        std::fs::read_to_string(report_dir.join("report.txt")).unwrap(),
        text
    );

    let table = ok(&[
        "compare",
        "--dataset",
        s(&eval),
        "--model",
        s(&models.join("prod.json")),
        "--model",
        s(&models.join("la-mo.json")),
        "--metric",
        "local",
        "--k",
        "5",
        "--alpha",
        "0.05",
    ]);
    for locale in ["US", "JP", "FR", "DE", "GB"] {
        assert!(
            table.lines().any(|l| l.starts_with(locale)),
            "{locale} row missing\n{table}"
        );
    }
    assert!(table.contains("Significance levels"));

    let inspect = ok(&[
        "inspect-weights",
        "--model",
        s(&models.join("mo.json")),
        "--dataset",
        s(&train),
    ]);
    assert!(inspect.contains("semantic_similarity ranks"));
    assert!(inspect
        .lines()
        .any(|l| l.contains("semantic_similarity") && l.ends_with("<-")));
}

#[test]
fn zero_model_inspects_to_all_zero_table() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_tiny(tmp.path(), "");
    let ds = io::read_dataset(sim.join("train.jsonl")).unwrap();
    let model_path = tmp.path().join("zero.json");
    io::write_model(
        &ModelFile::new(&LinearModel::zeros(ds.feature_names.clone())),
        &model_path,
    )
    .unwrap();
    let out = ok(&[
        "inspect-weights",
        "--model",
        s(&model_path),
        "--dataset",
        s(&sim.join("train.jsonl")),
    ]);
    let rows: Vec<&str> = out.lines().skip(1).take(ds.feature_dim).collect();
    assert_eq!(rows.len(), ds.feature_dim);
    for row in rows {
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0, "{row}");
        assert_eq!(cols[4].parse::<f64>().unwrap(), 0.0, "{row}");
    }
}

#[test]
fn mismatched_feature_names_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_tiny(tmp.path(), "");
    let ds = io::read_dataset(sim.join("train.jsonl")).unwrap();
    let mut names = ds.feature_names.clone();
    names.swap(0, 1);
    let model_path = tmp.path().join("swapped.json");
    io::write_model(&ModelFile::new(&LinearModel::zeros(names)), &model_path).unwrap();
    let out = localrank(&[
        "inspect-weights",
        "--model",
        s(&model_path),
        "--dataset",
        s(&sim.join("train.jsonl")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("feature names differ"));
    let out = localrank(&[
        "evaluate",
        "--model",
        s(&model_path),
        "--dataset",
        s(&sim.join("eval.jsonl")),
    ]);
    assert!(!out.status.success());
}

#[test]
fn unknown_variant_is_a_usage_error() {
    let out = localrank(&[
        "train",
        "--dataset",
        "x.jsonl",
        "--variant",
        "lamo",
        "--out",
        "m.json",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown variant"));
}

#[test]
fn withheld_labels_warn_with_fallback_count() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_tiny(tmp.path(), "label_withhold_fraction = 1.0");
    let out = localrank(&[
        "train",
        "--dataset",
        s(&sim.join("train.jsonl")),
        "--variant",
        "mo",
        "--epochs",
        "3",
        "--out",
        s(&tmp.path().join("mo.json")),
    ]);
    assert!(out.status.success());
    let n = io::read_dataset(sim.join("train.jsonl"))
        .unwrap()
        .queries
        .len();
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains(&format!("warning: {n} of {n} queries")),
        "{stderr}"
    );
}

#[test]
fn divergence_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = simulate_tiny(tmp.path(), "");
    let model = tmp.path().join("boom.json");
    let out = localrank(&[
        "train",
        "--dataset",
        s(&sim.join("train.jsonl")),
        "--variant",
        "mo",
        "--learning-rate",
        "1e308",
        "--epochs",
        "5",
        "--out",
        s(&model),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
    assert!(!model.exists());
}

#[test]
fn invalid_train_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("train.toml");
    std::fs::write(&config, "lambda_rank = 0.0\nlambda_list = 0.0\n").unwrap();
    let out = localrank(&[
        "train",
        "--dataset",
        "unused.jsonl",
        "--config",
        s(&config),
        "--variant",
        "mo",
        "--out",
        s(&tmp.path().join("m.json")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));
}
