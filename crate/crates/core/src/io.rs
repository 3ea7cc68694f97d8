//! File formats.
//!
//! * Datasets are JSON Lines: a header object, then one query group per line.
//! * Models and training histories are pretty-printed JSON.
//! * Simulation and training configs are TOML (JSON when the path ends in
//!   `.json`).
//!
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so weights and features survive a write/read cycle bit for bit.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, QueryGroup};
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::simulator::SimConfig;
use crate::trainer::{TrainConfig, Variant};

pub const DATASET_FORMAT: &str = "localrank-dataset";
pub const MODEL_FORMAT: &str = "localrank-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub feature_dim: usize,
    pub feature_names: Vec<String>,
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("dataset records serialize")
}

/// Canonical JSON Lines text of a dataset.
pub fn dataset_to_string(dataset: &Dataset) -> String {
    let header = DatasetHeader {
        format: DATASET_FORMAT.to_owned(),
        version: FORMAT_VERSION,
        feature_dim: dataset.feature_dim,
        feature_names: dataset.feature_names.clone(),
    };
    let mut out = to_line(&header);
    out.push('\n');
    for q in &dataset.queries {
        out.push_str(&to_line(q));
        out.push('\n');
    }
    out
}

/// SHA-256 (hex) of the canonical serialization.
pub fn dataset_digest(dataset: &Dataset) -> String {
    hex::encode(Sha256::digest(dataset_to_string(dataset).as_bytes()))
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(dataset_to_string(dataset).as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        reason: reason.into(),
    }
}

/// Reads a dataset and rejects it unless every invariant holds.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file), path)
}

/// Parses JSON Lines dataset text; `path` is only used in error messages.
pub fn parse_dataset(reader: impl BufRead, path: &Path) -> Result<Dataset> {
    let mut lines = reader.lines();
    let header_line = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(parse_err(path, 1, "missing header line")),
    };
    let header: DatasetHeader = serde_json::from_str(&header_line)
        .map_err(|e| parse_err(path, 1, format!("header: {e}")))?;
    if header.format != DATASET_FORMAT {
        return Err(parse_err(
            path,
            1,
            format!("unexpected format `{}`", header.format),
        ));
    }
    if header.version != FORMAT_VERSION {
        return Err(parse_err(
            path,
            1,
            format!("unsupported version {}", header.version),
        ));
    }
    if header.feature_names.len() != header.feature_dim {
        return Err(parse_err(
            path,
            1,
            format!(
                "feature_dim {} but {} feature names",
                header.feature_dim,
                header.feature_names.len()
            ),
        ));
    }

    let mut queries = Vec::new();
    let mut line_of = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let group: QueryGroup =
            serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e.to_string()))?;
        for item in &group.items {
            if item.features.len() != header.feature_dim {
                return Err(parse_err(
                    path,
                    lineno,
                    format!(
                        "item {}: {} features, header declares {}",
                        item.item_id,
                        item.features.len(),
                        header.feature_dim
                    ),
                ));
            }
        }
        line_of.push((group.qid.clone(), lineno));
        queries.push(group);
    }
    let dataset = Dataset {
        feature_dim: header.feature_dim,
        feature_names: header.feature_names,
        queries,
    };
    let violations = dataset.validate();
    if !violations.is_empty() {
        let described = violations
            .iter()
            .map(|v| {
                let line = v
                    .qid
                    .as_ref()
                    .and_then(|q| line_of.iter().find(|(id, _)| id == q))
                    .map(|(_, l)| *l);
                match line {
                    Some(l) => format!("{}:{l}: {v}", path.display()),
                    None => format!("{}: {v}", path.display()),
                }
            })
            .collect();
        return Err(Error::InvalidDataset(described));
    }
    Ok(dataset)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub dataset_digest: Option<String>,
}

/// On-disk model: weights plus the config and data it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub variant: Option<Variant>,
    pub train_config: Option<TrainConfig>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn new(model: &LinearModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_owned(),
            version: FORMAT_VERSION,
            feature_names: model.feature_names().to_vec(),
            weights: model.weights().to_vec(),
            variant: None,
            train_config: None,
            provenance: Provenance::default(),
        }
    }

    pub fn model(&self) -> Result<LinearModel> {
        LinearModel::new(self.weights.clone(), self.feature_names.clone())
    }
}

pub fn model_to_string(file: &ModelFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("model serializes");
    s.push('\n');
    s
}

pub fn write_model(file: &ModelFile, path: impl AsRef<Path>) -> Result<()> {
    write_text(path, &model_to_string(file))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    if file.format != MODEL_FORMAT {
        return Err(parse_err(
            path,
            1,
            format!("unexpected format `{}`", file.format),
        ));
    }
    if file.version != FORMAT_VERSION {
        return Err(parse_err(
            path,
            1,
            format!("unsupported version {}", file.version),
        ));
    }
    file.model()?;
    Ok(file)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_text(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if is_json(path) {
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |span| text[..span.start].matches('\n').count() + 1);
            parse_err(path, line, e.message().to_owned())
        })
    }
}

fn write_config<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if is_json(path) {
        write_json(path, value)
    } else {
        write_text(
            path,
            &toml::to_string(value).expect("config serializes to TOML"),
        )
    }
}

pub fn read_train_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let config: TrainConfig = read_config(path.as_ref())?;
    config.validate()?;
    Ok(config)
}

pub fn write_train_config(config: &TrainConfig, path: impl AsRef<Path>) -> Result<()> {
    write_config(config, path.as_ref())
}

pub fn read_sim_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let config: SimConfig = read_config(path.as_ref())?;
    config.validate()?;
    Ok(config)
}

pub fn write_sim_config(config: &SimConfig, path: impl AsRef<Path>) -> Result<()> {
    write_config(config, path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Regions;

    const HEADER: &str =
        r#"{"format":"localrank-dataset","version":1,"feature_dim":2,"feature_names":["a","b"]}"#;

    fn parse(text: &str) -> Result<Dataset> {
        parse_dataset(text.as_bytes(), Path::new("mem.jsonl"))
    }

    #[test]
    fn missing_regions_are_unknown() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"qid":"q1","locale":"JP","bucket":"head","items":[{"item_id":"a","features":[1.0,2.0],"clicked":true},{"item_id":"b","features":[0.5,-1],"clicked":false,"eligible_regions":[]}]}"#
        );
        let ds = parse(&text).unwrap();
        assert_eq!(ds.queries[0].items[0].eligible_regions, Regions::Unknown);
        assert_eq!(
            ds.queries[0].items[1].eligible_regions,
            Regions::known(Vec::<String>::new())
        );
        assert_eq!(ds.queries[0].items[0].graded_label, None);
    }

    #[test]
    fn truncated_line_is_named() {
        let good = r#"{"qid":"q1","locale":null,"bucket":"tail","items":[{"item_id":"a","features":[1.0,2.0],"clicked":true}]}"#;
        let text = format!("{HEADER}\n{good}\n{}", &good[..40]);
        match parse(&text) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_and_missing_fields() {
        let short = r#"{"qid":"q1","locale":null,"bucket":"tail","items":[{"item_id":"a","features":[1.0],"clicked":true}]}"#;
        let err = parse(&format!("{HEADER}\n{short}\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let no_click = r#"{"qid":"q1","locale":null,"bucket":"tail","items":[{"item_id":"a","features":[1.0,2.0]}]}"#;
        let err = parse(&format!("{HEADER}\n{no_click}\n")).unwrap_err();
        assert!(err.to_string().contains("clicked"), "{err}");
        assert!(parse("").is_err());
    }

    #[test]
    fn invalid_records_report_lines() {
        let bad = r#"{"qid":"q1","locale":null,"bucket":"tail","items":[{"item_id":"a","features":[1.0,2.0],"clicked":true,"graded_label":7}]}"#;
        match parse(&format!("{HEADER}\n{bad}\n")) {
            Err(Error::InvalidDataset(v)) => assert!(v[0].contains("mem.jsonl:2"), "{v:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_lambdas_rejected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.toml");
        write_text(&path, "lambda_rank = 0.0\nlambda_list = 0.0\n").unwrap();
        assert!(matches!(
            read_train_config(&path),
            Err(Error::InvalidConfig { .. })
        ));
        write_text(&path, "lambda_rnak = 1.0\n").unwrap();
        assert!(read_train_config(&path).is_err());
    }

    #[test]
    fn io_errors_carry_path() {
        let err = read_dataset("/nonexistent/x.jsonl").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.jsonl"));
    }
}
