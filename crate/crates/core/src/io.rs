//! Corpus files: a CSV body plus a JSON metadata sidecar.
//!
//! The CSV header is `feat_0,…,feat_{d-1},clean_label,noisy_label,group_id`
//! with the `clean_label` and `group_id` columns omitted when the corpus does
//! not carry them. The sidecar records `K`, `N`, `d` and `n`. Floats are
//! written in Rust's shortest round-trip form, so write → read is lossless
//! and two writes of the same corpus are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{GroupAssignment, LabeledCorpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusMeta {
    #[serde(rename = "K")]
    pub class_count: usize,
    /// Group count; absent when the corpus has no assignment.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub group_count: Option<usize>,
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "n")]
    pub len: usize,
}

/// Sidecar path for a corpus CSV: `train.csv` → `train.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

pub fn write_corpus(corpus: &LabeledCorpus, csv_path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_path(csv_path)?;
    let d = corpus.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("feat_{j}")).collect();
    if corpus.clean_labels().is_some() {
        header.push("clean_label".into());
    }
    header.push("noisy_label".into());
    if corpus.groups().is_some() {
        header.push("group_id".into());
    }
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..corpus.len() {
        record.clear();
        record.extend(corpus.row(i).iter().map(|x| x.to_string()));
        if let Some(clean) = corpus.clean_labels() {
            record.push(clean[i].to_string());
        }
        record.push(corpus.noisy_labels()[i].to_string());
        if let Some(g) = corpus.groups() {
            record.push(g.ids()[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let meta = CorpusMeta {
        class_count: corpus.class_count(),
        group_count: corpus.groups().map(|g| g.group_count()),
        dim: d,
        len: corpus.len(),
    };
    let path = meta_path(csv_path);
    let text = serde_json::to_string_pretty(&meta)? + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_meta(csv_path: &Path) -> Result<CorpusMeta> {
    let path = meta_path(csv_path);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a corpus written by [`write_corpus`]. The result is validated.
pub fn read_corpus(csv_path: &Path) -> Result<LabeledCorpus> {
    let meta = read_meta(csv_path)?;
    let mut r = csv::ReaderBuilder::new().from_path(csv_path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let feat_cols: Vec<usize> = (0..meta.dim)
        .map(|j| {
            col(&format!("feat_{j}"))
                .ok_or_else(|| malformed(csv_path, format!("missing column feat_{j}")))
        })
        .collect::<Result<_>>()?;
    let clean_col = col("clean_label");
    let noisy_col = col("noisy_label")
        .ok_or_else(|| malformed(csv_path, "missing column noisy_label".into()))?;
    let group_col = col("group_id");
    if group_col.is_some() != meta.group_count.is_some() {
        return Err(malformed(
            csv_path,
            "group_id column and sidecar N disagree".into(),
        ));
    }

    let mut features = Vec::with_capacity(meta.len * meta.dim);
    let mut clean = clean_col.map(|_| Vec::with_capacity(meta.len));
    let mut noisy = Vec::with_capacity(meta.len);
    let mut groups = group_col.map(|_| Vec::with_capacity(meta.len));
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        for &c in &feat_cols {
            features.push(parse_field::<f64>(csv_path, &rec, c, row)?);
        }
        if let (Some(c), Some(v)) = (clean_col, clean.as_mut()) {
            v.push(parse_field::<usize>(csv_path, &rec, c, row)?);
        }
        noisy.push(parse_field::<usize>(csv_path, &rec, noisy_col, row)?);
        if let (Some(c), Some(v)) = (group_col, groups.as_mut()) {
            v.push(parse_field::<usize>(csv_path, &rec, c, row)?);
        }
    }
    if noisy.len() != meta.len {
        return Err(Error::LengthMismatch {
            expected: meta.len,
            found: noisy.len(),
        });
    }
    let groups = match (groups, meta.group_count) {
        (Some(ids), Some(n)) => Some(GroupAssignment::new_unchecked(ids, n)),
        _ => None,
    };
    let corpus = LabeledCorpus::new(features, meta.dim, clean, noisy, meta.class_count, groups)?;
    corpus.ensure_valid()?;
    Ok(corpus)
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    col: usize,
    row: usize,
) -> Result<T> {
    let raw = rec
        .get(col)
        .ok_or_else(|| malformed(path, format!("row {row} is short")))?;
    raw.trim().parse().map_err(|_| {
        malformed(
            path,
            format!("row {row}, column {col}: cannot parse {raw:?}"),
        )
    })
}

fn malformed(path: &Path, msg: String) -> Error {
    Error::InvalidParameter(format!("{}: {msg}", path.display()))
}
