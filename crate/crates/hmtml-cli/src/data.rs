//! CSV ingestion and emission of per-domain datasets.
//!
//! Format: header row `label,f1,...,fd`, one file per domain. The label
//! column is a string; the sorted set of distinct labels maps to class ids
//! 1..C, and that set must be identical across all domains of an experiment.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hmtml::DomainData;
use ndarray::Array2;

struct RawDomain {
    labels: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn load_raw(path: &Path) -> Result<RawDomain> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = reader.headers()?.clone();
    if header.is_empty() || header.get(0) != Some("label") {
        bail!("{}: first header column must be 'label'", path.display());
    }
    let d = header.len() - 1;
    if d == 0 {
        bail!("{}: no feature columns", path.display());
    }
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record.with_context(|| format!("{} line {}", path.display(), line))?;
        if record.len() != d + 1 {
            bail!(
                "{} line {}: expected {} columns, got {}",
                path.display(),
                line,
                d + 1,
                record.len()
            );
        }
        labels.push(record[0].to_string());
        let mut row = Vec::with_capacity(d);
        for j in 1..=d {
            let v: f64 = record[j].parse().with_context(|| {
                format!("{} line {} column {}: not a number", path.display(), line, j + 1)
            })?;
            if !v.is_finite() {
                bail!(
                    "{} line {} column {}: non-finite value",
                    path.display(),
                    line,
                    j + 1
                );
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(RawDomain { labels, rows })
}

/// Loads one CSV per domain. Returns the domains plus the shared label
/// vocabulary in sorted order (vocabulary index + 1 = class id).
pub fn load_domains<P: AsRef<Path>>(paths: &[P]) -> Result<(Vec<DomainData>, Vec<String>)> {
    if paths.is_empty() {
        bail!("no domain files given");
    }
    let raws: Vec<(String, RawDomain)> = paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            Ok((p.display().to_string(), load_raw(p)?))
        })
        .collect::<Result<_>>()?;

    let vocab: Vec<String> = raws[0]
        .1
        .labels
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for (name, raw) in &raws {
        let set: BTreeSet<&String> = raw.labels.iter().collect();
        let this: Vec<&String> = set.into_iter().collect();
        if this.len() != vocab.len() || this.iter().zip(&vocab).any(|(a, b)| *a != b) {
            bail!(
                "{}: label set {:?} differs from {:?}; all domains must share one label set",
                name,
                this,
                vocab
            );
        }
    }

    let mut domains = Vec::with_capacity(raws.len());
    for (m, (name, raw)) in raws.into_iter().enumerate() {
        let n = raw.rows.len();
        let d = raw.rows[0].len();
        let mut samples = Array2::<f64>::zeros((n, d));
        for (i, row) in raw.rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                samples[[i, j]] = v;
            }
        }
        let labels: Vec<usize> = raw
            .labels
            .iter()
            .map(|l| vocab.binary_search(l).expect("label in vocabulary") + 1)
            .collect();
        domains.push(
            DomainData::new(samples, labels, m)
                .with_context(|| format!("{}: invalid domain data", name))?,
        );
    }
    Ok((domains, vocab))
}

/// Writes a domain back out. Class ids are rendered as zero-padded strings
/// (`c0001`, ...) so that lexicographic label order matches class-id order
/// and a reload reproduces the same ids.
pub fn save_domain(path: &Path, data: &DomainData) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let d = data.dim();
    let mut header = vec!["label".to_string()];
    header.extend((1..=d).map(|j| format!("f{}", j)));
    writer.write_record(&header)?;
    for i in 0..data.num_samples() {
        let mut record = vec![format!("c{:04}", data.labels[i])];
        record.extend(data.samples.row(i).iter().map(|v| format!("{:.17e}", v)));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
