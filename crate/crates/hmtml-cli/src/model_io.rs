//! Plain-text model persistence.
//!
//! First line `HMTML v1 M r`, then for each domain a line `m d_m` followed
//! by `d_m` rows of `r` space-separated values. Values use 17 significant
//! digits so the decimal round-trip is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ndarray::Array2;

pub fn save_model(path: &Path, factors: &[Array2<f64>]) -> Result<()> {
    if factors.is_empty() {
        bail!("save_model: no factor matrices");
    }
    let r = factors[0].ncols();
    if factors.iter().any(|f| f.ncols() != r) {
        bail!("save_model: inconsistent ranks");
    }
    let mut out = String::new();
    writeln!(out, "HMTML v1 {} {}", factors.len(), r)?;
    for (m, f) in factors.iter().enumerate() {
        writeln!(out, "{} {}", m, f.nrows())?;
        for i in 0..f.nrows() {
            let row: Vec<String> = f.row(i).iter().map(|v| format!("{:.16e}", v)).collect();
            writeln!(out, "{}", row.join(" "))?;
        }
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Vec<Array2<f64>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().context("model file is empty")?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "HMTML" || parts[1] != "v1" {
        bail!("{}: bad header {:?}", path.display(), header);
    }
    let m_total: usize = parts[2].parse().context("domain count")?;
    let r: usize = parts[3].parse().context("rank")?;
    let mut factors = Vec::with_capacity(m_total);
    for m in 0..m_total {
        let (lineno, head) = lines
            .next()
            .with_context(|| format!("missing header for domain {}", m))?;
        let hp: Vec<&str> = head.split_whitespace().collect();
        if hp.len() != 2 || hp[0].parse::<usize>().ok() != Some(m) {
            bail!("{} line {}: bad domain header {:?}", path.display(), lineno + 1, head);
        }
        let d: usize = hp[1].parse().context("domain dimension")?;
        let mut f = Array2::<f64>::zeros((d, r));
        for i in 0..d {
            let (lineno, row) = lines
                .next()
                .with_context(|| format!("domain {}: missing row {}", m, i))?;
            let vals: Vec<&str> = row.split_whitespace().collect();
            if vals.len() != r {
                bail!(
                    "{} line {}: expected {} values, got {}",
                    path.display(),
                    lineno + 1,
                    r,
                    vals.len()
                );
            }
            for (j, v) in vals.iter().enumerate() {
                f[[i, j]] = v.parse().with_context(|| {
                    format!("{} line {}: bad number {:?}", path.display(), lineno + 1, v)
                })?;
            }
        }
        factors.push(f);
    }
    if lines.next().is_some() {
        bail!("{}: trailing content after model data", path.display());
    }
    Ok(factors)
}
