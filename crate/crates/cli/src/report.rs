//! CSV output with a fixed column set and byte-stable float formatting.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use boa_core::metrics::QualityScores;

/// Formats with 6 significant digits in plain decimal notation; the same
/// value always produces the same bytes.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0.000000".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exponent = v.abs().log10().floor() as i32;
    let decimals = (5 - exponent).clamp(0, 17) as usize;
    format!("{v:.decimals$}")
}

/// One wide result row: clean scores plus one PSNR/SSIM pair per attack
/// budget, mirroring the per-budget column grouping of the harness.
#[derive(Debug, Clone)]
pub struct CsvRow {
    pub experiment: String,
    pub operator: String,
    pub clean: Option<QualityScores>,
    pub attacked: Vec<Option<QualityScores>>,
    pub alias_ratio: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

/// Writes the header plus rows; `budgets` fixes the attacked column set.
pub fn write_csv(path: &Path, budgets: &[usize], rows: &[CsvRow]) -> Result<()> {
    let mut out = String::new();
    out.push_str("experiment,operator,clean_psnr,clean_ssim");
    for b in budgets {
        out.push_str(&format!(",psnr_{b},ssim_{b}"));
    }
    out.push_str(",alias_ratio\n");
    for row in rows {
        out.push_str(&row.experiment);
        out.push(',');
        out.push_str(&row.operator);
        out.push(',');
        out.push_str(&opt(row.clean.map(|s| s.psnr)));
        out.push(',');
        out.push_str(&opt(row.clean.map(|s| s.ssim)));
        for i in 0..budgets.len() {
            let scores = row.attacked.get(i).copied().flatten();
            out.push(',');
            out.push_str(&opt(scores.map(|s| s.psnr)));
            out.push(',');
            out.push_str(&opt(scores.map(|s| s.ssim)));
        }
        out.push(',');
        out.push_str(&opt(row.alias_ratio));
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    file.write_all(out.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
