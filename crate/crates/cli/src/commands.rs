//! The five subcommands: round-trip, attack, spectrum export, alias audit
//! and gradient check.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use boa_core::attack::{evaluate_under_attack, pgd_multi, AttackConfig, CorpusItem};
use boa_core::autodiff::{finite_difference_check, registered_ops};
use boa_core::metrics::{aliasing_energy_ratio, psnr, spectrum_image, ssim, ProbeOperator,
    QualityScores};
use boa_core::sampling::{compose_pipeline, DownOp, Pipeline, SamplerConfig};
use boa_core::tensor::SpatialTensor;

use crate::config::{resolve_operators, resolve_single_operator, ExperimentConfig};
use crate::imageio::{drop_channels, lift_channels, load_png, save_png};
use crate::report::{sig6, write_csv, CsvRow};

/// Standard alias probe: 3/8 cycles/sample on a 16x16 grid.
const PROBE_DIMS: (usize, usize) = (16, 16);
const PROBE_BINS: (usize, usize) = (6, 6);

struct LoadedImage {
    stem: String,
    original: SpatialTensor,
    lifted: SpatialTensor,
    channels: usize,
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<Vec<LoadedImage>> {
    if cfg.inputs.is_empty() {
        bail!("no input images configured; list files under \"inputs\" in the config");
    }
    let factor = 1usize << cfg.depth;
    cfg.inputs
        .iter()
        .map(|path| {
            let (original, channels) = load_png(path)?;
            let s = original.shape();
            if s.rows % factor != 0 || s.cols % factor != 0 {
                bail!(
                    "{}: image is {}x{} but a depth-{} pipeline needs dims divisible by {}; \
                     crop or pad the image first",
                    path.display(),
                    s.rows,
                    s.cols,
                    cfg.depth,
                    factor
                );
            }
            Ok(LoadedImage {
                stem: path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "image".to_string()),
                lifted: lift_channels(&original),
                original,
                channels,
            })
        })
        .collect()
}

fn build_pipeline(sampler: &SamplerConfig, depth: usize, label: &str) -> Result<Pipeline> {
    for note in sampler.coefficients.out_of_range_stages() {
        eprintln!("warning: operator '{label}': {note}");
    }
    Ok(compose_pipeline(sampler.clone(), depth)?)
}

fn effective_attack(cfg: &ExperimentConfig) -> AttackConfig {
    let mut attack = cfg.attack.clone();
    attack.rng_seed = attack.rng_seed.wrapping_add(cfg.seed);
    attack
}

fn alias_ratio_for(sampler: &SamplerConfig) -> Result<f64> {
    let probe_op = if sampler.down_ops.iter().all(|d| *d == DownOp::PixelUnshuffle) {
        ProbeOperator::PixelUnshuffle
    } else {
        ProbeOperator::LowPath
    };
    Ok(aliasing_energy_ratio(probe_op, PROBE_DIMS, PROBE_BINS)?.ratio)
}

/// Runs every image through every resolved operator and writes restored
/// PNGs plus `roundtrip.csv` with the clean scores.
pub fn cmd_roundtrip(cfg: &ExperimentConfig) -> Result<()> {
    let images = load_inputs(cfg)?;
    let operators = resolve_operators(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut rows = Vec::new();
    for (label, sampler) in &operators {
        let pipeline = build_pipeline(sampler, cfg.depth, label)?;
        for img in &images {
            let out = pipeline.clone().forward(&img.lifted)?;
            if out.shape() != img.lifted.shape() {
                bail!(
                    "operator '{label}' maps {} to {}; round-trip comparison needs a \
                     shape-preserving sandwich",
                    img.lifted.shape(),
                    out.shape()
                );
            }
            let restored = drop_channels(&out, img.channels);
            let scores = QualityScores {
                psnr: psnr(&restored, &img.original, 1.0)?,
                ssim: ssim(&restored, &img.original)?,
            };
            save_png(
                &restored,
                &cfg.out_dir.join(format!("restored_{label}_{}.png", img.stem)),
            )?;
            rows.push(CsvRow {
                experiment: cfg
                    .experiment_id
                    .clone()
                    .unwrap_or_else(|| img.stem.clone()),
                operator: label.clone(),
                clean: Some(scores),
                attacked: vec![None; cfg.budgets.len()],
                alias_ratio: None,
            });
        }
    }
    write_csv(&cfg.out_dir.join("roundtrip.csv"), &cfg.budgets, &rows)?;
    Ok(())
}

/// Attacks the corpus at every budget for every resolved operator and
/// writes `attack.csv` plus adversarial/difference PNGs for the first
/// corpus image.
pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<()> {
    let images = load_inputs(cfg)?;
    let operators = resolve_operators(cfg)?;
    let attack = effective_attack(cfg);
    let mut budgets = cfg.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    if budgets.is_empty() {
        bail!("no attack budgets configured");
    }
    std::fs::create_dir_all(&cfg.out_dir)?;

    let corpus: Vec<CorpusItem> = images
        .iter()
        .map(|img| CorpusItem {
            input: img.lifted.clone(),
            target: img.lifted.clone(),
        })
        .collect();

    let mut rows = Vec::new();
    for (label, sampler) in &operators {
        let pipeline = build_pipeline(sampler, cfg.depth, label)?;
        let report = evaluate_under_attack(&pipeline, &corpus, &attack, &budgets)?;
        rows.push(CsvRow {
            experiment: cfg
                .experiment_id
                .clone()
                .unwrap_or_else(|| "corpus".to_string()),
            operator: label.clone(),
            clean: Some(report.clean),
            attacked: report
                .attacked
                .iter()
                .map(|b| Some(b.scores))
                .collect(),
            alias_ratio: Some(alias_ratio_for(sampler)?),
        });

        // qualitative outputs for the first image: adversarial input and
        // the amplified difference, per budget
        let first = &images[0];
        let mut item_cfg = attack.clone();
        item_cfg.rng_seed = attack.rng_seed; // item 0 offset is zero
        let mut p = pipeline.clone();
        let snapshots = pgd_multi(&mut p, &first.lifted, &first.lifted, &item_cfg, &budgets)?;
        for (budget, traj) in &snapshots {
            let adv = drop_channels(&traj.adversarial, first.channels);
            save_png(
                &adv,
                &cfg.out_dir
                    .join(format!("{label}_{}_adv_{budget}.png", first.stem)),
            )?;
            let diff = adv
                .sub(&first.original)?
                .scale(1.0 / (2.0 * attack.epsilon))
                .map(|v| v + 0.5);
            save_png(
                &diff,
                &cfg.out_dir
                    .join(format!("{label}_{}_diff_{budget}.png", first.stem)),
            )?;
        }
    }
    write_csv(&cfg.out_dir.join("attack.csv"), &budgets, &rows)?;
    Ok(())
}

/// Exports the log-magnitude spectrum of the input, every intermediate
/// stage, and the output of the resolved operator on the first image.
pub fn cmd_spectrum(cfg: &ExperimentConfig) -> Result<()> {
    let images = load_inputs(cfg)?;
    let (label, sampler) = resolve_single_operator(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut pipeline = build_pipeline(&sampler, cfg.depth, &label)?;
    let first = &images[0];
    let stages = pipeline.forward_collect(&first.lifted)?;
    for (idx, (stage_label, tensor)) in stages.iter().enumerate() {
        let spectrum = spectrum_image(tensor, 0)?;
        save_png(
            &spectrum,
            &cfg.out_dir.join(format!(
                "{idx:02}_{label}_{stage_label}_{}_spectrum.png",
                first.stem
            )),
        )?;
    }
    Ok(())
}

/// Sweeps every above-band probe on the standard grid for the
/// rearrangement baseline and the alias-free low path, writing
/// `alias_audit.csv`.
pub fn cmd_alias_audit(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let (rows, cols) = PROBE_DIMS;
    let mut out = String::from("operator,freq_y,freq_x,energy_in,energy_out,ratio\n");
    for op in [ProbeOperator::PixelUnshuffle, ProbeOperator::LowPath] {
        for ky in 0..rows {
            for kx in 0..cols {
                if !boa_core::metrics::probe_is_above_band(PROBE_DIMS, (ky, kx)) {
                    continue;
                }
                let report = aliasing_energy_ratio(op, PROBE_DIMS, (ky, kx))?;
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    op.label(),
                    sig6(report.freq.0),
                    sig6(report.freq.1),
                    sig6(report.energy_in),
                    sig6(report.energy_out),
                    sig6(report.ratio),
                ));
            }
        }
    }
    let path = cfg.out_dir.join("alias_audit.csv");
    std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Checks every registered operator's VJP against central finite
/// differences; fails (nonzero exit) if any error exceeds its threshold.
pub fn cmd_gradcheck(_cfg: &ExperimentConfig) -> Result<()> {
    let mut failures = 0usize;
    for op in registered_ops() {
        let report = finite_difference_check(&op, &op.base_input, 1e-5);
        let bound = if op.name == "pipeline_depth2" { 1e-4 } else { 1e-5 };
        let ok = report.max_rel_error < bound;
        println!(
            "{:24} max rel err {:9.3e} (bound {:.0e}, {} probes) {}",
            report.op,
            report.max_rel_error,
            bound,
            report.probes,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failures += 1;
        }
    }
    if failures > 0 {
        bail!("{failures} operator gradient(s) exceeded their threshold");
    }
    Ok(())
}

/// Writes a small deterministic test image; used by examples and tests.
pub fn synthesize_smooth_png(path: &Path, rows: usize, cols: usize, seed: u64) -> Result<PathBuf> {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(seed);
    let coeffs: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..2.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.2..1.0),
            )
        })
        .collect();
    let img = SpatialTensor::from_fn(
        boa_core::tensor::Shape::new(1, 1, rows, cols),
        |_, _, m, n| {
            let mut v = 0.0;
            for (fy, fx, phase, amp) in &coeffs {
                v += amp
                    * (std::f64::consts::TAU * (fy * m as f64 / rows as f64 + fx * n as f64 / cols as f64)
                        + phase)
                        .sin();
            }
            0.5 + 0.4 * v / 4.0
        },
    );
    save_png(&img, path)?;
    Ok(path.to_path_buf())
}
