//! L-infinity projected-gradient-descent perturbation of pipeline inputs,
//! plus the clean/attacked evaluation harness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::pipeline_vjp;
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim, QualityScores};
use crate::sampling::Pipeline;
use crate::tensor::{Shape, SpatialTensor};

/// Loss driving the attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    L1,
}

/// Attack parameters. The budget is an L-infinity ball of radius
/// `epsilon` around the clean input, stored exactly as 8/255 by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub loss: LossKind,
    pub rng_seed: u64,
    pub random_start: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 8.0 / 255.0,
            step_size: 0.01,
            iterations: 10,
            loss: LossKind::Mse,
            rng_seed: 0,
            random_start: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.step_size < 0.0 {
            return Err(Error::Config("step size must be non-negative".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("at least one attack iteration required".into()));
        }
        Ok(())
    }
}

/// Record of one attack run: the loss at the start and after every
/// iteration, the final adversarial input, and the final output PSNR
/// against the target.
#[derive(Debug, Clone)]
pub struct AttackTrajectory {
    pub losses: Vec<f64>,
    pub adversarial: SpatialTensor,
    pub final_psnr: f64,
}

fn loss_value(kind: LossKind, y: &SpatialTensor, target: &SpatialTensor) -> f64 {
    let n = y.data().len() as f64;
    match kind {
        LossKind::Mse => {
            y.data()
                .iter()
                .zip(target.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n
        }
        LossKind::L1 => {
            y.data()
                .iter()
                .zip(target.data())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / n
        }
    }
}

fn loss_gradient(kind: LossKind, y: &SpatialTensor, target: &SpatialTensor) -> SpatialTensor {
    let n = y.data().len() as f64;
    let data = y
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| match kind {
            LossKind::Mse => 2.0 * (a - b) / n,
            LossKind::L1 => (a - b).signum() / n,
        })
        .collect();
    SpatialTensor::from_vec(y.shape(), data).expect("shape preserved")
}

/// Ascent direction per component; zero gradient moves upward.
#[inline]
fn ascent_sign(g: f64) -> f64 {
    if g >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn project(x: &SpatialTensor, origin: &SpatialTensor, epsilon: f64) -> SpatialTensor {
    let data = x
        .data()
        .iter()
        .zip(origin.data())
        .map(|(v, o)| (o + (v - o).clamp(-epsilon, epsilon)).clamp(0.0, 1.0))
        .collect();
    SpatialTensor::from_vec(x.shape(), data).expect("shape preserved")
}

/// Runs PGD against the pipeline and snapshots the trajectory at every
/// requested budget (ascending). Budgets share one trajectory: the
/// snapshot after `k` iterations is identical to a standalone `k`-budget
/// run with the same seed.
pub fn pgd_multi(
    pipeline: &mut Pipeline,
    x0: &SpatialTensor,
    target: &SpatialTensor,
    cfg: &AttackConfig,
    budgets: &[usize],
) -> Result<Vec<(usize, AttackTrajectory)>> {
    cfg.validate()?;
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("budgets must be ascending and non-empty".into()));
    }
    if budgets.iter().any(|&b| b == 0) {
        return Err(Error::Config("at least one attack iteration required".into()));
    }
    let max_iters = *budgets.last().expect("non-empty");

    let mut x = x0.clone();
    if cfg.random_start {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        x = SpatialTensor::from_vec(
            x0.shape(),
            x0.data()
                .iter()
                .map(|v| v + rng.gen_range(-cfg.epsilon..=cfg.epsilon))
                .collect(),
        )
        .expect("shape preserved");
        x = project(&x, x0, cfg.epsilon);
    }

    let sampler_cfg = pipeline.config().clone();
    let (mut y, mut trace) = pipeline.forward_traced(&x)?;
    if y.shape() != target.shape() {
        return Err(Error::shape(format!(
            "pipeline output {} does not match target {}",
            y.shape(),
            target.shape()
        )));
    }
    let mut losses = vec![loss_value(cfg.loss, &y, target)];
    let mut snapshots = Vec::with_capacity(budgets.len());
    for t in 0..max_iters {
        let grads = pipeline_vjp(&sampler_cfg, &trace, &loss_gradient(cfg.loss, &y, target))?;
        if !grads.input.is_finite() {
            return Err(Error::NonFiniteGradient {
                iteration: t,
                trajectory: Box::new(AttackTrajectory {
                    final_psnr: psnr(&y, target, 1.0)?,
                    losses,
                    adversarial: x,
                }),
            });
        }
        let stepped = SpatialTensor::from_vec(
            x.shape(),
            x.data()
                .iter()
                .zip(grads.input.data())
                .map(|(v, g)| v + cfg.step_size * ascent_sign(*g))
                .collect(),
        )
        .expect("shape preserved");
        x = project(&stepped, x0, cfg.epsilon);
        let next = pipeline.forward_traced(&x)?;
        y = next.0;
        trace = next.1;
        losses.push(loss_value(cfg.loss, &y, target));
        if budgets.contains(&(t + 1)) {
            snapshots.push((
                t + 1,
                AttackTrajectory {
                    losses: losses.clone(),
                    adversarial: x.clone(),
                    final_psnr: psnr(&y, target, 1.0)?,
                },
            ));
        }
    }
    Ok(snapshots)
}

/// Single-budget PGD: `cfg.iterations` signed-gradient ascent steps,
/// each projected to the epsilon ball and the `[0, 1]` box.
pub fn pgd(
    pipeline: &mut Pipeline,
    x0: &SpatialTensor,
    target: &SpatialTensor,
    cfg: &AttackConfig,
) -> Result<AttackTrajectory> {
    let mut snapshots = pgd_multi(pipeline, x0, target, cfg, &[cfg.iterations])?;
    Ok(snapshots.pop().expect("one budget requested").1)
}

/// One clean/target pair for the evaluation harness.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub input: SpatialTensor,
    pub target: SpatialTensor,
}

/// Mean scores at one attack budget.
#[derive(Debug, Clone, Copy)]
pub struct BudgetScores {
    pub iterations: usize,
    pub scores: QualityScores,
}

/// Harness output: stage shapes, clean scores, per-budget attacked scores
/// and the per-item loss curves at the largest budget.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub stage_shapes: Vec<Shape>,
    pub clean: QualityScores,
    pub attacked: Vec<BudgetScores>,
    pub loss_curves: Vec<Vec<f64>>,
}

/// Attacks every corpus item at every budget and reports mean PSNR/SSIM
/// against the targets, clean and attacked. Items run in parallel; the
/// per-item seed is derived from `cfg.rng_seed` and the item index, so
/// results do not depend on scheduling.
pub fn evaluate_under_attack(
    pipeline: &Pipeline,
    corpus: &[CorpusItem],
    cfg: &AttackConfig,
    budgets: &[usize],
) -> Result<PipelineReport> {
    if corpus.is_empty() {
        return Err(Error::Config("corpus is empty".into()));
    }
    struct ItemOutcome {
        clean: QualityScores,
        attacked: Vec<QualityScores>,
        losses: Vec<f64>,
    }
    let outcomes: Vec<ItemOutcome> = corpus
        .par_iter()
        .enumerate()
        .map(|(idx, item)| -> Result<ItemOutcome> {
            let mut item_cfg = cfg.clone();
            item_cfg.rng_seed = cfg.rng_seed.wrapping_add(idx as u64);
            let mut p = pipeline.clone();
            let clean_out = p.forward(&item.input)?;
            let clean = QualityScores {
                psnr: psnr(&clean_out, &item.target, 1.0)?,
                ssim: ssim(&clean_out, &item.target)?,
            };
            let mut p = pipeline.clone();
            let snapshots = pgd_multi(&mut p, &item.input, &item.target, &item_cfg, budgets)?;
            let mut attacked = Vec::with_capacity(snapshots.len());
            let mut losses = Vec::new();
            for (_, traj) in &snapshots {
                let out = pipeline.clone().forward(&traj.adversarial)?;
                attacked.push(QualityScores {
                    psnr: traj.final_psnr,
                    ssim: ssim(&out, &item.target)?,
                });
                losses = traj.losses.clone();
            }
            Ok(ItemOutcome {
                clean,
                attacked,
                losses,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = outcomes.len() as f64;
    let clean = QualityScores {
        psnr: outcomes.iter().map(|o| o.clean.psnr).sum::<f64>() / n,
        ssim: outcomes.iter().map(|o| o.clean.ssim).sum::<f64>() / n,
    };
    let attacked = budgets
        .iter()
        .enumerate()
        .map(|(bi, &budget)| BudgetScores {
            iterations: budget,
            scores: QualityScores {
                psnr: outcomes.iter().map(|o| o.attacked[bi].psnr).sum::<f64>() / n,
                ssim: outcomes.iter().map(|o| o.attacked[bi].ssim).sum::<f64>() / n,
            },
        })
        .collect();
    Ok(PipelineReport {
        stage_shapes: pipeline.stage_shapes(corpus[0].input.shape())?,
        clean,
        attacked,
        loss_curves: outcomes.into_iter().map(|o| o.losses).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{compose_pipeline, DownOp, SamplerConfig, UpOp};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn identity_pipeline() -> Pipeline {
        let cfg = SamplerConfig::uniform(DownOp::PixelUnshuffle, UpOp::PixelShuffle, 1);
        compose_pipeline(cfg, 1).unwrap()
    }

    fn random_image(shape: Shape, seed: u64) -> SpatialTensor {
        let mut rng = StdRng::seed_from_u64(seed);
        SpatialTensor::from_fn(shape, |_, _, _, _| rng.gen_range(0.05..0.95))
    }

    #[test]
    fn zero_iterations_is_rejected() {
        let mut cfg = AttackConfig::default();
        cfg.iterations = 0;
        let x = random_image(Shape::new(1, 1, 8, 8), 1);
        assert!(matches!(
            pgd(&mut identity_pipeline(), &x, &x, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_step_is_a_null_update() {
        let mut cfg = AttackConfig::default();
        cfg.iterations = 1;
        cfg.step_size = 0.0;
        let x = random_image(Shape::new(1, 1, 8, 8), 2);
        let traj = pgd(&mut identity_pipeline(), &x, &x, &cfg).unwrap();
        assert_eq!(traj.adversarial, x);
        assert_eq!(traj.losses.len(), 2);
    }

    #[test]
    fn iterates_stay_in_ball_and_box() {
        let cfg = AttackConfig {
            iterations: 20,
            ..AttackConfig::default()
        };
        let x = random_image(Shape::new(1, 1, 16, 16), 3);
        let target = random_image(Shape::new(1, 1, 16, 16), 4);
        let traj = pgd(&mut identity_pipeline(), &x, &target, &cfg).unwrap();
        let max_dev = traj
            .adversarial
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev <= 8.0 / 255.0 + 1e-12);
        assert!(traj
            .adversarial
            .data()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn identity_pipeline_ascends_from_its_own_target() {
        let cfg = AttackConfig {
            iterations: 10,
            ..AttackConfig::default()
        };
        let x = SpatialTensor::constant(Shape::new(1, 1, 8, 8), 0.5);
        let traj = pgd(&mut identity_pipeline(), &x, &x, &cfg).unwrap();
        assert_eq!(traj.losses.len(), 11);
        for w in traj.losses.windows(2) {
            assert!(w[1] >= w[0] - 1e-15, "loss decreased: {:?}", w);
        }
        // interior start: every component moved by min(step*iters, eps)
        let floor = (cfg.step_size * cfg.iterations as f64).min(cfg.epsilon);
        assert!(*traj.losses.last().unwrap() >= floor * floor - 1e-12);
    }

    #[test]
    fn trajectories_are_deterministic_given_seed() {
        let cfg = AttackConfig {
            iterations: 5,
            random_start: true,
            rng_seed: 42,
            ..AttackConfig::default()
        };
        let x = random_image(Shape::new(1, 1, 8, 8), 5);
        let target = random_image(Shape::new(1, 1, 8, 8), 6);
        let a = pgd(&mut identity_pipeline(), &x, &target, &cfg).unwrap();
        let b = pgd(&mut identity_pipeline(), &x, &target, &cfg).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.adversarial, b.adversarial);
    }

    #[test]
    fn gradient_sign_matches_closed_form_on_identity_pipeline() {
        let x = random_image(Shape::new(1, 1, 8, 8), 7);
        let target = random_image(Shape::new(1, 1, 8, 8), 8);
        let mut p = identity_pipeline();
        let (y, trace) = p.forward_traced(&x).unwrap();
        let grads = pipeline_vjp(
            p.config(),
            &trace,
            &loss_gradient(LossKind::Mse, &y, &target),
        )
        .unwrap();
        // identity pipeline: dloss/dx = 2 (x - target) / n
        for (g, (xv, tv)) in grads.input.data().iter().zip(x.data().iter().zip(target.data())) {
            let analytic = 2.0 * (xv - tv) / x.data().len() as f64;
            if analytic.abs() > 1e-9 {
                assert_eq!(g.signum(), analytic.signum());
            }
        }
    }

    #[test]
    fn budget_snapshots_match_standalone_runs() {
        let x = random_image(Shape::new(1, 1, 8, 8), 9);
        let target = random_image(Shape::new(1, 1, 8, 8), 10);
        let cfg = AttackConfig::default();
        let multi =
            pgd_multi(&mut identity_pipeline(), &x, &target, &cfg, &[2, 5]).unwrap();
        let single = pgd(
            &mut identity_pipeline(),
            &x,
            &target,
            &AttackConfig {
                iterations: 2,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(multi[0].1.adversarial, single.adversarial);
        assert_eq!(multi[0].1.losses, single.losses);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let p = identity_pipeline();
        assert!(matches!(
            evaluate_under_attack(&p, &[], &AttackConfig::default(), &[5]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_pipeline_clean_psnr_is_capped_and_attack_hurts() {
        let items: Vec<CorpusItem> = (0..2)
            .map(|i| {
                let img = random_image(Shape::new(1, 1, 16, 16), 20 + i);
                CorpusItem {
                    input: img.clone(),
                    target: img,
                }
            })
            .collect();
        let p = identity_pipeline();
        let report =
            evaluate_under_attack(&p, &items, &AttackConfig::default(), &[5, 10]).unwrap();
        assert_eq!(report.clean.psnr, 100.0);
        for budget in &report.attacked {
            assert!(budget.scores.psnr <= report.clean.psnr);
        }
        assert_eq!(report.loss_curves.len(), 2);
        assert_eq!(report.loss_curves[0].len(), 11);
    }
}
