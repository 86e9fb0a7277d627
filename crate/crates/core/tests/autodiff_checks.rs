//! Chain-rule checks for composed pipelines: input and coefficient
//! gradients against central finite differences.

use boa_core::autodiff::pipeline_vjp;
use boa_core::sampling::{compose_pipeline, DownOp, SamplerConfig, UpOp};
use boa_core::tensor::{Shape, SpatialTensor};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_tensor(shape: Shape, seed: u64) -> SpatialTensor {
    let mut rng = StdRng::seed_from_u64(seed);
    SpatialTensor::from_fn(shape, |_, _, _, _| rng.gen_range(0.0..1.0))
}

fn scalar_probe(cfg: &SamplerConfig, depth: usize, x: &SpatialTensor, v: &SpatialTensor) -> f64 {
    let mut p = compose_pipeline(cfg.clone(), depth).unwrap();
    p.forward(x).unwrap().dot(v).unwrap()
}

#[test]
fn pipeline_coefficient_gradients_match_finite_differences() {
    let depth = 2;
    let mut cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, depth);
    cfg.coefficients.alpha = vec![0.35, 0.2];
    cfg.coefficients.beta = vec![0.15, 0.45];
    let x = random_tensor(Shape::new(1, 1, 16, 16), 3);

    let mut p = compose_pipeline(cfg.clone(), depth).unwrap();
    let (y, trace) = p.forward_traced(&x).unwrap();
    let v = random_tensor(y.shape(), 4);
    let grads = pipeline_vjp(&cfg, &trace, &v).unwrap();

    let h = 1e-5;
    for stage in 0..depth {
        let mut plus = cfg.clone();
        plus.coefficients.alpha[stage] += h;
        let mut minus = cfg.clone();
        minus.coefficients.alpha[stage] -= h;
        let num = (scalar_probe(&plus, depth, &x, &v) - scalar_probe(&minus, depth, &x, &v))
            / (2.0 * h);
        let ana = grads.alpha[stage];
        let rel = (num - ana).abs() / ana.abs().max(num.abs()).max(1e-8);
        assert!(rel < 1e-6, "alpha[{stage}]: fd {num} vs vjp {ana}");

        let mut plus = cfg.clone();
        plus.coefficients.beta[stage] += h;
        let mut minus = cfg.clone();
        minus.coefficients.beta[stage] -= h;
        let num = (scalar_probe(&plus, depth, &x, &v) - scalar_probe(&minus, depth, &x, &v))
            / (2.0 * h);
        let ana = grads.beta[stage];
        let rel = (num - ana).abs() / ana.abs().max(num.abs()).max(1e-8);
        assert!(rel < 1e-6, "beta[{stage}]: fd {num} vs vjp {ana}");
    }
}

#[test]
fn pipeline_input_gradient_matches_finite_differences() {
    let depth = 2;
    let mut cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, depth);
    cfg.coefficients.alpha = vec![0.3, 0.25];
    cfg.coefficients.beta = vec![0.2, 0.4];
    let shape = Shape::new(1, 1, 8, 8);
    let x = random_tensor(shape, 5);

    let mut p = compose_pipeline(cfg.clone(), depth).unwrap();
    let (y, trace) = p.forward_traced(&x).unwrap();
    let v = random_tensor(y.shape(), 6);
    let grads = pipeline_vjp(&cfg, &trace, &v).unwrap();

    let h = 1e-5;
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..20 {
        let dir = SpatialTensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0));
        let plus = x.add(&dir.scale(h)).unwrap();
        let minus = x.sub(&dir.scale(h)).unwrap();
        let num =
            (scalar_probe(&cfg, depth, &plus, &v) - scalar_probe(&cfg, depth, &minus, &v))
                / (2.0 * h);
        let ana = grads.input.dot(&dir).unwrap();
        let rel = (num - ana).abs() / ana.abs().max(num.abs()).max(1e-8);
        assert!(rel < 1e-4, "fd {num} vs vjp {ana} (rel {rel})");
    }
}

#[test]
fn transposed_stages_differentiate_correctly() {
    let depth = 2;
    let mut cfg = SamplerConfig::uniform(DownOp::FpDown, UpOp::FreqAvgUp, depth);
    cfg.transpose_alternation = true;
    cfg.periodic_mode = true;
    let shape = Shape::new(1, 1, 8, 12);
    let x = random_tensor(shape, 8);

    let mut p = compose_pipeline(cfg.clone(), depth).unwrap();
    let (y, trace) = p.forward_traced(&x).unwrap();
    let v = random_tensor(y.shape(), 9);
    let grads = pipeline_vjp(&cfg, &trace, &v).unwrap();
    assert_eq!(grads.input.shape(), shape);

    let h = 1e-5;
    let mut rng = StdRng::seed_from_u64(10);
    for _ in 0..10 {
        let dir = SpatialTensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0));
        let plus = x.add(&dir.scale(h)).unwrap();
        let minus = x.sub(&dir.scale(h)).unwrap();
        let num =
            (scalar_probe(&cfg, depth, &plus, &v) - scalar_probe(&cfg, depth, &minus, &v))
                / (2.0 * h);
        let ana = grads.input.dot(&dir).unwrap();
        let rel = (num - ana).abs() / ana.abs().max(num.abs()).max(1e-8);
        assert!(rel < 1e-4, "fd {num} vs vjp {ana} (rel {rel})");
    }
}
