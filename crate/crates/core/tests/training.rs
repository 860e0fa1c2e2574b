use d2net::network::{checkpoint, D2Net, NetworkConfig};
use d2net::training::{synthetic_corpus, train_toy, DegradationSpec, Range, Task, TrainConfig};
use d2net::{Error, Tensor};

fn corpus() -> (Vec<Tensor<f32>>, Vec<Tensor<f32>>) {
    (synthetic_corpus(8, 48, 48, 1), synthetic_corpus(2, 48, 48, 2))
}

fn config(task: Task, iters: usize, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(task.default_spec());
    cfg.iters = iters;
    cfg.crop = 32;
    cfg.batch = 2;
    cfg.seed = seed;
    cfg
}

#[test]
fn no_steps_leaves_the_identity_network() {
    let (train, held) = corpus();
    let (net, p) = D2Net::build::<f32>(&NetworkConfig::toy(4), 0).unwrap();
    let out = train_toy(&net, p, &config(Task::Haze, 0, 0), &train, &held, |_| {}).unwrap();
    assert!(out.trace.is_empty());
    assert_eq!(out.eval.restored_psnr, out.eval.degraded_psnr);
    assert_eq!(out.eval.restored_ssim, out.eval.degraded_ssim);
}

#[test]
fn same_seed_gives_identical_checkpoints_and_traces() {
    let (train, held) = corpus();
    let run = |seed| {
        let (net, p) = D2Net::build::<f32>(&NetworkConfig::toy(4), 5).unwrap();
        let out = train_toy(&net, p, &config(Task::Lowlight, 3, seed), &train, &held, |_| {}).unwrap();
        (checkpoint::encode(&out.params), out.trace_csv(), out.eval)
    };
    let (a, b, c) = (run(7), run(7), run(8));
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn identity_degradation_has_no_gain_to_find() {
    let (train, held) = corpus();
    let (net, p) = D2Net::build::<f32>(&NetworkConfig::toy(4), 0).unwrap();
    let mut cfg = config(Task::Lowlight, 2, 0);
    cfg.spec = DegradationSpec::Lowlight {
        gamma: Range::fixed(1.0),
        scale: Range::fixed(1.0),
        noise: Range::fixed(0.0),
    };
    let mut losses = Vec::new();
    let out = train_toy(&net, p, &cfg, &train, &held, |r| losses.push(r.loss)).unwrap();
    // Pairs are equal and the tail starts at zero, so the first loss is exactly 0.
    assert_eq!(losses[0], 0.0);
    assert_eq!(out.eval.degraded_psnr, 100.0);
}

#[test]
fn too_few_images_is_an_error() {
    let (train, held) = corpus();
    let (net, p) = D2Net::build::<f32>(&NetworkConfig::toy(4), 0).unwrap();
    let result = train_toy(&net, p, &config(Task::Blur, 1, 0), &train[..3], &held, |_| {});
    assert!(matches!(result, Err(Error::InsufficientData { found: 3, .. })));
}
