//! End-to-end demo: builds a 7-layer OCR-style network (25x33 grayscale in,
//! 36-way classifier out), runs it as a float network and as quantized
//! networks at 8 and 4 bits plus a naive-integer build of the 4-bit one, and
//! reports per-variant forward times split into convolution and total.

use std::time::Instant;

use anyhow::Context;
use nibblegemm::nn::{Activation, GemmBackend, LayerSpec, Network, Tensor};
use nibblegemm::qgemm::AccumulatorMode;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::bench::mean_cv;

#[derive(Debug, Clone)]
pub struct DemoConfig {
    pub seed: u64,
    pub target_cv: f64,
    pub max_reps: usize,
    pub warmup: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig { seed: 42, target_cv: 0.01, max_reps: 50, warmup: 3 }
    }
}

/// One timed network variant.
#[derive(Debug, Clone)]
pub struct DemoRecord {
    pub model: &'static str,
    pub conv_us: f64,
    pub total_us: f64,
    pub cv: f64,
    pub reps: usize,
    pub top_class: usize,
    pub top_probability: f32,
}

impl DemoRecord {
    pub fn line(&self) -> String {
        format!(
            "{:<13} conv {:>9.1} us   total {:>9.1} us   (cv {:.4}, {} reps)   -> class {} (p={:.3})",
            self.model, self.conv_us, self.total_us, self.cv, self.reps, self.top_class,
            self.top_probability
        )
    }
}

/// The demo architecture: six convolutions shrinking 25x33 down to 1x3,
/// then a 36-way fully connected head over the 72 remaining values.
pub fn demo_layers(rng: &mut StdRng) -> Vec<LayerSpec> {
    let mut weights =
        |n: usize| (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect::<Vec<f32>>();
    vec![
        LayerSpec::qconv(8, (5, 5), (1, 1), Activation::Relu, weights(8 * 25)),
        LayerSpec::qconv(8, (3, 3), (1, 1), Activation::Relu, weights(8 * 8 * 9)),
        LayerSpec::qconv(8, (3, 3), (2, 2), Activation::Relu, weights(8 * 8 * 9)),
        LayerSpec::qconv(16, (3, 3), (1, 1), Activation::Relu, weights(16 * 8 * 9)),
        LayerSpec::qconv(16, (3, 3), (2, 2), Activation::Relu, weights(16 * 16 * 9)),
        LayerSpec::qconv(24, (3, 3), (1, 1), Activation::Relu, weights(24 * 16 * 9)),
        LayerSpec::fc(36, Activation::Softmax, weights(36 * 72)),
    ]
}

pub const DEMO_INPUT_SHAPE: (usize, usize, usize) = (1, 25, 33);

fn time_network(
    name: &'static str,
    net: &Network,
    input: &Tensor,
    config: &DemoConfig,
) -> anyhow::Result<DemoRecord> {
    let (out, _) = net.forward_timed(input).with_context(|| format!("{name} forward"))?;
    let top_class = (0..out.len())
        .max_by(|&a, &b| out[a].partial_cmp(&out[b]).unwrap())
        .context("empty output")?;
    let top_probability = out[top_class];

    for _ in 0..config.warmup {
        std::hint::black_box(net.forward_timed(input)?);
    }
    let mut totals: Vec<f64> = Vec::new();
    let mut convs: Vec<f64> = Vec::new();
    loop {
        let t = Instant::now();
        let (_, timing) = std::hint::black_box(net.forward_timed(input)?);
        totals.push(t.elapsed().as_secs_f64());
        convs.push(timing.conv.as_secs_f64());
        let (_, cv) = mean_cv(&totals);
        if (totals.len() >= 3 && cv <= config.target_cv) || totals.len() >= config.max_reps {
            let (total_mean, cv) = mean_cv(&totals);
            let (conv_mean, _) = mean_cv(&convs);
            return Ok(DemoRecord {
                model: name,
                conv_us: conv_mean * 1e6,
                total_us: total_mean * 1e6,
                cv,
                reps: totals.len(),
                top_class,
                top_probability,
            });
        }
    }
}

/// Builds the network variants, times each on one deterministic input, and
/// returns the records in print order.
pub fn run_demo(config: &DemoConfig) -> anyhow::Result<Vec<DemoRecord>> {
    anyhow::ensure!(config.max_reps >= 1, "at least one repetition is required");
    anyhow::ensure!(
        config.target_cv.is_finite() && config.target_cv > 0.0,
        "target CV must be positive"
    );
    let mut rng = StdRng::seed_from_u64(config.seed);
    let layers = demo_layers(&mut rng);
    let (c, h, w) = DEMO_INPUT_SHAPE;

    let q4 = Network::new(DEMO_INPUT_SHAPE, 4, AccumulatorMode::Signed16, layers.clone())
        .context("building the 4-bit network")?;
    let q8 = Network::new(DEMO_INPUT_SHAPE, 8, AccumulatorMode::I32, layers)
        .context("building the 8-bit network")?;
    let float = q4.float_equivalent();
    let mut naive = q4.clone();
    naive.set_backend(GemmBackend::NaiveI32);

    let input =
        Tensor::new(c, h, w, (0..c * h * w).map(|_| rng.random_range(0.0f32..1.0)).collect())?;

    let mut records = Vec::new();
    for (name, net) in [
        ("cnn-f32", &float),
        ("qnn-u8", &q8),
        ("qnn-u4", &q4),
        ("qnn-u4-naive", &naive),
    ] {
        records.push(time_network(name, net, &input, config)?);
    }
    Ok(records)
}

/// Human-readable summary block for the records.
pub fn render(records: &[DemoRecord]) -> String {
    let mut text = String::from(
        "7-layer OCR-style network, 25x33 grayscale input, 36 classes\n",
    );
    for r in records {
        text.push_str(&r.line());
        text.push('\n');
    }
    if let (Some(f), Some(q)) = (
        records.iter().find(|r| r.model == "cnn-f32"),
        records.iter().find(|r| r.model == "qnn-u4"),
    ) {
        text.push_str(&format!(
            "4-bit packed forward is {:.2}x the float forward time\n",
            q.total_us / f.total_us
        ));
    }
    text
}
