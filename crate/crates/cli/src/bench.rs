//! Timing protocol: per grid point, run the engine in batches sized to take
//! at least a millisecond, refresh the operands between batches, and stop
//! once the coefficient of variation of the mean falls under the target (or
//! the repetition cap is hit). The checksum is taken from the first,
//! deterministic operand state so two runs with one seed can be diffed.

use std::fs;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::config::{BenchConfig, BenchRecord, Engine, CSV_HEADER};
use crate::engines::PreparedCase;

/// Minimum samples before the CV stopping rule may fire.
const MIN_SAMPLES: usize = 3;
/// Target duration of one timed batch.
const BATCH_FLOOR: Duration = Duration::from_millis(1);

/// Mean and coefficient of variation *of the mean* (sample std over
/// mean times sqrt(n)) for a set of per-execution times.
pub(crate) fn mean_cv(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 || mean <= 0.0 {
        return (mean, f64::INFINITY);
    }
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt() / (mean * n.sqrt()))
}

/// Derives an independent generator for one grid cell so cells can't bleed
/// randomness into each other when the grid flags change.
fn cell_rng(seed: u64, height: usize, width: usize, depth: usize, engine: Engine) -> StdRng {
    let mut s = seed;
    for v in [height as u64, width as u64, depth as u64, engine as u64 + 1] {
        // splitmix64 step folding each coordinate in
        s = s.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(v);
        s = (s ^ (s >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        s = (s ^ (s >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        s ^= s >> 31;
    }
    StdRng::seed_from_u64(s)
}

fn measure(
    case: &mut PreparedCase,
    height: usize,
    width: usize,
    depth: usize,
    config: &BenchConfig,
    rng: &mut StdRng,
) -> BenchRecord {
    // First execution doubles as the deterministic checksum source.
    let checksum = case.execute();
    for _ in 0..config.warmup {
        std::hint::black_box(case.execute());
    }

    // Size a batch so one timed sample spans at least the floor.
    let t0 = Instant::now();
    std::hint::black_box(case.execute());
    let once = t0.elapsed().as_secs_f64().max(1e-9);
    let batch = (BATCH_FLOOR.as_secs_f64() / once).ceil().max(1.0) as usize;

    let mut samples: Vec<f64> = Vec::new();
    loop {
        case.regenerate(rng);
        let t = Instant::now();
        for _ in 0..batch {
            std::hint::black_box(case.execute());
        }
        samples.push(t.elapsed().as_secs_f64() / batch as f64);

        let (mean, cv) = mean_cv(&samples);
        let settled = samples.len() >= MIN_SAMPLES && cv <= config.target_cv;
        if settled || samples.len() >= config.max_reps {
            return BenchRecord {
                height,
                width,
                depth,
                engine: case.label().to_string(),
                mean_us: mean * 1e6,
                cv,
                reps: samples.len(),
                checksum,
            };
        }
    }
}

/// Runs the whole grid, printing one CSV row per point as it lands and
/// returning the records (also written to `config.csv` when set).
pub fn run_benchmark(config: &BenchConfig) -> anyhow::Result<Vec<BenchRecord>> {
    config.validate()?;
    println!("{CSV_HEADER}");
    let mut records = Vec::new();
    for &height in &config.heights {
        for &width in &config.widths {
            for &depth in &config.depths {
                for &engine in &config.engines {
                    let mut rng = cell_rng(config.seed, height, width, depth, engine);
                    let mut case = PreparedCase::new(engine, height, width, depth, &mut rng)?;
                    let record = measure(&mut case, height, width, depth, config, &mut rng);
                    println!("{}", record.csv_line());
                    records.push(record);
                }
            }
        }
    }
    if let Some(path) = &config.csv {
        let mut text = String::from(CSV_HEADER);
        text.push('\n');
        for r in &records {
            text.push_str(&r.csv_line());
            text.push('\n');
        }
        fs::write(path, text)?;
        eprintln!("wrote {} rows to {}", records.len(), path.display());
    }
    Ok(records)
}
