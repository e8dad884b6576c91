//! Cross-checks every engine against the naive reference over the benchmark
//! grid. Any mismatch is reported with its first failing coordinate; the
//! caller turns a failed report into a nonzero exit.

use crate::config::BenchConfig;
use crate::engines::PreparedCase;
use rand::rngs::StdRng;
use rand::SeedableRng;

/// Result of checking one engine at one grid point.
#[derive(Debug)]
pub struct VerifyRecord {
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    pub engine: String,
    pub pass: bool,
    pub detail: String,
}

impl VerifyRecord {
    pub fn line(&self) -> String {
        format!(
            "{}x{} depth {} {:<5} {}",
            self.height,
            self.width,
            self.depth,
            self.engine,
            self.detail
        )
    }
}

#[derive(Debug)]
pub struct VerifyReport {
    pub records: Vec<VerifyRecord>,
    pub failures: usize,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.failures == 0
    }
}

/// Runs each engine at each grid point on freshly seeded operands and
/// compares the result against the reference implementation.
pub fn verify_engines(config: &BenchConfig) -> anyhow::Result<VerifyReport> {
    config.validate()?;
    let mut records = Vec::new();
    let mut failures = 0usize;
    for &height in &config.heights {
        for &width in &config.widths {
            for &depth in &config.depths {
                for &engine in &config.engines {
                    let mut rng = StdRng::seed_from_u64(
                        config.seed ^ ((height * 1_000_003 + width * 1009 + depth) as u64),
                    );
                    let case = PreparedCase::new(engine, height, width, depth, &mut rng)?;
                    let report = case.verify();
                    let detail = if !report.pass {
                        failures += 1;
                        match report.first_mismatch {
                            Some((r, c)) => format!(
                                "MISMATCH first at ({r},{c}), max |diff| {}",
                                report.max_abs_diff
                            ),
                            None => "MISMATCH (shape)".to_string(),
                        }
                    } else if case.is_reference_engine() {
                        "ok (is the reference)".to_string()
                    } else if report.max_abs_diff > 0.0 {
                        format!("ok, max |diff| {:.3e}", report.max_abs_diff)
                    } else {
                        "ok, exact".to_string()
                    };
                    records.push(VerifyRecord {
                        height,
                        width,
                        depth,
                        engine: case.label().to_string(),
                        pass: report.pass,
                        detail,
                    });
                }
            }
        }
    }
    Ok(VerifyReport { records, failures })
}
