//! Benchmark grid configuration and the CSV record shape shared by the
//! bench and verify subcommands.

use std::fmt;
use std::path::PathBuf;

/// Column header written ahead of every benchmark CSV body.
pub const CSV_HEADER: &str = "height,width,depth,engine,mean_us,cv,reps,checksum";

/// Matrix-product engines the driver can time and cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Engine {
    /// Plain float matrix product.
    F32,
    /// Naive 32-bit integer product on quantized operands.
    I32,
    /// 8-bit quantized product through the 32-bit accumulator path.
    U8,
    /// 4-bit packed product on 16-bit accumulator lanes.
    U4,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Engine::F32 => "f32",
            Engine::I32 => "i32",
            Engine::U8 => "u8",
            Engine::U4 => "u4",
        };
        f.write_str(name)
    }
}

/// Full description of one benchmark or verification run.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Left-operand row counts (matrix heights) to sweep.
    pub heights: Vec<usize>,
    /// Right-operand column counts (matrix widths) to sweep.
    pub widths: Vec<usize>,
    /// Shared inner dimensions to sweep.
    pub depths: Vec<usize>,
    /// Engines to run at every grid point.
    pub engines: Vec<Engine>,
    /// Stop once the coefficient of variation of the mean drops below this.
    pub target_cv: f64,
    /// Hard cap on timing repetitions per grid point.
    pub max_reps: usize,
    /// Seed for operand generation; fixed seed means fixed checksums.
    pub seed: u64,
    /// Untimed executions before measurement starts.
    pub warmup: usize,
    /// Optional path to also write the CSV to.
    pub csv: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            heights: vec![8, 24],
            widths: vec![100, 400, 1600],
            depths: vec![10, 40, 100],
            engines: vec![Engine::F32, Engine::I32, Engine::U8, Engine::U4],
            target_cv: 0.01,
            max_reps: 100,
            seed: 42,
            warmup: 3,
            csv: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(!self.heights.is_empty(), "no heights given");
        anyhow::ensure!(!self.widths.is_empty(), "no widths given");
        anyhow::ensure!(!self.depths.is_empty(), "no depths given");
        anyhow::ensure!(!self.engines.is_empty(), "no engines given");
        for &v in self.heights.iter().chain(&self.widths).chain(&self.depths) {
            anyhow::ensure!(v >= 1, "grid dimensions must be at least 1 (got {v})");
        }
        anyhow::ensure!(
            self.target_cv.is_finite() && self.target_cv > 0.0,
            "target CV must be a positive number (got {})",
            self.target_cv
        );
        anyhow::ensure!(self.max_reps >= 1, "at least one repetition is required");
        Ok(())
    }
}

/// One measured grid point, exactly one CSV row.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub height: usize,
    pub width: usize,
    pub depth: usize,
    /// Engine label as run; `u4` reports `u4ext` when the depth forced the
    /// extended accumulator mode.
    pub engine: String,
    pub mean_us: f64,
    /// Coefficient of variation of the mean at stop time.
    pub cv: f64,
    pub reps: usize,
    /// Wrapping sum over the first (deterministic) result, so runs with the
    /// same seed can be compared across machines.
    pub checksum: u32,
}

impl BenchRecord {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.5},{},{:08x}",
            self.height,
            self.width,
            self.depth,
            self.engine,
            self.mean_us,
            self.cv,
            self.reps,
            self.checksum
        )
    }
}
