//! Error type shared by every module in the crate.

use std::fmt;

/// Everything that can go wrong while quantizing, packing, multiplying or
/// running a network. Overflow-related variants are raised *before* any
/// arithmetic runs: the library refuses shapes that could wrap an accumulator
/// rather than producing silently wrong numbers.
#[derive(Debug)]
pub enum Error {
    /// Quantization parameters cannot be derived from an empty slice.
    EmptyInput,
    /// A NaN or infinity was found while scanning input values.
    NonFinite { index: usize },
    /// Quantization width outside the supported set {4, 8}.
    InvalidBits(u8),
    /// Scale factors must be finite and strictly positive.
    InvalidScale(f32),
    /// Zero-point does not fit the quantized range.
    ZeroPointOutOfRange { zero_point: u8, qmax: u8 },
    /// A stored quantized value exceeds the declared bit width.
    ValueOutOfRange { index: usize, value: u8, qmax: u8 },
    /// Flat buffer length does not match rows * cols.
    ShapeMismatch { expected: usize, actual: usize },
    /// Inner dimensions of a matrix product disagree.
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    /// Operands were quantized at different bit widths.
    BitsMismatch { left: u8, right: u8 },
    /// Micro-kernel panel height must be 8 or 24 rows.
    InvalidKernelHeight(usize),
    /// The accumulator mode cannot hold products of this bit width.
    InvalidModeForBits { bits: u8, mode: &'static str },
    /// The reduction depth could wrap the accumulator; refusing to multiply.
    DepthOverflowRisk { depth: usize, max: usize },
    /// A convolution layer has more input channels than the accumulator allows.
    ChannelLimit {
        channels: usize,
        limit: usize,
        kernel: (usize, usize),
    },
    /// Convolution kernel does not fit inside its input.
    KernelLargerThanInput {
        kernel: (usize, usize),
        input: (usize, usize),
    },
    /// A tensor does not have the shape the operation expects.
    GeometryMismatch {
        expected: (usize, usize, usize),
        actual: (usize, usize, usize),
    },
    /// A layer's weight count does not match its declared geometry.
    WeightCountMismatch {
        layer: usize,
        expected: usize,
        actual: usize,
    },
    /// A layer definition is internally inconsistent.
    InvalidLayer { layer: usize, reason: String },
    /// A model file failed to parse; `line` is 1-based.
    ModelParse { line: usize, message: String },
    /// Underlying I/O failure while reading or writing a model file.
    Io(std::io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyInput => write!(f, "cannot derive quantization parameters from an empty input"),
            Error::NonFinite { index } => {
                write!(f, "non-finite value at index {index}")
            }
            Error::InvalidBits(bits) => write!(f, "unsupported quantization width: {bits} bits (expected 4 or 8)"),
            Error::InvalidScale(scale) => write!(f, "scale must be finite and positive, got {scale}"),
            Error::ZeroPointOutOfRange { zero_point, qmax } => {
                write!(f, "zero-point {zero_point} outside quantized range [0, {qmax}]")
            }
            Error::ValueOutOfRange { index, value, qmax } => {
                write!(f, "quantized value {value} at index {index} exceeds maximum level {qmax}")
            }
            Error::ShapeMismatch { expected, actual } => {
                write!(f, "buffer holds {actual} values but the shape needs {expected}")
            }
            Error::DimensionMismatch { left, right } => write!(
                f,
                "cannot multiply {}x{} by {}x{}: inner dimensions differ",
                left.0, left.1, right.0, right.1
            ),
            Error::BitsMismatch { left, right } => {
                write!(f, "operands quantized at different widths: {left} vs {right} bits")
            }
            Error::InvalidKernelHeight(h) => {
                write!(f, "kernel height {h} is not supported (expected 8 or 24)")
            }
            Error::InvalidModeForBits { bits, mode } => {
                write!(f, "accumulator mode {mode} cannot be used with {bits}-bit operands")
            }
            Error::DepthOverflowRisk { depth, max } => write!(
                f,
                "reduction depth {depth} exceeds the overflow-safe bound {max} for this accumulator"
            ),
            Error::ChannelLimit { channels, limit, kernel } => write!(
                f,
                "{channels} input channels exceed the limit of {limit} for a {}x{} quantized convolution",
                kernel.0, kernel.1
            ),
            Error::KernelLargerThanInput { kernel, input } => write!(
                f,
                "{}x{} kernel does not fit a {}x{} input",
                kernel.0, kernel.1, input.0, input.1
            ),
            Error::GeometryMismatch { expected, actual } => write!(
                f,
                "expected a {}x{}x{} tensor, got {}x{}x{}",
                expected.0, expected.1, expected.2, actual.0, actual.1, actual.2
            ),
            Error::WeightCountMismatch { layer, expected, actual } => write!(
                f,
                "layer {layer} declares {actual} weights but its geometry needs {expected}"
            ),
            Error::InvalidLayer { layer, reason } => write!(f, "layer {layer}: {reason}"),
            Error::ModelParse { line, message } => write!(f, "model file line {line}: {message}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
