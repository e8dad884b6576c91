//! Versioned text format for trained models.
//!
//! A model file is line-oriented: a magic/version line, global fields, then
//! one block per layer, then an `end` sentinel that makes truncation
//! detectable. Weights are the little-endian f32 bytes, base64-encoded, so
//! a round trip is bit-exact:
//!
//! ```text
//! nibblegemm-model v1
//! bits 4
//! accumulator signed16
//! input 1 25 33
//! layers 2
//! layer 0
//! kind qconv
//! filters 8
//! kernel 5 5
//! stride 1 1
//! activation relu
//! weights 200 <base64>
//! layer 1
//! ...
//! end
//! ```
//!
//! Loading rebuilds the network through [`Network::new`], so every validation
//! that applies to a hand-built network — shape chain, weight counts,
//! accumulator channel limits — applies to files as well.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;

use crate::error::Error;
use crate::nn::{Activation, LayerKind, LayerSpec, Network};
use crate::qgemm::AccumulatorMode;

pub const MODEL_MAGIC: &str = "nibblegemm-model";
pub const MODEL_VERSION: &str = "v1";

fn kind_name(kind: LayerKind) -> &'static str {
    match kind {
        LayerKind::QConv => "qconv",
        LayerKind::FConv => "fconv",
        LayerKind::Fc => "fc",
    }
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::Softmax => "softmax",
        Activation::None => "none",
    }
}

/// Serialize a network to the model text format.
pub fn format_model(net: &Network) -> String {
    let mut out = String::new();
    let (c, h, w) = net.input_shape();
    writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}").unwrap();
    writeln!(out, "bits {}", net.bits()).unwrap();
    writeln!(out, "accumulator {}", net.mode().name()).unwrap();
    writeln!(out, "input {c} {h} {w}").unwrap();
    writeln!(out, "layers {}", net.layers().len()).unwrap();
    for (index, layer) in net.layers().iter().enumerate() {
        writeln!(out, "layer {index}").unwrap();
        writeln!(out, "kind {}", kind_name(layer.kind)).unwrap();
        writeln!(out, "filters {}", layer.filters).unwrap();
        writeln!(out, "kernel {} {}", layer.kernel.0, layer.kernel.1).unwrap();
        writeln!(out, "stride {} {}", layer.stride.0, layer.stride.1).unwrap();
        writeln!(out, "activation {}", activation_name(layer.activation)).unwrap();
        let mut bytes = Vec::with_capacity(layer.weights.len() * 4);
        for v in &layer.weights {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        writeln!(out, "weights {} {}", layer.weights.len(), BASE64.encode(bytes)).unwrap();
    }
    writeln!(out, "end").unwrap();
    out
}

/// Write a model file to disk.
pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<(), Error> {
    fs::write(path, format_model(net))?;
    Ok(())
}

/// Read a model file from disk.
pub fn load_model(path: impl AsRef<Path>) -> Result<Network, Error> {
    parse_model(&fs::read_to_string(path)?)
}

struct Lines<'a> {
    iter: std::str::Lines<'a>,
    /// 1-based number of the last line handed out.
    number: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Lines<'a> {
        Lines { iter: text.lines(), number: 0 }
    }

    fn next(&mut self) -> Result<&'a str, Error> {
        for line in self.iter.by_ref() {
            self.number += 1;
            if !line.trim().is_empty() {
                return Ok(line.trim());
            }
        }
        // Point one past the last line we saw.
        Err(Error::ModelParse { line: self.number + 1, message: "unexpected end of file".into() })
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::ModelParse { line: self.number, message: message.into() }
    }

    /// Next line, which must start with `key`; returns the remaining tokens.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>, Error> {
        let line = self.next()?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(found) if found == key => Ok(tokens.collect()),
            Some(found) => Err(self.error(format!("expected '{key}', found '{found}'"))),
            None => Err(self.error(format!("expected '{key}'"))),
        }
    }

    fn parse<T: std::str::FromStr>(&self, token: Option<&str>, what: &str) -> Result<T, Error> {
        token
            .ok_or_else(|| self.error(format!("missing {what}")))?
            .parse()
            .map_err(|_| self.error(format!("invalid {what}")))
    }
}

/// Parse the model text format and rebuild (and re-validate) the network.
pub fn parse_model(text: &str) -> Result<Network, Error> {
    let mut lines = Lines::new(text);

    let header = lines.next()?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some(MODEL_MAGIC) {
        return Err(lines.error(format!("not a model file (expected '{MODEL_MAGIC}')")));
    }
    match tokens.next() {
        Some(MODEL_VERSION) => {}
        Some(v) => return Err(lines.error(format!("unsupported model version '{v}'"))),
        None => return Err(lines.error("missing model version")),
    }

    let tokens = lines.expect("bits")?;
    let bits: u8 = lines.parse(tokens.first().copied(), "bit width")?;

    let tokens = lines.expect("accumulator")?;
    let mode = match tokens.first().copied() {
        Some("signed16") => AccumulatorMode::Signed16,
        Some("unsigned16ext") => AccumulatorMode::Unsigned16Extended,
        Some("i32") => AccumulatorMode::I32,
        Some(other) => return Err(lines.error(format!("unknown accumulator mode '{other}'"))),
        None => return Err(lines.error("missing accumulator mode")),
    };

    let tokens = lines.expect("input")?;
    let c: usize = lines.parse(tokens.first().copied(), "input channels")?;
    let h: usize = lines.parse(tokens.get(1).copied(), "input height")?;
    let w: usize = lines.parse(tokens.get(2).copied(), "input width")?;

    let tokens = lines.expect("layers")?;
    let layer_count: usize = lines.parse(tokens.first().copied(), "layer count")?;

    let mut layers = Vec::with_capacity(layer_count);
    for index in 0..layer_count {
        let tokens = lines.expect("layer")?;
        let declared: usize = lines.parse(tokens.first().copied(), "layer index")?;
        if declared != index {
            return Err(lines.error(format!("expected layer {index}, found layer {declared}")));
        }

        let tokens = lines.expect("kind")?;
        let kind = match tokens.first().copied() {
            Some("qconv") => LayerKind::QConv,
            Some("fconv") => LayerKind::FConv,
            Some("fc") => LayerKind::Fc,
            Some(other) => return Err(lines.error(format!("unknown layer kind '{other}'"))),
            None => return Err(lines.error("missing layer kind")),
        };

        let tokens = lines.expect("filters")?;
        let filters: usize = lines.parse(tokens.first().copied(), "filter count")?;

        let tokens = lines.expect("kernel")?;
        let kernel = (
            lines.parse(tokens.first().copied(), "kernel height")?,
            lines.parse(tokens.get(1).copied(), "kernel width")?,
        );

        let tokens = lines.expect("stride")?;
        let stride = (
            lines.parse(tokens.first().copied(), "stride height")?,
            lines.parse(tokens.get(1).copied(), "stride width")?,
        );

        let tokens = lines.expect("activation")?;
        let activation = match tokens.first().copied() {
            Some("relu") => Activation::Relu,
            Some("softmax") => Activation::Softmax,
            Some("none") => Activation::None,
            Some(other) => return Err(lines.error(format!("unknown activation '{other}'"))),
            None => return Err(lines.error("missing activation")),
        };

        let tokens = lines.expect("weights")?;
        let count: usize = lines.parse(tokens.first().copied(), "weight count")?;
        let encoded = tokens.get(1).copied().ok_or_else(|| lines.error("missing weight data"))?;
        let bytes = BASE64
            .decode(encoded)
            .map_err(|e| lines.error(format!("invalid weight data: {e}")))?;
        if bytes.len() != count * 4 {
            return Err(lines.error(format!(
                "weight data holds {} values but {count} are declared",
                bytes.len() / 4
            )));
        }
        let weights: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();

        layers.push(LayerSpec { kind, filters, kernel, stride, activation, weights });
    }

    lines.expect("end")?;

    Network::new((c, h, w), bits, mode, layers)
}
