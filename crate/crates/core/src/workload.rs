//! DNN layers as bounds of the seven-loop convolution nest, and networks as
//! ordered lists of layers.
//!
//! Every layer is computed by
//!
//! ```text
//! for b, k, c, y, x, fy, fx:
//!     O[b][k][x][y] += I[b][c][x + fx][y + fy] * W[k][c][fx][fy]
//! ```
//!
//! with unit stride and no padding. Fully-connected layers are the same nest
//! with `X = Y = FX = FY = 1`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::text;

/// One loop of the convolution nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LoopId {
    B,
    K,
    C,
    X,
    Y,
    FX,
    FY,
}

impl LoopId {
    pub const ALL: [LoopId; 7] = [
        LoopId::B,
        LoopId::K,
        LoopId::C,
        LoopId::X,
        LoopId::Y,
        LoopId::FX,
        LoopId::FY,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LoopId::B => "B",
            LoopId::K => "K",
            LoopId::C => "C",
            LoopId::X => "X",
            LoopId::Y => "Y",
            LoopId::FX => "FX",
            LoopId::FY => "FY",
        }
    }

    /// The single tensor that this loop does not index.
    ///
    /// Every loop is irrelevant to exactly one of I, W, O, which is what makes
    /// the reuse classes of a loop order disjoint.
    pub fn unindexed_tensor(self) -> Tensor {
        match self {
            LoopId::K => Tensor::I,
            LoopId::B | LoopId::X | LoopId::Y => Tensor::W,
            LoopId::C | LoopId::FX | LoopId::FY => Tensor::O,
        }
    }
}

impl fmt::Display for LoopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LoopId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LoopId::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Syntax(format!("unknown loop `{s}`")))
    }
}

/// Operand and result tensors of the nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tensor {
    I,
    W,
    O,
}

impl Tensor {
    pub const ALL: [Tensor; 3] = [Tensor::I, Tensor::W, Tensor::O];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Tensor::I => "I",
            Tensor::W => "W",
            Tensor::O => "O",
        }
    }

    pub fn is_indexed_by(self, l: LoopId) -> bool {
        l.unindexed_tensor() != self
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv,
    FC,
}

/// Loop bounds of one CONV or FC layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerShape {
    bounds: [u64; 7],
    kind: LayerKind,
}

impl LayerShape {
    /// Builds a layer from bounds in [`LoopId::ALL`] order.
    pub fn new(kind: LayerKind, bounds: [u64; 7]) -> Result<LayerShape> {
        for l in LoopId::ALL {
            if bounds[l.index()] == 0 {
                return Err(Error::InvalidShape(format!("{l} must be at least 1")));
            }
        }
        if kind == LayerKind::FC {
            for l in [LoopId::X, LoopId::Y, LoopId::FX, LoopId::FY] {
                if bounds[l.index()] != 1 {
                    return Err(Error::InvalidShape(format!(
                        "fc layers require {l}=1, found {}",
                        bounds[l.index()]
                    )));
                }
            }
        }
        Ok(LayerShape { bounds, kind })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(b: u64, k: u64, c: u64, x: u64, y: u64, fx: u64, fy: u64) -> Result<LayerShape> {
        LayerShape::new(LayerKind::Conv, [b, k, c, x, y, fx, fy])
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn bound(&self, l: LoopId) -> u64 {
        self.bounds[l.index()]
    }

    pub fn bounds(&self) -> [u64; 7] {
        self.bounds
    }

    /// Number of multiply-accumulates: one per point of the loop nest.
    pub fn mac_count(&self) -> u64 {
        self.bounds.iter().product()
    }

    /// Number of elements of `tensor` touched by the layer.
    pub fn footprint(&self, tensor: Tensor) -> u64 {
        footprint_of(&self.bounds, tensor)
    }

    /// Loops with a bound greater than one.
    pub fn active_loops(&self) -> Vec<LoopId> {
        LoopId::ALL
            .into_iter()
            .filter(|&l| self.bound(l) > 1)
            .collect()
    }
}

/// Tensor footprint for arbitrary extents given in [`LoopId::ALL`] order.
pub fn footprint_of(e: &[u64; 7], tensor: Tensor) -> u64 {
    let [b, k, c, x, y, fx, fy] = *e;
    match tensor {
        Tensor::I => b * c * (x + fx - 1) * (y + fy - 1),
        Tensor::W => k * c * fx * fy,
        Tensor::O => b * k * x * y,
    }
}

/// A fully-connected layer: a matrix-vector product over a batch.
pub fn make_fc(c: u64, k: u64, b: u64) -> Result<LayerShape> {
    LayerShape::new(LayerKind::FC, [b, k, c, 1, 1, 1, 1])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedLayer {
    pub name: String,
    pub shape: LayerShape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    pub name: String,
    pub layers: Vec<NamedLayer>,
}

impl Network {
    pub fn new(name: impl Into<String>) -> Network {
        Network {
            name: name.into(),
            layers: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: LayerShape) -> Result<()> {
        let name = name.into();
        if self.layers.iter().any(|l| l.name == name) {
            return Err(Error::DuplicateLayer(name));
        }
        self.layers.push(NamedLayer { name, shape });
        Ok(())
    }

    pub fn layer(&self, name: &str) -> Option<&LayerShape> {
        self.layers.iter().find(|l| l.name == name).map(|l| &l.shape)
    }

    /// Parses the workload format. `default_name` is used when the text has
    /// no `network` line.
    pub fn parse(text: &str, default_name: &str) -> Result<Network> {
        let mut net = Network::new(default_name);
        let mut seen = HashSet::new();
        for (line, tokens) in text::records(text) {
            match tokens[0] {
                "network" => {
                    let name = tokens
                        .get(1)
                        .filter(|_| tokens.len() == 2)
                        .ok_or_else(|| Error::Syntax("expected `network <name>`".into()))
                        .map_err(|e| e.at_line(line))?;
                    net.name = name.to_string();
                }
                "layer" => {
                    let (name, shape) = parse_layer(&tokens).map_err(|e| e.at_line(line))?;
                    if !seen.insert(name.clone()) {
                        return Err(Error::DuplicateLayer(name).at_line(line));
                    }
                    net.layers.push(NamedLayer { name, shape });
                }
                other => {
                    return Err(Error::Syntax(format!(
                        "unknown record `{other}`, expected `layer` or `network`"
                    ))
                    .at_line(line))
                }
            }
        }
        Ok(net)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("network {}\n", self.name);
        for l in &self.layers {
            out.push_str(&format_layer(&l.name, &l.shape));
            out.push('\n');
        }
        out
    }
}

pub fn format_layer(name: &str, s: &LayerShape) -> String {
    match s.kind() {
        LayerKind::FC => format!(
            "layer {name} fc B={} K={} C={}",
            s.bound(LoopId::B),
            s.bound(LoopId::K),
            s.bound(LoopId::C)
        ),
        LayerKind::Conv => {
            let mut line = format!("layer {name} conv");
            for l in LoopId::ALL {
                line.push_str(&format!(" {l}={}", s.bound(l)));
            }
            line
        }
    }
}

fn parse_layer(tokens: &[&str]) -> Result<(String, LayerShape)> {
    if tokens.len() < 3 {
        return Err(Error::Syntax(
            "expected `layer <name> <conv|fc> KEY=value ...`".into(),
        ));
    }
    let name = tokens[1].to_string();
    let kind = match tokens[2] {
        "conv" => LayerKind::Conv,
        "fc" => LayerKind::FC,
        "dw" | "depthwise" | "dwconv" => {
            return Err(Error::UnsupportedLayer(format!(
                "`{name}` is a depthwise convolution, which does not reduce over all input channels; \
                 only its pointwise (1x1) part can be modelled"
            )))
        }
        "pool" | "maxpool" | "avgpool" | "norm" | "lrn" | "bn" | "eltwise" | "add" | "relu" => {
            return Err(Error::UnsupportedLayer(format!(
                "`{name}` is a {} layer; only conv and fc layers are modelled",
                tokens[2]
            )))
        }
        other => {
            return Err(Error::Syntax(format!(
                "unknown layer kind `{other}`, expected `conv` or `fc`"
            )))
        }
    };
    let mut bounds: [Option<i64>; 7] = [None; 7];
    for tok in &tokens[3..] {
        let (key, value) = text::key_value(tok)?;
        if key.eq_ignore_ascii_case("stride") || key == "S" {
            let s = text::parse_int(key, value)?;
            if s != 1 {
                return Err(Error::InvalidShape(format!(
                    "stride {s} is not supported; only unit stride is modelled"
                )));
            }
            continue;
        }
        let l: LoopId = key.parse()?;
        if bounds[l.index()].is_some() {
            return Err(Error::Syntax(format!("`{key}` given twice")));
        }
        bounds[l.index()] = Some(text::parse_int(key, value)?);
    }
    let mut out = [1u64; 7];
    for l in LoopId::ALL {
        match bounds[l.index()] {
            Some(v) if v < 1 => {
                return Err(Error::InvalidShape(format!("{l}={v} must be at least 1")))
            }
            Some(v) => out[l.index()] = v as u64,
            None if kind == LayerKind::Conv => {
                return Err(Error::Syntax(format!("conv layer is missing `{l}`")))
            }
            None => {}
        }
    }
    Ok((name, LayerShape::new(kind, out)?))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("network");
    Network::parse(&text, stem)
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, net.to_text())?;
    Ok(())
}
