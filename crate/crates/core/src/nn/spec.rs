use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Elementwise or pooling step applied after a layer's convolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Relu,
    Sigmoid,
    MaxPool(usize, usize),
    /// Over the map dimension, independently at every (t, v).
    Softmax,
    Dropout(f64),
}

impl Op {
    pub fn output_dims(&self, dims: [usize; 3]) -> [usize; 3] {
        match *self {
            Op::MaxPool(t2, v2) => [dims[0].div_ceil(t2), dims[1].div_ceil(v2), dims[2]],
            _ => dims,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Relu => write!(f, "relu"),
            Op::Sigmoid => write!(f, "sigmoid"),
            Op::MaxPool(t, v) => write!(f, "maxpool({t},{v})"),
            Op::Softmax => write!(f, "softmax"),
            Op::Dropout(r) => write!(f, "dropout({r})"),
        }
    }
}

impl FromStr for Op {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let args = |name: &str| -> Option<Vec<&str>> {
            s.strip_prefix(name)?
                .strip_prefix('(')?
                .strip_suffix(')')
                .map(|inner| inner.split(',').map(str::trim).collect())
        };
        let bad = || Error::invalid(format!("bad layer op `{s}`"));
        match s {
            "relu" => Ok(Op::Relu),
            "sigmoid" => Ok(Op::Sigmoid),
            "softmax" => Ok(Op::Softmax),
            _ => {
                if let Some(a) = args("maxpool") {
                    if a.len() != 2 {
                        return Err(bad());
                    }
                    let t = a[0].parse().map_err(|_| bad())?;
                    let v = a[1].parse().map_err(|_| bad())?;
                    if t == 0 || v == 0 {
                        return Err(bad());
                    }
                    Ok(Op::MaxPool(t, v))
                } else if let Some(a) = args("dropout") {
                    let r: f64 = a.first().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                    if !(0.0..1.0).contains(&r) || a.len() != 1 {
                        return Err(bad());
                    }
                    Ok(Op::Dropout(r))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

/// Convolution `[t1, v1, L, n1]` followed by a chain of ops.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub conv: [usize; 4],
    pub ops: Vec<Op>,
}

impl LayerSpec {
    pub fn new(conv: [usize; 4], ops: Vec<Op>) -> Self {
        Self { conv, ops }
    }

    pub fn weight_len(&self) -> usize {
        self.conv.iter().product()
    }

    pub fn conv_output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [t1, v1, l, n1] = self.conv;
        if input[2] != l || input[0] < t1 || input[1] < v1 {
            return Err(Error::Shape(format!(
                "conv {:?} cannot apply to input {:?}",
                self.conv, input
            )));
        }
        Ok([input[0] - t1 + 1, input[1] - v1 + 1, n1])
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut d = self.conv_output_dims(input)?;
        for op in &self.ops {
            d = op.output_dims(d);
        }
        Ok(d)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [t, v, l, n] = self.conv;
        write!(f, "{t}x{v}x{l}x{n}")?;
        for op in &self.ops {
            write!(f, " {op}")?;
        }
        Ok(())
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let conv_text = parts.next().ok_or_else(|| Error::invalid("empty layer spec"))?;
        let dims: Vec<usize> = conv_text
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("bad conv shape `{conv_text}`")))?;
        if dims.len() != 4 || dims.contains(&0) {
            return Err(Error::invalid(format!("bad conv shape `{conv_text}`")));
        }
        let ops = parts.map(str::parse).collect::<Result<Vec<Op>>>()?;
        Ok(LayerSpec::new([dims[0], dims[1], dims[2], dims[3]], ops))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Negative log of the probability of the labelled class.
    Log,
    /// Squared Euclidean distance to a target vector.
    Euclidean,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Log => "log",
            LossKind::Euclidean => "euclidean",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "log" => Ok(LossKind::Log),
            "euclidean" => Ok(LossKind::Euclidean),
            other => Err(Error::invalid(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dims: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub loss: LossKind,
}

impl NetworkSpec {
    pub fn new(input_dims: [usize; 3], layers: Vec<LayerSpec>, loss: LossKind) -> Result<Self> {
        let spec = Self {
            input_dims,
            layers,
            loss,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Dims after each layer.
    pub fn layer_dims(&self) -> Result<Vec<[usize; 3]>> {
        let mut d = self.input_dims;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            d = layer.output_dims(d)?;
            out.push(d);
        }
        Ok(out)
    }

    pub fn output_dims(&self) -> Result<[usize; 3]> {
        Ok(*self.layer_dims()?.last().unwrap_or(&self.input_dims))
    }

    pub fn output_len(&self) -> usize {
        self.output_dims().map(|d| d.iter().product()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        self.layer_dims()?;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight_len() + l.conv[3]).sum()
    }

    /// Single-line textual form, stable across runs; used for hashing.
    pub fn canonical(&self) -> String {
        let [n, m, l] = self.input_dims;
        let layers: Vec<String> = self.layers.iter().map(|l| l.to_string()).collect();
        format!("input={n}x{m}x{l}; layers={}; loss={}", layers.join(" | "), self.loss)
    }
}
