//! Architecture descriptions: the six named designs plus an explicit layer
//! grammar, with valid-convolution shape arithmetic.

use crate::patch::Mode;
use crate::{Error, Result};

/// One layer of an architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Valid convolution with `kernels` kernels of side `kernel`.
    Conv { kernel: usize, kernels: usize },
    /// Max pooling, window `size`, step `stride`; windows that do not fit
    /// are dropped (floor arithmetic).
    Pool { size: usize, stride: usize },
    /// Fully connected layer with `neurons` outputs.
    Dense { neurons: usize },
}

/// A parsed architecture: ordered layers plus input geometry.
///
/// The final classifier layer `Dense(num_classes)` is always present as the
/// last element of `layers`; activation functions (PReLU) follow every conv
/// and dense layer except the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub notation: String,
    pub rank: usize,
    pub input_size: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

const NAMED: &[(&str, &str)] = &[
    ("3-3-3-3-3", "i31 c3x64 p3s2 c3x64 c3x64 c3x64 c3x64 f128 f128"),
    ("3-3-3-3-3-3-3-3", "i31 c3x64 c3x64 c3x64 c3x64 c3x64 c3x64 c3x64 c3x64 f128 f128"),
    ("5-5-5-5-5", "i31 c5x64 c5x64 c5x64 c5x64 c5x64 f128 f128"),
    ("7-5-3", "i31 c7x64 p3s2 c5x64 c3x64 f128"),
    ("9-7-5-3-3", "i31 c9x64 c7x64 c5x64 c3x64 c3x64 f128 f128"),
    ("smallalex", "i31 c11x64 p2s1 c5x64 p2s1 c3x64 c3x64 c3x64 f128 f128"),
];

/// The six built-in architecture names.
pub fn named_archs() -> Vec<&'static str> {
    vec!["3-3-3-3-3", "3-3-3-3-3-3-3-3", "5-5-5-5-5", "7-5-3", "9-7-5-3-3", "SmallAlex"]
}

/// Parse an architecture by name or explicit layer string.
///
/// The explicit grammar is whitespace- or `.`-separated tokens:
/// `i<size>` (input side), `c<kernel>x<kernels>`, `p<size>s<stride>`,
/// `f<neurons>`. The classifier layer `f<num_classes>` is appended
/// automatically and must not be written.
pub fn parse_arch(
    notation: &str,
    rank: usize,
    in_channels: usize,
    num_classes: usize,
) -> Result<ArchSpec> {
    if rank != 2 && rank != 3 {
        return Err(Error::Config(format!("rank must be 2 or 3, got {rank}")));
    }
    if num_classes < 2 {
        return Err(Error::Config("need at least two classes".into()));
    }
    let trimmed = notation.trim();
    let key = trimmed.to_ascii_lowercase().replace([' ', '_'], "");
    let (display, expanded) = match NAMED.iter().find(|(n, _)| *n == key) {
        Some((_, e)) => (trimmed.to_string(), (*e).to_string()),
        None => (trimmed.to_string(), trimmed.to_string()),
    };

    let mut input_size = None;
    let mut layers = Vec::new();
    for token in expanded.split(|c: char| c.is_whitespace() || c == '.') {
        if token.is_empty() {
            continue;
        }
        let t = token.to_ascii_lowercase();
        let bad = || Error::Config(format!("cannot parse layer token `{token}` in `{notation}`"));
        if let Some(rest) = t.strip_prefix('i') {
            if input_size.is_some() || !layers.is_empty() {
                return Err(Error::Config("input size must be the first token".into()));
            }
            input_size = Some(rest.parse::<usize>().map_err(|_| bad())?);
        } else if let Some(rest) = t.strip_prefix('c') {
            let (k, n) = rest.split_once('x').ok_or_else(bad)?;
            layers.push(LayerSpec::Conv {
                kernel: k.parse().map_err(|_| bad())?,
                kernels: n.parse().map_err(|_| bad())?,
            });
        } else if let Some(rest) = t.strip_prefix('p') {
            let (s, st) = rest.split_once('s').ok_or_else(bad)?;
            layers.push(LayerSpec::Pool {
                size: s.parse().map_err(|_| bad())?,
                stride: st.parse().map_err(|_| bad())?,
            });
        } else if let Some(rest) = t.strip_prefix('f') {
            layers.push(LayerSpec::Dense { neurons: rest.parse().map_err(|_| bad())? });
        } else {
            return Err(bad());
        }
    }
    let input_size =
        input_size.ok_or_else(|| Error::Config(format!("`{notation}` has no input token")))?;
    layers.push(LayerSpec::Dense { neurons: num_classes });

    let spec = ArchSpec {
        notation: display,
        rank,
        input_size,
        in_channels,
        num_classes,
        layers,
    };
    spec.validate()?;
    Ok(spec)
}

/// Shorthand: architecture for a patch mode (rank and channel count are
/// implied by the mode).
pub fn parse_arch_for_mode(notation: &str, mode: Mode, num_classes: usize) -> Result<ArchSpec> {
    parse_arch(notation, mode.rank(), mode.channels(), num_classes)
}

impl ArchSpec {
    /// Spatial side after each conv/pool layer, starting with the input size.
    /// Dense layers do not appear (they collapse the spatial extent).
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut trace = vec![self.input_size];
        let mut cur = self.input_size;
        for l in &self.layers {
            match *l {
                LayerSpec::Conv { kernel, .. } => {
                    cur = cur.saturating_sub(kernel - 1);
                    trace.push(cur);
                }
                LayerSpec::Pool { size, stride } => {
                    cur = if cur >= size { (cur - size) / stride + 1 } else { 0 };
                    trace.push(cur);
                }
                LayerSpec::Dense { .. } => break,
            }
        }
        trace
    }

    fn validate(&self) -> Result<()> {
        let mut seen_dense = false;
        let mut dense_count = 0;
        for l in &self.layers {
            match *l {
                LayerSpec::Conv { kernel, kernels } => {
                    if seen_dense {
                        return Err(Error::Config("conv after dense is not supported".into()));
                    }
                    if kernel == 0 || kernels == 0 {
                        return Err(Error::Config("zero-sized conv layer".into()));
                    }
                }
                LayerSpec::Pool { size, stride } => {
                    if seen_dense {
                        return Err(Error::Config("pool after dense is not supported".into()));
                    }
                    if size == 0 || stride == 0 {
                        return Err(Error::Config("zero-sized pool layer".into()));
                    }
                }
                LayerSpec::Dense { neurons } => {
                    seen_dense = true;
                    dense_count += 1;
                    if neurons == 0 {
                        return Err(Error::Config("zero-neuron dense layer".into()));
                    }
                }
            }
        }
        if dense_count < 2 {
            return Err(Error::Config(
                "need at least one hidden dense layer before the classifier".into(),
            ));
        }
        let trace = self.spatial_trace();
        if trace.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "architecture collapses below spatial size 1: trace {trace:?} from input {}",
                self.input_size
            )));
        }
        Ok(())
    }

    /// Side of the conv stack output (the extent the first dense layer sees).
    pub fn final_spatial(&self) -> usize {
        *self.spatial_trace().last().unwrap()
    }

    /// Feature dimensionality: neurons of the second-last dense layer.
    pub fn feature_dim(&self) -> usize {
        let denses: Vec<usize> = self
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { neurons } => Some(*neurons),
                _ => None,
            })
            .collect();
        denses[denses.len() - 2]
    }

    /// Per-axis extents of a patch-shaped input.
    pub fn input_spatial(&self) -> [usize; 3] {
        match self.rank {
            3 => [self.input_size; 3],
            _ => [1, self.input_size, self.input_size],
        }
    }

    /// Same architecture with every conv width and hidden dense width
    /// replaced; used for reduced-size numerical checks.
    pub fn with_widths(&self, conv_kernels: usize, dense_neurons: usize) -> ArchSpec {
        let n = self.layers.len();
        let layers: Vec<LayerSpec> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| match *l {
                LayerSpec::Conv { kernel, .. } => {
                    LayerSpec::Conv { kernel, kernels: conv_kernels }
                }
                LayerSpec::Dense { .. } if i + 1 < n => {
                    LayerSpec::Dense { neurons: dense_neurons }
                }
                other => other,
            })
            .collect();
        let mut spec = ArchSpec { layers, notation: String::new(), ..self.clone() };
        spec.notation = spec.explicit_notation();
        spec
    }

    /// Same architecture evaluated at a different input side.
    pub fn with_input_size(&self, input_size: usize) -> Result<ArchSpec> {
        let mut spec = ArchSpec { input_size, notation: String::new(), ..self.clone() };
        spec.notation = spec.explicit_notation();
        spec.validate()?;
        Ok(spec)
    }

    /// Explicit token string that re-parses to this spec (classifier omitted).
    pub fn explicit_notation(&self) -> String {
        let mut parts = vec![format!("i{}", self.input_size)];
        for l in &self.layers[..self.layers.len() - 1] {
            parts.push(match *l {
                LayerSpec::Conv { kernel, kernels } => format!("c{kernel}x{kernels}"),
                LayerSpec::Pool { size, stride } => format!("p{size}s{stride}"),
                LayerSpec::Dense { neurons } => format!("f{neurons}"),
            });
        }
        parts.join(" ")
    }

    /// Smallest input side for which the spatial trace stays positive.
    pub fn min_input_size(&self) -> usize {
        for size in 1.. {
            let probe = ArchSpec { input_size: size, ..self.clone() };
            if probe.spatial_trace().iter().all(|&s| s >= 1) {
                return size;
            }
        }
        unreachable!()
    }
}
