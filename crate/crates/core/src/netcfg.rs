//! Network configuration strings.
//!
//! ```text
//! spec    = layer { "-" layer } ;
//! layer   = "C(" int ")" | "MP" [ "(" num "," num ")" ] | "GAP" | "GMP"
//!         | "FC(" int ")" | "D(" num ")" ;
//! num     = decimal [ "/" decimal ] ;
//! decimal = digit { digit } [ "." { digit } ] | "." digit { digit } ;
//! int     = digit { digit } ;
//! ```
//!
//! `C(c)` is a convolution with `c` output channels, `MP(r,rho)` a max pooling
//! onto the next point-cloud pyramid level built with voxel size `r` and
//! radius `rho`, bare `MP` a pooling onto the next level of a general-graph
//! pyramid, `GAP`/`GMP` global average/max pooling, `FC(c)` a fully
//! connected layer and `D(p)` dropout with probability `p`.

use std::fmt;
use std::str::FromStr;

use crate::error::{EccError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerSpec {
    Conv(usize),
    MaxPoolGrid { resolution: f64, radius: f64 },
    MaxPoolLevel,
    GlobalAvgPool,
    GlobalMaxPool,
    FullyConnected(usize),
    Dropout(f64),
}

impl LayerSpec {
    fn is_pool(&self) -> bool {
        matches!(self, LayerSpec::MaxPoolGrid { .. } | LayerSpec::MaxPoolLevel)
    }

    fn is_global(&self) -> bool {
        matches!(self, LayerSpec::GlobalAvgPool | LayerSpec::GlobalMaxPool)
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv(c) => write!(f, "C({c})"),
            LayerSpec::MaxPoolGrid { resolution, radius } => write!(f, "MP({resolution},{radius})"),
            LayerSpec::MaxPoolLevel => f.write_str("MP"),
            LayerSpec::GlobalAvgPool => f.write_str("GAP"),
            LayerSpec::GlobalMaxPool => f.write_str("GMP"),
            LayerSpec::FullyConnected(c) => write!(f, "FC({c})"),
            LayerSpec::Dropout(p) => write!(f, "D({p})"),
        }
    }
}

/// Parsed and validated layer sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    pub fn parse(config: &str) -> Result<Self> {
        let layers = Parser { src: config.as_bytes(), pos: 0 }.spec()?;
        let spec = NetSpec { layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn render(&self) -> String {
        self.to_string()
    }

    /// Structural rules: at most one global pooling; no convolution or
    /// pooling after a global pooling or a fully connected layer; pooling
    /// forms not mixed; positive sizes; dropout in `[0, 1)`.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(EccError::Semantic("empty network".into()));
        }
        let mut global = false;
        let mut dense = false;
        let mut grid_pools = false;
        let mut level_pools = false;
        for (k, layer) in self.layers.iter().enumerate() {
            let at = |msg: &str| EccError::Semantic(format!("layer {} ({layer}): {msg}", k + 1));
            match *layer {
                LayerSpec::Conv(c) | LayerSpec::FullyConnected(c) if c == 0 => return Err(at("width must be positive")),
                LayerSpec::Dropout(p) if !(0.0..1.0).contains(&p) => return Err(at("probability must be in [0, 1)")),
                LayerSpec::MaxPoolGrid { resolution, radius } if !(resolution > 0.0 && radius > 0.0) => {
                    return Err(at("resolution and radius must be positive"));
                }
                _ => {}
            }
            if (matches!(layer, LayerSpec::Conv(_)) || layer.is_pool()) && (global || dense) {
                return Err(at("not allowed after global pooling or a fully connected layer"));
            }
            if layer.is_global() {
                if global {
                    return Err(at("only one global pooling is allowed"));
                }
                if dense {
                    return Err(at("global pooling after a fully connected layer"));
                }
                global = true;
            }
            match layer {
                LayerSpec::MaxPoolGrid { .. } => grid_pools = true,
                LayerSpec::MaxPoolLevel => level_pools = true,
                LayerSpec::FullyConnected(_) => dense = true,
                _ => {}
            }
        }
        if grid_pools && level_pools {
            return Err(EccError::Semantic("MP(r,rho) and bare MP cannot be mixed".into()));
        }
        Ok(())
    }

    pub fn num_pools(&self) -> usize {
        self.layers.iter().filter(|l| l.is_pool()).count()
    }

    pub fn has_global_pool(&self) -> bool {
        self.layers.iter().any(LayerSpec::is_global)
    }

    /// `(resolution, radius)` of every parameterized pooling, in order.
    pub fn grid_levels(&self) -> Vec<(f64, f64)> {
        self.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::MaxPoolGrid { resolution, radius } => Some((resolution, radius)),
                _ => None,
            })
            .collect()
    }

    /// Output width of the last fully connected layer, if any.
    pub fn num_outputs(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            LayerSpec::FullyConnected(c) => Some(*c),
            _ => None,
        })
    }
}

impl fmt::Display for NetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, layer) in self.layers.iter().enumerate() {
            if k > 0 {
                f.write_str("-")?;
            }
            write!(f, "{layer}")?;
        }
        Ok(())
    }
}

impl FromStr for NetSpec {
    type Err = EccError;

    fn from_str(s: &str) -> Result<Self> {
        NetSpec::parse(s)
    }
}

/// Parses a `-`-separated list of positive widths such as `FC(16)-FC(32)`
/// or `16-32`. An empty string yields no hidden layers.
pub fn parse_widths(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut offset = 0;
    for part in s.split('-') {
        let inner = part
            .strip_prefix("FC(")
            .and_then(|p| p.strip_suffix(')'))
            .unwrap_or(part);
        match inner.parse::<usize>() {
            Ok(w) if w > 0 => out.push(w),
            _ => {
                return Err(EccError::Syntax {
                    offset,
                    expected: "positive width or FC(int)".into(),
                    found: format!("{part:?}"),
                })
            }
        }
        offset += part.len() + 1;
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

const LAYER_START: &str = "one of C(, MP, GAP, GMP, FC(, D(";

impl Parser<'_> {
    fn found(&self) -> String {
        match self.src.get(self.pos) {
            None => "end of input".into(),
            Some(_) => {
                // Report the rest of the offending token, cut at a char boundary.
                let rest = String::from_utf8_lossy(&self.src[self.pos..]);
                let token: String = rest.chars().take_while(|&c| c != '-').take(12).collect();
                format!("{token:?}")
            }
        }
    }

    fn error(&self, expected: &str) -> EccError {
        EccError::Syntax {
            offset: self.pos,
            expected: expected.into(),
            found: self.found(),
        }
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.src[self.pos..].starts_with(lit.as_bytes()) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> Result<()> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(self.error(&format!("{lit:?}")))
        }
    }

    fn spec(mut self) -> Result<Vec<LayerSpec>> {
        let mut layers = vec![self.layer()?];
        while self.pos < self.src.len() {
            if !self.eat("-") {
                return Err(self.error("\"-\" or end of input"));
            }
            layers.push(self.layer()?);
        }
        Ok(layers)
    }

    fn layer(&mut self) -> Result<LayerSpec> {
        if self.eat("C(") {
            let c = self.int()?;
            self.expect(")")?;
            Ok(LayerSpec::Conv(c))
        } else if self.eat("MP") {
            if self.eat("(") {
                let resolution = self.num()?;
                self.expect(",")?;
                let radius = self.num()?;
                self.expect(")")?;
                Ok(LayerSpec::MaxPoolGrid { resolution, radius })
            } else {
                Ok(LayerSpec::MaxPoolLevel)
            }
        } else if self.eat("GAP") {
            Ok(LayerSpec::GlobalAvgPool)
        } else if self.eat("GMP") {
            Ok(LayerSpec::GlobalMaxPool)
        } else if self.eat("FC(") {
            let c = self.int()?;
            self.expect(")")?;
            Ok(LayerSpec::FullyConnected(c))
        } else if self.eat("D(") {
            let p = self.num()?;
            self.expect(")")?;
            Ok(LayerSpec::Dropout(p))
        } else {
            Err(self.error(LAYER_START))
        }
    }

    fn digits(&mut self) -> usize {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        self.pos - start
    }

    fn int(&mut self) -> Result<usize> {
        let start = self.pos;
        if self.digits() == 0 {
            return Err(self.error("integer"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<u32>().map(|v| v as usize).map_err(|_| {
            self.pos = start;
            self.error("integer below 2^32")
        })
    }

    fn decimal(&mut self) -> Result<f64> {
        let start = self.pos;
        let whole = self.digits();
        let mut frac = 0;
        if self.eat(".") {
            frac = self.digits();
        }
        if whole == 0 && frac == 0 {
            self.pos = start;
            return Err(self.error("number"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        Ok(text.parse::<f64>().expect("validated decimal"))
    }

    fn num(&mut self) -> Result<f64> {
        let value = self.decimal()?;
        if self.eat("/") {
            let at = self.pos;
            let denom = self.decimal()?;
            if denom == 0.0 {
                self.pos = at;
                return Err(self.error("nonzero denominator"));
            }
            return Ok(value / denom);
        }
        Ok(value)
    }
}
