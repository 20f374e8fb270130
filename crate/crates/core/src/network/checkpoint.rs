//! Checkpoint encodings.
//!
//! Both encodings share one header of `key value` lines:
//!
//! ```text
//! format 1
//! n_sd 3
//! parametric false
//! mode mixed
//! widths 3 60 60 10
//! activation tanh
//! l_ref 1.1
//! v_ref 1.4
//! rho 1
//! mu 0.02
//! seed 42
//! k_scaling l_ref
//! scenario static
//! k_range 0 0
//! k_ref 0
//! params 7990
//! ```
//!
//! The text encoding follows the header with one parameter per line in
//! canonical order (shortest round-trip decimal). The binary encoding is the
//! 8-byte magic `PFNNCKPT`, a little-endian `u32` header length, the header
//! bytes, then the parameters as little-endian `f64`.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::autodiff::{Activation, Mlp};
use crate::physics::ReferenceScales;

use super::{FieldMode, NetworkParams, OutputLayout};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PFNNCKPT";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint (line {line}): {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
}

fn bad(line: usize, msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Format { line, msg: msg.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckpointFormat {
    Text,
    Binary,
}

/// Network parameters plus everything needed to interpret them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub scales: ReferenceScales,
    pub scenario: String,
    pub k_range: [f64; 2],
    pub k_ref: f64,
}

impl Checkpoint {
    pub fn header(&self) -> String {
        let p = &self.params;
        let mut h = String::new();
        let widths: Vec<String> = p.mlp.widths().iter().map(|w| w.to_string()).collect();
        let _ = writeln!(h, "format {FORMAT_VERSION}");
        let _ = writeln!(h, "n_sd {}", p.n_sd);
        let _ = writeln!(h, "parametric {}", p.parametric);
        let _ = writeln!(h, "mode {}", p.mode.name());
        let _ = writeln!(h, "widths {}", widths.join(" "));
        let _ = writeln!(h, "activation {}", p.mlp.activation().name());
        let _ = writeln!(h, "l_ref {}", self.scales.l_ref);
        let _ = writeln!(h, "v_ref {}", self.scales.v_ref);
        let _ = writeln!(h, "rho {}", self.scales.rho);
        let _ = writeln!(h, "mu {}", self.scales.mu);
        let _ = writeln!(h, "seed {}", p.seed);
        let _ = writeln!(h, "k_scaling l_ref");
        let _ = writeln!(h, "scenario {}", self.scenario);
        let _ = writeln!(h, "k_range {} {}", self.k_range[0], self.k_range[1]);
        let _ = writeln!(h, "k_ref {}", self.k_ref);
        let _ = writeln!(h, "params {}", p.mlp.n_params());
        h
    }

    pub fn to_text(&self) -> String {
        let mut s = self.header();
        for v in self.params.mlp.params() {
            let _ = writeln!(s, "{v:?}");
        }
        s
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::with_capacity(12 + header.len() + 8 * self.params.mlp.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for v in self.params.mlp.params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn encode(&self, format: CheckpointFormat) -> Vec<u8> {
        match format {
            CheckpointFormat::Text => self.to_text().into_bytes(),
            CheckpointFormat::Binary => self.to_binary(),
        }
    }

    pub fn write(&self, path: &Path, format: CheckpointFormat) -> Result<(), CheckpointError> {
        std::fs::write(path, self.encode(format))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, CheckpointError> {
        Self::decode(&std::fs::read(path)?)
    }

    /// Decodes either encoding, detected by the magic bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.starts_with(MAGIC) {
            let len_bytes = bytes.get(8..12).ok_or_else(|| bad(0, "truncated binary header"))?;
            let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
            let header = bytes.get(12..12 + len).ok_or_else(|| bad(0, "truncated binary header"))?;
            let header = std::str::from_utf8(header).map_err(|_| bad(0, "header is not UTF-8"))?;
            let (mut ck, n) = parse_header(header.lines().enumerate())?;
            let body = &bytes[12 + len..];
            if body.len() != 8 * n {
                return Err(bad(0, format!("expected {} parameter bytes, found {}", 8 * n, body.len())));
            }
            let values: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            finish(&mut ck, values, 0)?;
            Ok(ck)
        } else {
            let text = std::str::from_utf8(bytes).map_err(|_| bad(0, "not UTF-8 text"))?;
            let mut lines = text.lines().enumerate();
            let header: Vec<(usize, &str)> = lines.by_ref().take_while(|(_, l)| !l.starts_with("params ")).collect();
            let params_line = text.lines().nth(header.len());
            let mut all = header.clone();
            if let Some(l) = params_line {
                all.push((header.len(), l));
            }
            let (mut ck, n) = parse_header(all.into_iter())?;
            let mut values = Vec::with_capacity(n);
            for (i, l) in lines {
                let l = l.trim();
                if l.is_empty() {
                    continue;
                }
                values.push(l.parse::<f64>().map_err(|_| bad(i + 1, format!("bad parameter value '{l}'")))?);
            }
            if values.len() != n {
                return Err(bad(0, format!("expected {n} parameters, found {}", values.len())));
            }
            finish(&mut ck, values, header.len() + 2)?;
            Ok(ck)
        }
    }

    /// Stable identifier: FNV-1a over the binary encoding.
    pub fn id(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.to_binary() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    pub fn layout(&self) -> OutputLayout {
        self.params.layout()
    }

    /// Fields that would make `other`'s parameters meaningless for this run.
    pub fn layout_differences(&self, other: &Checkpoint) -> Vec<String> {
        let (a, b) = (&self.params, &other.params);
        let mut d = Vec::new();
        if a.n_sd != b.n_sd {
            d.push(format!("n_sd {} vs {}", a.n_sd, b.n_sd));
        }
        if a.parametric != b.parametric {
            d.push(format!("parametric {} vs {}", a.parametric, b.parametric));
        }
        if a.mode != b.mode {
            d.push(format!("mode {} vs {}", a.mode.name(), b.mode.name()));
        }
        if a.mlp.widths() != b.mlp.widths() {
            d.push(format!("widths {:?} vs {:?}", a.mlp.widths(), b.mlp.widths()));
        }
        if a.mlp.activation() != b.mlp.activation() {
            d.push(format!("activation {} vs {}", a.mlp.activation().name(), b.mlp.activation().name()));
        }
        if self.scales != other.scales {
            d.push(format!("scales {:?} vs {:?}", self.scales, other.scales));
        }
        d
    }
}

struct Partial {
    n_sd: Option<usize>,
    parametric: Option<bool>,
    mode: FieldMode,
    widths: Option<Vec<usize>>,
    activation: Option<Activation>,
    scales: [Option<f64>; 4],
    seed: u64,
    scenario: String,
    k_range: [f64; 2],
    k_ref: f64,
}

fn parse_header<'a>(lines: impl Iterator<Item = (usize, &'a str)>) -> Result<(Checkpoint, usize), CheckpointError> {
    let mut p = Partial {
        n_sd: None,
        parametric: None,
        mode: FieldMode::Mixed,
        widths: None,
        activation: None,
        scales: [None; 4],
        seed: 0,
        scenario: "static".into(),
        k_range: [0.0, 0.0],
        k_ref: 0.0,
    };
    let mut n_params = None;
    let mut version = None;
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(line_no, format!("bad number for {key}")));
        let int = |s: &str| s.trim().parse::<usize>().map_err(|_| bad(line_no, format!("bad integer for {key}")));
        match key {
            "format" => {
                let v = rest.trim().parse::<u32>().map_err(|_| bad(line_no, "bad format version"))?;
                if v != FORMAT_VERSION {
                    return Err(CheckpointError::Version(v));
                }
                version = Some(v);
            }
            "n_sd" => p.n_sd = Some(int(rest)?),
            "parametric" => {
                p.parametric = Some(rest.trim().parse().map_err(|_| bad(line_no, "bad parametric flag"))?)
            }
            "mode" => p.mode = FieldMode::parse(rest.trim()).ok_or_else(|| bad(line_no, "unknown mode"))?,
            "widths" => p.widths = Some(rest.split_whitespace().map(int).collect::<Result<_, _>>()?),
            "activation" => {
                p.activation = Some(Activation::parse(rest.trim()).ok_or_else(|| bad(line_no, "unknown activation"))?)
            }
            "l_ref" => p.scales[0] = Some(num(rest)?),
            "v_ref" => p.scales[1] = Some(num(rest)?),
            "rho" => p.scales[2] = Some(num(rest)?),
            "mu" => p.scales[3] = Some(num(rest)?),
            "seed" => p.seed = rest.trim().parse().map_err(|_| bad(line_no, "bad seed"))?,
            "k_scaling" => {
                if rest.trim() != "l_ref" {
                    return Err(bad(line_no, "unsupported k scaling"));
                }
            }
            "scenario" => p.scenario = rest.trim().to_string(),
            "k_range" => {
                let v: Vec<f64> = rest.split_whitespace().map(num).collect::<Result<_, _>>()?;
                if v.len() != 2 {
                    return Err(bad(line_no, "k_range needs two values"));
                }
                p.k_range = [v[0], v[1]];
            }
            "k_ref" => p.k_ref = num(rest)?,
            "params" => n_params = Some(int(rest)?),
            other => return Err(bad(line_no, format!("unknown header key '{other}'"))),
        }
    }
    if version.is_none() {
        return Err(bad(1, "missing format line"));
    }
    let missing = |what: &str| bad(0, format!("header is missing '{what}'"));
    let n_sd = p.n_sd.ok_or_else(|| missing("n_sd"))?;
    let widths = p.widths.ok_or_else(|| missing("widths"))?;
    let activation = p.activation.ok_or_else(|| missing("activation"))?;
    let parametric = p.parametric.ok_or_else(|| missing("parametric"))?;
    let [l, v, r, m] = p.scales;
    let scales = ReferenceScales {
        l_ref: l.ok_or_else(|| missing("l_ref"))?,
        v_ref: v.ok_or_else(|| missing("v_ref"))?,
        rho: r.ok_or_else(|| missing("rho"))?,
        mu: m.ok_or_else(|| missing("mu"))?,
    };
    scales.validate().map_err(|e| bad(0, e.to_string()))?;
    let layout = OutputLayout::new(n_sd, p.mode).map_err(|e| bad(0, e.to_string()))?;
    if widths.first() != Some(&(n_sd + usize::from(parametric))) || widths.last() != Some(&layout.width()) {
        return Err(bad(0, format!("widths {widths:?} do not fit n_sd {n_sd}, parametric {parametric}")));
    }
    let mlp = Mlp::zeros(widths, activation).map_err(|e| bad(0, e.to_string()))?;
    let n = n_params.ok_or_else(|| missing("params"))?;
    if n != mlp.n_params() {
        return Err(bad(0, format!("params {n} does not match widths ({})", mlp.n_params())));
    }
    let params = NetworkParams { mlp, n_sd, parametric, mode: p.mode, seed: p.seed };
    Ok((Checkpoint { params, scales, scenario: p.scenario, k_range: p.k_range, k_ref: p.k_ref }, n))
}

fn finish(ck: &mut Checkpoint, values: Vec<f64>, line: usize) -> Result<(), CheckpointError> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(bad(line + i, "non-finite parameter"));
    }
    ck.params.mlp.set_params(&values).map_err(|e| bad(line, e.to_string()))
}
