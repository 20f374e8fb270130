//! Point-set and reference-solution CSV files.
//!
//! Point sets: header `x,y[,z],set,vx,vy[,vz],p[,area]`, one point per row,
//! `set` one of `f`, `D`, `N`, `M`, label cells empty where not applicable.
//! Reference solutions: header `x,y[,z],vx,vy[,vz],p`. Lines starting with
//! `#` are comments. All quantities are SI.

use std::io::{Read, Write};
use std::path::Path;

use super::{CollocationPoint, CollocationSet, Population, SamplingError};

/// Velocity and pressure samples of a reference flow field.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub n_sd: usize,
    pub positions: Vec<[f64; 3]>,
    pub velocity: Vec<[f64; 3]>,
    pub pressure: Vec<f64>,
}

impl ReferenceSolution {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn open(path: &Path) -> Result<std::fs::File, SamplingError> {
    std::fs::File::open(path).map_err(|source| SamplingError::Io { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<std::fs::File, SamplingError> {
    std::fs::File::create(path).map_err(|source| SamplingError::Io { path: path.display().to_string(), source })
}

fn csv_err(e: csv::Error) -> SamplingError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    let msg = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} columns, found {len}")
        }
        _ => e.to_string(),
    };
    SamplingError::Parse { line, msg }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

struct Columns {
    idx: Vec<(String, usize)>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Self { idx: headers.iter().enumerate().map(|(i, h)| (h.to_string(), i)).collect() }
    }

    fn get(&self, name: &str) -> Option<usize> {
        self.idx.iter().find(|(h, _)| h == name).map(|&(_, i)| i)
    }

    fn require(&self, name: &str) -> Result<usize, SamplingError> {
        self.get(name).ok_or_else(|| SamplingError::Parse { line: 1, msg: format!("missing column '{name}'") })
    }
}

fn cell(rec: &csv::StringRecord, i: usize, line: u64, name: &str) -> Result<Option<f64>, SamplingError> {
    let s = rec.get(i).unwrap_or("");
    if s.is_empty() {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| SamplingError::Parse { line, msg: format!("bad number '{s}' in column {name}") })?;
    if !v.is_finite() {
        return Err(SamplingError::Parse { line, msg: format!("non-finite value in column {name}") });
    }
    Ok(Some(v))
}

fn required(rec: &csv::StringRecord, i: usize, line: u64, name: &str) -> Result<f64, SamplingError> {
    cell(rec, i, line, name)?.ok_or_else(|| SamplingError::Parse { line, msg: format!("empty {name}") })
}

pub fn read_point_sets<R: Read>(r: R) -> Result<CollocationSet, SamplingError> {
    let mut rdr = reader(r);
    let headers = match rdr.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_err(e)),
    };
    if headers.is_empty() || (headers.len() == 1 && headers.get(0) == Some("")) {
        return Ok(CollocationSet::empty(2));
    }
    let cols = Columns::new(&headers);
    let n_sd = if cols.get("z").is_some() { 3 } else { 2 };
    let axes = ["x", "y", "z"];
    let vels = ["vx", "vy", "vz"];
    let pos_i: Vec<usize> = axes[..n_sd].iter().map(|a| cols.require(a)).collect::<Result<_, _>>()?;
    let vel_i: Vec<usize> = vels[..n_sd].iter().map(|a| cols.require(a)).collect::<Result<_, _>>()?;
    let set_i = cols.require("set")?;
    let p_i = cols.require("p")?;
    let area_i = cols.get("area");

    let mut set = CollocationSet::empty(n_sd);
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let tag = rec.get(set_i).unwrap_or("");
        let pop = Population::from_tag(tag)
            .ok_or_else(|| SamplingError::Parse { line, msg: format!("unknown set '{tag}'") })?;
        let mut pt = CollocationPoint::default();
        for (d, &i) in pos_i.iter().enumerate() {
            pt.position[d] = required(&rec, i, line, axes[d])?;
        }
        let mut v = [0.0; 3];
        let mut have_v = true;
        for (d, &i) in vel_i.iter().enumerate() {
            match cell(&rec, i, line, vels[d])? {
                Some(x) => v[d] = x,
                None => have_v = false,
            }
        }
        pt.velocity = have_v.then_some(v);
        pt.pressure = cell(&rec, p_i, line, "p")?;
        if let Some(i) = area_i {
            pt.area = cell(&rec, i, line, "area")?;
        }
        match pop {
            Population::Dirichlet | Population::Moving if pt.velocity.is_none() => {
                return Err(SamplingError::MissingLabel { line, set: pop.tag(), label: "velocity" });
            }
            Population::Neumann if pt.pressure.is_none() => {
                return Err(SamplingError::MissingLabel { line, set: pop.tag(), label: "pressure" });
            }
            _ => {}
        }
        set.population_mut(pop).push(pt);
    }
    Ok(set)
}

pub fn load_point_sets(path: &Path) -> Result<CollocationSet, SamplingError> {
    let set = read_point_sets(open(path)?)?;
    let (f, d, n, m) = set.counts();
    log::info!("{}: N_f={f} N_D={d} (N_M={m}) N_N={n}", path.display());
    Ok(set)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_point_sets<W: Write>(w: W, set: &CollocationSet) -> Result<(), SamplingError> {
    let io_err = |e: csv::Error| SamplingError::Parse { line: 0, msg: e.to_string() };
    let mut wr = csv::Writer::from_writer(w);
    let n = set.n_sd;
    let mut header: Vec<&str> = ["x", "y", "z"][..n].to_vec();
    header.push("set");
    header.extend_from_slice(&["vx", "vy", "vz"][..n]);
    header.extend_from_slice(&["p", "area"]);
    wr.write_record(&header).map_err(io_err)?;
    for pop in Population::ALL {
        for pt in set.population(pop) {
            let mut row: Vec<String> = pt.position[..n].iter().map(|x| x.to_string()).collect();
            row.push(pop.tag().to_string());
            for d in 0..n {
                row.push(fmt_opt(pt.velocity.map(|v| v[d])));
            }
            row.push(fmt_opt(pt.pressure));
            row.push(fmt_opt(pt.area));
            wr.write_record(&row).map_err(io_err)?;
        }
    }
    wr.flush().map_err(|e| SamplingError::Parse { line: 0, msg: e.to_string() })
}

pub fn read_reference<R: Read>(r: R) -> Result<ReferenceSolution, SamplingError> {
    let mut rdr = reader(r);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let cols = Columns::new(&headers);
    let n_sd = if cols.get("z").is_some() { 3 } else { 2 };
    let names = ["x", "y", "z", "vx", "vy", "vz"];
    let pos_i: Vec<usize> = names[..n_sd].iter().map(|a| cols.require(a)).collect::<Result<_, _>>()?;
    let vel_i: Vec<usize> = names[3..3 + n_sd].iter().map(|a| cols.require(a)).collect::<Result<_, _>>()?;
    let p_i = cols.require("p")?;
    let mut out = ReferenceSolution { n_sd, positions: vec![], velocity: vec![], pressure: vec![] };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut x = [0.0; 3];
        let mut v = [0.0; 3];
        for d in 0..n_sd {
            x[d] = required(&rec, pos_i[d], line, names[d])?;
            v[d] = required(&rec, vel_i[d], line, names[3 + d])?;
        }
        out.positions.push(x);
        out.velocity.push(v);
        out.pressure.push(required(&rec, p_i, line, "p")?);
    }
    Ok(out)
}

pub fn load_reference(path: &Path) -> Result<ReferenceSolution, SamplingError> {
    read_reference(open(path)?)
}

pub fn write_reference<W: Write>(w: W, reference: &ReferenceSolution) -> Result<(), SamplingError> {
    let io_err = |e: csv::Error| SamplingError::Parse { line: 0, msg: e.to_string() };
    let mut wr = csv::Writer::from_writer(w);
    let n = reference.n_sd;
    let mut header: Vec<&str> = ["x", "y", "z"][..n].to_vec();
    header.extend_from_slice(&["vx", "vy", "vz"][..n]);
    header.push("p");
    wr.write_record(&header).map_err(io_err)?;
    for i in 0..reference.len() {
        let mut row: Vec<String> = reference.positions[i][..n].iter().map(|x| x.to_string()).collect();
        row.extend(reference.velocity[i][..n].iter().map(|x| x.to_string()));
        row.push(reference.pressure[i].to_string());
        wr.write_record(&row).map_err(io_err)?;
    }
    wr.flush().map_err(|e| SamplingError::Parse { line: 0, msg: e.to_string() })
}

/// Writes a point set to a file path.
pub fn save_point_sets(path: &Path, set: &CollocationSet) -> Result<(), SamplingError> {
    write_point_sets(std::io::BufWriter::new(create(path)?), set)
}

pub fn save_reference(path: &Path, reference: &ReferenceSolution) -> Result<(), SamplingError> {
    write_reference(std::io::BufWriter::new(create(path)?), reference)
}
