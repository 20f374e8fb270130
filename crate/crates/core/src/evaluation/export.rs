//! Field CSV: `#` metadata lines (checkpoint id, scenario, scales) followed by
//! `x,y[,z],k,vx,vy[,vz],p,extrapolated`, all SI.

use std::io::{Read, Write};
use std::path::Path;

use super::{EvaluationError, FieldPrediction, FieldValues};

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EvaluationError + '_ {
    move |source| EvaluationError::Io { path: path.display().to_string(), source }
}

fn csv_err(e: csv::Error) -> EvaluationError {
    EvaluationError::Parse { line: e.position().map(|p| p.line()).unwrap_or(0), msg: e.to_string() }
}

pub fn write_field<W: Write>(mut w: W, pred: &FieldPrediction) -> Result<(), EvaluationError> {
    let s = &pred.scales;
    let meta = format!(
        "# checkpoint {}\n# scenario {}\n# scales l_ref={} v_ref={} rho={} mu={}\n",
        pred.checkpoint_id, pred.scenario, s.l_ref, s.v_ref, s.rho, s.mu
    );
    w.write_all(meta.as_bytes()).map_err(|e| EvaluationError::Parse { line: 0, msg: e.to_string() })?;
    let n = pred.values.n_sd;
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = ["x", "y", "z"][..n].to_vec();
    header.push("k");
    header.extend_from_slice(&["vx", "vy", "vz"][..n]);
    header.extend_from_slice(&["p", "extrapolated"]);
    wr.write_record(&header).map_err(csv_err)?;
    let flag = if pred.extrapolated { "1" } else { "0" };
    for (i, x) in pred.positions.iter().enumerate() {
        let mut row: Vec<String> = x[..n].iter().map(|c| c.to_string()).collect();
        row.push(pred.k.to_string());
        row.extend(pred.values.velocity[i][..n].iter().map(|c| c.to_string()));
        row.push(pred.values.pressure[i].to_string());
        row.push(flag.into());
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| EvaluationError::Parse { line: 0, msg: e.to_string() })
}

pub fn save_field(path: &Path, pred: &FieldPrediction) -> Result<(), EvaluationError> {
    let f = std::fs::File::create(path).map_err(io_err(path))?;
    write_field(std::io::BufWriter::new(f), pred)
}

/// Contents of a field file: positions, per-row `k`, values and flags.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldFile {
    pub positions: Vec<[f64; 3]>,
    pub k: Vec<f64>,
    pub values: FieldValues,
    pub extrapolated: Vec<bool>,
}

pub fn read_field<R: Read>(r: R) -> Result<FieldFile, EvaluationError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| EvaluationError::Parse { line: 1, msg: format!("missing column '{name}'") })
    };
    let n_sd = if headers.iter().any(|h| h == "z") { 3 } else { 2 };
    let names = ["x", "y", "z", "vx", "vy", "vz"];
    let pos: Vec<usize> = names[..n_sd].iter().map(|c| find(c)).collect::<Result<_, _>>()?;
    let vel: Vec<usize> = names[3..3 + n_sd].iter().map(|c| find(c)).collect::<Result<_, _>>()?;
    let (ki, pi, ei) = (find("k")?, find("p")?, find("extrapolated")?);
    let mut out = FieldFile {
        positions: vec![],
        k: vec![],
        values: FieldValues { n_sd, ..Default::default() },
        extrapolated: vec![],
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64, EvaluationError> {
            let s = rec.get(i).unwrap_or("");
            s.parse().map_err(|_| EvaluationError::Parse { line, msg: format!("bad number '{s}'") })
        };
        let (mut x, mut v) = ([0.0; 3], [0.0; 3]);
        for d in 0..n_sd {
            x[d] = num(pos[d])?;
            v[d] = num(vel[d])?;
        }
        out.positions.push(x);
        out.values.velocity.push(v);
        out.k.push(num(ki)?);
        out.values.pressure.push(num(pi)?);
        out.extrapolated.push(rec.get(ei) == Some("1"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::ReferenceScales;

    #[test]
    fn round_trip_is_exact() {
        let pred = FieldPrediction {
            positions: vec![[0.1, 0.2, 0.3], [1.0 / 3.0, -2e-9, 7.0]],
            k: 0.05,
            values: FieldValues { n_sd: 3, velocity: vec![[1.0, 2.0, 3.0], [0.1, 0.7, -1e-12]], pressure: vec![0.5, -3.25] },
            checkpoint_id: "abc".into(),
            scenario: "s".into(),
            scales: ReferenceScales::new(1.0, 1.0, 1.0, 0.01).unwrap(),
            extrapolated: true,
        };
        let mut buf = Vec::new();
        write_field(&mut buf, &pred).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# checkpoint abc\n"));
        let back = read_field(buf.as_slice()).unwrap();
        assert_eq!(back.positions, pred.positions);
        assert_eq!(back.values, pred.values);
        assert_eq!(back.k, vec![0.05; 2]);
        assert_eq!(back.extrapolated, vec![true; 2]);
    }
}
