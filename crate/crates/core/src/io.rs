//! CSV artifacts. Column headers are part of the interface.
//!
//! | artifact | columns |
//! |---|---|
//! | crossbar | `row,col,polarity,conductance_S,pulses,error` |
//! | trace | `round,signal,node,value` |
//! | waveform | `time_s,signal,value` |
//! | sigmoid | `current_A,voltage_V` |
//! | program sweep | `pulse_index,polarity,mean_g_S,std_g_S` |
//! | power | `name,p_1v8,p_3v3,total` |
//! | dataset | `trial,round,s0,s1,...,label` |
//! | weights | `layer,row,col,value` |
//! | evaluation | `decoder,p,q,trials,ler,ci_low,ci_high` |
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces the exact values.

use std::io::{Read, Write};

use crate::analog::Bit;
use crate::crossbar::{DifferentialCrossbar, ProgrammingReport};
use crate::device::{MemristorParams, Polarity};
use crate::matrix::Matrix;
use crate::pipeline::{NetworkWeights, RoundTrace, WaveSample};
use crate::power::PowerTable;
use crate::qec::{LerEstimate, SyndromeTrace};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: u64, message: String },
}

fn format_err(line: u64, message: impl Into<String>) -> IoError {
    IoError::Format { line, message: message.into() }
}

fn writer<W: Write>(w: W, header: &[&str]) -> Result<csv::Writer<W>, IoError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    Ok(out)
}

/// Reads all records after checking the header matches exactly.
fn records<R: Read>(r: R, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(format_err(1, format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, line: u64, idx: usize, name: &str) -> Result<T, IoError> {
    let raw = rec.get(idx).ok_or_else(|| format_err(line, format!("missing column {name}")))?;
    raw.trim().parse().map_err(|_| format_err(line, format!("bad {name} value {raw:?}")))
}

fn bit(rec: &csv::StringRecord, line: u64, idx: usize, name: &str) -> Result<Bit, IoError> {
    match field::<u8>(rec, line, idx, name)? {
        b @ (0 | 1) => Ok(b),
        other => Err(format_err(line, format!("{name} value {other} is not a bit"))),
    }
}

pub const CROSSBAR_HEADER: [&str; 6] = ["row", "col", "polarity", "conductance_S", "pulses", "error"];

/// Device-by-device snapshot. `pulses` counts every pulse a device has seen;
/// `error` is the relative programming error when a report is supplied and
/// empty otherwise.
pub fn write_crossbar<W: Write>(
    w: W,
    xbar: &DifferentialCrossbar,
    report: Option<&ProgrammingReport>,
) -> Result<(), IoError> {
    let mut out = writer(w, &CROSSBAR_HEADER)?;
    for row in 0..xbar.n_in() {
        for col in 0..xbar.n_out() {
            for polarity in [Polarity::Potentiate, Polarity::Depress] {
                let dev = xbar.device(polarity, row, col);
                let error = report
                    .and_then(|r| r.cells.iter().find(|c| c.row == row && c.col == col && c.polarity == polarity))
                    .map_or(String::new(), |c| c.error.to_string());
                out.write_record([
                    row.to_string(),
                    col.to_string(),
                    polarity.to_string(),
                    dev.g().to_string(),
                    dev.state.pulses_applied.to_string(),
                    error,
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Rebuilds a crossbar from a snapshot's conductances. The shape is taken
/// from the largest indices present, and every cell must then appear exactly
/// once per polarity.
pub fn read_crossbar<R: Read>(r: R, params: MemristorParams) -> Result<DifferentialCrossbar, IoError> {
    let mut cells = Vec::new();
    for (line, rec) in records(r, &CROSSBAR_HEADER)? {
        let row: usize = field(&rec, line, 0, "row")?;
        let col: usize = field(&rec, line, 1, "col")?;
        let side = match rec.get(2).map(str::trim) {
            Some("+") => 0,
            Some("-") => 1,
            other => return Err(format_err(line, format!("bad polarity {other:?}"))),
        };
        let value: f64 = field(&rec, line, 3, "conductance_S")?;
        cells.push((line, row, col, side, value));
    }
    let n_in = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    let n_out = cells.iter().map(|c| c.2 + 1).max().unwrap_or(0);
    let mut g = [Matrix::filled(n_in, n_out, f64::NAN), Matrix::filled(n_in, n_out, f64::NAN)];
    for (line, row, col, side, value) in cells {
        if !g[side].get(row, col).is_nan() {
            return Err(format_err(line, format!("duplicate cell ({row},{col})")));
        }
        g[side].set(row, col, value);
    }
    if n_in == 0 || g.iter().any(|m| m.as_slice().iter().any(|x| x.is_nan())) {
        return Err(format_err(0, format!("snapshot does not cover all {n_in}x{n_out} cells")));
    }
    DifferentialCrossbar::from_conductances(params, &g[0], &g[1]).map_err(|e| format_err(0, e.to_string()))
}

pub fn write_trace<W: Write>(w: W, traces: &[RoundTrace]) -> Result<(), IoError> {
    let mut out = writer(w, &["round", "signal", "node", "value"])?;
    for tr in traces {
        for (signal, node, value) in tr.signals() {
            out.write_record([tr.round.to_string(), signal.to_string(), node.to_string(), value.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_waveform<W: Write>(w: W, samples: &[WaveSample]) -> Result<(), IoError> {
    let mut out = writer(w, &["time_s", "signal", "value"])?;
    for s in samples {
        out.write_record([s.time.to_string(), s.signal.clone(), s.value.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_sigmoid<W: Write>(w: W, points: &[(f64, f64)]) -> Result<(), IoError> {
    let mut out = writer(w, &["current_A", "voltage_V"])?;
    for (i, v) in points {
        out.write_record([i.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// One row of the programming sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub pulse_index: usize,
    pub polarity: Polarity,
    pub mean_g: f64,
    pub std_g: f64,
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), IoError> {
    let mut out = writer(w, &["pulse_index", "polarity", "mean_g_S", "std_g_S"])?;
    for r in rows {
        out.write_record([
            r.pulse_index.to_string(),
            r.polarity.to_string(),
            r.mean_g.to_string(),
            r.std_g.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One row per entry, in table order, values in the exact `X.Ye-3` form.
pub fn write_power<W: Write>(w: W, table: &PowerTable) -> Result<(), IoError> {
    let mut out = writer(w, &["name", "p_1v8", "p_3v3", "total"])?;
    for name in table.names() {
        let r = table.report(name).expect("name comes from the table");
        out.write_record([name.to_string(), r.p_1v8.to_string(), r.p_3v3.to_string(), r.total.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

fn dataset_header(n_checks: usize) -> Vec<String> {
    let mut h = vec!["trial".to_string(), "round".to_string()];
    h.extend((0..n_checks).map(|k| format!("s{k}")));
    h.push("label".into());
    h
}

/// One row per (trial, round); the label is repeated on every row of a trial.
pub fn write_dataset<W: Write>(w: W, traces: &[SyndromeTrace]) -> Result<(), IoError> {
    let n_checks = traces.first().and_then(|t| t.syndromes.first()).map_or(2, Vec::len);
    let header = dataset_header(n_checks);
    let mut out = writer(w, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for (trial, t) in traces.iter().enumerate() {
        for (round, s) in t.syndromes.iter().enumerate() {
            let mut rec = vec![trial.to_string(), round.to_string()];
            rec.extend(s.iter().map(u8::to_string));
            rec.push(t.label.to_string());
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_dataset`]. Trials and rounds must appear in order,
/// starting from 0.
pub fn read_dataset<R: Read>(r: R, n_checks: usize) -> Result<Vec<SyndromeTrace>, IoError> {
    let header = dataset_header(n_checks);
    let mut traces: Vec<SyndromeTrace> = Vec::new();
    for (line, rec) in records(r, &header.iter().map(String::as_str).collect::<Vec<_>>())? {
        let trial: usize = field(&rec, line, 0, "trial")?;
        let round: usize = field(&rec, line, 1, "round")?;
        let bits = (0..n_checks).map(|k| bit(&rec, line, 2 + k, &header[2 + k])).collect::<Result<Vec<_>, _>>()?;
        let label = bit(&rec, line, 2 + n_checks, "label")?;
        if trial == traces.len() && round == 0 {
            traces.push(SyndromeTrace { syndromes: vec![bits], label });
            continue;
        }
        let current = trial + 1 == traces.len();
        match traces.last_mut().filter(|_| current) {
            Some(t) if round == t.syndromes.len() && label == t.label => t.syndromes.push(bits),
            Some(t) if label != t.label => return Err(format_err(line, format!("label changes within trial {trial}"))),
            _ => return Err(format_err(line, format!("out-of-order row (trial {trial}, round {round})"))),
        }
    }
    Ok(traces)
}

pub fn write_weights<W: Write>(w: W, weights: &NetworkWeights) -> Result<(), IoError> {
    let mut out = writer(w, &["layer", "row", "col", "value"])?;
    for (name, m) in weights.layers() {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                out.write_record([name.to_string(), r.to_string(), c.to_string(), m.get(r, c).to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Inverse of [`write_weights`]; shapes are inferred and must be complete.
pub fn read_weights<R: Read>(r: R) -> Result<NetworkWeights, IoError> {
    let mut cells: [Vec<(usize, usize, f64)>; 3] = Default::default();
    let names = ["input", "recurrent", "output"];
    for (line, rec) in records(r, &["layer", "row", "col", "value"])? {
        let layer = rec.get(0).map(str::trim).unwrap_or_default();
        let idx = names
            .iter()
            .position(|n| *n == layer)
            .ok_or_else(|| format_err(line, format!("unknown layer {layer:?}")))?;
        cells[idx].push((field(&rec, line, 1, "row")?, field(&rec, line, 2, "col")?, field(&rec, line, 3, "value")?));
    }
    let mut mats = Vec::with_capacity(3);
    for (name, c) in names.iter().zip(&cells) {
        let rows = c.iter().map(|x| x.0 + 1).max().unwrap_or(0);
        let cols = c.iter().map(|x| x.1 + 1).max().unwrap_or(0);
        let mut m = Matrix::filled(rows, cols, f64::NAN);
        for &(r, col, v) in c {
            if !m.get(r, col).is_nan() {
                return Err(format_err(0, format!("duplicate {name} weight ({r},{col})")));
            }
            m.set(r, col, v);
        }
        if rows == 0 || m.as_slice().iter().any(|x| x.is_nan()) {
            return Err(format_err(0, format!("{name} layer is incomplete")));
        }
        mats.push(m);
    }
    let w_out = mats.pop().expect("three layers");
    let w_rec = mats.pop().expect("three layers");
    let w_in = mats.pop().expect("three layers");
    let w = NetworkWeights { w_in, w_rec, w_out };
    w.check_shape().map_err(|e| format_err(0, e.to_string()))?;
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub decoder: String,
    pub p: f64,
    pub q: f64,
    pub estimate: LerEstimate,
}

pub fn write_eval<W: Write>(w: W, rows: &[EvalRow]) -> Result<(), IoError> {
    let mut out = writer(w, &["decoder", "p", "q", "trials", "ler", "ci_low", "ci_high"])?;
    for r in rows {
        let e = &r.estimate;
        out.write_record([
            r.decoder.clone(),
            r.p.to_string(),
            r.q.to_string(),
            e.trials.to_string(),
            e.rate.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::demo_weights;

    fn text(f: impl FnOnce(&mut Vec<u8>) -> Result<(), IoError>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn power_rows_match_table() {
        let s = text(|b| write_power(b, &PowerTable::measured()));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "name,p_1v8,p_3v3,total");
        assert_eq!(lines[1], "1.2K,3.2e-3,10.2e-3,13.4e-3");
        assert_eq!(lines[4], "300K,3.4e-3,11.9e-3,15.3e-3");
    }

    #[test]
    fn dataset_round_trip() {
        let traces = vec![
            SyndromeTrace { syndromes: vec![vec![1, 0], vec![0, 0]], label: 1 },
            SyndromeTrace { syndromes: vec![vec![0, 1], vec![1, 1]], label: 0 },
        ];
        let s = text(|b| write_dataset(b, &traces));
        assert!(s.starts_with("trial,round,s0,s1,label\n0,0,1,0,1\n"));
        assert_eq!(read_dataset(s.as_bytes(), 2).unwrap(), traces);
    }

    #[test]
    fn dataset_errors_carry_line_numbers() {
        let bad = "trial,round,s0,s1,label\n0,0,1,0,1\n0,1,2,0,1\n";
        match read_dataset(bad.as_bytes(), 2) {
            Err(IoError::Format { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("s0"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(read_dataset("trial,round,a,b,label\n".as_bytes(), 2).is_err());
        assert!(read_dataset("trial,round,s0,s1,label\n0,1,0,0,0\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn weights_round_trip_exactly() {
        let mut w = demo_weights();
        w.w_in.set(0, 1, 0.1 + 0.2);
        let s = text(|b| write_weights(b, &w));
        assert_eq!(read_weights(s.as_bytes()).unwrap(), w);
        let truncated: String = s.lines().take(4).map(|l| format!("{l}\n")).collect();
        assert!(read_weights(truncated.as_bytes()).is_err());
    }

    #[test]
    fn crossbar_round_trip_exactly() {
        let params = MemristorParams::default();
        let gp = Matrix::from_fn(3, 2, |r, c| 1e-5 + 1e-6 * (r * 2 + c) as f64 / 3.0);
        let gm = Matrix::filled(3, 2, 2.5e-5);
        let x = DifferentialCrossbar::from_conductances(params, &gp, &gm).unwrap();
        let s = text(|b| write_crossbar(b, &x, None));
        assert!(s.starts_with("row,col,polarity,conductance_S,pulses,error\n0,0,+,0.00001,0,\n"));
        let back = read_crossbar(s.as_bytes(), params).unwrap();
        assert_eq!(back.g_plus(), x.g_plus());
        assert_eq!(back.g_minus(), x.g_minus());
        let missing: String = s.lines().filter(|l| !l.starts_with("1,1,-")).map(|l| format!("{l}\n")).collect();
        assert!(read_crossbar(missing.as_bytes(), params).is_err());
    }
}
