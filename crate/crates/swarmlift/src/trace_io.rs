//! Trace files.
//!
//! CSV: an optional comment line `# scenario=<name> seed=<n>`, a header row,
//! then one row per record. Columns, in order:
//!
//! | group | columns |
//! |---|---|
//! | time | `t` |
//! | command | `cmd_vx cmd_vy cmd_spin cmd_scale_rate cmd_altitude_offset` |
//! | per vehicle `i` | `v{i}_px v{i}_py v{i}_pz v{i}_vx v{i}_vy v{i}_vz v{i}_roll v{i}_pitch v{i}_yaw v{i}_nu_x v{i}_nu_y v{i}_nu_z v{i}_af_x v{i}_af_y v{i}_af_z v{i}_du_roll v{i}_du_pitch v{i}_du_thrust v{i}_tension_x v{i}_tension_y v{i}_tension_z v{i}_thrust v{i}_saturated v{i}_singular` |
//! | per edge `(a, b)` | `edge_{a}_{b}_distance edge_{a}_{b}_desired` |
//! | payload, if any | `payload_px payload_py payload_pz payload_vx payload_vy payload_vz` |
//!
//! Floats use the shortest representation that reads back to the same bits;
//! flags are `0`/`1`.
//!
//! JSON-lines: a header object `{"format": "swarmlift-trace", "version", "scenario", "seed", "edges"}`
//! followed by one serialised record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use swarmlift_core::guidance::MotionCommand;
use swarmlift_core::payload::PayloadState;
use swarmlift_core::sim::{EdgeRecord, Trace, TraceRecord, VehicleRecord};
use swarmlift_core::Vec3;
use thiserror::Error;

pub const FORMAT_NAME: &str = "swarmlift-trace";
pub const FORMAT_VERSION: u32 = 1;

const VEHICLE_FIELDS: [&str; 24] = [
    "px", "py", "pz", "vx", "vy", "vz", "roll", "pitch", "yaw", "nu_x", "nu_y", "nu_z", "af_x", "af_y", "af_z",
    "du_roll", "du_pitch", "du_thrust", "tension_x", "tension_y", "tension_z", "thrust", "saturated", "singular",
];
const PAYLOAD_FIELDS: [&str; 6] = ["px", "py", "pz", "vx", "vy", "vz"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Jsonl,
}

impl TraceFormat {
    /// `.csv` or `.jsonl`/`.json`.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::Csv),
            "jsonl" | "json" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

/// Column names for a trace of `n` vehicles over `edges`.
pub fn csv_columns(n: usize, edges: &[(usize, usize)], payload: bool) -> Vec<String> {
    let mut cols: Vec<String> = ["t", "cmd_vx", "cmd_vy", "cmd_spin", "cmd_scale_rate", "cmd_altitude_offset"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..n {
        cols.extend(VEHICLE_FIELDS.iter().map(|f| format!("v{i}_{f}")));
    }
    for (a, b) in edges {
        cols.push(format!("edge_{a}_{b}_distance"));
        cols.push(format!("edge_{a}_{b}_desired"));
    }
    if payload {
        cols.extend(PAYLOAD_FIELDS.iter().map(|f| format!("payload_{f}")));
    }
    cols
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn row(r: &TraceRecord) -> Vec<String> {
    let mut out = Vec::with_capacity(6 + 24 * r.vehicles.len() + 2 * r.edges.len() + 6);
    let c = &r.command;
    for x in [r.t, c.translation[0], c.translation[1], c.spin, c.scale_rate, c.altitude_offset] {
        out.push(x.to_string());
    }
    for v in &r.vehicles {
        for vec in [&v.position, &v.velocity, &v.attitude, &v.nu, &v.accel_f, &v.delta, &v.tension] {
            out.extend(vec.iter().map(|x| x.to_string()));
        }
        out.push(v.thrust.to_string());
        out.push(flag(v.saturated));
        out.push(flag(v.singular));
    }
    for e in &r.edges {
        out.push(e.distance.to_string());
        out.push(e.desired.to_string());
    }
    if let Some(p) = &r.payload {
        out.extend(p.position.iter().chain(p.velocity.iter()).map(|x| x.to_string()));
    }
    out
}

pub fn write_csv<W: Write>(trace: &Trace, out: W) -> Result<(), TraceError> {
    let mut out = BufWriter::new(out);
    writeln!(out, "# scenario={} seed={}", trace.scenario, trace.seed)?;
    let n = trace.records.first().map_or(0, |r| r.vehicles.len());
    let payload = trace.records.first().is_some_and(|r| r.payload.is_some());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_columns(n, &trace.edges, payload))?;
    for r in &trace.records {
        w.write_record(row(r))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_edge(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("edge_")?.strip_suffix("_distance")?;
    let (a, b) = rest.split_once('_')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

pub fn read_csv<R: Read>(input: R) -> Result<Trace, TraceError> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let (mut scenario, mut seed) = (String::new(), 0);
    let rest: Box<dyn Read> = if let Some(meta) = first.strip_prefix('#') {
        for part in meta.split_whitespace() {
            match part.split_once('=') {
                Some(("scenario", v)) => scenario = v.to_string(),
                Some(("seed", v)) => seed = v.parse().map_err(|_| TraceError::Format(format!("bad seed `{v}`")))?,
                _ => {}
            }
        }
        Box::new(input)
    } else {
        Box::new(std::io::Cursor::new(first.into_bytes()).chain(input))
    };
    let mut reader = csv::Reader::from_reader(rest);
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let n = (0..).take_while(|i| header.iter().any(|h| *h == format!("v{i}_px"))).count();
    let edges: Vec<(usize, usize)> = header.iter().filter_map(|h| parse_edge(h)).collect();
    let payload = header.iter().any(|h| h == "payload_px");
    let expected = csv_columns(n, &edges, payload);
    if header != expected {
        return Err(TraceError::Format("CSV header does not match the trace column layout".into()));
    }

    let mut records = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let mut fields = rec.iter();
        let mut next = || -> Result<f64, TraceError> {
            let s = fields.next().ok_or_else(|| TraceError::Format(format!("row {}: too few fields", line + 1)))?;
            s.parse::<f64>().map_err(|_| TraceError::Format(format!("row {}: bad number `{s}`", line + 1)))
        };
        let t = next()?;
        let command = MotionCommand {
            translation: [next()?, next()?],
            spin: next()?,
            scale_rate: next()?,
            altitude_offset: next()?,
        };
        let mut vehicles = Vec::with_capacity(n);
        for _ in 0..n {
            vehicles.push(VehicleRecord {
                position: vec3(&mut next)?,
                velocity: vec3(&mut next)?,
                attitude: vec3(&mut next)?,
                nu: vec3(&mut next)?,
                accel_f: vec3(&mut next)?,
                delta: vec3(&mut next)?,
                tension: vec3(&mut next)?,
                thrust: next()?,
                saturated: next()? != 0.0,
                singular: next()? != 0.0,
            });
        }
        let mut edge_records = Vec::with_capacity(edges.len());
        for _ in &edges {
            edge_records.push(EdgeRecord { distance: next()?, desired: next()? });
        }
        let payload = if payload {
            Some(PayloadState { position: vec3(&mut next)?, velocity: vec3(&mut next)? })
        } else {
            None
        };
        records.push(TraceRecord { t, command, vehicles, edges: edge_records, payload });
    }
    Ok(Trace { scenario, seed, edges, records })
}

fn vec3(next: &mut impl FnMut() -> Result<f64, TraceError>) -> Result<Vec3, TraceError> {
    Ok(Vec3::new(next()?, next()?, next()?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JsonHeader {
    format: String,
    version: u32,
    scenario: String,
    seed: u64,
    edges: Vec<(usize, usize)>,
}

pub fn write_jsonl<W: Write>(trace: &Trace, out: W) -> Result<(), TraceError> {
    let mut out = BufWriter::new(out);
    let header = JsonHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        scenario: trace.scenario.clone(),
        seed: trace.seed,
        edges: trace.edges.clone(),
    };
    writeln!(out, "{}", json_line(1, &header)?)?;
    for (k, r) in trace.records.iter().enumerate() {
        writeln!(out, "{}", json_line(k + 2, r)?)?;
    }
    out.flush()?;
    Ok(())
}

fn json_line<T: Serialize>(line: usize, value: &T) -> Result<String, TraceError> {
    serde_json::to_string(value).map_err(|source| TraceError::Json { line, source })
}

pub fn read_jsonl<R: Read>(input: R) -> Result<Trace, TraceError> {
    let mut lines = BufReader::new(input).lines();
    let first = lines.next().ok_or_else(|| TraceError::Format("empty trace file".into()))??;
    let header: JsonHeader = serde_json::from_str(&first).map_err(|source| TraceError::Json { line: 1, source })?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(TraceError::Format(format!(
            "unsupported trace format {} v{}",
            header.format, header.version
        )));
    }
    let mut records = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|source| TraceError::Json { line: k + 2, source })?);
    }
    Ok(Trace {
        scenario: header.scenario,
        seed: header.seed,
        edges: header.edges,
        records,
    })
}

fn format_of(path: &Path) -> Result<TraceFormat, TraceError> {
    TraceFormat::from_path(path)
        .ok_or_else(|| TraceError::Format(format!("{}: expected a .csv or .jsonl extension", path.display())))
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<(), TraceError> {
    let format = format_of(path)?;
    let file = File::create(path)?;
    match format {
        TraceFormat::Csv => write_csv(trace, file),
        TraceFormat::Jsonl => write_jsonl(trace, file),
    }
}

pub fn read_trace(path: &Path) -> Result<Trace, TraceError> {
    let format = format_of(path)?;
    let file = File::open(path)?;
    match format {
        TraceFormat::Csv => read_csv(file),
        TraceFormat::Jsonl => read_jsonl(file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use swarmlift_core::graph::square_shape;
    use swarmlift_core::sim::{perturbed_positions, run_scenario, Scenario, ScheduledCommand};

    fn short_trace(payload: bool) -> Trace {
        let mut s = Scenario::square("io", perturbed_positions(&square_shape(1.0), 2.0, 0.2, 4));
        s.duration = 1.0;
        s.seed = 17;
        if !payload {
            s.payload = None;
        }
        s.commands = vec![ScheduledCommand {
            t: 0.5,
            command: MotionCommand { translation: [0.2, 0.1], spin: 0.05, ..Default::default() },
        }];
        run_scenario(s).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        for payload in [true, false] {
            let trace = short_trace(payload);
            let mut buf = Vec::new();
            write_csv(&trace, &mut buf).unwrap();
            assert_eq!(read_csv(&buf[..]).unwrap(), trace);
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let trace = short_trace(true);
        let mut buf = Vec::new();
        write_jsonl(&trace, &mut buf).unwrap();
        assert_eq!(read_jsonl(&buf[..]).unwrap(), trace);
    }

    #[test]
    fn csv_header_follows_the_documented_order() {
        let cols = csv_columns(2, &[(0, 1)], true);
        assert_eq!(cols.len(), 6 + 2 * 24 + 2 + 6);
        assert_eq!(&cols[..7], ["t", "cmd_vx", "cmd_vy", "cmd_spin", "cmd_scale_rate", "cmd_altitude_offset", "v0_px"]);
        assert_eq!(cols[6 + 24], "v1_px");
        assert_eq!(cols[6 + 48], "edge_0_1_distance");
        assert_eq!(cols.last().unwrap(), "payload_vz");
    }

    #[test]
    fn csv_without_comment_line_reads() {
        let trace = short_trace(false);
        let mut buf = Vec::new();
        write_csv(&trace, &mut buf).unwrap();
        let body = buf.splitn(2, |&b| b == b'\n').nth(1).unwrap();
        let back = read_csv(body).unwrap();
        assert_eq!(back.records, trace.records);
        assert_eq!(back.scenario, "");
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(matches!(read_jsonl(&b""[..]), Err(TraceError::Format(_))));
        let bad = b"{\"format\":\"swarmlift-trace\",\"version\":1,\"scenario\":\"x\",\"seed\":0,\"edges\":[]}\n{nope}\n";
        assert!(matches!(read_jsonl(&bad[..]), Err(TraceError::Json { line: 2, .. })));
        assert!(matches!(read_csv(&b"t,x\n1,2\n"[..]), Err(TraceError::Format(_))));
    }
}
