//! Model files and CSV/JSON exports.
//!
//! Models are JSON:
//!
//! ```json
//! { "states": 2, "actions": 1, "labels": ["a", "b"],
//!   "transitions": [{"from": 0, "u": 0, "to": 1, "p": 1.0}],
//!   "costs": [{"x": 0, "u": 0, "g": 1.0}], "goal_stay": [[1, 0]] }
//! ```
//!
//! `labels`, `action_embedding` and `goal_stay` are optional. Floats are
//! written in shortest round-trip form, so a save/load cycle is exact.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::belief::ObservationModel;
use crate::bench::BenchResult;
use crate::dp::ValueField;
use crate::error::{Error, Result};
use crate::model::{ensure_valid, MdpModel, ModelBuilder, StateSpace};
use crate::policy::{PolicyKind, PolicyTable};
use crate::quasimetric::{FieldMode, QuasiDistanceField};
use crate::sim::TrajectoryRecord;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    states: usize,
    actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    action_embedding: Option<Vec<Vec<f64>>>,
    transitions: Vec<TransitionEntry>,
    costs: Vec<CostEntry>,
    #[serde(default)]
    goal_stay: Vec<(usize, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionEntry {
    from: usize,
    u: usize,
    to: usize,
    p: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostEntry {
    x: usize,
    u: usize,
    g: f64,
}

/// Opens `path` for reading; `-` is standard input.
pub fn open_input(path: &str) -> Result<Box<dyn Read>> {
    if path == "-" {
        return Ok(Box::new(io::stdin().lock()));
    }
    match File::open(path) {
        Ok(f) => Ok(Box::new(BufReader::new(f))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            Err(Error::Io(io::Error::new(e.kind(), format!("{path}: not found"))))
        }
        Err(e) => Err(Error::Io(io::Error::new(e.kind(), format!("{path}: {e}")))),
    }
}

/// Opens `path` for writing; `-` or `None` is standard output.
pub fn open_output(path: Option<&str>) -> Result<Box<dyn Write>> {
    match path {
        None | Some("-") => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{p}: {e}"))))?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

fn parse_json<T: DeserializeOwned>(reader: impl Read, what: &str) -> Result<T> {
    serde_json::from_reader(reader).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

/// Parses and validates a model. Validation failures carry every violation.
pub fn read_model(reader: impl Read) -> Result<MdpModel> {
    let file: ModelFile = parse_json(reader, "model")?;
    let mut b = ModelBuilder::new(file.states, file.actions);
    if let Some(labels) = file.labels {
        b = b.labels(labels);
    }
    if let Some(e) = file.action_embedding {
        b = b.embedding(e);
    }
    for t in file.transitions {
        b = b.transition(t.from, t.u, t.to, t.p);
    }
    for c in file.costs {
        b = b.cost(c.x, c.u, c.g);
    }
    for (x, u) in file.goal_stay {
        b = b.goal_stay(x, u);
    }
    let model = b.build()?;
    ensure_valid(&model)?;
    Ok(model)
}

pub fn load_model(path: &str) -> Result<MdpModel> {
    read_model(open_input(path)?)
}

pub fn write_model(model: &MdpModel, writer: impl Write) -> Result<()> {
    let (n, m) = (model.n_states(), model.n_actions());
    let file = ModelFile {
        states: n,
        actions: m,
        labels: model.states().labels().map(<[String]>::to_vec),
        action_embedding: model.actions().embedding().map(<[Vec<f64>]>::to_vec),
        transitions: model
            .transitions()
            .entries()
            .map(|(from, u, to, p)| TransitionEntry { from, u, to, p })
            .collect(),
        costs: (0..n)
            .flat_map(|x| (0..m).map(move |u| (x, u)))
            .filter_map(|(x, u)| model.cost(x, u).map(|g| CostEntry { x, u, g }))
            .collect(),
        goal_stay: model.goal_stay_pairs().iter().copied().collect(),
    };
    let mut w = writer;
    serde_json::to_writer(&mut w, &file).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &MdpModel, path: &Path) -> Result<()> {
    let f = File::create(path)?;
    write_model(model, BufWriter::new(f))
}

/// `inf` for infinities, shortest round-trip decimal otherwise.
pub fn format_number(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

/// Inverse of [`format_number`].
pub fn parse_number(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        t => t.parse().map_err(|_| Error::Parse(format!("not a number: {t:?}"))),
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Writes a header and rows through the `csv` crate, which quotes labels
/// containing commas.
fn write_csv<I, R>(w: impl Write, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(csv_error)?;
    for row in rows {
        out.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `state,distance` for single-anchor fields; for all-pairs fields a dense
/// matrix whose header row lists the target states.
pub fn write_distance_csv(w: impl Write, d: &QuasiDistanceField, states: &StateSpace) -> Result<()> {
    let n = d.n_states();
    if d.mode() == FieldMode::AllPairs {
        let head: Vec<String> = std::iter::once("state".to_string()).chain((0..n).map(|y| states.name(y))).collect();
        let rows = (0..n).map(|x| std::iter::once(states.name(x)).chain((0..n).map(move |y| format_number(d.pair(x, y)))));
        write_csv(w, &head, rows)
    } else {
        let rows = (0..n).map(|x| [states.name(x), format_number(d.value(x))]);
        write_csv(w, &header(&["state", "distance"]), rows)
    }
}

pub fn write_value_csv(w: impl Write, v: &ValueField, states: &StateSpace) -> Result<()> {
    let rows = v.values.iter().enumerate().map(|(x, &value)| [states.name(x), format_number(value)]);
    write_csv(w, &header(&["state", "value"]), rows)
}

/// `state,action` for deterministic policies, `state,action,probability`
/// (nonzero entries only) for stochastic ones.
pub fn write_policy_csv(w: impl Write, policy: &PolicyTable, states: &StateSpace) -> Result<()> {
    match policy.kind() {
        PolicyKind::Deterministic(actions) => {
            let rows = actions.iter().enumerate().map(|(x, a)| vec![states.name(x), a.to_string()]);
            write_csv(w, &header(&["state", "action"]), rows)
        }
        PolicyKind::Stochastic { .. } => {
            let mut rows = Vec::new();
            for x in 0..policy.n_states() {
                for (u, p) in policy.row(x).into_iter().enumerate() {
                    if p > 0.0 {
                        rows.push(vec![states.name(x), u.to_string(), format_number(p)]);
                    }
                }
            }
            write_csv(w, &header(&["state", "action", "probability"]), rows)
        }
    }
}

/// One row per action taken; the final state gets a row with empty action
/// and cost.
pub fn write_trajectory_csv(w: impl Write, rec: &TrajectoryRecord) -> Result<()> {
    let steps = rec.actions.iter().zip(&rec.step_costs).enumerate();
    let mut rows: Vec<Vec<String>> = steps
        .map(|(t, (&a, &c))| vec![t.to_string(), rec.states[t].to_string(), a.to_string(), format_number(c)])
        .collect();
    let last = rec.states[rec.states.len() - 1];
    rows.push(vec![rec.actions.len().to_string(), last.to_string(), String::new(), String::new()]);
    write_csv(w, &header(&["step", "state", "action", "cost"]), rows)
}

pub fn write_mean_trajectory_csv(w: impl Write, mean: &[Vec<f64>]) -> Result<()> {
    let dim = mean.first().map_or(0, Vec::len);
    let head: Vec<String> = std::iter::once("step".to_string()).chain((1..=dim).map(|k| format!("mean_coord_{k}"))).collect();
    let rows = mean
        .iter()
        .enumerate()
        .map(|(t, row)| std::iter::once(t.to_string()).chain(row.iter().map(|&v| format_number(v))));
    write_csv(w, &head, rows)
}

pub fn write_bench_csv(w: impl Write, result: &BenchResult) -> Result<()> {
    let rows = result
        .rows
        .iter()
        .map(|r| [r.method.clone(), r.size.to_string(), r.phase.clone(), r.seconds.to_string()]);
    write_csv(w, &header(&["method", "size", "phase", "seconds"]), rows)
}

pub fn write_json<T: Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Parse(e.to_string())
        }
    })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationFile {
    symbols: usize,
    rows: Vec<Vec<f64>>,
}

/// `{ "symbols": S, "rows": [[...], ...] }`, one row per state.
pub fn read_observation_model(reader: impl Read) -> Result<ObservationModel> {
    let f: ObservationFile = parse_json(reader, "observation model")?;
    ObservationModel::new(f.symbols, f.rows)
}

pub fn read_json<T: DeserializeOwned>(reader: impl Read, what: &str) -> Result<T> {
    parse_json(reader, what)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_example_a, build_example_b};
    use crate::quasimetric::{distance_all_pairs, graph_from_model};

    #[test]
    fn round_trip_is_exact() {
        for m in [build_example_a(false).unwrap(), build_example_b(0.1, 10.0, true).unwrap()] {
            let mut buf = Vec::new();
            write_model(&m, &mut buf).unwrap();
            assert_eq!(read_model(buf.as_slice()).unwrap(), m);
        }
        let m = crate::domains::build_pendulum(&crate::domains::PendulumParams::square(5)).unwrap().model;
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn short_row_reports_row_sum() {
        let text = r#"{"states":2,"actions":1,"transitions":[{"from":0,"u":0,"to":1,"p":0.9}],
            "costs":[{"x":0,"u":0,"g":1}]}"#;
        let err = read_model(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row-sum"), "{err}");
    }

    #[test]
    fn parse_errors_have_position() {
        let err = read_model("{\"states\": 2,\n \"actions\": x}".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn missing_file_says_not_found() {
        let err = load_model("/nonexistent/model.json").err().unwrap();
        assert!(err.to_string().contains("not found"));
    }

    #[test]
    fn all_pairs_csv_uses_inf() {
        let m = build_example_a(false).unwrap();
        let d = distance_all_pairs(&graph_from_model(&m)).unwrap();
        let mut buf = Vec::new();
        write_distance_csv(&mut buf, &d, m.states()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "state,A,B,C,D,E");
        assert_eq!(lines[1], "A,0,3,4,4,5");
        assert_eq!(lines[2], "B,inf,0,inf,inf,2");
        assert_eq!(parse_number("inf").unwrap(), f64::INFINITY);
    }

    #[test]
    fn observation_file() {
        let o = read_observation_model(r#"{"symbols":2,"rows":[[0.9,0.1],[0.2,0.8]]}"#.as_bytes()).unwrap();
        assert_eq!(o.likelihood(1, 1), 0.8);
        assert!(read_observation_model(r#"{"symbols":2,"rows":[[0.9,0.2]]}"#.as_bytes()).is_err());
    }
}
