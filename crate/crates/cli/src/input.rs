// SPDX-License-Identifier: MIT OR Apache-2.0

//! Observation readers for `detect`.
//!
//! Rows are grouped into time steps as they arrive, so arbitrarily long
//! inputs are processed in constant memory per step.

use std::io::{BufRead, Cursor, Read};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use crate::args::InputFormat;

/// Malformed or inconsistent input data.
#[derive(Debug)]
pub struct DataError(pub String);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

macro_rules! data_err {
    ($($arg:tt)*) => { anyhow::Error::new($crate::input::DataError(format!($($arg)*))) };
}
pub(crate) use data_err;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Row {
    pub line: u64,
    pub t: u64,
    pub stream: usize,
    pub x: f64,
}

/// All rows sharing one time index.
#[derive(Debug)]
pub struct Step {
    pub t: u64,
    pub rows: Vec<Row>,
}

#[derive(Deserialize)]
struct JsonRow {
    t: u64,
    stream: usize,
    x: f64,
}

type RowIter = Box<dyn Iterator<Item = Result<Row>>>;

fn ndjson_rows(input: Box<dyn BufRead>) -> RowIter {
    Box::new(input.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i as u64 + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(
            serde_json::from_str::<JsonRow>(&line)
                .map(|r| Row {
                    line: line_no,
                    t: r.t,
                    stream: r.stream,
                    x: r.x,
                })
                .map_err(|e| data_err!("line {line_no}: {e}")),
        )
    }))
}

fn csv_reader(input: Box<dyn BufRead>) -> csv::Reader<Box<dyn BufRead>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn long_rows(input: Box<dyn BufRead>) -> Result<RowIter> {
    let mut reader = csv_reader(input);
    let header = reader.headers().context("reading CSV header")?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "stream", "x"] {
        bail!(DataError(format!("expected CSV header `t,stream,x`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(Box::new(reader.into_records().map(|record| {
        let record = record.map_err(|e| data_err!("{e}"))?;
        let line = record_line(&record);
        let field = |i: usize| record.get(i).unwrap_or("");
        let t = field(0).parse().map_err(|_| data_err!("line {line}: bad time `{}`", field(0)))?;
        let stream = field(1).parse().map_err(|_| data_err!("line {line}: bad stream id `{}`", field(1)))?;
        let x = field(2).parse().map_err(|_| data_err!("line {line}: bad value `{}`", field(2)))?;
        Ok(Row { line, t, stream, x })
    })))
}

fn wide_rows(input: Box<dyn BufRead>) -> Result<RowIter> {
    let mut reader = csv_reader(input);
    let header = reader.headers().context("reading CSV header")?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        bail!(DataError("wide CSV needs a header `t,<stream 0>,<stream 1>,...`".into()));
    }
    let width = header.len() - 1;
    Ok(Box::new(reader.into_records().flat_map(move |record| {
        let rows: Vec<Result<Row>> = match record {
            Err(e) => vec![Err(data_err!("{e}"))],
            Ok(record) => {
                let line = record_line(&record);
                match record.get(0).unwrap_or("").parse::<u64>() {
                    Err(_) => vec![Err(data_err!("line {line}: bad time `{}`", record.get(0).unwrap_or("")))],
                    Ok(_) if record.len() != width + 1 => {
                        vec![Err(data_err!("line {line}: expected {} fields, found {}", width + 1, record.len()))]
                    }
                    // Empty cells mark streams without data (already deactivated).
                    Ok(t) => (0..width)
                        .filter(|&k| !record[k + 1].is_empty())
                        .map(|k| {
                            record[k + 1]
                                .parse()
                                .map(|x| Row { line, t, stream: k, x })
                                .map_err(|_| data_err!("line {line}: bad value `{}`", &record[k + 1]))
                        })
                        .collect(),
                }
            }
        };
        rows
    })))
}

/// Groups rows by time and enforces ordering.
pub struct StepReader {
    rows: RowIter,
    pending: Option<Row>,
    last_t: Option<u64>,
}

impl StepReader {
    pub fn new(mut input: Box<dyn BufRead>, format: InputFormat) -> Result<Self> {
        let format = match format {
            InputFormat::Auto => {
                // Sniff the first non-blank line, then put it back in front.
                let mut head = String::new();
                loop {
                    let before = head.len();
                    if input.read_line(&mut head)? == 0 || !head[before..].trim().is_empty() {
                        break;
                    }
                }
                let first = head.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("").trim().to_string();
                let detected = if first.starts_with('{') {
                    InputFormat::Ndjson
                } else if first.replace(' ', "") == "t,stream,x" {
                    InputFormat::Csv
                } else if first.starts_with("t,") {
                    InputFormat::Wide
                } else if first.is_empty() {
                    InputFormat::Ndjson
                } else {
                    bail!(DataError(format!("cannot tell the input format from `{first}`; pass --format")));
                };
                input = Box::new(Cursor::new(head.into_bytes()).chain(input));
                detected
            }
            other => other,
        };
        let rows = match format {
            InputFormat::Ndjson => ndjson_rows(input),
            InputFormat::Csv => long_rows(input)?,
            InputFormat::Wide => wide_rows(input)?,
            InputFormat::Auto => unreachable!(),
        };
        Ok(Self {
            rows,
            pending: None,
            last_t: None,
        })
    }

    fn next_row(&mut self) -> Result<Option<Row>> {
        if let Some(row) = self.pending.take() {
            return Ok(Some(row));
        }
        self.rows.next().transpose()
    }

    /// Next time step; `None` at the end of input.
    pub fn next_step(&mut self) -> Result<Option<Step>> {
        let Some(first) = self.next_row()? else {
            return Ok(None);
        };
        if let Some(last) = self.last_t {
            if first.t < last {
                return Err(data_err!("line {}: input not sorted by time (t={} after t={last})", first.line, first.t));
            }
        }
        let mut rows = vec![first];
        while let Some(row) = self.next_row()? {
            if row.t != first.t {
                if row.t < first.t {
                    return Err(data_err!("line {}: input not sorted by time (t={} after t={})", row.line, row.t, first.t));
                }
                self.pending = Some(row);
                break;
            }
            rows.push(row);
        }
        self.last_t = Some(first.t);
        Ok(Some(Step { t: first.t, rows }))
    }
}

/// Checks a step against the detector state and returns the observations
/// for currently active streams plus the number of rows for streams that
/// were already deactivated.
pub fn observations(step: &Step, k: usize, is_active: impl Fn(usize) -> bool) -> Result<(Vec<(usize, f64)>, usize)> {
    let mut seen = vec![false; k];
    let mut obs = Vec::with_capacity(step.rows.len());
    let mut discarded = 0;
    for row in &step.rows {
        if row.stream >= k {
            return Err(data_err!("line {}: unknown stream {} (there are {k} streams)", row.line, row.stream));
        }
        if std::mem::replace(&mut seen[row.stream], true) {
            return Err(data_err!("line {}: duplicate row for stream {} at t={}", row.line, row.stream, row.t));
        }
        if is_active(row.stream) {
            obs.push((row.stream, row.x));
        } else {
            discarded += 1;
        }
    }
    Ok((obs, discarded))
}

/// Opens `path`, with `-` meaning standard input.
pub fn open(path: &std::path::Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(std::io::BufReader::new(std::io::stdin())));
    }
    let file = std::fs::File::open(path).map_err(|e| anyhow!(e).context(format!("opening {}", path.display())))?;
    Ok(Box::new(std::io::BufReader::new(file)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steps(text: &str, format: InputFormat) -> Result<Vec<Step>> {
        let mut reader = StepReader::new(Box::new(Cursor::new(text.as_bytes().to_vec())), format)?;
        let mut out = Vec::new();
        while let Some(step) = reader.next_step()? {
            out.push(step);
        }
        Ok(out)
    }

    #[test]
    fn formats_agree() {
        let ndjson = "{\"t\":1,\"stream\":0,\"x\":0.5}\n{\"t\":1,\"stream\":1,\"x\":-1}\n\n{\"t\":2,\"stream\":1,\"x\":2}\n";
        let long = "t,stream,x\n1,0,0.5\n1,1,-1\n2,1,2\n";
        let wide = "t,a,b\n1,0.5,-1\n2,,2\n";
        let strip = |s: Vec<Step>| s.into_iter().map(|s| (s.t, s.rows.iter().map(|r| (r.stream, r.x)).collect::<Vec<_>>())).collect::<Vec<_>>();
        let a = strip(steps(ndjson, InputFormat::Auto).unwrap());
        assert_eq!(a, vec![(1, vec![(0, 0.5), (1, -1.0)]), (2, vec![(1, 2.0)])]);
        assert_eq!(strip(steps(long, InputFormat::Auto).unwrap()), a);
        assert_eq!(strip(steps(wide, InputFormat::Auto).unwrap()), a);
        assert_eq!(strip(steps(long, InputFormat::Csv).unwrap()), a);
    }

    #[test]
    fn line_numbers_and_errors() {
        let err = steps("t,stream,x\n2,0,1\n1,0,1\n", InputFormat::Auto).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(err.to_string().contains("not sorted"));
        let err = steps("{\"t\":1,\"stream\":0}\n", InputFormat::Auto).unwrap_err();
        assert!(err.to_string().starts_with("line 1"), "{err}");
        assert!(steps("1,2,3\n", InputFormat::Auto).is_err());
        assert!(steps("", InputFormat::Auto).unwrap().is_empty());

        let step = &steps("t,stream,x\n1,0,1\n1,0,2\n", InputFormat::Csv).unwrap()[0];
        assert!(observations(step, 2, |_| true).unwrap_err().to_string().contains("duplicate"));
        let step = &steps("t,stream,x\n1,5,1\n", InputFormat::Csv).unwrap()[0];
        assert!(observations(step, 2, |_| true).unwrap_err().to_string().contains("unknown stream 5"));
        let step = &steps("t,stream,x\n1,0,1\n1,1,1\n", InputFormat::Csv).unwrap()[0];
        assert_eq!(observations(step, 2, |k| k == 1).unwrap(), (vec![(1, 1.0)], 1));
    }
}
