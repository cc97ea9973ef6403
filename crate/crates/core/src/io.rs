//! CSV artifacts and their readers.
//!
//! | artifact    | header                          |
//! |-------------|---------------------------------|
//! | solution    | `x,v,vx,c`                      |
//! | search log  | `label,b,a,A,gap`               |
//! | diagnostic  | `x,ratio_v,ratio_vx,ratio_c`    |
//!
//! Numbers use 6 decimal places and `.` as the decimal separator. In the search
//! log `b` keeps 10 decimals (the finest search steps are 1e-9) and rows other
//! than `c.` carry `-` in the `a`, `A` and `gap` columns.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::asymptotics::RatioSample;
use crate::error::{Error, Result};
use crate::hjb::HjbSolution;
use crate::scalar::Scalar;
use crate::shooting::{CandidateEvaluation, Label};

pub const SOLUTION_HEADER: [&str; 4] = ["x", "v", "vx", "c"];
pub const SEARCH_HEADER: [&str; 5] = ["label", "b", "a", "A", "gap"];
pub const DIAGNOSTIC_HEADER: [&str; 4] = ["x", "ratio_v", "ratio_vx", "ratio_c"];

const MISSING: &str = "-";

fn fmt6<T: Scalar>(v: T) -> String {
    format!("{:.6}", v.as_f64())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    pub x: f64,
    pub v: f64,
    pub vx: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRow {
    pub label: Label,
    pub b: f64,
    pub a: Option<f64>,
    pub first_jump: Option<f64>,
    pub gap: Option<f64>,
}

pub fn write_solution_csv<T: Scalar, W: Write>(sol: &HjbSolution<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SOLUTION_HEADER)?;
    for k in 0..sol.len() {
        w.write_record([fmt6(sol.xs[k]), fmt6(sol.vs[k]), fmt6(sol.vxs[k]), fmt6(sol.cs[k])])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_solution_csv<R: Read>(input: R) -> Result<Vec<SolutionRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(r.headers()?, &SOLUTION_HEADER)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_search_csv<T: Scalar, W: Write>(log: &[CandidateEvaluation<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SEARCH_HEADER)?;
    for e in log {
        let b = format!("{:.10}", e.b.as_f64());
        let row = match (e.label, e.first_jump, e.gap) {
            (Label::Correct, Some(big_a), Some(gap)) => {
                [e.label.abbrev().to_string(), b, fmt6(e.a), fmt6(big_a), fmt6(gap)]
            }
            _ => [
                e.label.abbrev().to_string(),
                b,
                MISSING.into(),
                MISSING.into(),
                MISSING.into(),
            ],
        };
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_search_csv<R: Read>(input: R) -> Result<Vec<SearchRow>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(r.headers()?, &SEARCH_HEADER)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = Label::from_abbrev(&rec[0])
            .ok_or_else(|| Error::Domain(format!("unknown search label {:?}", &rec[0])))?;
        rows.push(SearchRow {
            label,
            b: parse_number(&rec[1])?,
            a: parse_optional(&rec[2])?,
            first_jump: parse_optional(&rec[3])?,
            gap: parse_optional(&rec[4])?,
        });
    }
    Ok(rows)
}

pub fn write_diagnostic_csv<T: Scalar, W: Write>(samples: &[RatioSample<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIAGNOSTIC_HEADER)?;
    for s in samples {
        w.write_record([fmt6(s.x), fmt6(s.ratio_v), fmt6(s.ratio_vx), fmt6(s.ratio_c)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diagnostic_csv<R: Read>(input: R) -> Result<Vec<RatioSample<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    check_header(r.headers()?, &DIAGNOSTIC_HEADER)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(RatioSample {
            x: parse_number(&rec[0])?,
            ratio_v: parse_number(&rec[1])?,
            ratio_vx: parse_number(&rec[2])?,
            ratio_c: parse_number(&rec[3])?,
        });
    }
    Ok(rows)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::Domain(format!(
            "unexpected CSV header {:?}, expected {:?}",
            found.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(())
}

fn parse_number(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Domain(format!("not a number: {s:?}")))
}

fn parse_optional(s: &str) -> Result<Option<f64>> {
    if s.trim() == MISSING {
        Ok(None)
    } else {
        parse_number(s).map(Some)
    }
}
