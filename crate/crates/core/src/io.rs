//! Bit-stable CSV output: header row, comma separator, LF line endings and
//! numbers printed like C's `%.15g`.

use std::io::Write;

use crate::collision::WeightedRecord;
use crate::montecarlo::SampledRecord;
use crate::record::EventPattern;
use crate::Result;

/// `x` formatted like `printf("%.15g", x)`.
pub fn fmt_g15(x: f64) -> String {
    fmt_g(x, 15)
}

/// `x` formatted like `printf("%.{precision}g", x)`.
pub fn fmt_g(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let p = precision.max(1);
    // rounding to p significant digits fixes the exponent
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// One CSV cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Field<'a> {
    Num(f64),
    Int(u64),
    Text(&'a str),
    Empty,
}

impl Field<'_> {
    fn render(&self) -> String {
        match self {
            Field::Num(x) => fmt_g15(*x),
            Field::Int(k) => k.to_string(),
            Field::Text(s) => (*s).to_string(),
            Field::Empty => String::new(),
        }
    }
}

/// CSV writer with a fixed header.
pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new<S: AsRef<str>>(mut out: W, header: &[S]) -> Result<Self> {
        let line: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
        writeln!(out, "{}", line.join(","))?;
        Ok(Self {
            out,
            columns: header.len(),
        })
    }

    /// Writes one row; missing trailing cells are left empty.
    pub fn row(&mut self, fields: &[Field]) -> Result<()> {
        let mut cells: Vec<String> = fields.iter().map(Field::render).collect();
        cells.resize(self.columns.max(cells.len()), String::new());
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

fn event_columns(n: usize, time: &str) -> Vec<String> {
    (1..=n).flat_map(|k| [format!("{time}{k}"), format!("side{k}")]).collect()
}

/// Enumerated records as `m, l1, side1, l2, side2, …, weight`; the first
/// row is the empty record. `m` counts events, a simultaneous count has
/// side `B`.
pub fn write_trajectories<W: Write>(out: W, no_count_weight: f64, records: &[WeightedRecord]) -> Result<W> {
    let width = records.iter().map(|r| r.events.len()).max().unwrap_or(0).max(2);
    let mut header = vec!["m".to_string()];
    header.extend(event_columns(width, "l"));
    header.push("weight".into());
    let mut w = CsvWriter::new(out, &header)?;
    let mut empty = vec![Field::Int(0)];
    empty.resize(1 + 2 * width, Field::Empty);
    empty.push(Field::Num(no_count_weight));
    w.row(&empty)?;
    for r in records {
        let mut row = vec![Field::Int(r.events.len() as u64)];
        for e in &r.events {
            row.push(Field::Int(e.step as u64));
            row.push(Field::Text(e.outcome.short_label()));
        }
        row.resize(1 + 2 * width, Field::Empty);
        row.push(Field::Num(r.weight));
        w.row(&row)?;
    }
    w.finish()
}

/// Sampled records as `sample_id, m, t1, side1, t2, side2, …`, with `m`
/// the number of clicks and a simultaneous count listed as `R` then `L`.
pub fn write_samples<W: Write>(out: W, records: &[SampledRecord], tau: f64) -> Result<W> {
    let width = records.iter().map(SampledRecord::clicks).max().unwrap_or(0).max(2);
    let mut header = vec!["sample_id".to_string(), "m".into()];
    header.extend(event_columns(width, "t"));
    let mut w = CsvWriter::new(out, &header)?;
    for (id, r) in records.iter().enumerate() {
        let clicks = r.click_times(tau);
        let mut row = vec![Field::Int(id as u64), Field::Int(clicks.len() as u64)];
        for (t, side) in &clicks {
            row.push(Field::Num(*t));
            row.push(Field::Text(side.label()));
        }
        w.row(&row)?;
    }
    w.finish()
}

/// One-count densities as `t_prime, side_pattern, density`.
pub fn write_one_count_densities<W: Write>(out: W, rows: &[(f64, EventPattern, f64)]) -> Result<W> {
    let mut w = CsvWriter::new(out, &["t_prime", "side_pattern", "density"])?;
    for (t, p, d) in rows {
        w.row(&[Field::Num(*t), Field::Text(p.label()), Field::Num(*d)])?;
    }
    w.finish()
}

/// Two-count densities as `t_prime, t_second, side_pattern, density`.
pub fn write_two_count_densities<W: Write>(out: W, rows: &[(f64, f64, EventPattern, f64)]) -> Result<W> {
    let mut w = CsvWriter::new(out, &["t_prime", "t_second", "side_pattern", "density"])?;
    for (t1, t2, p, d) in rows {
        w.row(&[Field::Num(*t1), Field::Num(*t2), Field::Text(p.label()), Field::Num(*d)])?;
    }
    w.finish()
}
