//! Canonical file formats: CSV inputs, JSON archives and CSV outputs.
//!
//! - `months.csv`: `month_index,end_day` (1-based month index)
//! - `events.csv`: `unit_id,day`
//! - `exposure.csv`: `unit_id,month_index,miles,days_in_month` or
//!   `unit_id,month_index,daily_kmiles`, detected from the header
//!
//! Units appear in the order of their first exposure row; months without
//! a row have zero exposure.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use avrel_core::dataset::{validate, Violation};
use avrel_core::{Calendar, Fleet, UnitHistory};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

fn open_csv(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn header(rdr: &mut csv::Reader<fs::File>, path: &Path) -> CliResult<Vec<String>> {
    let h = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?;
    Ok(h.iter().map(|s| s.to_string()).collect())
}

fn expect_header(found: &[String], expected: &[&str], path: &Path) -> CliResult<()> {
    if found != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{}', found '{}'", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

/// Rows as string records with their 1-based file line numbers.
fn rows(rdr: &mut csv::Reader<fs::File>, path: &Path) -> CliResult<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, name: &str, path: &Path, line: u64) -> CliResult<T> {
    let raw = rec.get(k).unwrap_or("");
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse {name} from '{raw}'")))
}

pub fn read_months(path: &Path) -> CliResult<Calendar> {
    let mut rdr = open_csv(path)?;
    expect_header(&header(&mut rdr, path)?, &["month_index", "end_day"], path)?;
    let mut ends = Vec::new();
    for (line, rec) in rows(&mut rdr, path)? {
        let idx: usize = field(&rec, 0, "month_index", path, line)?;
        if idx != ends.len() + 1 {
            return Err(parse_err(
                path,
                line,
                format!("month_index {idx} out of sequence; expected {}", ends.len() + 1),
            ));
        }
        ends.push(field::<u32>(&rec, 1, "end_day", path, line)?);
    }
    Calendar::new(ends).map_err(|e| parse_err(path, 1, e.to_string()))
}

pub fn read_exposure(path: &Path, cal: &Calendar) -> CliResult<Vec<(String, Vec<f64>)>> {
    let mut rdr = open_csv(path)?;
    let h = header(&mut rdr, path)?;
    let raw_miles = match h.len() {
        4 => {
            expect_header(&h, &["unit_id", "month_index", "miles", "days_in_month"], path)?;
            true
        }
        _ => {
            expect_header(&h, &["unit_id", "month_index", "daily_kmiles"], path)?;
            false
        }
    };
    let mut order: Vec<(String, Vec<f64>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
    for (line, rec) in rows(&mut rdr, path)? {
        let id = rec.get(0).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty unit_id"));
        }
        let month: usize = field(&rec, 1, "month_index", path, line)?;
        if month == 0 || month > cal.n_months() {
            return Err(parse_err(
                path,
                line,
                format!("month_index {month} outside 1..={}", cal.n_months()),
            ));
        }
        let daily = if raw_miles {
            let miles: f64 = field(&rec, 2, "miles", path, line)?;
            let days: f64 = field(&rec, 3, "days_in_month", path, line)?;
            if !(days > 0.0) {
                return Err(parse_err(path, line, format!("days_in_month must be positive, got {days}")));
            }
            miles / 1000.0 / days
        } else {
            field(&rec, 2, "daily_kmiles", path, line)?
        };
        let u = *index.entry(id.clone()).or_insert_with(|| {
            order.push((id.clone(), vec![0.0; cal.n_months()]));
            order.len() - 1
        });
        if let Some(first) = seen.insert((u, month), line) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate exposure for unit '{id}' month {month} (first on line {first})"),
            ));
        }
        order[u].1[month - 1] = daily;
    }
    Ok(order)
}

pub fn read_events(path: &Path, units: &[(String, Vec<f64>)]) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = open_csv(path)?;
    expect_header(&header(&mut rdr, path)?, &["unit_id", "day"], path)?;
    let index: HashMap<&str, usize> = units.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    let mut events = vec![Vec::new(); units.len()];
    for (line, rec) in rows(&mut rdr, path)? {
        let id = rec.get(0).unwrap_or("");
        let &u = index
            .get(id)
            .ok_or_else(|| parse_err(path, line, format!("unknown unit_id '{id}' (no exposure rows)")))?;
        events[u].push(field::<f64>(&rec, 1, "day", path, line)?);
    }
    Ok(events)
}

/// Builds the fleet from the three CSVs; validation problems are returned
/// alongside the (unvalidated) fleet.
pub fn ingest(months: &Path, events: &Path, exposure: &Path) -> CliResult<(Fleet, Vec<Violation>)> {
    let cal = read_months(months)?;
    let units = read_exposure(exposure, &cal)?;
    let ev = read_events(events, &units)?;
    let histories = units
        .into_iter()
        .zip(ev)
        .map(|((id, x), e)| UnitHistory::new(id, e, x))
        .collect();
    let fleet = Fleet::new_unvalidated(cal, histories);
    let violations = validate(&fleet);
    Ok((fleet, violations))
}

/// Writes the fleet back out as the three canonical CSVs (daily k-miles form).
pub fn export(fleet: &Fleet, dir: &Path) -> CliResult<()> {
    let mut months = String::from("month_index,end_day\n");
    for (l, end) in fleet.calendar().month_end_days().iter().enumerate() {
        months.push_str(&format!("{},{end}\n", l + 1));
    }
    let mut events = String::from("unit_id,day\n");
    let mut exposure = String::from("unit_id,month_index,daily_kmiles\n");
    for u in fleet.units() {
        let id = csv_field(u.unit_id());
        for d in u.event_days() {
            events.push_str(&format!("{id},{d}\n"));
        }
        for (l, x) in u.daily_kmiles().iter().enumerate() {
            exposure.push_str(&format!("{id},{},{x}\n", l + 1));
        }
    }
    write_text(&dir.join("months.csv"), &months)?;
    write_text(&dir.join("events.csv"), &events)?;
    write_text(&dir.join("exposure.csv"), &exposure)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let mut f = fs::File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    f.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty JSON with shortest round-trip float representations.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads a fleet archive and re-checks it.
pub fn read_fleet(path: &Path) -> CliResult<Fleet> {
    let fleet: Fleet = read_json(path)?;
    let violations = validate(&fleet);
    if !violations.is_empty() {
        return Err(validation_error(&violations));
    }
    Ok(fleet)
}

pub fn validation_error(violations: &[Violation]) -> CliError {
    CliError::Validation {
        count: violations.len(),
        listing: violations.iter().map(|v| format!("  {v}")).collect::<Vec<_>>().join("\n"),
    }
}

/// Minimal CSV table writer for numeric outputs.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let line: Vec<&str> = cells.iter().map(|c| c.as_ref()).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_text(path, &self.text)
    }
}
