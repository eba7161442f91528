//! Scenario and user-fleet CSV files, digests, and atomic output.
//!
//! Scenario files carry a `t,w,r` header and may start with `# key: value`
//! metadata lines (`slot_hours`, `units`, `seed`, ...). User files carry an
//! `i,g,nu_max` header. Numbers are written with Rust's shortest round-trip
//! formatting, so a write followed by a read reproduces every value exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use stackgrid::{FlexUserSet, Scenario};

use crate::error::{CliError, CliResult};

/// Input file bytes with their SHA-256 digest.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub path: PathBuf,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// `# key: value` lines (also `# key = value`) in file order.
pub fn metadata(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .filter_map(|l| l.split_once(':').or_else(|| l.split_once('=')))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

struct Table {
    /// `(line, fields)` for each data record.
    records: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path, bytes: &[u8], header: &[&str]) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(path, e.position().map_or(1, |p| p.line()), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        let line = reader.position().line().max(1);
        return Err(parse_error(
            path,
            line,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.join(",")
            ),
        ));
    }
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record
            .map_err(|e| parse_error(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_error(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        records.push((line, record.iter().map(str::to_string).collect()));
    }
    if records.is_empty() {
        return Err(parse_error(path, 1, "no data rows"));
    }
    Ok(Table { records })
}

fn parse_index(path: &Path, line: u64, field: &str, name: &str, expected: usize) -> CliResult<()> {
    let value: usize = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("{name} = `{field}` is not an integer")))?;
    if value != expected {
        return Err(parse_error(
            path,
            line,
            format!("{name} = {value}, expected {expected} (rows must be numbered 1, 2, ...)"),
        ));
    }
    Ok(())
}

fn parse_number(path: &Path, line: u64, field: &str, name: &str) -> CliResult<f64> {
    let value: f64 = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("{name} = `{field}` is not a number")))?;
    if !value.is_finite() {
        return Err(parse_error(
            path,
            line,
            format!("{name} = {field} is not finite"),
        ));
    }
    Ok(value)
}

pub fn parse_scenario(path: &Path, bytes: &[u8]) -> CliResult<Scenario> {
    let table = read_table(path, bytes, &["t", "w", "r"])?;
    let mut w = Vec::with_capacity(table.records.len());
    let mut r = Vec::with_capacity(table.records.len());
    for (k, (line, fields)) in table.records.iter().enumerate() {
        parse_index(path, *line, &fields[0], "t", k + 1)?;
        let wv = parse_number(path, *line, &fields[1], "w")?;
        let rv = parse_number(path, *line, &fields[2], "r")?;
        if wv < 0.0 || rv < 0.0 {
            return Err(parse_error(path, *line, "w and r must be non-negative"));
        }
        w.push(wv);
        r.push(rv);
    }
    let text = String::from_utf8_lossy(bytes);
    let meta = metadata(&text);
    let slot_hours = match meta.get("slot_hours") {
        Some(v) => v
            .parse::<f64>()
            .map_err(|_| parse_error(path, 1, format!("slot_hours = `{v}` is not a number")))?,
        None => 1.0,
    };
    Scenario::with_slot_hours(w, r, slot_hours).map_err(|e| parse_error(path, 1, e.to_string()))
}

pub fn parse_users(path: &Path, bytes: &[u8]) -> CliResult<FlexUserSet> {
    let table = read_table(path, bytes, &["i", "g", "nu_max"])?;
    let mut g = Vec::with_capacity(table.records.len());
    let mut caps = Vec::with_capacity(table.records.len());
    for (k, (line, fields)) in table.records.iter().enumerate() {
        parse_index(path, *line, &fields[0], "i", k + 1)?;
        let gv = parse_number(path, *line, &fields[1], "g")?;
        let cv = parse_number(path, *line, &fields[2], "nu_max")?;
        if !(gv > 0.0) {
            return Err(parse_error(
                path,
                *line,
                format!("g = {gv} must be positive"),
            ));
        }
        if !(cv > 0.0) {
            return Err(parse_error(
                path,
                *line,
                format!("nu_max = {cv} must be positive"),
            ));
        }
        g.push(gv);
        caps.push(cv);
    }
    FlexUserSet::new(g, caps).map_err(|e| parse_error(path, 1, e.to_string()))
}

pub fn load_scenario(path: &Path) -> CliResult<Loaded<Scenario>> {
    let bytes = read_bytes(path)?;
    Ok(Loaded {
        value: parse_scenario(path, &bytes)?,
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

/// Loads a user file and checks `nu_max_i >= g_i / T` for the scenario.
pub fn load_users(path: &Path, slots: usize) -> CliResult<Loaded<FlexUserSet>> {
    let bytes = read_bytes(path)?;
    let users = parse_users(path, &bytes)?;
    users
        .validate_for(slots)
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    Ok(Loaded {
        value: users,
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn scenario_csv(scenario: &Scenario, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str("t,w,r\n");
    for (t, (w, r)) in scenario.w().iter().zip(scenario.r()).enumerate() {
        let _ = writeln!(out, "{},{w},{r}", t + 1);
    }
    out
}

pub fn users_csv(users: &FlexUserSet) -> String {
    let mut out = String::from("i,g,nu_max\n");
    for (i, (g, c)) in users.g().iter().zip(users.nu_max()).enumerate() {
        let _ = writeln!(out, "{},{g},{c}", i + 1);
    }
    out
}

/// Writes via a temporary file in the target directory and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}
