//! Re-reads every file the harness wrote and checks that binary formats
//! re-encode to the same bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::dataset::Dataset;
use crate::experiment::pgm::read_pgm16;
use crate::experiment::report::read_metrics;
use crate::generator::GeneratorParams;
use crate::imaging::{KSpaceMeasurement, MaskSidecar, MeasurementSidecar, SamplingMask};
use crate::sidecar::sidecar_path;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelfCheckReport {
    /// Files checked per kind.
    pub checked: BTreeMap<&'static str, usize>,
    /// Files with an extension the harness never writes.
    pub skipped: Vec<PathBuf>,
}

impl SelfCheckReport {
    pub fn total(&self) -> usize {
        self.checked.values().sum()
    }
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn mismatch(p: &Path, what: &str) -> Error {
    Error::Parse {
        path: Some(p.to_path_buf()),
        line: None,
        message: format!("{what} does not re-encode to the same bytes"),
    }
}

fn check_tensor(p: &Path) -> Result<&'static str> {
    let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
    let t = Tensor::decode(&bytes).map_err(|e| e.at_path(p))?;
    if t.encode() != bytes {
        return Err(mismatch(p, "tensor"));
    }
    let side = sidecar_path(p);
    if side.exists() {
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        if toml::from_str::<MeasurementSidecar>(&text).is_ok() {
            KSpaceMeasurement::read(p)?;
            return Ok("measurement");
        }
        if toml::from_str::<MaskSidecar>(&text).is_ok() {
            SamplingMask::read(p)?;
            return Ok("mask");
        }
    }
    Ok("tensor")
}

fn check_csv(p: &Path) -> Result<&'static str> {
    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
    if text.starts_with("schema_version,") {
        read_metrics(p)?;
        return Ok("metrics-csv");
    }
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    for rec in rd.records() {
        rec.map_err(|e| Error::Parse {
            path: Some(p.to_path_buf()),
            line: e.position().map(|q| q.line() as usize),
            message: e.to_string(),
        })?;
    }
    Ok("csv")
}

fn check_file(p: &Path) -> Result<Option<&'static str>> {
    let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
    Ok(Some(match ext {
        "tnsr" => check_tensor(p)?,
        "pgm" => {
            read_pgm16(p)?;
            "pgm"
        }
        "csv" => check_csv(p)?,
        "toml" => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<toml::Table>().map_err(|e| Error::Parse {
                path: Some(p.to_path_buf()),
                line: e.span().map(|s| crate::sidecar::line_of(&text, s.start)),
                message: e.message().to_string(),
            })?;
            "toml"
        }
        "sgen" => {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            let g = GeneratorParams::decode_bytes(&bytes).map_err(|e| e.at_path(p))?;
            if g.encode() != bytes {
                return Err(mismatch(p, "generator"));
            }
            "generator"
        }
        _ => return Ok(None),
    }))
}

/// Checks every file under `dir`; the first unreadable file is an error.
pub fn self_check(dir: &Path) -> Result<SelfCheckReport> {
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    let mut report = SelfCheckReport::default();
    for p in files {
        if p.file_name().is_some_and(|n| n == "dataset.toml") {
            Dataset::read(p.parent().expect("file has a parent"))?;
            *report.checked.entry("dataset").or_default() += 1;
        }
        match check_file(&p)? {
            Some(kind) => *report.checked.entry(kind).or_default() += 1,
            None => report.skipped.push(p),
        }
    }
    Ok(report)
}
