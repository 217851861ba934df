use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::runner::{order_rows, MetricsRow, METRICS_HEADER, SCHEMA_VERSION};
use crate::recon::Method;

fn parse_err(line: u64, message: String) -> Error {
    Error::Parse {
        path: None,
        line: Some(line as usize),
        message,
    }
}

/// Parses a metrics CSV. Errors carry the 1-based line number.
pub fn parse_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(parse_err(1, format!("unexpected header, expected {}", METRICS_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| &rec[i];
        let num = |i: usize| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("column {} is not a number: '{}'", METRICS_HEADER[i], field(i))))
        };
        let opt_num = |i: usize| -> Result<Option<f64>> {
            if field(i).is_empty() {
                Ok(None)
            } else {
                num(i).map(Some)
            }
        };
        if field(0) != SCHEMA_VERSION.to_string() {
            return Err(parse_err(line, format!("unsupported schema_version '{}'", field(0))));
        }
        let method: Method = field(2).parse().map_err(|e: Error| parse_err(line, e.to_string()))?;
        let row = MetricsRow {
            image_id: field(1).to_string(),
            method,
            r: num(3)?,
            snr_db: num(4)?,
            rmse: opt_num(5)?,
            ssim: opt_num(6)?,
            wall_time_s: opt_num(7)?,
            seed: field(8)
                .parse()
                .map_err(|_| parse_err(line, format!("seed is not an integer: '{}'", field(8))))?,
            status: field(9).to_string(),
        };
        if row.is_ok() && (row.rmse.is_none() || row.ssim.is_none()) {
            return Err(parse_err(line, "row has status ok but no metrics".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text).map_err(|e| e.at_path(path))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Summary {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
    })
}

/// Statistics of one (method, R, SNR) group over its successful rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub r: f64,
    pub snr_db: f64,
    pub n: usize,
    pub failed: usize,
    pub rmse: Option<Summary>,
    pub ssim: Option<Summary>,
}

pub fn aggregate(rows: &[MetricsRow]) -> Vec<Aggregate> {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| order_rows(a, b));
    sorted
        .chunk_by(|a, b| order_rows(a, b).is_eq())
        .map(|group| {
            let ok: Vec<&&MetricsRow> = group.iter().filter(|r| r.is_ok()).collect();
            let rmse: Vec<f64> = ok.iter().filter_map(|r| r.rmse).collect();
            let ssim: Vec<f64> = ok.iter().filter_map(|r| r.ssim).collect();
            Aggregate {
                method: group[0].method,
                r: group[0].r,
                snr_db: group[0].snr_db,
                n: ok.len(),
                failed: group.len() - ok.len(),
                rmse: summarize(&rmse),
                ssim: summarize(&ssim),
            }
        })
        .collect()
}

pub const AGGREGATE_HEADER: [&str; 14] = [
    "method",
    "R",
    "snr_db",
    "n",
    "failed",
    "rmse_mean",
    "rmse_median",
    "rmse_q1",
    "rmse_q3",
    "ssim_mean",
    "ssim_median",
    "ssim_q1",
    "ssim_q3",
    "schema_version",
];

fn summary_fields(s: &Option<Summary>) -> [String; 4] {
    match s {
        Some(s) => [s.mean, s.median, s.q1, s.q3].map(|v| v.to_string()),
        None => Default::default(),
    }
}

pub fn aggregate_csv(aggs: &[Aggregate]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_HEADER).expect("in-memory write");
    for a in aggs {
        let mut rec = vec![a.method.name().to_string(), a.r.to_string(), a.snr_db.to_string(), a.n.to_string(), a.failed.to_string()];
        rec.extend(summary_fields(&a.rmse));
        rec.extend(summary_fields(&a.ssim));
        rec.push(SCHEMA_VERSION.to_string());
        w.write_record(rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn table(aggs: &[Aggregate]) -> String {
    let mut s = format!(
        "{:<8} {:>5} {:>7} {:>4} {:>6}  {:>9} {:>9} {:>9}  {:>7} {:>7} {:>7}\n",
        "method", "R", "snr_db", "n", "failed", "rmse_mean", "rmse_med", "rmse_iqr", "ssim_mu", "ssim_md", "ssim_iq"
    );
    let cell = |s: &Option<Summary>, f: fn(&Summary) -> f64, prec: usize| {
        s.as_ref().map(|s| format!("{:.*}", prec, f(s))).unwrap_or_else(|| "-".into())
    };
    for a in aggs {
        s.push_str(&format!(
            "{:<8} {:>5} {:>7} {:>4} {:>6}  {:>9} {:>9} {:>9}  {:>7} {:>7} {:>7}\n",
            a.method.name(),
            a.r,
            a.snr_db,
            a.n,
            a.failed,
            cell(&a.rmse, |s| s.mean, 5),
            cell(&a.rmse, |s| s.median, 5),
            cell(&a.rmse, Summary::iqr, 5),
            cell(&a.ssim, |s| s.mean, 4),
            cell(&a.ssim, |s| s.median, 4),
            cell(&a.ssim, Summary::iqr, 4),
        ));
    }
    s
}

/// Reads every CSV, aggregates across all of them, and returns the text
/// table together with the aggregate CSV.
pub fn report(paths: &[&Path]) -> Result<(Vec<Aggregate>, String, String)> {
    let mut rows = Vec::new();
    for p in paths {
        rows.extend(read_metrics(p)?);
    }
    let aggs = aggregate(&rows);
    let t = table(&aggs);
    let c = aggregate_csv(&aggs);
    Ok((aggs, t, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::runner::metrics_csv;

    fn row(id: &str, method: Method, rmse: f64, ssim: f64) -> MetricsRow {
        MetricsRow {
            image_id: id.into(),
            method,
            r: 4.0,
            snr_db: 20.0,
            rmse: Some(rmse),
            ssim: Some(ssim),
            wall_time_s: None,
            seed: 7,
            status: "ok".into(),
        }
    }

    #[test]
    fn single_row_summary() {
        let a = aggregate(&[row("0000", Method::Csgm, 0.25, 0.5)]);
        assert_eq!(a.len(), 1);
        let r = a[0].rmse.unwrap();
        assert_eq!((r.mean, r.median, r.q1, r.q3), (0.25, 0.25, 0.25, 0.25));
    }

    #[test]
    fn type7_quartiles() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q1, 1.75);
        assert_eq!(s.q3, 3.25);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn groups_by_method() {
        let rows = vec![
            row("0000", Method::Picgm, 0.1, 0.9),
            row("0000", Method::PlsTv, 0.3, 0.5),
            row("0001", Method::Picgm, 0.2, 0.8),
            row("0001", Method::PlsTv, 0.5, 0.4),
        ];
        let a = aggregate(&rows);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].method, Method::PlsTv);
        assert!((a[0].rmse.unwrap().mean - 0.4).abs() < 1e-15);
        assert_eq!(a[1].method, Method::Picgm);
        assert!((a[1].ssim.unwrap().mean - 0.85).abs() < 1e-15);
    }

    #[test]
    fn failed_rows_are_counted_not_averaged() {
        let mut bad = row("0001", Method::Csgm, 0.0, 0.0);
        bad.rmse = None;
        bad.ssim = None;
        bad.status = "failed-numerical: x".into();
        let a = aggregate(&[row("0000", Method::Csgm, 0.2, 0.7), bad]);
        assert_eq!((a[0].n, a[0].failed), (1, 1));
        assert_eq!(a[0].rmse.unwrap().mean, 0.2);
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = vec![row("0000", Method::Wpiccs, 0.123456789, 0.9), row("0001", Method::Wpiccs, 1e-7, 0.99)];
        rows[1].snr_db = f64::INFINITY;
        rows[1].wall_time_s = Some(1.5);
        let text = metrics_csv(&rows);
        assert!(text.starts_with("schema_version,image_id,method,R,snr_db,rmse,ssim,wall_time_s,seed,status\n"));
        assert!(!text.contains('\r'));
        assert_eq!(parse_metrics(&text).unwrap(), rows);
        assert_eq!(parse_metrics(&metrics_csv(&[])).unwrap(), vec![]);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let good = metrics_csv(&[row("0000", Method::Csgm, 0.1, 0.9), row("0001", Method::Csgm, 0.1, 0.9)]);
        let bad = good.replacen("0001,csgm,4,20,0.1", "0001,csgm,4,20,zero", 1);
        let err = parse_metrics(&bad).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(3), .. }), "{err}");
        let err = parse_metrics(&good.replacen("0001,csgm", "0001,fista", 1)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(3), .. }));
        let err = parse_metrics("a,b\n1,2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(1), .. }));
        let short = format!("{}1,0000,csgm\n", METRICS_HEADER.join(",") + "\n");
        assert!(matches!(parse_metrics(&short), Err(Error::Parse { line: Some(2), .. })));
    }

    #[test]
    fn aggregate_csv_has_header_and_rows() {
        let text = aggregate_csv(&aggregate(&[row("0000", Method::Csgm, 0.1, 0.9)]));
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], AGGREGATE_HEADER.join(","));
        assert!(lines[1].starts_with("csgm,4,20,1,0,0.1,0.1,0.1,0.1,0.9"));
    }
}
