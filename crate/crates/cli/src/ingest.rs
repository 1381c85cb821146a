//! CSV ingestion: hourly aggregation, `log10` and standardization.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike};
use hsmm_core::Dataset;
use serde::{Deserialize, Serialize};

use crate::config::DataConfig;

const TIMESTAMP_LAYOUTS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
];

/// Output layout of aggregated timestamps.
pub const HOUR_LAYOUT: &str = "%Y-%m-%d %H:00:00";

/// Affine map `z = (x - center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub center: f64,
    pub scale: f64,
}

impl Scaling {
    pub const IDENTITY: Scaling = Scaling {
        center: 0.0,
        scale: 1.0,
    };

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }

    /// Mean and sample standard deviation of `values`.
    fn fit(values: &[f64], column: &str) -> Result<Self> {
        if values.len() < 2 {
            bail!("column {column:?}: at least two observations are needed to scale");
        }
        let n = values.len() as f64;
        let center = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - center).powi(2)).sum::<f64>() / (n - 1.0);
        let scale = var.sqrt();
        if !(scale > 0.0 && scale.is_finite()) {
            bail!("column {column:?} is constant and cannot be scaled");
        }
        Ok(Self { center, scale })
    }
}

/// How ingested values map back to the raw scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub log10: bool,
    pub response: Scaling,
    /// One entry per covariate column, in configured order.
    pub covariates: Vec<(String, Scaling)>,
}

impl Transform {
    /// Raw-scale response of a transformed value.
    pub fn response_to_raw(&self, z: f64) -> f64 {
        let v = self.response.invert(z);
        if self.log10 {
            10f64.powf(v)
        } else {
            v
        }
    }

    pub fn covariate_to_raw(&self, i: usize, z: f64) -> f64 {
        self.covariates[i].1.invert(z)
    }
}

/// A run of missing clock hours.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    /// Last hour present before the gap.
    pub after: String,
    /// First hour present after the gap.
    pub before: String,
    pub missing_hours: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: usize,
    pub rejected_nonpositive: usize,
    pub rejected_incomplete: usize,
    pub outside_window: usize,
    pub observations: usize,
    pub missing_hours: i64,
    /// Gaps are closed up; durations treat the series as contiguous.
    pub gaps: Vec<Gap>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub data: Dataset,
    pub transform: Transform,
    pub report: IngestReport,
}

/// Parses a timestamp with `format`, or with RFC 3339 and common ISO layouts.
pub fn parse_timestamp(text: &str, format: Option<&str>) -> Result<NaiveDateTime> {
    let text = text.trim();
    if let Some(f) = format {
        return NaiveDateTime::parse_from_str(text, f)
            .with_context(|| format!("timestamp {text:?} does not match {f:?}"));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Ok(t.naive_utc());
    }
    for layout in TIMESTAMP_LAYOUTS {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, layout) {
            return Ok(t);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight exists"));
    }
    Err(anyhow!("cannot parse timestamp {text:?}"))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| anyhow!("column {name:?} not found in the header"))
}

struct Record {
    time: Option<NaiveDateTime>,
    label: Option<String>,
    response: f64,
    covariates: Vec<f64>,
}

#[derive(Default)]
struct HourAcc {
    max: f64,
    sums: Vec<f64>,
    count: usize,
}

pub fn ingest(path: &Path, cfg: &DataConfig) -> Result<Ingested> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    ingest_reader(file, cfg).with_context(|| format!("while ingesting {}", path.display()))
}

pub fn ingest_reader<R: Read>(reader: R, cfg: &DataConfig) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ts_col = cfg
        .timestamp_column
        .as_deref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let y_col = column_index(&headers, &cfg.response_column)?;
    let x_cols = cfg
        .covariate_columns
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let format = cfg.timestamp_format.as_deref();
    let start = cfg.start.as_deref().map(|s| parse_timestamp(s, None)).transpose()?;
    let end = cfg.end.as_deref().map(|s| parse_timestamp(s, None)).transpose()?;

    // Without hourly aggregation or a window the timestamp is only a label.
    let needs_time = cfg.hourly || start.is_some() || end.is_some();
    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.with_context(|| format!("record {}", i + 1))?;
        report.records += 1;
        let (time, label) = match ts_col {
            Some(c) => {
                let text = row.get(c).unwrap_or("");
                let t = if needs_time {
                    Some(parse_timestamp(text, format).with_context(|| format!("record {}", i + 1))?)
                } else {
                    None
                };
                (t, Some(text.to_string()))
            }
            None => (None, None),
        };
        if let Some(t) = time {
            if start.is_some_and(|s| t < s) || end.is_some_and(|e| t >= e) {
                report.outside_window += 1;
                continue;
            }
        }
        let number = |c: usize| row.get(c).and_then(|v| v.parse::<f64>().ok()).filter(|v| v.is_finite());
        let (Some(response), Some(covariates)) = (
            number(y_col),
            x_cols.iter().map(|&c| number(c)).collect::<Option<Vec<_>>>(),
        ) else {
            report.rejected_incomplete += 1;
            continue;
        };
        if cfg.log10 && response <= 0.0 {
            report.rejected_nonpositive += 1;
            continue;
        }
        records.push(Record {
            time,
            label,
            response,
            covariates,
        });
    }

    let r = x_cols.len();
    let (mut ys, mut xs, labels): (Vec<f64>, Vec<Vec<f64>>, Option<Vec<String>>) = if cfg.hourly {
        let mut hours: BTreeMap<NaiveDateTime, HourAcc> = BTreeMap::new();
        for rec in &records {
            let t = rec.time.expect("hourly aggregation requires timestamps");
            let key = t
                .with_minute(0)
                .and_then(|t| t.with_second(0))
                .and_then(|t| t.with_nanosecond(0))
                .expect("valid hour");
            let acc = hours.entry(key).or_insert_with(|| HourAcc {
                max: f64::NEG_INFINITY,
                sums: vec![0.0; r],
                count: 0,
            });
            acc.max = acc.max.max(rec.response);
            for (s, v) in acc.sums.iter_mut().zip(&rec.covariates) {
                *s += v;
            }
            acc.count += 1;
        }
        let keys: Vec<NaiveDateTime> = hours.keys().copied().collect();
        for w in keys.windows(2) {
            let step = (w[1] - w[0]).num_hours();
            if step > 1 {
                report.missing_hours += step - 1;
                report.gaps.push(Gap {
                    after: w[0].format(HOUR_LAYOUT).to_string(),
                    before: w[1].format(HOUR_LAYOUT).to_string(),
                    missing_hours: step - 1,
                });
            }
        }
        let ys = hours.values().map(|a| a.max).collect();
        let xs = hours
            .values()
            .map(|a| a.sums.iter().map(|s| s / a.count as f64).collect())
            .collect();
        let labels = Some(keys.iter().map(|k| k.format(HOUR_LAYOUT).to_string()).collect());
        (ys, xs, labels)
    } else {
        let labels = ts_col.map(|_| records.iter().map(|r| r.label.clone().unwrap_or_default()).collect());
        let ys = records.iter().map(|r| r.response).collect();
        let xs = records.iter().map(|r| r.covariates.clone()).collect();
        (ys, xs, labels)
    };
    if ys.is_empty() {
        bail!("no usable observations");
    }

    if cfg.log10 {
        ys.iter_mut().for_each(|y| *y = y.log10());
    }
    let transform = if cfg.standardize {
        let response = Scaling::fit(&ys, &cfg.response_column)?;
        ys.iter_mut().for_each(|y| *y = response.apply(*y));
        let mut covariates = Vec::with_capacity(r);
        for (i, name) in cfg.covariate_columns.iter().enumerate() {
            let col: Vec<f64> = xs.iter().map(|row| row[i]).collect();
            let s = Scaling::fit(&col, name)?;
            xs.iter_mut().for_each(|row| row[i] = s.apply(row[i]));
            covariates.push((name.clone(), s));
        }
        Transform {
            log10: cfg.log10,
            response,
            covariates,
        }
    } else {
        Transform {
            log10: cfg.log10,
            response: Scaling::IDENTITY,
            covariates: cfg
                .covariate_columns
                .iter()
                .map(|c| (c.clone(), Scaling::IDENTITY))
                .collect(),
        }
    };
    report.observations = ys.len();

    let mut data = Dataset::new(ys, xs, cfg.x0.clone())?;
    if let Some(l) = labels {
        data = data.with_timestamps(l)?;
    }
    Ok(Ingested {
        data,
        transform,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> DataConfig {
        DataConfig {
            response_column: "pc".into(),
            covariate_columns: vec!["temp".into()],
            ..DataConfig::default()
        }
    }

    #[test]
    fn hourly_max_and_mean() {
        let mut csv = String::from("timestamp,pc,temp\n");
        for minute in 0..60 {
            let pc = if minute == 17 { 3.2 } else { 1.0 + minute as f64 / 100.0 };
            csv.push_str(&format!("2018-06-01 10:{minute:02}:00,{pc},{}\n", minute as f64));
        }
        csv.push_str("2018-06-01 11:00:00,2.0,10\n");
        let raw = DataConfig {
            log10: false,
            standardize: false,
            ..cfg()
        };
        let out = ingest_reader(csv.as_bytes(), &raw).unwrap();
        assert_eq!(out.data.y(), &[3.2, 2.0]);
        assert_eq!(out.data.covariate_row(0), &[29.5]);
        assert_eq!(out.data.timestamps().unwrap()[0], "2018-06-01 10:00:00");
    }

    #[test]
    fn log10_before_standardization() {
        let csv = "timestamp,pc,temp\n2018-06-01 10:00,100,1\n2018-06-01 11:00,10,2\n2018-06-01 12:00,1000,3\n";
        let c = DataConfig {
            standardize: false,
            ..cfg()
        };
        let out = ingest_reader(csv.as_bytes(), &c).unwrap();
        assert_eq!(out.data.y(), &[2.0, 1.0, 3.0]);
    }

    #[test]
    fn standardized_columns_have_unit_scale() {
        let csv = "timestamp,pc,temp\n2018-06-01 10:00,100,1\n2018-06-01 11:00,10,2\n2018-06-01 12:00,1000,6\n";
        let out = ingest_reader(csv.as_bytes(), &cfg()).unwrap();
        let y = out.data.y();
        assert!(y.iter().sum::<f64>().abs() < 1e-12);
        assert!((y.iter().map(|v| v * v).sum::<f64>() / 2.0 - 1.0).abs() < 1e-12);
        assert!((out.transform.response_to_raw(y[0]) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn rejections_are_counted() {
        let csv = "timestamp,pc,temp\n2018-06-01 10:00,0,1\n2018-06-01 10:30,-2,1\n2018-06-01 11:00,,2\n\
                   2018-06-01 12:00,5,3\n2018-06-01 15:00,7,4\n";
        let out = ingest_reader(csv.as_bytes(), &cfg()).unwrap();
        assert_eq!(out.report.rejected_nonpositive, 2);
        assert_eq!(out.report.rejected_incomplete, 1);
        assert_eq!(out.report.observations, 2);
        assert_eq!(out.report.missing_hours, 2);
        assert_eq!(out.report.gaps[0].after, "2018-06-01 12:00:00");
    }

    #[test]
    fn constant_column_is_named() {
        let csv = "timestamp,pc,temp\n2018-06-01 10:00,1,4\n2018-06-01 11:00,2,4\n";
        let err = ingest_reader(csv.as_bytes(), &cfg()).unwrap_err();
        assert!(err.to_string().contains("\"temp\""), "{err}");
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "timestamp,pc\n2018-06-01 10:00,1\n";
        let err = ingest_reader(csv.as_bytes(), &cfg()).unwrap_err();
        assert!(err.to_string().contains("\"temp\""), "{err}");
    }

    #[test]
    fn labels_pass_through_without_aggregation() {
        let csv = "t,pc,temp\n1,2,3\n2,4,5\n";
        let c = DataConfig {
            timestamp_column: Some("t".into()),
            hourly: false,
            log10: false,
            standardize: false,
            ..cfg()
        };
        let out = ingest_reader(csv.as_bytes(), &c).unwrap();
        assert_eq!(out.data.timestamps().unwrap(), &["1".to_string(), "2".to_string()]);
        assert_eq!(out.data.y(), &[2.0, 4.0]);
    }

    #[test]
    fn timestamp_layouts() {
        let a = parse_timestamp("2018-04-11T05:30:00Z", None).unwrap();
        let b = parse_timestamp("2018-04-11 05:30:00", None).unwrap();
        assert_eq!(a, b);
        assert_eq!(parse_timestamp("2018-04-11", None).unwrap().hour(), 0);
        assert!(parse_timestamp("11/04/2018", None).is_err());
        assert!(parse_timestamp("11/04/2018 05:10", Some("%d/%m/%Y %H:%M")).is_ok());
    }
}
