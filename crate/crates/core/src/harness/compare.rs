use super::run::RunRecord;
use crate::{Error, Result};

/// Seed-averaged metrics side by side, one column per run record.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub labels: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

const SUMMARY_ROWS: [&str; 8] = [
    "pooled.acc",
    "pooled.auc",
    "pooled.rmse",
    "client_mean.acc",
    "client_mean.auc",
    "client_mean.rmse",
    "gf",
    "doa",
];

/// Builds the table. Every record must come from the same data section and
/// seed list, since the data is a function of both.
pub fn compare(records: &[RunRecord]) -> Result<ComparisonTable> {
    let first = records
        .first()
        .ok_or_else(|| Error::invalid("nothing to compare"))?;
    for r in &records[1..] {
        if r.config.data != first.config.data {
            return Err(Error::invalid(format!(
                "`{}` and `{}` use different data sections",
                first.label, r.label
            )));
        }
        if r.seeds != first.seeds {
            return Err(Error::invalid(format!(
                "`{}` and `{}` use different seeds",
                first.label, r.label
            )));
        }
    }
    let mut school_ids: Vec<String> = Vec::new();
    for r in records {
        for run in &r.runs {
            for c in &run.report.per_client {
                if !school_ids.contains(&c.school_id) {
                    school_ids.push(c.school_id.clone());
                }
            }
        }
    }
    let lookup = |key: &str| -> Vec<Option<f64>> {
        records
            .iter()
            .map(|r| r.aggregate.get(key).map(|m| m.mean))
            .collect()
    };
    let mut rows: Vec<(String, Vec<Option<f64>>)> = SUMMARY_ROWS
        .iter()
        .map(|k| (k.to_string(), lookup(k)))
        .collect();
    let per_client: Vec<(String, Vec<Option<f64>>)> = school_ids
        .iter()
        .map(|id| {
            let key = format!("client.{id}.acc");
            let v = lookup(&key);
            (key, v)
        })
        .collect();
    let min_client = (0..records.len())
        .map(|i| {
            per_client
                .iter()
                .filter_map(|(_, v)| v[i])
                .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.min(x))))
        })
        .collect();
    rows.push(("min_client.acc".to_string(), min_client));
    rows.extend(per_client);
    Ok(ComparisonTable {
        labels: records.iter().map(|r| r.label.clone()).collect(),
        rows,
    })
}

impl ComparisonTable {
    pub fn get(&self, metric: &str, label: &str) -> Option<f64> {
        let col = self.labels.iter().position(|l| l == label)?;
        self.rows.iter().find(|(k, _)| k == metric)?.1[col]
    }

    /// CSV with a `metric` column followed by one column per record; empty
    /// cells for undefined values.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (k, vals) in &self.rows {
            let mut rec = vec![k.clone()];
            rec.extend(
                vals.iter()
                    .map(|v| v.map_or_else(String::new, |x| x.to_string())),
            );
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.get(0) != Some("metric") {
            return Err(Error::invalid(
                "comparison table must start with a `metric` column",
            ));
        }
        let labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .skip(1)
                .map(|c| {
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>().map(Some).map_err(|_| {
                            Error::invalid(format!("bad number `{c}` in comparison table"))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((rec.get(0).unwrap_or_default().to_string(), vals));
        }
        Ok(Self { labels, rows })
    }
}
