//! Measured schedules, keyed by canonical key.
//!
//! On disk a dataset is tab-separated text, one record per line:
//!
//! ```text
//! <canonical key> \t <mean seconds> \t <n measurements> \t <time:samples;...> \t <op;op;...>
//! ```
//!
//! Ops use the external-schedule syntax (`<name> <kind> [stream=i] [event=e]`).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::exec::Measurement;
use crate::schedule::Schedule;

const HEADER: &str = "# key\tseconds\tn_measurements\tmeasurements\tops";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub schedule: Schedule,
    pub measurements: Vec<Measurement>,
    /// Mean of the measurement times.
    pub time: f64,
}

/// Deduplicated schedules with their measurements, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    records: IndexMap<String, Record>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Record> {
        self.records.get(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.records.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn records(&self) -> impl Iterator<Item = &Record> {
        self.records.values()
    }

    pub fn times(&self) -> impl Iterator<Item = (&str, f64)> {
        self.records.iter().map(|(k, r)| (k.as_str(), r.time))
    }

    /// Appends a measurement, merging with an existing record for the same schedule.
    pub fn add(&mut self, schedule: Schedule, measurement: Measurement) {
        let rec = self
            .records
            .entry(schedule.key().to_string())
            .or_insert_with(|| Record {
                schedule,
                measurements: Vec::new(),
                time: 0.0,
            });
        rec.measurements.push(measurement);
        rec.time =
            rec.measurements.iter().map(|m| m.time).sum::<f64>() / rec.measurements.len() as f64;
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{HEADER}")?;
        for (key, rec) in &self.records {
            let mut ms = String::new();
            for (i, m) in rec.measurements.iter().enumerate() {
                if i > 0 {
                    ms.push(';');
                }
                let _ = write!(ms, "{}:{}", m.time, m.n_samples);
            }
            let ops = rec
                .schedule
                .ops()
                .iter()
                .map(|o| o.to_string())
                .collect::<Vec<_>>()
                .join(";");
            writeln!(
                w,
                "{key}\t{}\t{}\t{ms}\t{ops}",
                rec.time,
                rec.measurements.len()
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read_from(r: impl Read, origin: &Path) -> Result<Self> {
        let mut ds = Dataset::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            let [key, time, n, ms, ops] = cols[..] else {
                return Err(err(format!("expected 5 columns, found {}", cols.len())));
            };
            let time: f64 = time
                .parse()
                .map_err(|_| err(format!("bad time `{time}`")))?;
            let n: usize = n.parse().map_err(|_| err(format!("bad count `{n}`")))?;
            let measurements = ms
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|m| {
                    let (t, s) = m.split_once(':')?;
                    Some(Measurement {
                        key: key.to_string(),
                        time: t.parse().ok()?,
                        n_samples: s.parse().ok()?,
                    })
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| err(format!("bad measurements `{ms}`")))?;
            if measurements.len() != n {
                return Err(err(format!(
                    "{n} measurements declared, {} found",
                    measurements.len()
                )));
            }
            let schedule = Schedule::from_text(&ops.replace(';', "\n")).map_err(err)?;
            if schedule.key() != key {
                return Err(err(format!(
                    "key does not match ops (ops give `{}`)",
                    schedule.key()
                )));
            }
            if ds
                .records
                .insert(
                    key.to_string(),
                    Record {
                        schedule,
                        measurements,
                        time,
                    },
                )
                .is_some()
            {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?, path)
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Record;
    type IntoIter = indexmap::map::Values<'a, String, Record>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::spmv_example;
    use crate::schedule::enumerate_schedules;

    fn m(key: &str, time: f64) -> Measurement {
        Measurement {
            key: key.into(),
            time,
            n_samples: 3,
        }
    }

    #[test]
    fn duplicates_merge_into_mean() {
        let dag = spmv_example();
        let s = enumerate_schedules(&dag, 10_000).unwrap().swap_remove(3);
        let mut ds = Dataset::new();
        ds.add(s.clone(), m(s.key(), 1.0));
        ds.add(s.clone(), m(s.key(), 2.0));
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.get(s.key()).unwrap().time, 1.5);
    }

    #[test]
    fn round_trip_is_lossless() {
        let dag = spmv_example();
        let mut ds = Dataset::new();
        for (i, s) in enumerate_schedules(&dag, 10_000)
            .unwrap()
            .into_iter()
            .take(20)
            .enumerate()
        {
            let k = s.key().to_string();
            ds.add(s.clone(), m(&k, 1e-4 / 3.0 * (i + 1) as f64));
            if i % 3 == 0 {
                ds.add(s, m(&k, 0.1 + 1e-17));
            }
        }
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let back = Dataset::read_from(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn bad_line_reports_position() {
        let err =
            Dataset::read_from("# header\nonly\ttwo\n".as_bytes(), Path::new("x.tsv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
