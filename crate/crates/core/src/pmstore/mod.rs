//! Performance management store: PM series ingestion and change-point
//! detection on KPI series.

mod pelt;

pub use pelt::{brute_force_segment, default_penalty, pelt_detect, ChangePointSet};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};

use crate::cmstore::parse_timestamp;
use crate::error::{CoreError, Result};

/// Environmental metric count (bler, cqi, data_volume, prb_util, active_ues).
pub const ENV_METRICS: [&str; 5] = ["bler", "cqi", "data_volume", "prb_util", "active_ues"];

/// Uniformly sampled per-cell PM series. Row `k` is at
/// `start + k * interval`; `missing[k]` marks rows absent from the source.
#[derive(Clone, Debug)]
pub struct PmSeries {
    pub cell_id: String,
    pub start: DateTime<Utc>,
    pub interval_minutes: u32,
    pub bler: Vec<f64>,
    pub cqi: Vec<f64>,
    pub data_volume: Vec<f64>,
    pub prb_util: Vec<f64>,
    pub active_ues: Vec<f64>,
    pub dl_throughput: Vec<f64>,
    pub missing: Vec<bool>,
}

impl PmSeries {
    pub fn empty(
        cell_id: String,
        start: DateTime<Utc>,
        interval_minutes: u32,
        capacity: usize,
    ) -> Self {
        PmSeries {
            cell_id,
            start,
            interval_minutes,
            bler: Vec::with_capacity(capacity),
            cqi: Vec::with_capacity(capacity),
            data_volume: Vec::with_capacity(capacity),
            prb_util: Vec::with_capacity(capacity),
            active_ues: Vec::with_capacity(capacity),
            dl_throughput: Vec::with_capacity(capacity),
            missing: Vec::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn timestamp(&self, k: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(k as i64 * self.interval_minutes as i64)
    }

    /// First row index at or after `ts`; `None` when past the end.
    pub fn index_at(&self, ts: DateTime<Utc>) -> Option<usize> {
        let step = self.interval_minutes as i64 * 60;
        let delta = (ts - self.start).num_seconds();
        let k = if delta <= 0 {
            0
        } else {
            ((delta + step - 1) / step) as usize
        };
        (k < self.len()).then_some(k)
    }

    /// Index of the last row strictly before `ts`, if any.
    pub fn index_before(&self, ts: DateTime<Utc>) -> Option<usize> {
        let step = self.interval_minutes as i64 * 60;
        let delta = (ts - self.start).num_seconds();
        if delta <= 0 || self.is_empty() {
            return None;
        }
        let k = ((delta - 1) / step) as usize;
        Some(k.min(self.len() - 1))
    }

    /// Index of the last row at or before `ts`, if any.
    pub fn index_at_or_before(&self, ts: DateTime<Utc>) -> Option<usize> {
        let step = self.interval_minutes as i64 * 60;
        let delta = (ts - self.start).num_seconds();
        if delta < 0 || self.is_empty() {
            return None;
        }
        let k = (delta / step) as usize;
        Some(k.min(self.len() - 1))
    }

    /// First row strictly after `ts` (may equal `len` when past the end).
    pub fn index_after(&self, ts: DateTime<Utc>) -> usize {
        let step = self.interval_minutes as i64 * 60;
        let delta = (ts - self.start).num_seconds();
        if delta < 0 {
            0
        } else {
            (delta / step + 1) as usize
        }
    }

    pub fn env_row(&self, k: usize) -> [f64; 5] {
        [
            self.bler[k],
            self.cqi[k],
            self.data_volume[k],
            self.prb_util[k],
            self.active_ues[k],
        ]
    }

    fn push_missing(&mut self) {
        self.bler.push(f64::NAN);
        self.cqi.push(f64::NAN);
        self.data_volume.push(f64::NAN);
        self.prb_util.push(f64::NAN);
        self.active_ues.push(f64::NAN);
        self.dl_throughput.push(f64::NAN);
        self.missing.push(true);
    }
}

/// Ingest the PM CSV into per-cell series.
///
/// Rows of one cell must arrive in strictly increasing timestamp order and on
/// the expected cadence; timesteps absent from the file become masked rows.
pub fn ingest_pm_csv(
    path: &Path,
    expected_interval_minutes: u32,
) -> Result<BTreeMap<String, PmSeries>> {
    let file = fs::File::open(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);

    let headers = reader
        .headers()
        .map_err(|e| CoreError::Input(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CoreError::Schema {
                path: path.display().to_string(),
                message: format!("missing required column `{name}`"),
            })
    };
    let c_cell = col("cell_id")?;
    let c_ts = col("timestamp")?;
    let c_cols = [
        col("bler")?,
        col("cqi")?,
        col("data_volume")?,
        col("prb_util")?,
        col("active_ues")?,
        col("dl_throughput")?,
    ];

    let step_seconds = expected_interval_minutes as i64 * 60;
    let mut series: BTreeMap<String, PmSeries> = BTreeMap::new();

    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CoreError::Input(format!("{}: {e}", path.display())))?;
        let cell_id = record.get(c_cell).unwrap_or("").to_string();
        let ts_text = record.get(c_ts).unwrap_or("");
        let ts = parse_timestamp(ts_text).ok_or_else(|| CoreError::Input(format!(
            "{} row {}: unparseable timestamp `{ts_text}`",
            path.display(),
            line + 2
        )))?;
        let mut values = [0.0f64; 6];
        for (slot, idx) in values.iter_mut().zip(c_cols) {
            let raw = record.get(idx).unwrap_or("");
            *slot = raw.parse::<f64>().map_err(|_| {
                CoreError::Input(format!(
                    "{} row {}: `{raw}` is not a number",
                    path.display(),
                    line + 2
                ))
            })?;
        }

        match series.get_mut(&cell_id) {
            None => {
                let mut s = PmSeries::empty(cell_id.clone(), ts, expected_interval_minutes, 16);
                s.bler.push(values[0]);
                s.cqi.push(values[1]);
                s.data_volume.push(values[2]);
                s.prb_util.push(values[3]);
                s.active_ues.push(values[4]);
                s.dl_throughput.push(values[5]);
                s.missing.push(false);
                series.insert(cell_id, s);
            }
            Some(s) => {
                let delta = (ts - s.start).num_seconds();
                if delta % step_seconds != 0 {
                    return Err(CoreError::Cadence {
                        cell: cell_id,
                        timestamp: ts_text.to_string(),
                        message: format!(
                            "timestamp is off the {expected_interval_minutes}-minute grid"
                        ),
                    });
                }
                let k = (delta / step_seconds) as usize;
                if delta < 0 || k < s.len() {
                    return Err(CoreError::Ordering {
                        cell: cell_id,
                        timestamp: ts_text.to_string(),
                        message: "timestamps must be strictly increasing per cell".to_string(),
                    });
                }
                while s.len() < k {
                    s.push_missing();
                }
                s.bler.push(values[0]);
                s.cqi.push(values[1]);
                s.data_volume.push(values[2]);
                s.prb_util.push(values[3]);
                s.active_ues.push(values[4]);
                s.dl_throughput.push(values[5]);
                s.missing.push(false);
            }
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pm.csv");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(
            f,
            "cell_id,timestamp,bler,cqi,data_volume,prb_util,active_ues,dl_throughput"
        )
        .unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        (dir, path)
    }

    #[test]
    fn two_cells_three_uniform_rows() {
        let (_d, path) = write_csv(&[
            "a,2024-01-01T00:00:00Z,0.1,10,5,0.5,3,20",
            "a,2024-01-01T01:00:00Z,0.1,10,5,0.5,3,21",
            "a,2024-01-01T02:00:00Z,0.1,10,5,0.5,3,22",
            "b,2024-01-01T00:00:00Z,0.1,9,4,0.4,2,10",
            "b,2024-01-01T01:00:00Z,0.1,9,4,0.4,2,11",
            "b,2024-01-01T02:00:00Z,0.1,9,4,0.4,2,12",
        ]);
        let series = ingest_pm_csv(&path, 60).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series["a"].len(), 3);
        assert_eq!(series["b"].dl_throughput, vec![10.0, 11.0, 12.0]);
    }

    #[test]
    fn duplicate_timestamp_is_an_ordering_error() {
        let (_d, path) = write_csv(&[
            "a,2024-01-01T00:00:00Z,0.1,10,5,0.5,3,20",
            "a,2024-01-01T00:00:00Z,0.1,10,5,0.5,3,21",
        ]);
        assert!(matches!(
            ingest_pm_csv(&path, 60),
            Err(CoreError::Ordering { .. })
        ));
    }

    #[test]
    fn off_grid_timestamp_is_a_cadence_error() {
        let (_d, path) = write_csv(&[
            "a,2024-01-01T00:00:00Z,0.1,10,5,0.5,3,20",
            "a,2024-01-01T00:42:00Z,0.1,10,5,0.5,3,21",
        ]);
        match ingest_pm_csv(&path, 60) {
            Err(CoreError::Cadence { cell, .. }) => assert_eq!(cell, "a"),
            other => panic!("expected cadence error, got {other:?}"),
        }
    }

    #[test]
    fn missing_timestep_sets_the_mask() {
        let (_d, path) = write_csv(&[
            "a,2024-01-01T00:00:00Z,0.1,10,5,0.5,3,20",
            "a,2024-01-01T02:00:00Z,0.1,10,5,0.5,3,22",
        ]);
        let series = ingest_pm_csv(&path, 60).unwrap();
        let s = &series["a"];
        assert_eq!(s.len(), 3);
        assert_eq!(s.missing, vec![false, true, false]);
        assert!(s.dl_throughput[1].is_nan());
    }

    #[test]
    fn index_helpers_round_to_rows() {
        let s = {
            let (_d, path) = write_csv(&[
                "a,2024-01-01T00:00:00Z,0.1,10,5,0.5,3,20",
                "a,2024-01-01T01:00:00Z,0.1,10,5,0.5,3,21",
                "a,2024-01-01T02:00:00Z,0.1,10,5,0.5,3,22",
            ]);
            ingest_pm_csv(&path, 60).unwrap().remove("a").unwrap()
        };
        let t = |m: u32| s.start + Duration::minutes(m as i64);
        assert_eq!(s.index_at(t(0)), Some(0));
        assert_eq!(s.index_at(t(30)), Some(1));
        assert_eq!(s.index_at(t(60)), Some(1));
        assert_eq!(s.index_at(t(121)), None);
        assert_eq!(s.index_before(t(0)), None);
        assert_eq!(s.index_before(t(61)), Some(1));
        assert_eq!(s.index_before(t(60)), Some(0));
    }
}
