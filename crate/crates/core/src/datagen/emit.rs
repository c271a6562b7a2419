//! File emitters for the generator: CM snapshot JSON, PM CSV and the default
//! selected-parameter manifest.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde_json::{json, Map, Value};

use super::{base_start, CellProfile, ConfigTimeline, NetworkSpec, ParamSetting};
use crate::cmstore::{ParamKind, SelectedParam, SelectedParams};
use crate::error::{CoreError, Result};
use crate::pmstore::PmSeries;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Snapshot epochs for the spec horizon: every `cm_snapshot_interval_hours`
/// from the start, endpoint included so the final stable period covers the
/// tail of the PM series.
pub fn snapshot_epochs(spec: &NetworkSpec) -> Vec<DateTime<Utc>> {
    let total_hours = spec.horizon_days as i64 * 24;
    let step = spec.cm_snapshot_interval_hours as i64;
    (0..=total_hours / step)
        .map(|k| base_start() + Duration::hours(k * step))
        .collect()
}

fn setting_to_json(v: &ParamSetting) -> Value {
    match v {
        ParamSetting::Int(i) => json!(i),
        ParamSetting::Text(s) => json!(s),
    }
}

/// Write one JSON file per snapshot epoch. Each file holds every cell's full
/// parameter tree as of that epoch; changes between epochs appear only at
/// the next epoch.
pub fn emit_cm_snapshots(
    profiles: &[CellProfile],
    spec: &NetworkSpec,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))?;
    let timelines: Vec<ConfigTimeline> = profiles.iter().map(ConfigTimeline::of).collect();
    let mut out = Vec::new();
    for epoch in snapshot_epochs(spec) {
        let mut cells = Vec::with_capacity(profiles.len());
        for (profile, timeline) in profiles.iter().zip(&timelines) {
            let (basic, flags) = timeline.params_at(epoch);
            let mut basic_obj = Map::new();
            for (name, value) in &basic {
                basic_obj.insert(name.clone(), setting_to_json(value));
            }
            let mut func_obj = Map::new();
            for (i, flag) in flags.iter().enumerate() {
                func_obj.insert(format!("f{:03}", i + 1), json!(flag));
            }
            cells.push(json!({
                "cell_id": profile.cell_id,
                "params": {
                    "basic": Value::Object(basic_obj),
                    "functionalities": Value::Object(func_obj),
                },
            }));
        }
        let doc = json!({
            "timestamp": epoch.format(TIMESTAMP_FORMAT).to_string(),
            "cells": cells,
        });
        let path = dir.join(format!(
            "snapshot_{}.json",
            epoch.format("%Y%m%dT%H%M%SZ")
        ));
        let file =
            fs::File::create(&path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, &doc)
            .map_err(|e| CoreError::io(path.display().to_string(), e.into()))?;
        writer
            .write_all(b"\n")
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        out.push(path);
    }
    Ok(out)
}

/// Write all cells' PM rows to one CSV, cell-major, in the documented column
/// order. Floats use shortest round-trip formatting.
pub fn emit_pm_csv(series: &[PmSeries], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CoreError::io(parent.display().to_string(), e))?;
    }
    let file = fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| CoreError::io(path.display().to_string(), e);
    writeln!(
        w,
        "cell_id,timestamp,bler,cqi,data_volume,prb_util,active_ues,dl_throughput"
    )
    .map_err(io_err)?;
    for s in series {
        for k in 0..s.len() {
            if s.missing[k] {
                continue;
            }
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.cell_id,
                s.timestamp(k).format(TIMESTAMP_FORMAT),
                s.bler[k],
                s.cqi[k],
                s.data_volume[k],
                s.prb_util[k],
                s.active_ues[k],
                s.dl_throughput[k]
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

/// The default selected-parameter manifest: the 12 basic parameters plus
/// every functionality flag.
pub fn default_selected_params(n_functionalities: usize) -> SelectedParams {
    let mut params = vec![SelectedParam {
        path: "basic/bandwidth_mhz".to_string(),
        kind: ParamKind::Numeric,
    }];
    for (name, _) in super::BASIC_CATALOG {
        params.push(SelectedParam {
            path: format!("basic/{name}"),
            kind: ParamKind::Categorical,
        });
    }
    for i in 0..n_functionalities {
        params.push(SelectedParam {
            path: format!("functionalities/f{:03}", i + 1),
            kind: ParamKind::Flag,
        });
    }
    SelectedParams { params }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_network, ChangeValue, ScheduledChange};

    fn spec() -> NetworkSpec {
        NetworkSpec {
            n_cells: 2,
            n_functionalities: 6,
            active_effect_count: 2,
            horizon_days: 3,
            change_prob_per_week: 0.0,
            n_config_profiles: 2,
            seed: 5,
            ..NetworkSpec::default()
        }
    }

    #[test]
    fn no_changes_means_identical_epochs() {
        let spec = spec();
        let (cells, _) = generate_network(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_cm_snapshots(&cells, &spec, dir.path()).unwrap();
        assert_eq!(files.len(), 4); // days 0..=3 inclusive
        let strip_ts = |p: &std::path::Path| {
            let text = fs::read_to_string(p).unwrap();
            let mut v: Value = serde_json::from_str(&text).unwrap();
            v.as_object_mut().unwrap().remove("timestamp");
            serde_json::to_string(&v).unwrap()
        };
        let first = strip_ts(&files[0]);
        for f in &files[1..] {
            assert_eq!(strip_ts(f), first);
        }
    }

    #[test]
    fn change_appears_only_at_next_epoch() {
        let spec = spec();
        let (mut cells, _) = generate_network(&spec).unwrap();
        cells[0]
            .basic_params
            .insert("bandwidth_mhz".to_string(), ParamSetting::Int(20));
        // Change at hour 30 lands between the day-1 and day-2 snapshots.
        cells[0].scheduled_changes = vec![ScheduledChange {
            at: base_start() + Duration::hours(30),
            path: "basic/bandwidth_mhz".to_string(),
            value: ChangeValue::Basic(ParamSetting::Int(100)),
        }];
        let dir = tempfile::tempdir().unwrap();
        let files = emit_cm_snapshots(&cells, &spec, dir.path()).unwrap();
        let bandwidth_at = |p: &std::path::Path| -> i64 {
            let v: Value = serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap();
            v["cells"][0]["params"]["basic"]["bandwidth_mhz"]
                .as_i64()
                .unwrap()
        };
        assert_eq!(bandwidth_at(&files[1]), 20); // day 1: before the change
        assert_eq!(bandwidth_at(&files[2]), 100); // day 2: after
    }

    #[test]
    fn snapshot_shows_only_final_value_of_intra_gap_changes() {
        let spec = spec();
        let (mut cells, _) = generate_network(&spec).unwrap();
        cells[0]
            .basic_params
            .insert("bandwidth_mhz".to_string(), ParamSetting::Int(20));
        cells[0].scheduled_changes = [40, 60, 80]
            .iter()
            .enumerate()
            .map(|(i, bw)| ScheduledChange {
                at: base_start() + Duration::hours(25 + i as i64),
                path: "basic/bandwidth_mhz".to_string(),
                value: ChangeValue::Basic(ParamSetting::Int(*bw)),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_cm_snapshots(&cells, &spec, dir.path()).unwrap();
        let v: Value =
            serde_json::from_str(&fs::read_to_string(&files[2]).unwrap()).unwrap();
        assert_eq!(
            v["cells"][0]["params"]["basic"]["bandwidth_mhz"].as_i64(),
            Some(80)
        );
    }

    #[test]
    fn default_manifest_covers_basic_and_flags() {
        let m = default_selected_params(114);
        assert_eq!(m.params.len(), 12 + 114);
        assert!(m
            .params
            .iter()
            .any(|p| p.path == "basic/bandwidth_mhz" && p.kind == ParamKind::Numeric));
        assert!(m
            .params
            .iter()
            .any(|p| p.path == "functionalities/f114" && p.kind == ParamKind::Flag));
    }
}
