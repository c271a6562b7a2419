//! Dataset construction: PM segmentation by stable periods with optional
//! change-point expansion, feature reduction and encoding, and the merge of
//! environment, configuration and KPI into one dataset.

mod features;

pub use features::{
    prune_constant_features, prune_correlated_features, Column, ConfigEncoder, FeatureDesc,
    FeatureEncoding, PruneReport,
};

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmstore::{
    derive_stable_periods, parse_timestamp, selected_values, ConfigSnapshot, ConfigStateId,
    ParamTree, SelectedParams, StablePeriod, UnstableInterval,
};
use crate::error::{CoreError, Result};
use crate::pmstore::{default_penalty, pelt_detect, ChangePointSet, PmSeries};

/// A cell operating under one configuration state; `ordinal` counts the
/// occurrences of this state within the cell's timeline, so revisited states
/// stay distinct.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellState {
    pub cell_id: String,
    pub state_id: ConfigStateId,
    pub ordinal: usize,
}

/// Contiguous PM row range assigned to one cell-state.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSpan {
    pub state: CellState,
    pub rows: std::ops::Range<usize>,
}

/// Change points detected inside one unstable interval, in absolute PM row
/// indices of that cell's series.
#[derive(Clone, Debug)]
pub struct IntervalChangePoints {
    pub interval_index: usize,
    pub changepoints: Vec<usize>,
}

/// Assign PM rows to cell-states.
///
/// Rows inside a stable period take that period's state. For an unstable
/// interval with detected change points, rows before the earliest point
/// extend the previous period and rows from the latest point onward extend
/// the next one; anything between the earliest and latest is dropped, as is
/// the whole interval when no change point was found.
pub fn segment(
    pm: &PmSeries,
    periods: &[StablePeriod],
    unstable: &[UnstableInterval],
    changepoints: Option<&[IntervalChangePoints]>,
) -> Result<Vec<SegmentSpan>> {
    let n = pm.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];

    for (pi, period) in periods.iter().enumerate() {
        let lo = match pm.index_at(period.start) {
            Some(i) => i,
            None => continue,
        };
        let hi = match pm.index_at_or_before(period.end) {
            Some(i) => i,
            None => continue,
        };
        for slot in owner.iter_mut().take(hi + 1).skip(lo) {
            *slot = Some(pi);
        }
    }

    if let Some(cps) = changepoints {
        for icp in cps {
            let interval = unstable.get(icp.interval_index).ok_or_else(|| {
                CoreError::Internal(format!(
                    "change points reference unstable interval {} of {}",
                    icp.interval_index,
                    unstable.len()
                ))
            })?;
            if icp.changepoints.is_empty() {
                continue;
            }
            let gap_lo = pm.index_after(interval.start).min(n);
            let gap_hi_excl = pm.index_before(interval.end).map_or(gap_lo, |i| i + 1);
            let first = *icp.changepoints.first().unwrap();
            let last = *icp.changepoints.last().unwrap();
            if first < gap_lo || last > gap_hi_excl {
                return Err(CoreError::Internal(format!(
                    "change point outside its unstable interval: rows [{gap_lo}, {gap_hi_excl}), points {:?}",
                    icp.changepoints
                )));
            }
            let prev = icp.interval_index;
            let next = icp.interval_index + 1;
            for slot in owner.iter_mut().take(first).skip(gap_lo) {
                *slot = Some(prev);
            }
            for slot in owner.iter_mut().take(gap_hi_excl).skip(last) {
                *slot = Some(next);
            }
        }
    }

    // Ordinal per period: occurrence index of its state within the cell.
    let mut seen: BTreeMap<ConfigStateId, usize> = BTreeMap::new();
    let ordinals: Vec<usize> = periods
        .iter()
        .map(|p| {
            let c = seen.entry(p.state_id).or_insert(0);
            let ord = *c;
            *c += 1;
            ord
        })
        .collect();

    let mut spans: Vec<SegmentSpan> = Vec::new();
    let mut k = 0usize;
    while k < n {
        match owner[k] {
            None => k += 1,
            Some(pi) => {
                let start = k;
                while k < n && owner[k] == Some(pi) {
                    k += 1;
                }
                let period = &periods[pi];
                spans.push(SegmentSpan {
                    state: CellState {
                        cell_id: period.cell_id.clone(),
                        state_id: period.state_id,
                        ordinal: ordinals[pi],
                    },
                    rows: start..k,
                });
            }
        }
    }
    // A period's rows plus its expansions are contiguous, so each period
    // appears as exactly one span.
    let mut by_period: BTreeMap<(ConfigStateId, usize), usize> = BTreeMap::new();
    for span in &spans {
        *by_period
            .entry((span.state.state_id, span.state.ordinal))
            .or_insert(0) += 1;
    }
    if by_period.values().any(|&c| c > 1) {
        return Err(CoreError::Internal(
            "segmentation produced non-contiguous rows for one cell-state".to_string(),
        ));
    }
    Ok(spans)
}

/// Dataset provenance: the generator seed plus a digest of the pipeline
/// configuration that produced it.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub generator_seed: u64,
    pub config_digest: String,
}

/// Feature manifest stored next to the dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub features: Vec<FeatureDesc>,
    pub prune: PruneReport,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

/// One dataset row; the encoded configuration lives on the state entry to
/// avoid duplicating it per row.
#[derive(Clone, Debug)]
pub struct CmpmRow {
    pub state: usize,
    pub timestamp: DateTime<Utc>,
    pub env: [f64; 5],
    pub kpi: f64,
}

#[derive(Clone, Debug)]
pub struct StateEntry {
    pub cell_state: CellState,
    pub config: Vec<f64>,
}

/// The merged dataset: `[environment | encoded configuration | KPI]` rows
/// grouped by cell-state in time order.
#[derive(Clone, Debug)]
pub struct CmpmDataset {
    pub manifest: FeatureManifest,
    pub states: Vec<StateEntry>,
    pub rows: Vec<CmpmRow>,
}

pub const ENV_COLUMNS: [&str; 5] = ["bler", "cqi", "data_volume", "prb_util", "active_ues"];

impl CmpmDataset {
    pub fn config_dim(&self) -> usize {
        self.manifest.features.len()
    }

    pub fn row_config(&self, row: usize) -> &[f64] {
        &self.states[self.rows[row].state].config
    }

    pub fn row_cell_state(&self, row: usize) -> &CellState {
        &self.states[self.rows[row].state].cell_state
    }

    /// Distinct cell ids, sorted.
    pub fn cells(&self) -> Vec<String> {
        let mut cells: Vec<String> = self
            .states
            .iter()
            .map(|s| s.cell_state.cell_id.clone())
            .collect();
        cells.sort();
        cells.dedup();
        cells
    }

    /// Row indices per state, in dataset order.
    pub fn rows_by_state(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.states.len()];
        for (i, row) in self.rows.iter().enumerate() {
            out[row.state].push(i);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file =
            fs::File::create(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e: std::io::Error| CoreError::io(path.display().to_string(), e);
        write!(w, "cell_id,state_id,ordinal,timestamp").map_err(io_err)?;
        for c in ENV_COLUMNS {
            write!(w, ",{c}").map_err(io_err)?;
        }
        for f in &self.manifest.features {
            write!(w, ",{}", f.name).map_err(io_err)?;
        }
        writeln!(w, ",dl_throughput").map_err(io_err)?;
        for row in &self.rows {
            let state = &self.states[row.state];
            write!(
                w,
                "{},{},{},{}",
                state.cell_state.cell_id,
                state.cell_state.state_id,
                state.cell_state.ordinal,
                row.timestamp.format("%Y-%m-%dT%H:%M:%SZ")
            )
            .map_err(io_err)?;
            for v in row.env {
                write!(w, ",{v}").map_err(io_err)?;
            }
            for v in &state.config {
                write!(w, ",{v}").map_err(io_err)?;
            }
            writeln!(w, ",{}", row.kpi).map_err(io_err)?;
        }
        Ok(())
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| CoreError::io(path.display().to_string(), e))
    }

    /// Load a dataset written by [`CmpmDataset::write_csv`] plus its
    /// manifest.
    pub fn read(csv_path: &Path, manifest_path: &Path) -> Result<Self> {
        let manifest_text = fs::read_to_string(manifest_path)
            .map_err(|e| CoreError::io(manifest_path.display().to_string(), e))?;
        let manifest: FeatureManifest =
            serde_json::from_str(&manifest_text).map_err(|e| CoreError::Schema {
                path: manifest_path.display().to_string(),
                message: e.to_string(),
            })?;
        let d = manifest.features.len();

        let file = fs::File::open(csv_path)
            .map_err(|e| CoreError::io(csv_path.display().to_string(), e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let mut states: Vec<StateEntry> = Vec::new();
        let mut index: BTreeMap<(String, ConfigStateId, usize), usize> = BTreeMap::new();
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record =
                record.map_err(|e| CoreError::Input(format!("{}: {e}", csv_path.display())))?;
            let bad = |msg: String| {
                CoreError::Input(format!("{} row {}: {msg}", csv_path.display(), line + 2))
            };
            let expect = 4 + 5 + d + 1;
            if record.len() != expect {
                return Err(bad(format!("expected {expect} columns, got {}", record.len())));
            }
            let cell_id = record[0].to_string();
            let state_id: ConfigStateId = record[1]
                .parse()
                .map_err(|_| bad(format!("bad state id `{}`", &record[1])))?;
            let ordinal: usize = record[2]
                .parse()
                .map_err(|_| bad(format!("bad ordinal `{}`", &record[2])))?;
            let timestamp = parse_timestamp(&record[3])
                .ok_or_else(|| bad(format!("bad timestamp `{}`", &record[3])))?;
            let mut num = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|_| bad(format!("column {i} is not a number")))
            };
            let env = [num(4)?, num(5)?, num(6)?, num(7)?, num(8)?];
            let mut config = Vec::with_capacity(d);
            for i in 0..d {
                config.push(num(9 + i)?);
            }
            let kpi = num(9 + d)?;

            let key = (cell_id.clone(), state_id, ordinal);
            let state = match index.get(&key) {
                Some(&s) => s,
                None => {
                    let s = states.len();
                    states.push(StateEntry {
                        cell_state: CellState {
                            cell_id,
                            state_id,
                            ordinal,
                        },
                        config,
                    });
                    index.insert(key, s);
                    s
                }
            };
            rows.push(CmpmRow {
                state,
                timestamp,
                env,
                kpi,
            });
        }
        Ok(CmpmDataset {
            manifest,
            states,
            rows,
        })
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BuildStats {
    pub cells: usize,
    pub stable_periods: usize,
    pub unstable_intervals: usize,
    pub intervals_with_changepoints: usize,
    pub rows_total: usize,
    pub rows_assigned: usize,
    pub rows_expanded: usize,
    pub rows_dropped_unstable: usize,
    pub rows_dropped_masked: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub penalty_multiplier: f64,
    pub min_segment_len: usize,
    pub enable_changepoint_expansion: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            penalty_multiplier: 1.0,
            min_segment_len: 2,
            enable_changepoint_expansion: true,
        }
    }
}

/// Detect change points on the dl_throughput column inside one unstable
/// interval. Detection runs on the longest contiguous unmasked stretch of
/// the interval; indices come back absolute.
pub fn detect_gap_changepoints(
    pm: &PmSeries,
    interval: &UnstableInterval,
    cfg: &DetectorConfig,
) -> Result<Option<ChangePointSet>> {
    let gap_lo = pm.index_after(interval.start).min(pm.len());
    let gap_hi_excl = pm.index_before(interval.end).map_or(gap_lo, |i| i + 1);
    if gap_hi_excl <= gap_lo {
        return Ok(None);
    }
    // Longest contiguous unmasked stretch.
    let mut best: Option<(usize, usize)> = None;
    let mut run_start = None;
    for k in gap_lo..=gap_hi_excl {
        let masked = k == gap_hi_excl || pm.missing[k];
        match (masked, run_start) {
            (false, None) => run_start = Some(k),
            (true, Some(s)) => {
                if best.map_or(true, |(a, b)| k - s > b - a) {
                    best = Some((s, k));
                }
                run_start = None;
            }
            _ => {}
        }
    }
    let (lo, hi) = match best {
        Some(r) => r,
        None => return Ok(None),
    };
    let y = &pm.dl_throughput[lo..hi];
    if y.len() < 2 * cfg.min_segment_len || y.len() < 3 {
        return Ok(None);
    }
    let beta = default_penalty(y, cfg.penalty_multiplier)?;
    let mut set = pelt_detect(y, beta, cfg.min_segment_len)?;
    for idx in &mut set.indices {
        *idx += lo;
    }
    Ok(Some(set))
}

/// Per-cell inputs to [`build_dataset`].
pub struct CellData<'a> {
    pub snapshots: &'a [ConfigSnapshot],
    pub pm: &'a PmSeries,
}

pub struct BuildInput<'a> {
    pub cells: BTreeMap<String, CellData<'a>>,
    pub selected: &'a SelectedParams,
    pub detector: DetectorConfig,
    /// Cells whose rows fit the encoder (vocabularies and pruning);
    /// computed by the caller from the split seed.
    pub train_cells: std::collections::BTreeSet<String>,
    pub rho_star: f64,
    pub provenance: Provenance,
}

/// Run change detection, segmentation, encoding and merging end to end.
pub fn build_dataset(input: BuildInput<'_>) -> Result<(CmpmDataset, BuildStats)> {
    let mut stats = BuildStats {
        cells: input.cells.len(),
        ..BuildStats::default()
    };

    struct CellOutcome {
        cell_id: String,
        spans: Vec<SegmentSpan>,
        state_values: Vec<(ConfigStateId, ParamTree)>,
        periods: usize,
        unstable: usize,
        with_cps: usize,
        rows_total: usize,
        rows_expanded: usize,
    }

    let cells: Vec<(&String, &CellData)> = input.cells.iter().collect();
    let outcomes: Vec<Result<CellOutcome>> = cells
        .par_iter()
        .map(|(cell_id, data)| {
            let (periods, unstable) = derive_stable_periods(data.snapshots, input.selected)?;
            let mut cps: Vec<IntervalChangePoints> = Vec::new();
            let mut with_cps = 0usize;
            if input.detector.enable_changepoint_expansion {
                for (i, interval) in unstable.iter().enumerate() {
                    if let Some(set) =
                        detect_gap_changepoints(data.pm, interval, &input.detector)?
                    {
                        if !set.indices.is_empty() {
                            with_cps += 1;
                            cps.push(IntervalChangePoints {
                                interval_index: i,
                                changepoints: set.indices,
                            });
                        }
                    }
                }
            }
            let spans = segment(
                data.pm,
                &periods,
                &unstable,
                if input.detector.enable_changepoint_expansion {
                    Some(&cps)
                } else {
                    None
                },
            )?;

            // Rows assigned outside stable-period bounds are the expansion.
            let mut expanded = 0usize;
            for span in &spans {
                let period = periods
                    .iter()
                    .find(|p| {
                        p.state_id == span.state.state_id
                            && data.pm.index_at(p.start).map_or(false, |lo| {
                                span.rows.contains(&lo) || span.rows.start == lo
                            })
                    });
                if let Some(p) = period {
                    let lo = data.pm.index_at(p.start).unwrap_or(span.rows.start);
                    let hi = data
                        .pm
                        .index_at_or_before(p.end)
                        .map_or(span.rows.end, |i| i + 1);
                    expanded += (lo - span.rows.start) + span.rows.end.saturating_sub(hi);
                }
            }

            // Selected values per period state, from the snapshot opening
            // each period.
            let mut state_values = Vec::new();
            for p in &periods {
                if let Some(snap) = data
                    .snapshots
                    .iter()
                    .find(|s| s.timestamp == p.start)
                {
                    state_values.push((p.state_id, selected_values(&snap.tree, input.selected)));
                }
            }

            Ok(CellOutcome {
                cell_id: (*cell_id).clone(),
                spans,
                state_values,
                periods: periods.len(),
                unstable: unstable.len(),
                with_cps,
                rows_total: data.pm.len(),
                rows_expanded: expanded,
            })
        })
        .collect();

    let mut all_spans: Vec<(String, Vec<SegmentSpan>)> = Vec::new();
    let mut values_by_state: BTreeMap<ConfigStateId, ParamTree> = BTreeMap::new();
    for outcome in outcomes {
        let o = outcome?;
        stats.stable_periods += o.periods;
        stats.unstable_intervals += o.unstable;
        stats.intervals_with_changepoints += o.with_cps;
        stats.rows_total += o.rows_total;
        stats.rows_expanded += o.rows_expanded;
        for (id, values) in o.state_values {
            values_by_state.entry(id).or_insert(values);
        }
        all_spans.push((o.cell_id, o.spans));
    }

    // Training rows per state for encoder fitting (masked rows excluded).
    let mut train_states: Vec<(&ParamTree, usize)> = Vec::new();
    {
        let mut counts: BTreeMap<ConfigStateId, usize> = BTreeMap::new();
        for (cell_id, spans) in &all_spans {
            if !input.train_cells.contains(cell_id) {
                continue;
            }
            let pm = input.cells[cell_id].pm;
            for span in spans {
                let live = span.rows.clone().filter(|&k| !pm.missing[k]).count();
                *counts.entry(span.state.state_id).or_insert(0) += live;
            }
        }
        for (id, count) in counts {
            if let Some(values) = values_by_state.get(&id) {
                train_states.push((values, count));
            }
        }
    }
    if train_states.is_empty() {
        return Err(CoreError::Internal(
            "no training rows available to fit the configuration encoder".to_string(),
        ));
    }

    let (mut encoder, all_constant) =
        ConfigEncoder::fit(input.selected, &train_states, input.rho_star)?;
    if all_constant {
        stats
            .warnings
            .push("all configuration features are constant; config feature set is empty".into());
    }

    let mut encodings: BTreeMap<ConfigStateId, Vec<f64>> = BTreeMap::new();
    for (id, values) in &values_by_state {
        encodings.insert(*id, encoder.encode(values));
    }

    // Merge.
    let mut states: Vec<StateEntry> = Vec::new();
    let mut rows: Vec<CmpmRow> = Vec::new();
    for (cell_id, spans) in &all_spans {
        let pm = input.cells[cell_id].pm;
        for span in spans {
            let config = encodings.get(&span.state.state_id).ok_or_else(|| {
                CoreError::Internal(format!(
                    "cell-state {}/{} has no configuration encoding",
                    span.state.cell_id, span.state.state_id
                ))
            })?;
            let state_idx = states.len();
            states.push(StateEntry {
                cell_state: span.state.clone(),
                config: config.clone(),
            });
            let mut any = false;
            for k in span.rows.clone() {
                if pm.missing[k] {
                    stats.rows_dropped_masked += 1;
                    continue;
                }
                any = true;
                rows.push(CmpmRow {
                    state: state_idx,
                    timestamp: pm.timestamp(k),
                    env: pm.env_row(k),
                    kpi: pm.dl_throughput[k],
                });
            }
            if !any {
                states.pop();
            }
        }
    }
    stats.rows_assigned = rows.len();
    stats.rows_dropped_unstable =
        stats.rows_total - stats.rows_assigned - stats.rows_dropped_masked;
    if rows.is_empty() {
        stats
            .warnings
            .push("segmentation produced an empty dataset".into());
    }

    let manifest = FeatureManifest {
        features: encoder.features.clone(),
        prune: encoder.prune.clone(),
        provenance: input.provenance,
        warnings: stats.warnings.clone(),
    };
    Ok((
        CmpmDataset {
            manifest,
            states,
            rows,
        },
        stats,
    ))
}

/// Merge pre-segmented spans with per-state encodings; the standalone form
/// of the final pipeline stage.
pub fn merge(
    series: &PmSeries,
    spans: &[SegmentSpan],
    encodings: &BTreeMap<ConfigStateId, Vec<f64>>,
    manifest: FeatureManifest,
) -> Result<(CmpmDataset, usize)> {
    let mut states = Vec::new();
    let mut rows = Vec::new();
    let mut masked = 0usize;
    for span in spans {
        let config = encodings.get(&span.state.state_id).ok_or_else(|| {
            CoreError::Internal(format!(
                "cell-state {}/{} has no configuration encoding",
                span.state.cell_id, span.state.state_id
            ))
        })?;
        let state_idx = states.len();
        states.push(StateEntry {
            cell_state: span.state.clone(),
            config: config.clone(),
        });
        let mut any = false;
        for k in span.rows.clone() {
            if series.missing[k] {
                masked += 1;
                continue;
            }
            any = true;
            rows.push(CmpmRow {
                state: state_idx,
                timestamp: series.timestamp(k),
                env: series.env_row(k),
                kpi: series.dl_throughput[k],
            });
        }
        if !any {
            states.pop();
        }
    }
    Ok((
        CmpmDataset {
            manifest,
            states,
            rows,
        },
        masked,
    ))
}
