//! Configuration management store: snapshot parsing, diffing, configuration
//! state identity and stable-period derivation.
//!
//! CM dumps only reflect the configuration at the moment each snapshot is
//! taken, so changes are observable solely by comparing successive snapshots
//! of the same cell. Runs of snapshots with an identical selected-parameter
//! state form stable periods; the gaps between differing snapshots are the
//! unstable intervals later handled by change-point detection.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A scalar parameter leaf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
}

impl ParamValue {
    /// Canonical rendering used for equality and hashing: booleans as
    /// `true`/`false`, integers in decimal, floats in shortest round-trip
    /// decimal form (so `20.0` renders as `20` and equals the integer),
    /// strings verbatim.
    pub fn canon(&self) -> String {
        match self {
            ParamValue::Bool(b) => b.to_string(),
            ParamValue::Int(i) => i.to_string(),
            ParamValue::Num(x) => x.to_string(),
            ParamValue::Str(s) => s.clone(),
        }
    }

    pub fn canon_eq(&self, other: &ParamValue) -> bool {
        self.canon() == other.canon()
    }
}

/// A parameter tree flattened to slash-joined paths with scalar leaves.
pub type ParamTree = BTreeMap<String, ParamValue>;

#[derive(Clone, Debug)]
pub struct ConfigSnapshot {
    pub cell_id: String,
    pub timestamp: DateTime<Utc>,
    pub tree: ParamTree,
}

/// Type tag for a selected parameter, controlling later encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Categorical,
    Numeric,
    Flag,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectedParam {
    pub path: String,
    #[serde(rename = "type")]
    pub kind: ParamKind,
}

/// The selected-parameter manifest: which paths participate in state
/// identity and in the encoded configuration features.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SelectedParams {
    pub params: Vec<SelectedParam>,
}

impl SelectedParams {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| CoreError::Schema {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| CoreError::io(path.display().to_string(), e))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.path.as_str())
    }
}

/// 128-bit identity of a configuration state over the selected parameters.
///
/// FNV-1a with 128-bit offset basis `0x6c62272e07bb014262b821756295c58d` and
/// prime `2^88 + 2^8 + 0x3b`, fed the canonical rendering of each selected
/// parameter present in the tree, in sorted path order, as
/// `path "=" canon(value) "\n"`. Key order in the source file cannot affect
/// the id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigStateId(pub u128);

const FNV128_BASIS: u128 = 0x6c62272e07bb014262b821756295c58d;
const FNV128_PRIME: u128 = 0x0000000001000000000000000000013B;

impl ConfigStateId {
    pub fn of(tree: &ParamTree, selected: &SelectedParams) -> Self {
        let mut hash = FNV128_BASIS;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                hash ^= *b as u128;
                hash = hash.wrapping_mul(FNV128_PRIME);
            }
        };
        // Manifest paths sorted so the hash never depends on manifest order.
        let mut paths: Vec<&str> = selected.paths().collect();
        paths.sort_unstable();
        for path in paths {
            if let Some(value) = tree.get(path) {
                eat(path.as_bytes());
                eat(b"=");
                eat(value.canon().as_bytes());
                eat(b"\n");
            }
        }
        ConfigStateId(hash)
    }
}

impl fmt::Display for ConfigStateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl std::str::FromStr for ConfigStateId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        u128::from_str_radix(s, 16).map(ConfigStateId)
    }
}

/// One entry of a configuration diff: `(path, old, new)` where absence
/// models parameter addition or removal.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffEntry {
    pub path: String,
    pub old: Option<ParamValue>,
    pub new: Option<ParamValue>,
}

#[derive(Clone, Debug, Default)]
pub struct ConfigDiff {
    pub entries: Vec<DiffEntry>,
}

impl ConfigDiff {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A maximal run of snapshots sharing one configuration state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StablePeriod {
    pub cell_id: String,
    pub state_id: ConfigStateId,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

/// Open interval between the last snapshot of one stable period and the
/// first snapshot of the next. `after_period` indexes the preceding period.
#[derive(Clone, Debug, PartialEq)]
pub struct UnstableInterval {
    pub after_period: usize,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%SZ")
        .ok()
        .map(|naive| naive.and_utc())
        .or_else(|| {
            DateTime::parse_from_rfc3339(text)
                .ok()
                .map(|dt| dt.with_timezone(&Utc))
        })
}

/// Parse one CM snapshot file into per-cell snapshots. Unknown extra fields
/// are ignored; missing required fields are schema errors naming the field
/// (and the cell, when known).
pub fn parse_snapshot_file(path: &Path) -> Result<Vec<ConfigSnapshot>> {
    let text =
        fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        CoreError::Parse {
            path: path.display().to_string(),
            offset: byte_offset(&text, line, column),
            line,
            column,
            message: e.to_string(),
        }
    })?;
    let schema_err = |message: String| CoreError::Schema {
        path: path.display().to_string(),
        message,
    };

    let ts_text = doc
        .get("timestamp")
        .and_then(|v| v.as_str())
        .ok_or_else(|| schema_err("missing required field `timestamp`".to_string()))?;
    let timestamp = parse_timestamp(ts_text)
        .ok_or_else(|| schema_err(format!("unparseable timestamp `{ts_text}`")))?;
    let cells = doc
        .get("cells")
        .and_then(|v| v.as_array())
        .ok_or_else(|| schema_err("missing required field `cells`".to_string()))?;

    let mut out = Vec::with_capacity(cells.len());
    for (idx, cell) in cells.iter().enumerate() {
        let cell_id = cell
            .get("cell_id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| schema_err(format!("cell #{idx}: missing required field `cell_id`")))?
            .to_string();
        let params = cell
            .get("params")
            .and_then(|v| v.as_object())
            .ok_or_else(|| {
                schema_err(format!(
                    "cell `{cell_id}`: missing required field `params`"
                ))
            })?;
        let mut tree = ParamTree::new();
        flatten_into(&mut tree, "", params).map_err(|msg| {
            schema_err(format!("cell `{cell_id}`: {msg}"))
        })?;
        out.push(ConfigSnapshot {
            cell_id,
            timestamp,
            tree,
        });
    }
    Ok(out)
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut remaining = line.saturating_sub(1);
    let mut offset = 0usize;
    for (i, b) in text.bytes().enumerate() {
        if remaining == 0 {
            break;
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}

fn flatten_into(
    tree: &mut ParamTree,
    prefix: &str,
    obj: &serde_json::Map<String, serde_json::Value>,
) -> std::result::Result<(), String> {
    for (key, value) in obj {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}/{key}")
        };
        match value {
            serde_json::Value::Object(inner) => flatten_into(tree, &path, inner)?,
            serde_json::Value::Bool(b) => {
                tree.insert(path, ParamValue::Bool(*b));
            }
            serde_json::Value::Number(n) => {
                let v = if let Some(i) = n.as_i64() {
                    ParamValue::Int(i)
                } else {
                    ParamValue::Num(n.as_f64().ok_or_else(|| {
                        format!("parameter `{path}` has a non-finite numeric value")
                    })?)
                };
                tree.insert(path, v);
            }
            serde_json::Value::String(s) => {
                tree.insert(path, ParamValue::Str(s.clone()));
            }
            other => {
                return Err(format!(
                    "parameter `{path}` must be a scalar leaf, got {other}"
                ))
            }
        }
    }
    Ok(())
}

/// Diff two snapshots of the same cell, restricted to the selected paths.
/// Entries come out sorted by path.
pub fn diff_snapshots(
    a: &ConfigSnapshot,
    b: &ConfigSnapshot,
    selected: &SelectedParams,
) -> Result<ConfigDiff> {
    if a.cell_id != b.cell_id {
        return Err(CoreError::Usage(format!(
            "diff requires snapshots of one cell, got `{}` and `{}`",
            a.cell_id, b.cell_id
        )));
    }
    if a.timestamp >= b.timestamp {
        return Err(CoreError::Usage(format!(
            "diff requires a.timestamp < b.timestamp, got {} >= {}",
            a.timestamp, b.timestamp
        )));
    }
    let mut paths: Vec<&str> = selected.paths().collect();
    paths.sort_unstable();
    let mut entries = Vec::new();
    for path in paths {
        let old = a.tree.get(path);
        let new = b.tree.get(path);
        let differs = match (old, new) {
            (Some(o), Some(n)) => !o.canon_eq(n),
            (None, None) => false,
            _ => true,
        };
        if differs {
            entries.push(DiffEntry {
                path: path.to_string(),
                old: old.cloned(),
                new: new.cloned(),
            });
        }
    }
    Ok(ConfigDiff { entries })
}

/// Derive stable periods and unstable intervals for one cell.
///
/// Consecutive snapshots with equal [`ConfigStateId`] merge into one period
/// spanning `[first, last]` snapshot timestamp. Every boundary between
/// differing snapshots becomes an unstable interval, open at both ends,
/// because the true change instant inside the gap is unknowable from CM data
/// alone. The first period starts at the first snapshot.
pub fn derive_stable_periods(
    snapshots: &[ConfigSnapshot],
    selected: &SelectedParams,
) -> Result<(Vec<StablePeriod>, Vec<UnstableInterval>)> {
    if snapshots.is_empty() {
        return Err(CoreError::Usage(
            "derive_stable_periods requires at least one snapshot".to_string(),
        ));
    }
    let cell_id = &snapshots[0].cell_id;
    for pair in snapshots.windows(2) {
        if pair[0].timestamp >= pair[1].timestamp {
            return Err(CoreError::Usage(format!(
                "snapshots of cell `{cell_id}` must be sorted by strictly increasing timestamp"
            )));
        }
        if pair[1].cell_id != *cell_id {
            return Err(CoreError::Usage(format!(
                "derive_stable_periods got snapshots of `{}` mixed with `{cell_id}`",
                pair[1].cell_id
            )));
        }
    }

    let ids: Vec<ConfigStateId> = snapshots
        .iter()
        .map(|s| ConfigStateId::of(&s.tree, selected))
        .collect();

    let mut periods = Vec::new();
    let mut run_start = 0usize;
    for i in 1..=snapshots.len() {
        if i == snapshots.len() || ids[i] != ids[run_start] {
            periods.push(StablePeriod {
                cell_id: cell_id.clone(),
                state_id: ids[run_start],
                start: snapshots[run_start].timestamp,
                end: snapshots[i - 1].timestamp,
            });
            run_start = i;
        }
    }

    let unstable = periods
        .windows(2)
        .enumerate()
        .map(|(i, pair)| UnstableInterval {
            after_period: i,
            start: pair[0].end,
            end: pair[1].start,
        })
        .collect();

    Ok((periods, unstable))
}

/// Extract the selected parameter values from a tree, for state encoding.
pub fn selected_values(tree: &ParamTree, selected: &SelectedParams) -> ParamTree {
    let mut out = ParamTree::new();
    for path in selected.paths() {
        if let Some(v) = tree.get(path) {
            out.insert(path.to_string(), v.clone());
        }
    }
    out
}
