//! Synthetic 5G network generator.
//!
//! Produces CM snapshot files and PM time series for a configurable number of
//! cells with a closed-form ground-truth throughput law, so that every later
//! pipeline stage can be checked against known answers. Output is
//! deterministic for a given `(spec, seed)`: all draws go through the fixed
//! generator in [`crate::rng`], and each cell owns independent sub-streams so
//! parallel and serial generation agree.

mod emit;
mod pm;

pub use emit::{default_selected_params, emit_cm_snapshots, emit_pm_csv, snapshot_epochs};
pub use pm::generate_pm;

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::{mix, stream, Rng};

/// Start of the simulated horizon.
pub fn base_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// The fixed catalog of basic cell parameters: name and categorical domain.
/// Bandwidth is the one numeric parameter; everything else is categorical.
/// Only bandwidth, band and beamforming influence the ground truth; the rest
/// are decoys, mirroring the observation that most parameters do not move
/// any KPI.
pub const BANDWIDTH_MHZ: &[i64] = &[20, 40, 60, 80, 100];

pub const BASIC_CATALOG: &[(&str, &[&str])] = &[
    ("band", &["n28", "n41", "n78"]),
    ("duplex", &["TDD", "FDD"]),
    ("beamforming", &["on", "off"]),
    ("frame_structure", &["DDDSU", "DDSUU", "DDDDU"]),
    ("fronthaul_type", &["eCPRI", "CPRI"]),
    ("radio_module", &["RM201", "RM302", "RM403"]),
    ("baseband_module", &["BB52", "BB63"]),
    ("software_release", &["SW21A", "SW21B", "SW22A"]),
    ("deployment", &["NSA", "SA"]),
    ("mimo_mode", &["2x2", "4x4", "8x8"]),
    ("scheduler_profile", &["default", "capacity", "coverage"]),
];

/// Number of parameters in the basic catalog (bandwidth plus the
/// categorical entries above).
pub const N_BASIC_PARAMS: usize = 1 + BASIC_CATALOG.len();

// Latent-distribution constants for cell quality and load. The load prior is
// skewed so that most cells sit in the low-UE regime and only a small tail
// runs highly loaded.
const Q_CELL_LO: f64 = 6.0;
const Q_CELL_HI: f64 = 13.0;
const LAMBDA_OFFSET: f64 = 0.5;
const LAMBDA_MEAN: f64 = 3.6;
const LAMBDA_CAP: f64 = 40.0;

/// Generator specification. Mirrored one-to-one by the `generator` section of
/// the experiment config JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkSpec {
    pub n_cells: usize,
    pub n_functionalities: usize,
    pub horizon_days: usize,
    pub pm_interval_minutes: u32,
    pub cm_snapshot_interval_hours: u32,
    /// Probability that a cell changes configuration in any given week.
    pub change_prob_per_week: f64,
    pub seed: u64,
    /// How many functionality effects are nonzero in the ground truth.
    pub active_effect_count: usize,
    /// Size of the configuration profile pool cells are initialized from.
    /// Real deployments reuse a modest set of standard configurations, which
    /// is what makes "configuration seen on another cell" a populated test
    /// class.
    pub n_config_profiles: usize,
    /// Relative noise on the reported data volume.
    pub volume_noise_sigma: f64,
    /// Relative noise on throughput in the ground-truth law.
    pub noise_sigma: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            n_cells: 200,
            n_functionalities: 114,
            horizon_days: 30,
            pm_interval_minutes: 60,
            cm_snapshot_interval_hours: 24,
            change_prob_per_week: 0.9,
            seed: 1,
            active_effect_count: 10,
            n_config_profiles: 100,
            volume_noise_sigma: 0.10,
            noise_sigma: 0.05,
        }
    }
}

impl NetworkSpec {
    /// Validate all invariants, reporting every failing field at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_cells == 0 {
            errs.push("n_cells must be > 0".to_string());
        }
        if self.n_functionalities == 0 {
            errs.push("n_functionalities must be > 0".to_string());
        }
        if self.horizon_days == 0 {
            errs.push("horizon_days must be > 0".to_string());
        }
        if !(15..=60).contains(&self.pm_interval_minutes) {
            errs.push(format!(
                "pm_interval_minutes must be in [15, 60], got {}",
                self.pm_interval_minutes
            ));
        }
        if self.cm_snapshot_interval_hours == 0 {
            errs.push("cm_snapshot_interval_hours must be > 0".to_string());
        } else if self.pm_interval_minutes > 0
            && (self.cm_snapshot_interval_hours as u64 * 60) % self.pm_interval_minutes as u64 != 0
        {
            errs.push(format!(
                "pm_interval_minutes ({}) must divide cm_snapshot_interval_hours*60 ({})",
                self.pm_interval_minutes,
                self.cm_snapshot_interval_hours as u64 * 60
            ));
        }
        if !(0.0..=1.0).contains(&self.change_prob_per_week) {
            errs.push(format!(
                "change_prob_per_week must be in [0, 1], got {}",
                self.change_prob_per_week
            ));
        }
        if self.active_effect_count == 0 || self.active_effect_count > self.n_functionalities {
            errs.push(format!(
                "active_effect_count must be in [1, n_functionalities], got {}",
                self.active_effect_count
            ));
        }
        if self.n_config_profiles == 0 {
            errs.push("n_config_profiles must be > 0".to_string());
        }
        if self.volume_noise_sigma < 0.0 {
            errs.push("volume_noise_sigma must be >= 0".to_string());
        }
        if self.noise_sigma < 0.0 {
            errs.push("noise_sigma must be >= 0".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CoreError::Validation(errs))
        }
    }

    pub fn rows_per_cell(&self) -> usize {
        self.horizon_days * 24 * 60 / self.pm_interval_minutes as usize
    }

    /// Daily change probability implied by the weekly probability:
    /// `1 - (1-p)^(1/7)`, so that surviving a whole week unchanged has
    /// probability exactly `1 - p`.
    pub fn daily_change_prob(&self) -> f64 {
        1.0 - (1.0 - self.change_prob_per_week).powf(1.0 / 7.0)
    }

    /// Expected number of cells with at least one scheduled change, in
    /// closed form: `n * (1 - (1-p)^(days/7))`.
    pub fn expected_changed_cells(&self) -> f64 {
        let keep = (1.0 - self.change_prob_per_week).powf(self.horizon_days as f64 / 7.0);
        self.n_cells as f64 * (1.0 - keep)
    }
}

/// A basic-parameter setting: integer (bandwidth) or categorical text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSetting {
    Int(i64),
    Text(String),
}

impl ParamSetting {
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamSetting::Int(v) => Some(*v),
            ParamSetting::Text(_) => None,
        }
    }
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ParamSetting::Text(s) => Some(s),
            ParamSetting::Int(_) => None,
        }
    }
}

/// New value carried by a scheduled change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChangeValue {
    Flag(bool),
    Basic(ParamSetting),
}

/// One scheduled configuration change: at `at`, the parameter at `path`
/// takes `value`. Multi-flag toggles become consecutive entries one second
/// apart so that timestamps stay strictly increasing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduledChange {
    pub at: DateTime<Utc>,
    pub path: String,
    pub value: ChangeValue,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellProfile {
    pub cell_id: String,
    pub basic_params: BTreeMap<String, ParamSetting>,
    pub functionality_flags: Vec<bool>,
    /// Latent CQI center for this cell.
    pub q_cell: f64,
    /// Latent mean number of active UEs.
    pub lambda_base: f64,
    pub scheduled_changes: Vec<ScheduledChange>,
}

/// Closed-form throughput law parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroundTruthModel {
    /// Spectral efficiency multiplier per band.
    pub band_eff: BTreeMap<String, f64>,
    /// Multiplicative effect per functionality flag; zero beyond the first
    /// `active_effect_count` entries.
    pub functionality_effects: Vec<f64>,
    pub noise_sigma: f64,
}

impl GroundTruthModel {
    fn generate(spec: &NetworkSpec) -> Self {
        let mut rng = Rng::seed_from(mix(spec.seed, stream::TRUTH));
        let mut effects = vec![0.0; spec.n_functionalities];
        for e in effects.iter_mut().take(spec.active_effect_count) {
            *e = rng.uniform(0.02, 0.10);
        }
        let mut band_eff = BTreeMap::new();
        band_eff.insert("n78".to_string(), 1.0);
        band_eff.insert("n41".to_string(), 0.9);
        band_eff.insert("n28".to_string(), 0.7);
        GroundTruthModel {
            band_eff,
            functionality_effects: effects,
            noise_sigma: spec.noise_sigma,
        }
    }
}

/// The configuration fields that enter the throughput law.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigView {
    pub bandwidth_mhz: f64,
    pub band: String,
    pub beamforming_on: bool,
    pub flags: Vec<bool>,
}

impl ConfigView {
    pub fn from_params(basic: &BTreeMap<String, ParamSetting>, flags: &[bool]) -> Self {
        let bandwidth_mhz = basic
            .get("bandwidth_mhz")
            .and_then(ParamSetting::as_i64)
            .unwrap_or(20) as f64;
        let band = basic
            .get("band")
            .and_then(|v| v.as_text())
            .unwrap_or("n78")
            .to_string();
        let beamforming_on = basic
            .get("beamforming")
            .and_then(|v| v.as_text())
            .map(|v| v == "on")
            .unwrap_or(false);
        ConfigView {
            bandwidth_mhz,
            band,
            beamforming_on,
            flags: flags.to_vec(),
        }
    }
}

/// One sampled set of environmental conditions.
#[derive(Clone, Copy, Debug)]
pub struct EnvSample {
    pub bler: f64,
    pub cqi: f64,
    pub prb_util: f64,
}

/// The ground-truth throughput law:
/// `T = C * (CQI/15)^1.2 * (1 - BLER) * PRB * (1 + eps)` with
/// `C = bandwidth * band_eff * (1 + 0.15*beamforming) * prod_j (1 + e_j * flag_j)`.
///
/// `eps` is passed in so callers control the noise draw; with `eps = 0` the
/// output is a pure function of its inputs.
pub fn ground_truth_throughput(
    view: &ConfigView,
    env: &EnvSample,
    eps: f64,
    truth: &GroundTruthModel,
) -> f64 {
    let band_eff = truth.band_eff.get(&view.band).copied().unwrap_or(1.0);
    let beam = if view.beamforming_on { 1.15 } else { 1.0 };
    let mut cap = view.bandwidth_mhz * band_eff * beam;
    for (flag, effect) in view.flags.iter().zip(&truth.functionality_effects) {
        if *flag {
            cap *= 1.0 + effect;
        }
    }
    let t = cap * (env.cqi / 15.0).powf(1.2) * (1.0 - env.bler) * env.prb_util * (1.0 + eps);
    t.max(0.0)
}

/// Configuration state of one cell as it evolves over the horizon.
/// Applies scheduled changes in timestamp order.
#[derive(Clone, Debug)]
pub struct ConfigTimeline {
    pub initial_basic: BTreeMap<String, ParamSetting>,
    pub initial_flags: Vec<bool>,
    pub changes: Vec<ScheduledChange>,
}

impl ConfigTimeline {
    pub fn of(profile: &CellProfile) -> Self {
        ConfigTimeline {
            initial_basic: profile.basic_params.clone(),
            initial_flags: profile.functionality_flags.clone(),
            changes: profile.scheduled_changes.clone(),
        }
    }

    /// Parameters in force at `t` (changes apply at their own timestamp).
    pub fn params_at(&self, t: DateTime<Utc>) -> (BTreeMap<String, ParamSetting>, Vec<bool>) {
        let mut basic = self.initial_basic.clone();
        let mut flags = self.initial_flags.clone();
        for ch in &self.changes {
            if ch.at > t {
                break;
            }
            apply_change(&mut basic, &mut flags, ch);
        }
        (basic, flags)
    }
}

pub(crate) fn apply_change(
    basic: &mut BTreeMap<String, ParamSetting>,
    flags: &mut [bool],
    ch: &ScheduledChange,
) {
    if let Some(rest) = ch.path.strip_prefix("functionalities/f") {
        if let Ok(idx) = rest.parse::<usize>() {
            if idx >= 1 && idx <= flags.len() {
                if let ChangeValue::Flag(v) = ch.value {
                    flags[idx - 1] = v;
                }
            }
        }
    } else if let Some(name) = ch.path.strip_prefix("basic/") {
        if let ChangeValue::Basic(v) = &ch.value {
            basic.insert(name.to_string(), v.clone());
        }
    }
}

pub fn flag_path(idx: usize) -> String {
    format!("functionalities/f{:03}", idx + 1)
}

/// Generate the cell population and the ground-truth model.
///
/// Initial configurations are drawn from a pool of `n_config_profiles`
/// profiles (each sampled uniformly over the catalog domains, flags on with
/// probability 0.5), and each cell picks one profile uniformly. Change
/// schedules are sampled per day with the daily probability implied by
/// `change_prob_per_week`; a change either moves one basic parameter to a
/// different value or toggles 1-3 functionality flags.
pub fn generate_network(spec: &NetworkSpec) -> Result<(Vec<CellProfile>, GroundTruthModel)> {
    spec.validate()?;
    let truth = GroundTruthModel::generate(spec);

    let mut pool_rng = Rng::seed_from(mix(spec.seed, stream::PROFILE_POOL));
    let mut pool = Vec::with_capacity(spec.n_config_profiles);
    for _ in 0..spec.n_config_profiles {
        let mut basic = BTreeMap::new();
        basic.insert(
            "bandwidth_mhz".to_string(),
            ParamSetting::Int(BANDWIDTH_MHZ[pool_rng.index(BANDWIDTH_MHZ.len())]),
        );
        for (name, domain) in BASIC_CATALOG {
            basic.insert(
                name.to_string(),
                ParamSetting::Text(domain[pool_rng.index(domain.len())].to_string()),
            );
        }
        let flags: Vec<bool> = (0..spec.n_functionalities)
            .map(|_| pool_rng.chance(0.5))
            .collect();
        pool.push((basic, flags));
    }

    let profile_stream = mix(spec.seed, stream::CELL_PROFILE);
    let p_day = spec.daily_change_prob();
    let start = base_start();

    let mut cells = Vec::with_capacity(spec.n_cells);
    for i in 0..spec.n_cells {
        let mut rng = Rng::seed_from(mix(profile_stream, i as u64));
        let (basic, flags) = pool[rng.index(pool.len())].clone();
        let q_cell = rng.uniform(Q_CELL_LO, Q_CELL_HI);
        let lambda_base = (LAMBDA_OFFSET + rng.exponential(LAMBDA_MEAN)).min(LAMBDA_CAP);

        let mut cur_basic = basic.clone();
        let mut cur_flags = flags.clone();
        let mut changes = Vec::new();
        for day in 0..spec.horizon_days {
            if !rng.chance(p_day) {
                continue;
            }
            let at = start
                + Duration::days(day as i64)
                + Duration::seconds((rng.next_f64() * 86_400.0) as i64);
            if rng.chance(0.5) {
                let (path, value) = sample_basic_change(&mut rng, &cur_basic);
                apply_change(
                    &mut cur_basic,
                    &mut cur_flags,
                    &ScheduledChange {
                        at,
                        path: path.clone(),
                        value: value.clone(),
                    },
                );
                changes.push(ScheduledChange { at, path, value });
            } else {
                let count = 1 + rng.index(3);
                let mut chosen: Vec<usize> = Vec::with_capacity(count);
                while chosen.len() < count {
                    let idx = rng.index(spec.n_functionalities);
                    if !chosen.contains(&idx) {
                        chosen.push(idx);
                    }
                }
                for (j, idx) in chosen.into_iter().enumerate() {
                    let new_value = !cur_flags[idx];
                    cur_flags[idx] = new_value;
                    changes.push(ScheduledChange {
                        at: at + Duration::seconds(j as i64),
                        path: flag_path(idx),
                        value: ChangeValue::Flag(new_value),
                    });
                }
            }
        }

        cells.push(CellProfile {
            cell_id: format!("cell-{i:04}"),
            basic_params: basic,
            functionality_flags: flags,
            q_cell,
            lambda_base,
            scheduled_changes: changes,
        });
    }
    Ok((cells, truth))
}

fn sample_basic_change(
    rng: &mut Rng,
    current: &BTreeMap<String, ParamSetting>,
) -> (String, ChangeValue) {
    let which = rng.index(N_BASIC_PARAMS);
    if which == 0 {
        let cur = current
            .get("bandwidth_mhz")
            .and_then(ParamSetting::as_i64)
            .unwrap_or(BANDWIDTH_MHZ[0]);
        let options: Vec<i64> = BANDWIDTH_MHZ.iter().copied().filter(|v| *v != cur).collect();
        let new = options[rng.index(options.len())];
        (
            "basic/bandwidth_mhz".to_string(),
            ChangeValue::Basic(ParamSetting::Int(new)),
        )
    } else {
        let (name, domain) = BASIC_CATALOG[which - 1];
        let cur = current.get(name).and_then(|v| v.as_text()).unwrap_or("");
        let options: Vec<&str> = domain.iter().copied().filter(|v| *v != cur).collect();
        let new = options[rng.index(options.len())];
        (
            format!("basic/{name}"),
            ChangeValue::Basic(ParamSetting::Text(new.to_string())),
        )
    }
}

impl Rng {
    /// Exponential with the given mean via inversion; one draw.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * (1.0 - self.next_f64()).ln()
    }
}
