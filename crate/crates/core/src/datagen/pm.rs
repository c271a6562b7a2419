//! PM series synthesis from a cell profile and the ground-truth law.

use chrono::{Duration, Timelike};

use super::{
    apply_change, base_start, ConfigView, EnvSample, GroundTruthModel, NetworkSpec,
    ground_truth_throughput, CellProfile,
};
use crate::pmstore::PmSeries;
use crate::rng::{fnv1a64, mix, stream, Rng};

/// Generate the full PM series for one cell.
///
/// Per timestep, in fixed draw order: active UEs are Poisson with a diurnal
/// mean `lambda_base * max(0.1, 1 + 0.8 sin(2 pi (hour - 14) / 24))`, CQI is
/// the rounded latent quality plus noise clipped to `[1, 15]`, BLER is
/// `N(0.08, 0.03)` clipped to `[0, 0.5]`, PRB utilization saturates in the
/// UE count as `1 - exp(-n/8)` plus measurement noise, throughput follows
/// the ground-truth law under the configuration in force at the timestamp,
/// and data volume is throughput times the interval with relative noise.
///
/// The stream is seeded from `(spec.seed, cell_id)`, so per-cell generation
/// can run in parallel and still match a serial run.
pub fn generate_pm(profile: &CellProfile, truth: &GroundTruthModel, spec: &NetworkSpec) -> PmSeries {
    let mut rng = Rng::seed_from(mix(
        mix(spec.seed, stream::CELL_PM),
        fnv1a64(profile.cell_id.as_bytes()),
    ));
    let rows = spec.rows_per_cell();
    let start = base_start();
    let interval_seconds = spec.pm_interval_minutes as f64 * 60.0;

    let mut series = PmSeries::empty(
        profile.cell_id.clone(),
        start,
        spec.pm_interval_minutes,
        rows,
    );

    let mut basic = profile.basic_params.clone();
    let mut flags = profile.functionality_flags.clone();
    let mut next_change = 0usize;
    let mut view = ConfigView::from_params(&basic, &flags);

    for k in 0..rows {
        let ts = start + Duration::minutes(k as i64 * spec.pm_interval_minutes as i64);
        while next_change < profile.scheduled_changes.len()
            && profile.scheduled_changes[next_change].at <= ts
        {
            apply_change(&mut basic, &mut flags, &profile.scheduled_changes[next_change]);
            next_change += 1;
            view = ConfigView::from_params(&basic, &flags);
        }

        let hour = ts.num_seconds_from_midnight() as f64 / 3600.0;
        let lambda = profile.lambda_base
            * (1.0 + 0.8 * (std::f64::consts::TAU * (hour - 14.0) / 24.0).sin()).max(0.1);

        let n_ue = rng.poisson(lambda) as f64;
        let cqi = (profile.q_cell + rng.normal() * 1.2).round().clamp(1.0, 15.0);
        let bler = rng.normal_with(0.08, 0.03).clamp(0.0, 0.5);
        let prb = (1.0 - (-n_ue / 8.0).exp() + rng.normal() * 0.02).clamp(0.01, 0.99);
        let eps = rng.normal() * truth.noise_sigma;
        let vol_noise = rng.normal() * spec.volume_noise_sigma;

        let env = EnvSample {
            bler,
            cqi,
            prb_util: prb,
        };
        let throughput = ground_truth_throughput(&view, &env, eps, truth);
        // Megabits/s over the interval to megabytes.
        let volume = (throughput * interval_seconds / 8.0 * (1.0 + vol_noise)).max(0.0);

        series.bler.push(bler);
        series.cqi.push(cqi);
        series.data_volume.push(volume);
        series.prb_util.push(prb);
        series.active_ues.push(n_ue);
        series.dl_throughput.push(throughput);
        series.missing.push(false);
    }
    series
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_network, ChangeValue, ParamSetting, ScheduledChange};
    use crate::eval::spearman;

    fn one_cell_spec(seed: u64) -> NetworkSpec {
        NetworkSpec {
            n_cells: 1,
            n_functionalities: 8,
            active_effect_count: 2,
            horizon_days: 45,
            change_prob_per_week: 0.0,
            n_config_profiles: 2,
            seed,
            ..NetworkSpec::default()
        }
    }

    #[test]
    fn low_load_respects_clip_bounds() {
        let spec = one_cell_spec(3);
        let (mut cells, truth) = generate_network(&spec).unwrap();
        cells[0].lambda_base = 0.0;
        let pm = generate_pm(&cells[0], &truth, &spec);
        for k in 0..pm.len() {
            assert!(pm.active_ues[k] >= 0.0);
            assert!(pm.prb_util[k] >= 0.01);
            assert!(pm.dl_throughput[k] >= 0.0);
            assert!((1.0..=15.0).contains(&pm.cqi[k]));
            assert!((0.0..=0.5).contains(&pm.bler[k]));
        }
    }

    #[test]
    fn volume_tracks_throughput() {
        let spec = one_cell_spec(11);
        let (cells, truth) = generate_network(&spec).unwrap();
        let pm = generate_pm(&cells[0], &truth, &spec);
        assert!(pm.len() >= 1000);
        let rho = spearman(&pm.data_volume, &pm.dl_throughput).unwrap();
        assert!(rho > 0.95, "spearman {rho}");
    }

    #[test]
    fn bandwidth_upgrade_raises_mean_throughput() {
        let spec = one_cell_spec(17);
        let (mut cells, truth) = generate_network(&spec).unwrap();
        let cell = &mut cells[0];
        cell.basic_params
            .insert("bandwidth_mhz".to_string(), ParamSetting::Int(20));
        let t_star = base_start() + Duration::days(20);
        cell.scheduled_changes = vec![ScheduledChange {
            at: t_star,
            path: "basic/bandwidth_mhz".to_string(),
            value: ChangeValue::Basic(ParamSetting::Int(100)),
        }];
        let pm = generate_pm(cell, &truth, &spec);
        let split = pm.index_at(t_star).unwrap();
        let before = pm.dl_throughput[..split].iter().sum::<f64>() / split as f64;
        let after =
            pm.dl_throughput[split..].iter().sum::<f64>() / (pm.len() - split) as f64;
        assert!(
            after > before,
            "mean after {after} should exceed mean before {before}"
        );
    }

    #[test]
    fn pm_generation_is_deterministic() {
        let spec = one_cell_spec(29);
        let (cells, truth) = generate_network(&spec).unwrap();
        let a = generate_pm(&cells[0], &truth, &spec);
        let b = generate_pm(&cells[0], &truth, &spec);
        assert_eq!(a.dl_throughput, b.dl_throughput);
        assert_eq!(a.data_volume, b.data_volume);
    }
}
