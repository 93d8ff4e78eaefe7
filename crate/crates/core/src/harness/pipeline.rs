//! Generate → observe → train → predict → evaluate.
//!
//! The observer always runs on the full-rate series; CSV files and scores
//! use every `output.stride`-th sample.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dynamics::{BodyWrench, GeneralizedForce};
use crate::kinematics::{GeneralizedState, MorphologyParams};
use crate::mlp::{self, ConditionSamples, FeatureSet, MlpModel, TrainedModel};
use crate::observer::{extract_body_force, MomentumObserver};
use crate::so3::Vec3;
use crate::testbed::{generate_dataset, ConditionData, ExperimentCondition, GaitParams};
use crate::{Error, Result};

use super::config::Config;
use super::metrics::{phase_average, r2, rmse, PhaseAveragedCurve};
use super::records::{write_records, SampleRecord};

pub const OBSERVER: &str = "observer";
pub const MLP: &str = "mlp";

/// Runs the observer over a sampled series of states and known inputs.
/// The first residual is zero by construction.
pub fn observe_series<I>(series: I, gain: f64, params: &MorphologyParams) -> Result<Vec<GeneralizedForce>>
where
    I: IntoIterator<Item = (f64, GeneralizedState, GeneralizedForce)>,
{
    let mut it = series.into_iter();
    let Some((mut t_prev, s0, u0)) = it.next() else {
        return Ok(Vec::new());
    };
    let mut obs = MomentumObserver::with_uniform_gain(&s0, gain, params)?.with_initial_input(&u0);
    let mut out = vec![*obs.residual()];
    for (t, s, u) in it {
        out.push(*obs.update(&s, &u, t - t_prev)?);
        t_prev = t;
    }
    Ok(out)
}

/// Body force estimated from the load-cell wrench of one tethered run.
pub fn observe_condition(data: &ConditionData, gain: f64, params: &MorphologyParams) -> Result<Vec<Vec3>> {
    let series = (0..data.len()).map(|k| (data.time(k), data.state(k), data.load_cell[k].generalized()));
    Ok(observe_series(series, gain, params)?.iter().map(extract_body_force).collect())
}

fn base_record(data: &ConditionData, k: usize) -> SampleRecord {
    let t = data.time(k);
    let (q, _) = data.gait.joints_from_shaft(data.gait.shaft_angle(t), data.gait.shaft_rate());
    let (truth, meas, lc) = (data.truth[k], data.measured[k], data.load_cell[k]);
    let mut r = SampleRecord {
        t,
        condition: data.id,
        shaft_angle: data.gait.shaft_angle(t),
        shaft_rate: data.gait.shaft_rate(),
        theta_lp: 0.0,
        theta_lm: 0.0,
        theta_le: 0.0,
        theta_lf: 0.0,
        theta_rp: 0.0,
        theta_rm: 0.0,
        theta_re: 0.0,
        theta_rf: 0.0,
        frequency: data.condition.frequency,
        pitch: data.condition.pitch,
        wind: data.condition.wind,
        fx_true: truth.x,
        fy_true: truth.y,
        fz_true: truth.z,
        fx_meas: meas.x,
        fy_meas: meas.y,
        fz_meas: meas.z,
        lc_fx: lc.force.x,
        lc_fy: lc.force.y,
        lc_fz: lc.force.z,
        lc_tx: lc.torque.x,
        lc_ty: lc.torque.y,
        lc_tz: lc.torque.z,
        estimator: "none".into(),
        fx_est: None,
        fy_est: None,
        fz_est: None,
    };
    r.set_joints(q.as_slice());
    r
}

/// Every `stride`-th sample of each condition.
pub fn dataset_records(data: &[ConditionData], stride: usize) -> Vec<SampleRecord> {
    data.iter().flat_map(|d| (0..d.len()).step_by(stride).map(move |k| base_record(d, k))).collect()
}

fn group_by_condition(records: &[SampleRecord]) -> BTreeMap<usize, Vec<&SampleRecord>> {
    let mut groups: BTreeMap<usize, Vec<&SampleRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.condition).or_default().push(r);
    }
    groups
}

fn record_condition(r: &SampleRecord) -> ExperimentCondition {
    ExperimentCondition { frequency: r.frequency, wind: r.wind, pitch: r.pitch }
}

/// Observer run on sample records, reconstructing the tethered state from
/// the shaft encoder columns. Accuracy depends on the record rate.
pub fn observe_records(config: &Config, records: &[SampleRecord]) -> Result<Vec<SampleRecord>> {
    let params = config.observer_morphology();
    let groups = group_by_condition(records);
    let per_condition: Vec<Result<Vec<SampleRecord>>> = groups
        .par_iter()
        .map(|(&id, rows)| {
            let condition = record_condition(rows[0]);
            let gait = config.gait.params(condition.frequency)?;
            let mount = condition.mount();
            let series = rows.iter().map(|r| {
                let (q, qd) = gait.joints_from_shaft(r.shaft_angle, r.shaft_rate);
                let wrench = BodyWrench { torque: r.load_cell_torque(), force: r.load_cell_force() };
                (r.t, mount.state(q, qd), wrench.generalized())
            });
            let residuals = observe_series(series, config.observer.gain_for(condition.frequency), &params)
                .map_err(|e| e.in_stage("observe", Some(id)))?;
            Ok(rows.iter().zip(&residuals).map(|(r, res)| r.with_estimate(OBSERVER, extract_body_force(res))).collect())
        })
        .collect();
    Ok(per_condition.into_iter().collect::<Result<Vec<_>>>()?.concat())
}

pub fn record_features(set: FeatureSet, r: &SampleRecord) -> Vec<f64> {
    let mut f = match set {
        FeatureSet::Shaft => vec![r.shaft_angle, r.shaft_rate],
        FeatureSet::Joints => r.joints().to_vec(),
    };
    f.extend([r.frequency, r.pitch, r.wind]);
    f
}

fn feature_matrix(set: FeatureSet, rows: &[&SampleRecord]) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(set.dim(), rows.len());
    for (j, r) in rows.iter().enumerate() {
        x.set_column(j, &DVector::from_vec(record_features(set, r)));
    }
    x
}

/// Feature and tared-force target columns per condition.
pub fn training_samples(set: FeatureSet, records: &[SampleRecord]) -> Vec<ConditionSamples> {
    group_by_condition(records)
        .into_iter()
        .map(|(id, rows)| {
            let mut y = DMatrix::zeros(3, rows.len());
            for (j, r) in rows.iter().enumerate() {
                y.set_column(j, &r.measured());
            }
            ConditionSamples { condition_id: id, features: feature_matrix(set, &rows), targets: y }
        })
        .collect()
}

pub fn train_records(config: &Config, records: &[SampleRecord]) -> Result<TrainedModel> {
    let tc = config.mlp.train_config()?;
    mlp::train(&training_samples(tc.features, records), &tc, config.seed).map_err(|e| e.in_stage("train", None))
}

pub fn predict_records(model: &MlpModel, set: FeatureSet, records: &[SampleRecord]) -> Result<Vec<SampleRecord>> {
    let rows: Vec<&SampleRecord> = records.iter().collect();
    let pred = model.predict_batch(&feature_matrix(set, &rows)).map_err(|e| e.in_stage("predict", None))?;
    Ok(records
        .iter()
        .enumerate()
        .map(|(j, r)| r.with_estimate(MLP, Vec3::new(pred[(0, j)], pred[(1, j)], pred[(2, j)])))
        .collect())
}

/// Rows past the warm-up cycles.
pub fn scored(config: &Config, records: &[SampleRecord]) -> Vec<SampleRecord> {
    let warm = config.observer.warmup_cycles as f64;
    records.iter().filter(|r| r.t * r.frequency >= warm - 1e-9).cloned().collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorScore {
    pub rmse: [f64; 3],
    pub r2: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionCurves {
    pub condition: usize,
    pub frequency: f64,
    pub truth: PhaseAveragedCurve,
    pub observer: PhaseAveragedCurve,
    pub mlp: PhaseAveragedCurve,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rows: usize,
    pub conditions: Vec<usize>,
    pub observer: EstimatorScore,
    pub mlp: EstimatorScore,
    pub curves: Vec<ConditionCurves>,
}

fn split_estimates<'a>(records: &'a [SampleRecord], tag: &str) -> Vec<&'a SampleRecord> {
    records.iter().filter(|r| r.estimator == tag).collect()
}

/// Scores both estimators on the same rows and phase-averages each test
/// condition.
pub fn evaluate(config: &Config, records: &[SampleRecord]) -> Result<Evaluation> {
    let obs = split_estimates(records, OBSERVER);
    let net = split_estimates(records, MLP);
    let key = |r: &&SampleRecord| (r.condition, r.t.to_bits());
    if obs.is_empty() || obs.len() != net.len() || !obs.iter().map(key).eq(net.iter().map(key)) {
        return Err(Error::Data("observer and MLP estimates must cover the same samples in the same order".into()));
    }
    let estimates = |rows: &[&SampleRecord]| -> Result<Vec<Vec3>> {
        rows.iter()
            .map(|r| r.estimate().ok_or_else(|| Error::Data(format!("missing estimate at t = {}", r.t))))
            .collect()
    };
    let truth: Vec<Vec3> = obs.iter().map(|r| r.truth()).collect();
    let (obs_est, net_est) = (estimates(&obs)?, estimates(&net)?);
    // A force-free run has a constant reference and no defined R².
    let score = |est: &[Vec3]| -> Result<EstimatorScore> {
        let r2 = match r2(&truth, est) {
            Err(Error::InsufficientData(_)) => [f64::NAN; 3],
            other => other?,
        };
        Ok(EstimatorScore { rmse: rmse(&truth, est)?, r2 })
    };

    let mut curves = Vec::new();
    let mut start = 0;
    while start < obs.len() {
        let id = obs[start].condition;
        let end = start + obs[start..].iter().take_while(|r| r.condition == id).count();
        let c = record_condition(obs[start]);
        let gait: GaitParams = config.gait.params(c.frequency)?;
        let times: Vec<f64> = obs[start..end].iter().map(|r| r.t).collect();
        let fold = |v: &[Vec3]| {
            phase_average(&times, v, c.frequency, gait.stroke_boundaries())
                .map_err(|e| e.in_stage("evaluate", Some(id)))
        };
        curves.push(ConditionCurves {
            condition: id,
            frequency: c.frequency,
            truth: fold(&truth[start..end])?,
            observer: fold(&obs_est[start..end])?,
            mlp: fold(&net_est[start..end])?,
        });
        start = end;
    }
    Ok(Evaluation {
        rows: obs.len(),
        conditions: curves.iter().map(|c| c.condition).collect(),
        observer: score(&obs_est)?,
        mlp: score(&net_est)?,
        curves,
    })
}

pub fn phase_csv(curves: &ConditionCurves) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "# morphwing-phase v1 condition={} frequency={} downstroke_start={} upstroke_start={}",
        curves.condition,
        curves.frequency,
        curves.truth.downstroke_start * 100.0,
        curves.truth.upstroke_start * 100.0
    )
    .unwrap();
    let mut header = vec!["phase_percent".to_string()];
    for series in ["truth", "observer", "mlp"] {
        for axis in ["fx", "fy", "fz"] {
            header.push(format!("{series}_{axis}_mean"));
            header.push(format!("{series}_{axis}_std"));
        }
    }
    writeln!(s, "{}", header.join(",")).unwrap();
    let phase = curves.truth.phase_percent();
    for (b, p) in phase.iter().enumerate() {
        let mut row = vec![p.to_string()];
        for c in [&curves.truth, &curves.observer, &curves.mlp] {
            for i in 0..3 {
                row.push(c.mean[b][i].to_string());
                row.push(c.std[b][i].to_string());
            }
        }
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    s
}

pub fn loss_curve_csv(curve: &mlp::LossCurve) -> String {
    let mut s = String::from("epoch,train,validation\n");
    for (i, t) in curve.train.iter().enumerate() {
        let v = curve.validation.get(i).map(|v| v.to_string()).unwrap_or_default();
        writeln!(s, "{},{},{}", i + 1, t, v).unwrap();
    }
    s
}

/// Plain-text comparison table.
pub fn report_text(config: &Config, eval: &Evaluation, trained: Option<&TrainedModel>) -> String {
    let mut s = String::new();
    let tc = config.mlp.train_config().expect("validated config");
    writeln!(s, "morphwing estimator comparison").unwrap();
    writeln!(s, "config {}  seed {}", config.hash(), config.seed).unwrap();
    if let Some(t) = trained {
        let ids = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "train conditions ({}): {}", t.train_conditions.len(), ids(&t.train_conditions)).unwrap();
        writeln!(s, "test conditions ({}): {}", t.test_conditions.len(), ids(&t.test_conditions)).unwrap();
        let widths: Vec<String> = t.model.widths().iter().map(|w| w.to_string()).collect();
        writeln!(
            s,
            "mlp {} silu, {} epochs, features {:?}, inputs and targets z-scored",
            widths.join("-"),
            tc.epochs,
            tc.features
        )
        .unwrap();
    }
    match config.observer.bandwidth_ratio {
        Some(r) => writeln!(s, "observer gain {r} x flap rate").unwrap(),
        None => writeln!(s, "observer gain {} 1/s", config.observer.gain).unwrap(),
    }
    writeln!(s, "observer wing mass error {:+}%", config.observer.wing_mass_error * 100.0).unwrap();
    writeln!(
        s,
        "scored rows {} (stride {}, first {} cycle(s) skipped)",
        eval.rows, config.output.stride, config.observer.warmup_cycles
    )
    .unwrap();
    writeln!(s).unwrap();
    writeln!(s, "{:<10}{:>16}{:>16}{:>16}", "RMSE [N]", "Fx", "Fy", "Fz").unwrap();
    for (name, e) in [(OBSERVER, &eval.observer), (MLP, &eval.mlp)] {
        writeln!(s, "{:<10}{:>16.6e}{:>16.6e}{:>16.6e}", name, e.rmse[0], e.rmse[1], e.rmse[2]).unwrap();
    }
    writeln!(s, "{:<10}{:>16}{:>16}{:>16}", "R2", "Fx", "Fy", "Fz").unwrap();
    for (name, e) in [(OBSERVER, &eval.observer), (MLP, &eval.mlp)] {
        writeln!(s, "{:<10}{:>16.6}{:>16.6}{:>16.6}", name, e.r2[0], e.r2[1], e.r2[2]).unwrap();
    }
    let better: Vec<&str> =
        (0..3).map(|i| if eval.mlp.rmse[i] <= eval.observer.rmse[i] { MLP } else { OBSERVER }).collect();
    writeln!(s, "{:<10}{:>16}{:>16}{:>16}", "lower", better[0], better[1], better[2]).unwrap();
    s
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub evaluation: Evaluation,
    pub trained: TrainedModel,
    pub report: String,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Full comparison run; files land in `<root>/run-<hash>`.
pub fn run_pipeline(config: &Config, root: &Path) -> Result<PipelineOutcome> {
    config.validate()?;
    let grid = config.grid()?;
    let data = generate_dataset(&grid, &config.dataset_spec())?;

    let params = config.observer_morphology();
    let stride = config.output.stride;
    let observed: Vec<Vec<Vec3>> = data
        .par_iter()
        .map(|d| {
            observe_condition(d, config.observer.gain_for(d.condition.frequency), &params)
                .map_err(|e| e.in_stage("observe", Some(d.id)))
        })
        .collect::<Result<_>>()?;

    let records = dataset_records(&data, stride);
    let trained = train_records(config, &records)?;
    let features = config.mlp.train_config()?.features;

    let mut obs_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (d, est) in data.iter().zip(&observed) {
        if !trained.test_conditions.contains(&d.id) {
            continue;
        }
        for k in (0..d.len()).step_by(stride) {
            let base = base_record(d, k);
            obs_rows.push(base.with_estimate(OBSERVER, est[k]));
            test_rows.push(base);
        }
    }
    let obs_rows = scored(config, &obs_rows);
    let test_rows = scored(config, &test_rows);
    let mlp_rows = predict_records(&trained.model, features, &test_rows)?;
    let estimates: Vec<SampleRecord> = obs_rows.into_iter().chain(mlp_rows).collect();
    let evaluation = evaluate(config, &estimates).map_err(|e| match e {
        Error::Stage { .. } => e,
        other => other.in_stage("evaluate", None),
    })?;
    let report = report_text(config, &evaluation, Some(&trained));

    let run_dir = config.run_dir(root);
    fs::create_dir_all(&run_dir)?;
    write_file(&run_dir.join("config.toml"), config.to_toml_string().as_bytes())?;
    write_file(&run_dir.join("report.txt"), report.as_bytes())?;
    let mut buf = Vec::new();
    write_records(&mut buf, &estimates)?;
    write_file(&run_dir.join("estimates.csv"), &buf)?;
    for c in &evaluation.curves {
        write_file(&run_dir.join(format!("phase_{}.csv", c.condition)), phase_csv(c).as_bytes())?;
    }
    write_file(&run_dir.join("loss_curve.csv"), loss_curve_csv(&trained.curve).as_bytes())?;
    write_file(&run_dir.join("model.txt"), trained.model.to_text().as_bytes())?;
    Ok(PipelineOutcome { run_dir, evaluation, trained, report })
}
