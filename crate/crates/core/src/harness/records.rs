//! Sample CSV schema. Files start with a `#` schema line, then a header
//! row. Floats are written in shortest round-trip form.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::so3::Vec3;
use crate::{Error, Result};

pub const SCHEMA_LINE: &str = "# morphwing-samples v1";

/// One row: time (s), condition id, shaft angle (rad) and rate (rad/s),
/// joint angles (rad), flap frequency (Hz), pitch (deg), wind (m/s),
/// forces (N) and torques (N·m).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub condition: usize,
    pub shaft_angle: f64,
    pub shaft_rate: f64,
    pub theta_lp: f64,
    pub theta_lm: f64,
    pub theta_le: f64,
    pub theta_lf: f64,
    pub theta_rp: f64,
    pub theta_rm: f64,
    pub theta_re: f64,
    pub theta_rf: f64,
    pub frequency: f64,
    pub pitch: f64,
    pub wind: f64,
    /// Injected aerodynamic force.
    pub fx_true: f64,
    pub fy_true: f64,
    pub fz_true: f64,
    /// Tared load-cell force: the aerodynamic force plus sensor noise.
    pub fx_meas: f64,
    pub fy_meas: f64,
    pub fz_meas: f64,
    /// Raw mount wrench on the body.
    pub lc_fx: f64,
    pub lc_fy: f64,
    pub lc_fz: f64,
    pub lc_tx: f64,
    pub lc_ty: f64,
    pub lc_tz: f64,
    /// `none`, `observer` or `mlp`.
    pub estimator: String,
    pub fx_est: Option<f64>,
    pub fy_est: Option<f64>,
    pub fz_est: Option<f64>,
}

impl SampleRecord {
    pub fn joints(&self) -> [f64; 8] {
        [
            self.theta_lp,
            self.theta_lm,
            self.theta_le,
            self.theta_lf,
            self.theta_rp,
            self.theta_rm,
            self.theta_re,
            self.theta_rf,
        ]
    }

    pub fn set_joints(&mut self, q: &[f64]) {
        [
            self.theta_lp,
            self.theta_lm,
            self.theta_le,
            self.theta_lf,
            self.theta_rp,
            self.theta_rm,
            self.theta_re,
            self.theta_rf,
        ] = [q[0], q[1], q[2], q[3], q[4], q[5], q[6], q[7]];
    }

    pub fn truth(&self) -> Vec3 {
        Vec3::new(self.fx_true, self.fy_true, self.fz_true)
    }

    pub fn measured(&self) -> Vec3 {
        Vec3::new(self.fx_meas, self.fy_meas, self.fz_meas)
    }

    pub fn load_cell_force(&self) -> Vec3 {
        Vec3::new(self.lc_fx, self.lc_fy, self.lc_fz)
    }

    pub fn load_cell_torque(&self) -> Vec3 {
        Vec3::new(self.lc_tx, self.lc_ty, self.lc_tz)
    }

    pub fn estimate(&self) -> Option<Vec3> {
        Some(Vec3::new(self.fx_est?, self.fy_est?, self.fz_est?))
    }

    pub fn with_estimate(&self, tag: &str, f: Vec3) -> Self {
        SampleRecord {
            estimator: tag.to_string(),
            fx_est: Some(f.x),
            fy_est: Some(f.y),
            fz_est: Some(f.z),
            ..self.clone()
        }
    }
}

pub fn write_records<W: Write>(mut out: W, records: &[SampleRecord]) -> Result<()> {
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        // Keep the header so empty files still carry the schema.
        w.write_record(HEADER)?;
    }
    w.flush()?;
    Ok(())
}

const HEADER: [&str; 31] = [
    "t",
    "condition",
    "shaft_angle",
    "shaft_rate",
    "theta_lp",
    "theta_lm",
    "theta_le",
    "theta_lf",
    "theta_rp",
    "theta_rm",
    "theta_re",
    "theta_rf",
    "frequency",
    "pitch",
    "wind",
    "fx_true",
    "fy_true",
    "fz_true",
    "fx_meas",
    "fy_meas",
    "fz_meas",
    "lc_fx",
    "lc_fy",
    "lc_fz",
    "lc_tx",
    "lc_ty",
    "lc_tz",
    "estimator",
    "fx_est",
    "fy_est",
    "fz_est",
];

/// Parses a sample file, checking the schema line, the header and the
/// time ordering within each condition.
pub fn read_records<R: Read>(input: R) -> Result<Vec<SampleRecord>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != SCHEMA_LINE {
        return Err(Error::Data(format!("expected schema line `{SCHEMA_LINE}`, found `{}`", first.trim_end())));
    }
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(HEADER) {
        return Err(Error::Data("unexpected CSV header".into()));
    }
    let records: Vec<SampleRecord> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    let mut last: std::collections::HashMap<(usize, &str), f64> = Default::default();
    for (i, rec) in records.iter().enumerate() {
        if let Some(prev) = last.insert((rec.condition, rec.estimator.as_str()), rec.t) {
            if !(rec.t > prev) {
                return Err(Error::Data(format!(
                    "row {}: time is not increasing within condition {}",
                    i + 1,
                    rec.condition
                )));
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(t: f64, condition: usize) -> SampleRecord {
        SampleRecord {
            t,
            condition,
            shaft_angle: 1.0 / 3.0,
            shaft_rate: 18.84955592153876,
            theta_lp: 0.1,
            theta_lm: -0.2,
            theta_le: 0.3,
            theta_lf: 1e-17,
            theta_rp: 0.5,
            theta_rm: 0.6,
            theta_re: -0.7,
            theta_rf: 0.8,
            frequency: 3.0,
            pitch: -10.0,
            wind: 1.0,
            fx_true: 0.012345678901234567,
            fy_true: -1e-300,
            fz_true: 0.0,
            fx_meas: 0.1,
            fy_meas: 0.2,
            fz_meas: 0.3,
            lc_fx: 0.4,
            lc_fy: 0.5,
            lc_fz: 0.29430000000000006,
            lc_tx: 1e-5,
            lc_ty: 2e-5,
            lc_tz: 3e-5,
            estimator: "none".into(),
            fx_est: None,
            fy_est: None,
            fz_est: None,
        }
    }

    fn round_trip(records: &[SampleRecord]) -> Vec<SampleRecord> {
        let mut buf = Vec::new();
        write_records(&mut buf, records).unwrap();
        read_records(buf.as_slice()).unwrap()
    }

    #[test]
    fn file_layout() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[record(0.0, 0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SCHEMA_LINE));
        assert_eq!(lines.next().unwrap(), HEADER.join(","));
        assert!(lines.next().unwrap().ends_with(",none,,,"));
    }

    #[test]
    fn empty_file_keeps_header() {
        assert!(round_trip(&[]).is_empty());
    }

    #[test]
    fn exact_round_trip() {
        let mut rows = vec![record(0.0, 0), record(1.0 / 7000.0, 0), record(0.0, 1)];
        rows[2] = rows[2].with_estimate("observer", Vec3::new(0.1, -2.5e-7, std::f64::consts::PI));
        assert_eq!(round_trip(&rows), rows);
    }

    #[test]
    fn rejects_bad_files() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[record(0.2, 0), record(0.1, 0)]).unwrap();
        assert!(matches!(read_records(buf.as_slice()), Err(Error::Data(_))));
        assert!(read_records("t,condition\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_records(&mut buf, &[record(0.2, 0)]).unwrap();
        let text = String::from_utf8(buf).unwrap().replace(",none,", ",none,x");
        let err = read_records(text.as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    proptest! {
        #[test]
        fn floats_survive(vals in proptest::collection::vec(-1e6..1e6f64, 6), tiny in -1e-200..1e-200f64) {
            let mut r = record(vals[0].abs(), 3);
            r.fx_true = vals[1];
            r.fy_true = tiny;
            r.lc_tz = vals[2] * 1e-9;
            r.shaft_angle = vals[3];
            let r = r.with_estimate("mlp", Vec3::new(vals[4], vals[5], tiny));
            prop_assert_eq!(round_trip(std::slice::from_ref(&r)), vec![r]);
        }
    }
}
