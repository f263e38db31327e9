//! Time-series log of one scenario run and its CSV form.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::actuator::PlantState;

/// One high-level tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub t: f64,
    pub setpoint_mm: f64,
    pub setpoint_vel_mm_s: f64,
    pub position_mm: f64,
    pub velocity_mm_s: f64,
    pub true_current_a: f64,
    pub sensed_current_a: f64,
    pub command_current_a: f64,
    pub load_torque_nm: f64,
    pub encoder_count: i64,
    pub velocity_counts_s: f64,
}

impl Row {
    pub fn error_mm(&self) -> f64 {
        self.setpoint_mm - self.position_mm
    }
}

pub const CSV_COLUMNS: [&str; 11] = [
    "t",
    "setpoint_mm",
    "setpoint_vel_mm_s",
    "position_mm",
    "velocity_mm_s",
    "true_current_a",
    "sensed_current_a",
    "command_current_a",
    "load_torque_nm",
    "encoder_count",
    "velocity_counts_s",
];

/// Provenance written as comment lines at the top of run.csv.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMeta {
    pub scenario: String,
    pub label: String,
    pub seed: u64,
    /// sha256 of the echoed config, hex.
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<Row>,
    pub physics_steps: u64,
    /// Physics steps executed after each row, before the next one.
    pub low_ticks_per_row: Vec<u32>,
    pub saturated_ticks: u64,
    pub final_state: PlantState,
    pub meta: RunMeta,
}

/// Fixed 9-significant-digit float format used in every CSV.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

impl RunRecord {
    pub fn new(seed: u64) -> Self {
        Self {
            rows: Vec::new(),
            physics_steps: 0,
            low_ticks_per_row: Vec::new(),
            saturated_ticks: 0,
            final_state: PlantState::at_rest(),
            meta: RunMeta {
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                ..Default::default()
            },
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.t)
    }

    pub fn to_csv(&self) -> String {
        let m = &self.meta;
        let mut out = String::with_capacity(160 * (self.rows.len() + 8));
        let _ = writeln!(out, "# scenario: {}", m.scenario);
        let _ = writeln!(out, "# run: {}", m.label);
        let _ = writeln!(out, "# seed: {}", m.seed);
        let _ = writeln!(out, "# config_sha256: {}", m.config_hash);
        let _ = writeln!(out, "# version: {}", m.version);
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for r in &self.rows {
            let floats = [
                r.t,
                r.setpoint_mm,
                r.setpoint_vel_mm_s,
                r.position_mm,
                r.velocity_mm_s,
                r.true_current_a,
                r.sensed_current_a,
                r.command_current_a,
                r.load_torque_nm,
            ];
            for x in floats {
                out.push_str(&fmt_float(x));
                out.push(',');
            }
            let _ = writeln!(out, "{},{}", r.encoder_count, fmt_float(r.velocity_counts_s));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    /// sha256 of the CSV form, hex.
    pub fn log_hash(&self) -> String {
        sha256_hex(self.to_csv().as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format() {
        assert_eq!(fmt_float(0.0), "0.00000000e0");
        assert_eq!(fmt_float(-1.5), "-1.50000000e0");
        assert_eq!(fmt_float(353.677_123_4), "3.53677123e2");
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn csv_layout() {
        let mut r = RunRecord::new(3);
        r.rows.push(Row {
            t: 0.001,
            setpoint_mm: 1.0,
            setpoint_vel_mm_s: 0.0,
            position_mm: 0.5,
            velocity_mm_s: 0.0,
            true_current_a: 0.0,
            sensed_current_a: 0.0,
            command_current_a: 0.8,
            load_torque_nm: 0.0,
            encoder_count: 177,
            velocity_counts_s: 0.0,
        });
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[2], "# seed: 3");
        assert_eq!(lines[5], CSV_COLUMNS.join(","));
        assert_eq!(lines[6].split(',').count(), CSV_COLUMNS.len());
        assert!(lines[6].contains(",177,"));
        assert_eq!(r.log_hash(), r.clone().log_hash());
    }
}
