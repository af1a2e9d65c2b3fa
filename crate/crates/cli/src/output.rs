//! CSV and JSON artifacts. Floats in CSV use 17 significant digits
//! (`{:.16e}`), enough for a lossless `f64` round trip.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use lorentz_tomo::TrackingRecord;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::experiments::StaticTrial;

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_owned(),
            source,
        })?;
    }
    File::create(path).map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut f = create(path)?;
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Numerical(e.to_string()))?;
    writeln!(f, "{text}").map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

pub fn write_static_csv(path: &Path, trials: &[StaticTrial]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["trial", "loss", "efficiency"])?;
    for t in trials {
        w.write_record([t.trial.to_string(), float(t.loss), float(t.efficiency)])?;
    }
    w.flush().map_err(|source| CliError::Write {
        path: path.to_owned(),
        source,
    })
}

pub const TRACK_HEADER: [&str; 7] = [
    "step",
    "recon_fidelity",
    "loss",
    "efficiency",
    "max_detection_fraction",
    "sum_detection_fraction",
    "backaction_fidelity",
];

/// Streaming per-step CSV writer.
pub struct TrackCsv {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl TrackCsv {
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(create(path)?);
        writer.write_record(TRACK_HEADER)?;
        Ok(Self {
            path: path.to_owned(),
            writer,
        })
    }

    pub fn push(&mut self, r: &TrackingRecord) -> Result<()> {
        self.writer.write_record([
            r.step.to_string(),
            float(r.recon_fidelity),
            float(r.loss),
            float(r.efficiency),
            float(r.max_detection_fraction()),
            float(r.sum_detection_fraction()),
            float(r.backaction_fidelity),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|source| CliError::Write {
            path: self.path.clone(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [
            0.1,
            1.0 / 3.0,
            2.15997e-6,
            f64::MIN_POSITIVE,
            6563.000000000001,
        ] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn static_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/static.csv");
        let trials = [StaticTrial {
            trial: 0,
            loss: 0.5,
            efficiency: 2.0,
            iterations: 3,
        }];
        write_static_csv(&path, &trials).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "trial,loss,efficiency\n0,5.0000000000000000e-1,2.0000000000000000e0\n"
        );
    }
}
