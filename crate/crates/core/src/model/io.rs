//! Session directories: `manifest.json` plus per-unit CSV files.
//!
//! Two CSV layouts are accepted. The canonical split layout has
//! `<placement>_emg.csv` (`t_s,emg_uV`) and `<placement>_imu.csv`
//! (`t_s,ax,ay,az,gx,gy,gz,mx,my,mz`), each at its own rate. The combined
//! layout has a single `<placement>.csv` with all columns at the EMG rate and
//! IMU cells left empty between IMU ticks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Channel, ChannelKind, Placement, Posture, Recording, ScheduleParams, EMG_RATE_HZ, IMU_RATE_HZ};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFiles {
    pub placement: Placement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emg_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imu_file: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub emg_hz: f64,
    pub imu_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            emg_hz: EMG_RATE_HZ,
            imu_hz: IMU_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[default]
    Raw,
    Preprocessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub participant_id: String,
    pub posture: Posture,
    pub sensors: Vec<SensorFiles>,
    pub schedule: ScheduleParams,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default, skip_serializing_if = "is_raw")]
    pub stage: Stage,
}

fn is_raw(s: &Stage) -> bool {
    *s == Stage::Raw
}

impl SessionManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let manifest: SessionManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        manifest.schedule.validate()?;
        Ok(manifest)
    }

    fn check_rates(&self) -> Result<()> {
        if self.stage == Stage::Raw {
            for (what, declared, native) in [
                ("EMG", self.rates.emg_hz, EMG_RATE_HZ),
                ("IMU", self.rates.imu_hz, IMU_RATE_HZ),
            ] {
                if (declared - native).abs() > 1e-9 {
                    return Err(Error::RateMismatch {
                        what: format!("{what} declared rate"),
                        declared,
                        observed: native,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Loads the recording described by a `manifest.json`.
pub fn load_session(manifest_path: &Path) -> Result<Recording> {
    load_session_with_manifest(manifest_path).map(|(_, rec)| rec)
}

pub fn load_session_with_manifest(manifest_path: &Path) -> Result<(SessionManifest, Recording)> {
    let manifest = SessionManifest::load(manifest_path)?;
    manifest.check_rates()?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));

    let mut seen = Vec::new();
    for s in &manifest.sensors {
        if seen.contains(&s.placement) {
            return Err(Error::DuplicateChannel(format!("sensor {}", s.placement)));
        }
        seen.push(s.placement);
    }

    let per_sensor: Vec<Result<Vec<Channel>>> = manifest
        .sensors
        .par_iter()
        .map(|s| load_sensor(root, s, &manifest.rates))
        .collect();
    let mut channels = Vec::new();
    for r in per_sensor {
        channels.extend(r?);
    }
    let cal = manifest.schedule.calibration_s;
    let rec = Recording::new(
        manifest.participant_id.clone(),
        manifest.posture,
        channels,
        (0.0, cal),
    )?;
    Ok((manifest, rec))
}

fn load_sensor(root: &Path, s: &SensorFiles, rates: &Rates) -> Result<Vec<Channel>> {
    let mut out = Vec::new();
    let emg_path = s.emg_file.as_ref().map(|f| root.join(f));
    let imu_path = s.imu_file.as_ref().map(|f| root.join(f));
    let mut parsed = Vec::new();
    for path in [&emg_path, &imu_path].into_iter().flatten() {
        if parsed.contains(path) {
            continue;
        }
        parsed.push(path.clone());
        let table = read_table(path)?;
        out.extend(table_to_channels(path, &table, s.placement, rates)?);
    }
    Ok(out)
}

struct Table {
    columns: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
}

fn read_table(path: &Path) -> Result<Table> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let columns: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut cells = vec![Vec::new(); columns.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (col, field) in record.iter().enumerate() {
            let field = field.trim();
            let v = if field.is_empty() {
                None
            } else {
                Some(field.parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("row {}, column {}: {e}", row + 2, columns[col]),
                })?)
            };
            cells[col].push(v);
        }
    }
    Ok(Table { columns, cells })
}

fn check_timestamps(path: &Path, ts: &[f64], declared: f64) -> Result<()> {
    if ts.len() < 2 {
        return Ok(());
    }
    let span = ts[ts.len() - 1] - ts[0];
    let observed = if span > 0.0 {
        (ts.len() - 1) as f64 / span
    } else {
        f64::INFINITY
    };
    let mismatch = || Error::RateMismatch {
        what: path.display().to_string(),
        declared,
        observed,
    };
    if (observed - declared).abs() > 0.01 * declared {
        return Err(mismatch());
    }
    let half = 0.5 / declared;
    if ts
        .iter()
        .enumerate()
        .any(|(i, t)| (t - ts[0] - i as f64 / declared).abs() > half)
    {
        return Err(mismatch());
    }
    Ok(())
}

fn table_to_channels(
    path: &Path,
    table: &Table,
    placement: Placement,
    rates: &Rates,
) -> Result<Vec<Channel>> {
    let col = |name: &str| table.columns.iter().position(|c| c == name);
    let t_col = col("t_s").ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        msg: "missing t_s column".into(),
    })?;
    let emg_col = col(ChannelKind::Emg.csv_column());
    let imu_cols: Vec<(ChannelKind, usize)> = ChannelKind::IMU_AXES
        .iter()
        .filter_map(|&k| col(k.csv_column()).map(|c| (k, c)))
        .collect();
    if emg_col.is_none() && imu_cols.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: "no signal columns".into(),
        });
    }
    let times = &table.cells[t_col];
    let mut channels = Vec::new();

    if let Some(ec) = emg_col {
        let mut ts = Vec::with_capacity(times.len());
        let mut xs = Vec::with_capacity(times.len());
        for (t, v) in times.iter().zip(&table.cells[ec]) {
            if let (Some(t), Some(v)) = (t, v) {
                ts.push(*t);
                xs.push(*v);
            }
        }
        if !xs.is_empty() {
            check_timestamps(path, &ts, rates.emg_hz)?;
            channels.push(Channel::new(placement, ChannelKind::Emg, rates.emg_hz, xs));
        }
    }

    if !imu_cols.is_empty() {
        // IMU ticks are the rows where any IMU cell is present
        let rows: Vec<usize> = (0..times.len())
            .filter(|&r| imu_cols.iter().any(|&(_, c)| table.cells[c][r].is_some()))
            .collect();
        let ts: Vec<f64> = rows
            .iter()
            .map(|&r| {
                times[r].ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    msg: format!("row {} has no timestamp", r + 2),
                })
            })
            .collect::<Result<_>>()?;
        if !rows.is_empty() {
            check_timestamps(path, &ts, rates.imu_hz)?;
        }
        for &(kind, c) in &imu_cols {
            let column = &table.cells[c];
            if rows.iter().all(|&r| column[r].is_none()) {
                continue;
            }
            let xs: Vec<f64> = rows
                .iter()
                .map(|&r| {
                    column[r].ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        msg: format!("row {}: missing {}", r + 2, kind.csv_column()),
                    })
                })
                .collect::<Result<_>>()?;
            channels.push(Channel::new(placement, kind, rates.imu_hz, xs));
        }
    }
    Ok(channels)
}

/// Writes `rec` as a split-layout session directory and returns the manifest.
pub fn save_session(rec: &Recording, schedule: &ScheduleParams, dir: &Path) -> Result<SessionManifest> {
    std::fs::create_dir_all(dir)?;
    let mut sensors = Vec::new();
    let mut rates: Option<Rates> = None;
    let mut stage = Stage::Raw;
    for placement in rec.placements() {
        let emg = rec.channel(placement, ChannelKind::Emg);
        let imu: Vec<Option<&Channel>> = ChannelKind::IMU_AXES
            .iter()
            .map(|&k| rec.channel(placement, k))
            .collect();
        let mut files = SensorFiles {
            placement,
            emg_file: None,
            imu_file: None,
        };
        let mut r = rates.unwrap_or_default();
        if let Some(c) = emg {
            let name = format!("{placement}_emg.csv");
            write_columns(&dir.join(&name), c.rate_hz, &[ChannelKind::Emg], &[Some(c)])?;
            files.emg_file = Some(name);
            r.emg_hz = c.rate_hz;
        }
        if let Some(first) = imu.iter().flatten().next() {
            let name = format!("{placement}_imu.csv");
            write_columns(&dir.join(&name), first.rate_hz, &ChannelKind::IMU_AXES, &imu)?;
            files.imu_file = Some(name);
            r.imu_hz = first.rate_hz;
        }
        if (r.imu_hz - IMU_RATE_HZ).abs() > 1e-9 || (r.emg_hz - EMG_RATE_HZ).abs() > 1e-9 {
            stage = Stage::Preprocessed;
        }
        rates = Some(r);
        sensors.push(files);
    }
    let manifest = SessionManifest {
        participant_id: rec.participant_id.clone(),
        posture: rec.posture,
        sensors,
        schedule: *schedule,
        rates: rates.unwrap_or_default(),
        stage,
    };
    let file = File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
    Ok(manifest)
}

fn write_columns(path: &PathBuf, rate: f64, kinds: &[ChannelKind], chans: &[Option<&Channel>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t_s")?;
    for k in kinds {
        write!(w, ",{}", k.csv_column())?;
    }
    writeln!(w)?;
    let n = chans.iter().flatten().map(|c| c.samples.len()).max().unwrap_or(0);
    for i in 0..n {
        write!(w, "{}", i as f64 / rate)?;
        for c in chans {
            match c.and_then(|c| c.samples.get(i)) {
                Some(v) => write!(w, ",{v}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
