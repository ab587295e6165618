//! On-disk formats.
//!
//! Floats in CSV files are written with 9 significant digits so that files
//! are byte-stable across runs; reading a file and writing it again
//! reproduces it exactly.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineParams, Prediction, Problem};
use crate::error::{Error, Result};
use crate::prep::{QuantizedEntry, QuantizedScan, ScrConfig, StaticDictionary};
use crate::simulator::{LidarPoint, LidarScan, MovingObject, PowerVector, ScenarioConfig, Trajectory};
use crate::windowing::{DatasetManifest, ObservationWindow};

pub const SCANS_CSV: &str = "scans.csv";
pub const POWERS_CSV: &str = "powers.csv";
pub const LINK_CSV: &str = "link.csv";
pub const OBJECTS_JSON: &str = "objects.json";
pub const CONFIG_JSON: &str = "config.json";
pub const DICT_CSV: &str = "dict.csv";
pub const DICT_META_JSON: &str = "dict_meta.json";
pub const PREP_SCANS_CSV: &str = "prep_scans.csv";
pub const WINDOWS_JSONL: &str = "windows.jsonl";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const PARAMS_JSON: &str = "baseline_params.json";
pub const PREDS_CSV: &str = "preds.csv";

/// Formats a float with 9 significant digits, shortest form, no `-0`.
pub fn fmt_f64(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("scientific notation parses");
    if rounded == 0.0 {
        return "0".to_string();
    }
    format!("{rounded}")
}

/// Shortest form that parses back to the same value, no `-0`.
pub fn fmt_f64_exact(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    format!("{v}")
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|()| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    Ok(csv::ReaderBuilder::new().from_reader(open(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::parse(path, format!("line {}: missing column {i}", line_of(rec))))?;
    raw.parse().map_err(|_| {
        Error::parse(
            path,
            format!("line {}: cannot parse {raw:?} in column {i}", line_of(rec)),
        )
    })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn expect_header(path: &Path, reader: &mut csv::Reader<BufReader<File>>, want: &[&str]) -> Result<()> {
    let header = reader.headers().map_err(csv_err(path))?;
    if header.iter().ne(want.iter().copied()) {
        return Err(Error::parse(
            path,
            format!("expected header {:?}, found {:?}", want.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

/// Writes `scans.csv`, `powers.csv`, `link.csv`, `objects.json` and
/// `config.json` into `dir`.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join(SCANS_CSV);
    let mut w = csv_writer(&path)?;
    let err = csv_err(&path);
    w.write_record(["t", "angle_rad", "distance_m"]).map_err(&err)?;
    for (t, scan) in traj.scans.iter().enumerate() {
        for p in &scan.points {
            w.write_record([t.to_string(), fmt_f64(p.angle_rad), fmt_f64(p.distance_m)])
                .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(POWERS_CSV);
    let mut w = csv_writer(&path)?;
    let err = csv_err(&path);
    let m = traj.powers.first().map_or(0, |p| p.powers.len());
    let mut header = vec!["t".to_string()];
    header.extend((0..m).map(|i| format!("p_{i}")));
    w.write_record(&header).map_err(&err)?;
    for (t, pv) in traj.powers.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(pv.powers.iter().map(|&p| fmt_f64(p)));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join(LINK_CSV);
    let mut w = csv_writer(&path)?;
    let err = csv_err(&path);
    w.write_record(["t", "x"]).map_err(&err)?;
    for (t, x) in traj.link_status.iter().enumerate() {
        w.write_record([t.to_string(), x.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    write_json(&dir.join(OBJECTS_JSON), &traj.objects)?;
    write_json(&dir.join(CONFIG_JSON), &traj.config)
}

/// Reads a directory written by [`write_trajectory`]. Point provenance is
/// not stored, so `sources` comes back empty.
pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let config: ScenarioConfig = read_json(&dir.join(CONFIG_JSON))?;
    let objects: Vec<MovingObject> = read_json(&dir.join(OBJECTS_JSON))?;

    let path = dir.join(LINK_CSV);
    let mut r = csv_reader(&path)?;
    expect_header(&path, &mut r, &["t", "x"])?;
    let mut link_status = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&path))?;
        let t: usize = field(&path, &rec, 0)?;
        let x: u8 = field(&path, &rec, 1)?;
        if t != link_status.len() || x > 1 {
            return Err(Error::parse(&path, format!("line {}: bad row", line_of(&rec))));
        }
        link_status.push(x);
    }
    let n = link_status.len();

    let path = dir.join(SCANS_CSV);
    let mut r = csv_reader(&path)?;
    expect_header(&path, &mut r, &["t", "angle_rad", "distance_m"])?;
    let mut scans: Vec<LidarScan> = (0..n)
        .map(|instance| LidarScan {
            instance,
            points: Vec::new(),
        })
        .collect();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&path))?;
        let t: usize = field(&path, &rec, 0)?;
        let scan = scans.get_mut(t).ok_or_else(|| {
            Error::parse(&path, format!("line {}: instance {t} beyond link trace", line_of(&rec)))
        })?;
        scan.points
            .push(LidarPoint::new(field(&path, &rec, 1)?, field(&path, &rec, 2)?));
    }

    let path = dir.join(POWERS_CSV);
    let mut r = csv_reader(&path)?;
    let m = r.headers().map_err(csv_err(&path))?.len().saturating_sub(1);
    let mut powers = Vec::with_capacity(n);
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&path))?;
        let t: usize = field(&path, &rec, 0)?;
        if t != powers.len() {
            return Err(Error::parse(&path, format!("line {}: instance out of order", line_of(&rec))));
        }
        let row = (1..=m).map(|i| field(&path, &rec, i)).collect::<Result<Vec<f64>>>()?;
        powers.push(PowerVector { powers: row });
    }
    if powers.len() != n {
        return Err(Error::parse(&path, format!("{} rows for {n} instances", powers.len())));
    }

    Ok(Trajectory {
        config,
        scans,
        powers,
        link_status,
        objects,
        sources: Vec::new(),
    })
}

/// Dictionary metadata stored next to `dict.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictMeta {
    pub scr: ScrConfig,
    pub source_frame_count: usize,
    pub entries: usize,
}

pub fn write_dictionary(dir: &Path, dict: &StaticDictionary, scr: &ScrConfig) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join(DICT_CSV);
    let mut w = csv_writer(&path)?;
    let err = csv_err(&path);
    w.write_record(["q", "q_d"]).map_err(&err)?;
    for (q, qd) in &dict.entries {
        w.write_record([q.to_string(), qd.to_string()]).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(
        &dir.join(DICT_META_JSON),
        &DictMeta {
            scr: scr.clone(),
            source_frame_count: dict.source_frame_count,
            entries: dict.len(),
        },
    )
}

pub fn read_dictionary(dir: &Path) -> Result<(StaticDictionary, ScrConfig)> {
    let meta: DictMeta = read_json(&dir.join(DICT_META_JSON))?;
    meta.scr.validate()?;
    let path = dir.join(DICT_CSV);
    let mut r = csv_reader(&path)?;
    expect_header(&path, &mut r, &["q", "q_d"])?;
    let mut dict = StaticDictionary::empty(&meta.scr);
    dict.source_frame_count = meta.source_frame_count;
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&path))?;
        let q: usize = field(&path, &rec, 0)?;
        let qd: usize = field(&path, &rec, 1)?;
        if q >= meta.scr.angle_levels || qd >= meta.scr.distance_levels {
            return Err(Error::parse(&path, format!("line {}: level out of range", line_of(&rec))));
        }
        dict.entries.insert((q, qd));
    }
    if dict.len() != meta.entries {
        return Err(Error::parse(&path, format!("{} entries, metadata says {}", dict.len(), meta.entries)));
    }
    Ok((dict, meta.scr))
}

pub fn write_prep_scans(path: &Path, scans: &[QuantizedScan]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["t", "q", "q_d", "angle_rad", "distance_m"]).map_err(&err)?;
    for scan in scans {
        for e in &scan.entries {
            w.write_record([
                scan.instance.to_string(),
                e.level.to_string(),
                e.distance_level.to_string(),
                fmt_f64(e.angle_rad),
                fmt_f64(e.distance_m),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `len` preprocessed scans; instances without rows are empty.
pub fn read_prep_scans(path: &Path, len: usize, scr: &ScrConfig) -> Result<Vec<QuantizedScan>> {
    let mut r = csv_reader(path)?;
    expect_header(path, &mut r, &["t", "q", "q_d", "angle_rad", "distance_m"])?;
    let mut scans: Vec<QuantizedScan> = (0..len)
        .map(|instance| QuantizedScan {
            instance,
            angle_levels: scr.angle_levels,
            distance_levels: scr.distance_levels,
            entries: Vec::new(),
        })
        .collect();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let t: usize = field(path, &rec, 0)?;
        let entry = QuantizedEntry {
            level: field(path, &rec, 1)?,
            distance_level: field(path, &rec, 2)?,
            angle_rad: field(path, &rec, 3)?,
            distance_m: field(path, &rec, 4)?,
        };
        let scan = scans.get_mut(t).ok_or_else(|| {
            Error::parse(path, format!("line {}: instance {t} beyond trajectory", line_of(&rec)))
        })?;
        if entry.level >= scr.angle_levels
            || scan.entries.last().is_some_and(|prev| prev.level >= entry.level)
        {
            return Err(Error::parse(path, format!("line {}: angle levels out of order", line_of(&rec))));
        }
        scan.entries.push(entry);
    }
    Ok(scans)
}

pub fn write_windows(dir: &Path, windows: &[ObservationWindow], manifest: &DatasetManifest) -> Result<()> {
    create_dir(dir)?;
    let path = dir.join(WINDOWS_JSONL);
    let mut w = create(&path)?;
    for window in windows {
        serde_json::to_writer(&mut w, window)
            .map_err(|e| Error::Internal(format!("serializing window {}: {e}", window.id)))?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join(MANIFEST_JSON), manifest)
}

/// Reads `windows.jsonl` and checks every window against its labels'
/// consistency rule and the manifest's shape.
pub fn read_windows(dir: &Path) -> Result<(Vec<ObservationWindow>, DatasetManifest)> {
    let manifest: DatasetManifest = read_json(&dir.join(MANIFEST_JSON))?;
    let path = dir.join(WINDOWS_JSONL);
    let mut windows = Vec::new();
    for (i, line) in open(&path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let w: ObservationWindow = serde_json::from_str(&line)
            .map_err(|e| Error::parse(&path, format!("line {}: {e}", i + 1)))?;
        let shape_ok = w.lidar.len() == manifest.window.obs_len
            && w.power.len() == manifest.window.obs_len
            && w.lidar.iter().all(|r| r.len() == manifest.lidar_width)
            && w.power.iter().all(|r| r.len() == manifest.num_beams);
        if !shape_ok {
            return Err(Error::parse(&path, format!("line {}: window shape differs from manifest", i + 1)));
        }
        if !w.labels.is_consistent() {
            return Err(Error::parse(&path, format!("line {}: inconsistent labels", i + 1)));
        }
        windows.push(w);
    }
    if windows.len() != manifest.total {
        return Err(Error::parse(&path, format!("{} windows, manifest says {}", windows.len(), manifest.total)));
    }
    Ok((windows, manifest))
}

pub fn write_params(path: &Path, params: &BaselineParams) -> Result<()> {
    write_json(path, params)
}

pub fn read_params(path: &Path) -> Result<BaselineParams> {
    read_json(path)
}

pub fn write_preds(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["window_id", "problem", "prediction"]).map_err(&err)?;
    for p in preds {
        w.write_record([p.window_id.to_string(), p.problem.to_string(), fmt_f64_exact(p.prediction)])
            .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_preds(path: &Path) -> Result<Vec<Prediction>> {
    let mut r = csv_reader(path)?;
    expect_header(path, &mut r, &["window_id", "problem", "prediction"])?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let code: u8 = field(path, &rec, 1)?;
        let problem = Problem::try_from(code)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", line_of(&rec))))?;
        let prediction: f64 = field(path, &rec, 2)?;
        if !prediction.is_finite() {
            return Err(Error::parse(path, format!("line {}: non-finite prediction", line_of(&rec))));
        }
        out.push(Prediction {
            window_id: field(path, &rec, 0)?,
            problem,
            prediction,
        });
    }
    Ok(out)
}

/// Files of a directory, sorted, relative to it.
pub fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).expect("walked below dir").to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}
