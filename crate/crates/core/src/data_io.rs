//! Datasets of labelled spike tensors.
//!
//! * event-camera CSV ingestion and binning into `(pixels x steps)` tensors,
//! * deterministic target spike trains for class labels,
//! * the sparse JSONL dataset format,
//! * stratified train/test splits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike::SpikeTensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledExample {
    pub label: usize,
    pub spikes: SpikeTensor,
}

/// One sensor event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub timestamp_us: u64,
    pub x: u32,
    pub y: u32,
    /// `+1` or `-1`.
    pub polarity: i8,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityMode {
    #[default]
    Merge,
    PositiveOnly,
}

/// Rectangle of retained sensor pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crop {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub sensor_width: u32,
    pub sensor_height: u32,
    /// Whole sensor when absent.
    #[serde(default)]
    pub crop: Option<Crop>,
    /// Side of the square pixel block pooled into one input signal.
    #[serde(default = "one")]
    pub downsample: u32,
    pub num_steps: usize,
    pub window_us: u64,
    #[serde(default)]
    pub polarity: PolarityMode,
    /// Timestamp of the start of step 1; events before it are dropped.
    #[serde(default)]
    pub t0_us: u64,
}

fn one() -> u32 {
    1
}

impl PreprocessConfig {
    fn crop(&self) -> Crop {
        self.crop.unwrap_or(Crop {
            x0: 0,
            y0: 0,
            width: self.sensor_width,
            height: self.sensor_height,
        })
    }

    /// Grid size `(columns, rows)` after crop and downsampling.
    pub fn grid(&self) -> (u32, u32) {
        let c = self.crop();
        (
            c.width.div_ceil(self.downsample),
            c.height.div_ceil(self.downsample),
        )
    }

    pub fn num_signals(&self) -> usize {
        let (w, h) = self.grid();
        w as usize * h as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err(Error::config(
                "preprocess.sensor_width",
                "sensor must be at least 1x1",
            ));
        }
        if self.downsample == 0 {
            return Err(Error::config("preprocess.downsample", "must be >= 1"));
        }
        if self.num_steps == 0 {
            return Err(Error::config("preprocess.num_steps", "must be >= 1"));
        }
        if self.window_us == 0 {
            return Err(Error::config("preprocess.window_us", "must be >= 1"));
        }
        let c = self.crop();
        if c.width == 0
            || c.height == 0
            || u64::from(c.x0) + u64::from(c.width) > u64::from(self.sensor_width)
            || u64::from(c.y0) + u64::from(c.height) > u64::from(self.sensor_height)
        {
            return Err(Error::config(
                "preprocess.crop",
                "crop must be non-empty and inside the sensor",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Preprocessed {
    pub spikes: SpikeTensor,
    /// Set when no event survived cropping and time truncation.
    pub empty: bool,
}

/// Bins time-sorted events into a binary `(pixels x steps)` tensor.
///
/// Signal index is `row * columns + column` of the downsampled grid. Events
/// outside the crop, before `t0_us`, or at or after `t0_us + T * window_us`
/// are ignored.
pub fn preprocess_events(events: &[EventRecord], cfg: &PreprocessConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    let (cols, _) = cfg.grid();
    let crop = cfg.crop();
    let mut spikes = SpikeTensor::zeros(cfg.num_signals(), cfg.num_steps)?;
    let end = cfg
        .t0_us
        .saturating_add(cfg.window_us.saturating_mul(cfg.num_steps as u64));
    let mut previous = 0u64;
    let mut any = false;
    for (n, e) in events.iter().enumerate() {
        if e.timestamp_us < previous {
            return Err(Error::Parameter(format!(
                "event {n} has timestamp {} earlier than its predecessor {previous}",
                e.timestamp_us
            )));
        }
        previous = e.timestamp_us;
        if e.x >= cfg.sensor_width || e.y >= cfg.sensor_height {
            return Err(Error::Parameter(format!(
                "event {n} at ({}, {}) lies outside the {}x{} sensor",
                e.x, e.y, cfg.sensor_width, cfg.sensor_height
            )));
        }
        if e.timestamp_us < cfg.t0_us || e.timestamp_us >= end {
            continue;
        }
        if cfg.polarity == PolarityMode::PositiveOnly && e.polarity <= 0 {
            continue;
        }
        if e.x < crop.x0
            || e.x >= crop.x0 + crop.width
            || e.y < crop.y0
            || e.y >= crop.y0 + crop.height
        {
            continue;
        }
        let gx = (e.x - crop.x0) / cfg.downsample;
        let gy = (e.y - crop.y0) / cfg.downsample;
        let step = ((e.timestamp_us - cfg.t0_us) / cfg.window_us) as usize;
        spikes.set((gy * cols + gx) as usize, step, 1)?;
        any = true;
    }
    Ok(Preprocessed {
        spikes,
        empty: !any,
    })
}

/// Reads `timestamp_us,x,y,polarity` rows. A header row is detected by a
/// non-numeric first field. Polarity accepts `1`/`-1`, with `0` read as `-1`.
pub fn read_events_csv(path: &Path) -> Result<Vec<EventRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_events(file, path)
}

fn read_events<R: Read>(reader: R, path: &Path) -> Result<Vec<EventRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = row.position().map_or(idx as u64 + 1, |p| p.line()) as usize;
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if idx == 0 && row.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if row.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", row.len())));
        }
        let num = |i: usize, name: &str| -> Result<i64> {
            row[i]
                .parse::<i64>()
                .map_err(|_| bad(format!("{name} '{}' is not an integer", &row[i])))
        };
        let (ts, x, y, p) = (
            num(0, "timestamp")?,
            num(1, "x")?,
            num(2, "y")?,
            num(3, "polarity")?,
        );
        if ts < 0 || x < 0 || y < 0 || x > i64::from(u32::MAX) || y > i64::from(u32::MAX) {
            return Err(bad("timestamp and coordinates must be non-negative".into()));
        }
        let polarity = match p {
            1 => 1,
            -1 | 0 => -1,
            other => return Err(bad(format!("polarity must be 1, -1 or 0, got {other}"))),
        };
        out.push(EventRecord {
            timestamp_us: ts as u64,
            x: x as u32,
            y: y as u32,
            polarity,
        });
    }
    Ok(out)
}

/// Target for class `label`: that neuron spikes at steps `1, 1 + p, 1 + 2p, ...`
/// with `p = floor(1 / rate)`; every other neuron is silent.
pub fn target_spike_train(
    label: usize,
    num_outputs: usize,
    num_steps: usize,
    rate: f64,
) -> Result<SpikeTensor> {
    delayed_target_spike_train(label, num_outputs, num_steps, rate, 0)
}

/// [`target_spike_train`] silent for the first `delay` steps, then periodic
/// from step `delay + 1`.
pub fn delayed_target_spike_train(
    label: usize,
    num_outputs: usize,
    num_steps: usize,
    rate: f64,
    delay: usize,
) -> Result<SpikeTensor> {
    if label >= num_outputs {
        return Err(Error::Parameter(format!(
            "label {label} out of range for {num_outputs} outputs"
        )));
    }
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Parameter(format!(
            "target rate must lie in (0, 1], got {rate}"
        )));
    }
    let period = (1.0 / rate).floor() as usize;
    let mut v = SpikeTensor::zeros(num_outputs, num_steps)?;
    for t in (delay..num_steps).step_by(period) {
        v.set(label, t, 1)?;
    }
    Ok(v)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    label: usize,
    shape: [usize; 2],
    spikes: Vec<[usize; 2]>,
}

fn to_record(example: &LabeledExample) -> Record {
    Record {
        label: example.label,
        shape: [example.spikes.num_signals(), example.spikes.num_steps()],
        spikes: example
            .spikes
            .coordinates()
            .into_iter()
            .map(|(j, t)| [j, t])
            .collect(),
    }
}

fn from_record(rec: Record) -> std::result::Result<LabeledExample, String> {
    let [d, t] = rec.shape;
    let mut spikes = SpikeTensor::zeros(d, t).map_err(|e| e.to_string())?;
    for [j, s] in rec.spikes {
        if j >= d || s >= t {
            return Err(format!("spike ({j}, {s}) outside shape [{d}, {t}]"));
        }
        spikes.set(j, s, 1).map_err(|e| e.to_string())?;
    }
    Ok(LabeledExample {
        label: rec.label,
        spikes,
    })
}

pub fn write_dataset<W: Write>(mut writer: W, data: &[LabeledExample]) -> std::io::Result<()> {
    for ex in data {
        serde_json::to_writer(&mut writer, &to_record(ex))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_dataset(path: &Path, data: &[LabeledExample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(BufWriter::new(file), data).map_err(|e| Error::io(path, e))
}

/// Parses JSONL records. Blank lines are skipped; errors carry the 1-based line.
pub fn read_dataset<R: BufRead>(reader: R, path: &Path) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| Error::Format {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        out.push(from_record(rec).map_err(fail)?);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<LabeledExample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), path)
}

/// Common `(signals, steps)` of a dataset; errors if examples disagree.
pub fn dataset_shape(data: &[LabeledExample]) -> Result<Option<(usize, usize)>> {
    let Some(first) = data.first() else {
        return Ok(None);
    };
    let shape = first.spikes.shape();
    if let Some((i, ex)) = data
        .iter()
        .enumerate()
        .find(|(_, ex)| ex.spikes.shape() != shape)
    {
        return Err(Error::Parameter(format!(
            "example {i} has shape {:?}, expected {shape:?}",
            ex.spikes.shape()
        )));
    }
    Ok(Some(shape))
}

/// Per-class split keeping `round(n * fraction)` examples of each class for
/// training, clamped so both sides get at least one. Original order is kept
/// within each side.
pub fn split_dataset(
    data: &[LabeledExample],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(
            "train_fraction",
            format!("must lie in (0, 1), got {train_fraction}"),
        ));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, ex) in data.iter().enumerate() {
        by_class.entry(ex.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; data.len()];
    for (label, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(Error::Parameter(format!(
                "class {label} has {} example(s); a split needs at least 2",
                idx.len()
            )));
        }
        let n = idx.len();
        let k = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        idx.shuffle(&mut rng);
        for &i in &idx[..k] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = data.iter().cloned().zip(in_train).partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(e, _)| e).collect(),
        test.into_iter().map(|(e, _)| e).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig {
            sensor_width: 4,
            sensor_height: 4,
            crop: None,
            downsample: 1,
            num_steps: 5,
            window_us: 100,
            polarity: PolarityMode::Merge,
            t0_us: 0,
        }
    }

    fn ev(ts: u64, x: u32, y: u32, p: i8) -> EventRecord {
        EventRecord {
            timestamp_us: ts,
            x,
            y,
            polarity: p,
        }
    }

    #[test]
    fn preprocess_examples() {
        let out = preprocess_events(&[], &cfg()).unwrap();
        assert!(out.empty);
        assert_eq!(out.spikes.count(), 0);

        let out = preprocess_events(&[ev(250, 0, 0, -1)], &cfg()).unwrap();
        assert!(!out.empty);
        assert_eq!(out.spikes.coordinates(), vec![(0, 2)]);

        let out = preprocess_events(&[ev(210, 1, 2, 1), ev(260, 1, 2, -1)], &cfg()).unwrap();
        assert_eq!(out.spikes.coordinates(), vec![(9, 2)]);
    }

    #[test]
    fn preprocess_filters() {
        let mut c = cfg();
        c.polarity = PolarityMode::PositiveOnly;
        let out = preprocess_events(&[ev(10, 0, 0, -1), ev(20, 1, 0, 1)], &c).unwrap();
        assert_eq!(out.spikes.coordinates(), vec![(1, 0)]);

        c.crop = Some(Crop {
            x0: 2,
            y0: 2,
            width: 2,
            height: 2,
        });
        c.downsample = 2;
        assert_eq!(c.num_signals(), 1);
        let out = preprocess_events(&[ev(10, 3, 3, 1), ev(20, 0, 0, 1)], &c).unwrap();
        assert_eq!(out.spikes.coordinates(), vec![(0, 0)]);

        assert!(preprocess_events(&[ev(20, 0, 0, 1), ev(10, 0, 0, 1)], &cfg()).is_err());
        assert!(preprocess_events(&[ev(20, 9, 0, 1)], &cfg()).is_err());
    }

    #[test]
    fn csv_events_with_and_without_header() {
        let p = Path::new("mem.csv");
        let a = read_events(
            "timestamp_us,x,y,polarity\n5,1,2,1\n7,0,0,-1\n".as_bytes(),
            p,
        )
        .unwrap();
        let b = read_events("5,1,2,1\n7,0,0,0\n".as_bytes(), p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1], ev(7, 0, 0, -1));
        let err = read_events("5,1,2,1\n7,0,x,1\n".as_bytes(), p).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
    }

    #[test]
    fn target_examples() {
        let v = target_spike_train(0, 2, 4, 1.0).unwrap();
        assert_eq!(v.row(0), &[1, 1, 1, 1]);
        assert_eq!(v.row(1), &[0, 0, 0, 0]);
        let v = target_spike_train(1, 2, 4, 0.5).unwrap();
        assert_eq!(v.row(1), &[1, 0, 1, 0]);
        let v = target_spike_train(0, 1, 7, 0.3).unwrap();
        assert_eq!(v.row(0), &[1, 0, 0, 1, 0, 0, 1]);
        assert!(target_spike_train(2, 2, 4, 1.0).is_err());
        assert!(target_spike_train(0, 2, 4, 0.0).is_err());
    }

    #[test]
    fn dataset_format_errors() {
        let p = Path::new("mem.jsonl");
        assert!(read_dataset("".as_bytes(), p).unwrap().is_empty());
        let good = r#"{"label":1,"shape":[2,3],"spikes":[[0,2],[1,0]]}"#;
        let data = read_dataset(format!("{good}\n\n").as_bytes(), p).unwrap();
        assert_eq!(data[0].spikes.coordinates(), vec![(0, 2), (1, 0)]);

        let bad = r#"{"label":1,"shape":[2,3],"spikes":[[0,3]]}"#;
        let err = read_dataset(format!("{good}\n{bad}\n").as_bytes(), p).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
        let err = read_dataset("{\"label\":1}\n".as_bytes(), p).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }

    #[test]
    fn split_examples() {
        let mk = |label| LabeledExample {
            label,
            spikes: SpikeTensor::zeros(1, 1).unwrap(),
        };
        let data: Vec<_> = (0..20).map(|i| mk(i % 2)).collect();
        let (tr, te) = split_dataset(&data, 0.5, 3).unwrap();
        for c in 0..2 {
            assert_eq!(tr.iter().filter(|e| e.label == c).count(), 5);
            assert_eq!(te.iter().filter(|e| e.label == c).count(), 5);
        }
        assert_eq!(split_dataset(&data, 0.5, 3).unwrap(), (tr, te));
        assert!(split_dataset(&[mk(0), mk(0), mk(1)], 0.5, 0).is_err());
        assert!(split_dataset(&data, 1.0, 0).is_err());
    }
}
