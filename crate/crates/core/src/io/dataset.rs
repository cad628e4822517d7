//! Line-oriented keyframe dataset format.
//!
//! ```text
//! vocovar-dataset v1
//! # pixel_scale 1
//! # source simulator
//! K fx fy cx cy w h
//! F id qw qx qy qz tx ty tz
//! S frame u v d
//! M i j sample_idx u* v* [s11 s12 s22]
//! ```
//!
//! `F` poses are camera-to-world. `S` records belong to the frame they name
//! and are indexed in file order within that frame. Lines starting with `#`
//! are comments; `# pixel_scale` and `# source` carry dataset metadata.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix2;

use crate::camera::{PinholeIntrinsics, Pixel};
use crate::error::{Error, Result};
use crate::factors::NoiseModel;
use crate::liegroup::Pose;

pub const HEADER: &str = "vocovar-dataset v1";
const MAGIC: &str = "vocovar-dataset";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelSample {
    pub pixel: Pixel,
    pub inv_depth: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub id: usize,
    pub pose: Pose,
    pub samples: Vec<PixelSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowMeasurement {
    pub frame_i: usize,
    pub frame_j: usize,
    pub sample: usize,
    pub target: Pixel,
    /// Flow covariance in pixels²; one pixel isotropic when absent.
    pub sigma: Option<Matrix2<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub pixel_scale: f64,
    pub source: String,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self { pixel_scale: 1.0, source: "unknown".into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeDataset {
    pub intrinsics: PinholeIntrinsics,
    pub keyframes: Vec<Keyframe>,
    pub measurements: Vec<FlowMeasurement>,
    pub meta: DatasetMeta,
}

impl KeyframeDataset {
    pub fn num_samples(&self) -> usize {
        self.keyframes.iter().map(|k| k.samples.len()).sum()
    }

    /// Keyframes `0..=last` and the measurements among them.
    pub fn prefix(&self, last: usize) -> KeyframeDataset {
        KeyframeDataset {
            intrinsics: self.intrinsics,
            keyframes: self.keyframes.iter().take(last + 1).cloned().collect(),
            measurements: self
                .measurements
                .iter()
                .filter(|m| m.frame_i <= last && m.frame_j <= last)
                .cloned()
                .collect(),
            meta: self.meta.clone(),
        }
    }

    /// Checks every invariant of the format. Diagnostics name the record.
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.keyframes.is_empty() {
            return Err(Error::Validation("dataset has no keyframes".into()));
        }
        for (idx, kf) in self.keyframes.iter().enumerate() {
            if kf.id != idx {
                return Err(Error::Validation(format!(
                    "keyframe ids must be dense 0..n-1; found id {} at position {idx}",
                    kf.id
                )));
            }
            for (s, sample) in kf.samples.iter().enumerate() {
                validate_sample(sample).map_err(|m| Error::Validation(format!("keyframe {idx} sample {s}: {m}")))?;
            }
        }
        for (idx, m) in self.measurements.iter().enumerate() {
            self.validate_measurement(m).map_err(|msg| {
                Error::Validation(format!("measurement #{idx} (M {} {} {}): {msg}", m.frame_i, m.frame_j, m.sample))
            })?;
        }
        if !(self.meta.pixel_scale.is_finite() && self.meta.pixel_scale > 0.0) {
            return Err(Error::Validation(format!("pixel_scale {} must be positive", self.meta.pixel_scale)));
        }
        Ok(())
    }

    fn validate_measurement(&self, m: &FlowMeasurement) -> std::result::Result<(), String> {
        let n = self.keyframes.len();
        if m.frame_i >= n || m.frame_j >= n {
            return Err(format!("references keyframe {} but the dataset has {n}", m.frame_i.max(m.frame_j)));
        }
        if m.frame_i == m.frame_j {
            return Err("source and target keyframe are the same".into());
        }
        let count = self.keyframes[m.frame_i].samples.len();
        if m.sample >= count {
            return Err(format!("sample index {} out of range (keyframe {} has {count})", m.sample, m.frame_i));
        }
        if !(m.target.u.is_finite() && m.target.v.is_finite()) {
            return Err("target pixel is not finite".into());
        }
        if let Some(s) = m.sigma {
            NoiseModel::new(s).map_err(|_| "sigma is not symmetric positive definite".to_string())?;
        }
        Ok(())
    }
}

fn validate_sample(s: &PixelSample) -> std::result::Result<(), String> {
    if !(s.pixel.u.is_finite() && s.pixel.v.is_finite()) {
        return Err("pixel is not finite".into());
    }
    if !(s.inv_depth.is_finite() && s.inv_depth > 0.0) {
        return Err(format!("inverse depth {} must be positive", s.inv_depth));
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<KeyframeDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_dataset(&text).map_err(|e| match e {
        Error::Parse { path: None, line, message } => Error::Parse { path: Some(path.to_path_buf()), line, message },
        other => other,
    })
}

pub fn save_dataset(ds: &KeyframeDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_dataset(ds)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

struct LineParser<'a> {
    line: usize,
    fields: std::str::SplitWhitespace<'a>,
}

impl<'a> LineParser<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { path: None, line: self.line, message: message.into() }
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let tok = self.fields.next().ok_or_else(|| self.err(format!("missing field {what}")))?;
        let v: f64 = tok.parse().map_err(|_| self.err(format!("field {what}: '{tok}' is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(format!("field {what} is not finite")));
        }
        Ok(v)
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.fields.next().ok_or_else(|| self.err(format!("missing field {what}")))?;
        tok.parse().map_err(|_| self.err(format!("field {what}: '{tok}' is not a non-negative integer")))
    }

    fn rest(&mut self) -> Vec<&'a str> {
        self.fields.by_ref().collect()
    }

    fn finish(&mut self) -> Result<()> {
        match self.fields.next() {
            None => Ok(()),
            Some(t) => Err(self.err(format!("unexpected trailing field '{t}'"))),
        }
    }
}

pub fn parse_dataset(text: &str) -> Result<KeyframeDataset> {
    let perr = |line: usize, message: String| Error::Parse { path: None, line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    let (hline, header) = lines.by_ref().find(|(_, l)| !l.is_empty()).ok_or_else(|| perr(1, "empty file".into()))?;
    if header != HEADER {
        let msg = match header.strip_prefix(MAGIC) {
            Some(version) => format!("unsupported dataset version '{}' (expected v1)", version.trim()),
            None => format!("missing header '{HEADER}'"),
        };
        return Err(perr(hline, msg));
    }

    let mut intrinsics: Option<PinholeIntrinsics> = None;
    let mut keyframes: Vec<Keyframe> = Vec::new();
    let mut measurements = Vec::new();
    let mut meta = DatasetMeta::default();

    for (line, raw) in lines {
        if raw.is_empty() {
            continue;
        }
        if let Some(comment) = raw.strip_prefix('#') {
            let mut parts = comment.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("pixel_scale"), Some(v)) => {
                    meta.pixel_scale =
                        v.parse().map_err(|_| perr(line, format!("pixel_scale '{v}' is not a number")))?;
                }
                (Some("source"), Some(v)) => meta.source = v.to_string(),
                _ => {}
            }
            continue;
        }
        let mut fields = raw.split_whitespace();
        let tag = fields.next().unwrap_or_default();
        let mut p = LineParser { line, fields };
        match tag {
            "K" => {
                if intrinsics.is_some() {
                    return Err(p.err("duplicate K record"));
                }
                let k = PinholeIntrinsics {
                    fx: p.f64("fx")?,
                    fy: p.f64("fy")?,
                    cx: p.f64("cx")?,
                    cy: p.f64("cy")?,
                    width: p.f64("w")?,
                    height: p.f64("h")?,
                };
                p.finish()?;
                k.validate().map_err(|e| p.err(e.to_string()))?;
                intrinsics = Some(k);
            }
            "F" => {
                let id = p.usize("id")?;
                let mut a = [0.0; 7];
                for (v, name) in a.iter_mut().zip(["qw", "qx", "qy", "qz", "tx", "ty", "tz"]) {
                    *v = p.f64(name)?;
                }
                p.finish()?;
                if id != keyframes.len() {
                    return Err(p.err(format!("keyframe id {id} out of sequence (expected {})", keyframes.len())));
                }
                let pose = Pose::from_array7(&a).ok_or_else(|| p.err("zero quaternion"))?;
                keyframes.push(Keyframe { id, pose, samples: Vec::new() });
            }
            "S" => {
                let frame = p.usize("frame")?;
                let sample = PixelSample { pixel: Pixel::new(p.f64("u")?, p.f64("v")?), inv_depth: p.f64("d")? };
                p.finish()?;
                validate_sample(&sample).map_err(|m| p.err(m))?;
                let kf = keyframes
                    .get_mut(frame)
                    .ok_or_else(|| p.err(format!("sample references undeclared keyframe {frame}")))?;
                kf.samples.push(sample);
            }
            "M" => {
                let frame_i = p.usize("i")?;
                let frame_j = p.usize("j")?;
                let sample = p.usize("sample_idx")?;
                let target = Pixel::new(p.f64("u*")?, p.f64("v*")?);
                let sigma = match p.rest().as_slice() {
                    [] => None,
                    [a, b, c] => {
                        let parse = |t: &str| -> Result<f64> {
                            t.parse::<f64>().map_err(|_| perr(line, format!("sigma entry '{t}' is not a number")))
                        };
                        let (s11, s12, s22) = (parse(a)?, parse(b)?, parse(c)?);
                        Some(Matrix2::new(s11, s12, s12, s22))
                    }
                    other => {
                        return Err(perr(line, format!("M record takes 0 or 3 sigma entries, got {}", other.len())))
                    }
                };
                measurements.push((line, FlowMeasurement { frame_i, frame_j, sample, target, sigma }));
            }
            other => return Err(p.err(format!("unknown record type '{other}'"))),
        }
    }

    let intrinsics = intrinsics.ok_or_else(|| perr(hline, "missing K record".into()))?;
    let mut ds = KeyframeDataset { intrinsics, keyframes, measurements: Vec::new(), meta };
    if ds.keyframes.is_empty() {
        return Err(perr(hline, "dataset has no keyframes".into()));
    }
    for (line, m) in &measurements {
        ds.validate_measurement(m).map_err(|msg| perr(*line, format!("measurement: {msg}")))?;
    }
    ds.measurements = measurements.into_iter().map(|(_, m)| m).collect();
    ds.validate()?;
    Ok(ds)
}

pub fn format_dataset(ds: &KeyframeDataset) -> String {
    let mut out = String::new();
    let k = &ds.intrinsics;
    // Writing into a String cannot fail.
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "# pixel_scale {}", ds.meta.pixel_scale);
    let _ = writeln!(out, "# source {}", ds.meta.source);
    let _ = writeln!(out, "K {} {} {} {} {} {}", k.fx, k.fy, k.cx, k.cy, k.width, k.height);
    for kf in &ds.keyframes {
        let a = kf.pose.to_array7();
        let _ = writeln!(out, "F {} {} {} {} {} {} {} {}", kf.id, a[0], a[1], a[2], a[3], a[4], a[5], a[6]);
        for s in &kf.samples {
            let _ = writeln!(out, "S {} {} {} {}", kf.id, s.pixel.u, s.pixel.v, s.inv_depth);
        }
    }
    for m in &ds.measurements {
        let _ = write!(out, "M {} {} {} {} {}", m.frame_i, m.frame_j, m.sample, m.target.u, m.target.v);
        if let Some(s) = m.sigma {
            let _ = write!(out, " {} {} {}", s[(0, 0)], s[(0, 1)], s[(1, 1)]);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "vocovar-dataset v1
K 320 320 320 240 640 480
F 0 1 0 0 0 0 0 0
S 0 300 200 0.25
F 1 1 0 0 0 0.1 0 0
M 0 1 0 292 200
";

    #[test]
    fn parses_minimal_file() {
        let ds = parse_dataset(MINIMAL).unwrap();
        assert_eq!(ds.keyframes.len(), 2);
        assert_eq!(ds.num_samples(), 1);
        assert_eq!(ds.measurements.len(), 1);
        assert_eq!(ds.measurements[0].sigma, None);
        assert_eq!(ds.keyframes[1].pose.translation.x, 0.1);
    }

    #[test]
    fn measurement_to_missing_keyframe_names_the_line() {
        let text = MINIMAL.replace("M 0 1 0", "M 0 5 0");
        match parse_dataset(&text) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 6);
                assert!(message.contains("keyframe 5"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_version_and_garbage() {
        let v2 = MINIMAL.replace("v1", "v2");
        assert!(matches!(parse_dataset(&v2), Err(Error::Parse { line: 1, .. })));
        assert!(parse_dataset("hello\n").is_err());
        let bad = MINIMAL.replace("S 0 300 200 0.25", "S 0 300 200 -0.25");
        assert!(matches!(parse_dataset(&bad), Err(Error::Parse { line: 4, .. })));
        let bad = MINIMAL.replace("F 1 ", "F 3 ");
        assert!(matches!(parse_dataset(&bad), Err(Error::Parse { line: 5, .. })));
        let bad = MINIMAL.replace("M 0 1 0 292 200", "M 0 1 0 292 200 1 0");
        assert!(matches!(parse_dataset(&bad), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn sigma_and_meta_round_trip() {
        let text = MINIMAL
            .replace("M 0 1 0 292 200", "M 0 1 0 292 200 2 0.5 3")
            .replace("K 320", "# pixel_scale 8\n# source droid\nK 320");
        let ds = parse_dataset(&text).unwrap();
        assert_eq!(ds.measurements[0].sigma, Some(Matrix2::new(2.0, 0.5, 0.5, 3.0)));
        assert_eq!(ds.meta, DatasetMeta { pixel_scale: 8.0, source: "droid".into() });
        assert_eq!(parse_dataset(&format_dataset(&ds)).unwrap(), ds);
    }

    #[test]
    fn prefix_drops_later_frames() {
        let ds = parse_dataset(MINIMAL).unwrap();
        let p = ds.prefix(0);
        assert_eq!(p.keyframes.len(), 1);
        assert!(p.measurements.is_empty());
    }
}
