//! Per-region color traces and their line-oriented text format.
//!
//! ```text
//! subject=<id> label=<0|1> fps=<float> n=<int> m=<int> frames=<int>
//! r1 g1 b1 r2 g2 b2 ...        (one line per frame, n face then m bg regions)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::MstMapError;

/// Sample class. Bonafide is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Mask = 0,
    Bonafide = 1,
}

impl Label {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Mask),
            1 => Some(Label::Bonafide),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn target(self) -> f64 {
        self as u8 as f64
    }
}

/// Mean RGB per frame for each face and background region of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionTraceSet {
    pub subject_id: String,
    pub label: Label,
    pub fps: f64,
    /// `face_traces[region][frame]` = mean (R, G, B).
    pub face_traces: Vec<Vec<[f64; 3]>>,
    pub bg_traces: Vec<Vec<[f64; 3]>>,
}

impl RegionTraceSet {
    pub fn frames(&self) -> usize {
        self.face_traces.first().map_or(0, Vec::len)
    }

    pub fn face_regions(&self) -> usize {
        self.face_traces.len()
    }

    pub fn bg_regions(&self) -> usize {
        self.bg_traces.len()
    }

    pub fn validate(&self) -> Result<(), MstMapError> {
        if self.face_traces.is_empty() {
            return Err(MstMapError::EmptyFaceRegions);
        }
        if self.subject_id.is_empty() || self.subject_id.chars().any(char::is_whitespace) {
            return Err(MstMapError::InvalidTrace(format!("subject id {:?} must be non-empty without whitespace", self.subject_id)));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(MstMapError::InvalidTrace(format!("fps must be positive, got {}", self.fps)));
        }
        let frames = self.frames();
        for (kind, traces) in [("face", &self.face_traces), ("bg", &self.bg_traces)] {
            for (r, trace) in traces.iter().enumerate() {
                if trace.len() != frames {
                    return Err(MstMapError::InvalidTrace(format!(
                        "{kind} region {r} has {} frames, expected {frames}",
                        trace.len()
                    )));
                }
                if trace.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(MstMapError::InvalidTrace(format!("{kind} region {r} has negative or non-finite values")));
                }
            }
        }
        Ok(())
    }

    /// Linearly interpolates every trace onto `target_frames` uniform samples
    /// spanning the original duration. The result is tagged `target_fps`.
    pub fn resample(&self, target_fps: f64, target_frames: usize) -> Result<Self, MstMapError> {
        let frames = self.frames();
        if frames < 2 || target_frames < 2 {
            return Err(MstMapError::TooFewFrames(frames.min(target_frames)));
        }
        let resample_one = |trace: &Vec<[f64; 3]>| -> Vec<[f64; 3]> {
            (0..target_frames)
                .map(|j| {
                    // Integer numerator keeps grid points exact when sizes match.
                    let num = j * (frames - 1);
                    let den = target_frames - 1;
                    let i0 = num / den;
                    if num % den == 0 {
                        return trace[i0];
                    }
                    let frac = (num % den) as f64 / den as f64;
                    let (a, b) = (trace[i0], trace[i0 + 1]);
                    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * frac)
                })
                .collect()
        };
        Ok(Self {
            subject_id: self.subject_id.clone(),
            label: self.label,
            fps: target_fps,
            face_traces: self.face_traces.iter().map(resample_one).collect(),
            bg_traces: self.bg_traces.iter().map(resample_one).collect(),
        })
    }

    /// Keeps the first `seconds` of the recording.
    pub fn crop_seconds(&self, seconds: f64) -> Result<Self, MstMapError> {
        let keep = (seconds * self.fps).round() as usize;
        if keep < 2 || keep > self.frames() {
            return Err(MstMapError::InvalidTrace(format!(
                "cannot crop {seconds} s from a {:.3} s recording",
                self.frames() as f64 / self.fps
            )));
        }
        let cut = |t: &Vec<Vec<[f64; 3]>>| t.iter().map(|r| r[..keep].to_vec()).collect();
        Ok(Self { face_traces: cut(&self.face_traces), bg_traces: cut(&self.bg_traces), ..self.clone() })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "subject={} label={} fps={} n={} m={} frames={}\n",
            self.subject_id,
            self.label.as_u8(),
            self.fps,
            self.face_regions(),
            self.bg_regions(),
            self.frames()
        );
        for f in 0..self.frames() {
            let mut first = true;
            for trace in self.face_traces.iter().chain(&self.bg_traces) {
                for v in trace[f] {
                    if !first {
                        out.push(' ');
                    }
                    first = false;
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, MstMapError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
        let mut subject = None;
        let mut label = None;
        let mut fps = None;
        let mut n = None;
        let mut m = None;
        let mut frames = None;
        for field in header.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| parse_err(1, &format!("malformed field {field:?}")))?;
            let bad = || parse_err(1, &format!("bad value for {key}: {value:?}"));
            match key {
                "subject" => subject = Some(value.to_string()),
                "label" => label = Some(value.parse::<u8>().ok().and_then(Label::from_u8).ok_or_else(bad)?),
                "fps" => fps = Some(value.parse::<f64>().map_err(|_| bad())?),
                "n" => n = Some(value.parse::<usize>().map_err(|_| bad())?),
                "m" => m = Some(value.parse::<usize>().map_err(|_| bad())?),
                "frames" => frames = Some(value.parse::<usize>().map_err(|_| bad())?),
                _ => return Err(parse_err(1, &format!("unknown header key {key:?}"))),
            }
        }
        let missing = |k: &str| parse_err(1, &format!("missing header key {k:?}"));
        let subject = subject.ok_or_else(|| missing("subject"))?;
        let label = label.ok_or_else(|| missing("label"))?;
        let fps = fps.ok_or_else(|| missing("fps"))?;
        let n = n.ok_or_else(|| missing("n"))?;
        let m = m.ok_or_else(|| missing("m"))?;
        let frames = frames.ok_or_else(|| missing("frames"))?;
        if n == 0 {
            return Err(MstMapError::EmptyFaceRegions);
        }

        let width = 3 * (n + m);
        let mut face = vec![Vec::with_capacity(frames); n];
        let mut bg = vec![Vec::with_capacity(frames); m];
        let mut seen = 0;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            if seen == frames {
                return Err(parse_err(lineno, &format!("more than {frames} frame lines")));
            }
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>().map_err(|_| parse_err(lineno, &format!("not a number: {tok:?}"))))
                .collect::<Result<_, _>>()?;
            if values.len() != width {
                return Err(parse_err(lineno, &format!("expected {width} values, found {}", values.len())));
            }
            for (r, chunk) in values.chunks(3).enumerate() {
                let rgb = [chunk[0], chunk[1], chunk[2]];
                if r < n {
                    face[r].push(rgb);
                } else {
                    bg[r - n].push(rgb);
                }
            }
            seen += 1;
        }
        if seen != frames {
            return Err(parse_err(text.lines().count(), &format!("expected {frames} frame lines, found {seen}")));
        }
        let set = Self { subject_id: subject, label, fps, face_traces: face, bg_traces: bg };
        set.validate()?;
        Ok(set)
    }

    pub fn read(path: &Path) -> Result<Self, MstMapError> {
        let text = std::fs::read_to_string(path).map_err(|e| MstMapError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<(), MstMapError> {
        std::fs::write(path, self.to_text()).map_err(|e| MstMapError::io(path, e))
    }
}

fn parse_err(line: usize, msg: &str) -> MstMapError {
    MstMapError::Parse { line, message: msg.to_string() }
}
