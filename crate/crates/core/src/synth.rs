//! Synthetic region traces with a controllable pulse.
//!
//! Bonafide face regions carry a cardiac waveform on top of a skin baseline,
//! a scene-wide illumination drift and sensor noise. Mask face regions are
//! generated the same way with the pulse scaled by `mask_attenuation`.
//! Background regions never carry a pulse and use the same generator path
//! for both classes.
//!
//! Subject `i` (0-based) draws from its own stream seeded with
//! `seed + i`, so subjects can be generated independently.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::mstmap::{Label, MstMapError, RegionTraceSet};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config `{key}`: {message}")]
    InvalidConfig { key: &'static str, message: String },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Trace(#[from] MstMapError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub samples_per_subject_per_class: usize,
    pub fps: f64,
    pub duration_s: f64,
    pub face_regions: usize,
    pub bg_regions: usize,
    /// Beats per minute, inclusive range.
    pub heart_rate_range: (f64, f64),
    /// Peak pulse amplitude in intensity units.
    pub pulse_amplitude: f64,
    /// Pulse multiplier for mask samples.
    pub mask_attenuation: f64,
    pub noise_sigma: f64,
    pub illumination_drift_amplitude: f64,
    /// Max absolute per-region pulse delay, seconds.
    pub region_phase_jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 8,
            samples_per_subject_per_class: 4,
            fps: 30.0,
            duration_s: 10.0,
            face_regions: 6,
            bg_regions: 4,
            heart_rate_range: (48.0, 102.0),
            pulse_amplitude: 1.0,
            mask_attenuation: 0.0,
            noise_sigma: 0.5,
            illumination_drift_amplitude: 1.5,
            region_phase_jitter: 0.05,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn frames(&self) -> usize {
        (self.fps * self.duration_s).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |key: &'static str, message: String| Err(SynthError::InvalidConfig { key, message });
        let (lo, hi) = self.heart_rate_range;
        if !(30.0..=240.0).contains(&lo) || !(30.0..=240.0).contains(&hi) || lo > hi {
            return fail("heart_rate_range", format!("{lo}..{hi} must lie within 30..240 bpm with lo <= hi"));
        }
        if self.subjects == 0 {
            return fail("subjects", "must be at least 1".into());
        }
        if self.samples_per_subject_per_class == 0 {
            return fail("samples_per_subject_per_class", "must be at least 1".into());
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return fail("fps", format!("must be positive, got {}", self.fps));
        }
        if self.frames() < 2 {
            return fail("duration_s", format!("{} s at {} fps gives fewer than 2 frames", self.duration_s, self.fps));
        }
        if self.fps < 2.0 * hi / 60.0 * 2.0 {
            return fail("fps", format!("{} fps cannot represent the second harmonic of {hi} bpm", self.fps));
        }
        if !(1..=crate::mstmap::MAX_REGIONS).contains(&self.face_regions) {
            return fail("face_regions", format!("must be in 1..=16, got {}", self.face_regions));
        }
        if self.bg_regions > crate::mstmap::MAX_REGIONS {
            return fail("bg_regions", format!("must be at most 16, got {}", self.bg_regions));
        }
        for (key, v) in [
            ("pulse_amplitude", self.pulse_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("illumination_drift_amplitude", self.illumination_drift_amplitude),
            ("region_phase_jitter", self.region_phase_jitter),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(key, format!("must be finite and >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.mask_attenuation) {
            return fail("mask_attenuation", format!("must be in [0, 1], got {}", self.mask_attenuation));
        }
        Ok(())
    }
}

/// Peak of `sin x + 0.5 sin 2x`, reached at `x = pi/3`.
const WAVEFORM_PEAK: f64 = 1.299_038_105_676_658; // 3*sqrt(3)/4

/// Unit-peak pulse: fundamental at `hr/60` Hz plus a half-amplitude second
/// harmonic.
pub fn pulse_waveform(t: f64, hr_bpm: f64) -> f64 {
    let x = 2.0 * PI * hr_bpm / 60.0 * t;
    (x.sin() + 0.5 * (2.0 * x).sin()) / WAVEFORM_PEAK
}

/// Relative pulse strength per RGB channel (green dominant).
const PULSE_CHANNEL_GAIN: [f64; 3] = [0.33, 0.77, 0.53];

struct SampleContext<'a> {
    cfg: &'a SynthConfig,
    hr: f64,
    skin: &'a [[f64; 3]],
    wall: &'a [[f64; 3]],
}

fn drift_signal(rng: &mut ChaCha8Rng, amplitude: f64, frames: usize, fps: f64) -> Vec<f64> {
    // Two slow components below the heart-rate band.
    let comps: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| (rng.random_range(0.03..0.3), rng.random_range(0.0..2.0 * PI), rng.random_range(0.5..1.0)))
        .collect();
    let norm: f64 = comps.iter().map(|c| c.2).sum();
    (0..frames)
        .map(|f| {
            let t = f as f64 / fps;
            amplitude * comps.iter().map(|&(freq, ph, w)| w * (2.0 * PI * freq * t + ph).sin()).sum::<f64>() / norm
        })
        .collect()
}

fn generate_sample(rng: &mut ChaCha8Rng, ctx: &SampleContext<'_>, subject: &str, label: Label) -> RegionTraceSet {
    let cfg = ctx.cfg;
    let frames = cfg.frames();
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let phase0: f64 = rng.random_range(0.0..60.0 / ctx.hr);
    let drift = drift_signal(rng, cfg.illumination_drift_amplitude, frames, cfg.fps);
    let pulse_gain = match label {
        Label::Bonafide => cfg.pulse_amplitude,
        Label::Mask => cfg.pulse_amplitude * cfg.mask_attenuation,
    };
    let clamp = |v: f64| v.max(0.0);

    let face_traces = ctx
        .skin
        .iter()
        .map(|base| {
            let delay = if cfg.region_phase_jitter > 0.0 {
                rng.random_range(-cfg.region_phase_jitter..=cfg.region_phase_jitter)
            } else {
                0.0
            };
            (0..frames)
                .map(|f| {
                    let t = f as f64 / cfg.fps;
                    let p = pulse_waveform(t + phase0 + delay, ctx.hr);
                    [0, 1, 2].map(|c| clamp(base[c] + pulse_gain * PULSE_CHANNEL_GAIN[c] * p + drift[f] + noise.sample(rng)))
                })
                .collect()
        })
        .collect();
    let bg_traces = ctx
        .wall
        .iter()
        .map(|base| (0..frames).map(|f| [0, 1, 2].map(|c| clamp(base[c] + drift[f] + noise.sample(rng)))).collect())
        .collect();
    RegionTraceSet { subject_id: subject.to_string(), label, fps: cfg.fps, face_traces, bg_traces }
}

/// Subject ids are `s01`, `s02`, ...
pub fn subject_name(index: usize) -> String {
    format!("s{:02}", index + 1)
}

/// Generates `subjects * samples * 2` samples ordered by subject, then
/// sample index, bonafide before mask.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<RegionTraceSet>, SynthError> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.subjects * cfg.samples_per_subject_per_class * 2);
    for s in 0..cfg.subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(s as u64));
        let (lo, hi) = cfg.heart_rate_range;
        let hr = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let skin: Vec<[f64; 3]> = (0..cfg.face_regions)
            .map(|_| {
                let shade = rng.random_range(0.8..1.2);
                [170.0 * shade, 120.0 * shade, 95.0 * shade].map(|v| v + rng.random_range(-5.0..5.0))
            })
            .collect();
        let wall: Vec<[f64; 3]> =
            (0..cfg.bg_regions).map(|_| [0, 1, 2].map(|_| rng.random_range(40.0..220.0))).collect();
        let ctx = SampleContext { cfg, hr, skin: &skin, wall: &wall };
        let name = subject_name(s);
        for _ in 0..cfg.samples_per_subject_per_class {
            for label in [Label::Bonafide, Label::Mask] {
                out.push(generate_sample(&mut rng, &ctx, &name, label));
            }
        }
    }
    Ok(out)
}

/// One line of a dataset manifest: `path subject label`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub subject: String,
    pub label: Label,
}

/// Writes every sample as a trace file plus `manifest.txt` listing them
/// with paths relative to `dir`. Returns the manifest path.
pub fn write_dataset(samples: &[RegionTraceSet], dir: &Path) -> Result<PathBuf, SynthError> {
    std::fs::create_dir_all(dir).map_err(|e| MstMapError::Io { path: dir.to_path_buf(), source: e })?;
    let mut manifest = String::new();
    let mut counters = std::collections::HashMap::<(String, Label), usize>::new();
    for sample in samples {
        let k = counters.entry((sample.subject_id.clone(), sample.label)).or_default();
        let kind = match sample.label {
            Label::Bonafide => "bonafide",
            Label::Mask => "mask",
        };
        let name = format!("{}_{kind}_{:02}.trace", sample.subject_id, *k);
        *k += 1;
        sample.write(&dir.join(&name))?;
        manifest.push_str(&format!("{name} {} {}\n", sample.subject_id, sample.label.as_u8()));
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(|e| MstMapError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, SynthError> {
    let text = std::fs::read_to_string(path).map_err(|e| MstMapError::Io { path: path.to_path_buf(), source: e })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| SynthError::Manifest { line: i + 1, message };
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [p, subject, label] = parts[..] else {
            return Err(bad(format!("expected `path subject label`, got {line:?}")));
        };
        let label = label
            .parse::<u8>()
            .ok()
            .and_then(Label::from_u8)
            .ok_or_else(|| bad(format!("label must be 0 or 1, got {label:?}")))?;
        entries.push(ManifestEntry { path: base.join(p), subject: subject.to_string(), label });
    }
    Ok(entries)
}

/// Reads every trace listed in a manifest, checking subject and label.
pub fn load_manifest(path: &Path) -> Result<Vec<RegionTraceSet>, SynthError> {
    read_manifest(path)?
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let set = RegionTraceSet::read(&e.path)?;
            if set.subject_id != e.subject || set.label != e.label {
                return Err(SynthError::Manifest {
                    line: i + 1,
                    message: format!("{} disagrees with its header", e.path.display()),
                });
            }
            Ok(set)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain O(n^2) DFT power spectrum of a mean-removed signal.
    fn power_spectrum(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += (v - mean) * a.cos();
                    im += (v - mean) * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    #[test]
    fn waveform_period_and_peak() {
        for hr in [48.0, 75.0, 102.0] {
            let period = 60.0 / hr;
            for i in 0..20 {
                let t = i as f64 * 0.037;
                assert!((pulse_waveform(t, hr) - pulse_waveform(t + period, hr)).abs() < 1e-9);
            }
            let peak = (0..10_000).map(|i| pulse_waveform(i as f64 / 10_000.0 * period, hr).abs()).fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-3, "{peak}");
        }
    }

    #[test]
    fn waveform_dominant_bin() {
        for hr in [48.0, 66.0, 90.0, 102.0] {
            let x: Vec<f64> = (0..300).map(|i| pulse_waveform(i as f64 / 30.0, hr)).collect();
            let p = power_spectrum(&x);
            let argmax = (1..p.len()).max_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap()).unwrap();
            assert_eq!(argmax, (hr / 60.0 * 10.0).round() as usize, "hr {hr}");
        }
    }

    #[test]
    fn counts_and_balance() {
        let cfg = SynthConfig { subjects: 4, samples_per_subject_per_class: 2, ..SynthConfig::default() };
        let data = generate_dataset(&cfg).unwrap();
        assert_eq!(data.len(), 16);
        assert_eq!(data.iter().filter(|s| s.label == Label::Bonafide).count(), 8);
        for s in &data {
            assert_eq!(s.face_regions(), 6);
            assert_eq!(s.bg_regions(), 4);
            assert_eq!(s.frames(), 300);
            s.validate().unwrap();
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig { subjects: 2, samples_per_subject_per_class: 1, ..SynthConfig::default() };
        assert_eq!(generate_dataset(&cfg).unwrap(), generate_dataset(&cfg).unwrap());
        let other = SynthConfig { seed: 99, ..cfg.clone() };
        let (a, b) = (generate_dataset(&cfg).unwrap(), generate_dataset(&other).unwrap());
        assert_ne!(a, b);
        for s in &b {
            s.validate().unwrap();
        }
    }

    #[test]
    fn pulse_peak_present_only_for_bonafide() {
        let cfg = SynthConfig { subjects: 3, samples_per_subject_per_class: 2, ..SynthConfig::default() };
        let data = generate_dataset(&cfg).unwrap();
        for (s, chunk) in data.chunks(4).enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + s as u64);
            let hr: f64 = rng.random_range(cfg.heart_rate_range.0..=cfg.heart_rate_range.1);
            let bin = (hr / 60.0 * cfg.duration_s).round() as usize;
            // Heart-rate band 0.7-4 Hz.
            let band = 7..=40;
            for sample in chunk {
                // Spectra of the green channel averaged over face regions.
                let mut p = vec![0.0; 151];
                for region in &sample.face_traces {
                    let green: Vec<f64> = region.iter().map(|px| px[1]).collect();
                    for (acc, v) in p.iter_mut().zip(power_spectrum(&green)) {
                        *acc += v / sample.face_regions() as f64;
                    }
                }
                let med = median(p[band.clone()].to_vec());
                let peak = p[bin];
                match sample.label {
                    Label::Bonafide => assert!(peak >= 5.0 * med, "bonafide subject {s}: {peak} vs {med}"),
                    Label::Mask => assert!(peak < 5.0 * med, "mask subject {s}: {peak} vs {med}"),
                }
            }
        }
    }

    #[test]
    fn invalid_configs_name_the_key() {
        let bad = SynthConfig { heart_rate_range: (20.0, 90.0), ..SynthConfig::default() };
        let err = generate_dataset(&bad).unwrap_err().to_string();
        assert!(err.contains("heart_rate_range"), "{err}");
        let bad = SynthConfig { mask_attenuation: 1.5, ..SynthConfig::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("mask_attenuation"));
        let bad = SynthConfig { noise_sigma: -1.0, ..SynthConfig::default() };
        assert!(bad.validate().unwrap_err().to_string().contains("noise_sigma"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { subjects: 2, samples_per_subject_per_class: 2, duration_s: 1.0, ..SynthConfig::default() };
        let data = generate_dataset(&cfg).unwrap();
        let manifest = write_dataset(&data, dir.path()).unwrap();
        let entries = read_manifest(&manifest).unwrap();
        assert_eq!(entries.len(), 8);
        assert_eq!(entries[0].subject, "s01");
        assert_eq!(entries[1].label, Label::Mask);
        let loaded = load_manifest(&manifest).unwrap();
        assert_eq!(loaded, data);
    }
}
