//! Threshold metrics for liveness scores.
//!
//! A sample is accepted as live when its score is at or above the threshold.
//! FLR is the fraction of masks accepted; FFR is the fraction of bonafide
//! samples rejected.

use super::EvalError;

/// Scores with their labels (1 = bonafide, 0 = mask) and subject ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub subjects: Vec<String>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, subjects: Vec<String>) -> Result<Self, EvalError> {
        let s = Self { scores, labels, subjects };
        s.validate()?;
        Ok(s)
    }

    /// Unnamed subjects, for quick construction.
    pub fn from_pairs(scores: &[f64], labels: &[u8]) -> Result<Self, EvalError> {
        Self::new(scores.to_vec(), labels.to_vec(), vec![String::new(); scores.len()])
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.scores.len() != self.labels.len() || self.scores.len() != self.subjects.len() {
            return Err(EvalError::Input(format!(
                "{} scores, {} labels, {} subject ids",
                self.scores.len(),
                self.labels.len(),
                self.subjects.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l > 1) {
            return Err(EvalError::Input(format!("label {l} is not 0 or 1")));
        }
        if let Some(s) = self.scores.iter().find(|s| !s.is_finite()) {
            return Err(EvalError::Input(format!("score {s} is not finite")));
        }
        Ok(())
    }

    pub fn extend(&mut self, other: &ScoredSet) {
        self.scores.extend_from_slice(&other.scores);
        self.labels.extend_from_slice(&other.labels);
        self.subjects.extend_from_slice(&other.subjects);
    }

    /// `(bonafide, mask)` counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    fn require_both(&self) -> Result<(usize, usize), EvalError> {
        self.validate()?;
        let (p, n) = self.class_counts();
        if p == 0 || n == 0 {
            return Err(EvalError::SingleClass { bonafide: p, mask: n });
        }
        Ok((p, n))
    }

    /// `(FLR, FFR)` at threshold `t`.
    pub fn rates_at(&self, t: f64) -> (f64, f64) {
        let (p, n) = self.class_counts();
        let mut accepted_masks = 0usize;
        let mut rejected_live = 0usize;
        for (&s, &l) in self.scores.iter().zip(&self.labels) {
            if l == 0 && s >= t {
                accepted_masks += 1;
            }
            if l == 1 && s < t {
                rejected_live += 1;
            }
        }
        (ratio(accepted_masks, n), ratio(rejected_live, p))
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Operating point at one threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub flr: f64,
    pub ffr: f64,
}

/// Operating points at increasing thresholds: one below every score, the
/// midpoints between consecutive distinct scores, and one above every score.
pub fn operating_points(s: &ScoredSet) -> Vec<OperatingPoint> {
    let mut distinct = s.scores.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut thresholds = Vec::with_capacity(distinct.len() + 1);
    if let (Some(&lo), Some(&hi)) = (distinct.first(), distinct.last()) {
        thresholds.push(lo - 1.0);
        thresholds.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        thresholds.push(hi + 1.0);
    }
    thresholds
        .into_iter()
        .map(|t| {
            let (flr, ffr) = s.rates_at(t);
            OperatingPoint { threshold: t, flr, ffr }
        })
        .collect()
}

/// Probability that a random bonafide sample outscores a random mask, ties
/// counted as one half. Computed from mid-ranks.
pub fn roc_auc(s: &ScoredSet) -> Result<f64, EvalError> {
    let (p, n) = s.require_both()?;
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && s.scores[idx[j + 1]] == s.scores[idx[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| s.labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (p * (p + 1)) as f64 / 2.0;
    Ok(u / (p * n) as f64)
}

/// Area under the ROC curve (true live rate against FLR) by the trapezoid rule.
pub fn auc_trapezoid(s: &ScoredSet) -> Result<f64, EvalError> {
    s.require_both()?;
    let pts = operating_points(s);
    let mut area = 0.0;
    for w in pts.windows(2) {
        let (x0, y0) = (w[0].flr, 1.0 - w[0].ffr);
        let (x1, y1) = (w[1].flr, 1.0 - w[1].ffr);
        area += (x0 - x1) * (y0 + y1) / 2.0;
    }
    Ok(area)
}

/// Equal error rate and its threshold.
///
/// Scans the operating points for the first pair where `FLR - FFR` changes
/// sign and interpolates linearly between them.
pub fn eer(s: &ScoredSet) -> Result<(f64, f64), EvalError> {
    s.require_both()?;
    let pts = operating_points(s);
    for w in pts.windows(2) {
        let d0 = w[0].flr - w[0].ffr;
        let d1 = w[1].flr - w[1].ffr;
        if d0 == 0.0 {
            return Ok((w[0].flr, w[0].threshold));
        }
        if d0 > 0.0 && d1 <= 0.0 {
            let f = d0 / (d0 - d1);
            let rate = w[0].flr + f * (w[1].flr - w[0].flr);
            let thr = w[0].threshold + f * (w[1].threshold - w[0].threshold);
            return Ok((rate, thr));
        }
    }
    // The first point has FLR = 1 and the last FFR = 1, so a crossing exists.
    unreachable!("operating points always cross")
}

/// FFR at the lowest threshold whose FLR is at most `target`, interpolated
/// linearly in FLR between the two operating points around the target.
pub fn ffr_at_flr(s: &ScoredSet, target: f64) -> Result<f64, EvalError> {
    s.require_both()?;
    if !(0.0..=1.0).contains(&target) {
        return Err(EvalError::Input(format!("FLR target {target} outside [0, 1]")));
    }
    let pts = operating_points(s);
    if pts[0].flr <= target {
        return Ok(pts[0].ffr);
    }
    for w in pts.windows(2) {
        if w[0].flr > target && w[1].flr <= target {
            let f = (w[0].flr - target) / (w[0].flr - w[1].flr);
            return Ok(w[0].ffr + f * (w[1].ffr - w[0].ffr));
        }
    }
    unreachable!("the last operating point has FLR 0")
}

/// `(FAR + FRR) / 2` at a fixed threshold.
pub fn hter(s: &ScoredSet, threshold: f64) -> f64 {
    let (far, frr) = s.rates_at(threshold);
    (far + frr) / 2.0
}

/// HTER where every sample carries its own threshold.
pub fn hter_per_sample(s: &ScoredSet, thresholds: &[f64]) -> f64 {
    let (p, n) = s.class_counts();
    let mut fa = 0;
    let mut fr = 0;
    for ((&sc, &l), &t) in s.scores.iter().zip(&s.labels).zip(thresholds) {
        if l == 0 && sc >= t {
            fa += 1;
        }
        if l == 1 && sc < t {
            fr += 1;
        }
    }
    (ratio(fa, n) + ratio(fr, p)) / 2.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    pub hter: Option<f64>,
    pub hter_threshold: Option<f64>,
    pub ffr_at_flr_001: f64,
    pub n_bonafide: usize,
    pub n_mask: usize,
}

impl MetricsReport {
    /// All metrics; HTER only when a threshold from elsewhere is supplied.
    pub fn compute(s: &ScoredSet, hter_threshold: Option<f64>) -> Result<Self, EvalError> {
        let (n_bonafide, n_mask) = s.require_both()?;
        let (e, thr) = eer(s)?;
        Ok(Self {
            auc: roc_auc(s)?,
            eer: e,
            eer_threshold: thr,
            hter: hter_threshold.map(|t| hter(s, t)),
            hter_threshold,
            ffr_at_flr_001: ffr_at_flr(s, 0.01)?,
            n_bonafide,
            n_mask,
        })
    }

    pub fn line(&self) -> String {
        let hter = self.hter.map_or("na".to_string(), |h| format!("{h:.6}"));
        format!("auc={:.6} eer={:.6} hter={hter} ffr_at_flr_0.01={:.6}", self.auc, self.eer, self.ffr_at_flr_001)
    }
}
