//! Cosine scoring, detection metrics, embedding-based data selection and
//! development-set tuning of the selection threshold.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};

/// Speaker embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("empty embedding");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("embedding has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    /// Unit-length copy; fails on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Degenerate("zero embedding".into()));
        }
        Ok(self.scaled(1.0 / n))
    }
}

/// `a . b / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_score(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!("embedding sizes {} and {}", a.dim(), b.dim())));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine score of a zero embedding".into()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean of the unit-normalized embeddings. The result may be zero.
pub fn average_embeddings(list: &[Embedding]) -> Result<Embedding> {
    let first = list.first().ok_or_else(|| Error::InvalidInput("no embeddings to average".into()))?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for e in list {
        if e.dim() != dim {
            return Err(Error::ShapeMismatch("embeddings differ in size".into()));
        }
        for (a, v) in acc.iter_mut().zip(e.normalized()?.0) {
            *a += v;
        }
    }
    let n = list.len() as f64;
    Embedding::new(acc.into_iter().map(|v| v / n).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    /// `Some(true)` for a target trial.
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub entries: Vec<ScoredTrial>,
}

impl ScoreSet {
    pub fn push(&mut self, trial: Trial, score: f64) {
        self.entries.push(ScoredTrial { trial, score });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.trial.label.is_some())
    }

    /// Scores and target flags, failing if any label is missing.
    pub fn labelled(&self) -> Result<(Vec<f64>, Vec<bool>)> {
        let mut s = Vec::with_capacity(self.len());
        let mut l = Vec::with_capacity(self.len());
        for e in &self.entries {
            let label = e
                .trial
                .label
                .ok_or_else(|| Error::InvalidInput(format!("trial {} {} has no label", e.trial.enroll, e.trial.test)))?;
            s.push(e.score);
            l.push(label);
        }
        Ok((s, l))
    }

    pub fn eer(&self) -> Result<(f64, f64)> {
        let (s, l) = self.labelled()?;
        eer(&s, &l)
    }

    pub fn min_dcf(&self, p: &DcfParams) -> Result<(f64, f64)> {
        let (s, l) = self.labelled()?;
        min_dcf(&s, &l, p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return invalid("p_target must lie in (0, 1)");
        }
        if !(self.c_miss > 0.0) || !(self.c_fa > 0.0) || !self.c_miss.is_finite() || !self.c_fa.is_finite() {
            return invalid("detection costs must be positive");
        }
        Ok(())
    }
}

/// One operating point of the threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub p_miss: f64,
    pub p_fa: f64,
}

/// Miss and false-alarm rates at every distinct score (accepting
/// `score >= threshold`) followed by `+inf`, in increasing threshold order.
pub fn sweep(scores: &[f64], targets: &[bool]) -> Result<Vec<SweepPoint>> {
    if scores.len() != targets.len() {
        return Err(Error::ShapeMismatch("scores vs labels".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return invalid("scores must be finite");
    }
    let nt = targets.iter().filter(|&&t| t).count();
    let nn = targets.len() - nt;
    if nt == 0 || nn == 0 {
        return invalid("need at least one target and one nontarget trial");
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut points = Vec::new();
    let mut misses = 0usize;
    let mut accepted_nontargets = nn;
    let mut i = 0;
    while i < idx.len() {
        let t = scores[idx[i]];
        points.push(SweepPoint {
            threshold: t,
            p_miss: misses as f64 / nt as f64,
            p_fa: accepted_nontargets as f64 / nn as f64,
        });
        while i < idx.len() && scores[idx[i]] == t {
            if targets[idx[i]] {
                misses += 1;
            } else {
                accepted_nontargets -= 1;
            }
            i += 1;
        }
    }
    points.push(SweepPoint {
        threshold: f64::INFINITY,
        p_miss: 1.0,
        p_fa: 0.0,
    });
    Ok(points)
}

/// Equal error rate and the first sweep threshold at or past the crossing.
/// Between the last point with `p_miss < p_fa` and the next one the rates
/// are interpolated linearly.
pub fn eer(scores: &[f64], targets: &[bool]) -> Result<(f64, f64)> {
    let pts = sweep(scores, targets)?;
    eer_from_sweep(&pts)
}

pub fn eer_from_sweep(pts: &[SweepPoint]) -> Result<(f64, f64)> {
    let i = pts
        .iter()
        .position(|p| p.p_miss - p.p_fa >= 0.0)
        .ok_or_else(|| Error::Numerical("threshold sweep never crosses".into()))?;
    let cur = pts[i];
    let d1 = cur.p_miss - cur.p_fa;
    if d1 == 0.0 || i == 0 {
        return Ok((cur.p_miss, cur.threshold));
    }
    let prev = pts[i - 1];
    let d0 = prev.p_miss - prev.p_fa;
    let a = -d0 / (d1 - d0);
    Ok((prev.p_miss + a * (cur.p_miss - prev.p_miss), cur.threshold))
}

/// Normalized minimum detection cost over all sweep thresholds including
/// both infinite endpoints.
pub fn min_dcf(scores: &[f64], targets: &[bool], p: &DcfParams) -> Result<(f64, f64)> {
    p.validate()?;
    let pts = sweep(scores, targets)?;
    let norm = (p.c_miss * p.p_target).min(p.c_fa * (1.0 - p.p_target));
    let cost = |pm: f64, pf: f64| (p.c_miss * pm * p.p_target + p.c_fa * pf * (1.0 - p.p_target)) / norm;
    let mut best = (cost(0.0, 1.0), f64::NEG_INFINITY);
    for pt in &pts {
        let c = cost(pt.p_miss, pt.p_fa);
        if c < best.0 {
            best = (c, pt.threshold);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionPolicy {
    pub theta: f64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self { theta: 0.7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    KeepEnhanced,
    KeepOriginal,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::KeepEnhanced => "keep_enhanced",
            Decision::KeepOriginal => "keep_original",
        }
    }
}

/// Keeps the processed version unless its embedding has drifted below
/// `theta` in cosine similarity from the original.
pub fn select_enhanced(original: &Embedding, enhanced: &Embedding, policy: &SelectionPolicy) -> Result<(Decision, f64)> {
    if !policy.theta.is_finite() {
        return invalid("selection threshold must be finite");
    }
    let s = cosine_score(original, enhanced)?;
    let d = if s >= policy.theta {
        Decision::KeepEnhanced
    } else {
        Decision::KeepOriginal
    };
    Ok((d, s))
}

/// One development speaker: close-talk enrollment and far-field test.
#[derive(Debug, Clone, PartialEq)]
pub struct DevPair {
    pub speaker: String,
    pub enrollment: Embedding,
    pub test: Embedding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub theta: f64,
    pub rir_set: usize,
    pub eer: f64,
    /// `(rir_set, theta, eer)` for every grid cell, RIR-major.
    pub grid: Vec<(usize, f64, f64)>,
}

/// Dev EER when each enrollment is replaced by its simulated version where
/// the selection rule keeps it. Trials are every enrollment against every
/// test; targets share a speaker.
pub fn dev_eer(pairs: &[DevPair], simulated: &[Embedding], theta: f64) -> Result<f64> {
    let policy = SelectionPolicy { theta };
    let mut enroll = Vec::with_capacity(pairs.len());
    for (p, s) in pairs.iter().zip(simulated) {
        let (d, _) = select_enhanced(&p.enrollment, s, &policy)?;
        enroll.push(match d {
            Decision::KeepEnhanced => s,
            Decision::KeepOriginal => &p.enrollment,
        });
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, e) in enroll.iter().enumerate() {
        for p in pairs {
            scores.push(cosine_score(e, &p.test)?);
            labels.push(pairs[i].speaker == p.speaker);
        }
    }
    Ok(eer(&scores, &labels)?.0)
}

/// Grid search over RIR parameter sets and selection thresholds.
/// `simulate(set, i)` returns the simulated enrollment embedding of pair `i`
/// under RIR set `set`. Minimizes dev EER; ties go to the larger threshold,
/// then to the earlier RIR set.
pub fn tune_theta<F>(pairs: &[DevPair], thetas: &[f64], rir_sets: usize, simulate: F) -> Result<TuneResult>
where
    F: Fn(usize, usize) -> Result<Embedding>,
{
    if thetas.is_empty() || rir_sets == 0 {
        return invalid("empty tuning grid");
    }
    let mut speakers: Vec<&str> = pairs.iter().map(|p| p.speaker.as_str()).collect();
    speakers.sort_unstable();
    speakers.dedup();
    if speakers.len() < 2 {
        return invalid("dev pairs must span at least two speakers");
    }
    let mut grid = Vec::with_capacity(thetas.len() * rir_sets);
    let mut best: Option<(f64, f64, usize)> = None;
    for set in 0..rir_sets {
        let simulated = (0..pairs.len()).map(|i| simulate(set, i)).collect::<Result<Vec<_>>>()?;
        for &theta in thetas {
            let e = dev_eer(pairs, &simulated, theta)?;
            grid.push((set, theta, e));
            let better = match best {
                None => true,
                Some((be, bt, _)) => e < be || (e == be && theta > bt),
            };
            if better {
                best = Some((e, theta, set));
            }
        }
    }
    let (eer, theta, rir_set) = best.expect("grid is nonempty");
    Ok(TuneResult { theta, rir_set, eer, grid })
}

/// Parses `enroll test [0|1]` lines; blank lines are skipped.
pub fn parse_trials(text: &str) -> Result<Vec<Trial>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        let label = match f.len() {
            2 => None,
            3 => Some(match f[2] {
                "1" => true,
                "0" => false,
                other => return Err(Error::Malformed(format!("line {}: label {other:?}", n + 1))),
            }),
            _ => return Err(Error::Malformed(format!("line {}: expected 2 or 3 fields", n + 1))),
        };
        out.push(Trial {
            enroll: f[0].to_string(),
            test: f[1].to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn format_trials(trials: &[Trial]) -> String {
    let mut s = String::new();
    for t in trials {
        match t.label {
            Some(l) => writeln!(s, "{} {} {}", t.enroll, t.test, u8::from(l)),
            None => writeln!(s, "{} {}", t.enroll, t.test),
        }
        .expect("write to string");
    }
    s
}

/// At most nine significant digits, shortest form.
pub fn format_sig9(x: f64) -> String {
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Tab-separated `enroll test score` lines.
pub fn format_scores(set: &ScoreSet) -> String {
    let mut s = String::new();
    for e in &set.entries {
        writeln!(s, "{}\t{}\t{}", e.trial.enroll, e.trial.test, format_sig9(e.score)).expect("write to string");
    }
    s
}

pub fn parse_scores(text: &str) -> Result<ScoreSet> {
    let mut set = ScoreSet::default();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::Malformed(format!("line {}: expected 3 tab-separated fields", n + 1)));
        }
        let score: f64 = f[2]
            .trim()
            .parse()
            .map_err(|_| Error::Malformed(format!("line {}: bad score", n + 1)))?;
        set.push(
            Trial {
                enroll: f[0].to_string(),
                test: f[1].to_string(),
                label: None,
            },
            score,
        );
    }
    Ok(set)
}

/// `EER=<percent> minDCF=<value> at p_target=<p>`.
pub fn format_metrics(eer: f64, min_dcf: f64, p_target: f64) -> String {
    format!("EER={:.4} minDCF={:.4} at p_target={}", eer * 100.0, min_dcf, p_target)
}
