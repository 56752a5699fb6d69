//! Implausibility, the three-way classification of candidates and the wave
//! loop that refines it.
//!
//! A candidate is ruled out once its max-combined implausibility exceeds 3
//! and ruled in once it falls below -3. Both decisions are final: later
//! emulators never revisit them.

mod status;
mod wave;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::emulator::{logit, normal_cdf, Prediction};
use crate::error::{Error, Result};
use crate::seed::rng_from;

pub use status::{read_status_csv, status_csv, write_status_csv};
pub use wave::{
    run_wave, DesignPoint, EmulatorSnapshot, FittedEmulator, Retention, WaveOutcome, WaveSeeds, WaveSettings, WaveState, WaveSummary,
};

/// Which simulator output a criterion is built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseKind {
    /// Binary overheating flag, emulated on the logit scale.
    Overheating,
    /// Continuous energy use, emulated through its mean.
    Energy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub kind: ResponseKind,
    /// Threshold in latent units: a logit for [`ResponseKind::Overheating`].
    pub threshold: f64,
    /// Additive model-discrepancy variance in the implausibility denominator.
    #[serde(default)]
    pub extra_variance: f64,
}

impl Criterion {
    /// `P(overheat) < p_target`, stored as `logit(p_target)`.
    pub fn overheating(p_target: f64) -> Result<Self> {
        if !(p_target > 0.0 && p_target < 1.0) {
            return Err(Error::Config(format!("p_target must lie in (0, 1), got {p_target}")));
        }
        Ok(Criterion {
            name: "oh".into(),
            kind: ResponseKind::Overheating,
            threshold: logit(p_target),
            extra_variance: 0.0,
        })
    }

    /// Mean energy use below `target` kWh/m2.
    pub fn energy(target: f64) -> Result<Self> {
        if !target.is_finite() {
            return Err(Error::Config(format!("energy target must be finite, got {target}")));
        }
        Ok(Criterion {
            name: "eu".into(),
            kind: ResponseKind::Energy,
            threshold: target,
            extra_variance: 0.0,
        })
    }

    pub fn with_extra_variance(mut self, v: f64) -> Self {
        self.extra_variance = v;
        self
    }

    pub fn implausibility(&self, pred: &Prediction) -> Result<f64> {
        implausibility(&pred.with_extra_variance(self.extra_variance), self.threshold)
    }
}

/// `(mean - T) / sd`. A zero variance gives an infinite value with the sign
/// of `mean - T` (or 0 when they coincide).
pub fn implausibility(pred: &Prediction, threshold: f64) -> Result<f64> {
    if pred.mean.is_nan() || pred.variance.is_nan() || threshold.is_nan() {
        return Err(Error::contract("implausibility of NaN input"));
    }
    if pred.variance < 0.0 {
        return Err(Error::contract(format!("negative variance {}", pred.variance)));
    }
    let diff = pred.mean - threshold;
    if pred.variance == 0.0 {
        return Ok(if diff > 0.0 {
            f64::INFINITY
        } else if diff < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        });
    }
    Ok(diff / pred.variance.sqrt())
}

/// Maximum over criteria.
pub fn combine(impls: &[f64]) -> Result<f64> {
    if impls.is_empty() {
        return Err(Error::contract("cannot combine an empty list of implausibilities"));
    }
    if impls.iter().any(|v| v.is_nan()) {
        return Err(Error::contract("implausibility is NaN"));
    }
    Ok(impls.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    RuledOut,
    Active,
    RuledIn,
}

impl State {
    pub fn as_str(&self) -> &'static str {
        match self {
            State::RuledOut => "ruled_out",
            State::Active => "active",
            State::RuledIn => "ruled_in",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ruled_out" => Some(State::RuledOut),
            "active" => Some(State::Active),
            "ruled_in" => Some(State::RuledIn),
            _ => None,
        }
    }

    /// Not ruled out yet.
    pub fn is_nroy(&self) -> bool {
        *self != State::RuledOut
    }
}

/// Strict partition at +-3.
pub fn classify(i: f64) -> State {
    if i > 3.0 {
        State::RuledOut
    } else if i < -3.0 {
        State::RuledIn
    } else {
        State::Active
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateStatus {
    /// Per-criterion implausibility from the latest evaluation.
    #[serde(with = "extended_floats")]
    pub criteria: Vec<f64>,
    /// Max over `criteria`.
    #[serde(with = "extended_float")]
    pub implausibility: f64,
    pub state: State,
    pub wave_of_decision: Option<usize>,
}

impl CandidateStatus {
    /// Never evaluated: active with implausibility 0 on every criterion.
    pub fn unevaluated(n_criteria: usize) -> Self {
        CandidateStatus {
            criteria: vec![0.0; n_criteria],
            implausibility: 0.0,
            state: State::Active,
            wave_of_decision: None,
        }
    }

    pub fn is_tenable(&self) -> bool {
        self.implausibility < 0.0
    }

    /// Records a new evaluation. Decided candidates are left untouched;
    /// returns whether anything changed.
    pub fn update(&mut self, criteria: Vec<f64>, wave: usize) -> Result<bool> {
        if self.state != State::Active {
            return Ok(false);
        }
        let i = combine(&criteria)?;
        self.criteria = criteria;
        self.implausibility = i;
        self.state = classify(i);
        if self.state != State::Active {
            self.wave_of_decision = Some(wave);
        }
        Ok(true)
    }

    /// Probability of meeting each criterion, `Phi(-I_c)`.
    pub fn criterion_probabilities(&self) -> Vec<f64> {
        self.criteria.iter().map(|&i| normal_cdf(-i)).collect()
    }
}

/// Applies `evaluate` to every active candidate and freezes new decisions
/// at `wave`. `evaluate` receives the indices of the active candidates and
/// returns their per-criterion implausibilities in the same order.
pub fn update_candidates<F>(statuses: &mut [CandidateStatus], wave: usize, evaluate: F) -> Result<()>
where
    F: FnOnce(&[usize]) -> Result<Vec<Vec<f64>>>,
{
    let active: Vec<usize> = (0..statuses.len()).filter(|&i| statuses[i].state == State::Active).collect();
    if active.is_empty() {
        return Ok(());
    }
    let values = evaluate(&active)?;
    if values.len() != active.len() {
        return Err(Error::contract("evaluation returned the wrong number of rows"));
    }
    for (i, v) in active.into_iter().zip(values) {
        statuses[i].update(v, wave)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusCounts {
    pub total: usize,
    pub active: usize,
    pub ruled_out: usize,
    pub ruled_in: usize,
    pub tenable: usize,
}

impl StatusCounts {
    pub fn of(statuses: &[CandidateStatus]) -> Self {
        let mut c = StatusCounts {
            total: statuses.len(),
            ..Default::default()
        };
        for s in statuses {
            match s.state {
                State::Active => c.active += 1,
                State::RuledOut => c.ruled_out += 1,
                State::RuledIn => c.ruled_in += 1,
            }
            if s.is_tenable() {
                c.tenable += 1;
            }
        }
        c
    }

    fn frac(&self, k: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            k as f64 / self.total as f64
        }
    }

    pub fn nroy_fraction(&self) -> f64 {
        self.frac(self.active + self.ruled_in)
    }

    pub fn active_fraction(&self) -> f64 {
        self.frac(self.active)
    }

    pub fn tenable_fraction(&self) -> f64 {
        self.frac(self.tenable)
    }

    pub fn ruled_in_fraction(&self) -> f64 {
        self.frac(self.ruled_in)
    }
}

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Every candidate was ruled out: no values of x are in the level set.
    LevelSetEmpty,
    /// No active candidates remain, and some were ruled in.
    LevelSetResolved,
    /// The active fraction fell below the configured minimum.
    ActiveBelowMinimum,
    MaxWaves,
}

impl Termination {
    pub fn message(&self) -> &'static str {
        match self {
            Termination::LevelSetEmpty => "no values of x are in the level-set",
            Termination::LevelSetResolved => "every candidate is decided",
            Termination::ActiveBelowMinimum => "active fraction below the configured minimum",
            Termination::MaxWaves => "wave budget exhausted",
        }
    }
}

/// Classifies the situation when no candidate is active.
pub fn exhausted(counts: &StatusCounts) -> Option<Termination> {
    if counts.active > 0 {
        None
    } else if counts.ruled_in == 0 {
        Some(Termination::LevelSetEmpty)
    } else {
        Some(Termination::LevelSetResolved)
    }
}

/// Draws up to `n` active candidates uniformly without replacement, in
/// ascending index order.
pub fn select_wave_batch(
    statuses: &[CandidateStatus],
    n: usize,
    seed: u64,
) -> std::result::Result<Vec<usize>, Termination> {
    let active: Vec<usize> = (0..statuses.len()).filter(|&i| statuses[i].state == State::Active).collect();
    if let Some(t) = exhausted(&StatusCounts::of(statuses)) {
        return Err(t);
    }
    if active.len() <= n {
        return Ok(active);
    }
    let mut rng = rng_from(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, active.len(), n).into_iter().map(|k| active[k]).collect();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// I < 0.
    Tenable,
    /// I < -1.
    Strict,
    /// I < -3.
    RuledIn,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Tenable, Policy::Strict, Policy::RuledIn];

    pub fn bound(&self) -> f64 {
        match self {
            Policy::Tenable => 0.0,
            Policy::Strict => -1.0,
            Policy::RuledIn => -3.0,
        }
    }

    pub fn admits(&self, s: &CandidateStatus) -> bool {
        s.state != State::RuledOut && s.implausibility < self.bound()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::Tenable => "tenable",
            Policy::Strict => "strict",
            Policy::RuledIn => "ruled_in",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectedDesign {
    pub candidate_id: usize,
    /// Native units, in design-space order.
    pub native: Vec<f64>,
    pub implausibility: f64,
    /// Per-criterion implausibilities and probabilities of meeting each.
    pub criteria: Vec<CriterionReport>,
    pub joint_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub name: String,
    pub implausibility: f64,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub policy: Policy,
    pub preference: String,
    /// Candidates satisfying the policy.
    pub qualifying: usize,
    /// `None` means no design qualifies under this policy.
    pub design: Option<SelectedDesign>,
}

/// Among candidates admitted by `policy`, picks the one with the largest
/// value of the `preference` coordinate (lowest id on ties).
pub fn final_selection(
    space: &crate::design::DesignSpace,
    candidates: &crate::design::CandidateSet,
    statuses: &[CandidateStatus],
    criteria: &[Criterion],
    policy: Policy,
    preference: &str,
) -> Result<Selection> {
    let coord = space
        .index_of(preference)
        .ok_or_else(|| Error::Config(format!("unknown preference variable `{preference}`")))?;
    if statuses.len() != candidates.len() {
        return Err(Error::contract("status count does not match candidate count"));
    }
    let mut best: Option<usize> = None;
    let mut qualifying = 0;
    for (i, s) in statuses.iter().enumerate() {
        if !policy.admits(s) {
            continue;
        }
        qualifying += 1;
        match best {
            Some(b) if candidates.row(b)[coord] >= candidates.row(i)[coord] => {}
            _ => best = Some(i),
        }
    }
    let design = best.map(|i| {
        let s = &statuses[i];
        let probs = s.criterion_probabilities();
        SelectedDesign {
            candidate_id: i,
            native: space.row_to_native(candidates.row(i)),
            implausibility: s.implausibility,
            criteria: criteria
                .iter()
                .zip(&s.criteria)
                .zip(&probs)
                .map(|((c, &imp), &p)| CriterionReport {
                    name: c.name.clone(),
                    implausibility: imp,
                    probability: p,
                })
                .collect(),
            joint_probability: crate::emulator::joint_probability(&probs),
        }
    });
    Ok(Selection {
        policy,
        preference: preference.to_string(),
        qualifying,
        design,
    })
}

/// JSON has no infinities; these are written as the strings `inf` and `-inf`.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonFloat {
    Number(f64),
    Text(String),
}

impl JsonFloat {
    fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            JsonFloat::Number(v)
        } else {
            JsonFloat::Text(v.to_string())
        }
    }

    fn into_f64<E: serde::de::Error>(self) -> std::result::Result<f64, E> {
        match self {
            JsonFloat::Number(v) => Ok(v),
            JsonFloat::Text(s) => s.parse().map_err(|_| E::custom(format!("invalid number `{s}`"))),
        }
    }
}

mod extended_float {
    use super::JsonFloat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        JsonFloat::from_f64(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        JsonFloat::deserialize(d)?.into_f64()
    }
}

mod extended_floats {
    use super::JsonFloat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| JsonFloat::from_f64(*x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<JsonFloat>::deserialize(d)?.into_iter().map(JsonFloat::into_f64).collect()
    }
}
