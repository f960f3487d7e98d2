//! Live trial conduct as an event-sourced state machine.
//!
//! A [`TrialState`] is a pure fold of its [`Event`] log. Commands never
//! mutate state directly: [`TrialState::record_outcomes`] validates a batch
//! and returns the events it implies, and [`TrialState::advance`] runs any
//! refit that has become due and returns its events. Callers append the
//! events to their log and apply them. Refits use the same seeds as the
//! simulator, so a trial conducted here reproduces [`simulate_trial`]
//! decision for decision when fed the same outcomes.
//!
//! [`simulate_trial`]: crate::simulator::simulate_trial

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Design, RawDose};
use crate::error::{Error, Result};
use crate::inference::{OutcomeRecord, PosteriorDraws, Stage};
use crate::math::{EfficacyStageParams, MtdCurve, StdDose, ToxicityParams};
use crate::simulator::TrialEnd;
use crate::stage1::{stage1_step, Stage1Decision};
use crate::stage2::{
    initial_allocation, stage2_step, ExceedanceSurface, Stage2Decision, Stage2FitSummary, Verdict,
};

/// Points in the curve summary of a [`StateDocument`].
pub const CURVE_SUMMARY_POINTS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Stage1,
    /// Stage I is complete but some stage-I efficacy outcomes are missing.
    AwaitingStage1Efficacy,
    Stage2,
    StoppedStage1Safety,
    StoppedNoCurve,
    StoppedSafety,
    StoppedFutility,
    StoppedEfficacy,
    Complete,
}

impl TrialStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(
            self,
            TrialStatus::Stage1 | TrialStatus::AwaitingStage1Efficacy | TrialStatus::Stage2
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Assignment {
    pub patient: usize,
    pub dose: StdDose,
}

/// One entry of the append-only trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        design: Design,
        seed: u64,
    },
    Assigned {
        stage: Stage,
        cohort: usize,
        patients: Vec<Assignment>,
    },
    OutcomeRecorded {
        patient: usize,
        z: Option<bool>,
        e: Option<bool>,
    },
    Stage1Refit {
        cohort: usize,
        /// SHA-256 of the posterior draws.
        digest: String,
        p_rho00_above_theta: f64,
        medians: ToxicityParams,
        decision: Stage1Decision,
    },
    Stage2Refit {
        n2: usize,
        digest: String,
        surface: ExceedanceSurface,
        exnex_weight: f64,
        stage2_mean: EfficacyStageParams,
        safety_tail: f64,
        verdict: Verdict,
        warnings: Vec<String>,
    },
}

/// Outcomes reported for one patient. Absent fields stay pending.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct OutcomeEntry {
    pub patient: usize,
    /// When given, must match the stage the patient was enrolled in.
    #[serde(default)]
    pub stage: Option<Stage>,
    #[serde(default)]
    pub z: Option<bool>,
    #[serde(default)]
    pub e: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CohortAssignment {
    pub stage: Stage,
    pub cohort: usize,
    pub patients: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Stage1FitRecord {
    pub cohort: usize,
    pub digest: String,
    pub p_rho00_above_theta: f64,
    pub medians: ToxicityParams,
}

/// Current trial state. Equal logs fold to equal states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct TrialState {
    pub design: Design,
    pub seed: u64,
    pub status: TrialStatus,
    pub records: Vec<OutcomeRecord>,
    pub cohorts: Vec<CohortAssignment>,
    pub stage1_fits: Vec<Stage1FitRecord>,
    pub curve: Option<MtdCurve>,
    pub curve_error: Option<String>,
    pub stage2_fits: Vec<Stage2FitSummary>,
    pub surface: Option<ExceedanceSurface>,
    pub exnex_weight: Option<f64>,
    pub stage2_mean: Option<EfficacyStageParams>,
    pub safety_tail: Option<f64>,
    pub decision: Option<Stage2Decision>,
    pub end: Option<TrialEnd>,
    pub warnings: Vec<String>,
    pub event_count: usize,
}

/// SHA-256 over parameter names and the little-endian bits of every draw.
pub fn draws_digest(draws: &PosteriorDraws) -> String {
    let mut h = Sha256::new();
    for (name, col) in draws.names().iter().zip(draws.columns()) {
        h.update(name.as_bytes());
        h.update([0u8]);
        for v in col {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Precondition(format!("malformed event log: {}", msg.into()))
}

impl TrialState {
    /// Log prefix of a new trial: creation and the first stage-I cohort.
    pub fn create(design: Design, seed: u64) -> Result<Vec<Event>> {
        design.validate()?;
        let start = design.stage1.start_dose;
        Ok(vec![
            Event::Created { design, seed },
            Event::Assigned {
                stage: Stage::One,
                cohort: 1,
                patients: vec![
                    Assignment { patient: 0, dose: start },
                    Assignment { patient: 1, dose: start },
                ],
            },
        ])
    }

    /// Folds a complete log.
    pub fn replay(events: &[Event]) -> Result<Self> {
        let (first, rest) = events.split_first().ok_or_else(|| malformed("empty"))?;
        let Event::Created { design, seed } = first else {
            return Err(malformed("first event must be `created`"));
        };
        let mut s = TrialState {
            design: design.clone(),
            seed: *seed,
            status: TrialStatus::Stage1,
            records: Vec::new(),
            cohorts: Vec::new(),
            stage1_fits: Vec::new(),
            curve: None,
            curve_error: None,
            stage2_fits: Vec::new(),
            surface: None,
            exnex_weight: None,
            stage2_mean: None,
            safety_tail: None,
            decision: None,
            end: None,
            warnings: Vec::new(),
            event_count: 1,
        };
        for e in rest {
            s.apply(e)?;
        }
        Ok(s)
    }

    pub fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::Created { .. } => return Err(malformed("duplicate `created`")),
            Event::Assigned { stage, cohort, patients } => {
                if self.status.is_terminal() {
                    return Err(malformed("assignment after a terminal decision"));
                }
                let mut ids = Vec::with_capacity(patients.len());
                for a in patients {
                    if a.patient != self.records.len() {
                        return Err(malformed(format!("patient {} out of sequence", a.patient)));
                    }
                    self.records.push(OutcomeRecord {
                        patient: a.patient,
                        stage: *stage,
                        dose: a.dose,
                        z: None,
                        e: None,
                    });
                    ids.push(a.patient);
                }
                self.cohorts.push(CohortAssignment {
                    stage: *stage,
                    cohort: *cohort,
                    patients: ids,
                });
                if *stage == Stage::Two {
                    self.status = TrialStatus::Stage2;
                }
            }
            Event::OutcomeRecorded { patient, z, e } => {
                let r = self
                    .records
                    .get_mut(*patient)
                    .ok_or_else(|| malformed(format!("outcome for unknown patient {patient}")))?;
                if z.is_some() {
                    r.z = *z;
                }
                if e.is_some() {
                    r.e = *e;
                }
            }
            Event::Stage1Refit {
                cohort,
                digest,
                p_rho00_above_theta,
                medians,
                decision,
            } => {
                self.stage1_fits.push(Stage1FitRecord {
                    cohort: *cohort,
                    digest: digest.clone(),
                    p_rho00_above_theta: *p_rho00_above_theta,
                    medians: *medians,
                });
                match decision {
                    Stage1Decision::Next { .. } => {}
                    Stage1Decision::StopSafety => {
                        self.status = TrialStatus::StoppedStage1Safety;
                        self.end = Some(TrialEnd::Stage1Safety);
                    }
                    Stage1Decision::Complete { curve, curve_error } => {
                        self.curve = *curve;
                        self.curve_error = curve_error.clone();
                        if curve.is_some() {
                            self.status = TrialStatus::AwaitingStage1Efficacy;
                        } else {
                            self.status = TrialStatus::StoppedNoCurve;
                            self.end = Some(TrialEnd::NoCurve);
                        }
                    }
                }
            }
            Event::Stage2Refit {
                n2,
                surface,
                exnex_weight,
                stage2_mean,
                safety_tail,
                verdict,
                warnings,
                ..
            } => {
                self.stage2_fits.push(Stage2FitSummary {
                    n2: *n2,
                    max_exceedance: surface.max,
                    optimal_dose: surface.optimal_dose(),
                    exnex_weight: *exnex_weight,
                    verdict: *verdict,
                });
                self.decision = Some(Stage2Decision {
                    verdict: *verdict,
                    max_exceedance: surface.max,
                    optimal_dose: surface.optimal_dose(),
                });
                self.surface = Some(surface.clone());
                self.exnex_weight = Some(*exnex_weight);
                self.stage2_mean = Some(*stage2_mean);
                self.safety_tail = Some(*safety_tail);
                self.warnings.extend(warnings.iter().cloned());
                let status = match verdict {
                    Verdict::Continue => TrialStatus::Stage2,
                    Verdict::StopFutility => TrialStatus::StoppedFutility,
                    Verdict::StopEfficacy => TrialStatus::StoppedEfficacy,
                    Verdict::StopSafety => TrialStatus::StoppedSafety,
                    Verdict::CompleteRejectH0 | Verdict::CompleteAcceptH0 => TrialStatus::Complete,
                };
                if status.is_terminal() {
                    self.end = Some(TrialEnd::Stage2(*verdict));
                }
                self.status = status;
            }
        }
        self.event_count += 1;
        Ok(())
    }

    pub fn stage1_records(&self) -> Vec<OutcomeRecord> {
        self.records.iter().filter(|r| r.stage == Stage::One).copied().collect()
    }

    pub fn stage2_records(&self) -> Vec<OutcomeRecord> {
        self.records.iter().filter(|r| r.stage == Stage::Two).copied().collect()
    }

    pub fn current_cohort(&self) -> Option<&CohortAssignment> {
        self.cohorts.last()
    }

    /// Patients whose outcomes are still needed before the trial can move on.
    pub fn awaiting(&self) -> Vec<usize> {
        match self.status {
            TrialStatus::Stage1 => self
                .current_cohort()
                .map(|c| c.patients.iter().copied().filter(|&p| self.records[p].z.is_none()).collect())
                .unwrap_or_default(),
            TrialStatus::AwaitingStage1Efficacy => self
                .records
                .iter()
                .filter(|r| r.stage == Stage::One && r.e.is_none())
                .map(|r| r.patient)
                .collect(),
            TrialStatus::Stage2 => self
                .current_cohort()
                .map(|c| {
                    c.patients
                        .iter()
                        .copied()
                        .filter(|&p| self.records[p].z.is_none() || self.records[p].e.is_none())
                        .collect()
                })
                .unwrap_or_default(),
            _ => Vec::new(),
        }
    }

    /// Validates a batch of outcomes and returns the events that record it.
    pub fn record_outcomes(&self, batch: &[OutcomeEntry]) -> Result<Vec<Event>> {
        if self.status.is_terminal() {
            return Err(Error::Conflict(format!(
                "trial is {}",
                serde_json::to_value(self.status)?.as_str().unwrap_or("stopped")
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::with_capacity(batch.len());
        for (i, entry) in batch.iter().enumerate() {
            let at = |m: String| Error::Conflict(format!("outcomes/{i}: {m}"));
            let r = self
                .records
                .get(entry.patient)
                .ok_or_else(|| at(format!("unknown patient {}", entry.patient)))?;
            if !seen.insert(entry.patient) {
                return Err(at(format!("patient {} reported twice in one batch", entry.patient)));
            }
            if let Some(s) = entry.stage {
                if s != r.stage {
                    return Err(at(format!(
                        "patient {} was enrolled in stage {}, not stage {}",
                        entry.patient,
                        r.stage.number(),
                        s.number()
                    )));
                }
            }
            if entry.z.is_none() && entry.e.is_none() {
                return Err(at(format!("no outcome given for patient {}", entry.patient)));
            }
            if entry.z.is_some() && r.z.is_some() {
                return Err(at(format!("Z already recorded for patient {}", entry.patient)));
            }
            if entry.e.is_some() && r.e.is_some() {
                return Err(at(format!("E already recorded for patient {}", entry.patient)));
            }
            out.push(Event::OutcomeRecorded {
                patient: entry.patient,
                z: entry.z,
                e: entry.e,
            });
        }
        Ok(out)
    }

    /// Whether [`advance`](Self::advance) would produce events.
    pub fn advance_due(&self) -> bool {
        match self.status {
            TrialStatus::Stage1 => {
                let n_fits = self.stage1_fits.len();
                self.cohorts.len() > n_fits && self.awaiting().is_empty()
            }
            TrialStatus::AwaitingStage1Efficacy => self.awaiting().is_empty(),
            TrialStatus::Stage2 => {
                let n2 = self.stage2_records().len();
                self.awaiting().is_empty() && self.stage2_fits.last().is_none_or(|f| f.n2 < n2)
            }
            _ => false,
        }
    }

    /// Runs every refit and transition that is due, in order, applying
    /// the resulting events to `self`. Returns the new events.
    pub fn advance(&mut self) -> Result<Vec<Event>> {
        let mut out = Vec::new();
        while self.advance_due() {
            for e in self.next_events()? {
                self.apply(&e)?;
                out.push(e);
            }
        }
        Ok(out)
    }

    fn next_events(&self) -> Result<Vec<Event>> {
        let d = &self.design;
        match self.status {
            TrialStatus::Stage1 => {
                let records = self.stage1_records();
                let step = stage1_step(&records, &d.stage1, &d.tox_prior, &d.mcmc, self.seed)?;
                let mut ev = vec![Event::Stage1Refit {
                    cohort: step.cohort,
                    digest: draws_digest(&step.draws),
                    p_rho00_above_theta: step.p_rho00_above_theta,
                    medians: step.medians,
                    decision: step.decision.clone(),
                }];
                if let Stage1Decision::Next { doses } = step.decision {
                    let first = self.records.len();
                    ev.push(Event::Assigned {
                        stage: Stage::One,
                        cohort: step.cohort + 1,
                        patients: doses
                            .iter()
                            .enumerate()
                            .map(|(k, &dose)| Assignment { patient: first + k, dose })
                            .collect(),
                    });
                }
                Ok(ev)
            }
            TrialStatus::AwaitingStage1Efficacy => {
                let curve = self.curve.ok_or_else(|| malformed("stage II without a curve"))?;
                let doses = initial_allocation(&curve, d.stage2.n_bar1)?;
                Ok(vec![self.assign_stage2(1, &doses)])
            }
            TrialStatus::Stage2 => {
                let curve = self.curve.ok_or_else(|| malformed("stage II without a curve"))?;
                let step = stage2_step(
                    &curve,
                    &self.stage1_records(),
                    &self.stage2_records(),
                    &d.stage2,
                    &d.hyper,
                    &d.mcmc,
                    self.seed,
                )?;
                let mut ev = vec![Event::Stage2Refit {
                    n2: step.n2,
                    digest: draws_digest(&step.draws),
                    surface: step.surface.clone(),
                    exnex_weight: step.exnex_weight,
                    stage2_mean: step.stage2_mean,
                    safety_tail: step.safety_tail,
                    verdict: step.verdict,
                    warnings: step.warnings.clone(),
                }];
                if step.verdict == Verdict::Continue {
                    let cohort = self.cohorts.iter().filter(|c| c.stage == Stage::Two).count() + 1;
                    ev.push(self.assign_stage2(cohort, &step.next));
                }
                Ok(ev)
            }
            _ => Ok(Vec::new()),
        }
    }

    fn assign_stage2(&self, cohort: usize, doses: &[StdDose]) -> Event {
        let first = self.records.len();
        Event::Assigned {
            stage: Stage::Two,
            cohort,
            patients: doses
                .iter()
                .enumerate()
                .map(|(k, &dose)| Assignment { patient: first + k, dose })
                .collect(),
        }
    }

    /// What the trial would do if `batch` were real. `self` is untouched.
    pub fn dry_run(&self, batch: &[OutcomeEntry]) -> Result<DryRun> {
        let mut s = self.clone();
        let mut events = s.record_outcomes(batch)?;
        for e in &events {
            s.apply(e)?;
        }
        events.extend(s.advance()?);
        Ok(DryRun {
            recommendation: s.recommendation(),
            events,
        })
    }

    pub fn recommendation(&self) -> Recommendation {
        let agents = &self.design.agents;
        let view = |p: usize| PatientDose {
            patient: p,
            dose: DoseView::new(self.records[p].dose, agents.raw(self.records[p].dose)),
        };
        let cohort = if self.status.is_terminal() {
            None
        } else {
            self.current_cohort().map(|c| CohortView {
                stage: c.stage,
                cohort: c.cohort,
                patients: c.patients.iter().map(|&p| view(p)).collect(),
            })
        };
        let kind = match self.status {
            TrialStatus::AwaitingStage1Efficacy => RecommendationKind::AwaitingStage1Efficacy,
            s if s.is_terminal() => RecommendationKind::Decision,
            _ => RecommendationKind::Dose,
        };
        Recommendation {
            kind,
            status: self.status,
            cohort,
            awaiting: self.awaiting(),
            decision: self.end.map(|end| DecisionView {
                end,
                rule: rule_fired(end).into(),
                max_exceedance: self.decision.map(|d| d.max_exceedance),
                optimal_dose: self
                    .decision
                    .map(|d| DoseView::new(d.optimal_dose, agents.raw(d.optimal_dose))),
            }),
        }
    }

    /// Threshold checks at the latest fits.
    pub fn rule_statuses(&self) -> Vec<RuleStatus> {
        let mut out = Vec::new();
        let s1 = &self.design.stage1;
        let s2 = &self.design.stage2;
        if let Some(f) = self.stage1_fits.last() {
            out.push(RuleStatus::above("stage1_safety", f.p_rho00_above_theta, s1.safety_xi, true));
        }
        if let (Some(f), Some(tail)) = (self.stage2_fits.last(), self.safety_tail) {
            let interim = f.n2 < s2.n2_max;
            out.push(RuleStatus::above("stage2_safety", tail, s2.delta_theta, true));
            out.push(RuleStatus::below("futility", f.max_exceedance, s2.delta_0, interim));
            out.push(RuleStatus::above("early_efficacy", f.max_exceedance, s2.delta_1, interim));
            out.push(RuleStatus::above("final_efficacy", f.max_exceedance, s2.delta_u, !interim));
        }
        out
    }

    pub fn document(&self) -> StateDocument {
        let agents = &self.design.agents;
        let curve = self.curve.map(|c| {
            let grid = c.grid(CURVE_SUMMARY_POINTS);
            CurveSummary {
                params: c.tox,
                x_lo: c.x_lo,
                x_hi: c.x_hi,
                grid: grid.points.iter().map(|&d| DoseView::new(d, agents.raw(d))).collect(),
            }
        });
        let surface = self.surface.as_ref().map(|s| SurfaceView::new(s, &self.design));
        StateDocument {
            status: self.status,
            seed: self.seed,
            design: self.design.clone(),
            patients: self
                .records
                .iter()
                .map(|r| PatientView {
                    patient: r.patient,
                    stage: r.stage,
                    cohort: self
                        .cohorts
                        .iter()
                        .find(|c| c.patients.contains(&r.patient))
                        .map_or(0, |c| c.cohort),
                    dose: DoseView::new(r.dose, agents.raw(r.dose)),
                    z: r.z,
                    e: r.e,
                })
                .collect(),
            curve,
            curve_error: self.curve_error.clone(),
            stage1_fits: self.stage1_fits.clone(),
            stage2_fits: self.stage2_fits.clone(),
            surface,
            rules: self.rule_statuses(),
            exnex_weight: self.exnex_weight,
            recommendation: self.recommendation(),
            warnings: self.warnings.clone(),
            event_count: self.event_count,
        }
    }
}

/// Name of the rule behind a terminal outcome.
pub fn rule_fired(end: TrialEnd) -> &'static str {
    match end {
        TrialEnd::Stage1Safety => "stage1_safety",
        TrialEnd::NoCurve => "no_curve",
        TrialEnd::Stage2(Verdict::StopSafety) => "stage2_safety",
        TrialEnd::Stage2(Verdict::StopFutility) => "futility",
        TrialEnd::Stage2(Verdict::StopEfficacy) => "early_efficacy",
        TrialEnd::Stage2(Verdict::CompleteRejectH0 | Verdict::CompleteAcceptH0) => "final_efficacy",
        TrialEnd::Stage2(Verdict::Continue) => "none",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DoseView {
    pub x: f64,
    pub y: f64,
    /// Raw dose of agent A in mg/m².
    pub dose_a: f64,
    pub dose_b: f64,
}

impl DoseView {
    pub fn new(d: StdDose, raw: RawDose) -> Self {
        DoseView {
            x: d.x,
            y: d.y,
            dose_a: raw.a,
            dose_b: raw.b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PatientDose {
    pub patient: usize,
    pub dose: DoseView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CohortView {
    pub stage: Stage,
    pub cohort: usize,
    pub patients: Vec<PatientDose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationKind {
    /// Treat the listed cohort and report its outcomes.
    Dose,
    AwaitingStage1Efficacy,
    /// A refit is running; poll again.
    Pending,
    Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DecisionView {
    pub end: TrialEnd,
    pub rule: String,
    pub max_exceedance: Option<f64>,
    pub optimal_dose: Option<DoseView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Recommendation {
    pub kind: RecommendationKind,
    pub status: TrialStatus,
    pub cohort: Option<CohortView>,
    /// Patients with outcomes still to report.
    pub awaiting: Vec<usize>,
    pub decision: Option<DecisionView>,
}

impl Recommendation {
    pub fn pending(status: TrialStatus) -> Self {
        Recommendation {
            kind: RecommendationKind::Pending,
            status,
            cohort: None,
            awaiting: Vec::new(),
            decision: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DryRun {
    pub recommendation: Recommendation,
    /// Events the batch would produce. Never persisted.
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RuleStatus {
    pub rule: String,
    pub value: f64,
    pub threshold: f64,
    /// `above` fires when value > threshold, `below` when value < threshold.
    pub direction: String,
    /// Whether the rule is evaluated at the current phase.
    pub active: bool,
    pub fired: bool,
}

impl RuleStatus {
    fn above(rule: &str, value: f64, threshold: f64, active: bool) -> Self {
        RuleStatus {
            rule: rule.into(),
            value,
            threshold,
            direction: "above".into(),
            active,
            fired: active && value > threshold,
        }
    }

    fn below(rule: &str, value: f64, threshold: f64, active: bool) -> Self {
        RuleStatus {
            rule: rule.into(),
            value,
            threshold,
            direction: "below".into(),
            active,
            fired: active && value < threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CurveSummary {
    pub params: ToxicityParams,
    pub x_lo: f64,
    pub x_hi: f64,
    pub grid: Vec<DoseView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SurfacePoint {
    pub dose: DoseView,
    pub prob: f64,
}

/// Exceedance surface along the estimated curve with the decision thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SurfaceView {
    pub p0: f64,
    pub points: Vec<SurfacePoint>,
    pub max: f64,
    pub argmax: usize,
    pub delta_0: f64,
    pub delta_u: f64,
    pub delta_1: f64,
}

impl SurfaceView {
    pub fn new(s: &ExceedanceSurface, design: &Design) -> Self {
        SurfaceView {
            p0: design.stage2.p0,
            points: s
                .points
                .iter()
                .zip(&s.prob)
                .map(|(&d, &prob)| SurfacePoint {
                    dose: DoseView::new(d, design.agents.raw(d)),
                    prob,
                })
                .collect(),
            max: s.max,
            argmax: s.argmax,
            delta_0: design.stage2.delta_0,
            delta_u: design.stage2.delta_u,
            delta_1: design.stage2.delta_1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PatientView {
    pub patient: usize,
    pub stage: Stage,
    pub cohort: usize,
    pub dose: DoseView,
    pub z: Option<bool>,
    pub e: Option<bool>,
}

/// Everything a client needs to render a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct StateDocument {
    pub status: TrialStatus,
    pub seed: u64,
    pub design: Design,
    pub patients: Vec<PatientView>,
    pub curve: Option<CurveSummary>,
    pub curve_error: Option<String>,
    pub stage1_fits: Vec<Stage1FitRecord>,
    pub stage2_fits: Vec<Stage2FitSummary>,
    pub surface: Option<SurfaceView>,
    pub rules: Vec<RuleStatus>,
    pub exnex_weight: Option<f64>,
    pub recommendation: Recommendation,
    pub warnings: Vec<String>,
    pub event_count: usize,
}

/// An in-memory trial: the log and its fold kept in step.
#[derive(Debug, Clone)]
pub struct Trial {
    events: Vec<Event>,
    state: TrialState,
}

impl Trial {
    pub fn new(design: Design, seed: u64) -> Result<Self> {
        Self::from_events(TrialState::create(design, seed)?)
    }

    pub fn from_events(events: Vec<Event>) -> Result<Self> {
        let state = TrialState::replay(&events)?;
        Ok(Trial { events, state })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn state(&self) -> &TrialState {
        &self.state
    }

    /// Appends already-validated events.
    pub fn append(&mut self, events: Vec<Event>) -> Result<()> {
        for e in &events {
            self.state.apply(e)?;
        }
        self.events.extend(events);
        Ok(())
    }

    /// Records a batch and runs every refit it makes due. Returns the new events.
    pub fn record(&mut self, batch: &[OutcomeEntry]) -> Result<Vec<Event>> {
        let mut ev = self.state.record_outcomes(batch)?;
        self.append(ev.clone())?;
        let more = self.state.clone().advance()?;
        self.append(more.clone())?;
        ev.extend(more);
        Ok(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::McmcConfig;

    fn quick_design() -> Design {
        let mut d = Design::ciscab();
        d.mcmc = McmcConfig {
            chains: 1,
            burn_in: 100,
            kept_per_chain: 200,
            thin: 1,
        };
        d.stage1.n1_max = 4;
        d.stage2.grid_size = 51;
        d
    }

    fn entry(patient: usize, z: Option<bool>, e: Option<bool>) -> OutcomeEntry {
        OutcomeEntry {
            patient,
            stage: None,
            z,
            e,
        }
    }

    #[test]
    fn fresh_trial_recommends_start_dose() {
        let t = Trial::new(Design::ciscab(), 1).unwrap();
        let r = t.state().recommendation();
        assert_eq!(r.kind, RecommendationKind::Dose);
        let p = &r.cohort.unwrap().patients;
        assert_eq!(p.len(), 2);
        assert!((p[0].dose.dose_a - 15.0).abs() < 1e-9 && (p[0].dose.dose_b - 75.0).abs() < 1e-9);
        assert!(t.state().records.iter().all(|r| r.z.is_none()));
    }

    #[test]
    fn conflicts_are_reported() {
        let mut t = Trial::new(quick_design(), 2).unwrap();
        assert!(matches!(
            t.state().record_outcomes(&[entry(7, Some(false), None)]),
            Err(Error::Conflict(_))
        ));
        t.record(&[entry(0, None, Some(true))]).unwrap();
        assert!(matches!(
            t.state().record_outcomes(&[entry(0, None, Some(false))]),
            Err(Error::Conflict(_))
        ));
        assert!(matches!(
            t.state().record_outcomes(&[entry(1, Some(false), None), entry(1, None, Some(false))]),
            Err(Error::Conflict(_))
        ));
        let wrong_stage = OutcomeEntry {
            stage: Some(Stage::Two),
            ..entry(1, Some(false), None)
        };
        assert!(matches!(t.state().record_outcomes(&[wrong_stage]), Err(Error::Conflict(_))));
    }

    #[test]
    fn partial_cohort_does_not_refit() {
        let mut t = Trial::new(quick_design(), 3).unwrap();
        let ev = t.record(&[entry(0, Some(false), Some(false))]).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(t.state().awaiting(), vec![1]);
    }

    #[test]
    fn second_cohort_changes_one_coordinate_per_patient() {
        let mut t = Trial::new(quick_design(), 4).unwrap();
        t.record(&[entry(0, Some(false), None), entry(1, Some(false), None)]).unwrap();
        let s = t.state();
        assert_eq!(s.cohorts.len(), 2);
        let start = s.design.stage1.start_dose;
        let (a, b) = (s.records[2].dose, s.records[3].dose);
        assert_eq!(a.y, start.y);
        assert_ne!(a.x, start.x);
        assert_eq!(b.x, start.x);
        assert_ne!(b.y, start.y);
    }

    #[test]
    fn stage1_end_waits_for_efficacy_then_replays() {
        let mut t = Trial::new(quick_design(), 5).unwrap();
        for c in 0..2 {
            let p = 2 * c;
            t.record(&[entry(p, Some(false), None), entry(p + 1, Some(false), None)]).unwrap();
        }
        let s = t.state();
        if s.status == TrialStatus::AwaitingStage1Efficacy {
            assert_eq!(s.awaiting(), vec![0, 1, 2, 3]);
            let batch: Vec<_> = (0..4).map(|p| entry(p, None, Some(p % 2 == 0))).collect();
            t.record(&batch).unwrap();
            assert_eq!(t.state().status, TrialStatus::Stage2);
            assert_eq!(t.state().stage2_records().len(), t.state().design.stage2.n_bar1);
        }
        let replayed = TrialState::replay(t.events()).unwrap();
        assert_eq!(&replayed, t.state());
    }

    #[test]
    fn dry_run_leaves_state_untouched() {
        let t = Trial::new(quick_design(), 6).unwrap();
        let before = t.state().clone();
        let dr = t
            .state()
            .dry_run(&[entry(0, Some(true), None), entry(1, Some(true), None)])
            .unwrap();
        assert!(!dr.events.is_empty());
        assert_eq!(t.state(), &before);
        let empty = t.state().dry_run(&[]).unwrap();
        assert_eq!(empty.recommendation, t.state().recommendation());
        assert!(empty.events.is_empty());
    }

    #[test]
    fn events_round_trip_through_json() {
        let mut t = Trial::new(quick_design(), 7).unwrap();
        t.record(&[entry(0, Some(false), Some(true)), entry(1, Some(true), Some(false))])
            .unwrap();
        for e in t.events() {
            let line = serde_json::to_string(e).unwrap();
            let back: Event = serde_json::from_str(&line).unwrap();
            assert_eq!(&back, e);
            assert_eq!(serde_json::to_string(&back).unwrap(), line);
        }
    }
}
