//! Where patient outcomes come from when a trial is run in-process.

use crate::inference::Stage;
use crate::math::StdDose;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub z: bool,
    pub e: bool,
}

/// Resolves a patient's DLT and efficacy outcomes at assignment time.
pub trait OutcomeSource {
    fn outcome(&mut self, patient: usize, stage: Stage, dose: StdDose) -> Outcome;
}

impl<F: FnMut(usize, Stage, StdDose) -> Outcome> OutcomeSource for F {
    fn outcome(&mut self, patient: usize, stage: Stage, dose: StdDose) -> Outcome {
        self(patient, stage, dose)
    }
}
