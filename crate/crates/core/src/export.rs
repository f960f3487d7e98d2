//! Tidy CSV outputs for trajectories, curve grids and operating characteristics.

use std::io::Write;

use crate::config::Agents;
use crate::error::{Error, Result};
use crate::inference::{OutcomeRecord, Stage};
use crate::math::StdDose;
use crate::simulator::{OcReport, OcSummary};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn flag(v: Option<bool>) -> String {
    v.map_or_else(String::new, |b| (b as u8).to_string())
}

/// 1-based cohort of a record: pairs in stage I; the initial cohort and
/// then blocks of `n_bar2` in stage II.
pub fn cohort_of(record: &OutcomeRecord, stage2_offset: usize, n_bar1: usize, n_bar2: usize) -> usize {
    match record.stage {
        Stage::One => record.patient / 2 + 1,
        Stage::Two => {
            let k = record.patient - stage2_offset;
            if k < n_bar1 {
                1
            } else {
                2 + (k - n_bar1) / n_bar2
            }
        }
    }
}

/// Patient trajectory with raw and standardized doses. Pending outcomes are empty.
pub fn write_trajectory<W: Write>(
    w: W,
    records: &[OutcomeRecord],
    agents: &Agents,
    n_bar1: usize,
    n_bar2: usize,
) -> Result<()> {
    let offset = records
        .iter()
        .find(|r| r.stage == Stage::Two)
        .map_or(0, |r| r.patient);
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["patient", "stage", "cohort", "x", "y", "dose_a", "dose_b", "z", "e"])?;
    for r in records {
        let raw = agents.raw(r.dose);
        wr.write_record([
            r.patient.to_string(),
            r.stage.number().to_string(),
            cohort_of(r, offset, n_bar1, n_bar2).to_string(),
            r.dose.x.to_string(),
            r.dose.y.to_string(),
            raw.a.to_string(),
            raw.b.to_string(),
            flag(r.z),
            flag(r.e),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Stage-I trajectory: patient, cohort, doses and DLT.
pub fn write_stage1_trajectory<W: Write>(w: W, records: &[OutcomeRecord], agents: &Agents) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["patient", "cohort", "dose_a", "dose_b", "x", "y", "z"])?;
    for r in records.iter().filter(|r| r.stage == Stage::One) {
        let raw = agents.raw(r.dose);
        wr.write_record([
            r.patient.to_string(),
            (r.patient / 2 + 1).to_string(),
            raw.a.to_string(),
            raw.b.to_string(),
            r.dose.x.to_string(),
            r.dose.y.to_string(),
            flag(r.z),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_curve_grid<W: Write>(w: W, points: &[StdDose], agents: &Agents) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k", "x", "y", "dose_a", "dose_b"])?;
    for (k, d) in points.iter().enumerate() {
        let raw = agents.raw(*d);
        wr.write_record([
            k.to_string(),
            d.x.to_string(),
            d.y.to_string(),
            raw.a.to_string(),
            raw.b.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// One row per value of `w`.
pub fn write_oc_table<W: Write>(w: W, summaries: &[OcSummary]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "w",
        "m",
        "reject_rate",
        "p_stop_futility",
        "p_stop_efficacy",
        "p_stop_safety",
        "p_no_curve",
        "n_stage2",
        "mean_n2",
        "alloc_above_p0",
        "p_optimal_above_p0",
        "mean_exnex_weight",
        "bias_beta1",
        "mse_beta1",
        "bias_beta2",
        "mse_beta2",
    ])?;
    for s in summaries {
        wr.write_record([
            s.w.to_string(),
            s.m.to_string(),
            s.reject_rate.to_string(),
            s.p_stop_futility.to_string(),
            s.p_stop_efficacy.to_string(),
            s.p_stop_safety.to_string(),
            s.p_no_curve.to_string(),
            s.n_stage2.to_string(),
            s.mean_n2.to_string(),
            opt(s.alloc_above_p0),
            opt(s.p_optimal_above_p0),
            opt(s.mean_exnex_weight),
            opt(s.bias_beta1),
            opt(s.mse_beta1),
            opt(s.bias_beta2),
            opt(s.mse_beta2),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reject rate per `w` and its difference from the first entry.
pub fn write_power_by_w<W: Write>(w: W, summaries: &[OcSummary]) -> Result<()> {
    let base = summaries
        .first()
        .ok_or_else(|| Error::Precondition("no summaries".into()))?
        .reject_rate;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["w", "reject_rate", "difference"])?;
    for s in summaries {
        wr.write_record([s.w.to_string(), s.reject_rate.to_string(), (s.reject_rate - base).to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Mean exceedance along the true curve for summary `k`, one row per grid point.
pub fn write_surface<W: Write>(w: W, report: &OcReport, k: usize) -> Result<()> {
    let s = report
        .summaries
        .get(k)
        .ok_or_else(|| Error::NotFound(format!("summary {k}")))?;
    let agents = &report.design.agents;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["w", "k", "x", "y", "dose_a", "dose_b", "mean_exceedance"])?;
    for (i, (d, p)) in report.true_curve_grid.iter().zip(&s.mean_exceedance_surface).enumerate() {
        let raw = agents.raw(*d);
        wr.write_record([
            s.w.to_string(),
            i.to_string(),
            d.x.to_string(),
            d.y.to_string(),
            raw.a.to_string(),
            raw.b.to_string(),
            p.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
