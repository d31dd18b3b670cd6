//! Emulated voltage glitching.
//!
//! Glitch parameters are given in glitch-clock cycles and mapped onto target
//! cycles counted from the TRIG timestamp. Each trial first decides whether
//! the glitch browns the target out; if not, every target cycle inside the
//! mapped window receives a random single-cycle fault with probability
//! `fault_prob`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::campaign::{
    classify, CampaignError, CampaignReport, Category, CategoryCounts, Target, BUDGET_FACTOR, PROFILE_BUDGET,
};
use crate::failsafe::{ActionMode, ActionOptions};
use crate::faults::{step_with_fault, FaultModel, FaultSpec, NUM_REGISTERS};
use crate::isa::{Machine, Termination};
use crate::report::{
    json_document, RunManifest, GLITCH_ACTIONS_SCHEMA, GLITCH_CELLS_SCHEMA, GLITCH_CORRELATION_SCHEMA,
    GLITCH_SUMMARY_SCHEMA,
};

#[derive(Debug, Error)]
pub enum GlitchError {
    #[error("invalid glitch config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    ConfigFile { path: String, message: String },
    #[error("the fault-free run never executed TRIG")]
    TrigNeverExecuted,
    #[error("trials must be at least 1")]
    NoTrials,
    #[error(transparent)]
    Campaign(#[from] CampaignError),
}

/// Width-to-reset-probability map. Must be non-decreasing in width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResetCurve {
    /// `ceiling / (1 + exp(-steepness * (width - midpoint)))`.
    Logistic {
        midpoint: f64,
        steepness: f64,
        #[serde(default = "one")]
        ceiling: f64,
    },
    /// Step function through `(width, probability)` points; widths below
    /// the first point get probability 0.
    Table {
        points: Vec<(u32, f64)>,
    },
    Constant {
        probability: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for ResetCurve {
    fn default() -> Self {
        ResetCurve::Logistic {
            midpoint: 4.0,
            steepness: 1.0,
            ceiling: 1.0,
        }
    }
}

impl ResetCurve {
    pub fn probability(&self, width: u32) -> f64 {
        match self {
            ResetCurve::Logistic {
                midpoint,
                steepness,
                ceiling,
            } => ceiling / (1.0 + (-steepness * (f64::from(width) - midpoint)).exp()),
            ResetCurve::Table { points } => points.iter().rev().find(|(w, _)| *w <= width).map_or(0.0, |&(_, p)| p),
            ResetCurve::Constant { probability } => *probability,
        }
    }

    pub fn validate(&self) -> Result<(), GlitchError> {
        let bad = |m: String| Err(GlitchError::Config(m));
        match self {
            ResetCurve::Logistic {
                midpoint,
                steepness,
                ceiling,
            } => {
                if !midpoint.is_finite() || !steepness.is_finite() || *steepness < 0.0 {
                    return bad("logistic reset curve needs a finite midpoint and steepness >= 0".into());
                }
                if !unit(*ceiling) {
                    return bad(format!("reset curve ceiling {ceiling} outside [0, 1]"));
                }
            }
            ResetCurve::Table { points } => {
                for (w, p) in points {
                    if !unit(*p) {
                        return bad(format!("reset probability {p} at width {w} outside [0, 1]"));
                    }
                }
                for pair in points.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return bad("reset table widths must be strictly increasing".into());
                    }
                    if pair[1].1 < pair[0].1 {
                        return bad("reset table must be non-decreasing in width".into());
                    }
                }
            }
            ResetCurve::Constant { probability } => {
                if !unit(*probability) {
                    return bad(format!("reset probability {probability} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }
}

fn unit(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

/// Relative weight of each fault model inside the glitch window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelWeights {
    pub instr_skip: f64,
    pub instr_bit_flip: f64,
    pub instr_byte_set: f64,
    pub instr_byte_clear: f64,
    pub reg_clear: f64,
    pub reg_fill: f64,
    pub reg_bit_flip: f64,
    pub reg_byte_set: f64,
    pub reg_byte_clear: f64,
}

impl Default for ModelWeights {
    fn default() -> Self {
        ModelWeights {
            instr_skip: 1.0,
            instr_bit_flip: 1.0,
            instr_byte_set: 1.0,
            instr_byte_clear: 1.0,
            reg_clear: 1.0,
            reg_fill: 1.0,
            reg_bit_flip: 1.0,
            reg_byte_set: 1.0,
            reg_byte_clear: 1.0,
        }
    }
}

impl ModelWeights {
    pub fn get(&self, m: FaultModel) -> f64 {
        match m {
            FaultModel::InstrSkip => self.instr_skip,
            FaultModel::InstrBitFlip => self.instr_bit_flip,
            FaultModel::InstrByteSet => self.instr_byte_set,
            FaultModel::InstrByteClear => self.instr_byte_clear,
            FaultModel::RegClear => self.reg_clear,
            FaultModel::RegFill => self.reg_fill,
            FaultModel::RegBitFlip => self.reg_bit_flip,
            FaultModel::RegByteSet => self.reg_byte_set,
            FaultModel::RegByteClear => self.reg_byte_clear,
        }
    }

    fn validate(&self) -> Result<(), GlitchError> {
        let weights = FaultModel::ALL.map(|m| self.get(m));
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(GlitchError::Config("model weights must be finite and >= 0".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(GlitchError::Config("at least one model weight must be positive".into()));
        }
        Ok(())
    }
}

/// Hardware-side glitch parameters. All cycle counts are integers; the
/// clock ratio is target cycles per glitch-clock cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlitchConfig {
    /// Glitch-clock cycles between trigger and glitch start.
    pub ext_offset: u32,
    /// Glitch duration in glitch-clock cycles (repeat count).
    pub width: u32,
    pub clock_ratio: f64,
    /// Target cycles between TRIG and the start of the risk window.
    pub trigger_delay: u32,
    /// Target cycles for the supply to decay into the risk range.
    pub decay_delay: u32,
    /// Extra target cycles of lingering instability after the glitch.
    pub tail: u32,
    /// Per-cycle fault probability inside the window.
    pub fault_prob: f64,
    pub reset_curve: ResetCurve,
    pub model_weights: ModelWeights,
    /// Glitch clock in MHz, only used to label widths in microseconds.
    pub glitch_clock_mhz: f64,
    pub seed: u64,
}

impl Default for GlitchConfig {
    fn default() -> Self {
        GlitchConfig {
            ext_offset: 0,
            width: 1,
            clock_ratio: 5.25,
            trigger_delay: 0,
            decay_delay: 0,
            tail: 0,
            fault_prob: 0.25,
            reset_curve: ResetCurve::default(),
            model_weights: ModelWeights::default(),
            glitch_clock_mhz: 32.0,
            seed: 0,
        }
    }
}

impl GlitchConfig {
    pub fn validate(&self) -> Result<(), GlitchError> {
        if !(self.clock_ratio.is_finite() && self.clock_ratio > 0.0) {
            return Err(GlitchError::Config(format!(
                "clock_ratio {} must be > 0",
                self.clock_ratio
            )));
        }
        if self.width < 1 {
            return Err(GlitchError::Config("width must be >= 1".into()));
        }
        if !unit(self.fault_prob) {
            return Err(GlitchError::Config(format!(
                "fault_prob {} outside [0, 1]",
                self.fault_prob
            )));
        }
        if !(self.glitch_clock_mhz.is_finite() && self.glitch_clock_mhz > 0.0) {
            return Err(GlitchError::Config("glitch_clock_mhz must be > 0".into()));
        }
        self.reset_curve.validate()?;
        self.model_weights.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self, GlitchError> {
        let cfg: GlitchConfig = toml::from_str(text).map_err(|e| GlitchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, GlitchError> {
        let file_err = |message: String| GlitchError::ConfigFile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        Self::from_toml(&text).map_err(|e| file_err(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn with_cell(&self, ext_offset: u32, width: u32) -> Self {
        GlitchConfig {
            ext_offset,
            width,
            ..self.clone()
        }
    }

    pub fn width_us(&self, width: u32) -> f64 {
        f64::from(width) / self.glitch_clock_mhz
    }
}

/// Target cycles, relative to the TRIG timestamp, that the glitch can
/// corrupt. Both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlitchWindow {
    pub first_cycle: u64,
    pub last_cycle: u64,
}

impl GlitchWindow {
    pub fn contains(&self, cycle: u64) -> bool {
        (self.first_cycle..=self.last_cycle).contains(&cycle)
    }

    pub fn cycles(&self) -> std::ops::RangeInclusive<u64> {
        self.first_cycle..=self.last_cycle
    }
}

/// `first = floor(offset * ratio) + delay + decay`,
/// `last = floor((offset + width) * ratio) + delay + decay + tail`.
pub fn map_offset(cfg: &GlitchConfig) -> GlitchWindow {
    let shift = u64::from(cfg.trigger_delay) + u64::from(cfg.decay_delay);
    let scaled = |glitch_cycles: u32| (f64::from(glitch_cycles) * cfg.clock_ratio).floor() as u64;
    GlitchWindow {
        first_cycle: scaled(cfg.ext_offset) + shift,
        last_cycle: scaled(cfg.ext_offset + cfg.width) + shift + u64::from(cfg.tail),
    }
}

/// Outcome of one glitched run. `termination` is absent when the glitch
/// browned the target out before it could execute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlitchOutcome {
    pub category: Category,
    pub observed: Option<ActionOptions>,
    pub termination: Option<Termination>,
    /// Faults applied, with cycles relative to the trigger.
    pub faults: Vec<FaultSpec>,
}

/// A target profiled up to its trigger.
#[derive(Debug, Clone)]
pub struct GlitchTarget {
    pub target: Target,
    pub golden: ActionOptions,
    /// Absolute cycle of the trigger timestamp.
    pub trigger: u64,
    pub budget: u64,
    at_trigger: Machine,
}

impl GlitchTarget {
    pub fn new(target: Target, budget: Option<u64>) -> Result<Self, GlitchError> {
        let (end, _) = target.profile(PROFILE_BUDGET)?;
        let termination = end.termination();
        if termination != Termination::Halted {
            return Err(CampaignError::GoldenNotHalted(termination).into());
        }
        let trigger = end.trigger().ok_or(GlitchError::TrigNeverExecuted)?;
        let golden = target
            .observe(&end)
            .ok_or(CampaignError::BadOutputRegion(target.output_base))?;
        let mut at_trigger = target.machine()?;
        at_trigger.run_to(trigger, None);
        Ok(GlitchTarget {
            golden,
            trigger,
            budget: budget.unwrap_or(BUDGET_FACTOR * end.cycle()),
            at_trigger,
            target,
        })
    }
}

fn draw_fault(rng: &mut ChaCha8Rng, cycle: u64, weights: &ModelWeights) -> FaultSpec {
    let total: f64 = FaultModel::ALL.iter().map(|&m| weights.get(m)).sum();
    let mut pick = rng.random::<f64>() * total;
    let mut model = FaultModel::ALL[FaultModel::ALL.len() - 1];
    for m in FaultModel::ALL {
        let w = weights.get(m);
        if w > 0.0 && pick < w {
            model = m;
            break;
        }
        pick -= w;
    }
    let param = rng.random_range(0..model.parameter_count()) as u8;
    if model == FaultModel::InstrSkip {
        FaultSpec::skip(cycle)
    } else if model.is_instruction() {
        FaultSpec::instruction(cycle, model, param)
    } else {
        let modes = model.temporal_modes();
        let temporal = modes[rng.random_range(0..modes.len())];
        let reg = rng.random_range(0..NUM_REGISTERS);
        FaultSpec::register(cycle, model, reg, param, temporal)
    }
}

/// One glitched run of `target` under `cfg`, drawing from `rng`.
pub fn sample_glitch_run(target: &GlitchTarget, cfg: &GlitchConfig, rng: &mut ChaCha8Rng) -> GlitchOutcome {
    if rng.random::<f64>() < cfg.reset_curve.probability(cfg.width) {
        return GlitchOutcome {
            category: Category::Reset,
            observed: None,
            termination: None,
            faults: Vec::new(),
        };
    }
    let window = map_offset(cfg);
    let mut machine = target.at_trigger.clone();
    let mut faults = Vec::new();
    while machine.is_running() && machine.cycle() < target.budget {
        let rel = machine.cycle() - target.trigger;
        if window.contains(rel) && rng.random::<f64>() < cfg.fault_prob {
            let spec = draw_fault(rng, rel, &cfg.model_weights);
            let _ = step_with_fault(&mut machine, &spec);
            faults.push(spec);
        } else {
            let _ = machine.step();
        }
    }
    let termination = machine.termination();
    let observed = match termination {
        Termination::Halted => target.target.observe(&machine),
        _ => None,
    };
    GlitchOutcome {
        category: classify(observed.as_ref(), &target.golden, termination),
        observed,
        termination: Some(termination),
        faults,
    }
}

/// Independent random stream for one trial of one cell.
pub fn trial_rng(seed: u64, offset: u32, width: u32, trial: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"fisim-glitch-trial");
    h.update(seed.to_be_bytes());
    h.update(offset.to_be_bytes());
    h.update(width.to_be_bytes());
    h.update(trial.to_be_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Aggregate of all trials of one (offset, width) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlitchCell {
    pub offset: u32,
    pub width: u32,
    pub window: GlitchWindow,
    pub trials: u64,
    pub counts: CategoryCounts,
    /// Observed action codes of successful runs.
    pub actions: BTreeMap<u32, u64>,
}

impl GlitchCell {
    pub fn reset_rate(&self) -> f64 {
        self.counts.get(Category::Reset) as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlitchReport {
    pub scenario: String,
    pub config: GlitchConfig,
    pub seed: u64,
    pub trials: u64,
    pub trigger: u64,
    pub cells: Vec<GlitchCell>,
}

/// Sweeps every (offset, width) pair, offset-major.
pub fn run_glitch_campaign(
    scenario: &str,
    target: &GlitchTarget,
    base: &GlitchConfig,
    offsets: &[u32],
    widths: &[u32],
    trials: u64,
    seed: u64,
) -> Result<GlitchReport, GlitchError> {
    if trials == 0 {
        return Err(GlitchError::NoTrials);
    }
    base.validate()?;
    let mut cells = Vec::with_capacity(offsets.len() * widths.len());
    for &offset in offsets {
        for &width in widths {
            let cfg = base.with_cell(offset, width);
            cfg.validate()?;
            let outcomes: Vec<GlitchOutcome> = (0..trials)
                .into_par_iter()
                .map(|trial| sample_glitch_run(target, &cfg, &mut trial_rng(seed, offset, width, trial)))
                .collect();
            let mut counts = CategoryCounts::default();
            let mut actions = BTreeMap::new();
            for o in &outcomes {
                counts.add(o.category);
                if let (true, Some(obs)) = (o.category.is_success(), o.observed) {
                    *actions.entry(obs.action).or_insert(0) += 1;
                }
            }
            cells.push(GlitchCell {
                offset,
                width,
                window: map_offset(&cfg),
                trials,
                counts,
                actions,
            });
        }
    }
    Ok(GlitchReport {
        scenario: scenario.to_string(),
        config: base.clone(),
        seed,
        trials,
        trigger: target.trigger,
        cells,
    })
}

pub const CELLS_HEADER: &str =
    "offset,width_cycles,width_us,trials,benign,no_action,correct_other,error_action,invalid_state,reset";
pub const ACTIONS_HEADER: &str = "offset,width_cycles,action,mode,count";
pub const CORRELATION_HEADER: &str = "offset,width_cycles,first_cycle,last_cycle,campaign_cycles,\
campaign_success_cycles,campaign_successes,glitch_successes,glitch_success_rate";

/// Per-cell join of a glitch sweep with an exhaustive campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub offset: u32,
    pub width: u32,
    pub window: GlitchWindow,
    /// Glitch window cycles that fall inside the campaign window.
    pub campaign_cycles: u64,
    pub campaign_success_cycles: u64,
    pub campaign_successes: u64,
    pub glitch_successes: u64,
    pub glitch_success_rate: f64,
}

impl GlitchReport {
    pub fn cell(&self, offset: u32, width: u32) -> Option<&GlitchCell> {
        self.cells.iter().find(|c| c.offset == offset && c.width == width)
    }

    /// Joins cells with the campaign's per-cycle histogram. Trigger-relative
    /// glitch cycles are converted through the absolute cycle of both.
    pub fn correlate(&self, campaign: &CampaignReport) -> Vec<CorrelationRow> {
        self.cells
            .iter()
            .map(|cell| {
                let mut row = CorrelationRow {
                    offset: cell.offset,
                    width: cell.width,
                    window: cell.window,
                    campaign_cycles: 0,
                    campaign_success_cycles: 0,
                    campaign_successes: 0,
                    glitch_successes: cell.counts.successes(),
                    glitch_success_rate: cell.counts.successes() as f64 / cell.trials as f64,
                };
                for rel in cell.window.cycles() {
                    let abs = self.trigger + rel;
                    let Some(idx) = abs.checked_sub(campaign.window.start) else {
                        continue;
                    };
                    if let Some(hist) = campaign.histogram.get(idx as usize) {
                        row.campaign_cycles += 1;
                        row.campaign_successes += hist.successes();
                        if hist.successes() > 0 {
                            row.campaign_success_cycles += 1;
                        }
                    }
                }
                row
            })
            .collect()
    }

    pub fn cells_csv(&self, manifest: &RunManifest) -> String {
        let mut out = manifest.csv_preamble(GLITCH_CELLS_SCHEMA);
        out.push_str(CELLS_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = write!(
                out,
                "{},{},{:.5},{}",
                c.offset,
                c.width,
                self.config.width_us(c.width),
                c.trials
            );
            for cat in [
                Category::Benign,
                Category::NoAction,
                Category::CorrectActionOtherFields,
                Category::ErrorAction,
                Category::InvalidState,
                Category::Reset,
            ] {
                let _ = write!(out, ",{}", c.counts.get(cat));
            }
            out.push('\n');
        }
        out
    }

    pub fn actions_csv(&self, manifest: &RunManifest) -> String {
        let mut out = manifest.csv_preamble(GLITCH_ACTIONS_SCHEMA);
        out.push_str(ACTIONS_HEADER);
        out.push('\n');
        for c in &self.cells {
            for (&action, &count) in &c.actions {
                let mode = ActionMode::from_code(action).map_or("invalid", |m| m.name());
                let _ = writeln!(out, "{},{},{},{},{}", c.offset, c.width, action, mode, count);
            }
        }
        out
    }

    pub fn correlation_csv(&self, campaign: &CampaignReport, manifest: &RunManifest) -> String {
        let mut out = manifest.csv_preamble(GLITCH_CORRELATION_SCHEMA);
        out.push_str(CORRELATION_HEADER);
        out.push('\n');
        for r in self.correlate(campaign) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{:.6}",
                r.offset,
                r.width,
                r.window.first_cycle,
                r.window.last_cycle,
                r.campaign_cycles,
                r.campaign_success_cycles,
                r.campaign_successes,
                r.glitch_successes,
                r.glitch_success_rate
            );
        }
        out
    }

    pub fn summary_json(&self, manifest: &RunManifest) -> String {
        let mut totals = CategoryCounts::default();
        for c in &self.cells {
            for cat in Category::ALL {
                totals.0[cat as usize] += c.counts.get(cat);
            }
        }
        let categories: serde_json::Map<String, serde_json::Value> = Category::ALL
            .into_iter()
            .map(|c| (c.as_str().to_string(), totals.get(c).into()))
            .collect();
        let offsets: BTreeSet<u32> = self.cells.iter().map(|c| c.offset).collect();
        let widths: BTreeSet<u32> = self.cells.iter().map(|c| c.width).collect();
        let body = serde_json::json!({
            "scenario": self.scenario,
            "seed": self.seed,
            "trials_per_cell": self.trials,
            "trigger_cycle": self.trigger,
            "offsets": offsets,
            "widths": widths,
            "cells": self.cells.len(),
            "runs": totals.total(),
            "categories": categories,
            "config": self.config,
        });
        json_document(GLITCH_SUMMARY_SCHEMA, manifest, body)
    }
}
