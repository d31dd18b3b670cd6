//! Exhaustive single-fault campaigns over a symbol-delimited window.
//!
//! A fault-free profiling run fixes the window and the golden output. The
//! machine state at every window cycle is snapshotted once, so each faulted
//! run starts from the snapshot of its cycle instead of from reset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::SymbolTable;
use crate::failsafe::{decode_action_options, ActionMode, ActionOptions, Scenario, ScenarioError, ScenarioInputs};
use crate::faults::{enumerate_fault_space, fault_space_size, step_with_fault, FaultError, FaultModel, FaultSpec};
use crate::isa::{LoadError, Machine, MemoryImage, MemoryLayout, Termination, TraceEntry};
use crate::report::{
    json_document, RunManifest, CAMPAIGN_HISTOGRAM_SCHEMA, CAMPAIGN_RECORDS_SCHEMA, CAMPAIGN_SUMMARY_SCHEMA,
};

/// Budget for profiling runs, which have no golden length to scale from yet.
pub const PROFILE_BUDGET: u64 = 1_000_000;

/// Faulted runs get this many times the fault-free run length.
pub const BUDGET_FACTOR: u64 = 16;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("symbol `{0}` is not defined")]
    UnknownSymbol(String),
    #[error("symbol `{0}` is never reached by the fault-free run")]
    SymbolNeverReached(String),
    #[error("fault-free run did not halt ({0})")]
    GoldenNotHalted(Termination),
    #[error("output region at 0x{0:08X} is not readable")]
    BadOutputRegion(u32),
    #[error("fault at window cycle {cycle} is outside a window of {length} cycles")]
    OutsideWindow { cycle: u64, length: u64 },
    #[error("window [{start}, {halt}) exceeds the fault-free run of {length} cycles")]
    WindowBeyondRun { start: u64, halt: u64, length: u64 },
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Outcome categories, in histogram column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    NoAction,
    CorrectActionOtherFields,
    ErrorAction,
    InvalidState,
    Reset,
    Benign,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::NoAction,
        Category::CorrectActionOtherFields,
        Category::ErrorAction,
        Category::InvalidState,
        Category::Reset,
        Category::Benign,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::NoAction => "no_action",
            Category::CorrectActionOtherFields => "correct_other",
            Category::ErrorAction => "error_action",
            Category::InvalidState => "invalid_state",
            Category::Reset => "reset",
            Category::Benign => "benign",
        }
    }

    /// The output deviated from golden while the target kept running.
    pub fn is_success(self) -> bool {
        !matches!(self, Category::Benign | Category::Reset)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies one observed output against the golden record.
///
/// Precedence: Reset, Benign, NoAction, InvalidState, CorrectActionOtherFields,
/// ErrorAction. A halted run whose output could not be read counts as
/// InvalidState.
pub fn classify(observed: Option<&ActionOptions>, golden: &ActionOptions, termination: Termination) -> Category {
    if termination != Termination::Halted {
        return Category::Reset;
    }
    let Some(observed) = observed else {
        return Category::InvalidState;
    };
    if observed == golden {
        Category::Benign
    } else if observed.action == ActionMode::None.code() && golden.action != ActionMode::None.code() {
        Category::NoAction
    } else if !observed.has_valid_action() {
        Category::InvalidState
    } else if observed.action == golden.action {
        Category::CorrectActionOtherFields
    } else {
        Category::ErrorAction
    }
}

/// Counts per category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CategoryCounts(pub [u64; 6]);

impl CategoryCounts {
    pub fn get(&self, c: Category) -> u64 {
        self.0[c.index()]
    }

    pub fn add(&mut self, c: Category) {
        self.0[c.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn successes(&self) -> u64 {
        Category::ALL
            .into_iter()
            .filter(|c| c.is_success())
            .map(|c| self.get(c))
            .sum()
    }

    fn to_json(self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = Category::ALL
            .into_iter()
            .map(|c| (c.as_str().to_string(), self.get(c).into()))
            .collect();
        serde_json::Value::Object(map)
    }
}

/// A symbol-delimited span of the fault-free run, `[start, halt)` in
/// absolute cycles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultWindow {
    pub start_symbol: String,
    pub halt_symbol: String,
    pub start: u64,
    pub halt: u64,
}

impl FaultWindow {
    pub fn length(&self) -> u64 {
        self.halt - self.start
    }
}

/// Finds the first arrival at `start` and then the first arrival at `halt`
/// strictly after it.
pub fn window_from_trace(
    trace: &[TraceEntry],
    start: (&str, u32),
    halt: (&str, u32),
) -> Result<FaultWindow, CampaignError> {
    let first = |addr: u32, after: Option<u64>| {
        trace
            .iter()
            .find(|e| e.pc == addr && after.is_none_or(|a| e.cycle > a))
            .map(|e| e.cycle)
    };
    let start_cycle = first(start.1, None).ok_or_else(|| CampaignError::SymbolNeverReached(start.0.to_string()))?;
    let halt_cycle =
        first(halt.1, Some(start_cycle)).ok_or_else(|| CampaignError::SymbolNeverReached(halt.0.to_string()))?;
    Ok(FaultWindow {
        start_symbol: start.0.to_string(),
        halt_symbol: halt.0.to_string(),
        start: start_cycle,
        halt: halt_cycle,
    })
}

/// A loaded program plus where it starts and where it writes its output.
#[derive(Debug, Clone)]
pub struct Target {
    pub image: MemoryImage,
    pub layout: MemoryLayout,
    pub entry: u32,
    pub output_base: u32,
    pub symbols: SymbolTable,
}

impl Target {
    pub fn from_scenario(scenario: &Scenario, inputs: &ScenarioInputs) -> Result<Self, CampaignError> {
        Ok(Target {
            image: scenario.image_with(inputs)?,
            layout: scenario.layout,
            entry: scenario.entry()?,
            output_base: scenario.output_base,
            symbols: scenario.symbols.clone(),
        })
    }

    /// The scenario under its golden inputs.
    pub fn golden(scenario: &Scenario) -> Result<Self, CampaignError> {
        Self::from_scenario(scenario, &ScenarioInputs::golden(scenario.id()))
    }

    pub fn symbol(&self, name: &str) -> Result<u32, CampaignError> {
        self.symbols
            .get(name)
            .ok_or_else(|| CampaignError::UnknownSymbol(name.to_string()))
    }

    pub fn machine(&self) -> Result<Machine, CampaignError> {
        Ok(Machine::new(&self.image, self.layout, self.entry)?)
    }

    /// Fault-free run with trace.
    pub fn profile(&self, budget: u64) -> Result<(Machine, Vec<TraceEntry>), CampaignError> {
        let mut machine = self.machine()?;
        let mut trace = Vec::new();
        machine.run_to(budget, Some(&mut trace));
        Ok((machine, trace))
    }

    /// Profiles the window between two symbols.
    pub fn profile_window(&self, start_symbol: &str, halt_symbol: &str) -> Result<FaultWindow, CampaignError> {
        let start = self.symbol(start_symbol)?;
        let halt = self.symbol(halt_symbol)?;
        let (_, trace) = self.profile(PROFILE_BUDGET)?;
        window_from_trace(&trace, (start_symbol, start), (halt_symbol, halt))
    }

    pub fn observe(&self, machine: &Machine) -> Option<ActionOptions> {
        decode_action_options(machine, self.output_base).ok()
    }
}

/// Classification of one faulted run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeRecord {
    pub spec: FaultSpec,
    pub category: Category,
    /// Output record; absent when the run did not halt.
    pub observed: Option<ActionOptions>,
    pub termination: Termination,
}

impl OutcomeRecord {
    pub const CSV_HEADER: &'static str =
        "cycle,model,location,temporal,category,action,cause,takeover,clear_condition,termination";

    pub fn csv_row(&self) -> String {
        let fields = match self.observed {
            Some(o) => format!(
                "{},{},{},{}",
                o.action, o.cause, o.allow_user_takeover, o.clear_condition
            ),
            None => ",,,".to_string(),
        };
        format!(
            "{},{},{},{}",
            self.spec.to_csv(),
            self.category,
            fields,
            self.termination
        )
    }
}

/// A profiled target ready for fault injection.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub target: Target,
    pub window: FaultWindow,
    pub golden: ActionOptions,
    /// Cycles of the fault-free run, HALT included.
    pub golden_length: u64,
    pub budget: u64,
    /// Fault-free trace of the whole run.
    pub trace: Vec<TraceEntry>,
    snapshots: Vec<Machine>,
}

impl Campaign {
    /// Profiles `target`, checks the window against the fault-free run and
    /// snapshots every window cycle. `budget` defaults to
    /// `BUDGET_FACTOR` times the fault-free length.
    pub fn new(target: Target, window: FaultWindow, budget: Option<u64>) -> Result<Self, CampaignError> {
        let (end, trace) = target.profile(PROFILE_BUDGET)?;
        let termination = end.termination();
        if termination != Termination::Halted {
            return Err(CampaignError::GoldenNotHalted(termination));
        }
        let golden = target
            .observe(&end)
            .ok_or(CampaignError::BadOutputRegion(target.output_base))?;
        let golden_length = end.cycle();
        if window.halt <= window.start {
            return Err(FaultError::EmptyWindow.into());
        }
        if window.halt > golden_length {
            return Err(CampaignError::WindowBeyondRun {
                start: window.start,
                halt: window.halt,
                length: golden_length,
            });
        }
        let mut machine = target.machine()?;
        machine.run_to(window.start, None);
        let mut snapshots = Vec::with_capacity(window.length() as usize);
        for _ in 0..window.length() {
            snapshots.push(machine.clone());
            // The window lies inside a halting run, so this cannot fault.
            let _ = machine.step();
        }
        Ok(Campaign {
            target,
            window,
            golden,
            golden_length,
            budget: budget.unwrap_or(BUDGET_FACTOR * golden_length),
            trace,
            snapshots,
        })
    }

    /// Convenience: window between two symbols of the target.
    pub fn between(
        target: Target,
        start_symbol: &str,
        halt_symbol: &str,
        budget: Option<u64>,
    ) -> Result<Self, CampaignError> {
        let window = target.profile_window(start_symbol, halt_symbol)?;
        Self::new(target, window, budget)
    }

    /// Campaign over a scenario's default window under its golden inputs.
    pub fn for_scenario(scenario: &Scenario) -> Result<Self, CampaignError> {
        let target = Target::golden(scenario)?;
        Self::between(target, &scenario.spec.start_symbol, &scenario.spec.halt_symbol, None)
    }

    pub fn length(&self) -> u64 {
        self.window.length()
    }

    /// Fault-free trace entries inside the window, indexed by window cycle.
    pub fn window_trace(&self) -> &[TraceEntry] {
        &self.trace[self.window.start as usize..self.window.halt as usize]
    }

    /// Machine state just before the instruction at window cycle `cycle`.
    pub fn snapshot(&self, cycle: u64) -> Option<&Machine> {
        self.snapshots.get(cycle as usize)
    }

    /// Runs with a single fault at `spec.cycle` (window-relative).
    pub fn run_one(&self, spec: &FaultSpec) -> Result<OutcomeRecord, CampaignError> {
        spec.validate()?;
        let mut machine = self
            .snapshot(spec.cycle)
            .ok_or(CampaignError::OutsideWindow {
                cycle: spec.cycle,
                length: self.length(),
            })?
            .clone();
        let _ = step_with_fault(&mut machine, spec);
        let termination = machine.run_to(self.budget, None);
        let observed = match termination {
            Termination::Halted => self.target.observe(&machine),
            _ => None,
        };
        Ok(OutcomeRecord {
            spec: *spec,
            category: classify(observed.as_ref(), &self.golden, termination),
            observed,
            termination,
        })
    }

    /// Every fault of `models` over the window. Records come back in
    /// enumeration order whether or not the runs are parallel.
    pub fn run_exhaustive(
        &self,
        scenario: &str,
        models: &BTreeSet<FaultModel>,
        parallel: bool,
    ) -> Result<CampaignReport, CampaignError> {
        let specs: Vec<FaultSpec> = enumerate_fault_space(self.length(), models)?.collect();
        let run = |spec: &FaultSpec| self.run_one(spec).expect("enumerated fault lies in window");
        let records: Vec<OutcomeRecord> = if parallel {
            specs.par_iter().map(run).collect()
        } else {
            specs.iter().map(run).collect()
        };
        Ok(CampaignReport::from_records(
            scenario,
            self.window.clone(),
            self.golden,
            self.budget,
            models,
            records,
        ))
    }
}

/// Aggregated campaign outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CampaignReport {
    pub scenario: String,
    pub window: FaultWindow,
    pub golden: ActionOptions,
    pub budget: u64,
    pub models: Vec<FaultModel>,
    pub records: Vec<OutcomeRecord>,
    pub counts: CategoryCounts,
    /// Indexed by window cycle.
    pub histogram: Vec<CategoryCounts>,
    pub per_model: BTreeMap<FaultModel, CategoryCounts>,
}

impl CampaignReport {
    pub fn from_records(
        scenario: &str,
        window: FaultWindow,
        golden: ActionOptions,
        budget: u64,
        models: &BTreeSet<FaultModel>,
        records: Vec<OutcomeRecord>,
    ) -> Self {
        let mut counts = CategoryCounts::default();
        let mut histogram = vec![CategoryCounts::default(); window.length() as usize];
        let mut per_model: BTreeMap<FaultModel, CategoryCounts> =
            models.iter().map(|&m| (m, CategoryCounts::default())).collect();
        for r in &records {
            counts.add(r.category);
            if let Some(row) = histogram.get_mut(r.spec.cycle as usize) {
                row.add(r.category);
            }
            per_model.entry(r.spec.model).or_default().add(r.category);
        }
        CampaignReport {
            scenario: scenario.to_string(),
            window,
            golden,
            budget,
            models: models.iter().copied().collect(),
            records,
            counts,
            histogram,
            per_model,
        }
    }

    pub fn total(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn expected_total(&self) -> u64 {
        fault_space_size(self.window.length(), &self.models.iter().copied().collect())
    }

    /// Window cycles with at least one successful fault.
    pub fn success_cycles(&self) -> BTreeSet<u64> {
        self.histogram
            .iter()
            .enumerate()
            .filter(|(_, row)| row.successes() > 0)
            .map(|(c, _)| c as u64)
            .collect()
    }

    pub fn records_csv(&self, manifest: &RunManifest) -> String {
        let mut out = manifest.csv_preamble(CAMPAIGN_RECORDS_SCHEMA);
        out.push_str(OutcomeRecord::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn histogram_csv(&self, manifest: &RunManifest) -> String {
        let mut out = manifest.csv_preamble(CAMPAIGN_HISTOGRAM_SCHEMA);
        out.push_str(HISTOGRAM_HEADER);
        out.push('\n');
        for (cycle, row) in temporal_histogram(self) {
            out.push_str(&histogram_row(cycle, &row));
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self, manifest: &RunManifest) -> String {
        let per_model: serde_json::Map<String, serde_json::Value> = self
            .per_model
            .iter()
            .map(|(m, c)| (m.as_str().to_string(), c.to_json()))
            .collect();
        let body = serde_json::json!({
            "scenario": self.scenario,
            "window": {
                "start_symbol": self.window.start_symbol,
                "halt_symbol": self.window.halt_symbol,
                "start_cycle": self.window.start,
                "halt_cycle": self.window.halt,
                "length": self.window.length(),
            },
            "golden": self.golden,
            "budget": self.budget,
            "models": self.models.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "total": self.total(),
            "successes": self.counts.successes(),
            "categories": self.counts.to_json(),
            "per_model": per_model,
        });
        json_document(CAMPAIGN_SUMMARY_SCHEMA, manifest, body)
    }
}

pub const HISTOGRAM_HEADER: &str = "cycle,no_action,correct_other,error_action,invalid_state,reset,benign";

fn histogram_row(cycle: u64, row: &CategoryCounts) -> String {
    let mut s = cycle.to_string();
    for c in Category::ALL {
        let _ = write!(s, ",{}", row.get(c));
    }
    s
}

/// Per-cycle category counts, one row per window cycle.
pub fn temporal_histogram(report: &CampaignReport) -> Vec<(u64, CategoryCounts)> {
    report
        .histogram
        .iter()
        .enumerate()
        .map(|(c, row)| (c as u64, *row))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::assemble;
    use crate::faults::{all_models, FaultSpec};

    const G: ActionOptions = ActionOptions::new(6, 1, 1, 1);

    #[test]
    fn classify_examples() {
        let halted = Termination::Halted;
        assert_eq!(classify(Some(&G), &G, halted), Category::Benign);
        let none = ActionOptions::new(0, 1, 1, 1);
        assert_eq!(classify(Some(&none), &G, halted), Category::NoAction);
        let bad = ActionOptions::new(42, 1, 1, 1);
        assert_eq!(classify(Some(&bad), &G, halted), Category::InvalidState);
        let other = ActionOptions::new(6, 2, 1, 1);
        assert_eq!(classify(Some(&other), &G, halted), Category::CorrectActionOtherFields);
        let wrong = ActionOptions::new(7, 1, 1, 1);
        assert_eq!(classify(Some(&wrong), &G, halted), Category::ErrorAction);
        assert_eq!(classify(Some(&G), &G, Termination::Hang), Category::Reset);
    }

    #[test]
    fn no_action_beats_other_field_differences() {
        let o = ActionOptions::new(0, 9, 0, 0);
        assert_eq!(classify(Some(&o), &G, Termination::Halted), Category::NoAction);
    }

    #[test]
    fn zero_output_against_zero_golden_is_benign() {
        let z = ActionOptions::default();
        assert_eq!(classify(Some(&z), &z, Termination::Halted), Category::Benign);
    }

    fn toy() -> Target {
        let src = "main: MOVI R8, #0x100\n LSL R8, R8, #8\n MOVI R4, #6\n\
                   start: CMPI R4, #6\n BNE out\n STR R4, [R8, #0]\nout: HALT\n";
        let (image, symbols) = assemble(src).unwrap();
        Target {
            image,
            layout: MemoryLayout::default(),
            entry: 0,
            output_base: 0x1_0000,
            symbols,
        }
    }

    #[test]
    fn window_resolution() {
        let t = toy();
        let w = t.profile_window("start", "out").unwrap();
        assert_eq!((w.start, w.halt), (3, 6));
        let w = t.profile_window("main", "out").unwrap();
        assert_eq!(w.start, 0);
        assert!(matches!(
            t.profile_window("out", "start"),
            Err(CampaignError::SymbolNeverReached(s)) if s == "start"
        ));
    }

    #[test]
    fn skip_of_store_gives_no_action() {
        let c = Campaign::between(toy(), "start", "out", None).unwrap();
        assert_eq!(c.golden.action, 6);
        let r = c.run_one(&FaultSpec::skip(2)).unwrap();
        assert_eq!(r.category, Category::NoAction);
        let r = c.run_one(&FaultSpec::skip(9)).map(|_| ());
        assert!(matches!(r, Err(CampaignError::OutsideWindow { .. })));
    }

    #[test]
    fn report_partitions_fault_space() {
        let c = Campaign::between(toy(), "start", "out", None).unwrap();
        let report = c.run_exhaustive("toy", &all_models(), true).unwrap();
        assert_eq!(report.total(), 3 * 1385);
        assert_eq!(report.counts.total(), report.total());
        let marginal: u64 = report.histogram.iter().map(|r| r.total()).sum();
        assert_eq!(marginal, report.total());
        assert_eq!(report, c.run_exhaustive("toy", &all_models(), false).unwrap());
    }

    #[test]
    fn empty_report_histogram_is_zero() {
        let w = FaultWindow {
            start_symbol: "a".into(),
            halt_symbol: "b".into(),
            start: 0,
            halt: 4,
        };
        let r = CampaignReport::from_records("x", w, G, 10, &all_models(), vec![]);
        let h = temporal_histogram(&r);
        assert_eq!(h.len(), 4);
        assert!(h.iter().all(|(_, row)| row.total() == 0));
    }

    #[test]
    fn single_record_histogram_row() {
        let w = FaultWindow {
            start_symbol: "a".into(),
            halt_symbol: "b".into(),
            start: 0,
            halt: 5,
        };
        let rec = OutcomeRecord {
            spec: FaultSpec::skip(3),
            category: Category::NoAction,
            observed: Some(ActionOptions::default()),
            termination: Termination::Halted,
        };
        let r = CampaignReport::from_records("x", w, G, 10, &all_models(), vec![rec]);
        assert_eq!(histogram_row(3, &r.histogram[3]), "3,1,0,0,0,0,0");
    }
}
