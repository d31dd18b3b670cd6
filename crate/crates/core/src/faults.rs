//! Fault models, fault-space enumeration and fault application.
//!
//! Instruction models corrupt the fetched word for one cycle. Register
//! models corrupt one of the sixteen registers either for the duration of a
//! single instruction (transient) or until the register is next written.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{Fetch, HardFault, InstructionWord, Machine, StepInfo};

pub const NUM_REGISTERS: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultModel {
    InstrSkip,
    InstrBitFlip,
    InstrByteSet,
    InstrByteClear,
    RegClear,
    RegFill,
    RegBitFlip,
    RegByteSet,
    RegByteClear,
}

impl FaultModel {
    /// Enumeration order.
    pub const ALL: [FaultModel; 9] = [
        FaultModel::InstrSkip,
        FaultModel::InstrBitFlip,
        FaultModel::InstrByteSet,
        FaultModel::InstrByteClear,
        FaultModel::RegClear,
        FaultModel::RegFill,
        FaultModel::RegBitFlip,
        FaultModel::RegByteSet,
        FaultModel::RegByteClear,
    ];

    pub fn is_instruction(self) -> bool {
        matches!(
            self,
            FaultModel::InstrSkip | FaultModel::InstrBitFlip | FaultModel::InstrByteSet | FaultModel::InstrByteClear
        )
    }

    pub fn is_register(self) -> bool {
        !self.is_instruction()
    }

    /// Number of distinct `location` values for one target.
    ///
    /// For register models this is per register: a register fault's
    /// location encodes both the register and the bit/byte parameter.
    pub fn parameter_count(self) -> u32 {
        match self {
            FaultModel::InstrSkip | FaultModel::RegClear | FaultModel::RegFill => 1,
            FaultModel::InstrBitFlip | FaultModel::RegBitFlip => 32,
            FaultModel::InstrByteSet
            | FaultModel::InstrByteClear
            | FaultModel::RegByteSet
            | FaultModel::RegByteClear => 4,
        }
    }

    /// Faults this model contributes per cycle, counting both temporal
    /// modes for register models.
    pub fn faults_per_cycle(self) -> u64 {
        if self.is_instruction() {
            self.parameter_count() as u64
        } else {
            2 * NUM_REGISTERS as u64 * self.parameter_count() as u64
        }
    }

    pub fn temporal_modes(self) -> &'static [Temporal] {
        if self.is_instruction() {
            &[Temporal::Transient]
        } else {
            &[Temporal::Transient, Temporal::UntilOverwrite]
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultModel::InstrSkip => "instr_skip",
            FaultModel::InstrBitFlip => "instr_bitflip",
            FaultModel::InstrByteSet => "instr_byteset",
            FaultModel::InstrByteClear => "instr_byteclear",
            FaultModel::RegClear => "reg_clear",
            FaultModel::RegFill => "reg_fill",
            FaultModel::RegBitFlip => "reg_bitflip",
            FaultModel::RegByteSet => "reg_byteset",
            FaultModel::RegByteClear => "reg_byteclear",
        }
    }
}

impl fmt::Display for FaultModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown fault model `{0}`")]
pub struct UnknownModel(pub String);

impl FromStr for FaultModel {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        FaultModel::ALL
            .into_iter()
            .find(|m| m.as_str() == norm)
            .ok_or_else(|| UnknownModel(s.to_string()))
    }
}

/// Parses a comma-separated model list; `all` selects every model.
pub fn parse_models(text: &str) -> Result<BTreeSet<FaultModel>, UnknownModel> {
    let mut set = BTreeSet::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.eq_ignore_ascii_case("all") {
            set.extend(FaultModel::ALL);
        } else {
            set.insert(part.parse()?);
        }
    }
    Ok(set)
}

pub fn all_models() -> BTreeSet<FaultModel> {
    FaultModel::ALL.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    Transient,
    UntilOverwrite,
}

impl Temporal {
    pub fn as_str(self) -> &'static str {
        match self {
            Temporal::Transient => "transient",
            Temporal::UntilOverwrite => "until_overwrite",
        }
    }
}

impl fmt::Display for Temporal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a fault lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Location {
    /// Instruction skip has no location.
    None,
    /// Bit (0..32) or byte (0..4, 0 = most significant) of the fetched word.
    Instruction(u8),
    /// Register plus bit/byte parameter (0 for clear/fill).
    Register { reg: u8, param: u8 },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::None => f.write_str("-"),
            Location::Instruction(p) => write!(f, "{p}"),
            Location::Register { reg, param } => write!(f, "R{reg}:{param}"),
        }
    }
}

/// One point in fault space. `cycle` counts from the window start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultSpec {
    pub cycle: u64,
    pub model: FaultModel,
    pub location: Location,
    pub temporal: Temporal,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FaultError {
    #[error("fault window is empty")]
    EmptyWindow,
    #[error("{0} is not applicable here")]
    WrongModelKind(FaultModel),
    #[error("invalid fault spec: {0}")]
    Invalid(String),
}

impl FaultSpec {
    pub fn skip(cycle: u64) -> Self {
        FaultSpec {
            cycle,
            model: FaultModel::InstrSkip,
            location: Location::None,
            temporal: Temporal::Transient,
        }
    }

    pub fn instruction(cycle: u64, model: FaultModel, param: u8) -> Self {
        FaultSpec {
            cycle,
            model,
            location: Location::Instruction(param),
            temporal: Temporal::Transient,
        }
    }

    pub fn register(cycle: u64, model: FaultModel, reg: u8, param: u8, temporal: Temporal) -> Self {
        FaultSpec {
            cycle,
            model,
            location: Location::Register { reg, param },
            temporal,
        }
    }

    /// Checks the location range and temporal-mode invariants.
    pub fn validate(&self) -> Result<(), FaultError> {
        let bad = |msg: &str| Err(FaultError::Invalid(format!("{msg}: {self:?}")));
        let limit = self.model.parameter_count() as u8;
        match (self.model.is_instruction(), self.location) {
            (true, _) if self.temporal != Temporal::Transient => bad("instruction faults are always transient"),
            (true, Location::None) if self.model == FaultModel::InstrSkip => Ok(()),
            (true, Location::Instruction(p)) if self.model != FaultModel::InstrSkip && p < limit => Ok(()),
            (false, Location::Register { reg, param }) if reg < NUM_REGISTERS && param < limit => Ok(()),
            _ => bad("location does not match model"),
        }
    }

    pub fn register_target(&self) -> Option<u8> {
        match self.location {
            Location::Register { reg, .. } => Some(reg),
            _ => None,
        }
    }

    /// Location column for CSV output: bit/byte index, or `Rn:param`.
    pub fn location_field(&self) -> String {
        self.location.to_string()
    }

    /// `cycle,model,location,temporal`
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{}",
            self.cycle,
            self.model,
            self.location_field(),
            self.temporal
        )
    }

    pub fn from_csv(line: &str) -> Result<Self, FaultError> {
        let bad = || FaultError::Invalid(line.to_string());
        let fields: Vec<&str> = line.trim().split(',').collect();
        let [cycle, model, location, temporal] = fields.as_slice() else {
            return Err(bad());
        };
        let cycle: u64 = cycle.parse().map_err(|_| bad())?;
        let model: FaultModel = model.parse().map_err(|_| bad())?;
        let temporal = match *temporal {
            "transient" => Temporal::Transient,
            "until_overwrite" => Temporal::UntilOverwrite,
            _ => return Err(bad()),
        };
        let location = if *location == "-" {
            Location::None
        } else if let Some(rest) = location.strip_prefix('R') {
            let (reg, param) = rest.split_once(':').ok_or_else(bad)?;
            Location::Register {
                reg: reg.parse().map_err(|_| bad())?,
                param: param.parse().map_err(|_| bad())?,
            }
        } else {
            Location::Instruction(location.parse().map_err(|_| bad())?)
        };
        let spec = FaultSpec {
            cycle,
            model,
            location,
            temporal,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for FaultSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv())
    }
}

fn transform(value: u32, model: FaultModel, param: u8) -> u32 {
    match model {
        FaultModel::InstrBitFlip | FaultModel::RegBitFlip => value ^ (1u32 << param),
        FaultModel::InstrByteSet | FaultModel::RegByteSet => value | byte_mask(param),
        FaultModel::InstrByteClear | FaultModel::RegByteClear => value & !byte_mask(param),
        FaultModel::RegClear => 0,
        FaultModel::RegFill => u32::MAX,
        FaultModel::InstrSkip => value,
    }
}

/// Mask of byte `index`, 0 being the most significant byte.
fn byte_mask(index: u8) -> u32 {
    0xFF00_0000u32 >> (8 * index as u32)
}

pub fn apply_instruction_fault(word: InstructionWord, spec: &FaultSpec) -> Result<InstructionWord, FaultError> {
    match (spec.model, spec.location) {
        (FaultModel::InstrSkip, _) | (_, Location::Register { .. }) => Err(FaultError::WrongModelKind(spec.model)),
        (model, Location::Instruction(param)) if model.is_instruction() => {
            Ok(InstructionWord(transform(word.0, model, param)))
        }
        (model, _) => Err(FaultError::WrongModelKind(model)),
    }
}

/// Value to put back after a transient register fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestoreToken {
    pub reg: u8,
    pub value: u32,
}

impl RestoreToken {
    /// Restores the register unless the faulted step wrote it.
    pub fn restore(self, machine: &mut Machine, step: Option<&StepInfo>) {
        if step.is_some_and(|s| s.wrote(self.reg)) {
            return;
        }
        machine.set_reg(self.reg, self.value);
    }
}

/// Corrupts the target register in place. Transient faults hand back a
/// token that must be applied after the next step.
pub fn apply_register_fault(machine: &mut Machine, spec: &FaultSpec) -> Result<Option<RestoreToken>, FaultError> {
    let Location::Register { reg, param } = spec.location else {
        return Err(FaultError::WrongModelKind(spec.model));
    };
    if !spec.model.is_register() {
        return Err(FaultError::WrongModelKind(spec.model));
    }
    let before = machine.reg(reg);
    machine.set_reg(reg, transform(before, spec.model, param));
    Ok(match spec.temporal {
        Temporal::Transient => Some(RestoreToken { reg, value: before }),
        Temporal::UntilOverwrite => None,
    })
}

/// Executes one step with `spec` applied at this step, whatever the
/// machine's cycle counter says.
pub fn step_with_fault(machine: &mut Machine, spec: &FaultSpec) -> Result<StepInfo, HardFault> {
    if spec.model.is_instruction() {
        return machine.step_with(|word| match spec.model {
            FaultModel::InstrSkip => Fetch::Skip,
            _ => Fetch::Execute(apply_instruction_fault(word, spec).unwrap_or(word)),
        });
    }
    let token = apply_register_fault(machine, spec).expect("register model with register location");
    let result = machine.step();
    if let Some(token) = token {
        token.restore(machine, result.as_ref().ok());
    }
    result
}

/// The single-cycle fault menu, in enumeration order, with cycle set to
/// `cycle`.
pub fn faults_at_cycle(cycle: u64, models: &BTreeSet<FaultModel>) -> impl Iterator<Item = FaultSpec> + '_ {
    FaultModel::ALL
        .into_iter()
        .filter(move |m| models.contains(m))
        .flat_map(move |model| model_faults(cycle, model))
}

fn model_faults(cycle: u64, model: FaultModel) -> Box<dyn Iterator<Item = FaultSpec>> {
    let params = model.parameter_count() as u8;
    match model {
        FaultModel::InstrSkip => Box::new(std::iter::once(FaultSpec::skip(cycle))),
        m if m.is_instruction() => Box::new((0..params).map(move |p| FaultSpec::instruction(cycle, m, p))),
        m => Box::new(m.temporal_modes().iter().flat_map(move |&temporal| {
            (0..NUM_REGISTERS)
                .flat_map(move |reg| (0..params).map(move |param| FaultSpec::register(cycle, m, reg, param, temporal)))
        })),
    }
}

/// All faults over `length` window cycles, cycle-major, then model, then
/// temporal mode, register and parameter.
pub fn enumerate_fault_space(
    length: u64,
    models: &BTreeSet<FaultModel>,
) -> Result<impl Iterator<Item = FaultSpec> + '_, FaultError> {
    if length == 0 {
        return Err(FaultError::EmptyWindow);
    }
    Ok((0..length).flat_map(move |cycle| faults_at_cycle(cycle, models)))
}

/// Closed-form size of the fault space.
pub fn fault_space_size(length: u64, models: &BTreeSet<FaultModel>) -> u64 {
    length * models.iter().map(|m| m.faults_per_cycle()).sum::<u64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{MemoryImage, MemoryLayout};

    #[test]
    fn per_cycle_menu_is_1385() {
        assert_eq!(fault_space_size(1, &all_models()), 1385);
        assert_eq!(enumerate_fault_space(1, &all_models()).unwrap().count(), 1385);
        assert_eq!(fault_space_size(0, &all_models()), 0);
    }

    #[test]
    fn reg_clear_both_modes_over_ten_cycles() {
        let models = [FaultModel::RegClear].into_iter().collect();
        assert_eq!(fault_space_size(10, &models), 320);
    }

    #[test]
    fn empty_window_rejected() {
        assert!(matches!(
            enumerate_fault_space(0, &all_models()),
            Err(FaultError::EmptyWindow)
        ));
    }

    #[test]
    fn instruction_fault_examples() {
        let w = InstructionWord(0x1010_0006);
        let flip31 = FaultSpec::instruction(0, FaultModel::InstrBitFlip, 31);
        assert_eq!(apply_instruction_fault(w, &flip31).unwrap().0, 0x9010_0006);
        let clear0 = FaultSpec::instruction(0, FaultModel::InstrByteClear, 0);
        assert_eq!(apply_instruction_fault(w, &clear0).unwrap().0, 0x0010_0006);
        let set3 = FaultSpec::instruction(0, FaultModel::InstrByteSet, 3);
        assert_eq!(apply_instruction_fault(w, &set3).unwrap().0, 0x1010_00FF);
    }

    #[test]
    fn wrong_model_kinds() {
        let w = InstructionWord(0);
        let reg = FaultSpec::register(0, FaultModel::RegClear, 3, 0, Temporal::Transient);
        assert_eq!(
            apply_instruction_fault(w, &reg),
            Err(FaultError::WrongModelKind(FaultModel::RegClear))
        );
        assert!(apply_instruction_fault(w, &FaultSpec::skip(0)).is_err());

        let image = MemoryImage::new(vec![0; 4], vec![], &MemoryLayout::default()).unwrap();
        let mut m = Machine::new(&image, MemoryLayout::default(), 0).unwrap();
        let instr = FaultSpec::instruction(0, FaultModel::InstrBitFlip, 0);
        assert!(matches!(
            apply_register_fault(&mut m, &instr),
            Err(FaultError::WrongModelKind(_))
        ));
    }

    fn machine(words: &[u32]) -> Machine {
        let code = words.iter().flat_map(|w| w.to_be_bytes()).collect();
        let image = MemoryImage::new(code, vec![], &MemoryLayout::default()).unwrap();
        Machine::new(&image, MemoryLayout::default(), 0).unwrap()
    }

    #[test]
    fn register_value_transforms() {
        let mut m = machine(&[0]);
        m.set_reg(3, 0xDEAD_BEEF);
        let clear = FaultSpec::register(0, FaultModel::RegClear, 3, 0, Temporal::UntilOverwrite);
        assert_eq!(apply_register_fault(&mut m, &clear).unwrap(), None);
        assert_eq!(m.reg(3), 0);
        let fill = FaultSpec::register(0, FaultModel::RegFill, 3, 0, Temporal::UntilOverwrite);
        apply_register_fault(&mut m, &fill).unwrap();
        assert_eq!(m.reg(3), 0xFFFF_FFFF);
        m.set_reg(3, 0x1234_5678);
        let bc = FaultSpec::register(0, FaultModel::RegByteClear, 3, 1, Temporal::UntilOverwrite);
        apply_register_fault(&mut m, &bc).unwrap();
        assert_eq!(m.reg(3), 0x1200_5678);
    }

    #[test]
    fn transient_fault_seen_by_one_instruction_then_restored() {
        // MOVI R2,#6 ; CMPI R2,#7 ; HALT
        let mut m = machine(&[0x1020_0006, 0x2102_0007, 0x0100_0000]);
        m.step().unwrap();
        let spec = FaultSpec::register(1, FaultModel::RegBitFlip, 2, 0, Temporal::Transient);
        step_with_fault(&mut m, &spec).unwrap();
        // Comparison saw 7.
        assert_eq!(m.flags(), (true, false));
        assert_eq!(m.reg(2), 6);
    }

    #[test]
    fn transient_fault_loses_to_architectural_write() {
        // MOVI R2,#6 ; ADD R2,R2,R2
        let mut m = machine(&[0x1020_0006, 0x1222_2000]);
        m.step().unwrap();
        let spec = FaultSpec::register(1, FaultModel::RegBitFlip, 2, 0, Temporal::Transient);
        step_with_fault(&mut m, &spec).unwrap();
        assert_eq!(m.reg(2), 14);
    }

    #[test]
    fn until_overwrite_persists() {
        // MOVI R2,#6 ; NOP ; MOVI R2,#1
        let mut m = machine(&[0x1020_0006, 0, 0x1020_0001]);
        m.step().unwrap();
        let spec = FaultSpec::register(1, FaultModel::RegClear, 2, 0, Temporal::UntilOverwrite);
        step_with_fault(&mut m, &spec).unwrap();
        assert_eq!(m.reg(2), 0);
        m.step().unwrap();
        assert_eq!(m.reg(2), 1);
    }

    #[test]
    fn csv_round_trip() {
        for spec in enumerate_fault_space(2, &all_models()).unwrap() {
            assert_eq!(FaultSpec::from_csv(&spec.to_csv()).unwrap(), spec);
        }
    }

    #[test]
    fn parse_model_lists() {
        assert_eq!(parse_models("all").unwrap().len(), 9);
        let set = parse_models("instr_skip, reg-clear").unwrap();
        assert_eq!(
            set.into_iter().collect::<Vec<_>>(),
            vec![FaultModel::InstrSkip, FaultModel::RegClear]
        );
        assert!(parse_models("bogus").is_err());
    }

    #[test]
    fn every_enumerated_spec_is_valid() {
        for spec in enumerate_fault_space(1, &all_models()).unwrap() {
            spec.validate().unwrap();
        }
    }
}
