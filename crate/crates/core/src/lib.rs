//! Fault-injection simulator for a small deterministic ISA.
//!
//! `isa` and `asm` provide the machine and its toolchain, `faults` the fault
//! models, `campaign` exhaustive single-fault campaigns, `glitch` the emulated
//! voltage-glitch layer and `failsafe` the shipped target programs.

pub mod asm;
pub mod campaign;
pub mod cli;
pub mod failsafe;
pub mod faults;
pub mod glitch;
pub mod isa;
pub mod report;
