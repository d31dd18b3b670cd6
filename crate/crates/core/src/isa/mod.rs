//! MiniISA: a deterministic 32-bit load/store ISA with sixteen registers
//! (R13 = SP, R14 = LR, R15 = PC), Z/N flags and one instruction per cycle.

pub mod image;
pub mod instruction;
pub mod machine;

use std::io::{self, Write};

pub use image::{ImageError, MemoryImage, MemoryLayout};
pub use instruction::{decode, Cond, Decoded, Instruction, InstructionWord, Reg, LR, PC, SP};
pub use machine::{
    run, ExecutionResult, Fetch, HardFault, HardFaultCause, LoadError, Machine, Status, StepInfo, Termination,
    TraceEntry, RESET_LR,
};

pub const TRACE_SCHEMA: &str = "fisim.trace/1";

/// Writes a trace as CSV: a schema line, then `cycle,pc,word,disassembly`.
pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TraceEntry]) -> io::Result<()> {
    writeln!(out, "# schema: {TRACE_SCHEMA}")?;
    writeln!(out, "cycle,pc,word,disassembly")?;
    for entry in trace {
        let text = match decode(entry.word) {
            Decoded::Valid(insn) => insn.display_with(entry.pc, &|_| None).to_string(),
            Decoded::InvalidOpcode(_) => format!(".word 0x{}", entry.word),
        };
        writeln!(out, "{},0x{:08X},0x{},\"{}\"", entry.cycle, entry.pc, entry.word, text)?;
    }
    Ok(())
}
