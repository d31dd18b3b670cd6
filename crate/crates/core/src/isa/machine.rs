use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::image::{MemoryImage, MemoryLayout};
use super::instruction::{
    branch_target, decode, AluOp, Decoded, Instruction, InstructionWord, Reg, ShiftOp, LR, PC, SP,
};

/// Value of LR at reset. Returning through it means the call stack is empty.
pub const RESET_LR: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardFaultCause {
    InvalidOpcode,
    UnalignedAccess,
    OutOfBoundsAccess,
    PcOutOfCode,
    StackUnderflow,
}

impl HardFaultCause {
    pub fn as_str(self) -> &'static str {
        match self {
            HardFaultCause::InvalidOpcode => "invalid_opcode",
            HardFaultCause::UnalignedAccess => "unaligned_access",
            HardFaultCause::OutOfBoundsAccess => "out_of_bounds_access",
            HardFaultCause::PcOutOfCode => "pc_out_of_code",
            HardFaultCause::StackUnderflow => "stack_underflow",
        }
    }
}

impl fmt::Display for HardFaultCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Processor exception. The cycle is the one whose instruction faulted; the
/// cycle counter does not advance past it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
#[error("hard fault ({cause}) at cycle {cycle}")]
pub struct HardFault {
    pub cause: HardFaultCause,
    pub cycle: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Running,
    Halted,
    Faulted(HardFault),
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Termination {
    Halted,
    HardFault(HardFaultCause),
    Hang,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Termination::Halted => f.write_str("halted"),
            Termination::HardFault(cause) => write!(f, "hardfault:{cause}"),
            Termination::Hang => f.write_str("hang"),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error(transparent)]
    Image(#[from] super::image::ImageError),
    #[error("entry point {0:#010x} is not a word-aligned code address")]
    BadEntry(u32),
}

/// What the fetch stage should do with the word it just read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fetch {
    Execute(InstructionWord),
    Skip,
}

/// Side information about one retired step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub pc: u32,
    /// The word that was executed, after any fetch-stage corruption.
    pub word: InstructionWord,
    pub skipped: bool,
    /// Bit `r` set when the step architecturally wrote register `r`.
    pub written: u16,
}

impl StepInfo {
    pub fn wrote(&self, reg: Reg) -> bool {
        self.written & (1 << reg) != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEntry {
    pub cycle: u64,
    pub pc: u32,
    pub word: InstructionWord,
}

/// Architectural state of one MiniISA core.
///
/// Code memory is shared and read-only; data memory is owned, so cloning a
/// machine gives an independent snapshot.
#[derive(Clone)]
pub struct Machine {
    regs: [u32; 16],
    z: bool,
    n: bool,
    layout: MemoryLayout,
    code: Arc<[u8]>,
    data: Vec<u8>,
    cycle: u64,
    status: Status,
    trigger: Option<u64>,
}

impl fmt::Debug for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Machine")
            .field("regs", &self.regs)
            .field("z", &self.z)
            .field("n", &self.n)
            .field("cycle", &self.cycle)
            .field("status", &self.status)
            .field("trigger", &self.trigger)
            .finish_non_exhaustive()
    }
}

impl PartialEq for Machine {
    fn eq(&self, other: &Self) -> bool {
        self.regs == other.regs
            && self.z == other.z
            && self.n == other.n
            && self.layout == other.layout
            && self.cycle == other.cycle
            && self.status == other.status
            && self.trigger == other.trigger
            && self.data == other.data
            && self.code == other.code
    }
}

impl Machine {
    pub fn new(image: &MemoryImage, layout: MemoryLayout, entry: u32) -> Result<Self, LoadError> {
        image.validate(&layout)?;
        if !entry.is_multiple_of(4) || !layout.in_code(entry) {
            return Err(LoadError::BadEntry(entry));
        }
        let mut code = vec![0u8; layout.code_size as usize];
        let code_off = (image.code_base - layout.code_base) as usize;
        code[code_off..code_off + image.code.len()].copy_from_slice(&image.code);
        let mut data = vec![0u8; layout.data_size as usize];
        let data_off = (image.data_base - layout.data_base) as usize;
        data[data_off..data_off + image.data.len()].copy_from_slice(&image.data);

        let mut regs = [0u32; 16];
        regs[SP as usize] = layout.data_end();
        regs[LR as usize] = RESET_LR;
        regs[PC as usize] = entry;
        Ok(Machine {
            regs,
            z: false,
            n: false,
            layout,
            code: code.into(),
            data,
            cycle: 0,
            status: Status::Running,
            trigger: None,
        })
    }

    pub fn reg(&self, r: Reg) -> u32 {
        self.regs[r as usize]
    }

    pub fn set_reg(&mut self, r: Reg, value: u32) {
        self.regs[r as usize] = value;
    }

    pub fn registers(&self) -> &[u32; 16] {
        &self.regs
    }

    pub fn pc(&self) -> u32 {
        self.regs[PC as usize]
    }

    pub fn flags(&self) -> (bool, bool) {
        (self.z, self.n)
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_running(&self) -> bool {
        self.status == Status::Running
    }

    /// Cycle number of the instruction right after the first executed `TRIG`.
    pub fn trigger(&self) -> Option<u64> {
        self.trigger
    }

    pub fn layout(&self) -> &MemoryLayout {
        &self.layout
    }

    /// Reads an aligned word from code or data memory.
    pub fn read_word(&self, addr: u32) -> Result<u32, HardFaultCause> {
        if !addr.is_multiple_of(4) {
            return Err(HardFaultCause::UnalignedAccess);
        }
        let (bytes, off) = if self.layout.in_code(addr) {
            (&self.code[..], addr - self.layout.code_base)
        } else if self.layout.in_data(addr) {
            (&self.data[..], addr - self.layout.data_base)
        } else {
            return Err(HardFaultCause::OutOfBoundsAccess);
        };
        let off = off as usize;
        match bytes.get(off..off + 4) {
            Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
            None => Err(HardFaultCause::OutOfBoundsAccess),
        }
    }

    /// Writes an aligned word; only the data region is writable.
    pub fn write_word(&mut self, addr: u32, value: u32) -> Result<(), HardFaultCause> {
        if !addr.is_multiple_of(4) {
            return Err(HardFaultCause::UnalignedAccess);
        }
        if !self.layout.in_data(addr) {
            return Err(HardFaultCause::OutOfBoundsAccess);
        }
        let off = (addr - self.layout.data_base) as usize;
        match self.data.get_mut(off..off + 4) {
            Some(slot) => {
                slot.copy_from_slice(&value.to_be_bytes());
                Ok(())
            }
            None => Err(HardFaultCause::OutOfBoundsAccess),
        }
    }

    /// Fetches the word at PC without side effects.
    pub fn fetch(&self) -> Result<InstructionWord, HardFaultCause> {
        let pc = self.pc();
        if !pc.is_multiple_of(4) {
            return Err(HardFaultCause::UnalignedAccess);
        }
        if !self.layout.in_code(pc) {
            return Err(HardFaultCause::PcOutOfCode);
        }
        self.read_word(pc).map(InstructionWord)
    }

    /// Executes one instruction.
    ///
    /// # Panics
    ///
    /// If the machine has already halted or faulted.
    pub fn step(&mut self) -> Result<StepInfo, HardFault> {
        self.step_with(Fetch::Execute)
    }

    /// Executes one instruction, letting `on_fetch` replace or skip the
    /// fetched word. Corruption happens at fetch only; code memory is
    /// never modified.
    pub fn step_with(&mut self, on_fetch: impl FnOnce(InstructionWord) -> Fetch) -> Result<StepInfo, HardFault> {
        assert!(self.is_running(), "step on a stopped machine");
        let pc = self.pc();
        let fetched = self.fetch().map_err(|cause| self.fault(cause))?;
        let word = match on_fetch(fetched) {
            Fetch::Execute(word) => word,
            Fetch::Skip => {
                self.regs[PC as usize] = pc.wrapping_add(4);
                self.cycle += 1;
                return Ok(StepInfo {
                    pc,
                    word: fetched,
                    skipped: true,
                    written: 1 << PC,
                });
            }
        };
        let insn = match decode(word) {
            Decoded::Valid(insn) => insn,
            Decoded::InvalidOpcode(_) => return Err(self.fault(HardFaultCause::InvalidOpcode)),
        };
        let mut written = 0u16;
        self.execute(insn, pc, &mut written)
            .map_err(|cause| self.fault(cause))?;
        self.cycle += 1;
        Ok(StepInfo {
            pc,
            word,
            skipped: false,
            written,
        })
    }

    fn fault(&mut self, cause: HardFaultCause) -> HardFault {
        let hf = HardFault {
            cause,
            cycle: self.cycle,
        };
        self.status = Status::Faulted(hf);
        hf
    }

    fn set_flags(&mut self, result: u32) {
        self.z = result == 0;
        self.n = result & 0x8000_0000 != 0;
    }

    fn execute(&mut self, insn: Instruction, pc: u32, written: &mut u16) -> Result<(), HardFaultCause> {
        let mut next = pc.wrapping_add(4);
        let mut pc_set = false;
        let mut write = |regs: &mut [u32; 16], r: Reg, v: u32| {
            regs[r as usize] = v;
            *written |= 1 << r;
            if r == PC {
                pc_set = true;
            }
        };
        match insn {
            Instruction::Nop => {}
            Instruction::Halt => {
                self.status = Status::Halted;
                return Ok(());
            }
            Instruction::Trig => {
                if self.trigger.is_none() {
                    self.trigger = Some(self.cycle + 1);
                }
            }
            Instruction::Movi { rd, imm } => write(&mut self.regs, rd, imm as u32),
            Instruction::Mov { rd, rs } => {
                let v = self.reg(rs);
                write(&mut self.regs, rd, v)
            }
            Instruction::Alu { op, rd, rs1, rs2 } => {
                let (a, b) = (self.reg(rs1), self.reg(rs2));
                let v = match op {
                    AluOp::Add => a.wrapping_add(b),
                    AluOp::Sub => a.wrapping_sub(b),
                    AluOp::And => a & b,
                    AluOp::Orr => a | b,
                    AluOp::Eor => a ^ b,
                };
                self.set_flags(v);
                write(&mut self.regs, rd, v);
            }
            Instruction::Shift { op, rd, rs, amount } => {
                let a = self.reg(rs);
                let v = match op {
                    ShiftOp::Lsl => a << amount,
                    ShiftOp::Lsr => a >> amount,
                };
                self.set_flags(v);
                write(&mut self.regs, rd, v);
            }
            Instruction::Cmp { rs1, rs2 } => {
                let v = self.reg(rs1).wrapping_sub(self.reg(rs2));
                self.set_flags(v);
            }
            Instruction::Cmpi { rs, imm } => {
                let v = self.reg(rs).wrapping_sub(imm as u32);
                self.set_flags(v);
            }
            Instruction::Branch { cond, offset } => {
                if cond.holds(self.z, self.n) {
                    next = branch_target(pc, offset);
                }
            }
            Instruction::Ldr { rd, base, offset } => {
                let addr = self.reg(base).wrapping_add(offset as u32);
                let v = self.read_word(addr)?;
                write(&mut self.regs, rd, v);
            }
            Instruction::Str { rs, base, offset } => {
                let addr = self.reg(base).wrapping_add(offset as u32);
                self.write_word(addr, self.reg(rs))?;
            }
            Instruction::Bl { offset } => {
                write(&mut self.regs, LR, pc.wrapping_add(4));
                next = branch_target(pc, offset);
            }
            Instruction::Ret => {
                let lr = self.reg(LR);
                if lr == RESET_LR {
                    return Err(HardFaultCause::StackUnderflow);
                }
                next = lr;
            }
        }
        if !pc_set {
            self.regs[PC as usize] = next;
        }
        *written |= 1 << PC;
        Ok(())
    }

    /// Steps until the machine stops or `cycle` reaches `budget`.
    pub fn run_to(&mut self, budget: u64, mut trace: Option<&mut Vec<TraceEntry>>) -> Termination {
        while self.is_running() && self.cycle < budget {
            let cycle = self.cycle;
            if let Ok(info) = self.step() {
                if let Some(t) = trace.as_deref_mut() {
                    t.push(TraceEntry {
                        cycle,
                        pc: info.pc,
                        word: info.word,
                    });
                }
            }
        }
        self.termination()
    }

    /// Termination status as seen now; a running machine counts as hung.
    pub fn termination(&self) -> Termination {
        match self.status {
            Status::Running => Termination::Hang,
            Status::Halted => Termination::Halted,
            Status::Faulted(hf) => Termination::HardFault(hf.cause),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecutionResult {
    pub termination: Termination,
    pub state: Machine,
    pub trigger: Option<u64>,
    pub trace: Option<Vec<TraceEntry>>,
}

/// Loads `image`, starts at `entry` and runs for at most `cycle_budget` cycles.
pub fn run(
    image: &MemoryImage,
    layout: MemoryLayout,
    entry: u32,
    cycle_budget: u64,
    tracing: bool,
) -> Result<ExecutionResult, LoadError> {
    let mut machine = Machine::new(image, layout, entry)?;
    let mut trace = tracing.then(Vec::new);
    let termination = machine.run_to(cycle_budget, trace.as_mut());
    Ok(ExecutionResult {
        termination,
        trigger: machine.trigger(),
        state: machine,
        trace,
    })
}
