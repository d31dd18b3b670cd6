//! Instruction words, decoding and encoding.
//!
//! Every instruction is a single big-endian 32-bit word with a fixed field
//! layout:
//!
//! ```text
//!  31      24 23  20 19  16 15  12 11                0
//! +----------+------+------+------+-------------------+
//! |  opcode  |  rd  | rs1  | rs2  |                   |
//! +----------+------+------+------+-------------------+
//!                          |           imm16          |
//!                          +--------------------------+
//! ```
//!
//! `rs2` and `imm16` overlap; which one an opcode uses is fixed per opcode.
//! Decoding is lenient: bits an opcode does not use are ignored, so a word
//! like `0x00100006` still decodes as `NOP`. [`Instruction::encode`] always
//! produces the canonical word with unused bits cleared.

use std::fmt;

/// Register index type (0..16).
pub type Reg = u8;

pub const SP: Reg = 13;
pub const LR: Reg = 14;
pub const PC: Reg = 15;

/// A raw 32-bit instruction word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct InstructionWord(pub u32);

impl InstructionWord {
    pub fn opcode(self) -> u8 {
        (self.0 >> 24) as u8
    }

    pub fn rd(self) -> Reg {
        ((self.0 >> 20) & 0xF) as Reg
    }

    pub fn rs1(self) -> Reg {
        ((self.0 >> 16) & 0xF) as Reg
    }

    pub fn rs2(self) -> Reg {
        ((self.0 >> 12) & 0xF) as Reg
    }

    pub fn imm16(self) -> u16 {
        self.0 as u16
    }

    /// Byte `index` of the word, 0 being the most significant (opcode) byte.
    pub fn byte(self, index: usize) -> u8 {
        self.0.to_be_bytes()[index]
    }

    pub fn decode(self) -> Decoded {
        decode(self)
    }
}

impl fmt::Display for InstructionWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08X}", self.0)
    }
}

impl From<u32> for InstructionWord {
    fn from(value: u32) -> Self {
        InstructionWord(value)
    }
}

/// Three-register ALU operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Orr,
    Eor,
}

/// Immediate shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftOp {
    Lsl,
    Lsr,
}

/// Branch conditions evaluated against the Z and N flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cond {
    Always,
    Eq,
    Ne,
    Lt,
    Ge,
}

impl Cond {
    pub fn holds(self, z: bool, n: bool) -> bool {
        match self {
            Cond::Always => true,
            Cond::Eq => z,
            Cond::Ne => !z,
            Cond::Lt => n,
            Cond::Ge => !n,
        }
    }
}

/// A decoded MiniISA instruction.
///
/// Branch offsets are signed word counts relative to the instruction that
/// follows the branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instruction {
    Nop,
    Halt,
    Trig,
    Movi { rd: Reg, imm: u16 },
    Mov { rd: Reg, rs: Reg },
    Alu { op: AluOp, rd: Reg, rs1: Reg, rs2: Reg },
    Shift { op: ShiftOp, rd: Reg, rs: Reg, amount: u8 },
    Cmp { rs1: Reg, rs2: Reg },
    Cmpi { rs: Reg, imm: u16 },
    Branch { cond: Cond, offset: i16 },
    Ldr { rd: Reg, base: Reg, offset: u16 },
    Str { rs: Reg, base: Reg, offset: u16 },
    Bl { offset: i16 },
    Ret,
}

/// Result of decoding a word: decoding never fails, it either yields an
/// instruction or reports the opcode as invalid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decoded {
    Valid(Instruction),
    InvalidOpcode(u8),
}

impl Decoded {
    pub fn instruction(self) -> Option<Instruction> {
        match self {
            Decoded::Valid(i) => Some(i),
            Decoded::InvalidOpcode(_) => None,
        }
    }
}

pub mod opcode {
    pub const NOP: u8 = 0x00;
    pub const HALT: u8 = 0x01;
    pub const TRIG: u8 = 0x02;
    pub const MOVI: u8 = 0x10;
    pub const MOV: u8 = 0x11;
    pub const ADD: u8 = 0x12;
    pub const SUB: u8 = 0x13;
    pub const AND: u8 = 0x14;
    pub const ORR: u8 = 0x15;
    pub const EOR: u8 = 0x16;
    pub const LSL: u8 = 0x17;
    pub const LSR: u8 = 0x18;
    pub const CMP: u8 = 0x20;
    pub const CMPI: u8 = 0x21;
    pub const B: u8 = 0x30;
    pub const BEQ: u8 = 0x31;
    pub const BNE: u8 = 0x32;
    pub const BLT: u8 = 0x33;
    pub const BGE: u8 = 0x34;
    pub const LDR: u8 = 0x40;
    pub const STR: u8 = 0x41;
    pub const BL: u8 = 0x50;
    pub const RET: u8 = 0x51;

    /// Every opcode byte that decodes to an instruction.
    pub const ALL: [u8; 23] = [
        NOP, HALT, TRIG, MOVI, MOV, ADD, SUB, AND, ORR, EOR, LSL, LSR, CMP, CMPI, B, BEQ, BNE, BLT, BGE, LDR, STR, BL,
        RET,
    ];
}

pub const IMM12_MASK: u16 = 0x0FFF;
pub const SHIFT_MASK: u16 = 0x000F;

pub fn decode(word: InstructionWord) -> Decoded {
    use opcode::*;
    let rd = word.rd();
    let rs1 = word.rs1();
    let rs2 = word.rs2();
    let imm = word.imm16();
    let alu = |op| Instruction::Alu { op, rd, rs1, rs2 };
    let shift = |op| Instruction::Shift {
        op,
        rd,
        rs: rs1,
        amount: (imm & SHIFT_MASK) as u8,
    };
    let branch = |cond| Instruction::Branch {
        cond,
        offset: imm as i16,
    };
    let insn = match word.opcode() {
        NOP => Instruction::Nop,
        HALT => Instruction::Halt,
        TRIG => Instruction::Trig,
        MOVI => Instruction::Movi { rd, imm },
        MOV => Instruction::Mov { rd, rs: rs1 },
        ADD => alu(AluOp::Add),
        SUB => alu(AluOp::Sub),
        AND => alu(AluOp::And),
        ORR => alu(AluOp::Orr),
        EOR => alu(AluOp::Eor),
        LSL => shift(ShiftOp::Lsl),
        LSR => shift(ShiftOp::Lsr),
        CMP => Instruction::Cmp { rs1, rs2 },
        CMPI => Instruction::Cmpi { rs: rs1, imm },
        B => branch(Cond::Always),
        BEQ => branch(Cond::Eq),
        BNE => branch(Cond::Ne),
        BLT => branch(Cond::Lt),
        BGE => branch(Cond::Ge),
        LDR => Instruction::Ldr {
            rd,
            base: rs1,
            offset: imm & IMM12_MASK,
        },
        STR => Instruction::Str {
            rs: rd,
            base: rs1,
            offset: imm & IMM12_MASK,
        },
        BL => Instruction::Bl { offset: imm as i16 },
        RET => Instruction::Ret,
        other => return Decoded::InvalidOpcode(other),
    };
    Decoded::Valid(insn)
}

fn pack(op: u8, rd: Reg, rs1: Reg, low16: u16) -> u32 {
    (op as u32) << 24 | ((rd & 0xF) as u32) << 20 | ((rs1 & 0xF) as u32) << 16 | low16 as u32
}

fn rs2_field(rs2: Reg) -> u16 {
    ((rs2 & 0xF) as u16) << 12
}

impl Instruction {
    pub fn opcode(&self) -> u8 {
        use opcode::*;
        match self {
            Instruction::Nop => NOP,
            Instruction::Halt => HALT,
            Instruction::Trig => TRIG,
            Instruction::Movi { .. } => MOVI,
            Instruction::Mov { .. } => MOV,
            Instruction::Alu { op, .. } => match op {
                AluOp::Add => ADD,
                AluOp::Sub => SUB,
                AluOp::And => AND,
                AluOp::Orr => ORR,
                AluOp::Eor => EOR,
            },
            Instruction::Shift { op, .. } => match op {
                ShiftOp::Lsl => LSL,
                ShiftOp::Lsr => LSR,
            },
            Instruction::Cmp { .. } => CMP,
            Instruction::Cmpi { .. } => CMPI,
            Instruction::Branch { cond, .. } => match cond {
                Cond::Always => B,
                Cond::Eq => BEQ,
                Cond::Ne => BNE,
                Cond::Lt => BLT,
                Cond::Ge => BGE,
            },
            Instruction::Ldr { .. } => LDR,
            Instruction::Str { .. } => STR,
            Instruction::Bl { .. } => BL,
            Instruction::Ret => RET,
        }
    }

    /// Canonical encoding (unused fields zero).
    pub fn encode(&self) -> InstructionWord {
        let op = self.opcode();
        let word = match *self {
            Instruction::Nop | Instruction::Halt | Instruction::Trig | Instruction::Ret => pack(op, 0, 0, 0),
            Instruction::Movi { rd, imm } => pack(op, rd, 0, imm),
            Instruction::Mov { rd, rs } => pack(op, rd, rs, 0),
            Instruction::Alu { rd, rs1, rs2, .. } => pack(op, rd, rs1, rs2_field(rs2)),
            Instruction::Shift { rd, rs, amount, .. } => pack(op, rd, rs, amount as u16 & SHIFT_MASK),
            Instruction::Cmp { rs1, rs2 } => pack(op, 0, rs1, rs2_field(rs2)),
            Instruction::Cmpi { rs, imm } => pack(op, 0, rs, imm),
            Instruction::Branch { offset, .. } | Instruction::Bl { offset } => pack(op, 0, 0, offset as u16),
            Instruction::Ldr { rd, base, offset } => pack(op, rd, base, offset & IMM12_MASK),
            Instruction::Str { rs, base, offset } => pack(op, rs, base, offset & IMM12_MASK),
        };
        InstructionWord(word)
    }

    pub fn mnemonic(&self) -> &'static str {
        use opcode::*;
        match self.opcode() {
            NOP => "NOP",
            HALT => "HALT",
            TRIG => "TRIG",
            MOVI => "MOVI",
            MOV => "MOV",
            ADD => "ADD",
            SUB => "SUB",
            AND => "AND",
            ORR => "ORR",
            EOR => "EOR",
            LSL => "LSL",
            LSR => "LSR",
            CMP => "CMP",
            CMPI => "CMPI",
            B => "B",
            BEQ => "BEQ",
            BNE => "BNE",
            BLT => "BLT",
            BGE => "BGE",
            LDR => "LDR",
            STR => "STR",
            BL => "BL",
            RET => "RET",
            _ => unreachable!("instruction with unmapped opcode"),
        }
    }

    pub fn is_compare(&self) -> bool {
        matches!(self, Instruction::Cmp { .. } | Instruction::Cmpi { .. })
    }

    pub fn is_conditional_branch(&self) -> bool {
        matches!(self, Instruction::Branch { cond, .. } if *cond != Cond::Always)
    }

    /// Branch offset in words, for instructions that carry one.
    pub fn branch_offset(&self) -> Option<i16> {
        match self {
            Instruction::Branch { offset, .. } | Instruction::Bl { offset } => Some(*offset),
            _ => None,
        }
    }

    /// Formats the instruction, rendering branch targets through `target`.
    /// `target` receives the instruction's own address plus offset and
    /// returns a label if one should be printed instead of `#offset`.
    pub fn display_with<'a>(
        &'a self,
        address: u32,
        target: &'a dyn Fn(u32) -> Option<String>,
    ) -> impl fmt::Display + 'a {
        DisplayWith {
            insn: self,
            address,
            target,
        }
    }
}

/// Absolute branch target for a branch at `address` with word `offset`.
pub fn branch_target(address: u32, offset: i16) -> u32 {
    address
        .wrapping_add(4)
        .wrapping_add((offset as i32 as u32).wrapping_mul(4))
}

pub fn reg_name(r: Reg) -> String {
    format!("R{}", r)
}

struct DisplayWith<'a> {
    insn: &'a Instruction,
    address: u32,
    target: &'a dyn Fn(u32) -> Option<String>,
}

impl fmt::Display for DisplayWith<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.insn.mnemonic();
        match *self.insn {
            Instruction::Nop | Instruction::Halt | Instruction::Trig | Instruction::Ret => {
                write!(f, "{m}")
            }
            Instruction::Movi { rd, imm } => write!(f, "{m} R{rd}, #{imm}"),
            Instruction::Mov { rd, rs } => write!(f, "{m} R{rd}, R{rs}"),
            Instruction::Alu { rd, rs1, rs2, .. } => write!(f, "{m} R{rd}, R{rs1}, R{rs2}"),
            Instruction::Shift { rd, rs, amount, .. } => write!(f, "{m} R{rd}, R{rs}, #{amount}"),
            Instruction::Cmp { rs1, rs2 } => write!(f, "{m} R{rs1}, R{rs2}"),
            Instruction::Cmpi { rs, imm } => write!(f, "{m} R{rs}, #{imm}"),
            Instruction::Branch { offset, .. } | Instruction::Bl { offset } => {
                match (self.target)(branch_target(self.address, offset)) {
                    Some(label) => write!(f, "{m} {label}"),
                    None => write!(f, "{m} #{offset}"),
                }
            }
            Instruction::Ldr { rd, base, offset } => write!(f, "{m} R{rd}, [R{base}, #{offset}]"),
            Instruction::Str { rs, base, offset } => write!(f, "{m} R{rs}, [R{base}, #{offset}]"),
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_with(0, &|_| None))
    }
}
