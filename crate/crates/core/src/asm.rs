//! Two-pass assembler and disassembler for MiniISA.
//!
//! Source syntax, one statement per line:
//!
//! ```text
//! label:  MOVI R1, #6        ; comment
//!         LDR  R2, [R8, #4]
//!         BEQ  label
//!         .org 0x10000
//! data:   .word 0x2A
//! ```
//!
//! Branch operands are labels or explicit word offsets (`#-1`). Lines in
//! the disassembler's listing format (`0000: 10100006  MOVI R1, #6`) are
//! accepted too, so listings re-assemble to the same image.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::isa::instruction::{AluOp, Cond, Instruction, Reg, ShiftOp};
use crate::isa::{decode, Decoded, InstructionWord, MemoryImage, MemoryLayout};

pub const SYMBOLS_SCHEMA: &str = "fisim.symbols/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("immediate {value} out of range [{min}, {max}]")]
    ImmediateOutOfRange { value: i64, min: i64, max: i64 },
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("address {0:#x} is outside the code and data regions")]
    AddressOutOfRange(u64),
    #[error("address {0:#x} is assembled twice")]
    Overlap(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

/// Label name to address.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SymbolTable {
    entries: BTreeMap<String, u32>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.entries.get(name).copied()
    }

    /// Returns false when the label already exists.
    pub fn insert(&mut self, name: impl Into<String>, addr: u32) -> bool {
        use std::collections::btree_map::Entry;
        match self.entries.entry(name.into()) {
            Entry::Occupied(_) => false,
            Entry::Vacant(v) => {
                v.insert(addr);
                true
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Labels grouped by address, each group sorted by name.
    pub fn by_address(&self) -> BTreeMap<u32, Vec<&str>> {
        let mut map: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
        for (name, addr) in self.iter() {
            map.entry(addr).or_default().push(name);
        }
        map
    }

    /// Resolves a symbol name or a numeric address.
    pub fn resolve(&self, name_or_addr: &str) -> Option<u32> {
        self.get(name_or_addr)
            .or_else(|| parse_number(name_or_addr).and_then(|v| u32::try_from(v).ok()))
    }

    /// A schema line, then `name<TAB>address` lines with the address as
    /// eight hex digits.
    pub fn to_symbol_file(&self) -> String {
        let mut out = format!("# schema: {SYMBOLS_SCHEMA}\n");
        for (name, addr) in self.iter() {
            let _ = writeln!(out, "{name}\t{addr:08X}");
        }
        out
    }

    pub fn parse_symbol_file(text: &str) -> Result<Self, AsmError> {
        let mut table = SymbolTable::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (name, addr) = raw.split_once('\t').ok_or_else(|| AsmError {
                line,
                kind: AsmErrorKind::Syntax("expected `name<TAB>address`".into()),
            })?;
            let addr = addr.trim();
            let addr = addr.strip_prefix("0x").unwrap_or(addr);
            let addr = u32::from_str_radix(addr, 16).map_err(|_| AsmError {
                line,
                kind: AsmErrorKind::Syntax(format!("bad address `{addr}`")),
            })?;
            if !table.insert(name.trim(), addr) {
                return Err(AsmError {
                    line,
                    kind: AsmErrorKind::DuplicateLabel(name.trim().to_string()),
                });
            }
        }
        Ok(table)
    }
}

#[derive(Debug, Clone)]
enum Operand {
    Reg(Reg),
    Imm(i64),
    Label(String),
    Mem { base: Reg, offset: i64 },
}

#[derive(Debug, Clone)]
enum Stmt {
    Insn { mnemonic: String, operands: Vec<Operand> },
    Word(Operand),
}

#[derive(Debug)]
struct Item {
    line: usize,
    addr: u32,
    stmt: Stmt,
}

fn err(line: usize, kind: AsmErrorKind) -> AsmError {
    AsmError { line, kind }
}

fn syntax(line: usize, msg: impl Into<String>) -> AsmError {
    err(line, AsmErrorKind::Syntax(msg.into()))
}

fn parse_number(text: &str) -> Option<i64> {
    let text = text.trim();
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&hex.replace('_', ""), 16).ok()?
    } else if let Some(bin) = body.strip_prefix("0b") {
        i64::from_str_radix(&bin.replace('_', ""), 2).ok()?
    } else {
        if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '_') {
            return None;
        }
        body.replace('_', "").parse().ok()?
    };
    Some(if neg { -magnitude } else { magnitude })
}

fn parse_reg(text: &str) -> Option<Reg> {
    let upper = text.trim().to_ascii_uppercase();
    match upper.as_str() {
        "SP" => return Some(13),
        "LR" => return Some(14),
        "PC" => return Some(15),
        _ => {}
    }
    let n: u8 = upper.strip_prefix('R')?.parse().ok()?;
    (n < 16).then_some(n)
}

fn is_ident(text: &str) -> bool {
    let mut chars = text.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_operand(line: usize, text: &str) -> Result<Operand, AsmError> {
    let text = text.trim();
    if let Some(inner) = text.strip_prefix('[') {
        let inner = inner
            .strip_suffix(']')
            .ok_or_else(|| syntax(line, format!("unterminated memory operand `{text}`")))?;
        let (base, offset) = match inner.find([',', '+']) {
            Some(pos) => (&inner[..pos], Some(&inner[pos + 1..])),
            None => (inner, None),
        };
        let base = parse_reg(base).ok_or_else(|| syntax(line, format!("bad base register in `{text}`")))?;
        let offset = match offset {
            Some(off) => {
                let off = off.trim();
                let off = off.strip_prefix('#').unwrap_or(off);
                parse_number(off).ok_or_else(|| syntax(line, format!("bad offset in `{text}`")))?
            }
            None => 0,
        };
        return Ok(Operand::Mem { base, offset });
    }
    if let Some(imm) = text.strip_prefix('#') {
        return parse_number(imm)
            .map(Operand::Imm)
            .ok_or_else(|| syntax(line, format!("bad immediate `{text}`")));
    }
    if let Some(r) = parse_reg(text) {
        return Ok(Operand::Reg(r));
    }
    if let Some(n) = parse_number(text) {
        return Ok(Operand::Imm(n));
    }
    if is_ident(text) {
        return Ok(Operand::Label(text.to_string()));
    }
    Err(syntax(line, format!("bad operand `{text}`")))
}

/// Splits on commas that are not inside brackets.
fn split_operands(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if !text[start..].trim().is_empty() || !parts.is_empty() {
        parts.push(&text[start..]);
    }
    parts
}

fn is_hex(text: &str) -> bool {
    !text.is_empty() && text.chars().all(|c| c.is_ascii_hexdigit())
}

/// Recognizes a listing prefix `ADDR: WWWWWWWW  ` and returns the address
/// and the remainder of the line.
fn listing_prefix(line: &str) -> Option<(u32, &str)> {
    let (head, rest) = line.split_once(':')?;
    if !is_hex(head.trim()) || head.trim() != head {
        return None;
    }
    let rest = rest.trim_start();
    let word_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
    let word = &rest[..word_end];
    if word.len() != 8 || !is_hex(word) {
        return None;
    }
    let addr = u32::from_str_radix(head, 16).ok()?;
    Some((addr, &rest[word_end..]))
}

struct Parsed {
    items: Vec<Item>,
    symbols: SymbolTable,
}

fn first_pass(source: &str) -> Result<Parsed, AsmError> {
    let mut items = Vec::new();
    let mut symbols = SymbolTable::new();
    let mut loc: u64 = 0;
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let mut text = raw.split(';').next().unwrap_or("").trim();
        if let Some((addr, rest)) = listing_prefix(text) {
            loc = addr as u64;
            text = rest.trim();
        }
        // Leading labels.
        while let Some((head, rest)) = text.split_once(':') {
            let head = head.trim();
            if !is_ident(head) || head.contains(char::is_whitespace) {
                break;
            }
            if !loc.is_multiple_of(4) || loc > u32::MAX as u64 {
                return Err(err(line, AsmErrorKind::AddressOutOfRange(loc)));
            }
            if !symbols.insert(head, loc as u32) {
                return Err(err(line, AsmErrorKind::DuplicateLabel(head.to_string())));
            }
            text = rest.trim();
        }
        if text.is_empty() {
            continue;
        }
        let (head, rest) = match text.find(char::is_whitespace) {
            Some(pos) => (&text[..pos], text[pos..].trim()),
            None => (text, ""),
        };
        let operands = split_operands(rest)
            .into_iter()
            .map(|op| parse_operand(line, op))
            .collect::<Result<Vec<_>, _>>()?;
        let lower = head.to_ascii_lowercase();
        let stmt = match lower.as_str() {
            ".org" => {
                let [Operand::Imm(addr)] = operands.as_slice() else {
                    return Err(syntax(line, ".org expects one address"));
                };
                if *addr < 0 || addr % 4 != 0 {
                    return Err(err(line, AsmErrorKind::AddressOutOfRange(*addr as u64)));
                }
                loc = *addr as u64;
                continue;
            }
            ".word" => {
                let [op] = operands.as_slice() else {
                    return Err(syntax(line, ".word expects one value"));
                };
                Stmt::Word(op.clone())
            }
            _ if lower.starts_with('.') => {
                return Err(err(line, AsmErrorKind::UnknownMnemonic(head.to_string())));
            }
            _ => Stmt::Insn {
                mnemonic: head.to_ascii_uppercase(),
                operands,
            },
        };
        if !loc.is_multiple_of(4) || loc + 4 > u32::MAX as u64 + 1 {
            return Err(err(line, AsmErrorKind::AddressOutOfRange(loc)));
        }
        items.push(Item {
            line,
            addr: loc as u32,
            stmt,
        });
        loc += 4;
    }
    Ok(Parsed { items, symbols })
}

fn check_range(line: usize, value: i64, min: i64, max: i64) -> Result<i64, AsmError> {
    if value < min || value > max {
        Err(err(line, AsmErrorKind::ImmediateOutOfRange { value, min, max }))
    } else {
        Ok(value)
    }
}

fn encode_stmt(item: &Item, symbols: &SymbolTable) -> Result<u32, AsmError> {
    let line = item.line;
    let label_addr = |name: &str| {
        symbols
            .get(name)
            .ok_or_else(|| err(line, AsmErrorKind::UndefinedLabel(name.to_string())))
    };
    let (mnemonic, ops) = match &item.stmt {
        Stmt::Word(op) => {
            return match op {
                Operand::Imm(v) => Ok(check_range(line, *v, i32::MIN as i64, u32::MAX as i64)? as u32),
                Operand::Label(name) => label_addr(name),
                _ => Err(syntax(line, ".word expects a number or label")),
            }
        }
        Stmt::Insn { mnemonic, operands } => (mnemonic.as_str(), operands.as_slice()),
    };
    let bad = || syntax(line, format!("bad operands for {mnemonic}"));
    let imm16 = |v: &i64| check_range(line, *v, 0, 0xFFFF).map(|v| v as u16);
    let imm12 = |v: &i64| check_range(line, *v, 0, 0xFFF).map(|v| v as u16);
    let shift = |v: &i64| check_range(line, *v, 0, 15).map(|v| v as u8);
    let rel = |op: &Operand| -> Result<i16, AsmError> {
        match op {
            Operand::Imm(v) => Ok(check_range(line, *v, i16::MIN as i64, i16::MAX as i64)? as i16),
            Operand::Label(name) => {
                let target = label_addr(name)? as i64;
                let delta = (target - (item.addr as i64 + 4)) / 4;
                Ok(check_range(line, delta, i16::MIN as i64, i16::MAX as i64)? as i16)
            }
            _ => Err(bad()),
        }
    };
    use Operand::{Imm, Mem, Reg as R};
    let insn = match (mnemonic, ops) {
        ("NOP", []) => Instruction::Nop,
        ("HALT", []) => Instruction::Halt,
        ("TRIG", []) => Instruction::Trig,
        ("RET", []) => Instruction::Ret,
        ("MOVI", [R(rd), Imm(v)]) => Instruction::Movi {
            rd: *rd,
            imm: imm16(v)?,
        },
        ("MOV", [R(rd), R(rs)]) => Instruction::Mov { rd: *rd, rs: *rs },
        ("ADD" | "SUB" | "AND" | "ORR" | "EOR", [R(rd), R(rs1), R(rs2)]) => Instruction::Alu {
            op: match mnemonic {
                "ADD" => AluOp::Add,
                "SUB" => AluOp::Sub,
                "AND" => AluOp::And,
                "ORR" => AluOp::Orr,
                _ => AluOp::Eor,
            },
            rd: *rd,
            rs1: *rs1,
            rs2: *rs2,
        },
        ("LSL" | "LSR", [R(rd), R(rs), Imm(v)]) => Instruction::Shift {
            op: if mnemonic == "LSL" { ShiftOp::Lsl } else { ShiftOp::Lsr },
            rd: *rd,
            rs: *rs,
            amount: shift(v)?,
        },
        ("CMP", [R(rs1), R(rs2)]) => Instruction::Cmp { rs1: *rs1, rs2: *rs2 },
        ("CMPI", [R(rs), Imm(v)]) => Instruction::Cmpi {
            rs: *rs,
            imm: imm16(v)?,
        },
        ("B" | "BEQ" | "BNE" | "BLT" | "BGE", [target]) => Instruction::Branch {
            cond: match mnemonic {
                "B" => Cond::Always,
                "BEQ" => Cond::Eq,
                "BNE" => Cond::Ne,
                "BLT" => Cond::Lt,
                _ => Cond::Ge,
            },
            offset: rel(target)?,
        },
        ("BL", [target]) => Instruction::Bl { offset: rel(target)? },
        ("LDR", [R(rd), Mem { base, offset }]) => Instruction::Ldr {
            rd: *rd,
            base: *base,
            offset: imm12(offset)?,
        },
        ("STR", [R(rs), Mem { base, offset }]) => Instruction::Str {
            rs: *rs,
            base: *base,
            offset: imm12(offset)?,
        },
        (
            "NOP" | "HALT" | "TRIG" | "RET" | "MOVI" | "MOV" | "ADD" | "SUB" | "AND" | "ORR" | "EOR" | "LSL" | "LSR"
            | "CMP" | "CMPI" | "B" | "BEQ" | "BNE" | "BLT" | "BGE" | "BL" | "LDR" | "STR",
            _,
        ) => return Err(bad()),
        _ => return Err(err(line, AsmErrorKind::UnknownMnemonic(mnemonic.to_string()))),
    };
    Ok(insn.encode().0)
}

/// Assembles `source` into an image laid out per `layout`.
pub fn assemble_with(source: &str, layout: &MemoryLayout) -> Result<(MemoryImage, SymbolTable), AsmError> {
    let Parsed { items, symbols } = first_pass(source)?;
    let mut code: Vec<u8> = Vec::new();
    let mut data: Vec<u8> = Vec::new();
    let mut seen: HashMap<u32, usize> = HashMap::new();
    for item in &items {
        let word = encode_stmt(item, &symbols)?;
        if seen.insert(item.addr, item.line).is_some() {
            return Err(err(item.line, AsmErrorKind::Overlap(item.addr)));
        }
        let (segment, offset) = if layout.in_code(item.addr) {
            (&mut code, item.addr - layout.code_base)
        } else if layout.in_data(item.addr) {
            (&mut data, item.addr - layout.data_base)
        } else {
            return Err(err(item.line, AsmErrorKind::AddressOutOfRange(item.addr as u64)));
        };
        let offset = offset as usize;
        if segment.len() < offset + 4 {
            segment.resize(offset + 4, 0);
        }
        segment[offset..offset + 4].copy_from_slice(&word.to_be_bytes());
    }
    let image = MemoryImage {
        code_base: layout.code_base,
        code,
        data_base: layout.data_base,
        data,
    };
    Ok((image, symbols))
}

/// Assembles with the default memory layout.
pub fn assemble(source: &str) -> Result<(MemoryImage, SymbolTable), AsmError> {
    assemble_with(source, &MemoryLayout::default())
}

/// Renders one code word the way the listing does, without address prefix.
pub fn disassemble_word(word: InstructionWord, addr: u32, symbols: &SymbolTable) -> String {
    let by_addr = symbols.by_address();
    render_word(word, addr, &by_addr)
}

fn render_word(word: InstructionWord, addr: u32, by_addr: &BTreeMap<u32, Vec<&str>>) -> String {
    let target = |t: u32| by_addr.get(&t).map(|names| names[0].to_string());
    match decode(word) {
        Decoded::Valid(insn) => {
            let text = insn.display_with(addr, &target).to_string();
            if insn.encode() == word {
                text
            } else {
                format!(".word 0x{word} ; {text}")
            }
        }
        Decoded::InvalidOpcode(_) => format!(".word 0x{word} ; invalid"),
    }
}

struct Listing<'a> {
    image: &'a MemoryImage,
    symbols: &'a SymbolTable,
}

impl fmt::Display for Listing<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let by_addr = self.symbols.by_address();
        let mut emitted = std::collections::BTreeSet::new();
        let mut labels = |f: &mut fmt::Formatter<'_>, addr: u32| -> fmt::Result {
            if let Some(names) = by_addr.get(&addr) {
                for name in names {
                    writeln!(f, "{name}:")?;
                }
                emitted.insert(addr);
            }
            Ok(())
        };
        for (addr, word) in self.image.code_words() {
            labels(f, addr)?;
            writeln!(
                f,
                "{addr:04X}: {word:08X}  {}",
                render_word(InstructionWord(word), addr, &by_addr)
            )?;
        }
        if !self.image.data.is_empty() {
            writeln!(f, ".org 0x{:08X}", self.image.data_base)?;
            for (addr, word) in self.image.data_words() {
                labels(f, addr)?;
                writeln!(f, "{addr:04X}: {word:08X}  .word 0x{word:08X}")?;
            }
        }
        for (addr, names) in &by_addr {
            if !emitted.contains(addr) {
                writeln!(f, ".org 0x{addr:08X}")?;
                for name in names {
                    writeln!(f, "{name}:")?;
                }
            }
        }
        Ok(())
    }
}

/// Listing with one line per word (`ADDR: WORD  text`) and labels on their
/// own lines. Words that do not decode, or decode but are not in canonical
/// form, are printed as `.word` so the listing re-assembles bit-exactly.
pub fn disassemble(image: &MemoryImage, symbols: &SymbolTable) -> String {
    Listing { image, symbols }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code_words(img: &MemoryImage) -> Vec<u32> {
        img.code_words().map(|(_, w)| w).collect()
    }

    #[test]
    fn assembles_movi_halt() {
        let (img, syms) = assemble("start: MOVI R1,#6 \n HALT").unwrap();
        assert_eq!(code_words(&img), vec![0x1010_0006, 0x0100_0000]);
        assert_eq!(img.code.len(), 8);
        assert_eq!(syms.get("start"), Some(0));
    }

    #[test]
    fn self_loop_offset_is_minus_one() {
        let (img, _) = assemble("loop: B loop").unwrap();
        assert_eq!(code_words(&img), vec![0x3000_FFFF]);
    }

    #[test]
    fn error_kinds_carry_line_numbers() {
        let e = assemble("NOP\nFOO R1").unwrap_err();
        assert_eq!(e.line, 2);
        assert_eq!(e.kind, AsmErrorKind::UnknownMnemonic("FOO".into()));

        let e = assemble("B nowhere").unwrap_err();
        assert_eq!(e.kind, AsmErrorKind::UndefinedLabel("nowhere".into()));

        let e = assemble("a: NOP\na: NOP").unwrap_err();
        assert_eq!((e.line, e.kind), (2, AsmErrorKind::DuplicateLabel("a".into())));

        let e = assemble("MOVI R1, #65536").unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::ImmediateOutOfRange { value: 65536, .. }));

        let e = assemble("LDR R1, [R2, #4096]").unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::ImmediateOutOfRange { .. }));

        let e = assemble("LSL R1, R2, #16").unwrap_err();
        assert!(matches!(e.kind, AsmErrorKind::ImmediateOutOfRange { .. }));
    }

    #[test]
    fn memory_operand_forms() {
        for src in ["LDR R1, [R2, #8]", "LDR R1,[R2+#8]", "LDR R1, [R2 + 8]"] {
            let (img, _) = assemble(src).unwrap();
            assert_eq!(code_words(&img), vec![0x4012_0008], "{src}");
        }
        let (img, _) = assemble("STR R3, [R9]").unwrap();
        assert_eq!(code_words(&img), vec![0x4139_0000]);
    }

    #[test]
    fn org_places_data() {
        let (img, syms) = assemble("HALT\n.org 0x10000\nin: .word 7\n.word -1").unwrap();
        assert_eq!(img.data, vec![0, 0, 0, 7, 0xFF, 0xFF, 0xFF, 0xFF]);
        assert_eq!(syms.get("in"), Some(0x1_0000));
    }

    #[test]
    fn listing_formats() {
        let syms = SymbolTable::new();
        let img = MemoryImage {
            code: 0x1010_0006u32.to_be_bytes().to_vec(),
            ..Default::default()
        };
        assert_eq!(disassemble(&img, &syms), "0000: 10100006  MOVI R1, #6\n");
        let img = MemoryImage {
            code: 0x9010_0006u32.to_be_bytes().to_vec(),
            ..Default::default()
        };
        assert_eq!(disassemble(&img, &syms), "0000: 90100006  .word 0x90100006 ; invalid\n");
    }

    #[test]
    fn non_canonical_words_survive_round_trip() {
        let img = MemoryImage {
            code: 0x0010_0006u32.to_be_bytes().to_vec(),
            data_base: 0x1_0000,
            ..Default::default()
        };
        let text = disassemble(&img, &SymbolTable::new());
        assert!(text.contains(".word 0x00100006 ; NOP"));
        assert_eq!(assemble(&text).unwrap().0, img);
    }

    #[test]
    fn listing_round_trip_with_labels_and_data() {
        let src = "main: MOVI R1, #1\n BEQ done\n B #-3\ndone: HALT\n.org 0x10000\nin: .word 5\n";
        let (img, syms) = assemble(src).unwrap();
        let listing = disassemble(&img, &syms);
        assert!(listing.contains("BEQ done"));
        let (img2, syms2) = assemble(&listing).unwrap();
        assert_eq!(img2, img);
        assert_eq!(syms2, syms);
    }

    #[test]
    fn symbol_file_round_trip() {
        let (_, syms) = assemble("a: NOP\nb: HALT").unwrap();
        let text = syms.to_symbol_file();
        assert_eq!(text, "# schema: fisim.symbols/1\na\t00000000\nb\t00000004\n");
        assert_eq!(SymbolTable::parse_symbol_file(&text).unwrap(), syms);
    }

    #[test]
    fn register_aliases() {
        let (img, _) = assemble("MOV LR, PC\nMOV SP, R0").unwrap();
        assert_eq!(code_words(&img), vec![0x11EF_0000, 0x11D0_0000]);
    }
}
