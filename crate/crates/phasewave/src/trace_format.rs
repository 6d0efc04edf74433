//! Line-based trace text format.
//!
//! ```text
//! V 1
//! # comment
//! B <block_id> <start_address_hex> <instruction_count> <F|B|C|R> [<target_address_hex>]
//! E <block_id> [<cycles>]
//! L <quantum_length>
//! Q <quantum_index> <cpi>
//! ```

use std::fmt::Write as _;

use phasewave_core::trace::{
    BlockDescriptor, BlockEvent, BlockId, ExecutionTrace, QuantumRecord, QuantumSamples, Terminator, TraceError,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: TraceError },
    #[error("{0}")]
    Trace(TraceError),
}

fn malformed(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Malformed { line, message: message.into() }
}

fn parse_hex(s: &str, line: usize) -> Result<u64, ParseError> {
    let digits = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    u64::from_str_radix(digits, 16).map_err(|_| malformed(line, format!("bad hex address '{s}'")))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T, ParseError> {
    s.parse().map_err(|_| malformed(line, format!("bad {what} '{s}'")))
}

fn terminator(s: &str, line: usize) -> Result<Terminator, ParseError> {
    Ok(match s {
        "F" => Terminator::Fallthrough,
        "B" => Terminator::Branch,
        "C" => Terminator::Call,
        "R" => Terminator::Return,
        _ => return Err(malformed(line, format!("bad terminator '{s}'"))),
    })
}

fn terminator_code(t: Terminator) -> char {
    match t {
        Terminator::Fallthrough => 'F',
        Terminator::Branch => 'B',
        Terminator::Call => 'C',
        Terminator::Return => 'R',
    }
}

pub fn parse_trace(input: &str) -> Result<ExecutionTrace, ParseError> {
    let mut version_seen = false;
    let mut blocks = Vec::new();
    let mut block_lines = Vec::new();
    let mut events = Vec::new();
    let mut event_lines = Vec::new();
    let mut records = Vec::new();
    let mut record_lines = Vec::new();
    let mut quantum_length: Option<(u64, usize)> = None;

    for (i, raw) in input.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if !version_seen {
            if fields != ["V", "1"] {
                return Err(malformed(line, "expected version header 'V 1'"));
            }
            version_seen = true;
            continue;
        }
        match fields[0] {
            "V" => return Err(malformed(line, "duplicate version header")),
            "B" => {
                if !(5..=6).contains(&fields.len()) {
                    return Err(malformed(line, "block record needs 4 or 5 fields"));
                }
                blocks.push(BlockDescriptor {
                    id: BlockId(parse_num(fields[1], "block id", line)?),
                    start_address: parse_hex(fields[2], line)?,
                    instruction_count: parse_num(fields[3], "instruction count", line)?,
                    terminator: terminator(fields[4], line)?,
                    target_address: fields.get(5).map(|s| parse_hex(s, line)).transpose()?,
                });
                block_lines.push(line);
            }
            "E" => {
                if !(2..=3).contains(&fields.len()) {
                    return Err(malformed(line, "event record needs 1 or 2 fields"));
                }
                events.push(BlockEvent {
                    block: BlockId(parse_num(fields[1], "block id", line)?),
                    cycles: fields.get(2).map(|s| parse_num(s, "cycles", line)).transpose()?,
                });
                event_lines.push(line);
            }
            "Q" => {
                if fields.len() != 3 {
                    return Err(malformed(line, "quantum record needs 2 fields"));
                }
                records.push(QuantumRecord {
                    index: parse_num(fields[1], "quantum index", line)?,
                    cpi: parse_num(fields[2], "cpi", line)?,
                });
                record_lines.push(line);
            }
            "L" => {
                if fields.len() != 2 {
                    return Err(malformed(line, "quantum length record needs 1 field"));
                }
                if quantum_length.is_some() {
                    return Err(malformed(line, "duplicate quantum length"));
                }
                quantum_length = Some((parse_num(fields[1], "quantum length", line)?, line));
            }
            other => return Err(malformed(line, format!("unknown record type '{other}'"))),
        }
    }
    if !version_seen {
        return Err(malformed(1, "missing version header 'V 1'"));
    }

    let quanta = match (quantum_length, records.is_empty()) {
        (Some((length, _)), _) => Some(QuantumSamples { length, records }),
        (None, true) => None,
        (None, false) => return Err(malformed(record_lines[0], "quantum records require an 'L' record")),
    };

    ExecutionTrace::new(blocks.clone(), events.clone(), quanta).map_err(|e| {
        // attach the offending line where one exists
        let line = match &e {
            TraceError::UnknownBlock(id) => events.iter().position(|ev| ev.block == *id).map(|i| event_lines[i]),
            TraceError::InvalidCycles { event } => event_lines.get(*event).copied(),
            TraceError::DuplicateBlock(id) => blocks.iter().rposition(|b| b.id == *id).map(|i| block_lines[i]),
            TraceError::DuplicateAddress(a) => {
                blocks.iter().rposition(|b| b.start_address == *a).map(|i| block_lines[i])
            }
            TraceError::InvalidBlock { id, .. } => blocks.iter().position(|b| b.id == *id).map(|i| block_lines[i]),
            TraceError::InvalidQuantum { index, .. } => record_lines.get(*index).copied(),
            _ => None,
        };
        match line {
            Some(line) => ParseError::Invalid { line, source: e },
            None => ParseError::Trace(e),
        }
    })
}

pub fn write_trace(trace: &ExecutionTrace) -> String {
    let mut out = String::from("V 1\n");
    for b in trace.blocks() {
        let _ = write!(
            out,
            "B {} {:#x} {} {}",
            b.id,
            b.start_address,
            b.instruction_count,
            terminator_code(b.terminator)
        );
        if let Some(t) = b.target_address {
            let _ = write!(out, " {t:#x}");
        }
        out.push('\n');
    }
    if let Some(q) = trace.quanta() {
        let _ = writeln!(out, "L {}", q.length);
        for r in &q.records {
            let _ = writeln!(out, "Q {} {}", r.index, r.cpi);
        }
    }
    for e in trace.events() {
        match e.cycles {
            Some(c) => {
                let _ = writeln!(out, "E {} {}", e.block, c);
            }
            None => {
                let _ = writeln!(out, "E {}", e.block);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_trace() {
        let t = parse_trace("V 1\n# one block\nB 0 0x100 5 F\nE 0 5\nE 0 5\nE 0 5\n").unwrap();
        assert_eq!(t.total_instructions(), 15);
        assert_eq!(write_trace(&t), "V 1\nB 0 0x100 5 F\nE 0 5\nE 0 5\nE 0 5\n");
    }

    #[test]
    fn unknown_block_reports_line() {
        let e = parse_trace("V 1\nB 0 100 5 F\nE 0 5\nE 7 5\n").unwrap_err();
        assert_eq!(e.to_string(), "line 4: unknown block 7");
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_trace("B 0 100 5 F\n"), Err(ParseError::Malformed { line: 1, .. })));
        assert!(matches!(parse_trace("V 1\nB 0 zz 5 F\n"), Err(ParseError::Malformed { line: 2, .. })));
        assert!(matches!(parse_trace("V 1\nB 0 10 5 X\n"), Err(ParseError::Malformed { line: 2, .. })));
        assert!(matches!(parse_trace("V 1\nX 1\n"), Err(ParseError::Malformed { line: 2, .. })));
        assert!(matches!(parse_trace("V 1\nB 0 10 5 F\nE 0\nQ 0 1.0\n"), Err(ParseError::Malformed { line: 4, .. })));
        assert!(matches!(parse_trace(""), Err(ParseError::Malformed { .. })));
    }

    #[test]
    fn duplicate_block_reports_line() {
        let e = parse_trace("V 1\nB 0 10 5 F\nB 0 20 5 F\nE 0 1\n").unwrap_err();
        assert!(matches!(e, ParseError::Invalid { line: 3, source: TraceError::DuplicateBlock(_) }));
    }

    #[test]
    fn quantum_mode() {
        let src = "V 1\nB 0 0x10 4 B 0x10\nL 6\nQ 0 1.5\nQ 1 2.25\nE 0\nE 0\nE 0\n";
        let t = parse_trace(src).unwrap();
        assert_eq!(t.quanta().unwrap().records.len(), 2);
        assert_eq!(write_trace(&t), src);
        let e = parse_trace("V 1\nB 0 0x10 4 F\nL 6\nQ 0 1.5\nE 0\nE 0\nE 0\n").unwrap_err();
        assert!(matches!(e, ParseError::Trace(TraceError::QuantumCountMismatch { expected: 2, found: 1 })));
        let e = parse_trace("V 1\nB 0 0x10 4 F\nE 0\nE 0 3\n").unwrap_err();
        assert!(matches!(e, ParseError::Trace(TraceError::MixedMode)));
    }
}
