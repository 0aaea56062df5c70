//! Text serialization of traces: versioned header, one event per line,
//! decimal fields, and an FNV-64 integrity trailer.

use super::{AccessKind, ExpectedOutcome, MemImage, Trace, TraceEvent, TraceHeader};
use crate::error::TraceError;
use crate::isa::MetaOp;
use crate::os::TrapKind;
use crate::types::{ClientId, TagId};
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "metasim-trace v1";

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hex_bytes(b: &[u8]) -> String {
    if b.is_empty() {
        return "-".to_string();
    }
    b.iter().map(|x| format!("{x:02x}")).collect()
}

fn parse_hex_bytes(s: &str, line: usize) -> Result<Vec<u8>, TraceError> {
    if s == "-" {
        return Ok(Vec::new());
    }
    if !s.len().is_multiple_of(2) {
        return Err(TraceError::parse(line, "odd-length hex payload"));
    }
    (0..s.len())
        .step_by(2)
        .map(|i| {
            u8::from_str_radix(&s[i..i + 2], 16)
                .map_err(|_| TraceError::parse(line, "bad hex payload"))
        })
        .collect()
}

fn kind_name(k: TrapKind) -> &'static str {
    match k {
        TrapKind::BoundsViolation => "bounds_violation",
        TrapKind::ReturnAddressOverwrite => "return_address_overwrite",
    }
}

fn parse_kind(s: &str, line: usize) -> Result<TrapKind, TraceError> {
    match s {
        "bounds_violation" => Ok(TrapKind::BoundsViolation),
        "return_address_overwrite" => Ok(TrapKind::ReturnAddressOverwrite),
        _ => Err(TraceError::parse(line, format!("unknown trap kind {s:?}"))),
    }
}

fn event_line(e: &TraceEvent) -> String {
    match e {
        TraceEvent::MemAccess {
            kind,
            vaddr,
            size_bytes,
        } => {
            let k = match kind {
                AccessKind::Load => "load",
                AccessKind::Store => "store",
            };
            format!("{k} {vaddr} {size_bytes}")
        }
        TraceEvent::Call { ret_slot } => format!("call {ret_slot}"),
        TraceEvent::Return { ret_slot } => format!("return {ret_slot}"),
        TraceEvent::ComputeCycles { n } => format!("compute {n}"),
        TraceEvent::Label { kind } => format!("label {}", kind_name(*kind)),
        TraceEvent::Meta(op) => match op {
            MetaOp::Create {
                client,
                tag,
                metadata,
            } => format!("meta create {client} {tag} {}", hex_bytes(metadata)),
            MetaOp::Map { tag, vstart, size } => format!("meta map {tag} {vstart} {size}"),
            MetaOp::Unmap { vstart, size } => format!("meta unmap {vstart} {size}"),
            MetaOp::Map2D {
                tag,
                vstart,
                len_x,
                size_x,
                size_y,
            } => format!("meta map2d {tag} {vstart} {len_x} {size_x} {size_y}"),
            MetaOp::Unmap2D {
                vstart,
                len_x,
                size_x,
                size_y,
            } => format!("meta unmap2d {vstart} {len_x} {size_x} {size_y}"),
            MetaOp::Map3D {
                tag,
                vstart,
                len_x,
                len_y,
                size_x,
                size_y,
                size_z,
            } => format!(
                "meta map3d {tag} {vstart} {len_x} {len_y} {size_x} {size_y} {size_z}"
            ),
            MetaOp::Unmap3D {
                vstart,
                len_x,
                len_y,
                size_x,
                size_y,
                size_z,
            } => format!(
                "meta unmap3d {vstart} {len_x} {len_y} {size_x} {size_y} {size_z}"
            ),
        },
    }
}

/// Render a trace to its on-disk form, checksum trailer included.
pub fn to_string(t: &Trace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "generator {}", t.header.generator);
    let _ = writeln!(s, "seed {}", t.header.seed);
    for (name, value) in &t.header.params {
        let _ = writeln!(s, "param {name} {value}");
    }
    let _ = writeln!(s, "aspace {}", t.header.aspace_bytes);
    for (addr, value) in t.header.image.iter() {
        let _ = writeln!(s, "image {addr} {value}");
    }
    for (pos, kind) in &t.header.expected.violations {
        let _ = writeln!(s, "expect-violation {pos} {}", kind_name(*kind));
    }
    for addr in &t.header.expected.oracle_prefetches {
        let _ = writeln!(s, "expect-prefetch {addr}");
    }
    let _ = writeln!(s, "begin");
    for e in &t.events {
        let _ = writeln!(s, "{}", event_line(e));
    }
    let _ = writeln!(s, "end");
    let sum = fnv64(s.as_bytes());
    let _ = writeln!(s, "checksum {sum:016x}");
    s
}

pub fn trace_write(t: &Trace, path: &Path) -> Result<(), TraceError> {
    std::fs::write(path, to_string(t))?;
    Ok(())
}

struct Fields<'a> {
    parts: Vec<&'a str>,
    at: usize,
    line: usize,
}

impl<'a> Fields<'a> {
    fn new(s: &'a str, line: usize) -> Self {
        Fields {
            parts: s.split_ascii_whitespace().collect(),
            at: 0,
            line,
        }
    }

    fn next(&mut self) -> Result<&'a str, TraceError> {
        let p = self
            .parts
            .get(self.at)
            .ok_or_else(|| TraceError::parse(self.line, "missing field"))?;
        self.at += 1;
        Ok(p)
    }

    fn u64(&mut self) -> Result<u64, TraceError> {
        let line = self.line;
        self.next()?
            .parse()
            .map_err(|_| TraceError::parse(line, "expected integer"))
    }

    fn u8(&mut self) -> Result<u8, TraceError> {
        let line = self.line;
        self.next()?
            .parse()
            .map_err(|_| TraceError::parse(line, "expected 8-bit integer"))
    }

    fn done(&self) -> Result<(), TraceError> {
        if self.at == self.parts.len() {
            Ok(())
        } else {
            Err(TraceError::parse(self.line, "trailing fields"))
        }
    }
}

fn parse_event(f: &mut Fields) -> Result<TraceEvent, TraceError> {
    let line = f.line;
    let ev = match f.next()? {
        "load" => TraceEvent::load(f.u64()?, f.u64()? as u32),
        "store" => TraceEvent::store(f.u64()?, f.u64()? as u32),
        "call" => TraceEvent::Call { ret_slot: f.u64()? },
        "return" => TraceEvent::Return { ret_slot: f.u64()? },
        "compute" => TraceEvent::ComputeCycles { n: f.u64()? },
        "label" => TraceEvent::Label {
            kind: parse_kind(f.next()?, line)?,
        },
        "meta" => {
            let op = match f.next()? {
                "create" => {
                    let client = ClientId(f.u8()?);
                    let tag = TagId(f.u8()?);
                    let payload = parse_hex_bytes(f.next()?, line)?;
                    MetaOp::Create {
                        client,
                        tag,
                        metadata: payload,
                    }
                }
                "map" => MetaOp::Map {
                    tag: TagId(f.u8()?),
                    vstart: f.u64()?,
                    size: f.u64()?,
                },
                "unmap" => MetaOp::Unmap {
                    vstart: f.u64()?,
                    size: f.u64()?,
                },
                "map2d" => MetaOp::Map2D {
                    tag: TagId(f.u8()?),
                    vstart: f.u64()?,
                    len_x: f.u64()?,
                    size_x: f.u64()?,
                    size_y: f.u64()?,
                },
                "unmap2d" => MetaOp::Unmap2D {
                    vstart: f.u64()?,
                    len_x: f.u64()?,
                    size_x: f.u64()?,
                    size_y: f.u64()?,
                },
                "map3d" => MetaOp::Map3D {
                    tag: TagId(f.u8()?),
                    vstart: f.u64()?,
                    len_x: f.u64()?,
                    len_y: f.u64()?,
                    size_x: f.u64()?,
                    size_y: f.u64()?,
                    size_z: f.u64()?,
                },
                "unmap3d" => MetaOp::Unmap3D {
                    vstart: f.u64()?,
                    len_x: f.u64()?,
                    len_y: f.u64()?,
                    size_x: f.u64()?,
                    size_y: f.u64()?,
                    size_z: f.u64()?,
                },
                other => {
                    return Err(TraceError::parse(
                        line,
                        format!("unknown meta op {other:?}"),
                    ))
                }
            };
            TraceEvent::Meta(op)
        }
        other => return Err(TraceError::parse(line, format!("unknown event {other:?}"))),
    };
    f.done()?;
    Ok(ev)
}

/// Parse the on-disk form, verifying the integrity trailer.
pub fn from_str(text: &str) -> Result<Trace, TraceError> {
    // The trailer covers every byte before its own line.
    let sum_off = text
        .trim_end()
        .rfind("checksum ")
        .ok_or(TraceError::Invalid("missing checksum trailer".into()))?;
    let found = text[sum_off..]
        .split_ascii_whitespace()
        .nth(1)
        .and_then(|s| u64::from_str_radix(s, 16).ok())
        .ok_or(TraceError::Invalid("malformed checksum trailer".into()))?;
    let computed = fnv64(&text.as_bytes()[..sum_off]);
    if found != computed {
        return Err(TraceError::Integrity { found, computed });
    }

    let mut header = TraceHeader {
        generator: String::new(),
        seed: 0,
        params: Vec::new(),
        aspace_bytes: 0,
        image: MemImage::default(),
        expected: ExpectedOutcome::default(),
    };
    let mut events = Vec::new();
    let mut lines = text[..sum_off].lines().enumerate();

    let (_, first) = lines
        .next()
        .ok_or(TraceError::Invalid("empty file".into()))?;
    if first.trim() != MAGIC {
        return Err(TraceError::parse(1, format!("bad magic {first:?}")));
    }

    let mut in_body = false;
    let mut saw_end = false;
    for (i, raw) in lines {
        let line_no = i + 1;
        let lt = raw.trim();
        if lt.is_empty() {
            continue;
        }
        let mut f = Fields::new(lt, line_no);
        if !in_body {
            match f.next()? {
                "generator" => header.generator = f.next()?.to_string(),
                "seed" => header.seed = f.u64()?,
                "param" => {
                    let name = f.next()?.to_string();
                    header.params.push((name, f.u64()?));
                }
                "aspace" => header.aspace_bytes = f.u64()?,
                "image" => {
                    let a = f.u64()?;
                    header.image.set(a, f.u64()?);
                }
                "expect-violation" => {
                    let pos = f.u64()?;
                    let kind = parse_kind(f.next()?, line_no)?;
                    header.expected.violations.push((pos, kind));
                }
                "expect-prefetch" => header.expected.oracle_prefetches.push(f.u64()?),
                "begin" => {
                    in_body = true;
                    continue;
                }
                other => {
                    return Err(TraceError::parse(
                        line_no,
                        format!("unknown header line {other:?}"),
                    ))
                }
            }
            f.done()?;
        } else {
            if lt == "end" {
                saw_end = true;
                continue;
            }
            if saw_end {
                return Err(TraceError::parse(line_no, "content after end"));
            }
            events.push(parse_event(&mut f)?);
        }
    }
    if !in_body || !saw_end {
        return Err(TraceError::Invalid("truncated trace body".into()));
    }
    Ok(Trace { header, events })
}

pub fn trace_read(path: &Path) -> Result<Trace, TraceError> {
    from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trace {
        let mut t = Trace::new("test", 99, vec![("n".into(), 3)]);
        t.header.image.set(4096, 8192);
        t.header
            .expected
            .violations
            .push((2, TrapKind::BoundsViolation));
        t.header.expected.oracle_prefetches.push(12345);
        t.events = vec![
            TraceEvent::Meta(MetaOp::Create {
                client: ClientId(0),
                tag: TagId(1),
                metadata: vec![1, 2, 0xff],
            }),
            TraceEvent::Meta(MetaOp::Map {
                tag: TagId(1),
                vstart: 4096,
                size: 1024,
            }),
            TraceEvent::Label {
                kind: TrapKind::BoundsViolation,
            },
            TraceEvent::load(5120, 4),
            TraceEvent::Call { ret_slot: 65536 },
            TraceEvent::store(65600, 8),
            TraceEvent::Return { ret_slot: 65536 },
            TraceEvent::ComputeCycles { n: 7 },
            TraceEvent::Meta(MetaOp::Map3D {
                tag: TagId(2),
                vstart: 1 << 20,
                len_x: 64,
                len_y: 2,
                size_x: 512,
                size_y: 4,
                size_z: 2,
            }),
            TraceEvent::Meta(MetaOp::Unmap {
                vstart: 4096,
                size: 1024,
            }),
        ];
        t.seal_aspace(4096);
        t
    }

    #[test]
    fn round_trip_is_identity() {
        let t = sample();
        let s = to_string(&t);
        let back = from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn file_round_trip() {
        let t = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.trace");
        trace_write(&t, &p).unwrap();
        assert_eq!(trace_read(&p).unwrap(), t);
    }

    #[test]
    fn truncated_body_is_rejected() {
        let s = to_string(&sample());
        let cut = s.find("call").unwrap();
        // keep a valid-looking trailer so truncation is what trips
        let body = &s[..cut];
        let sum = fnv64(body.as_bytes());
        let forged = format!("{body}checksum {sum:016x}\n");
        match from_str(&forged) {
            Err(TraceError::Invalid(_)) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_byte_fails_integrity() {
        let s = to_string(&sample()).replace("load 5120", "load 5121");
        match from_str(&s) {
            Err(TraceError::Integrity { .. }) => {}
            other => panic!("expected integrity error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_event_reports_line_number() {
        let mut t = sample();
        t.events.clear();
        let s = to_string(&t).replace("begin\n", "begin\nfrobnicate 1 2\n");
        // fix checksum for the edited text
        let off = s.rfind("checksum ").unwrap();
        let sum = fnv64(&s.as_bytes()[..off]);
        let s = format!("{}checksum {sum:016x}\n", &s[..off]);
        match from_str(&s) {
            Err(TraceError::Parse { line, .. }) => {
                assert!(line > 1, "line number should point into the body")
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_payload_round_trips() {
        let mut t = Trace::new("test", 0, vec![]);
        t.events.push(TraceEvent::Meta(MetaOp::Create {
            client: ClientId(1),
            tag: TagId(2),
            metadata: vec![],
        }));
        let back = from_str(&to_string(&t)).unwrap();
        assert_eq!(back, t);
    }
}
