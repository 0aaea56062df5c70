//! Rewrites a safety corpus into its software-protected equivalent: the
//! cost a compiler-inserted check would add, with the metadata operators
//! removed. Used as the conventional-mitigation arm of the protection
//! comparisons.

use super::{remap_violations, Trace, TraceEvent};
use crate::error::TraceError;
use crate::isa::MetaOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftwareCheck {
    /// Explicit limit comparison before each checked access. `cost_instrs`
    /// models the compare/branch sequence.
    Bounds { cost_instrs: u64 },
    /// Stack canary: a guard word written at call time and re-read and
    /// compared just before return.
    Canary,
}

/// Apply a software protection scheme to a corpus that was generated for
/// the matching hardware client. Returns an error when the corpus has
/// nothing for the scheme to protect.
pub fn instrument_software_checks(
    trace: &Trace,
    check: SoftwareCheck,
) -> Result<Trace, TraceError> {
    match check {
        SoftwareCheck::Bounds { cost_instrs } => bounds(trace, cost_instrs),
        SoftwareCheck::Canary => canary(trace),
    }
}

fn bounds(trace: &Trace, cost_instrs: u64) -> Result<Trace, TraceError> {
    if !trace
        .events
        .iter()
        .any(|e| matches!(e, TraceEvent::Meta(MetaOp::Create { .. })))
    {
        return Err(TraceError::Invalid(
            "bounds instrumentation needs a corpus with per-access creates".into(),
        ));
    }
    let mut t = trace.clone();
    let mut old_to_new = vec![None; trace.events.len()];
    let mut events = Vec::with_capacity(trace.events.len() * 2);
    let mut armed = false;
    for (i, ev) in trace.events.iter().enumerate() {
        match ev {
            TraceEvent::Meta(MetaOp::Create { .. }) => {
                armed = true;
            }
            TraceEvent::Meta(_) => {}
            TraceEvent::MemAccess { .. } => {
                if std::mem::take(&mut armed) {
                    events.push(TraceEvent::ComputeCycles { n: cost_instrs });
                }
                old_to_new[i] = Some(events.len() as u64);
                events.push(ev.clone());
            }
            _ => {
                old_to_new[i] = Some(events.len() as u64);
                events.push(ev.clone());
            }
        }
    }
    t.events = events;
    remap_violations(&mut t.header.expected, &old_to_new);
    Ok(t)
}

fn canary(trace: &Trace) -> Result<Trace, TraceError> {
    if !trace
        .events
        .iter()
        .any(|e| matches!(e, TraceEvent::Call { .. }))
    {
        return Err(TraceError::Invalid(
            "canary instrumentation needs a corpus with calls".into(),
        ));
    }
    let mut t = trace.clone();
    let mut old_to_new = vec![None; trace.events.len()];
    let mut events = Vec::with_capacity(trace.events.len() * 2);
    for (i, ev) in trace.events.iter().enumerate() {
        match ev {
            TraceEvent::Call { ret_slot } => {
                old_to_new[i] = Some(events.len() as u64);
                events.push(ev.clone());
                // guard word next to the return address
                events.push(TraceEvent::store(ret_slot + 8, 8));
            }
            TraceEvent::Return { ret_slot } => {
                events.push(TraceEvent::load(ret_slot + 8, 8));
                events.push(TraceEvent::ComputeCycles { n: 1 });
                old_to_new[i] = Some(events.len() as u64);
                events.push(ev.clone());
            }
            _ => {
                old_to_new[i] = Some(events.len() as u64);
                events.push(ev.clone());
            }
        }
    }
    t.events = events;
    remap_violations(&mut t.header.expected, &old_to_new);
    Ok(t)
}
