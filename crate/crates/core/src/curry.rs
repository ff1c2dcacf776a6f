//! Call stacks carried across communication boundaries.
//!
//! Before a remote call the caller exports an envelope holding every stack
//! segment seen so far plus its own. The callee imports it and can then
//! print a diagnostic that spans all hops.
//!
//! Envelope format (`IDBGCURRY/1`), fields separated by single spaces:
//!
//! ```text
//! IDBGCURRY/1
//! SEG <origin_id> <thread_id> <captured_at> <frame_count>
//! FRM <class_id> <operation> <location|->
//! ```
//!
//! Segments appear in hop order, earliest first; frames within a segment
//! are outermost first.

use std::fmt::Write as _;

use thiserror::Error;

use crate::event::{CallSiteFrame, Clock, SystemClock};
use crate::stack::{dump_frames, StackView};
use crate::text::{
    decode_utf8, escape_optional, escape_space_field as esc, parse_num, split_fields, unescape_at,
    unescape_optional_at, FormatError, FormatErrorKind, Lines,
};

pub const CURRY_MAGIC: &str = "IDBGCURRY";
pub const CURRY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CurryError {
    #[error("stack segment origin id must be non-empty")]
    EmptyOrigin,
    #[error("call site class id must be non-empty")]
    EmptyClassId,
}

/// The frames captured on one node for one hop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackSegment {
    origin_id: String,
    thread_id: String,
    frames: Vec<CallSiteFrame>,
    captured_at: i64,
}

impl StackSegment {
    pub fn new(
        origin_id: impl Into<String>,
        thread_id: impl Into<String>,
        frames: Vec<CallSiteFrame>,
        captured_at: i64,
    ) -> Result<Self, CurryError> {
        let origin_id = origin_id.into();
        if origin_id.is_empty() {
            return Err(CurryError::EmptyOrigin);
        }
        if frames.iter().any(|f| f.class_id.is_empty()) {
            return Err(CurryError::EmptyClassId);
        }
        Ok(StackSegment {
            origin_id,
            thread_id: thread_id.into(),
            frames,
            captured_at,
        })
    }

    pub fn origin_id(&self) -> &str {
        &self.origin_id
    }

    pub fn thread_id(&self) -> &str {
        &self.thread_id
    }

    pub fn frames(&self) -> &[CallSiteFrame] {
        &self.frames
    }

    pub fn captured_at(&self) -> i64 {
        self.captured_at
    }
}

/// Stack segments from every hop so far, earliest first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CurriedStack {
    segments: Vec<StackSegment>,
}

impl CurriedStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[StackSegment] {
        &self.segments
    }

    pub fn push(&mut self, segment: StackSegment) {
        self.segments.push(segment);
    }

    pub fn frame_count(&self) -> usize {
        self.segments.iter().map(|s| s.frames.len()).sum()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("{CURRY_MAGIC}/{CURRY_VERSION}\n");
        for seg in &self.segments {
            let _ = writeln!(
                out,
                "SEG {} {} {} {}",
                esc(&seg.origin_id),
                esc(&seg.thread_id),
                seg.captured_at,
                seg.frames.len()
            );
            for f in &seg.frames {
                let _ = writeln!(
                    out,
                    "FRM {} {} {}",
                    esc(&f.class_id),
                    esc(&f.operation),
                    escape_optional(f.location.as_deref(), true)
                );
            }
        }
        out.into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Result<CurriedStack, FormatError> {
        let mut lines = Lines::new(decode_utf8(bytes)?);
        lines.expect_header(CURRY_MAGIC, CURRY_VERSION)?;
        let mut stack = CurriedStack::new();
        while let Some(line) = lines.next_line()? {
            let n = lines.line_no();
            let f = split_fields(line, ' ', 5, n)?;
            if f[0] != "SEG" {
                return Err(FormatError::invalid(n, "expected a SEG record"));
            }
            let origin_id = unescape_at(f[1], n)?;
            let thread_id = unescape_at(f[2], n)?;
            let captured_at: i64 = parse_num(f[3], "capture time", n)?;
            let count: usize = parse_num(f[4], "frame count", n)?;
            let mut frames = Vec::with_capacity(count.min(1024));
            for _ in 0..count {
                let line = lines.next_line()?.ok_or_else(|| {
                    FormatError::new(lines.line_no() + 1, FormatErrorKind::UnexpectedEnd)
                })?;
                let n = lines.line_no();
                let f = split_fields(line, ' ', 4, n)?;
                if f[0] != "FRM" {
                    return Err(FormatError::invalid(n, "expected a FRM record"));
                }
                frames.push(CallSiteFrame {
                    class_id: unescape_at(f[1], n)?,
                    operation: unescape_at(f[2], n)?,
                    location: unescape_optional_at(f[3], n)?,
                });
            }
            let segment = StackSegment::new(origin_id, thread_id, frames, captured_at)
                .map_err(|e| FormatError::invalid(n, e.to_string()))?;
            stack.push(segment);
        }
        Ok(stack)
    }
}

/// Builds the envelope for an outgoing call: `prior`'s segments followed by
/// one for the local stack, stamped with the system clock.
pub fn export_envelope(
    local: &StackView,
    origin_id: &str,
    thread_id: &str,
    prior: Option<&CurriedStack>,
) -> Result<Vec<u8>, CurryError> {
    export_envelope_with_clock(local, origin_id, thread_id, prior, &SystemClock)
}

pub fn export_envelope_with_clock(
    local: &StackView,
    origin_id: &str,
    thread_id: &str,
    prior: Option<&CurriedStack>,
    clock: &dyn Clock,
) -> Result<Vec<u8>, CurryError> {
    let mut stack = prior.cloned().unwrap_or_default();
    stack.push(StackSegment::new(
        origin_id,
        thread_id,
        local.frames().to_vec(),
        clock.now_micros(),
    )?);
    Ok(stack.encode())
}

pub fn import_envelope(bytes: &[u8]) -> Result<CurriedStack, FormatError> {
    CurriedStack::decode(bytes)
}

/// The local stack, then each remote hop newest first, each introduced by
/// `--- curried from <origin>/<thread> ---`.
pub fn curried_dump(local: &StackView, remote: &CurriedStack) -> String {
    let mut out = local.dump();
    for seg in remote.segments.iter().rev() {
        let _ = writeln!(out, "--- curried from {}/{} ---", seg.origin_id, seg.thread_id);
        out.push_str(&dump_frames(&seg.frames));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicI64, Ordering};

    struct FixedClock(AtomicI64);

    impl Clock for FixedClock {
        fn now_micros(&self) -> i64 {
            self.0.fetch_add(1, Ordering::SeqCst)
        }
    }

    fn clock() -> FixedClock {
        FixedClock(AtomicI64::new(1_000))
    }

    #[test]
    fn empty_local_stack_gives_one_empty_segment() {
        let bytes =
            export_envelope_with_clock(&StackView::default(), "A", "t", None, &clock()).unwrap();
        assert_eq!(bytes, b"IDBGCURRY/1\nSEG A t 1000 0\n");
        let stack = import_envelope(&bytes).unwrap();
        assert_eq!(stack.segments().len(), 1);
        assert_eq!(stack.frame_count(), 0);
    }

    #[test]
    fn single_frame_from_a() {
        let local = StackView::capture(&[CallSiteFrame::new("A", "m")]);
        let bytes = export_envelope_with_clock(&local, "A", "main", None, &clock()).unwrap();
        let stack = import_envelope(&bytes).unwrap();
        assert_eq!(stack.segments()[0].origin_id(), "A");
        assert_eq!(stack.segments()[0].frames(), local.frames());
    }

    #[test]
    fn hops_append_in_order() {
        let c = clock();
        let hop1 = export_envelope_with_clock(
            &StackView::capture(&[CallSiteFrame::new("A", "m")]),
            "A",
            "t1",
            None,
            &c,
        )
        .unwrap();
        let prior = import_envelope(&hop1).unwrap();
        let hop2 = export_envelope_with_clock(
            &StackView::capture(&[CallSiteFrame::new("B", "m"), CallSiteFrame::new("B", "n")]),
            "B",
            "t2",
            Some(&prior),
            &c,
        )
        .unwrap();
        let stack = import_envelope(&hop2).unwrap();
        let origins: Vec<_> = stack.segments().iter().map(|s| s.origin_id()).collect();
        assert_eq!(origins, ["A", "B"]);
        assert_eq!(stack.frame_count(), 3);
    }

    #[test]
    fn spaces_and_dashes_survive() {
        let frames = vec![
            CallSiteFrame::new("my class", "do it").at("-"),
            CallSiteFrame::new("x", "").at("file name.rs:1"),
            CallSiteFrame::new("-", "-"),
        ];
        let seg = StackSegment::new("node 1", "", frames, -4).unwrap();
        let mut stack = CurriedStack::new();
        stack.push(seg);
        assert_eq!(CurriedStack::decode(&stack.encode()).unwrap(), stack);
    }

    #[test]
    fn malformed_envelopes() {
        let local = StackView::capture(&[CallSiteFrame::new("A", "m"), CallSiteFrame::new("A", "n")]);
        let bytes = export_envelope_with_clock(&local, "A", "t", None, &clock()).unwrap();
        // every strict prefix that is not a clean line boundary, and the
        // boundary after SEG, must fail
        for cut in 1..bytes.len() {
            let prefix = &bytes[..cut];
            let at_record_end = prefix.ends_with(b"\n")
                && (cut == 12 || cut == bytes.len());
            if at_record_end {
                continue;
            }
            assert!(import_envelope(prefix).is_err(), "prefix of {cut} bytes accepted");
        }
        let err = import_envelope(b"IDBGCURRY/9\n").unwrap_err();
        assert!(matches!(err.kind, FormatErrorKind::VersionMismatch { .. }));
        let err = import_envelope(b"IDBGCURRY/1\nSEG A t 1 1\nXYZ a b c\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = import_envelope(b"IDBGCURRY/1\nSEG  t 1 0\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(import_envelope(b"IDBGCURRY/1\nSEG A t 1 0 extra\n").is_err());
    }

    #[test]
    fn rejects_empty_origin() {
        assert_eq!(
            export_envelope(&StackView::default(), "", "t", None),
            Err(CurryError::EmptyOrigin)
        );
    }

    #[test]
    fn dump_without_remote_matches_local() {
        let local = StackView::capture(&[CallSiteFrame::new("B", "m")]);
        assert_eq!(curried_dump(&local, &CurriedStack::new()), local.dump());
    }

    #[test]
    fn dump_with_empty_local() {
        let mut remote = CurriedStack::new();
        remote.push(StackSegment::new("A", "t", vec![CallSiteFrame::new("A", "m")], 0).unwrap());
        assert_eq!(
            curried_dump(&StackView::default(), &remote),
            "--- curried from A/t ---\nat A.m (unknown)\n"
        );
    }

    #[test]
    fn dump_lists_newest_hop_first() {
        let mut remote = CurriedStack::new();
        remote.push(StackSegment::new("A", "ta", vec![CallSiteFrame::new("A", "main"), CallSiteFrame::new("A", "m")], 0).unwrap());
        remote.push(StackSegment::new("B", "tb", vec![CallSiteFrame::new("B", "m")], 1).unwrap());
        let local = StackView::capture(&[CallSiteFrame::new("C", "handle")]);
        assert_eq!(
            curried_dump(&local, &remote),
            "at C.handle (unknown)\n\
             --- curried from B/tb ---\n\
             at B.m (unknown)\n\
             --- curried from A/ta ---\n\
             at A.m (unknown)\n\
             at A.main (unknown)\n"
        );
    }
}
