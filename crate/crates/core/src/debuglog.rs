//! Serializable debug logs for disconnected operation.
//!
//! A node that cannot reach its monitor records events into a [`DebugLog`]
//! through a [`RecordingChannel`]. The log travels as an `IDBGLOG/1` file
//! and is merged with other logs when it is inspected.
//!
//! ```text
//! IDBGLOG/1
//! LOG<TAB><log_id><TAB><origin_id>
//! <event line>
//! ...
//! ```
//!
//! The `LOG` line is optional on input; without it both ids are empty.

use std::fmt::Write as _;

use parking_lot::Mutex;

use crate::channel::{ChannelError, ChannelKind, EventDraft, OutputChannel, Stamper};
use crate::event::{format_event, parse_event, Clock, MonitorEvent};
use crate::text::{decode_utf8, escape_tab_field as esc, split_fields, unescape_at, FormatError, Lines};

pub const LOG_MAGIC: &str = "IDBGLOG";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DebugLog {
    pub log_id: String,
    pub origin_id: String,
    pub events: Vec<MonitorEvent>,
}

impl DebugLog {
    pub fn new(log_id: impl Into<String>, origin_id: impl Into<String>) -> Self {
        DebugLog {
            log_id: log_id.into(),
            origin_id: origin_id.into(),
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The event lines alone, each ending in a newline.
    pub fn event_section(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&format_event(e));
            out.push('\n');
        }
        out
    }

    pub fn export(&self) -> Vec<u8> {
        let mut out = format!("{LOG_MAGIC}/{LOG_VERSION}\n");
        let _ = writeln!(out, "LOG\t{}\t{}", esc(&self.log_id), esc(&self.origin_id));
        out.push_str(&self.event_section());
        out.into_bytes()
    }

    pub fn import(bytes: &[u8]) -> Result<DebugLog, FormatError> {
        let mut lines = Lines::new(decode_utf8(bytes)?);
        lines.expect_header(LOG_MAGIC, LOG_VERSION)?;
        let mut log = DebugLog::default();
        let mut first = true;
        while let Some(line) = lines.next_line()? {
            let n = lines.line_no();
            if first && line.starts_with("LOG\t") {
                let f = split_fields(line, '\t', 3, n)?;
                log.log_id = unescape_at(f[1], n)?;
                log.origin_id = unescape_at(f[2], n)?;
            } else {
                log.events.push(parse_event(line, n)?);
            }
            first = false;
        }
        Ok(log)
    }
}

/// Total order used to merge logs: timestamp, then origin, then sequence.
fn merge_key(e: &MonitorEvent) -> (i64, &str, u64) {
    (e.timestamp, e.origin_id.as_str(), e.sequence)
}

/// Interleaves two logs by (timestamp, origin, sequence). Ties keep `a`'s
/// events before `b`'s. Clocks of different origins are taken as they are.
///
/// The result is named `<a>+<b>`. It keeps the shared origin when both logs
/// have the same one, else also joins them with `+`.
pub fn merge_logs(a: &DebugLog, b: &DebugLog) -> DebugLog {
    let mut events: Vec<MonitorEvent> = a.events.iter().chain(&b.events).cloned().collect();
    // stable, so equal keys stay in a-then-b order
    events.sort_by(|x, y| merge_key(x).cmp(&merge_key(y)));
    let origin_id = if a.origin_id == b.origin_id {
        a.origin_id.clone()
    } else {
        format!("{}+{}", a.origin_id, b.origin_id)
    };
    DebugLog {
        log_id: format!("{}+{}", a.log_id, b.log_id),
        origin_id,
        events,
    }
}

/// A channel that appends every event to an in-memory [`DebugLog`],
/// stamping each with the channel's origin.
pub struct RecordingChannel {
    id: String,
    state: Mutex<(Stamper, DebugLog)>,
}

impl RecordingChannel {
    /// The channel id is the log id.
    pub fn new(log_id: impl Into<String>, origin_id: impl Into<String>) -> Self {
        let log = DebugLog::new(log_id, origin_id);
        RecordingChannel {
            id: log.log_id.clone(),
            state: Mutex::new((Stamper::new(), log)),
        }
    }

    pub fn log(&self) -> DebugLog {
        self.state.lock().1.clone()
    }
}

impl OutputChannel for RecordingChannel {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> ChannelKind {
        ChannelKind::Recording
    }

    fn deliver(&self, mut draft: EventDraft, clock: &dyn Clock) -> Result<MonitorEvent, ChannelError> {
        let mut guard = self.state.lock();
        let (stamper, log) = &mut *guard;
        draft.origin_id = log.origin_id.clone();
        let event = stamper.prepare(draft, clock);
        stamper.commit(&event);
        log.events.push(event.clone());
        Ok(event)
    }
}
