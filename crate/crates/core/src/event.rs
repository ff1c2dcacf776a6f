//! Monitor events and their one-line text form.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::semantics::Level;
use crate::text::{
    escape_optional, escape_tab_field as esc, parse_num, split_fields, unescape_at,
    unescape_optional_at, FormatError,
};

/// Number of tab-separated fields in an event line.
pub const EVENT_FIELDS: usize = 11;

/// One frame of a call stack: the class (or module) and the operation
/// running in it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CallSiteFrame {
    pub class_id: String,
    pub operation: String,
    /// `file:line`, when known.
    pub location: Option<String>,
}

impl CallSiteFrame {
    pub fn new(class_id: impl Into<String>, operation: impl Into<String>) -> Self {
        let class_id = class_id.into();
        debug_assert!(!class_id.is_empty(), "call site class id must be non-empty");
        CallSiteFrame {
            class_id,
            operation: operation.into(),
            location: None,
        }
    }

    pub fn at(mut self, location: impl Into<String>) -> Self {
        self.location = Some(location.into());
        self
    }
}

/// Builds a [`CallSiteFrame`] for the current source location.
#[macro_export]
macro_rules! call_site {
    ($class:expr, $op:expr) => {
        $crate::CallSiteFrame::new($class, $op)
            .at(::std::format!("{}:{}", ::std::file!(), ::std::line!()))
    };
}

/// A logging or assertion occurrence, as delivered to a channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorEvent {
    /// Per-channel, strictly increasing.
    pub sequence: u64,
    /// Microseconds since the Unix epoch.
    pub timestamp: i64,
    pub thread_id: String,
    pub origin_id: String,
    pub category: String,
    pub level: Level,
    /// Name of `level` in the emitting semantics, or `L<value>`.
    pub level_label: String,
    pub call_site: CallSiteFrame,
    pub message: String,
}

/// Source of event timestamps.
pub trait Clock: Send + Sync {
    fn now_micros(&self) -> i64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_micros(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as i64)
            .unwrap_or(0)
    }
}

/// Formats an event as a single tab-separated line (without newline).
///
/// Fields: timestamp, origin, thread, level number, level name, category,
/// class, operation, message, sequence, location (`-` when unknown).
pub fn format_event(e: &MonitorEvent) -> String {
    let mut line = String::with_capacity(96 + e.message.len());
    let _ = write!(
        line,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        e.timestamp,
        esc(&e.origin_id),
        esc(&e.thread_id),
        e.level,
        esc(&e.level_label),
        esc(&e.category),
        esc(&e.call_site.class_id),
        esc(&e.call_site.operation),
        esc(&e.message),
        e.sequence,
        escape_optional(e.call_site.location.as_deref(), false),
    );
    line
}

/// Parses a line produced by [`format_event`]. `line_no` is used for error
/// positions only.
pub fn parse_event(line: &str, line_no: usize) -> Result<MonitorEvent, FormatError> {
    let f = split_fields(line, '\t', EVENT_FIELDS, line_no)?;
    Ok(MonitorEvent {
        timestamp: parse_num(f[0], "timestamp", line_no)?,
        origin_id: unescape_at(f[1], line_no)?,
        thread_id: unescape_at(f[2], line_no)?,
        level: Level(parse_num(f[3], "level", line_no)?),
        level_label: unescape_at(f[4], line_no)?,
        category: unescape_at(f[5], line_no)?,
        call_site: CallSiteFrame {
            class_id: unescape_at(f[6], line_no)?,
            operation: unescape_at(f[7], line_no)?,
            location: unescape_optional_at(f[10], line_no)?,
        },
        message: unescape_at(f[8], line_no)?,
        sequence: parse_num(f[9], "sequence", line_no)?,
    })
}
