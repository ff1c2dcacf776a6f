//! Output channels.
//!
//! A channel receives an [`EventDraft`], stamps it with its own sequence
//! number and a timestamp, and stores or writes the finished event. Stamping
//! and delivery happen under one lock, so concurrent writers never see a
//! duplicated or reordered sequence on a channel.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use thiserror::Error;

use crate::debuglog::LOG_MAGIC;
use crate::event::{format_event, CallSiteFrame, Clock, MonitorEvent};
use crate::semantics::Level;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Console,
    Buffer,
    File,
    Recording,
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel `{channel}` failed to write: {source}")]
    Write {
        channel: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot open `{}`: {source}", path.display())]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Everything about an event except what the channel stamps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDraft {
    pub thread_id: String,
    pub origin_id: String,
    pub category: String,
    pub level: Level,
    pub level_label: String,
    pub call_site: CallSiteFrame,
    pub message: String,
}

impl EventDraft {
    pub fn stamp(self, sequence: u64, timestamp: i64) -> MonitorEvent {
        MonitorEvent {
            sequence,
            timestamp,
            thread_id: self.thread_id,
            origin_id: self.origin_id,
            category: self.category,
            level: self.level,
            level_label: self.level_label,
            call_site: self.call_site,
            message: self.message,
        }
    }
}

/// A sink for monitor events.
pub trait OutputChannel: Send + Sync {
    fn id(&self) -> &str;

    fn kind(&self) -> ChannelKind;

    /// Stamps and delivers one event, returning it as delivered.
    fn deliver(&self, draft: EventDraft, clock: &dyn Clock) -> Result<MonitorEvent, ChannelError>;
}

/// Sequence and timestamp bookkeeping shared by the built-in channels.
///
/// Timestamps are clamped so they never go backwards on one channel.
#[derive(Debug)]
pub struct Stamper {
    next_sequence: u64,
    last_timestamp: i64,
}

impl Default for Stamper {
    fn default() -> Self {
        Stamper::new()
    }
}

impl Stamper {
    pub fn new() -> Self {
        Stamper {
            next_sequence: 0,
            last_timestamp: i64::MIN,
        }
    }

    /// Stamps `draft` without committing. Call [`Stamper::commit`] once the
    /// event has been stored.
    pub fn prepare(&self, draft: EventDraft, clock: &dyn Clock) -> MonitorEvent {
        let ts = clock.now_micros().max(self.last_timestamp);
        draft.stamp(self.next_sequence, ts)
    }

    pub fn commit(&mut self, event: &MonitorEvent) {
        self.next_sequence = event.sequence + 1;
        self.last_timestamp = event.timestamp;
    }
}

struct WriterState {
    stamper: Stamper,
    writer: Box<dyn Write + Send>,
}

/// Writes formatted event lines to any byte sink.
pub struct WriterChannel {
    id: String,
    kind: ChannelKind,
    state: Mutex<WriterState>,
}

impl WriterChannel {
    pub fn new(id: impl Into<String>, writer: Box<dyn Write + Send>) -> Self {
        Self::with_kind(id, ChannelKind::Console, writer)
    }

    fn with_kind(id: impl Into<String>, kind: ChannelKind, writer: Box<dyn Write + Send>) -> Self {
        WriterChannel {
            id: id.into(),
            kind,
            state: Mutex::new(WriterState {
                stamper: Stamper::new(),
                writer,
            }),
        }
    }
}

impl OutputChannel for WriterChannel {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> ChannelKind {
        self.kind
    }

    fn deliver(&self, draft: EventDraft, clock: &dyn Clock) -> Result<MonitorEvent, ChannelError> {
        let mut state = self.state.lock();
        let event = state.stamper.prepare(draft, clock);
        let mut line = format_event(&event);
        line.push('\n');
        state
            .writer
            .write_all(line.as_bytes())
            .and_then(|_| state.writer.flush())
            .map_err(|source| ChannelError::Write {
                channel: self.id.clone(),
                source,
            })?;
        state.stamper.commit(&event);
        Ok(event)
    }
}

/// Channel `console`: event lines on standard error.
pub fn console_channel() -> WriterChannel {
    WriterChannel::with_kind("console", ChannelKind::Console, Box::new(io::stderr()))
}

/// Opens `path` for appending as channel `id`. A new or empty file gets the
/// log header first, so the file is always a readable debug log.
pub fn file_channel(id: impl Into<String>, path: impl AsRef<Path>) -> Result<WriterChannel, ChannelError> {
    let path = path.as_ref();
    let open_err = |source| ChannelError::Open {
        path: path.to_path_buf(),
        source,
    };
    let mut file: File = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(open_err)?;
    if file.metadata().map_err(open_err)?.len() == 0 {
        writeln!(file, "{LOG_MAGIC}/1").map_err(open_err)?;
    }
    Ok(WriterChannel::with_kind(id, ChannelKind::File, Box::new(file)))
}

/// Keeps delivered events in memory, in delivery order.
pub struct BufferChannel {
    id: String,
    state: Mutex<(Stamper, Vec<MonitorEvent>)>,
}

impl BufferChannel {
    pub fn new(id: impl Into<String>) -> Self {
        BufferChannel {
            id: id.into(),
            state: Mutex::new((Stamper::new(), Vec::new())),
        }
    }

    pub fn events(&self) -> Vec<MonitorEvent> {
        self.state.lock().1.clone()
    }

    pub fn len(&self) -> usize {
        self.state.lock().1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Removes and returns everything buffered so far. Sequence numbering
    /// continues where it left off.
    pub fn take(&self) -> Vec<MonitorEvent> {
        std::mem::take(&mut self.state.lock().1)
    }
}

/// Channel `buffer`.
pub fn buffer_channel() -> BufferChannel {
    BufferChannel::new("buffer")
}

impl OutputChannel for BufferChannel {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> ChannelKind {
        ChannelKind::Buffer
    }

    fn deliver(&self, draft: EventDraft, clock: &dyn Clock) -> Result<MonitorEvent, ChannelError> {
        let mut guard = self.state.lock();
        let (stamper, events) = &mut *guard;
        let event = stamper.prepare(draft, clock);
        stamper.commit(&event);
        events.push(event.clone());
        Ok(event)
    }
}

/// Channels addressable by id, as named in context files.
#[derive(Default)]
pub struct ChannelTable {
    channels: RwLock<HashMap<String, Arc<dyn OutputChannel>>>,
}

impl ChannelTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `channel` under its id, replacing any previous one.
    pub fn register(&self, channel: Arc<dyn OutputChannel>) {
        self.channels
            .write()
            .insert(channel.id().to_string(), channel);
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn OutputChannel>> {
        self.channels.read().get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<_> = self.channels.read().keys().cloned().collect();
        ids.sort();
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicI64, Ordering};

    pub(crate) struct StepClock(AtomicI64);

    impl Clock for StepClock {
        fn now_micros(&self) -> i64 {
            self.0.fetch_add(10, Ordering::SeqCst)
        }
    }

    fn draft(msg: &str) -> EventDraft {
        EventDraft {
            thread_id: "t".into(),
            origin_id: "o".into(),
            category: "NETWORK".into(),
            level: Level(3),
            level_label: "WARNING".into(),
            call_site: CallSiteFrame::new("C", "op"),
            message: msg.into(),
        }
    }

    #[test]
    fn buffer_keeps_order() {
        let clock = StepClock(AtomicI64::new(100));
        let buf = buffer_channel();
        for m in ["a", "b", "c"] {
            buf.deliver(draft(m), &clock).unwrap();
        }
        let events = buf.events();
        assert_eq!(events.len(), 3);
        assert_eq!(
            events.iter().map(|e| e.message.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        assert_eq!(
            events.iter().map(|e| e.sequence).collect::<Vec<_>>(),
            [0, 1, 2]
        );
        assert_eq!(buf.take().len(), 3);
        assert!(buf.is_empty());
        assert_eq!(buf.deliver(draft("d"), &clock).unwrap().sequence, 3);
    }

    struct BackwardsClock(AtomicI64);

    impl Clock for BackwardsClock {
        fn now_micros(&self) -> i64 {
            self.0.fetch_sub(5, Ordering::SeqCst)
        }
    }

    #[test]
    fn timestamps_never_go_backwards() {
        let clock = BackwardsClock(AtomicI64::new(100));
        let buf = buffer_channel();
        let a = buf.deliver(draft("a"), &clock).unwrap();
        let b = buf.deliver(draft("b"), &clock).unwrap();
        assert_eq!(a.timestamp, 100);
        assert_eq!(b.timestamp, 100);
    }

    #[test]
    fn file_channel_appends_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.log");
        let clock = StepClock(AtomicI64::new(0));
        for run in ["first", "second"] {
            let ch = file_channel("file", &path).unwrap();
            ch.deliver(draft(run), &clock).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "IDBGLOG/1");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("\tfirst\t"));
        assert!(lines[2].contains("\tsecond\t"));
    }

    #[test]
    fn file_channel_reports_open_failure() {
        let dir = tempfile::tempdir().unwrap();
        let err = file_channel("file", dir.path().join("missing/dir/x.log"));
        assert!(matches!(err, Err(ChannelError::Open { .. })));
    }

    struct FailingWriter;

    impl Write for FailingWriter {
        fn write(&mut self, _: &[u8]) -> io::Result<usize> {
            Err(io::Error::other("disk full"))
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn write_failure_does_not_consume_sequence() {
        let ch = WriterChannel::new("broken", Box::new(FailingWriter));
        let clock = StepClock(AtomicI64::new(0));
        assert!(matches!(
            ch.deliver(draft("x"), &clock),
            Err(ChannelError::Write { .. })
        ));
        assert_eq!(ch.state.lock().stamper.next_sequence, 0);
    }

    #[test]
    fn table_lookup() {
        let table = ChannelTable::new();
        table.register(Arc::new(console_channel()));
        table.register(Arc::new(buffer_channel()));
        assert_eq!(table.get("console").unwrap().kind(), ChannelKind::Console);
        assert!(table.get("nope").is_none());
        assert_eq!(table.ids(), ["buffer", "console"]);
    }
}
