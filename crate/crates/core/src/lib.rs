//! Structured monitoring for concurrent and distributed programs.
//!
//! Monitoring statements carry a [`Level`], a category and a call site.
//! Whether they fire is decided by the [`MonitorContext`] in effect for the
//! calling thread: a thread binding wins over a thread-group binding, which
//! wins over the registry's global context. Contexts are shared handles, so
//! retuning one affects every thread bound to it immediately, and they can
//! be saved to and loaded from `IDBGCTX/1` files.
//!
//! ```
//! use std::sync::Arc;
//! use idbg_core::{buffer_channel, CallSiteFrame, Level, Monitor, MonitorContext, Registry, Semantics};
//!
//! let ctx = MonitorContext::new(Semantics::standard(), "buffer").unwrap();
//! let buffer = Arc::new(buffer_channel());
//! let monitor = Monitor::new(Registry::new(ctx.clone()), "node-a").with_channel(buffer.clone());
//!
//! ctx.set_threshold(Level(3)).unwrap();
//! let site = CallSiteFrame::new("net.Socket", "connect");
//! let scope = monitor.scope("main", vec![]);
//! assert!(!scope.log(&site, "NETWORK", Level(1), "chatty").unwrap());
//! assert!(scope.log(&site, "NETWORK", Level(5), "connection refused").unwrap());
//! assert_eq!(buffer.len(), 1);
//! ```

pub mod channel;
pub mod context;
pub mod context_file;
pub mod curry;
pub mod debuglog;
pub mod event;
pub mod monitor;
pub mod semantics;
pub mod stack;
pub mod stats;
pub mod text;

pub use channel::{
    buffer_channel, console_channel, file_channel, BufferChannel, ChannelError, ChannelKind,
    ChannelTable, EventDraft, OutputChannel, WriterChannel,
};
pub use context::{ClassFilter, ContextError, ContextState, FilterMode, MonitorContext, Registry};
pub use context_file::{load_context, save_context, ContextFileError};
pub use curry::{curried_dump, export_envelope, import_envelope, CurriedStack, CurryError, StackSegment};
pub use debuglog::{merge_logs, DebugLog, RecordingChannel};
pub use event::{format_event, parse_event, CallSiteFrame, Clock, MonitorEvent, SystemClock};
pub use monitor::{
    current_thread_id, AssertionFailure, CheckOutcome, FailurePolicy, Monitor, MonitorError, Scope,
    TaskStopped, HALT_EXIT_CODE,
};
pub use semantics::{Category, Level, Semantics, Violation};
pub use stack::StackView;
pub use stats::{StatError, StatisticDescriptor, StatisticState, StatsRegistry};
pub use text::{FormatError, FormatErrorKind};
