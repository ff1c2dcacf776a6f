//! The emission path: filtering, logging and assertion checking.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::channel::{ChannelError, ChannelTable, EventDraft, OutputChannel};
use crate::context::{MonitorContext, Registry};
use crate::event::{CallSiteFrame, Clock, MonitorEvent, SystemClock};
use crate::semantics::{Level, ASSERTION_CATEGORY, ASSERTION_TEMPLATE};

/// Exit status used by [`FailurePolicy::HaltProcess`].
pub const HALT_EXIT_CODE: i32 = 70;

/// What happens after a failed assertion has been logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FailurePolicy {
    /// Return [`MonitorError::Assertion`] to the caller.
    #[default]
    RaiseToCaller,
    /// Unwind the calling thread with a [`TaskStopped`] payload.
    StopCurrentTask,
    /// Disable the context that was in effect for the failing check.
    HaltScope,
    /// Exit the process with [`HALT_EXIT_CODE`].
    HaltProcess,
}

/// Result of a [`Monitor::check`] that did not raise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    Passed,
    /// The predicate failed but checking is switched off for this site.
    Inactive,
    /// The predicate failed and was reported; the policy has been applied.
    Failed {
        policy: FailurePolicy,
        event: Box<MonitorEvent>,
    },
}

/// A failed assertion, raised to the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionFailure {
    pub event: MonitorEvent,
}

impl fmt::Display for AssertionFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let site = &self.event.call_site;
        write!(f, "{} (at {}.{})", self.event.message, site.class_id, site.operation)
    }
}

impl std::error::Error for AssertionFailure {}

/// Panic payload carried by a thread stopped under
/// [`FailurePolicy::StopCurrentTask`].
#[derive(Debug, Clone)]
pub struct TaskStopped {
    pub failure: AssertionFailure,
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("assertion failed: {0}")]
    Assertion(Box<AssertionFailure>),
    #[error("no output channel named `{0}`")]
    UnknownChannel(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Decides whether `ctx` lets an event through.
///
/// All of: the context is enabled, the class filter admits the site, the
/// category is known and enabled, the level lies in the semantics range and
/// reaches both the threshold and the category's own level.
pub fn context_admits(ctx: &MonitorContext, site: &CallSiteFrame, category: &str, level: Level) -> bool {
    let semantics = ctx.semantics();
    if !semantics.contains(level) {
        return false;
    }
    ctx.with_state(|st| {
        if !st.enabled || !st.class_filter.admits(&site.class_id) {
            return false;
        }
        if st.category_states.get(category) != Some(&true) {
            return false;
        }
        match st.category_level(semantics, category) {
            Some(category_level) => level >= st.threshold.max(category_level),
            None => false,
        }
    })
}

impl Registry {
    /// Whether an event would be emitted. Has no side effects.
    pub fn should_emit<S: AsRef<str>>(
        &self,
        thread_id: &str,
        group_path: &[S],
        site: &CallSiteFrame,
        category: &str,
        level: Level,
    ) -> bool {
        self.global_enabled() && context_admits(&self.resolve(thread_id, group_path), site, category, level)
    }

    /// Whether assertions at `site` are checked: global switch, context
    /// switch and class filter. Threshold and categories do not apply.
    pub fn checking_active<S: AsRef<str>>(&self, thread_id: &str, group_path: &[S], site: &CallSiteFrame) -> bool {
        self.global_enabled() && {
            let ctx = self.resolve(thread_id, group_path);
            ctx.with_state(|st| st.enabled && st.class_filter.admits(&site.class_id))
        }
    }
}

/// Couples a [`Registry`] with the channels its contexts are bound to.
pub struct Monitor {
    registry: Registry,
    channels: ChannelTable,
    origin_id: String,
    clock: Arc<dyn Clock>,
}

impl Monitor {
    pub fn new(registry: Registry, origin_id: impl Into<String>) -> Self {
        Monitor {
            registry,
            channels: ChannelTable::new(),
            origin_id: origin_id.into(),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_channel(self, channel: Arc<dyn OutputChannel>) -> Self {
        self.channels.register(channel);
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn channels(&self) -> &ChannelTable {
        &self.channels
    }

    pub fn origin_id(&self) -> &str {
        &self.origin_id
    }

    pub fn should_emit<S: AsRef<str>>(
        &self,
        thread_id: &str,
        group_path: &[S],
        site: &CallSiteFrame,
        category: &str,
        level: Level,
    ) -> bool {
        self.registry.should_emit(thread_id, group_path, site, category, level)
    }

    /// Logs `message` if the effective context lets it through. Returns
    /// whether an event was emitted.
    pub fn log<S: AsRef<str>>(
        &self,
        thread_id: &str,
        group_path: &[S],
        site: &CallSiteFrame,
        category: &str,
        level: Level,
        message: &str,
    ) -> Result<bool, MonitorError> {
        if !self.registry.global_enabled() {
            return Ok(false);
        }
        let ctx = self.registry.resolve(thread_id, group_path);
        if !context_admits(&ctx, site, category, level) {
            return Ok(false);
        }
        self.emit(&ctx, thread_id, site, category, level, message)?;
        Ok(true)
    }

    /// Checks an assertion.
    ///
    /// A failure is logged at FAILURE in category ASSERTION regardless of
    /// threshold and category switches, then `policy` is applied. When
    /// checking is inactive for the site a failure is ignored.
    pub fn check<S: AsRef<str>>(
        &self,
        thread_id: &str,
        group_path: &[S],
        site: &CallSiteFrame,
        predicate: bool,
        message: &str,
        policy: FailurePolicy,
    ) -> Result<CheckOutcome, MonitorError> {
        if predicate {
            return Ok(CheckOutcome::Passed);
        }
        if !self.registry.global_enabled() {
            return Ok(CheckOutcome::Inactive);
        }
        let ctx = self.registry.resolve(thread_id, group_path);
        let active = ctx.with_state(|st| st.enabled && st.class_filter.admits(&site.class_id));
        if !active {
            return Ok(CheckOutcome::Inactive);
        }
        let semantics = ctx.semantics();
        let text = semantics
            .render(ASSERTION_TEMPLATE, &[message])
            .unwrap_or_else(|| message.to_string());
        let event = self.emit(&ctx, thread_id, site, ASSERTION_CATEGORY, semantics.failure(), &text)?;
        let failure = AssertionFailure { event };
        match policy {
            FailurePolicy::RaiseToCaller => Err(MonitorError::Assertion(Box::new(failure))),
            FailurePolicy::StopCurrentTask => {
                std::panic::resume_unwind(Box::new(TaskStopped { failure }))
            }
            FailurePolicy::HaltScope => {
                ctx.set_enabled(false);
                Ok(CheckOutcome::Failed {
                    policy,
                    event: Box::new(failure.event),
                })
            }
            FailurePolicy::HaltProcess => {
                eprintln!("halting: assertion failed: {failure}");
                std::process::exit(HALT_EXIT_CODE)
            }
        }
    }

    fn emit(
        &self,
        ctx: &MonitorContext,
        thread_id: &str,
        site: &CallSiteFrame,
        category: &str,
        level: Level,
        message: &str,
    ) -> Result<MonitorEvent, MonitorError> {
        let channel = self
            .channels
            .get(ctx.channel_id())
            .ok_or_else(|| MonitorError::UnknownChannel(ctx.channel_id().to_string()))?;
        let draft = EventDraft {
            thread_id: thread_id.to_string(),
            origin_id: self.origin_id.clone(),
            category: category.to_string(),
            level,
            level_label: ctx.semantics().level_label(level),
            call_site: site.clone(),
            message: message.to_string(),
        };
        Ok(channel.deliver(draft, self.clock.as_ref())?)
    }

    /// A view of this monitor for one thread identity.
    pub fn scope<'a>(&'a self, thread_id: impl Into<String>, group_path: Vec<String>) -> Scope<'a> {
        Scope {
            monitor: self,
            thread_id: thread_id.into(),
            group_path,
        }
    }

    /// A scope for the calling thread, identified by its name or, for
    /// unnamed threads, its runtime id.
    pub fn current_scope(&self, group_path: Vec<String>) -> Scope<'_> {
        self.scope(current_thread_id(), group_path)
    }
}

/// Name of the current thread, or its debug id when unnamed.
pub fn current_thread_id() -> String {
    let t = std::thread::current();
    match t.name() {
        Some(name) => name.to_string(),
        None => format!("{:?}", t.id()),
    }
}

/// A [`Monitor`] bound to one thread identity and group path.
pub struct Scope<'a> {
    monitor: &'a Monitor,
    thread_id: String,
    group_path: Vec<String>,
}

impl Scope<'_> {
    pub fn thread_id(&self) -> &str {
        &self.thread_id
    }

    pub fn context(&self) -> MonitorContext {
        self.monitor.registry.resolve(&self.thread_id, &self.group_path)
    }

    pub fn should_emit(&self, site: &CallSiteFrame, category: &str, level: Level) -> bool {
        self.monitor
            .should_emit(&self.thread_id, &self.group_path, site, category, level)
    }

    pub fn log(&self, site: &CallSiteFrame, category: &str, level: Level, message: &str) -> Result<bool, MonitorError> {
        self.monitor
            .log(&self.thread_id, &self.group_path, site, category, level, message)
    }

    pub fn check(
        &self,
        site: &CallSiteFrame,
        predicate: bool,
        message: &str,
        policy: FailurePolicy,
    ) -> Result<CheckOutcome, MonitorError> {
        self.monitor
            .check(&self.thread_id, &self.group_path, site, predicate, message, policy)
    }
}
