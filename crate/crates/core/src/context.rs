//! Monitor contexts and the registry that binds them to threads and groups.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use thiserror::Error;

use crate::semantics::{is_valid_name, InvalidSemantics, Level, LevelError, Semantics};

/// Environment variable read by [`Registry::from_env`]: `0` turns all
/// monitoring off, `1` turns it on.
pub const ENABLE_ENV: &str = "IDBG_ENABLE";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error(transparent)]
    Semantics(#[from] InvalidSemantics),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("category `{0}` already exists")]
    DuplicateCategory(String),
    #[error("invalid category name {0:?}")]
    InvalidCategoryName(String),
    #[error("invalid channel id {0:?}")]
    InvalidChannelId(String),
    #[error("making `{parent}` the parent of `{child}` would create a cycle")]
    GroupCycle { child: String, parent: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterMode {
    /// Only listed classes are monitored.
    IncludeListed,
    /// Every class except the listed ones is monitored, including classes
    /// that do not exist yet.
    ExcludeListed,
}

/// Per-class tuning. Supports both building up from nothing and carving
/// down from everything.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassFilter {
    mode: FilterMode,
    names: BTreeSet<String>,
}

impl Default for ClassFilter {
    fn default() -> Self {
        ClassFilter::all()
    }
}

impl ClassFilter {
    /// Admits every class, present and future.
    pub fn all() -> Self {
        ClassFilter {
            mode: FilterMode::ExcludeListed,
            names: BTreeSet::new(),
        }
    }

    /// Admits nothing.
    pub fn none() -> Self {
        ClassFilter {
            mode: FilterMode::IncludeListed,
            names: BTreeSet::new(),
        }
    }

    pub fn from_parts(mode: FilterMode, names: impl IntoIterator<Item = String>) -> Self {
        ClassFilter {
            mode,
            names: names.into_iter().collect(),
        }
    }

    pub fn mode(&self) -> FilterMode {
        self.mode
    }

    pub fn names(&self) -> &BTreeSet<String> {
        &self.names
    }

    pub fn admits(&self, class_id: &str) -> bool {
        let listed = self.names.contains(class_id);
        match self.mode {
            FilterMode::IncludeListed => listed,
            FilterMode::ExcludeListed => !listed,
        }
    }

    pub fn add(&mut self, class_id: &str) {
        match self.mode {
            FilterMode::IncludeListed => {
                self.names.insert(class_id.to_string());
            }
            FilterMode::ExcludeListed => {
                self.names.remove(class_id);
            }
        }
    }

    pub fn remove(&mut self, class_id: &str) {
        match self.mode {
            FilterMode::IncludeListed => {
                self.names.remove(class_id);
            }
            FilterMode::ExcludeListed => {
                self.names.insert(class_id.to_string());
            }
        }
    }
}

/// The mutable part of a context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextState {
    pub enabled: bool,
    pub threshold: Level,
    /// Enable flag for every known category.
    pub category_states: BTreeMap<String, bool>,
    /// Categories added to this context on top of its semantics.
    pub added_categories: BTreeMap<String, Level>,
    pub class_filter: ClassFilter,
}

impl ContextState {
    /// Minimum level of `category`, whether it came from the semantics or was
    /// added to the context.
    pub fn category_level(&self, semantics: &Semantics, category: &str) -> Option<Level> {
        semantics
            .category_level(category)
            .or_else(|| self.added_categories.get(category).copied())
    }
}

static NEXT_CONTEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_context_id() -> String {
    format!("ctx-{}", NEXT_CONTEXT_ID.fetch_add(1, Ordering::Relaxed))
}

struct ContextInner {
    id: String,
    semantics: Arc<Semantics>,
    channel_id: String,
    state: RwLock<ContextState>,
}

/// A shared handle to one execution scope's tuning state.
///
/// Cloning the handle shares the context: every thread bound to it sees a
/// change as soon as the mutating call returns. Use
/// [`MonitorContext::deep_clone`] for an independent copy. The semantics and
/// the channel binding cannot change after construction.
#[derive(Clone)]
pub struct MonitorContext {
    inner: Arc<ContextInner>,
}

impl fmt::Debug for MonitorContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonitorContext")
            .field("id", &self.inner.id)
            .field("channel_id", &self.inner.channel_id)
            .field("state", &*self.inner.state.read())
            .finish_non_exhaustive()
    }
}

impl MonitorContext {
    /// Creates an enabled context at threshold NOTICE with every category of
    /// `semantics` enabled and every class admitted.
    pub fn new(semantics: Semantics, channel_id: impl Into<String>) -> Result<Self, ContextError> {
        Self::with_shared_semantics(Arc::new(semantics), channel_id)
    }

    pub fn with_shared_semantics(
        semantics: Arc<Semantics>,
        channel_id: impl Into<String>,
    ) -> Result<Self, ContextError> {
        semantics.validate()?;
        let state = ContextState {
            enabled: true,
            threshold: semantics.notice(),
            category_states: semantics.categories().keys().map(|c| (c.clone(), true)).collect(),
            added_categories: BTreeMap::new(),
            class_filter: ClassFilter::all(),
        };
        Self::build(semantics, channel_id.into(), state)
    }

    /// Rebuilds a context from stored parts, checking every invariant.
    pub fn from_parts(
        semantics: Semantics,
        channel_id: impl Into<String>,
        state: ContextState,
    ) -> Result<Self, ContextError> {
        let semantics = Arc::new(semantics);
        semantics.validate()?;
        semantics.check_level(state.threshold)?;
        for (name, level) in &state.added_categories {
            if !is_valid_name(name) {
                return Err(ContextError::InvalidCategoryName(name.clone()));
            }
            if semantics.category_level(name).is_some() {
                return Err(ContextError::DuplicateCategory(name.clone()));
            }
            semantics.check_level(*level)?;
        }
        for name in state.category_states.keys() {
            if state.category_level(&semantics, name).is_none() {
                return Err(ContextError::UnknownCategory(name.clone()));
            }
        }
        Self::build(semantics, channel_id.into(), state)
    }

    fn build(
        semantics: Arc<Semantics>,
        channel_id: String,
        mut state: ContextState,
    ) -> Result<Self, ContextError> {
        if channel_id.is_empty() || channel_id.chars().any(char::is_whitespace) {
            return Err(ContextError::InvalidChannelId(channel_id));
        }
        // categories without an explicit state start enabled
        for name in semantics.categories().keys().chain(state.added_categories.keys()) {
            state.category_states.entry(name.clone()).or_insert(true);
        }
        Ok(MonitorContext {
            inner: Arc::new(ContextInner {
                id: fresh_context_id(),
                semantics,
                channel_id,
                state: RwLock::new(state),
            }),
        })
    }

    pub fn id(&self) -> &str {
        &self.inner.id
    }

    pub fn semantics(&self) -> &Semantics {
        &self.inner.semantics
    }

    pub fn shared_semantics(&self) -> Arc<Semantics> {
        Arc::clone(&self.inner.semantics)
    }

    pub fn channel_id(&self) -> &str {
        &self.inner.channel_id
    }

    /// Whether two handles refer to the same context.
    pub fn ptr_eq(&self, other: &MonitorContext) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
    }

    /// Runs `f` against a consistent view of the state.
    pub fn with_state<R>(&self, f: impl FnOnce(&ContextState) -> R) -> R {
        f(&self.inner.state.read())
    }

    pub fn snapshot(&self) -> ContextState {
        self.inner.state.read().clone()
    }

    /// Compares everything except the context id.
    pub fn same_configuration(&self, other: &MonitorContext) -> bool {
        self.semantics() == other.semantics()
            && self.channel_id() == other.channel_id()
            && self.snapshot() == other.snapshot()
    }

    pub fn enabled(&self) -> bool {
        self.inner.state.read().enabled
    }

    pub fn set_enabled(&self, on: bool) {
        self.inner.state.write().enabled = on;
    }

    pub fn threshold(&self) -> Level {
        self.inner.state.read().threshold
    }

    pub fn set_threshold(&self, level: Level) -> Result<(), ContextError> {
        self.semantics().check_level(level)?;
        self.inner.state.write().threshold = level;
        Ok(())
    }

    pub fn category_enabled(&self, name: &str) -> Option<bool> {
        self.inner.state.read().category_states.get(name).copied()
    }

    pub fn enable_category(&self, name: &str) -> Result<(), ContextError> {
        self.toggle_category(name, true)
    }

    pub fn disable_category(&self, name: &str) -> Result<(), ContextError> {
        self.toggle_category(name, false)
    }

    fn toggle_category(&self, name: &str, on: bool) -> Result<(), ContextError> {
        let mut state = self.inner.state.write();
        match state.category_states.get_mut(name) {
            Some(flag) => {
                *flag = on;
                Ok(())
            }
            None => Err(ContextError::UnknownCategory(name.to_string())),
        }
    }

    /// Adds a category unknown to the semantics. It starts enabled.
    pub fn add_category(&self, name: &str, level: Level) -> Result<(), ContextError> {
        if !is_valid_name(name) {
            return Err(ContextError::InvalidCategoryName(name.to_string()));
        }
        self.semantics().check_level(level)?;
        let mut state = self.inner.state.write();
        if state.category_states.contains_key(name) {
            return Err(ContextError::DuplicateCategory(name.to_string()));
        }
        state.added_categories.insert(name.to_string(), level);
        state.category_states.insert(name.to_string(), true);
        Ok(())
    }

    pub fn class_filter(&self) -> ClassFilter {
        self.inner.state.read().class_filter.clone()
    }

    pub fn class_filter_add(&self, class_id: &str) {
        self.inner.state.write().class_filter.add(class_id);
    }

    pub fn class_filter_remove(&self, class_id: &str) {
        self.inner.state.write().class_filter.remove(class_id);
    }

    /// Admit every class, including ones never seen before.
    pub fn class_filter_add_all(&self) {
        self.inner.state.write().class_filter = ClassFilter::all();
    }

    pub fn class_filter_remove_all(&self) {
        self.inner.state.write().class_filter = ClassFilter::none();
    }

    /// An independent copy with a fresh id.
    pub fn deep_clone(&self) -> MonitorContext {
        MonitorContext {
            inner: Arc::new(ContextInner {
                id: fresh_context_id(),
                semantics: Arc::clone(&self.inner.semantics),
                channel_id: self.inner.channel_id.clone(),
                state: RwLock::new(self.snapshot()),
            }),
        }
    }
}

/// Owns the global switch and the thread/group bindings.
///
/// Resolution is most-specific-first: a thread binding, then the innermost
/// bound group, then the global context.
pub struct Registry {
    global_enabled: AtomicBool,
    global_context: RwLock<MonitorContext>,
    thread_bindings: RwLock<HashMap<String, MonitorContext>>,
    group_bindings: RwLock<HashMap<String, MonitorContext>>,
    group_parents: RwLock<HashMap<String, String>>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("global_enabled", &self.global_enabled())
            .field("global_context", &self.global_context().id())
            .finish_non_exhaustive()
    }
}

impl Registry {
    pub fn new(global_context: MonitorContext) -> Self {
        Registry {
            global_enabled: AtomicBool::new(true),
            global_context: RwLock::new(global_context),
            thread_bindings: RwLock::new(HashMap::new()),
            group_bindings: RwLock::new(HashMap::new()),
            group_parents: RwLock::new(HashMap::new()),
        }
    }

    /// Like [`Registry::new`], with the global switch taken from
    /// `IDBG_ENABLE` (`0` off; anything else, or unset, on).
    pub fn from_env(global_context: MonitorContext) -> Self {
        let registry = Registry::new(global_context);
        if let Ok(value) = std::env::var(ENABLE_ENV) {
            registry.set_global_enable(value.trim() != "0");
        }
        registry
    }

    pub fn global_enabled(&self) -> bool {
        self.global_enabled.load(Ordering::SeqCst)
    }

    pub fn set_global_enable(&self, on: bool) {
        self.global_enabled.store(on, Ordering::SeqCst);
    }

    pub fn global_context(&self) -> MonitorContext {
        self.global_context.read().clone()
    }

    pub fn set_global_context(&self, ctx: MonitorContext) {
        *self.global_context.write() = ctx;
    }

    pub fn bind_thread(&self, thread_id: &str, ctx: &MonitorContext) {
        self.thread_bindings
            .write()
            .insert(thread_id.to_string(), ctx.clone());
    }

    pub fn unbind_thread(&self, thread_id: &str) -> Option<MonitorContext> {
        self.thread_bindings.write().remove(thread_id)
    }

    pub fn bind_group(&self, group_id: &str, ctx: &MonitorContext) {
        self.group_bindings
            .write()
            .insert(group_id.to_string(), ctx.clone());
    }

    pub fn unbind_group(&self, group_id: &str) -> Option<MonitorContext> {
        self.group_bindings.write().remove(group_id)
    }

    /// Declares `parent` as the enclosing group of `child`.
    pub fn set_group_parent(&self, child: &str, parent: &str) -> Result<(), ContextError> {
        let mut parents = self.group_parents.write();
        let mut cursor = Some(parent);
        while let Some(g) = cursor {
            if g == child {
                return Err(ContextError::GroupCycle {
                    child: child.to_string(),
                    parent: parent.to_string(),
                });
            }
            cursor = parents.get(g).map(String::as_str);
        }
        parents.insert(child.to_string(), parent.to_string());
        Ok(())
    }

    /// The chain from `group` outward through its declared parents.
    pub fn group_path(&self, group: &str) -> Vec<String> {
        let parents = self.group_parents.read();
        let mut path = vec![group.to_string()];
        while let Some(p) = parents.get(path.last().unwrap()) {
            path.push(p.clone());
        }
        path
    }

    /// The effective context for a thread whose groups, innermost first, are
    /// `group_path`.
    pub fn resolve<S: AsRef<str>>(&self, thread_id: &str, group_path: &[S]) -> MonitorContext {
        if let Some(ctx) = self.thread_bindings.read().get(thread_id) {
            return ctx.clone();
        }
        {
            let groups = self.group_bindings.read();
            if let Some(ctx) = group_path.iter().find_map(|g| groups.get(g.as_ref())) {
                return ctx.clone();
            }
        }
        self.global_context()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> MonitorContext {
        MonitorContext::new(Semantics::standard(), "console").unwrap()
    }

    #[test]
    fn new_context_defaults() {
        let c = ctx();
        let st = c.snapshot();
        assert!(st.enabled);
        assert_eq!(st.threshold, Level(1));
        assert!(st.category_states.values().all(|on| *on));
        assert_eq!(st.category_states.len(), 3);
        assert_eq!(st.class_filter, ClassFilter::all());

        let wide = MonitorContext::new(Semantics::wide(), "buffer").unwrap();
        assert_eq!(wide.threshold(), Semantics::wide().notice());
    }

    #[test]
    fn new_context_rejects_invalid_semantics() {
        let bad = Semantics::builder(1, 9).level("NOTICE", 1).build();
        assert!(matches!(
            MonitorContext::new(bad, "console"),
            Err(ContextError::Semantics(_))
        ));
        assert!(matches!(
            MonitorContext::new(Semantics::standard(), "two words"),
            Err(ContextError::InvalidChannelId(_))
        ));
    }

    #[test]
    fn threshold_bounds() {
        let c = ctx();
        c.set_threshold(Level(5)).unwrap();
        assert_eq!(c.threshold(), Level(5));
        assert_eq!(c.semantics(), &Semantics::standard());
        assert!(c.set_threshold(Level(10)).is_err());
        assert!(c.set_threshold(Level(0)).is_err());
        assert_eq!(c.threshold(), Level(5));
    }

    #[test]
    fn categories() {
        let c = ctx();
        c.disable_category("NETWORK").unwrap();
        assert_eq!(c.category_enabled("NETWORK"), Some(false));
        c.add_category("DISPATCH", Level(5)).unwrap();
        assert_eq!(c.category_enabled("DISPATCH"), Some(true));
        assert_eq!(
            c.add_category("DISPATCH", Level(5)),
            Err(ContextError::DuplicateCategory("DISPATCH".into()))
        );
        assert_eq!(
            c.add_category("NETWORK", Level(5)),
            Err(ContextError::DuplicateCategory("NETWORK".into()))
        );
        assert_eq!(
            c.enable_category("X"),
            Err(ContextError::UnknownCategory("X".into()))
        );
        assert!(c.add_category("BAD NAME", Level(2)).is_err());
        assert!(c.add_category("HIGH", Level(10)).is_err());
    }

    #[test]
    fn class_filter_modes() {
        let mut f = ClassFilter::none();
        f.add("C");
        assert!(f.admits("C") && !f.admits("D"));
        f.remove("C");
        assert!(!f.admits("C"));

        let mut f = ClassFilter::all();
        assert!(f.admits("NeverSeenBefore"));
        f.remove("D");
        assert!(f.admits("C") && !f.admits("D"));
        f.add("D");
        assert!(f.admits("D"));
    }

    #[test]
    fn deep_clone_is_independent() {
        let original = ctx();
        original.disable_category("NETWORK").unwrap();
        let copy = original.deep_clone();
        assert_ne!(copy.id(), original.id());
        assert!(copy.same_configuration(&original));

        copy.set_threshold(Level(9)).unwrap();
        assert_eq!(original.threshold(), Level(1));

        let grandchild = copy.deep_clone();
        grandchild.set_threshold(Level(3)).unwrap();
        grandchild.class_filter_remove_all();
        assert_eq!(copy.threshold(), Level(9));
        assert_eq!(original.threshold(), Level(1));
        assert_eq!(copy.class_filter(), ClassFilter::all());
    }

    #[test]
    fn shared_handle_sees_changes() {
        let a = ctx();
        let b = a.clone();
        a.set_threshold(Level(7)).unwrap();
        assert_eq!(b.threshold(), Level(7));
        assert!(a.ptr_eq(&b));
    }

    #[test]
    fn bindings() {
        let global = ctx();
        let reg = Registry::new(global.clone());
        let (c1, c2, g) = (ctx(), ctx(), ctx());
        let none: [&str; 0] = [];

        assert!(reg.resolve("T1", &none).ptr_eq(&global));
        reg.bind_thread("T1", &c1);
        assert!(reg.resolve("T1", &none).ptr_eq(&c1));
        reg.bind_thread("T1", &c2);
        assert!(reg.resolve("T1", &none).ptr_eq(&c2));

        reg.bind_group("G", &g);
        assert!(reg.resolve("T2", &["G"]).ptr_eq(&g));
        assert!(reg.resolve("T1", &["G"]).ptr_eq(&c2));
        reg.unbind_thread("T1");
        assert!(reg.resolve("T1", &["G"]).ptr_eq(&g));
    }

    #[test]
    fn group_hierarchy() {
        let reg = Registry::new(ctx());
        reg.set_group_parent("inner", "middle").unwrap();
        reg.set_group_parent("middle", "outer").unwrap();
        assert_eq!(reg.group_path("inner"), vec!["inner", "middle", "outer"]);
        assert!(matches!(
            reg.set_group_parent("outer", "inner"),
            Err(ContextError::GroupCycle { .. })
        ));
        assert!(reg.set_group_parent("x", "x").is_err());

        let outer = ctx();
        reg.bind_group("outer", &outer);
        let path = reg.group_path("inner");
        assert!(reg.resolve("T", &path).ptr_eq(&outer));
    }

    #[test]
    fn from_parts_checks_invariants() {
        let base = ctx().snapshot();
        let mut bad = base.clone();
        bad.threshold = Level(12);
        assert!(MonitorContext::from_parts(Semantics::standard(), "c", bad).is_err());

        let mut bad = base.clone();
        bad.category_states.insert("GHOST".into(), true);
        assert_eq!(
            MonitorContext::from_parts(Semantics::standard(), "c", bad).unwrap_err(),
            ContextError::UnknownCategory("GHOST".into())
        );

        let mut ok = base;
        ok.added_categories.insert("DISPATCH".into(), Level(5));
        let c = MonitorContext::from_parts(Semantics::standard(), "c", ok).unwrap();
        assert_eq!(c.category_enabled("DISPATCH"), Some(true));
    }
}
