//! Level ranges, named levels, base categories and message templates.
//!
//! A [`Semantics`] bundles everything an instrumented program assumes about
//! the meaning of its monitoring statements. Two sets ship with the crate:
//! [`Semantics::standard`] (levels 1..=9, English templates) and
//! [`Semantics::wide`] (levels 1..=100, French templates). A context's
//! semantics is fixed when the context is created.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Names every semantics set must define.
pub const REQUIRED_LEVEL_NAMES: [&str; 5] = ["NOTICE", "WARNING", "ERROR", "CRITICAL", "FAILURE"];

/// Category used for assertion failures.
pub const ASSERTION_CATEGORY: &str = "ASSERTION";

/// Template key for the assertion failure message. `{0}` is the caller's text.
pub const ASSERTION_TEMPLATE: &str = "assertion.failed";

/// A monitoring priority. Larger is more severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Level(pub i32);

impl Level {
    pub fn value(self) -> i32 {
        self.0
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A named subsystem tag and the minimum level at which its events pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub name: String,
    pub level: Level,
}

/// Returns whether `name` may be used as a category (or level) name.
///
/// Names must be non-empty and free of whitespace, which also keeps them
/// clear of the tab and space separators used by the file formats.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LevelError {
    #[error("level {level} lies outside the semantics range [{min}, {max}]")]
    OutOfRange { level: i32, min: i32, max: i32 },
}

/// One broken invariant found by [`Semantics::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyRange { min: i32, max: i32 },
    NamedLevelOutOfRange { name: String, value: i32 },
    CategoryLevelOutOfRange { name: String, value: i32 },
    RequiredNameAbsent { name: &'static str },
    InvalidLevelName { name: String },
    InvalidCategoryName { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyRange { min, max } => {
                write!(f, "empty level range: min {min} is not below max {max}")
            }
            Violation::NamedLevelOutOfRange { name, value } => {
                write!(f, "named level out of range: {name}={value}")
            }
            Violation::CategoryLevelOutOfRange { name, value } => {
                write!(f, "category level out of range: {name}={value}")
            }
            Violation::RequiredNameAbsent { name } => write!(f, "required name absent: {name}"),
            Violation::InvalidLevelName { name } => write!(f, "invalid level name: {name:?}"),
            Violation::InvalidCategoryName { name } => {
                write!(f, "invalid category name: {name:?}")
            }
        }
    }
}

/// The list of violations returned when a semantics set is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid semantics: {}", join_violations(.0))]
pub struct InvalidSemantics(pub Vec<Violation>);

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// A complete semantics set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Semantics {
    min_level: i32,
    max_level: i32,
    named_levels: BTreeMap<String, Level>,
    categories: BTreeMap<String, Level>,
    templates: BTreeMap<String, String>,
    locale: String,
}

impl Semantics {
    pub fn builder(min_level: i32, max_level: i32) -> SemanticsBuilder {
        SemanticsBuilder {
            inner: Semantics {
                min_level,
                max_level,
                named_levels: BTreeMap::new(),
                categories: BTreeMap::new(),
                templates: BTreeMap::new(),
                locale: String::new(),
            },
        }
    }

    /// Levels 1..=9: NOTICE 1, WARNING 3, ERROR 5, CRITICAL 7, FAILURE 9.
    ///
    /// Base categories are NETWORK, GARBAGE_COLLECTOR and ASSERTION, all at
    /// NOTICE.
    pub fn standard() -> Semantics {
        Semantics::builder(1, 9)
            .locale("en")
            .level("NOTICE", 1)
            .level("WARNING", 3)
            .level("ERROR", 5)
            .level("CRITICAL", 7)
            .level("FAILURE", 9)
            .category("NETWORK", 1)
            .category("GARBAGE_COLLECTOR", 1)
            .category(ASSERTION_CATEGORY, 1)
            .template(ASSERTION_TEMPLATE, "Assertion failed: {0}")
            .template("level.NOTICE", "Notice")
            .template("level.WARNING", "Warning")
            .template("level.ERROR", "Error")
            .template("level.CRITICAL", "Critical error")
            .template("level.FAILURE", "Failure")
            .build()
    }

    /// Levels 1..=100 with French templates.
    ///
    /// Named levels keep their relative position in the standard range:
    /// `round(1 + (v - 1) * 99 / 8)` for each standard value `v`, giving
    /// NOTICE 1, WARNING 26, ERROR 51, CRITICAL 75, FAILURE 100. Category
    /// names are unchanged so instrumented code keeps working.
    pub fn wide() -> Semantics {
        Semantics::builder(1, 100)
            .locale("fr")
            .level("NOTICE", 1)
            .level("WARNING", 26)
            .level("ERROR", 51)
            .level("CRITICAL", 75)
            .level("FAILURE", 100)
            .category("NETWORK", 1)
            .category("GARBAGE_COLLECTOR", 1)
            .category(ASSERTION_CATEGORY, 1)
            .template(ASSERTION_TEMPLATE, "Échec d'assertion : {0}")
            .template("level.NOTICE", "Avis")
            .template("level.WARNING", "Avertissement")
            .template("level.ERROR", "Erreur")
            .template("level.CRITICAL", "Erreur critique")
            .template("level.FAILURE", "Défaillance")
            .build()
    }

    pub fn min_level(&self) -> Level {
        Level(self.min_level)
    }

    pub fn max_level(&self) -> Level {
        Level(self.max_level)
    }

    pub fn named_levels(&self) -> &BTreeMap<String, Level> {
        &self.named_levels
    }

    pub fn categories(&self) -> &BTreeMap<String, Level> {
        &self.categories
    }

    pub fn templates(&self) -> &BTreeMap<String, String> {
        &self.templates
    }

    pub fn locale(&self) -> &str {
        &self.locale
    }

    pub fn level(&self, name: &str) -> Option<Level> {
        self.named_levels.get(name).copied()
    }

    /// The NOTICE level. Valid semantics always define it.
    pub fn notice(&self) -> Level {
        self.level("NOTICE").unwrap_or(Level(self.min_level))
    }

    /// The FAILURE level. Valid semantics always define it.
    pub fn failure(&self) -> Level {
        self.level("FAILURE").unwrap_or(Level(self.max_level))
    }

    pub fn category_level(&self, name: &str) -> Option<Level> {
        self.categories.get(name).copied()
    }

    pub fn contains(&self, level: Level) -> bool {
        (self.min_level..=self.max_level).contains(&level.0)
    }

    pub fn check_level(&self, level: Level) -> Result<Level, LevelError> {
        if self.contains(level) {
            Ok(level)
        } else {
            Err(LevelError::OutOfRange {
                level: level.0,
                min: self.min_level,
                max: self.max_level,
            })
        }
    }

    /// Orders two levels of this semantics.
    ///
    /// A level outside the range cannot belong to this set, so comparing it
    /// is reported as a usage error rather than silently ordered.
    pub fn compare(&self, a: Level, b: Level) -> Result<Ordering, LevelError> {
        self.check_level(a)?;
        self.check_level(b)?;
        Ok(a.cmp(&b))
    }

    /// Name of `level` if one is defined, else `L<value>`.
    ///
    /// When several names share a value the most severe-sounding one wins
    /// by required-name order, then alphabetical order.
    pub fn level_label(&self, level: Level) -> String {
        REQUIRED_LEVEL_NAMES
            .iter()
            .copied()
            .find(|n| self.level(n) == Some(level))
            .map(str::to_string)
            .or_else(|| {
                self.named_levels
                    .iter()
                    .find(|(_, l)| **l == level)
                    .map(|(n, _)| n.clone())
            })
            .unwrap_or_else(|| format!("L{}", level.0))
    }

    /// Looks up `key` and substitutes `{0}`..`{9}` with `args`.
    ///
    /// Placeholders without a matching argument are left untouched.
    pub fn render(&self, key: &str, args: &[&str]) -> Option<String> {
        self.templates.get(key).map(|t| interpolate(t, args))
    }

    pub fn validate(&self) -> Result<(), InvalidSemantics> {
        let mut violations = Vec::new();
        if self.min_level >= self.max_level {
            violations.push(Violation::EmptyRange {
                min: self.min_level,
                max: self.max_level,
            });
        }
        for (name, level) in &self.named_levels {
            if !is_valid_name(name) {
                violations.push(Violation::InvalidLevelName { name: name.clone() });
            }
            if !self.contains(*level) {
                violations.push(Violation::NamedLevelOutOfRange {
                    name: name.clone(),
                    value: level.0,
                });
            }
        }
        for required in REQUIRED_LEVEL_NAMES {
            if !self.named_levels.contains_key(required) {
                violations.push(Violation::RequiredNameAbsent { name: required });
            }
        }
        for (name, level) in &self.categories {
            if !is_valid_name(name) {
                violations.push(Violation::InvalidCategoryName { name: name.clone() });
            }
            if !self.contains(*level) {
                violations.push(Violation::CategoryLevelOutOfRange {
                    name: name.clone(),
                    value: level.0,
                });
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(InvalidSemantics(violations))
        }
    }
}

fn interpolate(template: &str, args: &[&str]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let bytes = tail.as_bytes();
        if bytes.len() >= 3 && bytes[1].is_ascii_digit() && bytes[2] == b'}' {
            let idx = (bytes[1] - b'0') as usize;
            match args.get(idx) {
                Some(arg) => out.push_str(arg),
                None => out.push_str(&tail[..3]),
            }
            rest = &tail[3..];
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// Assembles a [`Semantics`]. Nothing is checked until [`Semantics::validate`].
#[derive(Debug, Clone)]
pub struct SemanticsBuilder {
    inner: Semantics,
}

impl SemanticsBuilder {
    pub fn locale(mut self, tag: impl Into<String>) -> Self {
        self.inner.locale = tag.into();
        self
    }

    pub fn level(mut self, name: impl Into<String>, value: i32) -> Self {
        self.inner.named_levels.insert(name.into(), Level(value));
        self
    }

    pub fn category(mut self, name: impl Into<String>, level: i32) -> Self {
        self.inner.categories.insert(name.into(), Level(level));
        self
    }

    pub fn template(mut self, key: impl Into<String>, text: impl Into<String>) -> Self {
        self.inner.templates.insert(key.into(), text.into());
        self
    }

    pub fn without_level(mut self, name: &str) -> Self {
        self.inner.named_levels.remove(name);
        self
    }

    pub fn build(self) -> Semantics {
        self.inner
    }

    pub fn try_build(self) -> Result<Semantics, InvalidSemantics> {
        self.inner.validate()?;
        Ok(self.inner)
    }
}
