//! The `IDBGCTX/1` context file.
//!
//! ```text
//! IDBGCTX/1
//! [semantics]
//! range<TAB>1<TAB>9
//! locale<TAB>en
//! level<TAB>NOTICE<TAB>1
//! category<TAB>NETWORK<TAB>1
//! template<TAB>assertion.failed<TAB>Assertion failed: {0}
//! [context]
//! channel<TAB>console
//! enabled<TAB>true
//! threshold<TAB>1
//! added<TAB>DISPATCH<TAB>5
//! category<TAB>NETWORK<TAB>on
//! filter<TAB>exclude
//! class<TAB>D
//! end
//! ```
//!
//! `range`, `channel`, `enabled`, `threshold` and `filter` are required;
//! the other records may repeat. Writers emit records in the order above
//! with maps sorted by key. The context id is not stored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::context::{ClassFilter, ContextError, ContextState, FilterMode, MonitorContext};
use crate::semantics::{Level, Semantics};
use crate::text::{
    decode_utf8, escape_tab_field as esc, parse_num, unescape_at, FormatError, FormatErrorKind,
    Lines,
};

pub const CONTEXT_MAGIC: &str = "IDBGCTX";
pub const CONTEXT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContextFileError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("context file violates an invariant: {0}")]
    Invalid(#[from] ContextError),
}

/// Serializes a context, semantics and channel binding included.
pub fn save_context(ctx: &MonitorContext) -> String {
    let s = ctx.semantics();
    let st = ctx.snapshot();
    let mut out = String::new();
    let _ = writeln!(out, "{CONTEXT_MAGIC}/{CONTEXT_VERSION}");
    out.push_str("[semantics]\n");
    let _ = writeln!(out, "range\t{}\t{}", s.min_level(), s.max_level());
    let _ = writeln!(out, "locale\t{}", esc(s.locale()));
    for (name, level) in s.named_levels() {
        let _ = writeln!(out, "level\t{}\t{}", esc(name), level);
    }
    for (name, level) in s.categories() {
        let _ = writeln!(out, "category\t{}\t{}", esc(name), level);
    }
    for (key, text) in s.templates() {
        let _ = writeln!(out, "template\t{}\t{}", esc(key), esc(text));
    }
    out.push_str("[context]\n");
    let _ = writeln!(out, "channel\t{}", esc(ctx.channel_id()));
    let _ = writeln!(out, "enabled\t{}", st.enabled);
    let _ = writeln!(out, "threshold\t{}", st.threshold);
    for (name, level) in &st.added_categories {
        let _ = writeln!(out, "added\t{}\t{}", esc(name), level);
    }
    for (name, on) in &st.category_states {
        let _ = writeln!(out, "category\t{}\t{}", esc(name), if *on { "on" } else { "off" });
    }
    let mode = match st.class_filter.mode() {
        FilterMode::IncludeListed => "include",
        FilterMode::ExcludeListed => "exclude",
    };
    let _ = writeln!(out, "filter\t{mode}");
    for name in st.class_filter.names() {
        let _ = writeln!(out, "class\t{}", esc(name));
    }
    out.push_str("end\n");
    out
}

/// Parses a context file. The result has a fresh context id.
pub fn load_context(bytes: &[u8]) -> Result<MonitorContext, ContextFileError> {
    let text = decode_utf8(bytes)?;
    let mut lines = Lines::new(text);
    lines.expect_header(CONTEXT_MAGIC, CONTEXT_VERSION)?;

    let line = lines.require_line()?;
    if line != "[semantics]" {
        return Err(FormatError::invalid(lines.line_no(), "expected `[semantics]`").into());
    }

    let mut range: Option<(i32, i32)> = None;
    let mut locale = String::new();
    let mut levels = BTreeMap::new();
    let mut categories = BTreeMap::new();
    let mut templates = BTreeMap::new();
    loop {
        let line = lines.require_line()?;
        let n = lines.line_no();
        if line == "[context]" {
            break;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match (fields[0], fields.len()) {
            ("range", 3) => {
                once(range.is_some(), n, "range")?;
                range = Some((
                    parse_num(fields[1], "minimum level", n)?,
                    parse_num(fields[2], "maximum level", n)?,
                ));
            }
            ("locale", 2) => locale = unescape_at(fields[1], n)?,
            ("level", 3) => {
                let name = unescape_at(fields[1], n)?;
                let value: i32 = parse_num(fields[2], "level", n)?;
                if levels.insert(name, value).is_some() {
                    return Err(FormatError::invalid(n, "duplicate level name").into());
                }
            }
            ("category", 3) => {
                let name = unescape_at(fields[1], n)?;
                let value: i32 = parse_num(fields[2], "category level", n)?;
                if categories.insert(name, value).is_some() {
                    return Err(FormatError::invalid(n, "duplicate category").into());
                }
            }
            ("template", 3) => {
                templates.insert(unescape_at(fields[1], n)?, unescape_at(fields[2], n)?);
            }
            _ => return Err(unknown_record(fields[0], n).into()),
        }
    }
    let (min, max) = range
        .ok_or_else(|| FormatError::invalid(lines.line_no(), "missing `range` record"))?;
    let mut builder = Semantics::builder(min, max).locale(locale);
    for (name, value) in levels {
        builder = builder.level(name, value);
    }
    for (name, value) in categories {
        builder = builder.category(name, value);
    }
    for (key, text) in templates {
        builder = builder.template(key, text);
    }
    let semantics = builder.build();

    let mut channel = None;
    let mut enabled = None;
    let mut threshold = None;
    let mut mode = None;
    let mut added = BTreeMap::new();
    let mut category_states = BTreeMap::new();
    let mut classes = BTreeSet::new();
    loop {
        let line = lines.require_line()?;
        let n = lines.line_no();
        if line == "end" {
            break;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match (fields[0], fields.len()) {
            ("channel", 2) => {
                once(channel.is_some(), n, "channel")?;
                channel = Some(unescape_at(fields[1], n)?);
            }
            ("enabled", 2) => {
                once(enabled.is_some(), n, "enabled")?;
                enabled = Some(match fields[1] {
                    "true" => true,
                    "false" => false,
                    other => return Err(FormatError::bad_value(n, "boolean", other).into()),
                });
            }
            ("threshold", 2) => {
                once(threshold.is_some(), n, "threshold")?;
                threshold = Some(Level(parse_num(fields[1], "threshold", n)?));
            }
            ("added", 3) => {
                let name = unescape_at(fields[1], n)?;
                let value: i32 = parse_num(fields[2], "category level", n)?;
                if added.insert(name, Level(value)).is_some() {
                    return Err(FormatError::invalid(n, "duplicate added category").into());
                }
            }
            ("category", 3) => {
                let name = unescape_at(fields[1], n)?;
                let on = match fields[2] {
                    "on" => true,
                    "off" => false,
                    other => return Err(FormatError::bad_value(n, "category state", other).into()),
                };
                if category_states.insert(name, on).is_some() {
                    return Err(FormatError::invalid(n, "duplicate category state").into());
                }
            }
            ("filter", 2) => {
                once(mode.is_some(), n, "filter")?;
                mode = Some(match fields[1] {
                    "include" => FilterMode::IncludeListed,
                    "exclude" => FilterMode::ExcludeListed,
                    other => return Err(FormatError::bad_value(n, "filter mode", other).into()),
                });
            }
            ("class", 2) => {
                classes.insert(unescape_at(fields[1], n)?);
            }
            _ => return Err(unknown_record(fields[0], n).into()),
        }
    }
    let end_line = lines.line_no();
    if !lines.is_empty() {
        return Err(FormatError::invalid(end_line + 1, "content after `end`").into());
    }
    let missing = |what: &str| FormatError::invalid(end_line, format!("missing `{what}` record"));
    let channel = channel.ok_or_else(|| missing("channel"))?;
    let state = ContextState {
        enabled: enabled.ok_or_else(|| missing("enabled"))?,
        threshold: threshold.ok_or_else(|| missing("threshold"))?,
        category_states,
        added_categories: added,
        class_filter: ClassFilter::from_parts(mode.ok_or_else(|| missing("filter"))?, classes),
    };
    Ok(MonitorContext::from_parts(semantics, channel, state)?)
}

fn once(seen: bool, line: usize, what: &str) -> Result<(), FormatError> {
    if seen {
        Err(FormatError::invalid(line, format!("duplicate `{what}` record")))
    } else {
        Ok(())
    }
}

fn unknown_record(tag: &str, line: usize) -> FormatError {
    FormatError::new(
        line,
        FormatErrorKind::BadValue {
            what: "record",
            value: tag.to_string(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(ctx: &MonitorContext) -> MonitorContext {
        load_context(save_context(ctx).as_bytes()).unwrap()
    }

    #[test]
    fn default_context_round_trips() {
        let ctx = MonitorContext::new(Semantics::standard(), "console").unwrap();
        let back = round_trip(&ctx);
        assert!(back.same_configuration(&ctx));
        assert_ne!(back.id(), ctx.id());
        assert_eq!(back.channel_id(), "console");
    }

    #[test]
    fn tuned_context_round_trips() {
        let ctx = MonitorContext::new(Semantics::wide(), "buffer").unwrap();
        ctx.disable_category("NETWORK").unwrap();
        ctx.class_filter_remove("D");
        ctx.add_category("DISPATCH", Level(40)).unwrap();
        ctx.set_threshold(Level(26)).unwrap();
        ctx.set_enabled(false);
        let back = round_trip(&ctx);
        assert!(back.same_configuration(&ctx));
        assert_eq!(back.category_enabled("NETWORK"), Some(false));
        assert!(!back.class_filter().admits("D"));
        assert_eq!(back.semantics().locale(), "fr");
    }

    #[test]
    fn truncated_file_is_unexpected_end() {
        let ctx = MonitorContext::new(Semantics::standard(), "console").unwrap();
        let text = save_context(&ctx);
        for cut in [0, 5, text.len() / 2, text.len() - 4, text.len() - 1] {
            let err = load_context(&text.as_bytes()[..cut]).unwrap_err();
            match err {
                ContextFileError::Format(e) => {
                    assert_eq!(e.kind, FormatErrorKind::UnexpectedEnd, "cut at {cut}")
                }
                other => panic!("cut at {cut}: {other}"),
            }
        }
    }

    #[test]
    fn rejects_version_mismatch_and_garbage() {
        let err = load_context(b"IDBGCTX/2\n").unwrap_err();
        assert!(matches!(
            err,
            ContextFileError::Format(FormatError {
                kind: FormatErrorKind::VersionMismatch { .. },
                ..
            })
        ));
        let ctx = MonitorContext::new(Semantics::standard(), "console").unwrap();
        let text = save_context(&ctx).replace("threshold\t1", "threshold\tlots");
        assert!(load_context(text.as_bytes()).is_err());
        let text = save_context(&ctx) + "extra\n";
        assert!(load_context(text.as_bytes()).is_err());
    }

    #[test]
    fn rejects_invariant_violations() {
        let ctx = MonitorContext::new(Semantics::standard(), "console").unwrap();
        let text = save_context(&ctx).replace("threshold\t1", "threshold\t12");
        assert!(matches!(
            load_context(text.as_bytes()),
            Err(ContextFileError::Invalid(_))
        ));
        let text = save_context(&ctx).replace("level\tFAILURE\t9\n", "");
        assert!(matches!(
            load_context(text.as_bytes()),
            Err(ContextFileError::Invalid(ContextError::Semantics(_)))
        ));
    }
}
