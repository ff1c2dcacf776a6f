//! Named statistics with units and scale factors.
//!
//! Values are kept in display units. An increment adds
//! `default_increment * scale`, so a statistic with increment 0.001 and
//! scale 1000 gains 1 unit per increment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use parking_lot::Mutex;
use thiserror::Error;

use crate::text::{
    decode_utf8, escape_tab_field as esc, parse_num, split_fields, unescape_at, FormatError, Lines,
};

pub const STATS_MAGIC: &str = "IDBGSTAT";
pub const STATS_VERSION: u32 = 1;
const STATS_FIELDS: usize = 9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatError {
    #[error("statistic `{0}` is already defined")]
    Duplicate(String),
    #[error("unknown statistic `{0}`")]
    Unknown(String),
    #[error("statistic `{id}`: scale must be finite and nonzero, got {scale}")]
    BadScale { id: String, scale: f64 },
    #[error("statistic `{id}`: {what} must be finite, got {value}")]
    NonFinite { id: String, what: &'static str, value: f64 },
    #[error("invalid statistic id {0:?}")]
    BadId(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticDescriptor {
    pub id: String,
    pub description: String,
    pub unit: String,
    pub scale: f64,
    /// Starting value, in display units.
    pub initial_value: f64,
    pub default_increment: f64,
    pub default_decrement: f64,
}

impl StatisticDescriptor {
    pub fn new(id: impl Into<String>, description: impl Into<String>, unit: impl Into<String>) -> Self {
        StatisticDescriptor {
            id: id.into(),
            description: description.into(),
            unit: unit.into(),
            scale: 1.0,
            initial_value: 0.0,
            default_increment: 1.0,
            default_decrement: 1.0,
        }
    }

    pub fn scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn initial(mut self, value: f64) -> Self {
        self.initial_value = value;
        self
    }

    pub fn steps(mut self, increment: f64, decrement: f64) -> Self {
        self.default_increment = increment;
        self.default_decrement = decrement;
        self
    }

    fn validate(&self) -> Result<(), StatError> {
        if self.id.is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(StatError::BadId(self.id.clone()));
        }
        if !self.scale.is_finite() || self.scale == 0.0 {
            return Err(StatError::BadScale {
                id: self.id.clone(),
                scale: self.scale,
            });
        }
        for (what, value) in [
            ("initial value", self.initial_value),
            ("default increment", self.default_increment),
            ("default decrement", self.default_decrement),
        ] {
            if !value.is_finite() {
                return Err(StatError::NonFinite {
                    id: self.id.clone(),
                    what,
                    value,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticState {
    pub descriptor: StatisticDescriptor,
    pub value: f64,
    /// Number of increments and decrements since definition or reset.
    pub update_count: u64,
}

impl StatisticState {
    /// `<id>: <value> <unit> (updates: <n>) — <description>`
    pub fn report_line(&self) -> String {
        format!(
            "{}: {} {} (updates: {}) — {}",
            self.descriptor.id,
            format_value(self.value),
            self.descriptor.unit,
            self.update_count,
            self.descriptor.description
        )
    }
}

/// Renders `v` with at most six significant digits and no trailing zeros.
/// Very large or small magnitudes switch to exponent notation.
pub fn format_value(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    // round to six significant digits first, so the exponent is post-rounding
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (5 - exp).max(0) as usize;
    let rounded: f64 = sci.parse().expect("round trip");
    trim_zeros(&format!("{rounded:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A set of statistics. Every operation is atomic per call.
#[derive(Debug, Default)]
pub struct StatsRegistry {
    stats: Mutex<BTreeMap<String, StatisticState>>,
}

impl StatsRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn define(&self, descriptor: StatisticDescriptor) -> Result<(), StatError> {
        descriptor.validate()?;
        let mut stats = self.stats.lock();
        if stats.contains_key(&descriptor.id) {
            return Err(StatError::Duplicate(descriptor.id));
        }
        stats.insert(
            descriptor.id.clone(),
            StatisticState {
                value: descriptor.initial_value,
                update_count: 0,
                descriptor,
            },
        );
        Ok(())
    }

    fn update<R>(&self, id: &str, f: impl FnOnce(&mut StatisticState) -> Result<R, StatError>) -> Result<R, StatError> {
        let mut stats = self.stats.lock();
        let state = stats
            .get_mut(id)
            .ok_or_else(|| StatError::Unknown(id.to_string()))?;
        f(state)
    }

    fn step(&self, id: &str, up: bool) -> Result<f64, StatError> {
        self.update(id, |st| {
            let d = &st.descriptor;
            let delta = if up {
                d.default_increment * d.scale
            } else {
                -d.default_decrement * d.scale
            };
            let next = st.value + delta;
            if !next.is_finite() {
                return Err(StatError::NonFinite {
                    id: id.to_string(),
                    what: "value",
                    value: next,
                });
            }
            st.value = next;
            st.update_count += 1;
            Ok(next)
        })
    }

    /// Adds the default increment times the scale. Returns the new value.
    pub fn increment(&self, id: &str) -> Result<f64, StatError> {
        self.step(id, true)
    }

    /// Subtracts the default decrement times the scale. Returns the new value.
    pub fn decrement(&self, id: &str) -> Result<f64, StatError> {
        self.step(id, false)
    }

    /// Assigns `value` in display units. The scale is not applied.
    pub fn set_value(&self, id: &str, value: f64) -> Result<(), StatError> {
        if !value.is_finite() {
            return Err(StatError::NonFinite {
                id: id.to_string(),
                what: "value",
                value,
            });
        }
        self.update(id, |st| {
            st.value = value;
            Ok(())
        })
    }

    pub fn reset(&self, id: &str) -> Result<(), StatError> {
        self.update(id, |st| {
            st.value = st.descriptor.initial_value;
            st.update_count = 0;
            Ok(())
        })
    }

    pub fn value(&self, id: &str) -> Result<f64, StatError> {
        self.get(id).map(|st| st.value)
    }

    pub fn get(&self, id: &str) -> Result<StatisticState, StatError> {
        self.stats
            .lock()
            .get(id)
            .cloned()
            .ok_or_else(|| StatError::Unknown(id.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.stats.lock().is_empty()
    }

    pub fn report(&self, id: &str) -> Result<String, StatError> {
        self.get(id).map(|st| st.report_line())
    }

    /// One report line per statistic, sorted by id, each ending in a newline.
    pub fn report_all(&self) -> String {
        let stats = self.stats.lock();
        let mut out = String::new();
        for st in stats.values() {
            out.push_str(&st.report_line());
            out.push('\n');
        }
        out
    }

    /// Writes an `IDBGSTAT/1` snapshot.
    ///
    /// One line per statistic: id, description, unit, scale, initial value,
    /// increment, decrement, value, update count.
    pub fn save(&self) -> String {
        let stats = self.stats.lock();
        let mut out = format!("{STATS_MAGIC}/{STATS_VERSION}\n");
        for st in stats.values() {
            let d = &st.descriptor;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                esc(&d.id),
                esc(&d.description),
                esc(&d.unit),
                d.scale,
                d.initial_value,
                d.default_increment,
                d.default_decrement,
                st.value,
                st.update_count
            );
        }
        out
    }

    /// Reads an `IDBGSTAT/1` snapshot.
    pub fn load(bytes: &[u8]) -> Result<StatsRegistry, FormatError> {
        let mut lines = Lines::new(decode_utf8(bytes)?);
        lines.expect_header(STATS_MAGIC, STATS_VERSION)?;
        let registry = StatsRegistry::new();
        while let Some(line) = lines.next_line()? {
            let n = lines.line_no();
            let f = split_fields(line, '\t', STATS_FIELDS, n)?;
            let descriptor = StatisticDescriptor {
                id: unescape_at(f[0], n)?,
                description: unescape_at(f[1], n)?,
                unit: unescape_at(f[2], n)?,
                scale: parse_num(f[3], "scale", n)?,
                initial_value: parse_num(f[4], "initial value", n)?,
                default_increment: parse_num(f[5], "increment", n)?,
                default_decrement: parse_num(f[6], "decrement", n)?,
            };
            let value: f64 = parse_num(f[7], "value", n)?;
            let update_count: u64 = parse_num(f[8], "update count", n)?;
            let id = descriptor.id.clone();
            registry
                .define(descriptor)
                .and_then(|_| registry.set_value(&id, value))
                .map_err(|e| FormatError::invalid(n, e.to_string()))?;
            registry.stats.lock().get_mut(&id).expect("just defined").update_count = update_count;
        }
        Ok(registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn msg_per_second() -> StatisticDescriptor {
        StatisticDescriptor::new("MsgPerSecond", "message throughput", "messages per second")
            .scale(1000.0)
            .initial(0.0)
            .steps(0.001, 0.001)
    }

    #[test]
    fn msg_per_second_arithmetic() {
        let reg = StatsRegistry::new();
        reg.define(msg_per_second()).unwrap();
        assert_eq!(reg.value("MsgPerSecond").unwrap(), 0.0);
        assert_eq!(reg.increment("MsgPerSecond").unwrap(), 1.0);
        assert_eq!(reg.decrement("MsgPerSecond").unwrap(), 0.0);
        assert_eq!(reg.get("MsgPerSecond").unwrap().update_count, 2);
    }

    #[test]
    fn five_increments_match_loop() {
        let reg = StatsRegistry::new();
        reg.define(msg_per_second()).unwrap();
        let mut expected = 0.0;
        for _ in 0..5 {
            expected += 0.001 * 1000.0;
            reg.increment("MsgPerSecond").unwrap();
        }
        assert_eq!(expected, 5.0);
        assert!((reg.value("MsgPerSecond").unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn definition_errors() {
        let reg = StatsRegistry::new();
        reg.define(msg_per_second()).unwrap();
        assert_eq!(
            reg.define(msg_per_second()),
            Err(StatError::Duplicate("MsgPerSecond".into()))
        );
        assert!(matches!(
            reg.define(msg_per_second().scale(0.0)),
            Err(StatError::BadScale { .. })
        ));
        let mut bad = msg_per_second();
        bad.id = "Other".into();
        bad.scale = f64::INFINITY;
        assert!(reg.define(bad).is_err());
        assert_eq!(reg.increment("nope"), Err(StatError::Unknown("nope".into())));
    }

    #[test]
    fn set_and_reset() {
        let reg = StatsRegistry::new();
        reg.define(msg_per_second().initial(2.0)).unwrap();
        reg.set_value("MsgPerSecond", 42.5).unwrap();
        assert_eq!(reg.value("MsgPerSecond").unwrap(), 42.5);
        reg.increment("MsgPerSecond").unwrap();
        assert!(reg.set_value("MsgPerSecond", f64::NAN).is_err());
        reg.reset("MsgPerSecond").unwrap();
        let st = reg.get("MsgPerSecond").unwrap();
        assert_eq!((st.value, st.update_count), (2.0, 0));
    }

    #[test]
    fn report_format() {
        let reg = StatsRegistry::new();
        assert_eq!(reg.report_all(), "");
        reg.define(msg_per_second()).unwrap();
        reg.increment("MsgPerSecond").unwrap();
        assert_eq!(
            reg.report("MsgPerSecond").unwrap(),
            "MsgPerSecond: 1 messages per second (updates: 1) — message throughput"
        );
        reg.define(StatisticDescriptor::new("Alpha", "first", "frames")).unwrap();
        let all = reg.report_all();
        let lines: Vec<_> = all.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("Alpha: 0 frames"));
        assert!(lines[1].starts_with("MsgPerSecond: 1 "));
        assert_eq!(all, reg.report_all());
    }

    #[test]
    fn value_formatting() {
        assert_eq!(format_value(1.0), "1");
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(-0.0), "0");
        assert_eq!(format_value(42.5), "42.5");
        assert_eq!(format_value(1.0 / 3.0), "0.333333");
        assert_eq!(format_value(123456.7), "123457");
        assert_eq!(format_value(999999.5), "1e6");
        assert_eq!(format_value(2_500_000.0), "2.5e6");
        assert_eq!(format_value(0.000123456789), "0.000123457");
        assert_eq!(format_value(-7.25), "-7.25");
        assert_eq!(format_value(1.5e-7), "1.5e-7");
    }

    #[test]
    fn snapshot_round_trip() {
        let reg = StatsRegistry::new();
        reg.define(msg_per_second()).unwrap();
        reg.define(StatisticDescriptor::new("Frames", "tab\there\nnewline", "frames per second").scale(0.1))
            .unwrap();
        reg.increment("MsgPerSecond").unwrap();
        reg.increment("Frames").unwrap();
        let text = reg.save();
        let back = StatsRegistry::load(text.as_bytes()).unwrap();
        assert_eq!(back.save(), text);
        assert_eq!(back.get("Frames").unwrap(), reg.get("Frames").unwrap());
    }

    #[test]
    fn snapshot_errors() {
        assert!(StatsRegistry::load(b"IDBGSTATS/1\n").is_err());
        assert!(StatsRegistry::load(b"IDBGSTAT/1\nonly\tthree\tfields\n").is_err());
        assert!(StatsRegistry::load(b"IDBGSTAT/1\n").unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn steps_accumulate(k in 0usize..200, m in 0usize..200, inc in 0.0001f64..10.0, dec in 0.0001f64..10.0, scale in 0.01f64..1000.0, initial in -100.0f64..100.0) {
            let reg = StatsRegistry::new();
            reg.define(StatisticDescriptor::new("S", "d", "u").scale(scale).initial(initial).steps(inc, dec)).unwrap();
            for _ in 0..k { reg.increment("S").unwrap(); }
            for _ in 0..m { reg.decrement("S").unwrap(); }
            let expected = initial + k as f64 * inc * scale - m as f64 * dec * scale;
            let got = reg.value("S").unwrap();
            let magnitude = initial.abs() + k as f64 * inc * scale + m as f64 * dec * scale;
            prop_assert!((got - expected).abs() <= 1e-9 * magnitude.max(1.0), "{} vs {}", got, expected);
            prop_assert_eq!(reg.get("S").unwrap().update_count, (k + m) as u64);
        }

        #[test]
        fn distinct_ids_commute(ops in proptest::collection::vec((0..2usize, 0..4usize), 0..30)) {
            let forward = StatsRegistry::new();
            let split = StatsRegistry::new();
            for r in [&forward, &split] {
                r.define(StatisticDescriptor::new("A", "", "u").steps(2.0, 1.0)).unwrap();
                r.define(StatisticDescriptor::new("B", "", "u").steps(3.0, 0.5)).unwrap();
            }
            let apply = |r: &StatsRegistry, id: &str, op: usize| match op {
                0 => { r.increment(id).unwrap(); }
                1 => { r.decrement(id).unwrap(); }
                2 => r.set_value(id, 7.0).unwrap(),
                _ => r.reset(id).unwrap(),
            };
            for (which, op) in &ops {
                apply(&forward, ["A", "B"][*which], *op);
            }
            // all of A's operations first, then all of B's
            for id_index in 0..2 {
                for (which, op) in ops.iter().filter(|(w, _)| *w == id_index) {
                    apply(&split, ["A", "B"][*which], *op);
                }
            }
            prop_assert_eq!(forward.save(), split.save());
        }
    }
}
