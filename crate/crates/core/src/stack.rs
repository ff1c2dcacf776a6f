//! Call-stack snapshots.

use std::sync::Arc;

use crate::event::CallSiteFrame;

/// An immutable snapshot of a call stack, outermost frame first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StackView {
    frames: Arc<[CallSiteFrame]>,
}

impl StackView {
    /// Copies `frames` (outermost first) into a snapshot.
    pub fn capture(frames: &[CallSiteFrame]) -> Self {
        StackView {
            frames: frames.into(),
        }
    }

    pub fn frames(&self) -> &[CallSiteFrame] {
        &self.frames
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn innermost(&self) -> Option<&CallSiteFrame> {
        self.frames.last()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// One line per frame, innermost first.
    pub fn dump(&self) -> String {
        dump_frames(&self.frames)
    }
}

impl From<Vec<CallSiteFrame>> for StackView {
    fn from(frames: Vec<CallSiteFrame>) -> Self {
        StackView {
            frames: frames.into(),
        }
    }
}

pub(crate) fn frame_line(frame: &CallSiteFrame) -> String {
    format!(
        "at {}.{} ({})",
        frame.class_id,
        frame.operation,
        frame.location.as_deref().unwrap_or("unknown")
    )
}

/// Renders frames given outermost first as `at <class>.<op> (<location>)`
/// lines, innermost first, each ending in a newline.
pub fn dump_frames(frames: &[CallSiteFrame]) -> String {
    let mut out = String::new();
    for frame in frames.iter().rev() {
        out.push_str(&frame_line(frame));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stack() {
        let v = StackView::capture(&[]);
        assert!(v.is_empty());
        assert_eq!(v.dump(), "");
    }

    #[test]
    fn innermost_first() {
        let frames = vec![
            CallSiteFrame::new("A", "main").at("a.rs:3"),
            CallSiteFrame::new("B", "m"),
        ];
        let v = StackView::capture(&frames);
        assert_eq!(v.depth(), 2);
        assert_eq!(v.innermost().unwrap().class_id, "B");
        assert_eq!(v.dump(), "at B.m (unknown)\nat A.main (a.rs:3)\n");
    }

    #[test]
    fn snapshot_is_detached() {
        let mut frames = vec![CallSiteFrame::new("A", "main")];
        let v = StackView::capture(&frames);
        frames.push(CallSiteFrame::new("B", "m"));
        frames[0].operation = "changed".into();
        assert_eq!(v.depth(), 1);
        assert_eq!(v.frames()[0].operation, "main");
    }
}
