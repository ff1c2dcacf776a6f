//! Node A calls node B over an in-process byte pipe. B fails an assertion
//! and reports it with A's call stack attached.

use std::io::Write;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;

use idbg_core::{
    buffer_channel, curried_dump, export_envelope, import_envelope, CallSiteFrame, FailurePolicy,
    Monitor, MonitorContext, MonitorError, Registry, Semantics, StackView,
};

use crate::CliError;

const NODE_A_THREAD: &str = "A-main";
const NODE_B_THREAD: &str = "B-worker";

fn node_a(pipe: mpsc::Sender<Vec<u8>>) -> Result<(), String> {
    let stack = StackView::capture(&[
        CallSiteFrame::new("A", "main").at("a.rs:10"),
        CallSiteFrame::new("A", "m").at("a.rs:24"),
    ]);
    let envelope = export_envelope(&stack, "A", NODE_A_THREAD, None).map_err(|e| e.to_string())?;
    pipe.send(envelope).map_err(|_| "node B hung up".to_string())
}

fn node_b(pipe: mpsc::Receiver<Vec<u8>>) -> Result<String, String> {
    let bytes = pipe.recv().map_err(|_| "node A never called".to_string())?;
    let remote = import_envelope(&bytes).map_err(|e| e.to_string())?;

    let ctx = MonitorContext::new(Semantics::standard(), "buffer").map_err(|e| e.to_string())?;
    let buffer = Arc::new(buffer_channel());
    let monitor = Monitor::new(Registry::new(ctx), "B").with_channel(buffer.clone());

    let local = StackView::capture(&[
        CallSiteFrame::new("B", "dispatch").at("b.rs:31"),
        CallSiteFrame::new("B", "m").at("b.rs:47"),
    ]);
    let site = local.innermost().cloned().expect("non-empty stack");
    let diagnostic = format!("argument from caller out of range\n{}", curried_dump(&local, &remote));
    let no_groups: [&str; 0] = [];
    match monitor.check(
        NODE_B_THREAD,
        &no_groups,
        &site,
        false,
        &diagnostic,
        FailurePolicy::RaiseToCaller,
    ) {
        Err(MonitorError::Assertion(failure)) => {
            debug_assert_eq!(buffer.len(), 1);
            Ok(failure.event.message)
        }
        Err(e) => Err(e.to_string()),
        Ok(outcome) => Err(format!("assertion did not fail: {outcome:?}")),
    }
}

/// Runs both nodes on their own threads and prints B's diagnostic.
pub fn run_curry_demo(out: &mut dyn Write) -> Result<(), CliError> {
    let (tx, rx) = mpsc::channel();
    let spawn_err = |e: std::io::Error| CliError::Io(format!("cannot start node: {e}"));
    let a = thread::Builder::new()
        .name(NODE_A_THREAD.into())
        .spawn(move || node_a(tx))
        .map_err(spawn_err)?;
    let b = thread::Builder::new()
        .name(NODE_B_THREAD.into())
        .spawn(move || node_b(rx))
        .map_err(spawn_err)?;
    let a_result = a.join().map_err(|_| CliError::Invalid("node A panicked".into()))?;
    let b_result = b.join().map_err(|_| CliError::Invalid("node B panicked".into()))?;
    a_result.map_err(CliError::Invalid)?;
    let message = b_result.map_err(CliError::Invalid)?;
    let mut text = format!("node B reported:\n{message}");
    if !text.ends_with('\n') {
        text.push('\n');
    }
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("cannot write output: {e}")))
}
