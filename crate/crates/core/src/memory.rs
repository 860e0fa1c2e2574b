//! Exact activation-memory accounting.
//!
//! Every [`Tensor`](crate::Tensor) buffer reports its element count to a
//! per-thread counter when it is created and again when it is dropped. A
//! [`MemoryLedger`] measurement opens a scope on that counter and reports the
//! peak number of live elements above the level at scope entry, so inputs and
//! parameters that already exist are not charged. Nested [`scope`] calls add
//! per-block records.
//!
//! Kernels only fill preallocated tensors from worker threads, so all buffer
//! creation and destruction happens on the measuring thread and the counts
//! are identical for any thread count. Fixed-size per-thread scratch (one
//! frequency patch, one padded row) is not tensor-backed and is not counted.

use std::cell::RefCell;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerRecord {
    pub label: String,
    /// Nesting depth; 0 is the measured root.
    pub depth: usize,
    /// Total elements allocated inside the scope (including later freed).
    pub allocated_floats: u64,
    /// Peak concurrently live elements above the level at scope entry.
    pub peak_floats: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerReport {
    pub label: String,
    pub peak_floats: u64,
    pub allocated_floats: u64,
    /// Root record first, then nested scopes in entry order.
    pub records: Vec<LedgerRecord>,
}

impl LedgerReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{:indent$}{}: peak {} floats, allocated {}\n",
                "",
                r.label,
                r.peak_floats,
                r.allocated_floats,
                indent = 2 * r.depth
            ));
        }
        out
    }
}

struct Frame {
    base: i64,
    peak: i64,
    allocated: u64,
    record: usize,
}

#[derive(Default)]
struct Tracker {
    live: i64,
    frames: Vec<Frame>,
    records: Vec<LedgerRecord>,
}

thread_local! {
    static TRACKER: RefCell<Tracker> = RefCell::new(Tracker::default());
}

pub(crate) fn acquire(n: usize) {
    TRACKER.with(|t| {
        let mut t = t.borrow_mut();
        t.live += n as i64;
        let live = t.live;
        if let Some(top) = t.frames.last_mut() {
            top.allocated += n as u64;
            top.peak = top.peak.max(live - top.base);
        }
    });
}

pub(crate) fn release(n: usize) {
    // try_with: buffers may be dropped during thread teardown.
    let _ = TRACKER.try_with(|t| {
        if let Ok(mut t) = t.try_borrow_mut() {
            t.live -= n as i64;
        }
    });
}

/// Elements currently held by tensors created on this thread.
pub fn live_floats() -> i64 {
    TRACKER.with(|t| t.borrow().live)
}

fn push(label: &str) {
    TRACKER.with(|t| {
        let mut t = t.borrow_mut();
        let depth = t.frames.len();
        let record = t.records.len();
        t.records.push(LedgerRecord {
            label: label.to_string(),
            depth,
            allocated_floats: 0,
            peak_floats: 0,
        });
        let base = t.live;
        t.frames.push(Frame {
            base,
            peak: 0,
            allocated: 0,
            record,
        });
    });
}

fn pop() -> Option<LedgerReport> {
    TRACKER.with(|t| {
        let mut t = t.borrow_mut();
        let frame = t.frames.pop().expect("memory scope stack underflow");
        let peak = frame.peak.max(0) as u64;
        {
            let rec = &mut t.records[frame.record];
            rec.peak_floats = peak;
            rec.allocated_floats = frame.allocated;
        }
        if let Some(parent) = t.frames.last_mut() {
            parent.allocated += frame.allocated;
            parent.peak = parent.peak.max(frame.peak + frame.base - parent.base);
            None
        } else {
            let records: Vec<_> = t.records.drain(..).collect();
            Some(LedgerReport {
                label: records[0].label.clone(),
                peak_floats: peak,
                allocated_floats: frame.allocated,
                records,
            })
        }
    })
}

struct ScopeGuard {
    armed: bool,
}

impl Drop for ScopeGuard {
    fn drop(&mut self) {
        if self.armed {
            let _ = pop();
        }
    }
}

fn active() -> bool {
    TRACKER.with(|t| !t.borrow().frames.is_empty())
}

/// Runs `f` inside a labelled nested scope when a ledger measurement is
/// active on this thread; otherwise just runs `f`.
pub fn scope<R>(label: &str, f: impl FnOnce() -> R) -> R {
    if !active() {
        return f();
    }
    push(label);
    let mut guard = ScopeGuard { armed: true };
    let out = f();
    guard.armed = false;
    let _ = pop();
    out
}

/// Entry point for activation-memory measurements.
pub struct MemoryLedger;

impl MemoryLedger {
    /// Measures `f` as a root scope. Must not be called while another
    /// measurement is active on the same thread.
    pub fn measure<R>(label: &str, f: impl FnOnce() -> R) -> (R, LedgerReport) {
        assert!(!active(), "nested MemoryLedger::measure; use memory::scope");
        push(label);
        let mut guard = ScopeGuard { armed: true };
        let out = f();
        guard.armed = false;
        let report = pop().expect("root scope yields a report");
        (out, report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Shape, Tensor};

    #[test]
    fn counts_live_elements_exactly() {
        let input = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let (_, report) = MemoryLedger::measure("root", || {
            let a = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 4));
            let b = scope("inner", || {
                let t = Tensor::<f32>::zeros(Shape::new(1, 1, 8, 8));
                drop(t);
                Tensor::<f32>::zeros(Shape::new(1, 1, 2, 2))
            });
            drop(a);
            drop(b);
            let _c = input.clone();
        });
        assert_eq!(report.peak_floats, 16 + 64);
        assert_eq!(report.allocated_floats, 16 + 64 + 4 + 32);
        assert_eq!(report.records.len(), 2);
        assert_eq!(report.records[1].label, "inner");
        assert_eq!(report.records[1].peak_floats, 64);
        assert_eq!(report.records[1].depth, 1);
    }

    #[test]
    fn peak_dominates_every_record() {
        let (_, report) = MemoryLedger::measure("root", || {
            for i in 1..4 {
                scope("step", || Tensor::<f64>::zeros(Shape::new(1, 1, i, i)));
            }
        });
        for r in &report.records {
            assert!(report.peak_floats >= r.peak_floats);
        }
    }

    #[test]
    fn scope_without_ledger_is_passthrough() {
        assert_eq!(scope("x", || 7), 7);
    }
}
