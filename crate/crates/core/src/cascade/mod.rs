//! Ordered recognizer cascades that split a plot set into non-interesting,
//! known-interesting and unrecognized plots, plus the labeling session that
//! builds them.

mod scan;
mod session;

pub use scan::{evaluate, Cascade, EvalReport, PlotScore, RecognizerEval, ScanPartition};
pub use session::{
    default_draft_sizes, AuditAction, AuditRecord, CascadeSession, DraftSet, PlotKind, PlotLabel,
};
