//! Session state behind the HTTP API: one FIFO worker runs jobs, and
//! training jobs pause at every validation-pass checkpoint until the
//! client decides or the inspection timeout hands the decision to the
//! automated proxy.

use std::collections::BTreeMap;
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use plotsieve::cascade::{CascadeSession, PlotKind, PlotLabel};
use plotsieve::gan::{train, CheckRecord, Gan, InspectionDecision, InspectionHook, RecognizerKind};
use plotsieve::tensor::Network;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::TrainSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Train,
    Scan,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobState {
    Queued,
    Running,
    AwaitingInspection,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobDescriptor {
    pub id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub class: Option<String>,
    /// Latest validation check.
    pub progress: Option<CheckRecord>,
    pub checks: usize,
    pub inspections: usize,
    pub result: Option<serde_json::Value>,
    pub error: Option<String>,
}

struct JobEntry {
    desc: JobDescriptor,
    spec: Option<TrainSpec>,
    decision: Option<InspectionDecision>,
    stop_requested: bool,
    generator: Option<(usize, Network)>,
}

#[derive(Default)]
struct JobTable {
    next: u64,
    jobs: BTreeMap<String, JobEntry>,
}

/// Why a job request was refused.
#[derive(Debug)]
pub enum JobError {
    NotFound(String),
    Conflict(String),
}

pub struct Service {
    session: Mutex<CascadeSession>,
    jobs: Mutex<JobTable>,
    changed: Condvar,
    queue: Mutex<mpsc::Sender<String>>,
    inspection_timeout: Duration,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Service {
    /// Wraps `session` and starts the job worker. A zero timeout never
    /// pauses: the proxy decides at once.
    pub fn start(session: CascadeSession, inspection_timeout: Duration) -> Arc<Self> {
        let (tx, rx) = mpsc::channel::<String>();
        let svc = Arc::new(Self {
            session: Mutex::new(session),
            jobs: Mutex::new(JobTable::default()),
            changed: Condvar::new(),
            queue: Mutex::new(tx),
            inspection_timeout,
        });
        let worker = Arc::clone(&svc);
        std::thread::spawn(move || {
            while let Ok(id) = rx.recv() {
                worker.run(&id);
            }
        });
        svc
    }

    pub fn session(&self) -> MutexGuard<'_, CascadeSession> {
        lock(&self.session)
    }

    pub fn submit(&self, kind: JobKind, class: Option<String>, spec: Option<TrainSpec>) -> JobDescriptor {
        let mut table = lock(&self.jobs);
        table.next += 1;
        let id = format!("job-{:04}", table.next);
        let desc = JobDescriptor {
            id: id.clone(),
            kind,
            state: JobState::Queued,
            class,
            progress: None,
            checks: 0,
            inspections: 0,
            result: None,
            error: None,
        };
        table.jobs.insert(
            id.clone(),
            JobEntry {
                desc: desc.clone(),
                spec,
                decision: None,
                stop_requested: false,
                generator: None,
            },
        );
        drop(table);
        // The worker lives as long as the service, so the send cannot fail.
        let _ = lock(&self.queue).send(id);
        desc
    }

    pub fn job(&self, id: &str) -> Option<JobDescriptor> {
        lock(&self.jobs).jobs.get(id).map(|j| j.desc.clone())
    }

    pub fn jobs(&self) -> Vec<JobDescriptor> {
        lock(&self.jobs).jobs.values().map(|j| j.desc.clone()).collect()
    }

    /// Latest generator snapshot of a training job and its iteration.
    pub fn generator(&self, id: &str) -> Result<Option<(usize, Network)>, JobError> {
        let table = lock(&self.jobs);
        let job = table.jobs.get(id).ok_or_else(|| JobError::NotFound(id.to_string()))?;
        Ok(job.generator.clone())
    }

    /// Resumes a job waiting for inspection.
    pub fn continue_job(&self, id: &str) -> Result<JobDescriptor, JobError> {
        let mut table = lock(&self.jobs);
        let job = table.jobs.get_mut(id).ok_or_else(|| JobError::NotFound(id.to_string()))?;
        if job.desc.state != JobState::AwaitingInspection {
            return Err(JobError::Conflict(format!("job {id} is not awaiting inspection")));
        }
        job.decision = Some(InspectionDecision::Continue);
        let desc = job.desc.clone();
        self.changed.notify_all();
        Ok(desc)
    }

    /// Stops a job: at an inspection the current discriminator becomes the
    /// model; a queued job is dropped; a running one stops at its next
    /// iteration.
    pub fn stop_job(&self, id: &str) -> Result<JobDescriptor, JobError> {
        let mut table = lock(&self.jobs);
        let job = table.jobs.get_mut(id).ok_or_else(|| JobError::NotFound(id.to_string()))?;
        match job.desc.state {
            JobState::AwaitingInspection => job.decision = Some(InspectionDecision::Stop),
            JobState::Running => job.stop_requested = true,
            JobState::Queued => {
                job.desc.state = JobState::Failed;
                job.desc.error = Some("stopped before it started".into());
            }
            JobState::Done | JobState::Failed => {
                return Err(JobError::Conflict(format!("job {id} has already finished")));
            }
        }
        let desc = job.desc.clone();
        self.changed.notify_all();
        Ok(desc)
    }

    /// Blocks until `id` satisfies `pred` or `timeout` passes.
    pub fn wait_for(&self, id: &str, timeout: Duration, pred: impl Fn(&JobDescriptor) -> bool) -> Option<JobDescriptor> {
        let table = lock(&self.jobs);
        let (table, _) = self
            .changed
            .wait_timeout_while(table, timeout, |t| t.jobs.get(id).is_some_and(|j| !pred(&j.desc)))
            .unwrap_or_else(|p| p.into_inner());
        table.jobs.get(id).map(|j| j.desc.clone())
    }

    fn update(&self, id: &str, f: impl FnOnce(&mut JobEntry)) {
        let mut table = lock(&self.jobs);
        if let Some(job) = table.jobs.get_mut(id) {
            f(job);
        }
        self.changed.notify_all();
    }

    fn finish(&self, id: &str, outcome: Result<serde_json::Value, String>) {
        self.update(id, |job| match outcome {
            Ok(result) => {
                job.desc.state = JobState::Done;
                job.desc.result = Some(result);
            }
            Err(message) => {
                job.desc.state = JobState::Failed;
                job.desc.error = Some(message);
            }
        });
    }

    fn run(self: &Arc<Self>, id: &str) {
        let (kind, class, spec) = {
            let mut table = lock(&self.jobs);
            let Some(job) = table.jobs.get_mut(id) else { return };
            if job.desc.state != JobState::Queued {
                return;
            }
            job.desc.state = JobState::Running;
            self.changed.notify_all();
            (job.desc.kind, job.desc.class.clone(), job.spec.clone())
        };
        let outcome = match kind {
            JobKind::Scan => self.run_scan(),
            JobKind::Train => self.run_train(id, class.as_deref().unwrap_or_default(), spec),
        };
        self.finish(id, outcome);
    }

    fn run_scan(&self) -> Result<serde_json::Value, String> {
        let mut session = self.session();
        let partition = session.scan().map_err(|e| e.to_string())?;
        Ok(json!({
            "recognizers": partition.recognizers,
            "bucket_sizes": partition.buckets.iter().map(Vec::len).collect::<Vec<_>>(),
            "residual": partition.residual.len(),
            "prefix_coverage": partition.prefix_coverage(),
        }))
    }

    fn run_train(self: &Arc<Self>, id: &str, class: &str, spec: Option<TrainSpec>) -> Result<serde_json::Value, String> {
        let (train_set, val_set, kind, spec) = {
            let session = self.session();
            let (train_set, val_set) = session.draft_images(class).map_err(|e| e.to_string())?;
            let draft = &session.drafts()[class];
            let all_ni = draft.train_ids.iter().all(|p| session.label(p) == PlotLabel::NonInteresting);
            let kind = if all_ni {
                RecognizerKind::NonInteresting
            } else {
                RecognizerKind::Interesting
            };
            let spec = spec.unwrap_or_else(|| TrainSpec {
                rotations: if session.kind() == PlotKind::Wafer { 12 } else { 1 },
                ..TrainSpec::default()
            });
            (train_set, val_set, kind, spec)
        };
        let mut hook = JobHook {
            svc: Arc::clone(self),
            id: id.to_string(),
        };
        let outcome = train(
            &spec.augment(&train_set),
            &spec.augment(&val_set),
            class,
            kind,
            &spec.discriminator,
            &spec.generator,
            &spec.training,
            &mut hook,
        )
        .map_err(|e| e.to_string())?;
        let iterations = outcome.report.iterations;
        self.update(id, |job| job.generator = Some((iterations, outcome.gan.generator.clone())));
        let report = serde_json::to_value(&outcome.report).expect("report serializes");
        if !outcome.report.validation_complete {
            self.update(id, |job| job.desc.result = Some(json!({ "report": report })));
            return Err("stopped before every training and validation plot was recognized".into());
        }
        let length = self.session().attach(outcome.model).map_err(|e| e.to_string())?;
        Ok(json!({
            "report": report,
            "recognizer_kind": kind,
            "cascade_length": length,
        }))
    }
}

struct JobHook {
    svc: Arc<Service>,
    id: String,
}

impl InspectionHook for JobHook {
    fn inspect(&mut self, iteration: usize, gan: &Gan) -> InspectionDecision {
        if self.svc.inspection_timeout.is_zero() {
            return InspectionDecision::Defer;
        }
        let generator = gan.generator.clone();
        self.svc.update(&self.id, |job| {
            job.desc.state = JobState::AwaitingInspection;
            job.desc.inspections += 1;
            job.decision = None;
            job.generator = Some((iteration, generator));
        });
        let table = lock(&self.svc.jobs);
        let (mut table, _) = self
            .svc
            .changed
            .wait_timeout_while(table, self.svc.inspection_timeout, |t| {
                t.jobs.get(&self.id).is_some_and(|j| j.decision.is_none())
            })
            .unwrap_or_else(|p| p.into_inner());
        let job = table.jobs.get_mut(&self.id).expect("running job exists");
        job.desc.state = JobState::Running;
        self.svc.changed.notify_all();
        job.decision.take().unwrap_or(InspectionDecision::Defer)
    }

    fn progress(&mut self, record: &CheckRecord) {
        let record = record.clone();
        self.svc.update(&self.id, |job| {
            job.desc.checks += 1;
            job.desc.progress = Some(record);
        });
    }

    fn cancelled(&mut self) -> bool {
        lock(&self.svc.jobs).jobs.get(&self.id).is_some_and(|j| j.stop_requested)
    }
}
