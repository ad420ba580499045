//! Human-driven labeling sessions and their directory store.
//!
//! ```text
//! <root>/session.json    side, rasterization policy, plot ids
//! <root>/plots/<id>.tern plot images
//! <root>/labels.json     plot id → label
//! <root>/drafts.json     class → training/validation draft
//! <root>/cascade.json    ordered checkpoint file names
//! <root>/models/*.psck   recognizer checkpoints
//! <root>/audit.log       one JSON action per line, append-only
//! <root>/partition.json  latest scan
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scan::{Cascade, ScanPartition};
use crate::error::{Error, Result};
use crate::gan::{load_recognizer, save_checkpoint, Checkpoint, RecognizerKind, RecognizerModel};
use crate::raster::{read_image, write_image, PlotImage};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlotLabel {
    Unlabeled,
    NonInteresting,
    Interesting(String),
    Novel,
}

impl fmt::Display for PlotLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlotLabel::Unlabeled => write!(f, "unlabeled"),
            PlotLabel::NonInteresting => write!(f, "non-interesting"),
            PlotLabel::Interesting(c) => write!(f, "interesting:{c}"),
            PlotLabel::Novel => write!(f, "novel"),
        }
    }
}

impl FromStr for PlotLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unlabeled" => Ok(PlotLabel::Unlabeled),
            "non-interesting" => Ok(PlotLabel::NonInteresting),
            "novel" => Ok(PlotLabel::Novel),
            _ => match s.strip_prefix("interesting:") {
                Some(c) if !c.is_empty() => Ok(PlotLabel::Interesting(c.to_string())),
                _ => Err(Error::Unknown {
                    what: "label",
                    name: s.to_string(),
                }),
            },
        }
    }
}

impl Serialize for PlotLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlotLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Wafer,
    Correlation,
    BoxPlot,
}

/// Default (training, validation) draft sizes: 5/5 for wafer classes,
/// 20/20 for correlation and box-plot classes.
pub fn default_draft_sizes(kind: PlotKind) -> (usize, usize) {
    match kind {
        PlotKind::Wafer => (5, 5),
        PlotKind::Correlation | PlotKind::BoxPlot => (20, 20),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftSet {
    pub class: String,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

/// One session mutation, as recorded in the audit log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AuditAction {
    Label { plot_id: String, label: PlotLabel },
    Draft(DraftSet),
    Attach { model_file: String, class: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    #[serde(flatten)]
    pub action: AuditAction,
}

#[derive(Serialize, Deserialize)]
struct SessionMeta {
    side: usize,
    policy: String,
    kind: PlotKind,
    plot_ids: Vec<String>,
}

/// Plot corpus, labels, drafts and the attached cascade of one analysis.
#[derive(Clone, Debug)]
pub struct CascadeSession {
    root: PathBuf,
    kind: PlotKind,
    plot_ids: Vec<String>,
    plots: BTreeMap<String, PlotImage>,
    labels: BTreeMap<String, PlotLabel>,
    drafts: BTreeMap<String, DraftSet>,
    model_files: Vec<String>,
    cascade: Cascade,
    audit: Vec<AuditRecord>,
    partition: Option<ScanPartition>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) && !id.starts_with('.')
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

impl CascadeSession {
    /// Creates a session directory holding `plots`. Fails if `root`
    /// already contains a session.
    pub fn create(root: &Path, kind: PlotKind, policy: &str, plots: Vec<(String, PlotImage)>) -> Result<Self> {
        if root.join("session.json").exists() {
            return Err(Error::Conflict(format!("{} already holds a session", root.display())));
        }
        let side = plots.first().map_or(crate::raster::DEFAULT_SIDE, |p| p.1.side());
        let mut map = BTreeMap::new();
        let mut ids = Vec::with_capacity(plots.len());
        for (id, im) in plots {
            if !valid_id(&id) {
                return Err(Error::Config(format!("plot id {id:?} must be [A-Za-z0-9._-]")));
            }
            if im.side() != side {
                return Err(Error::Geometry {
                    expected: side,
                    got: im.side(),
                });
            }
            if map.insert(id.clone(), im).is_some() {
                return Err(Error::Conflict(format!("plot id {id} appears twice")));
            }
            ids.push(id);
        }
        for dir in [root.to_path_buf(), root.join("plots"), root.join("models")] {
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for (id, im) in &map {
            write_image(im, &root.join("plots").join(format!("{id}.tern")))?;
        }
        let session = Self {
            root: root.to_path_buf(),
            kind,
            plot_ids: ids,
            plots: map,
            labels: BTreeMap::new(),
            drafts: BTreeMap::new(),
            model_files: Vec::new(),
            cascade: Cascade::new(side, policy),
            audit: Vec::new(),
            partition: None,
        };
        write_json(
            &root.join("session.json"),
            &SessionMeta {
                side,
                policy: policy.to_string(),
                kind,
                plot_ids: session.plot_ids.clone(),
            },
        )?;
        let log = root.join("audit.log");
        fs::write(&log, "").map_err(|e| Error::io(&log, e))?;
        session.persist()?;
        Ok(session)
    }

    /// Loads a session by replaying its audit log over the stored plots.
    pub fn open(root: &Path) -> Result<Self> {
        let meta: SessionMeta = read_json(&root.join("session.json"))?;
        let mut plots = BTreeMap::new();
        for id in &meta.plot_ids {
            plots.insert(id.clone(), read_image(&root.join("plots").join(format!("{id}.tern")))?);
        }
        let mut session = Self {
            root: root.to_path_buf(),
            kind: meta.kind,
            plot_ids: meta.plot_ids,
            plots,
            labels: BTreeMap::new(),
            drafts: BTreeMap::new(),
            model_files: Vec::new(),
            cascade: Cascade::new(meta.side, meta.policy),
            audit: Vec::new(),
            partition: None,
        };
        let log = root.join("audit.log");
        let text = fs::read_to_string(&log).map_err(|e| Error::io(&log, e))?;
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: AuditRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: log.display().to_string(),
                line: n + 1,
                message: e.to_string(),
            })?;
            session.apply(&record.action)?;
            session.audit.push(record);
        }
        let part = root.join("partition.json");
        if part.exists() {
            session.partition = Some(read_json(&part)?);
        }
        Ok(session)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn kind(&self) -> PlotKind {
        self.kind
    }

    pub fn plot_ids(&self) -> &[String] {
        &self.plot_ids
    }

    pub fn plot(&self, id: &str) -> Result<&PlotImage> {
        self.plots.get(id).ok_or_else(|| Error::Unknown {
            what: "plot",
            name: id.to_string(),
        })
    }

    pub fn label(&self, id: &str) -> PlotLabel {
        self.labels.get(id).cloned().unwrap_or(PlotLabel::Unlabeled)
    }

    pub fn labels(&self) -> &BTreeMap<String, PlotLabel> {
        &self.labels
    }

    pub fn drafts(&self) -> &BTreeMap<String, DraftSet> {
        &self.drafts
    }

    pub fn cascade(&self) -> &Cascade {
        &self.cascade
    }

    pub fn audit(&self) -> &[AuditRecord] {
        &self.audit
    }

    pub fn partition(&self) -> Option<&ScanPartition> {
        self.partition.as_ref()
    }

    fn drafted_in(&self, id: &str) -> Option<&DraftSet> {
        self.drafts
            .values()
            .find(|d| d.train_ids.iter().chain(&d.val_ids).any(|x| x == id))
    }

    /// Validates and applies an action without recording it.
    fn apply(&mut self, action: &AuditAction) -> Result<()> {
        match action {
            AuditAction::Label { plot_id, label } => {
                self.plot(plot_id)?;
                if self.label(plot_id) == *label {
                    return Ok(());
                }
                if let Some(d) = self.drafted_in(plot_id) {
                    return Err(Error::Conflict(format!(
                        "plot {plot_id} is in the {} draft; relabeling it is not allowed",
                        d.class
                    )));
                }
                if *label == PlotLabel::Unlabeled {
                    self.labels.remove(plot_id);
                } else {
                    self.labels.insert(plot_id.clone(), label.clone());
                }
            }
            AuditAction::Draft(d) => {
                if d.class.is_empty() {
                    return Err(Error::Config("draft class must not be empty".into()));
                }
                if d.train_ids.is_empty() {
                    return Err(Error::Config("train_ids must not be empty".into()));
                }
                let train: BTreeSet<&String> = d.train_ids.iter().collect();
                let val: BTreeSet<&String> = d.val_ids.iter().collect();
                if train.len() != d.train_ids.len() || val.len() != d.val_ids.len() {
                    return Err(Error::Conflict("draft lists contain duplicate ids".into()));
                }
                if let Some(x) = train.intersection(&val).next() {
                    return Err(Error::Conflict(format!("plot {x} is in both train_ids and val_ids")));
                }
                for id in train.iter().chain(&val) {
                    self.plot(id)?;
                    if self.label(id) == PlotLabel::Unlabeled {
                        return Err(Error::Conflict(format!("plot {id} must be labeled before drafting")));
                    }
                }
                self.drafts.insert(d.class.clone(), d.clone());
            }
            AuditAction::Attach { model_file, .. } => {
                let model = load_recognizer(&self.root.join("models").join(model_file))?;
                self.cascade.push(model)?;
                self.model_files.push(model_file.clone());
            }
        }
        Ok(())
    }

    /// Applies an action and appends it to the audit log. Actions that
    /// change nothing are accepted and not logged.
    fn record(&mut self, action: AuditAction) -> Result<bool> {
        let before = (self.labels.clone(), self.drafts.clone(), self.model_files.len());
        self.apply(&action)?;
        if (self.labels.clone(), self.drafts.clone(), self.model_files.len()) == before {
            return Ok(false);
        }
        let record = AuditRecord {
            seq: self.audit.len() as u64 + 1,
            action,
        };
        let log = self.root.join("audit.log");
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&log)
            .map_err(|e| Error::io(&log, e))?;
        writeln!(f, "{}", serde_json::to_string(&record)?).map_err(|e| Error::io(&log, e))?;
        self.audit.push(record);
        self.persist()?;
        Ok(true)
    }

    fn persist(&self) -> Result<()> {
        write_json(&self.root.join("labels.json"), &self.labels)?;
        write_json(&self.root.join("drafts.json"), &self.drafts)?;
        write_json(&self.root.join("cascade.json"), &self.model_files)
    }

    /// Sets a label (idempotent). Returns whether anything changed.
    pub fn label_plot(&mut self, id: &str, label: PlotLabel) -> Result<bool> {
        self.record(AuditAction::Label {
            plot_id: id.to_string(),
            label,
        })
    }

    /// Records the training/validation draft for `class`, replacing any
    /// earlier draft for it.
    pub fn draft_sets(&mut self, class: &str, train_ids: Vec<String>, val_ids: Vec<String>) -> Result<&DraftSet> {
        self.record(AuditAction::Draft(DraftSet {
            class: class.to_string(),
            train_ids,
            val_ids,
        }))?;
        Ok(&self.drafts[class])
    }

    /// Draft images for `class`: (train, validation).
    pub fn draft_images(&self, class: &str) -> Result<(Vec<PlotImage>, Vec<PlotImage>)> {
        let d = self.drafts.get(class).ok_or_else(|| Error::Unknown {
            what: "draft class",
            name: class.to_string(),
        })?;
        let get = |ids: &[String]| ids.iter().map(|id| self.plot(id).cloned()).collect::<Result<Vec<_>>>();
        Ok((get(&d.train_ids)?, get(&d.val_ids)?))
    }

    /// Stores the model's checkpoint and appends it to the cascade tail.
    pub fn attach(&mut self, model: RecognizerModel) -> Result<usize> {
        if model.side() != self.cascade.side() {
            return Err(Error::Geometry {
                expected: self.cascade.side(),
                got: model.side(),
            });
        }
        let kind = match model.kind() {
            RecognizerKind::NonInteresting => "ni",
            RecognizerKind::Interesting => "int",
        };
        let class: String = model
            .class_name()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
            .collect();
        let file = format!("{:03}-{kind}-{class}.psck", self.cascade.len());
        save_checkpoint(&Checkpoint::Recognizer(model.clone()), &self.root.join("models").join(&file))?;
        self.record(AuditAction::Attach {
            model_file: file,
            class: model.class_name().to_string(),
        })?;
        Ok(self.cascade.len())
    }

    /// Scans every plot with the attached cascade and stores the partition.
    pub fn scan(&mut self) -> Result<&ScanPartition> {
        let plots: Vec<(String, PlotImage)> =
            self.plot_ids.iter().map(|id| (id.clone(), self.plots[id].clone())).collect();
        let partition = self.cascade.scan(&plots)?;
        write_json(&self.root.join("partition.json"), &partition)?;
        self.partition = Some(partition);
        Ok(self.partition.as_ref().unwrap())
    }
}
