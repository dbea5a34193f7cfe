use std::collections::BTreeMap;
use std::fs;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{PipelineError, Result};
use crate::layout::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Classify,
    Evaluate,
    Trends,
    Similarity,
}

impl JobKind {
    pub fn parse(s: &str) -> Option<JobKind> {
        match s {
            "classify" => Some(JobKind::Classify),
            "evaluate" => Some(JobKind::Evaluate),
            "trends" => Some(JobKind::Trends),
            "similarity" => Some(JobKind::Similarity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    /// queued → running → {done, failed}; a queued job may also fail
    /// directly (e.g. interrupted by a restart).
    pub fn can_move_to(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Queued, JobStatus::Running)
                | (JobStatus::Queued, JobStatus::Failed)
                | (JobStatus::Running, JobStatus::Done)
                | (JobStatus::Running, JobStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    pub params: Value,
    pub steps_done: u32,
    pub steps_total: u32,
    pub created_at: String,
    pub started_at: Option<String>,
    pub finished_at: Option<String>,
    pub result: Option<Value>,
    pub error: Option<PipelineError>,
    pub manifest: Option<String>,
    pub log_path: String,
}

/// Job registry persisted as one JSON file per job.
pub struct JobTable {
    layout: Layout,
    jobs: Mutex<BTreeMap<String, Job>>,
    next: AtomicU64,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

impl JobTable {
    /// Loads persisted jobs. Jobs left queued or running by a previous
    /// process are marked failed.
    pub fn open(layout: Layout) -> Result<Arc<Self>> {
        let dir = layout.jobs();
        fs::create_dir_all(&dir)?;
        let mut jobs = BTreeMap::new();
        let mut max_id = 0;
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let bytes = fs::read(&path)?;
            let mut job: Job = serde_json::from_slice(&bytes)
                .map_err(|e| PipelineError::internal(format!("corrupt job file {}: {e}", path.display())))?;
            if let Some(n) = job.id.strip_prefix("job-").and_then(|n| n.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            if matches!(job.status, JobStatus::Queued | JobStatus::Running) {
                job.status = JobStatus::Failed;
                job.finished_at = Some(now());
                job.error = Some(PipelineError::internal("interrupted by service restart"));
                stance_core::fsutil::write_atomic(&path, &serde_json::to_vec_pretty(&job)?)?;
            }
            jobs.insert(job.id.clone(), job);
        }
        Ok(Arc::new(JobTable {
            layout,
            jobs: Mutex::new(jobs),
            next: AtomicU64::new(max_id + 1),
        }))
    }

    fn persist(&self, job: &Job) -> Result<()> {
        let path = self.layout.jobs().join(format!("{}.json", job.id));
        stance_core::fsutil::write_atomic(&path, &serde_json::to_vec_pretty(job)?)?;
        Ok(())
    }

    pub fn create(&self, kind: JobKind, params: Value) -> Result<Job> {
        let id = format!("job-{:06}", self.next.fetch_add(1, Ordering::SeqCst));
        let job = Job {
            log_path: self.layout.jobs().join(format!("{id}.json")).to_string_lossy().into_owned(),
            id: id.clone(),
            kind,
            status: JobStatus::Queued,
            params,
            steps_done: 0,
            steps_total: 1,
            created_at: now(),
            started_at: None,
            finished_at: None,
            result: None,
            error: None,
            manifest: None,
        };
        self.persist(&job)?;
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(id, job.clone());
        Ok(job)
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    /// Applies a status transition; illegal transitions are ignored and
    /// reported as false.
    pub fn transition(&self, id: &str, next: JobStatus, f: impl FnOnce(&mut Job)) -> bool {
        let mut jobs = self.jobs.lock().unwrap_or_else(|e| e.into_inner());
        let Some(job) = jobs.get_mut(id) else { return false };
        if !job.status.can_move_to(next) {
            return false;
        }
        job.status = next;
        match next {
            JobStatus::Running => job.started_at = Some(now()),
            JobStatus::Done | JobStatus::Failed => job.finished_at = Some(now()),
            JobStatus::Queued => {}
        }
        f(job);
        if let Err(e) = self.persist(job) {
            tracing::warn!(job = id, "could not persist job state: {e}");
        }
        true
    }
}
