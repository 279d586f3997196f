use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::store::Store;
use crate::{Error, Result};

pub const JOBS_SCHEMA: &str = "euleresg/jobs/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    /// queued → running → done | failed, nothing else.
    pub fn can_become(self, next: JobStatus) -> bool {
        matches!(
            (self, next),
            (JobStatus::Queued, JobStatus::Running) | (JobStatus::Running, JobStatus::Done) | (JobStatus::Running, JobStatus::Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisJob {
    pub job_id: String,
    pub report_id: String,
    pub slugs: Vec<String>,
    pub status: JobStatus,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub started_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub finished_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub error: Option<String>,
    /// Config overrides applied to this job, as key/value pairs.
    #[serde(default)]
    pub overrides: Vec<(String, String)>,
}

#[derive(Serialize, Deserialize)]
struct JobsFile {
    schema: String,
    jobs: Vec<AnalysisJob>,
}

pub fn new_job_id() -> String {
    let bytes: [u8; 8] = rand::rng().random();
    hex::encode(bytes)
}

/// Job table, persisted to `jobs.json` after every change. A single mutex
/// makes it single-writer.
pub struct JobBoard {
    jobs: Mutex<Vec<AnalysisJob>>,
    store: Store,
}

impl JobBoard {
    /// Load persisted jobs. Jobs interrupted mid-run are marked failed;
    /// queued jobs are returned for re-submission.
    pub fn load(store: Store) -> Result<(Self, Vec<AnalysisJob>)> {
        let mut jobs = match std::fs::read(store.jobs_path()) {
            Ok(raw) => {
                let file: JobsFile = serde_json::from_slice(&raw)?;
                if file.schema != JOBS_SCHEMA {
                    return Err(Error::Invalid(format!("jobs.json has schema {}", file.schema)));
                }
                file.jobs
            }
            Err(_) => Vec::new(),
        };
        for j in &mut jobs {
            if j.status == JobStatus::Running {
                j.status = JobStatus::Failed;
                j.finished_at = Some(Utc::now());
                j.error = Some("service stopped while the job was running".into());
            }
        }
        let pending = jobs.iter().filter(|j| j.status == JobStatus::Queued).cloned().collect();
        let board = Self {
            jobs: Mutex::new(jobs),
            store,
        };
        board.persist(&board.jobs.lock().unwrap())?;
        Ok((board, pending))
    }

    fn persist(&self, jobs: &[AnalysisJob]) -> Result<()> {
        let file = JobsFile {
            schema: JOBS_SCHEMA.to_string(),
            jobs: jobs.to_vec(),
        };
        self.store.write_jobs(&serde_json::to_vec_pretty(&file)?)
    }

    pub fn create(&self, report_id: &str, slugs: Vec<String>, overrides: Vec<(String, String)>) -> Result<AnalysisJob> {
        let job = AnalysisJob {
            job_id: new_job_id(),
            report_id: report_id.to_string(),
            slugs,
            status: JobStatus::Queued,
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
            error: None,
            overrides,
        };
        let mut jobs = self.jobs.lock().unwrap();
        jobs.push(job.clone());
        self.persist(&jobs)?;
        Ok(job)
    }

    pub fn get(&self, job_id: &str) -> Option<AnalysisJob> {
        self.jobs.lock().unwrap().iter().find(|j| j.job_id == job_id).cloned()
    }

    pub fn list(&self) -> Vec<AnalysisJob> {
        self.jobs.lock().unwrap().clone()
    }

    /// Move a job to `next`; illegal transitions are rejected.
    pub fn transition(&self, job_id: &str, next: JobStatus, error: Option<String>) -> Result<AnalysisJob> {
        let mut jobs = self.jobs.lock().unwrap();
        let job = jobs
            .iter_mut()
            .find(|j| j.job_id == job_id)
            .ok_or_else(|| Error::NotFound(format!("job {job_id}")))?;
        if !job.status.can_become(next) {
            return Err(Error::Invalid(format!("job {job_id}: illegal transition {:?} -> {next:?}", job.status)));
        }
        job.status = next;
        match next {
            JobStatus::Running => job.started_at = Some(Utc::now()),
            _ => job.finished_at = Some(Utc::now()),
        }
        job.error = error;
        let out = job.clone();
        self.persist(&jobs)?;
        Ok(out)
    }
}
