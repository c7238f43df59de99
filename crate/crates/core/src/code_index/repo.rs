//! Where versioned source trees come from.

use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

use super::Changeset;

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("version `{version}` not found: {detail}")]
    UnknownVersion { version: String, detail: String },
    #[error("git {args} failed: {stderr}")]
    Git { args: String, stderr: String },
    #[error("could not run git: {0}")]
    Spawn(#[from] std::io::Error),
    #[error("unexpected `git diff` output: {0}")]
    DiffFormat(String),
}

/// A repository whose versions can be materialized as directory trees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepoSource {
    /// `root/<version_id>/` holds the tree of each version.
    Snapshots { root: PathBuf },
    /// Versions are git revisions, checked out into one detached worktree.
    Git { repo: PathBuf, worktree: PathBuf },
}

impl RepoSource {
    /// Git when `repo` contains `.git`, snapshot directories otherwise.
    /// `work_dir` hosts the git worktree.
    pub fn detect(repo: &Path, work_dir: &Path) -> Self {
        if repo.join(".git").exists() {
            RepoSource::Git { repo: repo.to_path_buf(), worktree: work_dir.join("worktree") }
        } else {
            RepoSource::Snapshots { root: repo.to_path_buf() }
        }
    }

    /// Makes `version` available on disk and returns its root.
    pub fn checkout(&self, version: &str) -> Result<PathBuf, RepoError> {
        match self {
            RepoSource::Snapshots { root } => {
                let dir = root.join(version);
                if dir.is_dir() {
                    Ok(dir)
                } else {
                    Err(RepoError::UnknownVersion {
                        version: version.to_string(),
                        detail: format!("{} is not a directory", dir.display()),
                    })
                }
            }
            RepoSource::Git { repo, worktree } => {
                if worktree.join(".git").exists() {
                    git(worktree, &["checkout", "--quiet", "--force", "--detach", version])?;
                } else {
                    let wt = worktree.to_string_lossy().to_string();
                    git(repo, &["worktree", "add", "--quiet", "--force", "--detach", &wt, version])?;
                }
                Ok(worktree.clone())
            }
        }
    }

    /// Changeset between two versions when the source can report it
    /// directly (git); `None` for snapshots, where callers diff digests.
    pub fn changeset(&self, from: &str, to: &str) -> Result<Option<Changeset>, RepoError> {
        match self {
            RepoSource::Snapshots { .. } => Ok(None),
            RepoSource::Git { repo, .. } => {
                let out = git(repo, &["diff", "--name-status", "-M", "-z", from, to])?;
                parse_name_status(&out).map(Some)
            }
        }
    }
}

fn git(dir: &Path, args: &[&str]) -> Result<String, RepoError> {
    let out = Command::new("git").arg("-C").arg(dir).args(args).output()?;
    if !out.status.success() {
        return Err(RepoError::Git {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Parses `git diff --name-status -M -z` output.
fn parse_name_status(out: &str) -> Result<Changeset, RepoError> {
    let mut cs = Changeset::default();
    let mut fields = out.split('\0').filter(|f| !f.is_empty());
    let next_path = |status: &str, fields: &mut dyn Iterator<Item = &str>| {
        fields.next().map(str::to_string).ok_or_else(|| RepoError::DiffFormat(format!("missing path after {status}")))
    };
    while let Some(status) = fields.next() {
        match status.chars().next() {
            Some('A') | Some('C') => {
                // copies leave the source untouched
                if status.starts_with('C') {
                    next_path(status, &mut fields)?;
                }
                cs.added.insert(next_path(status, &mut fields)?);
            }
            Some('M') | Some('T') => {
                cs.modified.insert(next_path(status, &mut fields)?);
            }
            Some('D') => {
                cs.deleted.insert(next_path(status, &mut fields)?);
            }
            Some('R') => {
                let old = next_path(status, &mut fields)?;
                let new = next_path(status, &mut fields)?;
                cs.renamed.push((old, new));
            }
            _ => return Err(RepoError::DiffFormat(status.to_string())),
        }
    }
    Ok(cs)
}
