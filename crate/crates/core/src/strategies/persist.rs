//! Versioned on-disk form of a [`Learner`]: `manifest.json` plus one raw
//! little-endian blob per parameter array.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ImportanceState, Learner, StrategyConfig, StrategyState};
use crate::error::{Error, Result};
use crate::nn::{decode_f64s, encode_f64s, ParamVector};
use crate::node::{DemonstrationSet, Trajectory};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const REPLAY: &str = "replay.json";

#[derive(Debug, Serialize, Deserialize)]
struct BlobEntry {
    file: String,
    length: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImportanceMeta {
    c: f64,
    xi: f64,
    steps_observed: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    variant: String,
    config: StrategyConfig,
    tasks_learned: usize,
    embeddings: Vec<Vec<f64>>,
    blobs: BTreeMap<String, BlobEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    importance: Option<ImportanceMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoredTask {
    name: String,
    recording_frequency: Option<f64>,
    timestamps: Vec<f64>,
    demos: Vec<Vec<Vec<f64>>>,
}

struct BlobWriter<'a> {
    dir: &'a Path,
    entries: BTreeMap<String, BlobEntry>,
}

impl BlobWriter<'_> {
    fn put(&mut self, name: &str, values: &[f64]) -> Result<()> {
        let file = format!("{name}.bin");
        fs::write(self.dir.join(&file), encode_f64s(values))?;
        self.entries.insert(
            name.to_string(),
            BlobEntry {
                file,
                length: values.len(),
            },
        );
        Ok(())
    }
}

fn read_blob(dir: &Path, blobs: &BTreeMap<String, BlobEntry>, name: &str) -> Result<Vec<f64>> {
    let entry = blobs
        .get(name)
        .ok_or_else(|| Error::Format(format!("manifest lacks blob '{name}'")))?;
    let values = decode_f64s(&fs::read(dir.join(&entry.file))?)?;
    if values.len() != entry.length {
        return Err(Error::Format(format!(
            "blob '{name}' holds {} values, manifest says {}",
            values.len(),
            entry.length
        )));
    }
    Ok(values)
}

impl Learner {
    /// Writes the learner into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut blobs = BlobWriter {
            dir,
            entries: BTreeMap::new(),
        };
        let mut importance_meta = None;
        let (variant, embeddings) = match &self.state {
            StrategyState::Sg { nodes } => {
                for (i, n) in nodes.iter().enumerate() {
                    blobs.put(&format!("node-{i}"), n.as_slice())?;
                }
                ("sg", Vec::new())
            }
            StrategyState::Shared {
                theta,
                embeddings,
                importance,
            } => {
                blobs.put("theta", theta.as_slice())?;
                if let Some(imp) = importance {
                    blobs.put("omega", &imp.omega)?;
                    blobs.put("omega_running", &imp.omega_running)?;
                    blobs.put("theta_snapshot", &imp.theta_snapshot)?;
                    importance_meta = Some(ImportanceMeta {
                        c: imp.c,
                        xi: imp.xi,
                        steps_observed: imp.steps_observed,
                    });
                }
                ("shared", embeddings.clone())
            }
            StrategyState::Replay {
                theta,
                embeddings,
                buffer,
            } => {
                blobs.put("theta", theta.as_slice())?;
                let stored: Vec<StoredTask> = buffer
                    .iter()
                    .map(|set| StoredTask {
                        name: set.name.clone(),
                        recording_frequency: set.recording_frequency,
                        timestamps: set.timestamps().to_vec(),
                        demos: set.demos().iter().map(Trajectory::rows).collect(),
                    })
                    .collect();
                fs::write(dir.join(REPLAY), serde_json::to_string(&stored)?)?;
                ("replay", embeddings.clone())
            }
            StrategyState::Hyper { h, embeddings } => {
                blobs.put("h", h.as_slice())?;
                ("hyper", embeddings.clone())
            }
        };
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            variant: variant.into(),
            config: self.config.clone(),
            tasks_learned: self.tasks_learned,
            embeddings,
            blobs: blobs.entries,
            importance: importance_meta,
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    /// Reads a learner written by [`Learner::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported learner format version {} (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        manifest.config.validate()?;
        let blobs = &manifest.blobs;
        let state = match manifest.variant.as_str() {
            "sg" => StrategyState::Sg {
                nodes: (0..manifest.tasks_learned)
                    .map(|i| read_blob(dir, blobs, &format!("node-{i}")).map(ParamVector::from_raw))
                    .collect::<Result<_>>()?,
            },
            "shared" => {
                let theta = read_blob(dir, blobs, "theta")?;
                let importance = match &manifest.importance {
                    Some(meta) => Some(ImportanceState {
                        omega: read_blob(dir, blobs, "omega")?,
                        omega_running: read_blob(dir, blobs, "omega_running")?,
                        theta_snapshot: read_blob(dir, blobs, "theta_snapshot")?,
                        c: meta.c,
                        xi: meta.xi,
                        steps_observed: meta.steps_observed,
                    }),
                    None => None,
                };
                StrategyState::Shared {
                    theta: ParamVector::from_raw(theta),
                    embeddings: manifest.embeddings.clone(),
                    importance,
                }
            }
            "replay" => {
                let stored: Vec<StoredTask> = serde_json::from_str(&fs::read_to_string(dir.join(REPLAY))?)?;
                let buffer = stored
                    .into_iter()
                    .map(|task| {
                        let demos = task
                            .demos
                            .iter()
                            .map(|rows| Trajectory::from_rows(rows, task.timestamps.clone()))
                            .collect::<Result<Vec<_>>>()?;
                        DemonstrationSet::new(task.name, demos, task.recording_frequency)
                    })
                    .collect::<Result<Vec<_>>>()?;
                StrategyState::Replay {
                    theta: ParamVector::from_raw(read_blob(dir, blobs, "theta")?),
                    embeddings: manifest.embeddings.clone(),
                    buffer,
                }
            }
            "hyper" => StrategyState::Hyper {
                h: ParamVector::from_raw(read_blob(dir, blobs, "h")?),
                embeddings: manifest.embeddings.clone(),
            },
            other => return Err(Error::Format(format!("unknown learner variant '{other}'"))),
        };
        let learner = Learner::from_parts(manifest.config, state, manifest.tasks_learned);
        let expected = Learner::new(learner.config.clone())?;
        if std::mem::discriminant(&expected.state) != std::mem::discriminant(&learner.state) {
            return Err(Error::Format("learner variant does not match its configured method".into()));
        }
        Ok(learner)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{line_task, tiny};
    use super::super::Method;
    use super::*;

    #[test]
    fn save_load_roundtrip_for_every_strategy() {
        for method in Method::ALL {
            let mut learner = Learner::new(tiny(method)).unwrap();
            learner.learn_task(&line_task(1.0, 2)).unwrap();
            learner.learn_task(&line_task(-0.5, 2)).unwrap();
            let dir = tempfile::tempdir().unwrap();
            learner.save(dir.path()).unwrap();
            let back = Learner::load(dir.path()).unwrap();
            assert_eq!(back, learner, "{method}");
        }
    }

    #[test]
    fn reloaded_learner_continues_identically() {
        let mut learner = Learner::new(tiny(Method::Si)).unwrap();
        learner.learn_task(&line_task(1.0, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        learner.save(dir.path()).unwrap();
        let mut back = Learner::load(dir.path()).unwrap();
        learner.learn_task(&line_task(0.2, 2)).unwrap();
        back.learn_task(&line_task(0.2, 2)).unwrap();
        assert_eq!(back, learner);
    }

    #[test]
    fn future_format_is_rejected() {
        let learner = Learner::new(tiny(Method::Ft)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        learner.save(dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 99");
        fs::write(&path, text).unwrap();
        assert!(matches!(Learner::load(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let learner = Learner::new(tiny(Method::Hn)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        learner.save(dir.path()).unwrap();
        let blob = dir.path().join("h.bin");
        let bytes = fs::read(&blob).unwrap();
        fs::write(&blob, &bytes[..bytes.len() - 8]).unwrap();
        assert!(Learner::load(dir.path()).is_err());
    }
}
