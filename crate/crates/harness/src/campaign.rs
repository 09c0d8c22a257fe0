use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use etcomm::maddpg::{AgentLearner, EpisodeLog, Trainer, TrainerState};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const CURVES_FILE: &str = "curves.csv";
pub const LOG_FILE: &str = "log.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const DIVERGED_DIR: &str = "diverged";

/// One row of `curves.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    #[serde(rename = "E")]
    pub performance: f64,
    #[serde(rename = "C")]
    pub comm_cost: u64,
    pub reward: f64,
}

impl From<&EpisodeLog> for CurveRow {
    fn from(log: &EpisodeLog) -> Self {
        Self {
            episode: log.episode,
            performance: log.performance,
            comm_cost: log.comm_cost,
            reward: log.mean_reward,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub scenario: String,
    pub schedule: String,
    pub episodes_total: usize,
    pub episodes_completed: usize,
    /// Episode count stored in `checkpoint/`.
    pub checkpoint_episode: usize,
    pub complete: bool,
    pub n_agents: usize,
}

/// Trainer bookkeeping stored next to the per-agent checkpoints.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrainerMeta {
    episode: usize,
    total_steps: usize,
    noise_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop after this many episodes in the current invocation, leaving a
    /// resumable run behind.
    pub episode_budget: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub dir: PathBuf,
    pub episodes_completed: usize,
    pub complete: bool,
    pub resumed_from: Option<usize>,
}

pub fn run_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed-{seed}"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

/// Writes learners and trainer bookkeeping into `dir`.
pub fn save_state(dir: &Path, state: &TrainerState) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for learner in &state.learners {
        write_json(&dir.join(format!("agent-{}.json", learner.index)), learner)?;
    }
    write_json(
        &dir.join("trainer.json"),
        &TrainerMeta {
            episode: state.episode,
            total_steps: state.total_steps,
            noise_rng: state.noise_rng.clone(),
            sample_rng: state.sample_rng.clone(),
        },
    )
}

/// Per-agent learners from a checkpoint directory, in agent order.
pub fn load_learners(dir: &Path) -> Result<Vec<AgentLearner>> {
    let mut learners = Vec::new();
    loop {
        let path = dir.join(format!("agent-{}.json", learners.len()));
        if !path.exists() {
            break;
        }
        let learner: AgentLearner = read_json(&path)?;
        if learner.index != learners.len() {
            bail!("{} holds agent {}", path.display(), learner.index);
        }
        learners.push(learner);
    }
    if learners.is_empty() {
        bail!("no agent checkpoints in {}", dir.display());
    }
    Ok(learners)
}

fn load_state(dir: &Path) -> Result<TrainerState> {
    let meta: TrainerMeta = read_json(&dir.join("trainer.json"))?;
    Ok(TrainerState {
        episode: meta.episode,
        total_steps: meta.total_steps,
        learners: load_learners(dir)?,
        noise_rng: meta.noise_rng,
        sample_rng: meta.sample_rng,
    })
}

/// Keeps the first `keep` lines of a text file (header lines included by the caller).
fn truncate_lines(path: &Path, keep: usize) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let reader = BufReader::new(File::open(path)?);
    let mut kept = String::new();
    for line in reader.lines().take(keep) {
        kept.push_str(&line?);
        kept.push('\n');
    }
    write_atomic(path, kept.as_bytes())
}

/// Trains one run, resuming from its checkpoint when one exists.
pub fn run_single(cfg: &ExperimentConfig, seed: u64, options: &RunOptions) -> Result<RunSummary> {
    let dir = run_dir(&cfg.output_dir, seed);
    fs::create_dir_all(&dir).with_context(|| format!("creating run directory {}", dir.display()))?;
    let snapshot_path = dir.join(CONFIG_FILE);
    if snapshot_path.exists() {
        let previous = ExperimentConfig::load(&snapshot_path)?;
        let comparable = ExperimentConfig {
            output_dir: cfg.output_dir.clone(),
            ..previous
        };
        if &comparable != cfg {
            bail!(
                "{} was produced by a different configuration; use a fresh output directory",
                dir.display()
            );
        }
    } else {
        write_atomic(&snapshot_path, cfg.to_toml()?.as_bytes())?;
    }

    let mut trainer = Trainer::new(cfg.env.clone(), cfg.train.clone(), cfg.schedule, seed)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let checkpoint = dir.join(CHECKPOINT_DIR);
    let mut resumed_from = None;
    if manifest_path.exists() {
        let manifest = read_manifest(&dir)?;
        if manifest.complete {
            return Ok(RunSummary {
                seed,
                dir,
                episodes_completed: manifest.episodes_completed,
                complete: true,
                resumed_from: None,
            });
        }
        if manifest.checkpoint_episode > 0 {
            trainer.restore(load_state(&checkpoint)?)?;
            resumed_from = Some(trainer.episode());
        }
    }
    let done = trainer.episode();
    truncate_lines(&dir.join(CURVES_FILE), done + 1)?;
    truncate_lines(&dir.join(LOG_FILE), done)?;

    let curves_path = dir.join(CURVES_FILE);
    let write_header = done == 0 || !curves_path.exists();
    if write_header {
        File::create(&curves_path)?;
    }
    let mut curves = csv::WriterBuilder::new()
        .has_headers(write_header)
        .from_writer(OpenOptions::new().append(true).open(&curves_path)?);
    let mut log = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(LOG_FILE))?,
    );

    let manifest_for = |t: &Trainer, checkpoint_episode: usize| Manifest {
        seed,
        scenario: cfg.scenario.to_string(),
        schedule: cfg.schedule.label(),
        episodes_total: cfg.train.episodes,
        episodes_completed: t.episode(),
        checkpoint_episode,
        complete: t.is_finished(),
        n_agents: cfg.env.n_agents,
    };

    let mut ran = 0;
    while !trainer.is_finished() && options.episode_budget.is_none_or(|b| ran < b) {
        let entry = match trainer.run_episode() {
            Ok(entry) => entry,
            Err(e) => {
                let dump = dir.join(DIVERGED_DIR);
                save_state(&dump, &trainer.state())?;
                write_atomic(&dump.join("error.txt"), e.to_string().as_bytes())?;
                return Err(e).with_context(|| {
                    format!("seed {seed}: training stopped, state dumped to {}", dump.display())
                });
            }
        };
        ran += 1;
        curves.serialize(CurveRow::from(&entry))?;
        serde_json::to_writer(&mut log, &entry)?;
        log.write_all(b"\n")?;
        if trainer.episode() % cfg.checkpoint_every == 0 || trainer.is_finished() {
            curves.flush()?;
            log.flush()?;
            save_state(&checkpoint, &trainer.state())?;
            write_json(&manifest_path, &manifest_for(&trainer, trainer.episode()))?;
        }
    }
    curves.flush()?;
    log.flush()?;
    let checkpoint_episode = if manifest_path.exists() {
        read_manifest(&dir)?.checkpoint_episode
    } else {
        0
    };
    write_json(&manifest_path, &manifest_for(&trainer, checkpoint_episode))?;
    Ok(RunSummary {
        seed,
        dir,
        episodes_completed: trainer.episode(),
        complete: trainer.is_finished(),
        resumed_from,
    })
}

/// Trains every seed of the campaign in turn; each run writes only to its
/// own directory.
pub fn run_training_campaign(cfg: &ExperimentConfig, options: &RunOptions) -> Result<Vec<RunSummary>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    cfg.seeds
        .iter()
        .map(|&seed| run_single(cfg, seed, options))
        .collect()
}

pub fn read_curves(dir: &Path) -> Result<Vec<CurveRow>> {
    let path = dir.join(CURVES_FILE);
    let mut reader = csv::Reader::from_path(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<CurveRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Mean, minimum and maximum of a per-episode quantity across runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub episode: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregates runs episode by episode over the episodes all runs share.
pub fn aggregate<F: Fn(&CurveRow) -> f64>(runs: &[Vec<CurveRow>], value: F) -> Vec<Band> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|k| {
            let vals: Vec<f64> = runs.iter().map(|r| value(&r[k])).collect();
            Band {
                episode: k,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(e: usize, p: f64) -> CurveRow {
        CurveRow {
            episode: e,
            performance: p,
            comm_cost: 0,
            reward: 0.0,
        }
    }

    #[test]
    fn aggregate_reports_mean_and_extremes() {
        let runs = vec![
            vec![row(0, -1.0), row(1, -2.0)],
            vec![row(0, -3.0), row(1, -4.0), row(2, 0.0)],
        ];
        let bands = aggregate(&runs, |r| r.performance);
        assert_eq!(bands.len(), 2);
        assert_eq!(bands[0].mean, -2.0);
        assert_eq!(bands[1].min, -4.0);
        assert_eq!(bands[1].max, -2.0);
    }

    #[test]
    fn truncate_keeps_leading_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        fs::write(&p, "a\nb\nc\n").unwrap();
        truncate_lines(&p, 2).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "a\nb\n");
    }
}
