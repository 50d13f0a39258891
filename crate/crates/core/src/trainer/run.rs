use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{arena_evaluate, run_episode, stage_gate, ReplayBuffers, TrainConfig};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::net::{save_nets, Learner, PolicyNet};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const NETS_FILE: &str = "nets.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ARENA_FILE: &str = "arena.csv";
pub const SEARCH_FILE: &str = "search.csv";
pub const CONFIG_FILE: &str = "config.toml";

const METRICS_HEADER: &str =
    "episode,stage,learner_obj,competitor_obj,z,policy_loss,value_loss,soc_per_customer,wall_time";
const ARENA_HEADER: &str = "episode,arena_sum,updated";
const SEARCH_HEADER: &str =
    "episode,learner_moves,learner_sims,competitor_moves,competitor_sims,mu_is_theta,best_version,best_fingerprint";

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub format_version: u32,
    pub config: TrainConfig,
    pub learner: Learner,
    pub best: PolicyNet,
    /// Number of arena updates so far.
    pub best_version: u64,
    pub buffers: ReplayBuffers,
    /// Next episode to run.
    pub episode: usize,
    pub stage: u8,
    pub rng: ChaCha8Rng,
    pub arena_seeds: Vec<u64>,
    /// Seconds spent before the last checkpoint.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub episodes_run: usize,
    pub next_episode: usize,
    pub stage: u8,
    pub best_version: u64,
    pub interrupted: bool,
}

/// FNV-1a over the bit patterns of all parameters.
pub fn fingerprint(net: &PolicyNet) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in &net.params {
        for v in &t.data {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

fn fmt_f(x: f64) -> String {
    format!("{x}")
}

pub struct Trainer {
    state: TrainerState,
    run_dir: PathBuf,
    arena: Vec<Env>,
    started: Instant,
}

impl Trainer {
    /// Starts a fresh run. Existing logs in `run_dir` are replaced.
    pub fn new(config: TrainConfig, run_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let run_dir = run_dir.into();
        fs::create_dir_all(&run_dir).map_err(|e| Error::io(format!("creating {}", run_dir.display()), e))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let learner = Learner::new(config.net.clone(), rng.random())?;
        let arena_seeds: Vec<u64> = (0..config.arena_set_size).map(|_| rng.random()).collect();
        let state = TrainerState {
            format_version: CHECKPOINT_VERSION,
            best: learner.policy.clone(),
            learner,
            best_version: 0,
            buffers: ReplayBuffers::default(),
            episode: 0,
            stage: stage_gate(0, &config),
            rng,
            arena_seeds,
            elapsed: 0.0,
            config,
        };
        let config_text = state.config.to_toml()?;
        write_file(&run_dir.join(CONFIG_FILE), &config_text)?;
        for (file, header) in [
            (METRICS_FILE, METRICS_HEADER),
            (ARENA_FILE, ARENA_HEADER),
            (SEARCH_FILE, SEARCH_HEADER),
        ] {
            write_file(&run_dir.join(file), &format!("{header}\n"))?;
        }
        let arena = build_arena(&state)?;
        Ok(Self {
            state,
            run_dir,
            arena,
            started: Instant::now(),
        })
    }

    /// Continues from the checkpoint in `run_dir`. With `config`, it must
    /// describe the same run; its `total_episodes`, `stop_after` and
    /// `checkpoint_interval` replace the stored ones.
    pub fn resume(run_dir: impl Into<PathBuf>, config: Option<TrainConfig>) -> Result<Self> {
        let run_dir = run_dir.into();
        let mut state = load_checkpoint(run_dir.join(CHECKPOINT_FILE))?;
        match config {
            Some(cfg) => {
                cfg.validate()?;
                if !cfg.same_run(&state.config) {
                    return Err(Error::ConfigMismatch(
                        "config differs from the checkpointed run".into(),
                    ));
                }
                state.config = cfg;
            }
            None => state.config.stop_after = None,
        }
        if state.config.stop_after.is_some_and(|s| s <= state.episode) {
            state.config.stop_after = None;
        }
        write_file(&run_dir.join(CONFIG_FILE), &state.config.to_toml()?)?;
        let keep = state.episode;
        for file in [METRICS_FILE, ARENA_FILE, SEARCH_FILE] {
            truncate_log(&run_dir.join(file), keep)?;
        }
        let arena = build_arena(&state)?;
        Ok(Self {
            state,
            run_dir,
            arena,
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    fn elapsed(&self) -> f64 {
        self.state.elapsed + self.started.elapsed().as_secs_f64()
    }

    fn checkpoint(&mut self) -> Result<()> {
        let mut snapshot = self.state.clone();
        snapshot.elapsed = self.elapsed();
        save_checkpoint(self.run_dir.join(CHECKPOINT_FILE), &snapshot)?;
        save_nets(
            self.run_dir.join(NETS_FILE),
            &self.state.learner.policy,
            &self.state.learner.value,
        )
    }

    /// Runs episodes until `total_episodes` or `stop_after`.
    pub fn run(&mut self) -> Result<TrainSummary> {
        let start_episode = self.state.episode;
        let total = self.state.config.total_episodes;
        let stop = self.state.config.stop_after.unwrap_or(total).min(total);
        while self.state.episode < stop {
            let episode = self.state.episode;
            self.run_one(episode).map_err(|e| Error::Episode {
                episode,
                source: Box::new(e),
            })?;
            self.state.episode += 1;
            let done = self.state.episode;
            if done % self.state.config.checkpoint_interval == 0 || done == stop {
                self.checkpoint()?;
            }
        }
        if self.state.episode == start_episode {
            self.checkpoint()?;
        }
        Ok(TrainSummary {
            episodes_run: self.state.episode - start_episode,
            next_episode: self.state.episode,
            stage: self.state.stage,
            best_version: self.state.best_version,
            interrupted: self.state.episode < total,
        })
    }

    fn run_one(&mut self, episode: usize) -> Result<()> {
        let st = &mut self.state;
        let cfg = st.config.clone();
        st.stage = st.stage.max(stage_gate(episode, &cfg));
        let instance_seed: u64 = st.rng.random();
        let env = cfg.problem.make_env(instance_seed)?;
        let record = run_episode(
            &env,
            &st.learner.policy,
            &st.best,
            &st.learner.value,
            &cfg,
            st.stage,
            &mut st.rng,
        )?;
        let n_targets = env.n_targets() as f64;
        let metrics_prefix = (
            record.learner_objective(),
            record.competitor_objective(),
            record.learner_z(),
            env.evrp().map(|_| record.learner_energy() / n_targets),
        );
        let search_row = format!(
            "{},{},{},{},{},{}",
            episode,
            record.learner_moves,
            record.learner_sims,
            record.competitor_moves,
            record.competitor_sims,
            u8::from(record.mu_is_theta)
        );
        st.buffers.push(record, &cfg);

        let mut losses = (0.0, 0.0);
        let mut steps = 0usize;
        for _ in 0..cfg.train_steps_per_episode {
            let (pb, vb) = st.buffers.sample(cfg.net.batch_size, &mut st.rng);
            if pb.is_empty() {
                break;
            }
            let (pl, vl) = st.learner.train_step(&pb, &vb)?;
            losses.0 += pl;
            losses.1 += vl;
            steps += 1;
        }
        if steps > 0 {
            losses.0 /= steps as f64;
            losses.1 /= steps as f64;
        }

        if (episode + 1) % cfg.arena_interval == 0 {
            let outcome = arena_evaluate(&st.learner.policy, &st.best, &self.arena)?;
            if outcome.update {
                st.best = st.learner.policy.clone();
                st.best_version += 1;
            }
            append_line(
                &self.run_dir.join(ARENA_FILE),
                &format!("{},{},{}", episode, fmt_f(outcome.sum), u8::from(outcome.update)),
            )?;
        }
        let st = &self.state;
        append_line(
            &self.run_dir.join(SEARCH_FILE),
            &format!("{search_row},{},{}", st.best_version, fingerprint(&st.best)),
        )?;
        let (lo, co, z, soc) = metrics_prefix;
        let wall = if cfg.record_wall_time { self.elapsed() } else { 0.0 };
        append_line(
            &self.run_dir.join(METRICS_FILE),
            &format!(
                "{},{},{},{},{},{},{},{},{}",
                episode,
                st.stage,
                fmt_f(lo),
                fmt_f(co),
                fmt_f(z),
                fmt_f(losses.0),
                fmt_f(losses.1),
                soc.map(fmt_f).unwrap_or_default(),
                fmt_f(wall)
            ),
        )
    }
}

fn build_arena(state: &TrainerState) -> Result<Vec<Env>> {
    state
        .arena_seeds
        .iter()
        .map(|&s| state.config.problem.make_env(s))
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(format!("appending to {}", path.display()), e))
}

/// Drops rows for episodes at or after `keep`.
fn truncate_log(path: &Path, keep: usize) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        let retain = i == 0
            || line
                .split(',')
                .next()
                .and_then(|f| f.parse::<usize>().ok())
                .is_some_and(|e| e < keep);
        if retain {
            out.push_str(line);
            out.push('\n');
        }
    }
    write_file(path, &out)
}

pub fn save_checkpoint(path: impl AsRef<Path>, state: &TrainerState) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    write_file(&tmp, &serde_json::to_string(state)?)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainerState> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let probe: serde_json::Value = serde_json::from_str(&text)?;
    let found = probe
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Contract(format!("{} is not a trainer checkpoint", path.display())))?;
    if found != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::Version {
            found: found as u32,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(serde_json::from_value(probe)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;
    use crate::planner::PlannerConfig;
    use crate::trainer::ProblemConfig;

    fn smoke(episodes: usize) -> TrainConfig {
        TrainConfig {
            total_episodes: episodes,
            stage_switch: 4,
            arena_set_size: 3,
            arena_interval: 3,
            checkpoint_interval: 4,
            record_wall_time: false,
            train_steps_per_episode: 2,
            problem: ProblemConfig::tsp(5),
            planner: PlannerConfig {
                n_simulations: 6,
                m_root: 3,
                ..PlannerConfig::default()
            },
            net: NetConfig {
                embed_dim: 8,
                n_heads: 2,
                n_layers: 1,
                ffn_dim: 8,
                batch_size: 4,
                learning_rate: 1e-3,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn smoke_run_writes_logs_and_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(smoke(10), dir.path()).unwrap();
        let s = t.run().unwrap();
        assert_eq!(s.episodes_run, 10);
        assert!(!s.interrupted);
        let metrics = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(metrics.lines().count(), 11);
        assert_eq!(metrics.lines().next().unwrap(), METRICS_HEADER);
        assert!(dir.path().join(CHECKPOINT_FILE).exists());
        assert!(dir.path().join(NETS_FILE).exists());
        let arena = fs::read_to_string(dir.path().join(ARENA_FILE)).unwrap();
        assert_eq!(arena.lines().count(), 1 + 3);
    }

    #[test]
    fn interrupted_run_resumes_identically() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        Trainer::new(smoke(9), a.path()).unwrap().run().unwrap();
        let cfg = TrainConfig {
            stop_after: Some(5),
            ..smoke(9)
        };
        let s = Trainer::new(cfg, b.path()).unwrap().run().unwrap();
        assert!(s.interrupted);
        let st = load_checkpoint(b.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(st.stage, 2);
        Trainer::resume(b.path(), None).unwrap().run().unwrap();
        for f in [METRICS_FILE, ARENA_FILE, SEARCH_FILE] {
            assert_eq!(
                fs::read_to_string(a.path().join(f)).unwrap(),
                fs::read_to_string(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let ca = load_checkpoint(a.path().join(CHECKPOINT_FILE)).unwrap();
        let cb = load_checkpoint(b.path().join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(ca.learner, cb.learner);
        assert_eq!(ca.buffers, cb.buffers);
    }

    #[test]
    fn checkpoint_version_and_config_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            stop_after: Some(2),
            ..smoke(6)
        };
        Trainer::new(cfg, dir.path()).unwrap().run().unwrap();
        let other = TrainConfig {
            seed: 99,
            ..smoke(6)
        };
        assert!(matches!(
            Trainer::resume(dir.path(), Some(other)),
            Err(Error::ConfigMismatch(_))
        ));
        let path = dir.path().join(CHECKPOINT_FILE);
        let text = fs::read_to_string(&path).unwrap().replacen("\"format_version\":1", "\"format_version\":7", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Version { found: 7, .. })));
    }
}
