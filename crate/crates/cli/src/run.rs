use std::cell::RefCell;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crowdcal_core::io::{write_trajectories, Metadata};
use crowdcal_core::TrajectorySet;

use crate::config::Config;
use crate::error::{CliError, Result};

/// Everything a command needs besides its own arguments.
pub struct Run {
    pub command: &'static str,
    pub config: Config,
    pub seed: u64,
    pub strict: bool,
    pub out: PathBuf,
    warnings: RefCell<Vec<String>>,
}

impl Run {
    pub fn new(command: &'static str, config: Config, seed: u64, strict: bool, out: PathBuf) -> Self {
        Self { command, config, seed, strict, out, warnings: RefCell::default() }
    }

    /// Degenerate-data warning. Fatal at the end of the run under `--strict`.
    pub fn warn(&self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.borrow_mut().push(msg);
    }

    /// Rejects config keys that no command understands. Call after the
    /// command has read its settings.
    pub fn check_config(&self) -> Result<()> {
        self.config.check_unknown(&crate::commands::known_keys())
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.borrow().clone()
    }

    /// Seed of one stage, derived from the run seed and the stage name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }

    /// `(key, value)` lines every output carries: command, seed and the
    /// effective configuration.
    pub fn provenance(&self) -> Vec<(String, String)> {
        let mut v = vec![("command".to_string(), self.command.to_string()), ("seed".to_string(), self.seed.to_string())];
        v.extend(self.config.effective().into_iter().map(|(k, val)| (format!("config.{k}"), val)));
        v
    }

    pub fn comment_header(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.provenance() {
            writeln!(s, "# {k} = {v}").unwrap();
        }
        s
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| io_err(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    /// Text output with the provenance header prepended as `#` comments.
    pub fn write_text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let mut s = self.comment_header();
        s.push_str(body);
        self.write(name, s.as_bytes())
    }

    pub fn write_trajectories(&self, name: &str, set: &TrajectorySet, extra: &[(&str, String)]) -> Result<PathBuf> {
        let mut meta: Metadata = self.provenance().into_iter().collect();
        for (k, v) in extra {
            meta.insert(k.to_string(), v.clone());
        }
        let mut buf = Vec::new();
        write_trajectories(&mut buf, set, &meta)?;
        self.write(name, &buf)
    }

    /// Success, or the collected warnings as an error under `--strict`.
    pub fn finish(&self) -> Result<()> {
        let w = self.warnings();
        if self.strict && !w.is_empty() {
            Err(CliError::Degenerate(w))
        } else {
            Ok(())
        }
    }
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn read_trajectory_file(path: &Path) -> Result<TrajectorySet> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let (set, _) = crowdcal_core::io::read_trajectories(std::io::BufReader::new(file))
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(set)
}

/// FNV-1a of the stage name mixed into the seed with a splitmix64 finalizer.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stage.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_seeds_differ_by_stage_and_seed() {
        assert_eq!(stage_seed(1, "split"), stage_seed(1, "split"));
        assert_ne!(stage_seed(1, "split"), stage_seed(1, "fit.A"));
        assert_ne!(stage_seed(1, "split"), stage_seed(2, "split"));
    }

    #[test]
    fn strict_turns_warnings_into_failure() {
        let run = Run::new("test", Config::default(), 0, true, PathBuf::from("."));
        run.finish().unwrap();
        run.warn("empty sensor");
        assert_eq!(run.finish().unwrap_err().exit_code(), 2);
        let lax = Run::new("test", Config::default(), 0, false, PathBuf::from("."));
        lax.warn("empty sensor");
        lax.finish().unwrap();
    }
}
