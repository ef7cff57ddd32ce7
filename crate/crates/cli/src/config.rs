//! Pipeline configuration: a TOML document with one table per stage.
//!
//! Precedence, lowest first: built-in defaults, the config file, the
//! `STEREOPROXY_OUT` / `STEREOPROXY_THREADS` environment variables, command
//! line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stereoproxy_core::consensus::{P_SAMPLE_BM_W, P_SAMPLE_SGM_L};
use stereoproxy_core::metrics::{InvalidPolicy, DEFAULT_MAX_DEPTH};
use stereoproxy_core::seeds::FilterMode;
use stereoproxy_core::{CompleterConfig, ConsensusConfig, FilterConfig, SgmParams, DEFAULT_MAX_DISPARITY};

pub const ENV_OUT: &str = "STEREOPROXY_OUT";
pub const ENV_THREADS: &str = "STEREOPROXY_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {cause}", path.display())]
    Read {
        path: PathBuf,
        cause: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

impl From<stereoproxy_core::Error> for ConfigError {
    fn from(e: stereoproxy_core::Error) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatcherKind {
    /// Winner-take-all on the raw cost volume.
    Bm,
    /// Semi-global aggregation, then winner-take-all.
    Sgm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Census,
    Sad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherSection {
    pub kind: MatcherKind,
    pub cost: CostKind,
    /// Odd window size, 3 to 9.
    pub window: usize,
    /// Number of disparity levels.
    pub d_max: usize,
    pub subpixel: bool,
}

impl Default for MatcherSection {
    fn default() -> Self {
        MatcherSection {
            kind: MatcherKind::Sgm,
            cost: CostKind::Census,
            window: 5,
            d_max: DEFAULT_MAX_DISPARITY,
            subpixel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompleterMode {
    Reference,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompleterSection {
    pub mode: CompleterMode,
    pub sigma_spatial: f64,
    pub sigma_color: f64,
    pub k_neighbors: usize,
    /// External program and leading arguments; the work directory is
    /// appended as the last argument.
    pub command: Vec<String>,
    /// Parent of the per-frame exchange directories. Defaults to
    /// `<output>/work`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workdir: Option<PathBuf>,
}

impl Default for CompleterSection {
    fn default() -> Self {
        let r = CompleterConfig::default();
        CompleterSection {
            mode: CompleterMode::Reference,
            sigma_spatial: r.sigma_spatial,
            sigma_color: r.sigma_color,
            k_neighbors: r.k_neighbors,
            command: Vec::new(),
            workdir: None,
        }
    }
}

impl CompleterSection {
    pub fn reference(&self) -> CompleterConfig {
        CompleterConfig {
            sigma_spatial: self.sigma_spatial,
            sigma_color: self.sigma_color,
            k_neighbors: self.k_neighbors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusSection {
    pub n: usize,
    pub gamma: f64,
    /// Follows the seed source when unset: 1/20 for confidence-filtered
    /// seeds, 1/200 for LRC-filtered ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_sample: Option<f64>,
    pub flip_prob: f64,
    pub gain_range: [f64; 2],
    pub shift_range: [f64; 2],
    /// Global seed; each frame derives its own from it and its index.
    pub seed: u64,
}

impl Default for ConsensusSection {
    fn default() -> Self {
        let c = ConsensusConfig::default();
        ConsensusSection {
            n: c.n,
            gamma: c.gamma,
            p_sample: None,
            flip_prob: c.flip_prob,
            gain_range: c.gain_range,
            shift_range: c.shift_range,
            seed: c.rng_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisparityFormat {
    /// 16-bit KITTI PNG.
    Png,
    Pfm,
}

impl DisparityFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DisparityFormat::Png => "png",
            DisparityFormat::Pfm => "pfm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub format: DisparityFormat,
    /// Also write color renderings next to every disparity map.
    pub colorize: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            format: DisparityFormat::Png,
            colorize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Invalid predictions inside the ground truth: `count-as-error` or
    /// `exclude`.
    pub policy: InvalidPolicy,
    pub max_depth: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            policy: InvalidPolicy::CountAsError,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Frame worker count; 0 uses every available core.
    pub threads: usize,
    pub matcher: MatcherSection,
    /// `tau_lrc` gates the lrc-only filter.
    pub sgm: SgmParams,
    /// `lrc_tau` gates the confidence filter.
    pub filter: FilterConfig,
    pub completer: CompleterSection,
    pub consensus: ConsensusSection,
    pub output: OutputSection,
    pub eval: EvalSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|cause| ConfigError::Read {
            path: path.to_path_buf(),
            cause,
        })?;
        Self::from_toml(&text)
    }

    /// Applies environment overrides through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(dir) = lookup(ENV_OUT).filter(|s| !s.is_empty()) {
            self.output.dir = PathBuf::from(dir);
        }
        if let Some(t) = lookup(ENV_THREADS).filter(|s| !s.is_empty()) {
            self.threads = t
                .trim()
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{ENV_THREADS}={t:?} is not a thread count")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.matcher;
        if m.window % 2 == 0 || !(3..=9).contains(&m.window) {
            return Err(ConfigError::Invalid(format!("matcher.window = {} must be odd, 3 to 9", m.window)));
        }
        if m.d_max == 0 {
            return Err(ConfigError::Invalid("matcher.d_max must be at least 1".into()));
        }
        if self.filter.mode == FilterMode::Confidence && m.kind != MatcherKind::Bm {
            return Err(ConfigError::Invalid(
                "filter.mode = \"confidence\" needs matcher.kind = \"bm\" (peak ratios come from the raw volume)".into(),
            ));
        }
        if self.completer.mode == CompleterMode::External && self.completer.command.is_empty() {
            return Err(ConfigError::Invalid("completer.mode = \"external\" needs completer.command".into()));
        }
        if !(self.eval.max_depth > 0.0) {
            return Err(ConfigError::Invalid("eval.max_depth must be positive".into()));
        }
        self.sgm.validate()?;
        self.filter.validate()?;
        self.completer.reference().validate()?;
        self.consensus_for_frame(0).validate()?;
        Ok(())
    }

    pub fn p_sample(&self) -> f64 {
        self.consensus.p_sample.unwrap_or(match self.filter.mode {
            FilterMode::LrcOnly => P_SAMPLE_SGM_L,
            FilterMode::Confidence => P_SAMPLE_BM_W,
        })
    }

    /// Consensus settings for one frame, seeded from the global seed and
    /// the frame's manifest index.
    pub fn consensus_for_frame(&self, index: usize) -> ConsensusConfig {
        let c = &self.consensus;
        ConsensusConfig {
            n: c.n,
            gamma: c.gamma,
            p_sample: self.p_sample(),
            flip_prob: c.flip_prob,
            gain_range: c.gain_range,
            shift_range: c.shift_range,
            rng_seed: stereoproxy_core::rng::frame_seed(c.seed, index as u64),
        }
    }

    pub fn workdir(&self) -> PathBuf {
        self.completer.workdir.clone().unwrap_or_else(|| self.output.dir.join("work"))
    }

    /// TOML with every setting spelled out.
    pub fn to_toml(&self) -> String {
        let mut resolved = self.clone();
        resolved.consensus.p_sample = Some(self.p_sample());
        toml::to_string(&resolved).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("[sgm]") && text.contains("p_sample = 0.005"));
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back.consensus.p_sample, Some(0.005));
        assert_eq!(back.sgm, cfg.sgm);
        back.validate().unwrap();
    }

    #[test]
    fn p_sample_follows_source() {
        let cfg = PipelineConfig::from_toml("[matcher]\nkind = \"bm\"\n[filter]\nmode = \"confidence\"\n").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.p_sample(), 1.0 / 20.0);
    }

    #[test]
    fn cross_field_rules() {
        let cfg = PipelineConfig::from_toml("[filter]\nmode = \"confidence\"\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("bm"));
        let cfg = PipelineConfig::from_toml("[completer]\nmode = \"external\"\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig::from_toml("[consensus]\nn = 1\n").unwrap();
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::from_toml("[sgm]\nbogus = 1\n").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_env(|k| match k {
            ENV_OUT => Some("/tmp/x".into()),
            ENV_THREADS => Some("3".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.threads, 3);
        assert!(cfg.apply_env(|k| (k == ENV_THREADS).then(|| "many".into())).is_err());
    }
}
