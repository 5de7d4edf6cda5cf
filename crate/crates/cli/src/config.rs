use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{Map, Value};
use treegress::inference::McmcConfig;

/// A fit configuration: file locations plus the sampler settings, all at
/// the top level of one JSON object. Relative paths are taken relative to
/// the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub prior: Option<String>,
    pub train: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub chains: Option<usize>,
    /// True when the document sets `seed` itself.
    pub has_seed: bool,
    pub mcmc: McmcConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Paths {
    prior: Option<String>,
    train: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    chains: Option<usize>,
}

const PATH_KEYS: [&str; 4] = ["prior", "train", "out_dir", "chains"];

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let doc: Value = serde_json::from_str(text).map_err(|e| format!("config is not valid JSON: {e}"))?;
        let Value::Object(all) = doc else {
            return Err("config must be a JSON object".into());
        };
        let (paths, rest): (Map<String, Value>, Map<String, Value>) =
            all.into_iter().partition(|(k, _)| PATH_KEYS.contains(&k.as_str()));
        let has_seed = rest.contains_key("seed");
        let paths: Paths = serde_json::from_value(Value::Object(paths)).map_err(|e| format!("config: {e}"))?;
        let mcmc: McmcConfig = serde_json::from_value(Value::Object(rest)).map_err(|e| format!("config: {e}"))?;
        let anchor = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        let prior = paths.prior.map(|p| {
            let candidate = base.join(&p);
            if Path::new(&p).is_relative() && candidate.exists() {
                candidate.to_string_lossy().into_owned()
            } else {
                p
            }
        });
        let cfg = RunConfig {
            prior,
            train: paths.train.map(anchor),
            out_dir: paths.out_dir.map(anchor),
            chains: paths.chains,
            has_seed,
            mcmc,
        };
        if let Some(t) = &cfg.train {
            if !t.is_file() {
                return Err(format!("config: training data `{}` does not exist", t.display()));
            }
        }
        if cfg.chains == Some(0) {
            return Err("config: chains must be at least 1".into());
        }
        Ok(cfg)
    }
}
