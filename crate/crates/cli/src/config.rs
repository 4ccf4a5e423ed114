//! Backend selection. Flags override environment variables, which override
//! the backend config file; without any of them the oracle backend reads
//! `fixtures.json` next to the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use saa_core::backends::remote::{ENV_FEATURES_URL, ENV_GENERATE_URL, ENV_REFINE_URL};
use saa_core::backends::{OracleFixture, RemoteConfig};
use saa_core::Backends;
use serde::Deserialize;

use crate::failure::{CliResult, Failure};

pub const ENV_BACKEND_URL: &str = "SAA_BACKEND_URL";
pub const ENV_RETRIES: &str = "SAA_BACKEND_RETRIES";
pub const ENV_TIMEOUT_MS: &str = "SAA_BACKEND_TIMEOUT_MS";
pub const ENV_FIXTURES: &str = "SAA_FIXTURES";
pub const DEFAULT_FIXTURES: &str = "fixtures.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Oracle,
    Remote,
}

/// Config file contents; every field optional so layers can merge.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub kind: Option<Kind>,
    pub fixtures: Option<PathBuf>,
    pub base_url: Option<String>,
    pub generate_url: Option<String>,
    pub refine_url: Option<String>,
    pub features_url: Option<String>,
    pub retries: Option<u32>,
    pub timeout_ms: Option<u64>,
    pub retry_backoff_ms: Option<u64>,
    pub parallel: Option<bool>,
}

impl Layer {
    pub fn from_file(path: &Path) -> CliResult<Layer> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("--backend-config {}: {e}", path.display())))?;
        let mut layer: Layer = serde_json::from_str(&text)
            .map_err(|e| Failure::config(format!("--backend-config {}: {e}", path.display())))?;
        if let Some(f) = &layer.fixtures {
            if f.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                layer.fixtures = Some(base.join(f));
            }
        }
        Ok(layer)
    }

    pub fn from_env(env: &BTreeMap<String, String>) -> CliResult<Layer> {
        let get = |k: &str| env.get(k).filter(|v| !v.trim().is_empty()).cloned();
        let parse_num = |k: &str| -> CliResult<Option<u64>> {
            get(k)
                .map(|v| v.trim().parse::<u64>().map_err(|e| Failure::config(format!("{k}={v}: {e}"))))
                .transpose()
        };
        Ok(Layer {
            fixtures: get(ENV_FIXTURES).map(PathBuf::from),
            base_url: get(ENV_BACKEND_URL),
            generate_url: get(ENV_GENERATE_URL),
            refine_url: get(ENV_REFINE_URL),
            features_url: get(ENV_FEATURES_URL),
            retries: parse_num(ENV_RETRIES)?.map(|v| v as u32),
            timeout_ms: parse_num(ENV_TIMEOUT_MS)?,
            ..Layer::default()
        })
    }

    fn implied_kind(&self) -> Option<Kind> {
        if self.kind.is_some() {
            return self.kind;
        }
        let remote = self.base_url.is_some()
            || self.generate_url.is_some()
            || self.refine_url.is_some()
            || self.features_url.is_some();
        match (remote, self.fixtures.is_some()) {
            (true, _) => Some(Kind::Remote),
            (false, true) => Some(Kind::Oracle),
            _ => None,
        }
    }

    /// `self` with every field set in `over` replaced.
    pub fn overlay(mut self, over: Layer) -> Layer {
        if let Some(k) = over.implied_kind() {
            self.kind = Some(k);
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(fixtures, base_url, generate_url, refine_url, features_url, retries, timeout_ms, retry_backoff_ms, parallel);
        self
    }
}

/// Selection flags shared by the commands that run the cascade.
#[derive(Debug, Clone, Default)]
pub struct BackendFlags {
    pub config: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub backend_url: Option<String>,
    pub retries: Option<u32>,
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Oracle(PathBuf),
    Remote(RemoteConfig),
}

pub fn process_env() -> BTreeMap<String, String> {
    std::env::vars().filter(|(k, _)| k.starts_with("SAA_")).collect()
}

pub fn resolve(flags: &BackendFlags, env: &BTreeMap<String, String>, manifest: &Path) -> CliResult<Resolved> {
    let file = match &flags.config {
        Some(p) => Layer::from_file(p)?,
        None => Layer::default(),
    };
    let cli = Layer {
        fixtures: flags.fixtures.clone(),
        base_url: flags.backend_url.clone(),
        retries: flags.retries,
        timeout_ms: flags.timeout_ms,
        ..Layer::default()
    };
    let merged = Layer::default()
        .overlay(file)
        .overlay(Layer::from_env(env)?)
        .overlay(cli);
    match merged.implied_kind().unwrap_or(Kind::Oracle) {
        Kind::Oracle => {
            let path = merged.fixtures.unwrap_or_else(|| {
                manifest.parent().unwrap_or(Path::new(".")).join(DEFAULT_FIXTURES)
            });
            Ok(Resolved::Oracle(path))
        }
        Kind::Remote => {
            let base = merged.base_url.as_deref().map(RemoteConfig::with_base);
            let pick = |own: Option<String>, from_base: Option<&String>, name: &str| {
                own.or_else(|| from_base.cloned())
                    .ok_or_else(|| Failure::config(format!("remote backend needs a {name} URL or a base URL")))
            };
            let mut cfg = RemoteConfig::new(
                &pick(merged.generate_url, base.as_ref().map(|b| &b.generate_url), "generate")?,
                &pick(merged.refine_url, base.as_ref().map(|b| &b.refine_url), "refine")?,
                &pick(merged.features_url, base.as_ref().map(|b| &b.features_url), "features")?,
            );
            if let Some(r) = merged.retries {
                cfg.retries = r;
            }
            if let Some(t) = merged.timeout_ms {
                cfg.timeout_ms = t;
            }
            if let Some(b) = merged.retry_backoff_ms {
                cfg.retry_backoff_ms = b;
            }
            if let Some(p) = merged.parallel {
                cfg.parallel = p;
            }
            Ok(Resolved::Remote(cfg))
        }
    }
}

pub fn build(resolved: &Resolved) -> CliResult<Backends> {
    match resolved {
        Resolved::Oracle(path) => {
            let fixture = OracleFixture::load(path).map_err(|e| Failure::config(format!("oracle fixtures: {e}")))?;
            Ok(Backends::oracle(fixture))
        }
        Resolved::Remote(cfg) => Ok(Backends::remote(cfg.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_to_fixtures_next_to_the_manifest() {
        let r = resolve(&BackendFlags::default(), &env(&[]), Path::new("/data/desk/manifest.json")).unwrap();
        assert_eq!(r, Resolved::Oracle(PathBuf::from("/data/desk/fixtures.json")));
    }

    #[test]
    fn flags_beat_env_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backend.json");
        std::fs::write(&path, r#"{"kind": "remote", "base_url": "http://file:1", "retries": 7, "timeout_ms": 5}"#).unwrap();
        let m = Path::new("m.json");
        let mut flags = BackendFlags {
            config: Some(path),
            ..Default::default()
        };
        let Resolved::Remote(c) = resolve(&flags, &env(&[]), m).unwrap() else { panic!() };
        assert_eq!((c.generate_url.as_str(), c.retries, c.timeout_ms), ("http://file:1/v1/generate", 7, 5));

        let e = env(&[(ENV_BACKEND_URL, "http://env:2"), (ENV_RETRIES, "4")]);
        let Resolved::Remote(c) = resolve(&flags, &e, m).unwrap() else { panic!() };
        assert_eq!((c.refine_url.as_str(), c.retries, c.timeout_ms), ("http://env:2/v1/refine", 4, 5));

        flags.retries = Some(0);
        flags.backend_url = Some("http://flag:3".into());
        let Resolved::Remote(c) = resolve(&flags, &e, m).unwrap() else { panic!() };
        assert_eq!((c.features_url.as_str(), c.retries), ("http://flag:3/v1/features", 0));

        flags.fixtures = Some("f.json".into());
        flags.backend_url = None;
        assert_eq!(resolve(&flags, &e, m).unwrap(), Resolved::Oracle("f.json".into()));
    }

    #[test]
    fn oracle_file_paths_are_relative_to_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backend.json");
        std::fs::write(&path, r#"{"kind": "oracle", "fixtures": "fx.json"}"#).unwrap();
        let flags = BackendFlags {
            config: Some(path),
            ..Default::default()
        };
        assert_eq!(
            resolve(&flags, &env(&[]), Path::new("m.json")).unwrap(),
            Resolved::Oracle(dir.path().join("fx.json"))
        );
    }

    #[test]
    fn bad_config_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("backend.json");
        std::fs::write(&path, r#"{"kind": "remote", "bogus": 1}"#).unwrap();
        let flags = BackendFlags {
            config: Some(path),
            ..Default::default()
        };
        assert_eq!(resolve(&flags, &env(&[]), Path::new("m")).unwrap_err().exit_code(), 2);
        let e = env(&[(ENV_RETRIES, "many")]);
        assert_eq!(resolve(&BackendFlags::default(), &e, Path::new("m")).unwrap_err().exit_code(), 2);
    }
}
