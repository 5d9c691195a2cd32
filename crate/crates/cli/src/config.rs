//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use cosim::costarica::ControlPolicy;
use cosim::models::{self, Model, ModelId};
use cosim::orchestrator::convergence::check_dt_list;
use cosim::orchestrator::{CosimConfig, ReplayMode};
use serde::Deserialize;

/// A single mode or a list of them.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Modes {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: String,
    pub mode: Option<Modes>,
    pub t_init: Option<f64>,
    pub t_end: Option<f64>,
    pub macro_dt: Option<f64>,
    pub dt_list: Option<Vec<f64>>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub anderson_depth: Option<usize>,
    #[serde(rename = "stehfest_N")]
    pub stehfest_n: Option<usize>,
    pub rich_factor: Option<f64>,
    pub control_policy: Option<String>,
    pub micro_steps: Option<usize>,
    pub output_path: Option<PathBuf>,
}

/// Anything wrong with the configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl<E: std::error::Error> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.to_string())
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// A parsed and checked configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model_id: ModelId,
    pub model: Model,
    pub modes: Vec<ReplayMode>,
    pub template: CosimConfig,
    pub macro_dt: Option<f64>,
    pub dt_list: Option<Vec<f64>>,
    pub output_path: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))
    }

    /// `mode_override` replaces whatever modes the file lists.
    pub fn into_experiment(self, mode_override: Option<ReplayMode>) -> Result<Experiment, ConfigError> {
        let model_id: ModelId = self.model.parse().map_err(ConfigError)?;
        let model = models::catalog(model_id);
        let modes = match (mode_override, &self.mode) {
            (Some(m), _) => vec![m],
            (None, None) => vec![ReplayMode::Costarica],
            (None, Some(Modes::One(s))) => vec![s.parse().map_err(ConfigError)?],
            (None, Some(Modes::Many(v))) => v.iter().map(|s| s.parse()).collect::<Result<Vec<_>, _>>().map_err(ConfigError)?,
        };
        if modes.is_empty() {
            return err("mode list is empty");
        }
        if modes.iter().enumerate().any(|(i, m)| modes[..i].contains(m)) {
            return err("a mode is listed twice");
        }
        let mut t = CosimConfig::for_model(&model, self.macro_dt.unwrap_or(1.0), modes[0]);
        t.t_init = self.t_init.unwrap_or(t.t_init);
        t.t_end = self.t_end.unwrap_or(t.t_end);
        t.epsilon = self.epsilon.unwrap_or(t.epsilon);
        t.max_iters = self.max_iters.unwrap_or(t.max_iters);
        t.anderson_depth = self.anderson_depth.unwrap_or(t.anderson_depth);
        t.stehfest_n = self.stehfest_n.unwrap_or(t.stehfest_n);
        t.rich_factor = self.rich_factor.unwrap_or(t.rich_factor);
        if let Some(p) = &self.control_policy {
            t.control_policy = p.parse::<ControlPolicy>().map_err(ConfigError)?;
        }
        t.micro_steps = self.micro_steps.unwrap_or(t.micro_steps);
        t.validate()?;
        if let Some(d) = &self.dt_list {
            check_dt_list(d, 1)?;
        }
        Ok(Experiment {
            model_id,
            model,
            modes,
            template: t,
            macro_dt: self.macro_dt,
            dt_list: self.dt_list,
            output_path: self.output_path,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let e = ConfigFile::parse(r#"{"model": "LV_CLASSIC", "macro_dt": 0.01}"#).unwrap().into_experiment(None).unwrap();
        assert_eq!(e.modes, vec![ReplayMode::Costarica]);
        assert_eq!(e.template.epsilon, 1e-6);
        assert_eq!(e.template.t_end, 20.0);
        assert_eq!(e.template.control_policy, ControlPolicy::Flex);
    }

    #[test]
    fn rejections() {
        assert!(ConfigFile::parse(r#"{"model": "LV_CLASSIC", "macro_dtt": 0.01}"#).is_err());
        let bad = [
            r#"{"model": "LV"}"#,
            r#"{"model": "LV_CLASSIC", "mode": "FAST"}"#,
            r#"{"model": "LV_CLASSIC", "mode": ["ROLLBACK", "ROLLBACK"]}"#,
            r#"{"model": "LV_CLASSIC", "dt_list": [0.1, 0.1]}"#,
            r#"{"model": "LV_CLASSIC", "stehfest_N": 13}"#,
            r#"{"model": "LV_CLASSIC", "control_policy": "SPLINE"}"#,
        ];
        for b in bad {
            assert!(ConfigFile::parse(b).unwrap().into_experiment(None).is_err(), "{b}");
        }
    }

    #[test]
    fn mode_override() {
        let e = ConfigFile::parse(r#"{"model": "MECH_TWO_BODY", "mode": ["ROLLBACK", "COSTARICA"]}"#)
            .unwrap()
            .into_experiment(Some(ReplayMode::CostaricaSsr))
            .unwrap();
        assert_eq!(e.modes, vec![ReplayMode::CostaricaSsr]);
    }
}
