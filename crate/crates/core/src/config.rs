//! Run configuration: every tunable of the pipeline with defaults that work
//! on the synthetic scenarios, loadable from TOML.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::GroupingParams;
use crate::hypergraph::ClusterSearchOpts;
use crate::interaction::{InteractionRuleTable, RecoveryParams};
use crate::tracking::{SpeedParams, TrackingParams};
use crate::types::ActivityAlphabets;

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Frames per second of the input stream.
    pub fps: f64,
    /// Optimization window length (tau), frames.
    pub window: u64,
    /// Hyperedge degree m.
    pub degree: usize,
    /// Cluster cardinality range scanned by the search.
    pub kappa_min: usize,
    pub kappa_max: usize,
    /// Span of the velocity line fit, frames.
    pub span: u64,
    /// Nominal on-screen person height, px; scales distance-based gates.
    pub person_scale: f64,
    /// Targets unseen for this long are dropped, seconds.
    pub drop_after_secs: f64,
    /// Committed pair labels below this probability fall back to the
    /// residual class.
    pub pair_min_prob: f64,
    /// Tracking-hyperedge weight mix.
    pub lambda_a: f64,
    pub lambda_d: f64,
    pub lambda_g: f64,
    pub alphabets: ActivityAlphabets,
    pub grouping: GroupingParams,
    pub speed: SpeedParams,
    pub tracking: TrackingParams,
    pub rules: InteractionRuleTable,
    pub recovery: RecoveryParams,
    pub search: ClusterSearchOpts,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fps: 25.0,
            window: 20,
            degree: 3,
            kappa_min: 3,
            kappa_max: 8,
            span: 5,
            person_scale: 60.0,
            drop_after_secs: 5.0,
            pair_min_prob: 0.05,
            lambda_a: 30.0,
            lambda_d: 1.0,
            lambda_g: 0.5,
            alphabets: ActivityAlphabets::full(),
            grouping: GroupingParams::default(),
            speed: SpeedParams::default(),
            tracking: TrackingParams::default(),
            rules: InteractionRuleTable::default(),
            recovery: RecoveryParams::default(),
            search: ClusterSearchOpts::default(),
        }
    }
}

impl PipelineConfig {
    /// Frames after which a silent target is dropped.
    pub fn drop_after_frames(&self) -> u64 {
        (self.drop_after_secs * self.fps).round().max(1.0) as u64
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.fps > 0.0) {
            return fail("fps must be positive");
        }
        if self.window < 2 {
            return fail("window must span at least 2 frames");
        }
        if self.degree < 2 {
            return fail("degree must be at least 2");
        }
        if self.kappa_min < self.degree {
            return fail("kappa_min must be at least the hyperedge degree");
        }
        if self.kappa_max < self.kappa_min {
            return fail("kappa_max must be at least kappa_min");
        }
        if self.span < 2 {
            return fail("span must cover at least 2 frames");
        }
        if !(self.person_scale > 0.0) {
            return fail("person_scale must be positive");
        }
        if !(self.drop_after_secs > 0.0) {
            return fail("drop_after_secs must be positive");
        }
        if self.alphabets.individual.is_empty()
            || self.alphabets.interaction.is_empty()
            || self.alphabets.collective.is_empty()
        {
            return fail("alphabets must not be empty");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Collective, Interaction};

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml_string();
        let back = PipelineConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_toml_overrides_defaults() {
        let cfg = PipelineConfig::from_toml_str(
            "window = 30\n\
             grouping.mu_dist = 80.0\n\
             tracking.link_gate = 40.0\n",
        )
        .unwrap();
        assert_eq!(cfg.window, 30);
        assert_eq!(cfg.grouping.mu_dist, 80.0);
        assert_eq!(cfg.tracking.link_gate, 40.0);
        // untouched fields keep their defaults
        assert_eq!(cfg.degree, 3);
        assert_eq!(cfg.fps, 25.0);
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "fps = 0.0",
            "window = 1",
            "degree = 1",
            "kappa_min = 2",
            "kappa_max = 2",
            "span = 1",
            "person_scale = -5.0",
            "drop_after_secs = 0.0",
        ] {
            assert!(
                PipelineConfig::from_toml_str(text).is_err(),
                "accepted {text}"
            );
        }
    }

    #[test]
    fn malformed_toml_is_invalid_config() {
        let err = PipelineConfig::from_toml_str("fps = [").unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn default_rules_cover_default_alphabets() {
        let cfg = PipelineConfig::default();
        for &class in &cfg.alphabets.interaction {
            if class != Interaction::NA {
                assert!(cfg.rules.rules.contains_key(&class), "{class:?}");
            }
        }
        for &class in &cfg.alphabets.collective {
            assert!(cfg.rules.collective_map.contains_key(&class), "{class:?}");
        }
        assert!(cfg.rules.collective_map[&Collective::Dancing].contains(&Interaction::DT));
    }

    #[test]
    fn drop_after_frames_rounds() {
        let mut cfg = PipelineConfig::default();
        cfg.fps = 25.0;
        cfg.drop_after_secs = 5.0;
        assert_eq!(cfg.drop_after_frames(), 125);
    }
}
