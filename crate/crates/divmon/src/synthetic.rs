//! Seeded multi-model prediction streams with controlled drift.
//!
//! Each model draws scores from a beta-shaped bump parameterized by its mean
//! (`location`) and `concentration`. A scenario is a list of phases; each
//! phase spans some windows with a fixed number of studies per window and
//! may override individual model profiles.

use std::collections::BTreeMap;

use divmon_core::{MonitorConfig, PredictionEvent, Span, Timestamp, WindowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::config::parse_duration;
use crate::error::{Error, Result};
use crate::events::parse_timestamp;

/// Cohort sizes of the six case-study checkpoints: a reference window, four
/// monthly windows and a final post-shift month.
pub const PAPER_COHORTS: [u32; 6] = [969, 489, 646, 543, 352, 994];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub location: f64,
    pub concentration: f64,
}

impl Profile {
    pub fn new(location: f64, concentration: f64) -> Self {
        Self {
            location,
            concentration,
        }
    }

    /// Same shape with the mean moved by `delta`, clamped to `[0, 1]`.
    pub fn shifted(self, delta: f64) -> Self {
        Self {
            location: (self.location + delta).clamp(0.0, 1.0),
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.location) {
            return Err(Error::Scenario(format!(
                "location {} outside [0, 1]",
                self.location
            )));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(Error::Scenario(format!(
                "concentration {} must be positive",
                self.concentration
            )));
        }
        Ok(())
    }

    fn sampler(&self) -> Sampler {
        if self.location <= 0.0 {
            Sampler::Constant(0.0)
        } else if self.location >= 1.0 {
            Sampler::Constant(1.0)
        } else {
            let a = self.location * self.concentration;
            let b = (1.0 - self.location) * self.concentration;
            Sampler::Beta(Beta::new(a, b).expect("positive shape parameters"))
        }
    }
}

enum Sampler {
    Constant(f64),
    Beta(Beta<f64>),
}

impl Sampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Constant(v) => *v,
            Sampler::Beta(b) => b.sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub id: String,
    pub profile: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub windows: u32,
    pub studies_per_window: u32,
    /// Replaces the base profile of the named models during this phase.
    #[serde(default)]
    pub overrides: BTreeMap<String, Profile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    #[serde(default = "default_label")]
    pub class_label: String,
    #[serde(default = "default_origin")]
    pub origin: String,
    #[serde(default = "default_duration")]
    pub window_duration: String,
    pub models: Vec<ModelProfile>,
    pub phases: Vec<Phase>,
}

fn default_label() -> String {
    "consolidation".into()
}
fn default_origin() -> String {
    "2020-01-01T00:00:00Z".into()
}
fn default_duration() -> String {
    "30d".into()
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Scenario("no models".into()));
        }
        if self.phases.is_empty() {
            return Err(Error::Scenario("no phases".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.models {
            if m.id.is_empty() || !ids.insert(m.id.as_str()) {
                return Err(Error::Scenario(format!(
                    "bad or repeated model id {:?}",
                    m.id
                )));
            }
            m.profile.validate()?;
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.windows == 0 || p.studies_per_window == 0 {
                return Err(Error::Scenario(format!(
                    "phase {i} needs at least one window and one study per window"
                )));
            }
            for (id, profile) in &p.overrides {
                if !ids.contains(id.as_str()) {
                    return Err(Error::Scenario(format!(
                        "phase {i} overrides unknown model {id}"
                    )));
                }
                profile.validate()?;
            }
        }
        self.window_spec()?;
        Ok(())
    }

    fn window_spec(&self) -> Result<WindowSpec> {
        let origin = parse_timestamp(&self.origin).map_err(Error::Scenario)?;
        Ok(WindowSpec::new(
            parse_duration(&self.window_duration)?,
            origin,
            1,
        )?)
    }

    /// Window sizes in study count, in order.
    pub fn window_sizes(&self) -> Vec<u32> {
        self.phases
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.studies_per_window, p.windows as usize))
            .collect()
    }
}

/// Generates the stream: studies spread evenly through each window, one
/// event per model per study, in model order.
///
/// Every (window, model) pair draws from its own ChaCha stream, so changing
/// one model's profile leaves the other models' scores untouched.
pub fn generate(spec: &ScenarioSpec) -> Result<Vec<PredictionEvent>> {
    spec.validate()?;
    let window_spec = spec.window_spec()?;
    let duration = window_spec.duration.as_millis();
    let capacity: usize = spec
        .window_sizes()
        .iter()
        .map(|&n| n as usize)
        .sum::<usize>()
        * spec.models.len();
    let mut events = Vec::with_capacity(capacity);

    let mut window_index = 0u64;
    for phase in &spec.phases {
        let samplers: Vec<Sampler> = spec
            .models
            .iter()
            .map(|m| phase.overrides.get(&m.id).unwrap_or(&m.profile).sampler())
            .collect();
        for _ in 0..phase.windows {
            let window = window_spec.window(window_index)?;
            let mut rngs: Vec<ChaCha8Rng> = (0..spec.models.len())
                .map(|m| {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    rng.set_stream((window_index << 16) | m as u64);
                    rng
                })
                .collect();
            let n = phase.studies_per_window as i64;
            for study in 0..n {
                let t = Timestamp(window.start.as_millis() + study * duration / n);
                let study_id = format!("w{window_index:03}-s{study:05}");
                for (m, model) in spec.models.iter().enumerate() {
                    events.push(PredictionEvent {
                        study_id: study_id.clone(),
                        timestamp: t,
                        model_id: model.id.clone(),
                        class_label: spec.class_label.clone(),
                        score: samplers[m].sample(&mut rngs[m]).clamp(0.0, 1.0),
                    });
                }
            }
            window_index += 1;
        }
    }
    Ok(events)
}

/// Six checkpoints sized like the case-study cohorts: four stable months
/// after the reference window, then a global shift hitting every model.
///
/// The baseline profiles keep every pair under the predictive tolerance.
/// In the final window all three means rise by different amounts, which
/// pushes each temporal reading past 0.2 and the AI1/AI2 pair past 0.2.
pub fn paper_shaped_scenario(seed: u64) -> ScenarioSpec {
    let models = vec![
        ModelProfile {
            id: "AI1".into(),
            profile: Profile::new(0.30, 6.0),
        },
        ModelProfile {
            id: "AI2".into(),
            profile: Profile::new(0.33, 6.0),
        },
        ModelProfile {
            id: "AI3".into(),
            profile: Profile::new(0.42, 5.0),
        },
    ];
    let mut phases: Vec<Phase> = PAPER_COHORTS[..5]
        .iter()
        .map(|&n| Phase {
            windows: 1,
            studies_per_window: n,
            overrides: BTreeMap::new(),
        })
        .collect();
    phases.push(Phase {
        windows: 1,
        studies_per_window: PAPER_COHORTS[5],
        overrides: BTreeMap::from([
            ("AI1".into(), Profile::new(0.55, 6.0)),
            ("AI2".into(), Profile::new(0.80, 8.0)),
            ("AI3".into(), Profile::new(0.68, 5.0)),
        ]),
    });
    ScenarioSpec {
        seed,
        class_label: default_label(),
        origin: default_origin(),
        window_duration: default_duration(),
        models,
        phases,
    }
}

/// Monitor configuration matching [`paper_shaped_scenario`]'s windows.
pub fn paper_shaped_config() -> MonitorConfig {
    let mut config = MonitorConfig::new("AI1", ["AI2", "AI3"]);
    config.window.duration = Span::days(30);
    config.window.origin = parse_timestamp(&default_origin()).expect("valid origin");
    config
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, studies: u32, windows: u32) -> ScenarioSpec {
        ScenarioSpec {
            seed,
            class_label: "c".into(),
            origin: "2020-01-01T00:00:00Z".into(),
            window_duration: "1d".into(),
            models: ["AI1", "AI2", "AI3"]
                .into_iter()
                .map(|id| ModelProfile {
                    id: id.into(),
                    profile: Profile::new(2.0 / 7.0, 7.0),
                })
                .collect(),
            phases: vec![Phase {
                windows,
                studies_per_window: studies,
                overrides: BTreeMap::new(),
            }],
        }
    }

    #[test]
    fn counts_events() {
        let events = generate(&small(1, 10, 1)).unwrap();
        assert_eq!(events.len(), 30);
        assert!(events.iter().all(|e| (0.0..=1.0).contains(&e.score)));
        assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn same_seed_same_stream() {
        assert_eq!(
            generate(&small(7, 50, 2)).unwrap(),
            generate(&small(7, 50, 2)).unwrap()
        );
        assert_ne!(
            generate(&small(7, 50, 2)).unwrap(),
            generate(&small(8, 50, 2)).unwrap()
        );
    }

    #[test]
    fn overriding_one_model_leaves_others_alone() {
        let base = small(3, 40, 1);
        let mut shifted = base.clone();
        shifted.phases[0]
            .overrides
            .insert("AI2".into(), Profile::new(0.7, 7.0));
        let a = generate(&base).unwrap();
        let b = generate(&shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            if x.model_id != "AI2" {
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn validation_errors() {
        let mut s = small(1, 10, 1);
        s.phases.clear();
        assert!(generate(&s).is_err());
        let mut s = small(1, 0, 1);
        assert!(generate(&s).is_err());
        s = small(1, 10, 1);
        s.models[0].profile.concentration = 0.0;
        assert!(generate(&s).is_err());
        s = small(1, 10, 1);
        s.phases[0]
            .overrides
            .insert("AI9".into(), Profile::new(0.5, 1.0));
        assert!(generate(&s).is_err());
    }

    #[test]
    fn degenerate_locations_are_constant() {
        let mut s = small(1, 5, 1);
        s.models[0].profile = Profile::new(1.0, 3.0);
        s.models[1].profile = Profile::new(0.0, 3.0);
        let events = generate(&s).unwrap();
        assert!(events
            .iter()
            .filter(|e| e.model_id == "AI1")
            .all(|e| e.score == 1.0));
        assert!(events
            .iter()
            .filter(|e| e.model_id == "AI2")
            .all(|e| e.score == 0.0));
    }

    #[test]
    fn paper_shaped_sizes() {
        let spec = paper_shaped_scenario(42);
        assert_eq!(spec.window_sizes(), PAPER_COHORTS.to_vec());
        let events = generate(&spec).unwrap();
        assert_eq!(events.len(), PAPER_COHORTS.iter().sum::<u32>() as usize * 3);
    }
}
