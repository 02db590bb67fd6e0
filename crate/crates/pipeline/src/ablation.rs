//! One-knob sweeps sharing a stage cache.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use coopclass_core::coopnet::ComponentMode;
use coopclass_core::onboarding::AssignmentMode;
use coopclass_core::sim::sweep_noise_rates;

use crate::config::{DataConfig, PipelineConfig};
use crate::error::{PipelineError, Result};
use crate::report::Summary;
use crate::run::{run_pipeline, write_text, RunOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Knob {
    Components,
    Augmentation,
    K,
    Lambda,
    SvmError,
    NoiseRate,
    Assignment,
}

impl Knob {
    pub const ALL: [Knob; 7] = [
        Knob::Components,
        Knob::Augmentation,
        Knob::K,
        Knob::Lambda,
        Knob::SvmError,
        Knob::NoiseRate,
        Knob::Assignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Knob::Components => "components",
            Knob::Augmentation => "G",
            Knob::K => "K",
            Knob::Lambda => "lambda",
            Knob::SvmError => "svm_error",
            Knob::NoiseRate => "noise_rate",
            Knob::Assignment => "assignment",
        }
    }
}

impl FromStr for Knob {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Knob::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Knob::ALL.iter().map(|k| k.name()).collect();
            PipelineError::Config(format!("unknown ablation knob `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

fn mode_name(mode: ComponentMode) -> String {
    serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// `(value label, config)` for every setting of the knob.
pub fn variants(base: &PipelineConfig, knob: Knob) -> Result<Vec<(String, PipelineConfig)>> {
    let with = |f: &dyn Fn(&mut PipelineConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    let a = &base.ablation;
    Ok(match knob {
        Knob::Components => ComponentMode::ALL
            .into_iter()
            .map(|m| (mode_name(m), with(&|c| c.training.mode = m)))
            .collect(),
        Knob::Augmentation => a
            .augmentation
            .iter()
            .map(|&g| (g.to_string(), with(&|c| c.training.train.augmentation = g)))
            .collect(),
        Knob::K => a.k.iter().map(|&k| (k.to_string(), with(&|c| c.profiles.fixed_k = Some(k)))).collect(),
        Knob::Lambda => a
            .lambda
            .iter()
            .map(|&l| (l.to_string(), with(&|c| c.training.train.lambda = l)))
            .collect(),
        Knob::SvmError => [false, true]
            .into_iter()
            .map(|e| (e.to_string(), with(&|c| c.onboarding.profile_error = e)))
            .collect(),
        Knob::Assignment => [AssignmentMode::Hard, AssignmentMode::Soft]
            .into_iter()
            .map(|m| {
                let label = if m == AssignmentMode::Hard { "hard" } else { "soft" };
                (label.to_string(), with(&|c| c.onboarding.assignment = m))
            })
            .collect(),
        Knob::NoiseRate => {
            let DataConfig::Synthetic { spec, profiles } = &base.data else {
                return Err(PipelineError::Config("the noise-rate sweep needs synthetic data".into()));
            };
            sweep_noise_rates(profiles, &a.noise_rate)?
                .into_iter()
                .map(|(rate, grid)| {
                    let data = DataConfig::Synthetic {
                        spec: spec.clone(),
                        profiles: grid.clone(),
                    };
                    (rate.to_string(), with(&|c| c.data = data.clone()))
                })
                .collect()
        }
    })
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub value: String,
    pub out: PathBuf,
    pub summary: Summary,
}

/// Runs every setting under `<out>/ablations/<knob>/<value>` and writes `ablation_<knob>.csv`.
pub fn run_ablation(base: &PipelineConfig, knob: Knob, out: &Path) -> Result<Vec<AblationRow>> {
    let root = out.join("ablations");
    let cache = root.join("cache");
    let mut rows = Vec::new();
    for (value, cfg) in variants(base, knob)? {
        let dir = root.join(knob.name()).join(&value);
        tracing::info!(knob = knob.name(), value = %value, "ablation setting");
        let opts = RunOptions {
            out: dir.clone(),
            cache: Some(cache.clone()),
            until: None,
            write_bundle: false,
        };
        run_pipeline(&cfg, &opts)?;
        rows.push(AblationRow {
            value,
            summary: Summary::load(&dir)?,
            out: dir,
        });
    }
    let mut csv = format!("{},K,users,accepted,I,M,NI,original,post,a_plus,a_minus,both_wrong_corrected\n", knob.name());
    for r in &rows {
        let s = &r.summary;
        let both_wrong = s.joint.proportion(false, false, true);
        match &s.aggregate {
            Some(a) => csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.value, s.k, s.users, s.accepted, a.improved, a.maintained, a.not_improved, a.original_accuracy, a.post_accuracy, a.a_plus, a.a_minus, both_wrong
            )),
            None => csv.push_str(&format!("{},{},{},0,,,,,,,,\n", r.value, s.k, s.users)),
        }
    }
    write_text(&root.join(format!("ablation_{}.csv", knob.name())), &csv)?;
    Ok(rows)
}
