use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetSpec, HarnessError};
use crate::blocks::{generate_instance, Problem};
use crate::rng::substream;

const STREAM_DATASET: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub steps: usize,
    pub problem: Problem,
}

/// Generates every step group; instance `i` of group `s` draws from its own
/// substream, so groups can be resized without disturbing the others.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<Instance>, HarnessError> {
    let gen = spec.generator();
    let mut out = Vec::with_capacity(spec.total());
    for g in &spec.groups {
        for i in 0..g.count {
            let mut rng = substream(spec.seed, &[STREAM_DATASET, g.steps as u64, i as u64]);
            let mut problem = generate_instance(g.steps, &gen, &mut rng)?;
            problem.difficulty = spec.difficulty;
            out.push(Instance { id: format!("s{:02}-{:04}", g.steps, i), steps: g.steps, problem });
        }
    }
    Ok(out)
}

/// Loads the configured file or generates the dataset.
pub fn load_or_generate(spec: &DatasetSpec) -> Result<Vec<Instance>, HarnessError> {
    match &spec.path {
        Some(p) => load_dataset(p),
        None => generate_dataset(spec),
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<Instance>, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let instances: Vec<Instance> = serde_json::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
    for inst in &instances {
        if inst.problem.min_plan_length.is_some_and(|l| l != inst.steps) {
            return Err(HarnessError::Config(format!("instance {} declares inconsistent lengths", inst.id)));
        }
    }
    Ok(instances)
}
