use std::sync::Arc;

use super::{BackendKind, BackendSpec, HarnessError};
use crate::blocks::{render_prompt, DistanceOracle, Problem, PromptTemplate};
use crate::policy::{RemotePolicy, SyntheticPolicy, Vocabulary};
use crate::search::Policies;

/// Builds the expert, amateur and draft models for one problem, plus the
/// distance oracle when a synthetic backend needed one anyway.
pub fn build_policies(
    spec: &BackendSpec,
    problem: &Problem,
) -> Result<(Policies, Option<Arc<DistanceOracle>>), HarnessError> {
    match spec.kind {
        BackendKind::Synthetic => {
            let p = Arc::new(problem.clone());
            let oracle = Arc::new(DistanceOracle::new(problem)?);
            let make = |name: &str, cfg| -> Result<_, HarnessError> {
                Ok(Arc::new(SyntheticPolicy::new(name, cfg, p.clone(), oracle.clone())?))
            };
            let expert = make("expert", spec.expert.clone())?;
            let amateur = make("amateur", spec.amateur.clone())?;
            let policies = match &spec.draft {
                Some(d) => Policies { expert, amateur, draft: make("draft", d.clone())? },
                None => Policies::shared(expert, amateur),
            };
            Ok((policies, Some(oracle)))
        }
        BackendKind::Remote => {
            let r = &spec.remote;
            let vocab = Vocabulary::blocksworld(&problem.blocks)?;
            let prompt = render_prompt(problem, &[], &PromptTemplate::zero_shot(r.template))?;
            let make = |name: &str, cfg| -> Result<_, HarnessError> {
                Ok(Arc::new(RemotePolicy::new(name, cfg, vocab.clone(), prompt.clone())?))
            };
            let expert = make("expert", r.expert.clone())?;
            let amateur = make("amateur", r.amateur.clone())?;
            let policies = match &r.draft {
                Some(d) => Policies { expert, amateur, draft: make("draft", d.clone())? },
                None => Policies::shared(expert, amateur),
            };
            Ok((policies, None))
        }
    }
}
