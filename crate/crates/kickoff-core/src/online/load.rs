//! Checkpoint surgery: carry a pretrained backbone over to a policy with a
//! different action count, re-initializing only the output head.

use std::path::Path;

use crate::nn::checkpoint::load_params;
use crate::nn::{PolicyNet, RecurrentNet};
use crate::{Error, Result};

/// Build a policy for `actions` outputs whose dense and recurrent layers are
/// copied from the checkpoint at `path`. The head is freshly initialized for
/// the new action count (seeded), never loaded, even when the counts match.
pub fn load_pretrained_except_last(
    path: &Path,
    input: usize,
    actions: usize,
    seed: u64,
) -> Result<PolicyNet> {
    let loaded = load_params(path)?;
    let dense0 = loaded.get("dense0.w").ok_or_else(|| {
        Error::invalid(format!(
            "checkpoint {} has no dense0.w entry, not a policy backbone",
            path.display()
        ))
    })?;
    let shape = dense0.shape();
    if shape.len() != 2 || shape[0] != input {
        return Err(Error::invalid(format!(
            "checkpoint dense0.w expects input {:?}, target observations have {input}",
            shape.first().copied().unwrap_or(0)
        )));
    }
    let hidden = shape[1];

    let mut policy = RecurrentNet::new_policy(input, hidden, actions, seed);
    let fresh_names: Vec<String> = policy.params.names().map(str::to_owned).collect();
    for name in &fresh_names {
        if name.starts_with("head.") {
            continue;
        }
        let source = loaded.get(name).ok_or_else(|| {
            Error::invalid(format!("checkpoint is missing backbone entry {name}"))
        })?;
        let target = policy.params.get_mut(name).expect("fresh net has its own names");
        if source.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "load_pretrained_except_last",
                lhs: source.shape().to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        target.data_mut().copy_from_slice(source.data());
    }
    for p in loaded.iter() {
        if !p.name.starts_with("head.") && !fresh_names.iter().any(|n| n == &p.name) {
            return Err(Error::invalid(format!(
                "checkpoint has extra backbone entry {}, shapes are incompatible",
                p.name
            )));
        }
    }
    Ok(policy)
}
