use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `patience` epochs passed without a new minimum.
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop(StopReason),
}

/// Stop once the minimum epoch loss is `patience` epochs old, or when
/// `max_epochs` epochs have run. Only a strictly lower loss counts as an
/// improvement.
pub fn early_stop(history: &[f64], patience: usize, max_epochs: usize) -> StopDecision {
    assert!(!history.is_empty(), "early_stop needs at least one epoch");
    let mut best = 0;
    for (i, &loss) in history.iter().enumerate() {
        if loss < history[best] {
            best = i;
        }
    }
    if history.len() - 1 - best >= patience {
        StopDecision::Stop(StopReason::Patience)
    } else if history.len() >= max_epochs {
        StopDecision::Stop(StopReason::MaxEpochs)
    } else {
        StopDecision::Continue
    }
}
