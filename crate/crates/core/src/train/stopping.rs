/// Patience-based early stopping on a validation score (higher is better).
///
/// Only strict improvements reset the counter, so ties keep the earlier epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_score: Option<f64>,
    pub best_epoch: usize,
    pub since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_score: None,
            best_epoch: 0,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best_score {
            Some(best) if score <= best => {
                self.since_best += 1;
                if self.since_best >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best_score = Some(score);
                self.best_epoch = epoch;
                self.since_best = 0;
                StopDecision::Improved
            }
        }
    }
}
