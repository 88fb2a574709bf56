use serde::{Deserialize, Serialize};

/// Reduce-on-plateau learning-rate schedule driven by validation loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub current_lr: f64,
    pub floor_lr: f64,
    pub patience: usize,
    pub factor: f64,
    pub best_val_loss: f64,
    pub epochs_since_improve: usize,
}

// Relative slack when comparing a reduced rate against the floor, so that
// 1e-4 * 0.1^3 still counts as reaching 1e-7.
const FLOOR_SLACK: f64 = 1e-9;

impl PlateauSchedule {
    pub fn new(initial_lr: f64, floor_lr: f64, patience: usize, factor: f64) -> Self {
        Self {
            current_lr: initial_lr,
            floor_lr,
            patience,
            factor,
            best_val_loss: f64::INFINITY,
            epochs_since_improve: 0,
        }
    }

    /// Feeds one epoch's validation loss. Returns `true` when a reduction
    /// would push the rate below the floor, i.e. training should stop.
    pub fn update(&mut self, val_loss: f64) -> bool {
        debug_assert!(val_loss.is_finite(), "validation loss must be finite");
        if val_loss < self.best_val_loss {
            self.best_val_loss = val_loss;
            self.epochs_since_improve = 0;
            return false;
        }
        self.epochs_since_improve += 1;
        if self.epochs_since_improve < self.patience {
            return false;
        }
        self.epochs_since_improve = 0;
        let reduced = self.current_lr * self.factor;
        if reduced < self.floor_lr * (1.0 - FLOOR_SLACK) {
            return true;
        }
        self.current_lr = reduced.max(self.floor_lr);
        false
    }
}
