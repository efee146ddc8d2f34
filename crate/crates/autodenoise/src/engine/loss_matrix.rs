//! Circular per-instance loss store backing the reward: the last C epochs'
//! losses for every train position, overwritten oldest-first.

use crate::error::{Error, Result};

/// One epoch's per-instance losses, indexed by train global_position.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector {
    values: Vec<f64>,
}

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("LossVector"));
        }
        Ok(LossVector { values })
    }

    /// Assembles from per-position slots, requiring every position filled
    /// exactly once.
    pub fn from_slots(slots: Vec<Option<f64>>) -> Result<Self> {
        let mut values = Vec::with_capacity(slots.len());
        for (pos, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(v) => values.push(v),
                None => return Err(Error::state(format!("loss vector missing position {pos}"))),
            }
        }
        LossVector::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, position: usize) -> f64 {
        self.values[position]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// C x total store of recent epochs' per-instance losses. The write slot
/// for overall-loop epoch `t` (1-indexed) is `(t - 1) % C`, so after the
/// warm-up fills all rows the oldest epoch is always the one replaced.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    stored_epochs: usize,
    total: usize,
    /// Row-major C x total.
    values: Vec<f64>,
    filled_epochs: usize,
}

impl LossMatrix {
    pub fn new(stored_epochs: usize, total: usize) -> Result<Self> {
        if stored_epochs == 0 {
            return Err(Error::config("LossMatrix needs at least one stored epoch"));
        }
        if total == 0 {
            return Err(Error::config("LossMatrix needs at least one instance slot"));
        }
        Ok(LossMatrix {
            stored_epochs,
            total,
            values: vec![0.0; stored_epochs * total],
            filled_epochs: 0,
        })
    }

    pub fn stored_epochs(&self) -> usize {
        self.stored_epochs
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn filled_epochs(&self) -> usize {
        self.filled_epochs
    }

    pub fn is_filled(&self) -> bool {
        self.filled_epochs >= self.stored_epochs
    }

    /// Slot receiving overall-loop epoch `t` (1-indexed).
    pub fn slot_for_epoch(&self, t: usize) -> usize {
        (t - 1) % self.stored_epochs
    }

    pub fn write_row(&mut self, row: usize, losses: &LossVector) -> Result<()> {
        if row >= self.stored_epochs {
            return Err(Error::shape(format!(
                "row {row} out of range for {} stored epochs",
                self.stored_epochs
            )));
        }
        if losses.len() != self.total {
            return Err(Error::shape(format!(
                "loss vector of {} entries into matrix with {} slots",
                losses.len(),
                self.total
            )));
        }
        self.values[row * self.total..(row + 1) * self.total].copy_from_slice(losses.values());
        self.filled_epochs = (self.filled_epochs + 1).min(self.stored_epochs);
        Ok(())
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.total..(row + 1) * self.total]
    }

    /// Mean stored loss for one position across the C epochs.
    pub fn average(&self, position: usize) -> Result<f64> {
        if !self.is_filled() {
            return Err(Error::state(format!(
                "loss matrix has {} of {} epochs filled",
                self.filled_epochs, self.stored_epochs
            )));
        }
        if position >= self.total {
            return Err(Error::shape(format!("position {position} out of range")));
        }
        let mut sum = 0.0;
        for c in 0..self.stored_epochs {
            sum += self.values[c * self.total + position];
        }
        Ok(sum / self.stored_epochs as f64)
    }
}

/// The per-instance reward: stored average minus the current loss.
/// Positive means the instance's loss improved on its recent history.
pub fn compute_reward(lmat: &LossMatrix, current_loss: f64, position: usize) -> Result<f64> {
    Ok(lmat.average(position)? - current_loss)
}
