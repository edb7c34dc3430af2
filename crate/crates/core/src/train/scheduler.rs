use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiplies the learning rate by `factor` once the monitored value has
/// not strictly improved on its best for `patience` consecutive epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub best: Option<f64>,
    pub num_bad: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if !(factor > 0.0 && factor < 1.0) {
            return Err(Error::invalid(format!("plateau factor must be in (0, 1), got {factor}")));
        }
        if patience == 0 {
            return Err(Error::invalid("plateau patience must be at least 1"));
        }
        Ok(Self { lr, factor, patience, best: None, num_bad: 0 })
    }

    /// Records one epoch's value and returns the learning rate for the next.
    pub fn observe(&mut self, value: f64) -> f64 {
        match self.best {
            Some(b) if !(value < b) => self.num_bad += 1,
            _ => {
                self.best = Some(value);
                self.num_bad = 0;
            }
        }
        if self.num_bad >= self.patience {
            self.lr *= self.factor;
            self.num_bad = 0;
        }
        self.lr
    }
}

/// Learning rate in effect after each epoch of `values`.
pub fn lr_trace(values: &[f64], lr: f64, factor: f64, patience: usize) -> Result<Vec<f64>> {
    let mut s = PlateauScheduler::new(lr, factor, patience)?;
    Ok(values.iter().map(|&v| s.observe(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_flat_epochs_drop_once() {
        let t = lr_trace(&[1.0; 11], 1e-4, 0.2, 10).unwrap();
        assert!(t[..10].iter().all(|&v| v == 1e-4));
        assert_eq!(t[10], 1e-4 * 0.2);
    }

    #[test]
    fn twenty_five_flat_epochs_drop_twice() {
        let t = lr_trace(&[3.0; 25], 1e-4, 0.2, 10).unwrap();
        assert_eq!(t[20], 1e-4 * 0.2 * 0.2);
        assert_eq!(t[24], t[20]);
        let distinct: Vec<f64> = t.iter().fold(Vec::new(), |mut acc, &v| {
            if acc.last() != Some(&v) {
                acc.push(v);
            }
            acc
        });
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn decreasing_loss_keeps_lr() {
        let vals: Vec<f64> = (0..50).map(|i| 100.0 - i as f64).collect();
        assert!(lr_trace(&vals, 1e-4, 0.2, 10).unwrap().iter().all(|&v| v == 1e-4));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        assert!(PlateauScheduler::new(1e-4, 1.0, 10).is_err());
        assert!(PlateauScheduler::new(0.0, 0.2, 10).is_err());
    }
}
