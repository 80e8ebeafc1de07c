use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DatarowKey, PanelDataset};

/// One full rolling window of history.
pub const DEFAULT_MIN_HISTORY: usize = 15;

/// Partition of a panel's keys into rows with enough history to train on and
/// rows that are only forecast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilitySplit {
    pub trainable: BTreeSet<DatarowKey>,
    pub out_of_sample: BTreeSet<DatarowKey>,
    pub min_history: usize,
}

impl EligibilitySplit {
    pub fn trainable_fraction(&self) -> f64 {
        let n = self.trainable.len() + self.out_of_sample.len();
        if n == 0 {
            0.0
        } else {
            self.trainable.len() as f64 / n as f64
        }
    }
}

/// A row is trainable when it has at least `min_history` contiguous quarters
/// ending at the last training quarter. `min_history` of 0 behaves as 1.
pub fn split_eligibility(panel: &PanelDataset, min_history: usize) -> EligibilitySplit {
    split_eligibility_at(panel, panel.train_end(), min_history)
}

/// [`split_eligibility`] for an explicit exclusive training end.
pub fn split_eligibility_at(panel: &PanelDataset, train_end: usize, min_history: usize) -> EligibilitySplit {
    let min_history = min_history.max(1);
    let mut split = EligibilitySplit {
        trainable: BTreeSet::new(),
        out_of_sample: BTreeSet::new(),
        min_history,
    };
    for row in panel.rows() {
        let reaches_end = row.end_quarter() >= train_end;
        let history = row.values_before(train_end).len();
        if reaches_end && history >= min_history {
            split.trainable.insert(row.key().clone());
        } else {
            split.out_of_sample.insert(row.key().clone());
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{Datarow, Quarter};

    fn panel(rows: Vec<(usize, usize)>) -> PanelDataset {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, (first, len))| {
                Datarow::new(
                    DatarowKey::new("s", "r", format!("p{i}")).unwrap(),
                    first,
                    vec![1.0; len],
                )
                .unwrap()
            })
            .collect();
        PanelDataset::new(rows, 39, 4, Quarter::default()).unwrap()
    }

    #[test]
    fn full_rows_all_trainable() {
        let split = split_eligibility(&panel(vec![(0, 39), (0, 39)]), 15);
        assert!(split.out_of_sample.is_empty());
        assert_eq!(split.trainable.len(), 2);
    }

    #[test]
    fn short_row_out_of_sample() {
        let split = split_eligibility(&panel(vec![(0, 39), (29, 10)]), 15);
        assert_eq!(split.out_of_sample.len(), 1);
        assert!(split.out_of_sample.iter().all(|k| k.product == "p1"));
    }

    #[test]
    fn boundary_is_inclusive() {
        // exactly 15 training quarters: 20..35
        let split = split_eligibility(&panel(vec![(20, 19), (21, 18)]), 15);
        assert_eq!(split.trainable.len(), 1);
        assert_eq!(split.out_of_sample.len(), 1);
    }

    #[test]
    fn row_ending_early_is_out_of_sample() {
        let split = split_eligibility(&panel(vec![(0, 30)]), 15);
        assert_eq!(split.out_of_sample.len(), 1);
    }
}
