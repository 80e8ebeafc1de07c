use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{DatarowKey, PanelDataset};
use crate::scalar::Scalar;

/// Sorted label vocabularies for the three hierarchy levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Vocabulary {
    pub segments: Vec<String>,
    pub regions: Vec<String>,
    pub products: Vec<String>,
}

/// One-hot indicator encoding of a datarow key.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoding {
    pub segment_index: usize,
    pub region_index: usize,
    pub product_index: usize,
    pub one_hot: Vec<f64>,
}

impl Vocabulary {
    pub fn from_keys<'a>(keys: impl IntoIterator<Item = &'a DatarowKey>) -> Self {
        let mut s = BTreeSet::new();
        let mut r = BTreeSet::new();
        let mut p = BTreeSet::new();
        for k in keys {
            s.insert(k.segment.clone());
            r.insert(k.region.clone());
            p.insert(k.product.clone());
        }
        Self {
            segments: s.into_iter().collect(),
            regions: r.into_iter().collect(),
            products: p.into_iter().collect(),
        }
    }

    pub fn from_panel(panel: &PanelDataset) -> Self {
        Self::from_keys(panel.keys())
    }

    pub fn len(&self) -> usize {
        self.segments.len() + self.regions.len() + self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn encode(&self, key: &DatarowKey) -> Result<FeatureEncoding> {
        let find = |labels: &[String], label: &str, level: &str| {
            labels
                .binary_search_by(|l| l.as_str().cmp(label))
                .map_err(|_| Error::Validation(format!("{level} {label:?} of {key} not in vocabulary")))
        };
        let segment_index = find(&self.segments, &key.segment, "segment")?;
        let region_index = find(&self.regions, &key.region, "region")?;
        let product_index = find(&self.products, &key.product, "product")?;
        let mut one_hot = vec![0.0; self.len()];
        one_hot[segment_index] = 1.0;
        one_hot[self.segments.len() + region_index] = 1.0;
        one_hot[self.segments.len() + self.regions.len() + product_index] = 1.0;
        Ok(FeatureEncoding {
            segment_index,
            region_index,
            product_index,
            one_hot,
        })
    }
}

impl FeatureEncoding {
    pub fn as_scalars<T: Scalar>(&self) -> Vec<T> {
        self.one_hot.iter().map(|v| T::lit(*v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_three_ones() {
        let keys = [
            DatarowKey::new("B", "EU", "X").unwrap(),
            DatarowKey::new("A", "US", "Y").unwrap(),
            DatarowKey::new("A", "EU", "Z").unwrap(),
        ];
        let vocab = Vocabulary::from_keys(&keys);
        assert_eq!(vocab.len(), 2 + 2 + 3);
        for k in &keys {
            let enc = vocab.encode(k).unwrap();
            assert_eq!(enc.one_hot.len(), 7);
            assert_eq!(enc.one_hot.iter().sum::<f64>(), 3.0);
        }
        let enc = vocab.encode(&keys[0]).unwrap();
        assert_eq!((enc.segment_index, enc.region_index, enc.product_index), (1, 0, 0));
        assert!(vocab.encode(&DatarowKey::new("C", "EU", "X").unwrap()).is_err());
    }
}
