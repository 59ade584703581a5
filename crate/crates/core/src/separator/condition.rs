//! Speaker conditioning for the separator: either learned per-speaker
//! embedding vectors (from a frozen speaker encoder) or one-hot identity
//! vectors over a fixed speaker list.

use std::collections::BTreeMap;

use ndarray::Array1;

use crate::error::{Error, Result};

/// Where the per-speaker conditioning vector comes from. The separator never
/// mutates the source, so a frozen conditioner stays frozen by construction.
#[derive(Debug, Clone)]
pub enum ConditioningSource {
    /// Precomputed vectors keyed by speaker, typically speaker-level
    /// averaged embeddings from a pretrained or finetuned encoder.
    Embeddings(BTreeMap<String, Array1<f32>>),
    /// One-hot identity over this ordered speaker list.
    OneHot(Vec<String>),
}

impl ConditioningSource {
    /// Width of the vectors this source produces.
    pub fn dim(&self) -> Result<usize> {
        match self {
            Self::Embeddings(map) => map
                .values()
                .next()
                .map(|v| v.len())
                .ok_or_else(|| Error::EmptyInput("conditioning map is empty".into())),
            Self::OneHot(speakers) => {
                if speakers.is_empty() {
                    Err(Error::EmptyInput("one-hot speaker list is empty".into()))
                } else {
                    Ok(speakers.len())
                }
            }
        }
    }

    /// The conditioning vector for `speaker_key`.
    pub fn resolve(&self, speaker_key: &str) -> Result<Array1<f32>> {
        match self {
            Self::Embeddings(map) => map.get(speaker_key).cloned().ok_or(Error::MissingSpeaker(
                speaker_key.to_string(),
            )),
            Self::OneHot(speakers) => {
                let idx = speakers
                    .iter()
                    .position(|s| s == speaker_key)
                    .ok_or(Error::MissingSpeaker(speaker_key.to_string()))?;
                let mut v = Array1::zeros(speakers.len());
                v[idx] = 1.0;
                Ok(v)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_vectors_are_identity_rows() {
        let src = ConditioningSource::OneHot(vec!["a".into(), "b".into(), "c".into()]);
        assert_eq!(src.dim().unwrap(), 3);
        let v = src.resolve("b").unwrap();
        assert_eq!(v.to_vec(), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn unknown_speaker_is_reported() {
        let src = ConditioningSource::OneHot(vec!["a".into()]);
        assert!(matches!(src.resolve("zz"), Err(Error::MissingSpeaker(_))));
        let emb = ConditioningSource::Embeddings(BTreeMap::new());
        assert!(matches!(emb.dim(), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn embedding_map_resolves_by_key() {
        let mut map = BTreeMap::new();
        map.insert("s1".to_string(), Array1::from_vec(vec![0.5, -0.5]));
        let src = ConditioningSource::Embeddings(map);
        assert_eq!(src.dim().unwrap(), 2);
        assert_eq!(src.resolve("s1").unwrap().to_vec(), vec![0.5, -0.5]);
    }
}
