//! Corpus manifests: per-sample metadata, the session-augmentation policy,
//! and the speaker-grouping policies used for encoder training.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::assessment::ClassLabel;
use crate::error::{Error, Result};

/// Separator between a base speaker id and a session ordinal in augmented
/// speaker keys.
pub const SESSION_KEY_SEP: char = '#';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    M,
    F,
}

impl Sex {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "M" => Some(Self::M),
            "F" => Some(Self::F),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::M => "M",
            Self::F => "F",
        }
    }
}

/// One speech sample: a single recording with its subject metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechRecord {
    pub speaker_id: String,
    /// Visit ordinal within the speaker's longitudinal record.
    pub session_index: u32,
    pub label: ClassLabel,
    /// Age in years at the session.
    pub age: u32,
    pub sex: Sex,
    /// Mini-mental state examination score, absent when not administered.
    pub mmse: Option<u8>,
    pub audio_path: String,
}

impl SpeechRecord {
    pub fn validate(&self) -> Result<()> {
        if self.speaker_id.is_empty() {
            return Err(Error::ConfigError("speaker_id must be non-empty".into()));
        }
        if let Some(m) = self.mmse {
            if m > 30 {
                return Err(Error::ConfigError(format!(
                    "mmse must lie in [0, 30], got {m}"
                )));
            }
        }
        if self.audio_path.is_empty() {
            return Err(Error::ConfigError("audio_path must be non-empty".into()));
        }
        Ok(())
    }

    /// The per-session speaker key `speaker_id#session`.
    pub fn session_key(&self) -> String {
        format!("{}{}{}", self.speaker_id, SESSION_KEY_SEP, self.session_index)
    }
}

/// An ordered collection of speech records with unique (speaker, session)
/// pairs. `augmented` marks manifests whose speaker ids already embed the
/// session ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<SpeechRecord>,
    pub augmented: bool,
}

impl Manifest {
    /// Builds a manifest, validating every record and the uniqueness
    /// invariant. The augmented flag is inferred from the presence of the
    /// session separator in speaker ids.
    pub fn new(records: Vec<SpeechRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for record in &records {
            record.validate()?;
            if !seen.insert((record.speaker_id.clone(), record.session_index)) {
                return Err(Error::DuplicateRecord {
                    speaker: record.speaker_id.clone(),
                    session: record.session_index,
                });
            }
        }
        let augmented = records
            .iter()
            .any(|r| r.speaker_id.contains(SESSION_KEY_SEP));
        Ok(Self { records, augmented })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// (CN, IM) sample counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let im = self
            .records
            .iter()
            .filter(|r| r.label == ClassLabel::Im)
            .count();
        (self.records.len() - im, im)
    }

    /// Distinct base speaker ids (the part before any session separator).
    pub fn base_speaker_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| base_speaker_id(&r.speaker_id))
            .collect::<BTreeSet<_>>()
            .len()
    }
}

/// The part of a speaker key before the session separator.
pub fn base_speaker_id(speaker_id: &str) -> &str {
    speaker_id
        .split(SESSION_KEY_SEP)
        .next()
        .unwrap_or(speaker_id)
}

pub const CSV_HEADER: [&str; 7] = [
    "speaker_id",
    "session",
    "label",
    "age",
    "sex",
    "mmse",
    "audio_path",
];

/// Reads the documented CSV schema
/// (`speaker_id,session,label,age,sex,mmse,audio_path`). Errors name the
/// offending data row (1-based, excluding the header).
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::ParseError { row: 0, message: e.to_string() })?
        .clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != CSV_HEADER {
        return Err(Error::ParseError {
            row: 0,
            message: format!(
                "expected header {:?}, found {:?}",
                CSV_HEADER.join(","),
                found.join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let bad = |message: String| Error::ParseError { row: row_no, message };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != CSV_HEADER.len() {
            return Err(bad(format!("expected 7 fields, found {}", row.len())));
        }
        let field = |j: usize| row.get(j).unwrap_or("").trim();
        let record = SpeechRecord {
            speaker_id: field(0).to_string(),
            session_index: field(1)
                .parse()
                .map_err(|_| bad(format!("bad session index {:?}", field(1))))?,
            label: ClassLabel::parse(field(2))
                .ok_or_else(|| bad(format!("bad label {:?}", field(2))))?,
            age: field(3)
                .parse()
                .map_err(|_| bad(format!("bad age {:?}", field(3))))?,
            sex: Sex::parse(field(4)).ok_or_else(|| bad(format!("bad sex {:?}", field(4))))?,
            mmse: if field(5).is_empty() {
                None
            } else {
                Some(
                    field(5)
                        .parse()
                        .map_err(|_| bad(format!("bad mmse {:?}", field(5))))?,
                )
            },
            audio_path: field(6).to_string(),
        };
        record
            .validate()
            .map_err(|e| bad(format!("invalid record: {e}")))?;
        records.push(record);
    }
    Manifest::new(records)
}

/// Writes the documented CSV schema; `load_manifest` round-trips it.
pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e: std::io::Error| Error::io(path, e);
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| io_err(std::io::Error::other(e.to_string())))?;
    let csv_err = |e: csv::Error| io_err(std::io::Error::other(e.to_string()));
    writer.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &manifest.records {
        writer
            .write_record([
                r.speaker_id.as_str(),
                &r.session_index.to_string(),
                r.label.as_str(),
                &r.age.to_string(),
                r.sex.as_str(),
                &r.mmse.map(|m| m.to_string()).unwrap_or_default(),
                r.audio_path.as_str(),
            ])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(io_err)
}

/// Turns every (speaker, session) pair into its own sample with the unique
/// speaker key `speaker_id#session`, so later stages treat each session as
/// a distinct subject.
pub fn augment_sessions(manifest: &Manifest) -> Result<Manifest> {
    if manifest.augmented {
        return Err(Error::AlreadyAugmented);
    }
    let records = manifest
        .records
        .iter()
        .map(|r| SpeechRecord { speaker_id: r.session_key(), ..r.clone() })
        .collect();
    let mut out = Manifest::new(records)?;
    out.augmented = true;
    Ok(out)
}

/// Speaker grouping policy for encoder training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPolicy {
    /// All of a speaker's sessions pool into one identity group.
    Combined,
    /// Each (speaker, session) pair is its own identity group.
    NotCombined,
}

impl SessionPolicy {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "combined" => Some(Self::Combined),
            "not-combined" => Some(Self::NotCombined),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Combined => "combined",
            Self::NotCombined => "not-combined",
        }
    }
}

impl std::fmt::Display for SessionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Groups record indices by identity under the chosen policy. Keys are base
/// speaker ids (combined) or per-session keys (not-combined); the map is
/// ordered so iteration is deterministic.
pub fn combine_speaker_sessions(
    manifest: &Manifest,
    policy: SessionPolicy,
) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        let key = match policy {
            SessionPolicy::Combined => base_speaker_id(&r.speaker_id).to_string(),
            SessionPolicy::NotCombined => {
                if manifest.augmented {
                    // Augmented ids already embed the session ordinal.
                    r.speaker_id.clone()
                } else {
                    r.session_key()
                }
            }
        };
        groups.entry(key).or_default().push(i);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(speaker: &str, session: u32, label: ClassLabel) -> SpeechRecord {
        SpeechRecord {
            speaker_id: speaker.to_string(),
            session_index: session,
            label,
            age: 70,
            sex: Sex::F,
            mmse: Some(25),
            audio_path: format!("audio/{speaker}_s{session}.wav"),
        }
    }

    #[test]
    fn well_formed_file_loads_all_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(
            &path,
            "speaker_id,session,label,age,sex,mmse,audio_path\n\
             s001,0,CN,64,F,29,audio/s001_0.wav\n\
             s001,1,CN,65,F,30,audio/s001_1.wav\n\
             s002,0,IM,71,M,,audio/s002_0.wav\n",
        )
        .unwrap();
        let manifest = load_manifest(&path).unwrap();
        assert_eq!(manifest.len(), 3);
        assert_eq!(manifest.records[2].mmse, None);
        assert_eq!(manifest.records[2].label, ClassLabel::Im);
        assert!(!manifest.augmented);
    }

    #[test]
    fn out_of_range_mmse_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        std::fs::write(
            &path,
            "speaker_id,session,label,age,sex,mmse,audio_path\n\
             s001,0,CN,64,F,29,audio/a.wav\n\
             s002,0,IM,71,M,31,audio/b.wav\n",
        )
        .unwrap();
        match load_manifest(&path) {
            Err(Error::ParseError { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_speaker_session_pair_is_rejected() {
        let records = vec![
            record("s001", 0, ClassLabel::Cn),
            record("s001", 0, ClassLabel::Cn),
        ];
        assert!(matches!(
            Manifest::new(records),
            Err(Error::DuplicateRecord { .. })
        ));
    }

    #[test]
    fn save_load_round_trip_preserves_all_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let mut original = Manifest::new(vec![
            record("s001", 0, ClassLabel::Cn),
            record("s001", 3, ClassLabel::Im),
            SpeechRecord { mmse: None, ..record("s002", 1, ClassLabel::Im) },
        ])
        .unwrap();
        save_manifest(&original, &path).unwrap();
        let reloaded = load_manifest(&path).unwrap();
        assert_eq!(original, reloaded);

        // And an augmented manifest keeps its flag through the round trip.
        original = augment_sessions(&original).unwrap();
        save_manifest(&original, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), original);
    }

    #[test]
    fn augmentation_keys_single_session_speaker_with_session_zero() {
        let manifest = Manifest::new(vec![record("s009", 0, ClassLabel::Cn)]).unwrap();
        let augmented = augment_sessions(&manifest).unwrap();
        assert_eq!(augmented.len(), 1);
        assert_eq!(augmented.records[0].speaker_id, "s009#0");
        assert!(augmented.augmented);
    }

    #[test]
    fn double_augmentation_is_rejected() {
        let manifest = Manifest::new(vec![
            record("s001", 0, ClassLabel::Cn),
            record("s001", 1, ClassLabel::Cn),
        ])
        .unwrap();
        let once = augment_sessions(&manifest).unwrap();
        assert!(matches!(augment_sessions(&once), Err(Error::AlreadyAugmented)));
    }

    #[test]
    fn augmentation_total_matches_session_count_oracle() {
        // Random manifest: total samples after augmentation must equal the
        // sum of per-speaker session counts, and class counts must be
        // conserved even when a speaker's label changes across visits.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut records = Vec::new();
        let mut expected_sessions = 0usize;
        let mut expected_im = 0usize;
        for s in 0..40 {
            let sessions = rng.random_range(1..=5);
            expected_sessions += sessions;
            for v in 0..sessions {
                let label = if rng.random_range(0..4) == 0 {
                    ClassLabel::Im
                } else {
                    ClassLabel::Cn
                };
                if label == ClassLabel::Im {
                    expected_im += 1;
                }
                records.push(record(&format!("s{s:03}"), v as u32, label));
            }
        }
        let manifest = Manifest::new(records).unwrap();
        let augmented = augment_sessions(&manifest).unwrap();
        assert_eq!(augmented.len(), expected_sessions);
        let (cn, im) = augmented.class_counts();
        assert_eq!(im, expected_im);
        assert_eq!(cn, expected_sessions - expected_im);
        // Every augmented key is unique.
        let keys: BTreeSet<_> = augmented.records.iter().map(|r| &r.speaker_id).collect();
        assert_eq!(keys.len(), augmented.len());
    }

    #[test]
    fn grouping_policies_split_and_merge_sessions() {
        let manifest = Manifest::new(vec![
            record("s001", 0, ClassLabel::Cn),
            record("s001", 1, ClassLabel::Cn),
            record("s001", 2, ClassLabel::Im),
            record("s002", 0, ClassLabel::Im),
        ])
        .unwrap();
        let combined = combine_speaker_sessions(&manifest, SessionPolicy::Combined);
        assert_eq!(combined.len(), 2);
        assert_eq!(combined["s001"], vec![0, 1, 2]);

        let split = combine_speaker_sessions(&manifest, SessionPolicy::NotCombined);
        assert_eq!(split.len(), 4);
        assert_eq!(split["s001#1"], vec![1]);
    }

    #[test]
    fn combined_group_count_equals_distinct_base_ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut records = Vec::new();
        for s in 0..25 {
            for v in 0..rng.random_range(1..=4) {
                records.push(record(&format!("p{s}"), v as u32, ClassLabel::Cn));
            }
        }
        let manifest = Manifest::new(records).unwrap();
        let combined = combine_speaker_sessions(&manifest, SessionPolicy::Combined);
        assert_eq!(combined.len(), manifest.base_speaker_count());
        let split = combine_speaker_sessions(&manifest, SessionPolicy::NotCombined);
        assert!(combined.len() <= split.len());
        assert_eq!(split.len(), manifest.len());

        // After augmentation, grouping still resolves the same partitions.
        let augmented = augment_sessions(&manifest).unwrap();
        let combined_aug = combine_speaker_sessions(&augmented, SessionPolicy::Combined);
        assert_eq!(combined_aug.len(), combined.len());
        let split_aug = combine_speaker_sessions(&augmented, SessionPolicy::NotCombined);
        assert_eq!(split_aug.len(), split.len());
    }
}
