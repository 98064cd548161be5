//! Numeric encoding of feature vectors at the model boundary.
//!
//! Categorical features are one-hot encoded against the vocabulary seen in
//! training, plus an `other` column that absorbs categories first seen at
//! prediction time.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::FeatureVector;
use crate::schema::Season;

pub const FEATURE_SCHEMA_VERSION: u32 = 1;
pub const OTHER_CATEGORY: &str = "other";

/// Which engineered features the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureGroups {
    pub lead_time: bool,
    pub hour_of_day: bool,
    pub day_of_week: bool,
    pub season: bool,
    pub specialty: bool,
    pub site: bool,
    pub patient_history: bool,
}

impl Default for FeatureGroups {
    fn default() -> Self {
        Self {
            lead_time: true,
            hour_of_day: true,
            day_of_week: true,
            season: true,
            specialty: true,
            site: true,
            patient_history: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub groups: FeatureGroups,
    /// Training vocabulary, sorted.
    pub specialties: Vec<String>,
    pub sites: Vec<String>,
}

impl FeatureSchema {
    /// Builds the schema from the categories present in `rows`.
    pub fn fit(rows: &[FeatureVector], groups: FeatureGroups) -> Self {
        let vocab = |get: fn(&FeatureVector) -> &str| {
            let mut v: Vec<String> = rows.iter().map(|r| get(r).to_string()).collect();
            v.sort();
            v.dedup();
            v.retain(|c| c != OTHER_CATEGORY);
            v
        };
        Self {
            version: FEATURE_SCHEMA_VERSION,
            groups,
            specialties: if groups.specialty { vocab(|r| &r.provider_specialty) } else { vec![] },
            sites: if groups.site { vocab(|r| &r.site_id) } else { vec![] },
        }
    }

    /// Names of the encoded columns, in order.
    pub fn columns(&self) -> Vec<String> {
        let g = &self.groups;
        let mut cols = Vec::new();
        if g.lead_time {
            cols.push("lead_time_days".to_string());
        }
        if g.hour_of_day {
            cols.push("hour_of_day".into());
        }
        if g.day_of_week {
            cols.push("day_of_week".into());
        }
        if g.patient_history {
            cols.push("patient_hist_rate".into());
            cols.push("patient_prior_appointments".into());
        }
        if g.season {
            cols.extend(Season::ALL.iter().map(|s| format!("season={}", s.as_str())));
        }
        if g.specialty {
            cols.extend(self.specialties.iter().map(|s| format!("specialty={s}")));
            cols.push(format!("specialty={OTHER_CATEGORY}"));
        }
        if g.site {
            cols.extend(self.sites.iter().map(|s| format!("site={s}")));
            cols.push(format!("site={OTHER_CATEGORY}"));
        }
        cols
    }

    pub fn n_columns(&self) -> usize {
        self.columns().len()
    }

    /// Hex SHA-256 of the schema version and encoded column names.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("feature-schema/v{}\n", self.version));
        for c in self.columns() {
            h.update(c.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    fn encode_row(&self, f: &FeatureVector, out: &mut Vec<f64>) {
        let g = &self.groups;
        if g.lead_time {
            out.push(f.lead_time_days);
        }
        if g.hour_of_day {
            out.push(f.hour_of_day as f64);
        }
        if g.day_of_week {
            out.push(f.day_of_week as f64);
        }
        if g.patient_history {
            out.push(f.patient_hist_rate);
            out.push(f.patient_prior_appointments as f64);
        }
        if g.season {
            out.extend(Season::ALL.iter().map(|s| (*s == f.season) as u8 as f64));
        }
        if g.specialty {
            one_hot(&self.specialties, &f.provider_specialty, out);
        }
        if g.site {
            one_hot(&self.sites, &f.site_id, out);
        }
    }

    pub fn encode(&self, rows: &[FeatureVector]) -> EncodedTable {
        let n_cols = self.n_columns();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            self.encode_row(r, &mut data);
        }
        EncodedTable { fingerprint: self.fingerprint(), n_cols, data }
    }
}

fn one_hot(vocab: &[String], value: &str, out: &mut Vec<f64>) {
    let hit = vocab.binary_search_by(|v| v.as_str().cmp(value)).ok();
    out.extend((0..vocab.len()).map(|i| (hit == Some(i)) as u8 as f64));
    out.push(hit.is_none() as u8 as f64);
}

/// Dense row-major numeric table tagged with the fingerprint of the schema
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTable {
    pub fingerprint: String,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl EncodedTable {
    pub fn from_rows(fingerprint: String, rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self { fingerprint, n_cols, data: rows.concat() }
    }

    pub fn n_rows(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.data.len() / self.n_cols
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols + col]
    }

    /// Column-major copy, the layout the tree builder scans.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_cols)
            .map(|c| (0..self.n_rows()).map(|r| self.value(r, c)).collect())
            .collect()
    }
}
