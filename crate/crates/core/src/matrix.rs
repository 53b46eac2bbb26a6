//! Dense labelled feature matrices and their on-disk form.
//!
//! A matrix file is TSV with `user_id`, `item_id`, an optional `label`
//! column and one column per feature. The schema lives next to it in
//! `<file>.schema.tsv` (name, group, sentinel).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{data_rows, read_file, write_file, ItemId, UserId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub group: String,
    /// Value used when the feature is undefined for a pair.
    pub sentinel: f64,
}

impl FeatureDef {
    pub fn new(name: impl Into<String>, group: impl Into<String>, sentinel: f64) -> Self {
        FeatureDef {
            name: name.into(),
            group: group.into(),
            sentinel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<FeatureDef>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDef>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate feature name {:?}", f.name)));
            }
        }
        Ok(FeatureSchema { features })
    }

    /// `f0..f{n-1}` in a single group, for tests and ad hoc matrices.
    pub fn anonymous(n: usize) -> Self {
        FeatureSchema {
            features: (0..n).map(|i| FeatureDef::new(format!("f{i}"), "all", -1.0)).collect(),
        }
    }

    pub fn features(&self) -> &[FeatureDef] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn ensure_same(&self, other: &FeatureSchema) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} features vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.features.iter().zip(&other.features) {
            if a.name != b.name || a.group != b.group || a.sentinel.to_bits() != b.sentinel.to_bits() {
                return Err(Error::SchemaMismatch(format!("feature {:?} vs {:?}", a.name, b.name)));
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("name\tgroup\tsentinel\n");
        for f in &self.features {
            let _ = writeln!(out, "{}\t{}\t{}", f.name, f.group, f.sentinel);
        }
        out
    }

    pub fn from_tsv(text: &str, file: &str) -> Result<Self> {
        let mut features = Vec::new();
        for (line, fields) in data_rows(text) {
            let [name, group, sentinel] = fields[..] else {
                return Err(Error::parse(file, line, format!("expected 3 columns, found {}", fields.len())));
            };
            let sentinel = sentinel
                .parse()
                .map_err(|e| Error::parse(file, line, format!("sentinel {sentinel:?}: {e}")))?;
            features.push(FeatureDef::new(name, group, sentinel));
        }
        FeatureSchema::new(features)
    }
}

/// Row-major dense matrix keyed by (user, item).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: FeatureSchema,
    pub keys: Vec<(UserId, ItemId)>,
    pub values: Vec<f64>,
    pub labels: Option<Vec<u8>>,
}

impl FeatureMatrix {
    pub fn new(
        schema: FeatureSchema,
        keys: Vec<(UserId, ItemId)>,
        values: Vec<f64>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        if values.len() != keys.len() * schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} values for {} rows of width {}",
                values.len(),
                keys.len(),
                schema.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != keys.len() {
                return Err(Error::SchemaMismatch(format!("{} labels for {} rows", l.len(), keys.len())));
            }
            if l.iter().any(|&y| y > 1) {
                return Err(Error::SchemaMismatch("labels must be 0 or 1".into()));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let column = schema.features[pos % schema.len()].name.clone();
            return Err(Error::NonFiniteFeature { column });
        }
        Ok(FeatureMatrix {
            schema,
            keys,
            values,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.n_cols();
        &self.values[r * w..(r + 1) * w]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_cols() + c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks(self.n_cols().max(1)).take(self.n_rows())
    }

    /// Copy of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            schema: self.schema.clone(),
            keys: rows.iter().map(|&r| self.keys[r]).collect(),
            values,
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }

    pub fn to_tsv(&self, header_comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(h) = header_comment {
            let _ = writeln!(out, "{h}");
        }
        out.push_str("user_id\titem_id");
        if self.labels.is_some() {
            out.push_str("\tlabel");
        }
        for f in self.schema.features() {
            out.push('\t');
            out.push_str(&f.name);
        }
        out.push('\n');
        for (r, (u, i)) in self.keys.iter().enumerate() {
            let _ = write!(out, "{u}\t{i}");
            if let Some(l) = &self.labels {
                let _ = write!(out, "\t{}", l[r]);
            }
            for v in self.row(r) {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str, schema: FeatureSchema, file: &str) -> Result<Self> {
        let header = text
            .lines()
            .find(|l| !l.starts_with('#') && !l.trim().is_empty())
            .ok_or_else(|| Error::parse(file, 1, "missing header"))?;
        let cols: Vec<&str> = header.split('\t').collect();
        let labelled = cols.get(2) == Some(&"label");
        let offset = if labelled { 3 } else { 2 };
        let names: Vec<&str> = cols.iter().skip(offset).copied().collect();
        let expected: Vec<&str> = schema.features().iter().map(|f| f.name.as_str()).collect();
        if names != expected {
            return Err(Error::SchemaMismatch(format!("{file}: header does not match schema")));
        }
        let width = offset + schema.len();
        let mut keys = Vec::new();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (line, fields) in data_rows(text) {
            if fields.len() != width {
                return Err(Error::parse(file, line, format!("expected {width} columns, found {}", fields.len())));
            }
            let num = |s: &str| -> Result<u32> { s.parse().map_err(|e| Error::parse(file, line, format!("{s:?}: {e}"))) };
            keys.push((num(fields[0])?, num(fields[1])?));
            if labelled {
                labels.push(num(fields[2])? as u8);
            }
            for s in &fields[offset..] {
                values.push(s.parse::<f64>().map_err(|e| Error::parse(file, line, format!("{s:?}: {e}")))?);
            }
        }
        FeatureMatrix::new(schema, keys, values, labelled.then_some(labels))
    }

    pub fn schema_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".schema.tsv");
        PathBuf::from(s)
    }

    pub fn save(&self, path: &Path, header_comment: Option<&str>) -> Result<()> {
        write_file(&Self::schema_path(path), &self.schema.to_tsv())?;
        write_file(path, &self.to_tsv(header_comment))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let schema_path = Self::schema_path(path);
        let schema = FeatureSchema::from_tsv(&read_file(&schema_path)?, &schema_path.display().to_string())?;
        FeatureMatrix::from_tsv(&read_file(path)?, schema, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(labels: bool) -> FeatureMatrix {
        let schema = FeatureSchema::new(vec![
            FeatureDef::new("a", "g1", -1.0),
            FeatureDef::new("b", "g2", -999.0),
        ])
        .unwrap();
        FeatureMatrix::new(
            schema,
            vec![(1, 2), (1, 3), (4, 2)],
            vec![0.1, 1e-17, -1.0, 1.0 / 3.0, 1234567.891, f64::MIN_POSITIVE],
            labels.then(|| vec![1, 0, 0]),
        )
        .unwrap()
    }

    #[test]
    fn tsv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for labelled in [true, false] {
            let m = sample(labelled);
            let path = dir.path().join("m.tsv");
            m.save(&path, Some("# provenance: test")).unwrap();
            let back = FeatureMatrix::load(&path).unwrap();
            assert_eq!(back.keys, m.keys);
            assert_eq!(back.labels, m.labels);
            assert!(back.values.iter().zip(&m.values).all(|(a, b)| a.to_bits() == b.to_bits()));
            assert_eq!(back.schema, m.schema);
        }
        assert!(!sample(false).to_tsv(None).lines().next().unwrap().contains("label"));
    }

    #[test]
    fn rejects_bad_shapes() {
        let schema = FeatureSchema::anonymous(2);
        assert!(FeatureMatrix::new(schema.clone(), vec![(1, 1)], vec![1.0], None).is_err());
        assert!(matches!(
            FeatureMatrix::new(schema.clone(), vec![(1, 1)], vec![1.0, f64::NAN], None),
            Err(Error::NonFiniteFeature { .. })
        ));
        assert!(FeatureMatrix::new(schema, vec![(1, 1)], vec![1.0, 2.0], Some(vec![2])).is_err());
        assert!(FeatureSchema::new(vec![FeatureDef::new("x", "g", 0.0), FeatureDef::new("x", "g", 0.0)]).is_err());
    }

    #[test]
    fn schema_comparison() {
        let a = FeatureSchema::anonymous(3);
        assert!(a.ensure_same(&a.clone()).is_ok());
        assert!(a.ensure_same(&FeatureSchema::anonymous(2)).is_err());
        let text = sample(true).to_tsv(None).replace("\tb\n", "\tc\n");
        assert!(FeatureMatrix::from_tsv(&text, sample(true).schema, "m").is_err());
    }

    #[test]
    fn select_rows_keeps_alignment() {
        let m = sample(true);
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.keys, vec![(4, 2), (1, 2)]);
        assert_eq!(s.row(0), m.row(2));
        assert_eq!(s.labels, Some(vec![0, 1]));
    }
}
