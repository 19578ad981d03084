use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KdIndex;
use crate::error::{Error, Result};
use crate::geometry::{read_cloud, write_cloud, PointCloud};
use crate::COMPLETE_POINTS;

const MANIFEST: &str = "manifest.jsonl";

#[derive(Clone, Debug)]
pub struct BankEntry {
    pub id: String,
    pub category: String,
    pub cloud: PointCloud,
    pub index: KdIndex,
}

/// One line of a bank directory's `manifest.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankRecord {
    pub id: String,
    pub category: String,
    pub file: String,
}

/// Indexed collection of complete, normalized clouds of `COMPLETE_POINTS` points.
#[derive(Clone, Debug, Default)]
pub struct ShapeBank {
    entries: Vec<BankEntry>,
    ids: HashSet<String>,
}

impl ShapeBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, category: impl Into<String>, cloud: PointCloud) -> Result<()> {
        let id = id.into();
        if cloud.len() != COMPLETE_POINTS {
            return Err(Error::Bank(format!(
                "entry `{id}` has {} points, expected {COMPLETE_POINTS}",
                cloud.len()
            )));
        }
        if !self.ids.insert(id.clone()) {
            return Err(Error::Bank(format!("duplicate id `{id}`")));
        }
        let index = KdIndex::new(&cloud);
        self.entries.push(BankEntry {
            id,
            category: category.into(),
            cloud,
            index,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&BankEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn category<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a BankEntry> + 'a {
        self.entries.iter().filter(move |e| e.category == category)
    }

    pub fn categories(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for e in &self.entries {
            if !seen.contains(&e.category) {
                seen.push(e.category.clone());
            }
        }
        seen
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Vec::new();
        for e in &self.entries {
            let file = format!("{}.pcq", e.id);
            write_cloud(dir.join(&file), &e.cloud)?;
            let rec = BankRecord {
                id: e.id.clone(),
                category: e.category.clone(),
                file,
            };
            serde_json::to_writer(&mut manifest, &rec)?;
            manifest.push(b'\n');
        }
        let path = dir.join(MANIFEST);
        fs::File::create(&path)
            .and_then(|mut f| f.write_all(&manifest))
            .map_err(|e| Error::io(&path, e))
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut bank = ShapeBank::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let rec: BankRecord = serde_json::from_str(line)?;
            let cloud = read_cloud(dir.join(&rec.file))?.with_id(rec.id.clone());
            bank.push(rec.id, rec.category, cloud)?;
        }
        Ok(bank)
    }

    /// True when `dir` holds a bank manifest (as opposed to a dataset manifest).
    pub fn is_bank_dir(dir: impl AsRef<Path>) -> bool {
        let Ok(text) = fs::read_to_string(dir.as_ref().join(MANIFEST)) else {
            return false;
        };
        text.lines()
            .find(|l| !l.trim().is_empty())
            .is_some_and(|l| serde_json::from_str::<BankRecord>(l).is_ok())
    }
}
