//! Binary cache of prepared splits.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `DCFD` |
//! | 4 | `u32` version, currently 1 |
//! | 32 | SHA-256 cache key |
//! | 8 | `u64` length `m` of the metadata block |
//! | m | UTF-8 JSON: names, class/group counts, positive class, unseen tally |
//! | 4 | `u32` feature dimension `d` |
//!
//! followed by the train, validation and test splits, each as
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | `u64` row count `n` |
//! | 8 n d | `f64` features, row-major |
//! | 4 n | `u32` labels |
//! | 4 n | `u32` groups |
//!
//! The key is the SHA-256 of the schema file bytes, the data file bytes,
//! the split seed and the three split fractions (as `f64` bits), so any
//! change to an input gives a different cache file.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{prepare_table, Dataset, SplitFractions, Splits};
use super::schema::DatasetSchema;
use super::table::read_table;
use super::{DataError, Result};

pub const MAGIC: &[u8; 4] = b"DCFD";
pub const VERSION: u32 = 1;

pub fn cache_key(schema_bytes: &[u8], data_bytes: &[u8], seed: u64, fractions: SplitFractions) -> [u8; 32] {
    let mut h = Sha256::new();
    for part in [schema_bytes, data_bytes] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part);
    }
    h.update(seed.to_le_bytes());
    for f in [fractions.train, fractions.val, fractions.test] {
        h.update(f.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

#[derive(Serialize, Deserialize)]
struct Meta {
    feature_names: Vec<String>,
    class_names: Vec<String>,
    group_names: Vec<String>,
    num_classes: usize,
    num_groups: usize,
    positive_class: usize,
    unseen_categories: usize,
}

pub fn write_bundle<W: Write>(mut out: W, key: &[u8; 32], splits: &Splits) -> Result<()> {
    let t = &splits.train;
    let meta = serde_json::to_vec(&Meta {
        feature_names: t.feature_names.clone(),
        class_names: t.class_names.clone(),
        group_names: t.group_names.clone(),
        num_classes: t.num_classes,
        num_groups: t.num_groups,
        positive_class: t.positive_class,
        unseen_categories: splits.unseen_categories,
    })
    .expect("metadata serializes");
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(key)?;
    out.write_all(&(meta.len() as u64).to_le_bytes())?;
    out.write_all(&meta)?;
    out.write_all(&(t.dim() as u32).to_le_bytes())?;
    for part in [&splits.train, &splits.val, &splits.test] {
        out.write_all(&(part.n() as u64).to_le_bytes())?;
        for v in part.features.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
        for &y in &part.labels {
            out.write_all(&(y as u32).to_le_bytes())?;
        }
        for &g in &part.groups {
            out.write_all(&(g as u32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

/// Reads a bundle, returning `Ok(None)` when its key differs from `expected_key`.
pub fn read_bundle<R: Read>(mut input: R, expected_key: &[u8; 32]) -> Result<Option<Splits>> {
    if &read_array::<4, _>(&mut input)? != MAGIC {
        return Err(DataError::Cache("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(DataError::Cache(format!("unsupported version {version}")));
    }
    if &read_array::<32, _>(&mut input)? != expected_key {
        return Ok(None);
    }
    let meta_len = read_u64(&mut input)? as usize;
    let mut meta = vec![0u8; meta_len];
    input.read_exact(&mut meta)?;
    let meta: Meta = serde_json::from_slice(&meta).map_err(|e| DataError::Cache(e.to_string()))?;
    let dim = read_u32(&mut input)? as usize;

    let mut parts = Vec::with_capacity(3);
    for _ in 0..3 {
        let n = read_u64(&mut input)? as usize;
        let mut values = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            values.push(f64::from_le_bytes(read_array(&mut input)?));
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            labels.push(read_u32(&mut input)? as usize);
        }
        let mut groups = Vec::with_capacity(n);
        for _ in 0..n {
            groups.push(read_u32(&mut input)? as usize);
        }
        let ds = Dataset {
            features: Array2::from_shape_vec((n, dim), values).map_err(|e| DataError::Cache(e.to_string()))?,
            labels,
            groups,
            num_classes: meta.num_classes,
            num_groups: meta.num_groups,
            positive_class: meta.positive_class,
            feature_names: meta.feature_names.clone(),
            class_names: meta.class_names.clone(),
            group_names: meta.group_names.clone(),
        };
        ds.validate().map_err(|e| DataError::Cache(e.to_string()))?;
        parts.push(ds);
    }
    let test = parts.pop().expect("three parts");
    let val = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok(Some(Splits {
        train,
        val,
        test,
        unseen_categories: meta.unseen_categories,
    }))
}

/// Loads and prepares `data_path` with `schema_path`, reusing
/// `cache_dir/<key>.dcfd` when present and writing it otherwise.
pub fn load_prepared(
    schema_path: &Path,
    data_path: &Path,
    fractions: SplitFractions,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Result<Splits> {
    let schema_bytes = std::fs::read(schema_path)?;
    let data_bytes = std::fs::read(data_path)?;
    let key = cache_key(&schema_bytes, &data_bytes, seed, fractions);
    let cache_file: Option<PathBuf> = cache_dir.map(|d| d.join(format!("{}.dcfd", hex::encode(key))));
    if let Some(path) = &cache_file {
        if let Ok(file) = std::fs::File::open(path) {
            if let Some(splits) = read_bundle(std::io::BufReader::new(file), &key)? {
                return Ok(splits);
            }
        }
    }
    let schema = DatasetSchema::from_path(schema_path)?;
    let table = read_table(data_bytes.as_slice(), &schema)?;
    let splits = prepare_table(&table, &schema, fractions, seed)?;
    if let Some(path) = &cache_file {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_bundle(&mut w, &key, &splits)?;
        w.flush()?;
    }
    Ok(splits)
}
