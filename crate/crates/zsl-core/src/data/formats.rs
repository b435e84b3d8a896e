//! On-disk formats.
//!
//! - Attribute CSV: header `class_id,a_0,...,a_{n-1}`, one row per class.
//! - Split manifest: JSON `{"seen":[ids],"unseen":[ids],"folds":[[ids],...]}`.
//! - Feature file: magic `ZSLF`, little-endian u32 version=1, u32 count,
//!   u32 R, u32 f, then count·R·f little-endian f32. Labels live in a
//!   companion CSV `sample_id,class_id`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::{ClassCatalog, Role, SampleSet};

const FEATURE_MAGIC: &[u8; 4] = b"ZSLF";
const FEATURE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SplitManifest {
    seen: Vec<String>,
    unseen: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    folds: Vec<Vec<String>>,
}

fn check_id(path: &Path, id: &str) -> Result<()> {
    if id.is_empty() || id.contains([',', '"', '\n', '\r']) {
        return Err(Error::format(path, format!("identifier {id:?} is not CSV-safe")));
    }
    Ok(())
}

/// Load a class catalog from an attribute CSV plus a split manifest.
/// Row order in the file becomes catalog row order.
pub fn load_attributes(attributes_path: &Path, split_path: &Path) -> Result<ClassCatalog> {
    let text = fs::read_to_string(attributes_path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(attributes_path, "empty attribute file"))?;
    let header_cols: Vec<&str> = header.split(',').collect();
    if header_cols.first() != Some(&"class_id") || header_cols.len() < 2 {
        return Err(Error::format_at(
            attributes_path,
            1,
            "header must be class_id,a_0,...,a_{n-1}",
        ));
    }
    let n_attrs = header_cols.len() - 1;

    let mut class_ids = Vec::new();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_attrs + 1 {
            return Err(Error::format_at(
                attributes_path,
                line_no,
                format!("expected {} cells, found {}", n_attrs + 1, cells.len()),
            ));
        }
        let mut row = Vec::with_capacity(n_attrs);
        for cell in &cells[1..] {
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::format_at(attributes_path, line_no, format!("non-numeric cell {cell:?}"))
            })?;
            if !value.is_finite() {
                return Err(Error::format_at(
                    attributes_path,
                    line_no,
                    format!("non-finite attribute value {cell:?}"),
                ));
            }
            row.push(value);
        }
        class_ids.push(cells[0].to_string());
        rows.push(row);
    }
    if class_ids.is_empty() {
        return Err(Error::format(attributes_path, "no class rows"));
    }

    let manifest: SplitManifest = serde_json::from_str(&fs::read_to_string(split_path)?)
        .map_err(|e| Error::format(split_path, e.to_string()))?;
    let resolve = |ids: &[String]| -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| {
                class_ids
                    .iter()
                    .position(|c| c == id)
                    .ok_or_else(|| Error::format(split_path, format!("unknown class id {id:?}")))
            })
            .collect()
    };
    let seen = resolve(&manifest.seen)?;
    let unseen = resolve(&manifest.unseen)?;
    let folds = if manifest.folds.is_empty() {
        None
    } else {
        Some(
            manifest
                .folds
                .iter()
                .map(|f| resolve(f))
                .collect::<Result<Vec<_>>>()?,
        )
    };

    ClassCatalog::new(class_ids, Mat::from_rows(&rows), seen, unseen, folds)
}

/// Write the attribute CSV and split manifest for a catalog.
pub fn save_attributes(catalog: &ClassCatalog, attributes_path: &Path, split_path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("class_id");
    for j in 0..catalog.n_attrs() {
        out.push_str(&format!(",a_{j}"));
    }
    out.push('\n');
    for (k, id) in catalog.class_ids().iter().enumerate() {
        check_id(attributes_path, id)?;
        out.push_str(id);
        for v in catalog.attribute_row(k) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(attributes_path, out)?;

    let manifest = SplitManifest {
        seen: catalog.seen_set().iter().map(|&k| catalog.class_id(k).to_string()).collect(),
        unseen: catalog.unseen_set().iter().map(|&k| catalog.class_id(k).to_string()).collect(),
        folds: catalog
            .folds()
            .map(|folds| {
                folds
                    .iter()
                    .map(|f| f.iter().map(|&k| catalog.class_id(k).to_string()).collect())
                    .collect()
            })
            .unwrap_or_default(),
    };
    fs::write(split_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

fn read_u32(path: &Path, bytes: &[u8], offset: &mut usize, what: &str) -> Result<u32> {
    let end = *offset + 4;
    if end > bytes.len() {
        return Err(Error::format(path, format!("truncated while reading {what}")));
    }
    let value = u32::from_le_bytes(bytes[*offset..end].try_into().unwrap());
    *offset = end;
    Ok(value)
}

/// Load a feature file plus its companion labels CSV. Features are read as
/// little-endian f32 and widened to f64.
pub fn load_features(
    features_path: &Path,
    labels_path: &Path,
    catalog: &ClassCatalog,
    role: Role,
) -> Result<SampleSet> {
    let bytes = fs::read(features_path)?;
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::format(features_path, "bad magic, expected ZSLF"));
    }
    let mut offset = 4;
    let version = read_u32(features_path, &bytes, &mut offset, "version")?;
    if version != FEATURE_VERSION {
        return Err(Error::format(features_path, format!("unsupported version {version}")));
    }
    let count = read_u32(features_path, &bytes, &mut offset, "count")? as usize;
    let regions = read_u32(features_path, &bytes, &mut offset, "region count")? as usize;
    let feat_dim = read_u32(features_path, &bytes, &mut offset, "feature dim")? as usize;
    let per_sample = (regions as u64)
        .checked_mul(feat_dim as u64)
        .ok_or_else(|| Error::format(features_path, "R*f overflows"))?;
    let total = (count as u64)
        .checked_mul(per_sample)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(features_path, "payload size overflows"))?;
    let available = (bytes.len() - offset) as u64;
    if available < total {
        return Err(Error::format(
            features_path,
            format!("truncated payload: need {total} bytes, found {available}"),
        ));
    }
    if available > total {
        return Err(Error::format(
            features_path,
            format!("trailing bytes: need {total} bytes, found {available}"),
        ));
    }

    let mut features = Vec::with_capacity(count);
    for _ in 0..count {
        let mut data = Vec::with_capacity(regions * feat_dim);
        for _ in 0..regions * feat_dim {
            let raw = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            data.push(raw as f64);
            offset += 4;
        }
        features.push(Mat::from_vec(regions, feat_dim, data));
    }

    let labels_text = fs::read_to_string(labels_path)?;
    let mut lines = labels_text.lines().enumerate();
    match lines.next() {
        Some((_, "sample_id,class_id")) => {}
        _ => {
            return Err(Error::format_at(labels_path, 1, "header must be sample_id,class_id"));
        }
    }
    let mut sample_ids = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let (sample_id, class_id) = line.split_once(',').ok_or_else(|| {
            Error::format_at(labels_path, line_no, "expected sample_id,class_id")
        })?;
        let class = catalog.index_of(class_id).ok_or_else(|| {
            Error::format_at(labels_path, line_no, format!("unknown class id {class_id:?}"))
        })?;
        sample_ids.push(sample_id.to_string());
        labels.push(class);
    }
    if sample_ids.len() != count {
        return Err(Error::format(
            labels_path,
            format!("labels list {} samples, feature file declares {count}", sample_ids.len()),
        ));
    }

    SampleSet::new(sample_ids, features, labels, role, catalog)
}

/// Write a feature file and its companion labels CSV. Values are narrowed
/// to f32, so a save/load round trip of freshly generated f64 data quantizes
/// exactly once.
pub fn save_features(
    set: &SampleSet,
    features_path: &Path,
    labels_path: &Path,
    catalog: &ClassCatalog,
) -> Result<()> {
    let file = fs::File::create(features_path)?;
    let mut w = BufWriter::new(file);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes())?;
    let count = u32::try_from(set.len())
        .map_err(|_| Error::contract("sample count exceeds u32"))?;
    let regions = u32::try_from(set.regions()).unwrap();
    let feat_dim = u32::try_from(set.feat_dim()).unwrap();
    w.write_all(&count.to_le_bytes())?;
    w.write_all(&regions.to_le_bytes())?;
    w.write_all(&feat_dim.to_le_bytes())?;
    for i in 0..set.len() {
        for &v in set.features(i).data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;

    let mut out = String::from("sample_id,class_id\n");
    for i in 0..set.len() {
        let id = &set.sample_ids()[i];
        check_id(labels_path, id)?;
        out.push_str(id);
        out.push(',');
        out.push_str(catalog.class_id(set.label(i)));
        out.push('\n');
    }
    fs::write(labels_path, out)?;
    Ok(())
}
