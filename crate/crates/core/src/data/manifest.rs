//! On-disk split layout: one line-delimited JSON manifest per split plus
//! lossless PNG images.
//!
//! ```text
//! <root>/manifests/{labeled,unlabeled,test}.jsonl
//! <root>/images/<split>/<index>_<seed>.png
//! ```
//!
//! Training code reads unlabeled images through [`load_unlabeled_images`],
//! which never touches annotations; hidden annotations are only reachable
//! through [`load_hidden_annotations`].

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::render::{Image, ShapeImage};
use super::shapes::ShapeClass;
use super::split::Dataset;
use super::{LabeledSample, Target};
use crate::error::{CflError, Result};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Labeled,
    Unlabeled,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Labeled, SplitName::Unlabeled, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Labeled => "labeled",
            SplitName::Unlabeled => "unlabeled",
            SplitName::Test => "test",
        }
    }

    pub fn manifest_path(self, root: &Path) -> PathBuf {
        root.join("manifests").join(format!("{}.jsonl", self.as_str()))
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub class: ShapeClass,
    /// 1-based external label; OOD shapes carry `K + 1`.
    pub label: usize,
    #[serde(rename = "box")]
    pub bbox: [f32; 4],
}

impl Annotation {
    pub fn target(&self) -> Result<Target> {
        if self.label == 0 {
            return Err(CflError::Config("annotation label 0 is not valid".into()));
        }
        Ok(Target { label: self.label - 1, bbox: BoundingBox::from_array(self.bbox)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub seed: u64,
    pub split: SplitName,
    pub path: String,
    pub annotations: Vec<Annotation>,
}

fn records_for(ds: &Dataset, split: SplitName, images: &[ShapeImage]) -> Vec<ManifestRecord> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| ManifestRecord {
            seed: img.seed,
            split,
            path: format!("images/{}/{:05}_{}.png", split, i, img.seed),
            annotations: img
                .objects
                .iter()
                .map(|o| Annotation {
                    class: o.shape,
                    label: ds.config.label_of(o.shape) + 1,
                    bbox: o.bbox.to_array(),
                })
                .collect(),
        })
        .collect()
}

/// Write all three splits under `root`.
pub fn write_dataset(root: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(root.join("manifests"))?;
    for split in SplitName::ALL {
        let images = match split {
            SplitName::Labeled => &ds.labeled,
            SplitName::Unlabeled => &ds.unlabeled,
            SplitName::Test => &ds.test,
        };
        fs::create_dir_all(root.join("images").join(split.as_str()))?;
        let records = records_for(ds, split, images);
        let mut out = BufWriter::new(File::create(split.manifest_path(root))?);
        for (rec, img) in records.iter().zip(images) {
            img.image.to_rgb8().save(root.join(&rec.path))?;
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = File::open(path)?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

fn load_image(root: &Path, rec: &ManifestRecord) -> Result<Image> {
    let img = image::open(root.join(&rec.path))?.to_rgb8();
    Ok(Image::from_rgb8(&img))
}

fn load_annotated(root: &Path, split: SplitName) -> Result<Vec<LabeledSample>> {
    read_manifest(&split.manifest_path(root))?
        .iter()
        .map(|rec| {
            Ok(LabeledSample {
                seed: rec.seed,
                image: load_image(root, rec)?,
                targets: rec.annotations.iter().map(Annotation::target).collect::<Result<_>>()?,
            })
        })
        .collect()
}

pub fn load_labeled(root: &Path) -> Result<Vec<LabeledSample>> {
    load_annotated(root, SplitName::Labeled)
}

pub fn load_test(root: &Path) -> Result<Vec<LabeledSample>> {
    load_annotated(root, SplitName::Test)
}

/// Unlabeled images as `(seed, pixels)`; annotations are not read.
pub fn load_unlabeled_images(root: &Path) -> Result<Vec<(u64, Image)>> {
    read_manifest(&SplitName::Unlabeled.manifest_path(root))?
        .iter()
        .map(|rec| Ok((rec.seed, load_image(root, rec)?)))
        .collect()
}

/// Diagnostic-only access to the unlabeled split's annotations.
pub fn load_hidden_annotations(root: &Path) -> Result<Vec<Vec<Annotation>>> {
    Ok(read_manifest(&SplitName::Unlabeled.manifest_path(root))?
        .into_iter()
        .map(|r| r.annotations)
        .collect())
}
