use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ::image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{CameraId, PersonId, PersonImage};
use crate::orientation::OrientationLabel;

pub const MANIFEST_HEADER: [&str; 4] = ["image_path", "person_id", "camera_id", "orientation"];

/// One manifest line. Orientation `0` in the file means unlabeled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_path: PathBuf,
    pub person_id: PersonId,
    pub camera_id: CameraId,
    #[serde(with = "orientation_field")]
    pub orientation: Option<OrientationLabel>,
}

mod orientation_field {
    use super::OrientationLabel;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(o: &Option<OrientationLabel>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(o.map_or(0, |o| o.value()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<OrientationLabel>, D::Error> {
        let v = u8::deserialize(d)?;
        if v == 0 {
            return Ok(None);
        }
        OrientationLabel::new(v as i64).map(Some).map_err(serde::de::Error::custom)
    }
}

/// Parsed manifest with duplicate paths removed (first occurrence wins).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub duplicates: usize,
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::ManifestMalformed { line: 1, message: e.to_string() })?;
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::ManifestMalformed {
            line: 1,
            message: format!("expected header {}", MANIFEST_HEADER.join(",")),
        });
    }
    let mut seen = HashSet::new();
    let mut out = Manifest::default();
    for rec in reader.deserialize::<ManifestRow>() {
        let row = rec.map_err(|e| Error::ManifestMalformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if seen.insert(row.image_path.clone()) {
            out.rows.push(row);
        } else {
            out.duplicates += 1;
        }
    }
    if out.duplicates > 0 {
        log::warn!("manifest: skipped {} duplicate rows", out.duplicates);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let io = |e: csv::Error| Error::Io { path: path.to_owned(), source: std::io::Error::other(e.to_string()) };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Decoded images plus the rows that could not be used.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub images: Vec<PersonImage>,
    pub paths: Vec<PathBuf>,
    pub missing: usize,
    pub duplicates: usize,
}

impl Dataset {
    pub fn from_images(images: Vec<PersonImage>) -> Self {
        Dataset { images, ..Default::default() }
    }

    pub fn persons(&self) -> Vec<PersonId> {
        let mut p: Vec<PersonId> = self.images.iter().map(|i| i.person.clone()).collect();
        p.sort();
        p.dedup();
        p
    }

    pub fn cameras(&self) -> Vec<CameraId> {
        let mut c: Vec<CameraId> = self.images.iter().map(|i| i.camera).collect();
        c.sort();
        c.dedup();
        c
    }
}

pub fn resize_to(img: &::image::RgbImage, height: u32, width: u32) -> ::image::RgbImage {
    if img.dimensions() == (width, height) {
        return img.clone();
    }
    ::image::imageops::resize(img, width, height, FilterType::Triangle)
}

/// Decodes any supported image file and resizes it to `(height, width)`.
pub fn load_image(path: &Path, (height, width): (u32, u32)) -> Result<::image::RgbImage> {
    let decoded = ::image::open(path).map_err(|source| Error::Decode { path: path.to_owned(), source })?;
    Ok(resize_to(&decoded.to_rgb8(), height, width))
}

/// Writes images as PNG under `dir/images/` plus `dir/manifest.csv`, and
/// returns the manifest rows (paths relative to `dir`).
pub fn write_dataset(dir: &Path, images: &[PersonImage]) -> Result<Vec<ManifestRow>> {
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut rows = Vec::with_capacity(images.len());
    let mut counts = std::collections::HashMap::new();
    for img in images {
        let o = img.orientation.map_or(0, |o| o.value());
        let k = counts.entry((img.person.clone(), img.camera, o)).or_insert(0usize);
        let rel = PathBuf::from("images").join(format!("{}_c{}_o{}_{}.png", img.person.0, img.camera.0, o, k));
        *k += 1;
        let path = dir.join(&rel);
        img.pixels.save(&path).map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        rows.push(ManifestRow {
            image_path: rel,
            person_id: img.person.clone(),
            camera_id: img.camera,
            orientation: img.orientation,
        });
    }
    write_manifest(&dir.join("manifest.csv"), &rows)?;
    Ok(rows)
}

/// Loads every manifest row, resizing to `(height, width)`. Rows whose file
/// is missing are skipped with a warning; undecodable files are an error.
pub fn load_dataset(manifest_path: &Path, image_root: Option<&Path>, resize: (u32, u32)) -> Result<Dataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest = parse_manifest(&text)?;
    let root =
        image_root.map(Path::to_path_buf).or_else(|| manifest_path.parent().map(Path::to_path_buf)).unwrap_or_default();
    let mut ds = Dataset { duplicates: manifest.duplicates, ..Default::default() };
    for row in manifest.rows {
        let path = if row.image_path.is_absolute() { row.image_path.clone() } else { root.join(&row.image_path) };
        if !path.is_file() {
            ds.missing += 1;
            continue;
        }
        let pixels = load_image(&path, resize)?;
        ds.images.push(PersonImage::new(pixels, row.person_id, row.camera_id, row.orientation)?);
        ds.paths.push(path);
    }
    if ds.missing > 0 {
        log::warn!("manifest: skipped {} rows with missing image files", ds.missing);
    }
    if ds.images.is_empty() {
        return Err(Error::NoUsableRows);
    }
    Ok(ds)
}
