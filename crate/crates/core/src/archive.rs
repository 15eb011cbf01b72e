//! Versioned on-disk archives: a `manifest.json` plus one little-endian
//! `f32` file per array, guarded by a SHA-256 digest over everything.
//!
//! Three archive kinds exist: trained models, signature sets and bag sets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::codebook::{BodyStructureCodebook, SubCodebook};
use crate::encoding::{CodebookSet, LlcParams, Signature, SignatureMeta};
use crate::error::{Error, Result};
use crate::eval::TrainedModel;
use crate::features::Channel;
use crate::image::{CameraId, PersonId};
use crate::metric::{FusionWeights, KernelPcaModel, MetricModel};
use crate::odboa::{AppearanceBag, BagSlot, ChannelModel, MatchingModel};
use crate::orientation::{BinaryModel, Calibration, OrientationClassifier, OrientationLabel, SmoothingKernel};
use crate::pyramid::Part;
use crate::rng::Seed;

pub const FORMAT: &str = "reid-archive";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

pub const KIND_MODEL: &str = "model";
pub const KIND_SIGNATURES: &str = "signatures";
pub const KIND_BAGS: &str = "bags";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentEntry {
    pub name: String,
    pub version: u32,
    pub shape: Vec<usize>,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveManifest {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub meta: BTreeMap<String, Value>,
    pub components: Vec<ComponentEntry>,
    pub digest: String,
}

fn to_bytes(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

fn from_bytes(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect()
}

fn digest(kind: &str, meta: &BTreeMap<String, Value>, parts: &[(ComponentEntry, Vec<u8>)]) -> String {
    let mut h = Sha256::new();
    h.update(FORMAT.as_bytes());
    h.update(FORMAT_VERSION.to_le_bytes());
    h.update(kind.as_bytes());
    h.update(serde_json::to_string(meta).expect("json metadata").as_bytes());
    for (entry, bytes) in parts {
        h.update(serde_json::to_string(entry).expect("json entry").as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(h.finalize())
}

/// Accumulates arrays and metadata, then writes them in one go.
#[derive(Debug)]
pub struct ArchiveWriter {
    kind: String,
    meta: BTreeMap<String, Value>,
    parts: Vec<(ComponentEntry, Vec<u8>)>,
}

impl ArchiveWriter {
    pub fn new(kind: &str) -> Self {
        ArchiveWriter { kind: kind.to_owned(), meta: BTreeMap::new(), parts: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.meta.insert(key.to_owned(), serde_json::to_value(value).expect("serializable metadata"));
        self
    }

    pub fn array(&mut self, name: &str, shape: &[usize], data: &[f64], seed: Option<Seed>) -> &mut Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape of {name} does not match its data");
        let file = format!("{}.f32", name.replace('/', "_"));
        let entry = ComponentEntry {
            name: name.to_owned(),
            version: FORMAT_VERSION,
            shape: shape.to_vec(),
            file,
            seed: seed.map(|s| s.0),
        };
        self.parts.push((entry, to_bytes(data)));
        self
    }

    pub fn digest(&self) -> String {
        digest(&self.kind, &self.meta, &self.parts)
    }

    /// Writes the archive into `dir` (created if needed) and returns the digest.
    pub fn write(&self, dir: &Path) -> Result<String> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (entry, bytes) in &self.parts {
            let path = dir.join(&entry.file);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        let manifest = ArchiveManifest {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            components: self.parts.iter().map(|p| p.0.clone()).collect(),
            digest: self.digest(),
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("json manifest");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest.digest)
    }
}

/// A verified archive loaded into memory.
#[derive(Debug, Clone)]
pub struct ArchiveReader {
    pub dir: PathBuf,
    pub manifest: ArchiveManifest,
    arrays: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Archive(msg.into())
}

impl ArchiveReader {
    pub fn open(dir: &Path, kind: &str) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: ArchiveManifest =
            serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        if manifest.format != FORMAT || manifest.version != FORMAT_VERSION {
            return Err(bad(format!("unsupported archive {} v{}", manifest.format, manifest.version)));
        }
        if manifest.kind != kind {
            return Err(bad(format!("expected a {kind} archive, found {}", manifest.kind)));
        }
        let mut parts = Vec::with_capacity(manifest.components.len());
        for entry in &manifest.components {
            if entry.file.contains('/') || entry.file.contains('\\') || entry.file.starts_with('.') {
                return Err(bad(format!("component file name {:?} is not a plain name", entry.file)));
            }
            let p = dir.join(&entry.file);
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            if bytes.len() != 4 * entry.shape.iter().product::<usize>() {
                return Err(bad(format!("{} has {} bytes, shape {:?}", entry.file, bytes.len(), entry.shape)));
            }
            parts.push((entry.clone(), bytes));
        }
        let actual = digest(&manifest.kind, &manifest.meta, &parts);
        if actual != manifest.digest {
            return Err(bad(format!("digest mismatch: manifest {}, contents {actual}", manifest.digest)));
        }
        let arrays = parts.into_iter().map(|(e, b)| (e.name, (e.shape, from_bytes(&b)))).collect();
        Ok(ArchiveReader { dir: dir.to_owned(), manifest, arrays })
    }

    pub fn digest(&self) -> &str {
        &self.manifest.digest
    }

    pub fn meta<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self.manifest.meta.get(key).ok_or_else(|| bad(format!("missing metadata {key}")))?;
        serde_json::from_value(v.clone()).map_err(|e| bad(format!("metadata {key}: {e}")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    pub fn array(&self, name: &str) -> Result<(&[usize], &[f64])> {
        self.arrays
            .get(name)
            .map(|(s, d)| (s.as_slice(), d.as_slice()))
            .ok_or_else(|| bad(format!("missing component {name}")))
    }

    /// An array that must have exactly `rank` dimensions.
    pub fn shaped(&self, name: &str, rank: usize) -> Result<(&[usize], &[f64])> {
        let (s, d) = self.array(name)?;
        if s.len() != rank {
            return Err(bad(format!("{name} has rank {}, expected {rank}", s.len())));
        }
        Ok((s, d))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PcaMeta {
    bandwidth: f64,
    kernel_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ImageShape {
    height: u32,
    width: u32,
}

/// Saves every trained component. Returns the digest.
pub fn save_model(model: &TrainedModel, dir: &Path) -> Result<String> {
    let mut w = ArchiveWriter::new(KIND_MODEL);
    w.meta("image", ImageShape { height: model.height, width: model.width })
        .meta("seed", model.seed)
        .meta("llc", model.llc)
        .meta("smoothing", model.smoothing)
        .meta("fusion", model.matching.beta)
        .meta("codebook_size", model.codebooks.size())
        .meta("parts", Part::ALL.map(|p| p.name()))
        .meta("channels", Channel::ALL.map(|c| c.name()))
        .meta("dual", model.matching.has_dual())
        .meta("classifier", model.classifier.is_some());
    for book in &model.codebooks.channels {
        for sub in &book.parts {
            let name = format!("codebook/{}/{}", book.channel.name(), sub.part.name());
            w.array(&name, &[sub.size(), sub.dim], &sub.entries, Some(book.seed));
        }
    }
    if let Some(c) = &model.classifier {
        let f = c.feature_len();
        let weights: Vec<f64> = c.models.iter().flat_map(|m| m.weights.iter().copied()).collect();
        let params: Vec<f64> =
            c.models.iter().flat_map(|m| [m.bias, m.calibration.scale, m.calibration.offset]).collect();
        w.array("classifier/weights", &[c.models.len(), f], &weights, None);
        w.array("classifier/params", &[c.models.len(), 3], &params, None);
    }
    let mut pca_meta = BTreeMap::new();
    for cm in &model.matching.channels {
        let ch = cm.channel.name();
        let p = &cm.pca;
        let n = p.reference_len();
        w.array(&format!("pca/{ch}/reference"), &[n, p.input_dim], &p.reference, None);
        w.array(&format!("pca/{ch}/coefficients"), &[n, p.dim], &p.coefficients, None);
        w.array(&format!("pca/{ch}/eigenvalues"), &[p.dim], &p.eigenvalues, None);
        w.array(&format!("pca/{ch}/col_means"), &[n], &p.kernel_col_means, None);
        pca_meta.insert(ch.to_owned(), PcaMeta { bandwidth: p.bandwidth, kernel_mean: p.kernel_mean });
        w.array(&format!("metric/{ch}"), &[cm.metric.dim, cm.metric.dim], &cm.metric.matrix, None);
        if let Some(d) = &cm.dissimilar {
            w.array(&format!("metric_dissimilar/{ch}"), &[d.dim, d.dim], &d.matrix, None);
        }
    }
    w.meta("pca", pca_meta);
    w.write(dir)
}

fn square(r: &ArchiveReader, name: &str) -> Result<MetricModel> {
    let (s, d) = r.shaped(name, 2)?;
    if s[0] != s[1] {
        return Err(bad(format!("{name} is not square")));
    }
    Ok(MetricModel { dim: s[0], matrix: d.to_vec() })
}

pub fn load_model(dir: &Path) -> Result<TrainedModel> {
    let r = ArchiveReader::open(dir, KIND_MODEL)?;
    let shape: ImageShape = r.meta("image")?;
    let seed: Seed = r.meta("seed")?;
    let size: usize = r.meta("codebook_size")?;
    let mut books = Vec::with_capacity(3);
    for channel in Channel::ALL {
        let mut parts = Vec::with_capacity(Part::ALL.len());
        for part in Part::ALL {
            let name = format!("codebook/{}/{}", channel.name(), part.name());
            let (s, d) = r.shaped(&name, 2)?;
            if s != [size, channel.dim()] {
                return Err(bad(format!("{name} has shape {s:?}")));
            }
            parts.push(SubCodebook { part, channel, dim: s[1], entries: d.to_vec() });
        }
        let book_seed = r
            .manifest
            .components
            .iter()
            .find(|c| c.name.starts_with(&format!("codebook/{}/", channel.name())))
            .and_then(|c| c.seed)
            .unwrap_or(seed.0);
        books.push(BodyStructureCodebook { channel, dim: channel.dim(), size, seed: Seed(book_seed), parts });
    }
    let classifier = if r.meta::<bool>("classifier")? {
        let (ws, wd) = r.shaped("classifier/weights", 2)?;
        let (ps, pd) = r.shaped("classifier/params", 2)?;
        if ps != [ws[0], 3] {
            return Err(bad("classifier/params shape"));
        }
        let models = (0..ws[0])
            .map(|k| BinaryModel {
                weights: wd[k * ws[1]..(k + 1) * ws[1]].to_vec(),
                bias: pd[3 * k],
                calibration: Calibration { scale: pd[3 * k + 1], offset: pd[3 * k + 2] },
            })
            .collect();
        Some(OrientationClassifier { models })
    } else {
        None
    };
    let pca_meta: BTreeMap<String, PcaMeta> = r.meta("pca")?;
    let dual: bool = r.meta("dual")?;
    let mut channels = Vec::with_capacity(3);
    for channel in Channel::ALL {
        let ch = channel.name();
        let pm = pca_meta.get(ch).ok_or_else(|| bad(format!("missing pca metadata for {ch}")))?;
        let (rs, rd) = r.shaped(&format!("pca/{ch}/reference"), 2)?;
        let (cs, cd) = r.shaped(&format!("pca/{ch}/coefficients"), 2)?;
        let (_, ev) = r.shaped(&format!("pca/{ch}/eigenvalues"), 1)?;
        let (_, means) = r.shaped(&format!("pca/{ch}/col_means"), 1)?;
        if cs[0] != rs[0] || means.len() != rs[0] || ev.len() != cs[1] {
            return Err(bad(format!("inconsistent pca shapes for {ch}")));
        }
        let pca = KernelPcaModel {
            input_dim: rs[1],
            dim: cs[1],
            bandwidth: pm.bandwidth,
            reference: rd.to_vec(),
            eigenvalues: ev.to_vec(),
            coefficients: cd.to_vec(),
            kernel_col_means: means.to_vec(),
            kernel_mean: pm.kernel_mean,
        };
        let metric = square(&r, &format!("metric/{ch}"))?;
        let dissimilar = if dual { Some(square(&r, &format!("metric_dissimilar/{ch}"))?) } else { None };
        channels.push(ChannelModel { channel, pca, metric, dissimilar });
    }
    let beta: FusionWeights = r.meta("fusion")?;
    Ok(TrainedModel {
        height: shape.height,
        width: shape.width,
        codebooks: CodebookSet::new(books)?,
        llc: r.meta::<LlcParams>("llc")?,
        classifier,
        smoothing: r.meta::<SmoothingKernel>("smoothing")?,
        matching: MatchingModel::new(channels, beta)?,
        seed,
    })
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in rows {
        if r.len() != len {
            return Err(Error::DimensionMismatch { expected: len, got: r.len() });
        }
        out.extend_from_slice(r);
    }
    Ok(out)
}

/// Saves signatures' raw pooled features; unit-norm features are rebuilt on load.
pub fn save_signatures(sigs: &[Signature], dir: &Path) -> Result<String> {
    let mut w = ArchiveWriter::new(KIND_SIGNATURES);
    w.meta("signatures", sigs.iter().map(|s| s.meta.clone()).collect::<Vec<_>>());
    for c in Channel::ALL {
        let len = sigs.first().map_or(0, |s| s.pooled[c.index()].len());
        let data = stack(sigs.iter().map(|s| s.pooled[c.index()].as_slice()), len)?;
        w.array(&format!("signatures/{}", c.name()), &[sigs.len(), len], &data, None);
    }
    w.write(dir)
}

pub fn load_signatures(dir: &Path) -> Result<Vec<Signature>> {
    let r = ArchiveReader::open(dir, KIND_SIGNATURES)?;
    let metas: Vec<SignatureMeta> = r.meta("signatures")?;
    let mut channels: Vec<(&[usize], &[f64])> = Vec::with_capacity(3);
    for c in Channel::ALL {
        let (s, d) = r.shaped(&format!("signatures/{}", c.name()), 2)?;
        if s[0] != metas.len() {
            return Err(bad(format!("signatures/{} has {} rows for {} records", c.name(), s[0], metas.len())));
        }
        channels.push((s, d));
    }
    Ok(metas
        .into_iter()
        .enumerate()
        .map(|(i, meta)| {
            let pooled = std::array::from_fn(|c| {
                let (s, d) = channels[c];
                d[i * s[1]..(i + 1) * s[1]].to_vec()
            });
            Signature::from_pooled(meta, pooled)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BagRecord {
    person: PersonId,
    camera: CameraId,
    /// `(orientation, frames)` for each occupied slot, in slot order.
    slots: Vec<(OrientationLabel, usize)>,
}

pub fn save_bags(bags: &[AppearanceBag], dir: &Path) -> Result<String> {
    let mut w = ArchiveWriter::new(KIND_BAGS);
    let records: Vec<BagRecord> = bags
        .iter()
        .map(|b| BagRecord {
            person: b.person.clone(),
            camera: b.camera,
            slots: b.occupancy().labels().into_iter().map(|o| (o, b.slot(o).map_or(0, |s| s.frames))).collect(),
        })
        .collect();
    w.meta("bags", &records);
    let slots: Vec<&BagSlot> = bags.iter().flat_map(|b| b.slots.iter().flatten()).collect();
    for c in Channel::ALL {
        let len = slots.first().map_or(0, |s| s.channels[c.index()].len());
        let unit = stack(slots.iter().map(|s| s.channels[c.index()].as_slice()), len)?;
        let raw = stack(slots.iter().map(|s| s.pooled[c.index()].as_slice()), len)?;
        w.array(&format!("bags/{}/channels", c.name()), &[slots.len(), len], &unit, None);
        w.array(&format!("bags/{}/pooled", c.name()), &[slots.len(), len], &raw, None);
    }
    w.write(dir)
}

pub fn load_bags(dir: &Path) -> Result<Vec<AppearanceBag>> {
    let r = ArchiveReader::open(dir, KIND_BAGS)?;
    let records: Vec<BagRecord> = r.meta("bags")?;
    let total: usize = records.iter().map(|b| b.slots.len()).sum();
    let mut arrays = Vec::with_capacity(6);
    for c in Channel::ALL {
        for field in ["channels", "pooled"] {
            let (s, d) = r.shaped(&format!("bags/{}/{field}", c.name()), 2)?;
            if s[0] != total {
                return Err(bad(format!("bags/{}/{field} has {} rows for {total} slots", c.name(), s[0])));
            }
            arrays.push((s[1], d));
        }
    }
    let row = |a: usize, k: usize| -> Vec<f64> {
        let (len, d) = arrays[a];
        d[k * len..(k + 1) * len].to_vec()
    };
    let mut k = 0;
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let mut slots: [Option<BagSlot>; 8] = Default::default();
        for (o, frames) in rec.slots {
            slots[o.index()] = Some(BagSlot {
                channels: std::array::from_fn(|c| row(2 * c, k)),
                pooled: std::array::from_fn(|c| row(2 * c + 1, k)),
                frames,
            });
            k += 1;
        }
        out.push(AppearanceBag { person: rec.person, camera: rec.camera, slots });
    }
    Ok(out)
}

/// Short description of an archive for logs and `--help` output.
pub fn describe(dir: &Path) -> Result<Value> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: ArchiveManifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    Ok(json!({ "kind": m.kind, "components": m.components.len(), "digest": m.digest }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::l2_normalize;
    use crate::odboa::build_bag;
    use rand::Rng;

    fn sigs(n: usize) -> Vec<Signature> {
        let mut rng = Seed(1).rng();
        (0..n)
            .map(|i| {
                let pooled = [(); 3].map(|_| (0..10).map(|_| rng.random_range(-0.2..1.0)).collect::<Vec<f64>>());
                Signature::from_pooled(
                    SignatureMeta {
                        person: PersonId("p".into()),
                        camera: CameraId(1),
                        orientation: Some(OrientationLabel::from_index(i % 8)),
                    },
                    pooled,
                )
            })
            .collect()
    }

    #[test]
    fn generic_round_trip_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArchiveWriter::new("test");
        w.meta("answer", 42).array("a/b", &[2, 2], &[1.0, 2.0, 3.0, 4.5], Some(Seed(9)));
        let digest = w.write(dir.path()).unwrap();
        let r = ArchiveReader::open(dir.path(), "test").unwrap();
        assert_eq!(r.digest(), digest);
        assert_eq!(r.meta::<i32>("answer").unwrap(), 42);
        let (s, d) = r.array("a/b").unwrap();
        assert_eq!(s, [2, 2]);
        assert_eq!(d, [1.0, 2.0, 3.0, 4.5]);
        assert_eq!(r.manifest.components[0].seed, Some(9));
        assert!(ArchiveReader::open(dir.path(), "model").is_err());
        // same content, same digest
        assert_eq!(w.write(tempfile::tempdir().unwrap().path()).unwrap(), digest);
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArchiveWriter::new("test");
        w.array("x", &[3], &[1.0, 2.0, 3.0], None);
        w.write(dir.path()).unwrap();
        std::fs::write(dir.path().join("x.f32"), to_bytes(&[1.0, 2.0, 3.5])).unwrap();
        assert!(matches!(ArchiveReader::open(dir.path(), "test"), Err(Error::Archive(_))));
        std::fs::write(dir.path().join("x.f32"), to_bytes(&[1.0, 2.0])).unwrap();
        assert!(ArchiveReader::open(dir.path(), "test").is_err());
    }

    #[test]
    fn signatures_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = sigs(5);
        save_signatures(&s, dir.path()).unwrap();
        let back = load_signatures(dir.path()).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in s.iter().zip(&back) {
            assert_eq!(a.meta, b.meta);
            for c in 0..3 {
                for (x, y) in a.channels[c].iter().zip(&b.channels[c]) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn bags_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = sigs(11);
        let bag = build_bag(&s).unwrap();
        let mut other = build_bag(&s[..2]).unwrap();
        other.person = PersonId("q".into());
        save_bags(&[bag.clone(), other.clone()], dir.path()).unwrap();
        let back = load_bags(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].occupancy(), bag.occupancy());
        assert_eq!(back[1].person, other.person);
        let o = OrientationLabel::from_index(1);
        assert_eq!(back[0].slot(o).unwrap().frames, 2);
        let (a, b) = (&bag.slot(o).unwrap().channels[2], &back[0].slot(o).unwrap().channels[2]);
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-6));
        assert!((l2_normalize(b).iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>()) < 1e-5);
    }
}
