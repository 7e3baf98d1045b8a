use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    generate_records, make_class_appearance, occlude, render_sample, AzimuthMode, GeneratedSample,
    OcclusionLevel, SampleRecord, Split,
};
use crate::error::{Error, Result};
use crate::geometry::{Camera, Pose};
use crate::net::Image;
use crate::training::{ClassInfo, Sample, SampleLibrary};

/// First bytes of every raster file.
pub const RASTER_MAGIC: &[u8; 8] = b"INEMORAS";
const RASTER_VERSION: u32 = 1;
const DATASET_FORMAT: &str = "inemo-dataset-1";

/// Parameters of a generated dataset; stored as `dataset.txt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub per_class_train: usize,
    pub per_class_test: usize,
    pub seed: u64,
    pub image_width: usize,
    pub image_height: usize,
    pub noise_level: f64,
    /// Occlusion applied to every test sample.
    pub occlusion: Option<OcclusionLevel>,
    pub azimuth_mode: AzimuthMode,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_classes: 8,
            per_class_train: 100,
            per_class_test: 20,
            seed: 1,
            image_width: 64,
            image_height: 64,
            noise_level: 0.02,
            occlusion: None,
            azimuth_mode: AzimuthMode::Uniform,
        }
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordEntry {
    pub record: SampleRecord,
    pub occlusion: Option<OcclusionLevel>,
    pub occluded_fraction: f64,
    /// Raster path relative to the dataset root.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub classes: Vec<ClassInfo>,
    pub entries: Vec<RecordEntry>,
}

fn level_name(l: Option<OcclusionLevel>) -> String {
    l.map_or_else(|| "none".to_string(), |l| l.to_string())
}

fn parse_level(s: &str) -> Result<Option<OcclusionLevel>> {
    match s {
        "none" => Ok(None),
        other => other.parse().map(Some),
    }
}

impl Dataset {
    /// Renders every sample in memory.
    pub fn generate(config: &DatasetConfig) -> Result<(Self, BTreeMap<u64, GeneratedSample>)> {
        if config.num_classes == 0 {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        let camera = Camera::desk(config.image_width, config.image_height);
        camera.validate()?;
        let appearances: Vec<_> = (0..config.num_classes as u32)
            .map(|c| make_class_appearance(c, config.seed))
            .collect();
        let records = generate_records(
            config.num_classes,
            config.per_class_train,
            config.per_class_test,
            config.seed,
            config.azimuth_mode,
        );
        let rendered: Vec<(RecordEntry, GeneratedSample)> = records
            .par_iter()
            .map(|r| {
                let mut s = render_sample(
                    &appearances[r.class_id as usize],
                    &r.pose,
                    r.background_seed,
                    config.noise_level,
                    &camera,
                )?;
                if let (Split::Test, Some(level)) = (r.split, config.occlusion) {
                    s = occlude(&s, level, r.background_seed)?;
                }
                let entry = RecordEntry {
                    record: *r,
                    occlusion: s.occlusion,
                    occluded_fraction: s.occluded_fraction,
                    path: PathBuf::from(format!("samples/{:06}.ras", r.id)),
                };
                Ok((entry, s))
            })
            .collect::<Result<_>>()?;
        let classes = appearances
            .iter()
            .map(|a| ClassInfo {
                id: a.class_id,
                dims: a.dims,
            })
            .collect();
        let mut entries = Vec::with_capacity(rendered.len());
        let mut samples = BTreeMap::new();
        for (e, s) in rendered {
            samples.insert(e.record.id, s);
            entries.push(e);
        }
        Ok((
            Self {
                config: config.clone(),
                classes,
                entries,
            },
            samples,
        ))
    }

    pub fn records(&self) -> Vec<SampleRecord> {
        self.entries.iter().map(|e| e.record).collect()
    }

    pub fn class_info(&self, class_id: u32) -> Result<ClassInfo> {
        self.classes
            .iter()
            .find(|c| c.id == class_id)
            .copied()
            .ok_or_else(|| Error::NotFound(format!("class {class_id}")))
    }

    /// Text of the manifest file.
    pub fn manifest_text(&self) -> String {
        let mut s = String::from(
            "# id split class azimuth elevation roll distance background_seed occlusion fraction path\n",
        );
        for e in &self.entries {
            let r = &e.record;
            s.push_str(&format!(
                "{} {} {} {} {} {} {} {} {} {} {}\n",
                r.id,
                r.split,
                r.class_id,
                r.pose.azimuth,
                r.pose.elevation,
                r.pose.roll,
                r.pose.distance,
                r.background_seed,
                level_name(e.occlusion),
                e.occluded_fraction,
                e.path.display()
            ));
        }
        s
    }

    fn config_text(&self) -> String {
        let c = &self.config;
        format!(
            "format={DATASET_FORMAT}\nnum_classes={}\nper_class_train={}\nper_class_test={}\nseed={}\nimage_width={}\nimage_height={}\nnoise_level={}\nocclusion={}\nazimuth_mode={}\n",
            c.num_classes,
            c.per_class_train,
            c.per_class_test,
            c.seed,
            c.image_width,
            c.image_height,
            c.noise_level,
            level_name(c.occlusion),
            match c.azimuth_mode {
                AzimuthMode::Uniform => "uniform",
                AzimuthMode::Biased => "biased",
            }
        )
    }

    fn classes_text(&self) -> String {
        let mut s = String::from("# id dx dy dz\n");
        for c in &self.classes {
            s.push_str(&format!("{} {} {} {}\n", c.id, c.dims[0], c.dims[1], c.dims[2]));
        }
        s
    }

    /// Writes `dataset.txt`, `classes.txt`, `manifest.txt` and one raster per sample.
    pub fn write(&self, root: &Path, samples: &BTreeMap<u64, GeneratedSample>) -> Result<()> {
        let dir = root.join("samples");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (name, text) in [
            ("dataset.txt", self.config_text()),
            ("classes.txt", self.classes_text()),
            ("manifest.txt", self.manifest_text()),
        ] {
            let p = root.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        self.entries.par_iter().try_for_each(|e| {
            let s = samples
                .get(&e.record.id)
                .ok_or_else(|| Error::NotFound(format!("sample {}", e.record.id)))?;
            write_raster(&root.join(&e.path), &s.image, &s.mask)
        })
    }

    pub fn open(root: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = root.join(name);
            fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        let config = parse_config(&read("dataset.txt")?)?;
        let classes = read("classes.txt")?
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                let f: Vec<&str> = l.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(Error::format("classes.txt", format!("bad line {l:?}")));
                }
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Error::format("classes.txt", format!("bad number {s:?}")))
                };
                Ok(ClassInfo {
                    id: f[0]
                        .parse()
                        .map_err(|_| Error::format("classes.txt", format!("bad id {:?}", f[0])))?,
                    dims: [num(f[1])?, num(f[2])?, num(f[3])?],
                })
            })
            .collect::<Result<_>>()?;
        let entries = read("manifest.txt")?
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(parse_entry)
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            classes,
            entries,
        })
    }

    /// Reads every raster listed in the manifest.
    pub fn load_samples(&self, root: &Path) -> Result<BTreeMap<u64, GeneratedSample>> {
        self.entries
            .par_iter()
            .map(|e| {
                let (image, mask) = read_raster(&root.join(&e.path))?;
                Ok((
                    e.record.id,
                    GeneratedSample {
                        class_id: e.record.class_id,
                        pose: e.record.pose,
                        image,
                        mask,
                        occlusion: e.occlusion,
                        occluded_fraction: e.occluded_fraction,
                    },
                ))
            })
            .collect()
    }
}

impl GeneratedSample {
    pub fn to_sample(&self, id: u64) -> Sample {
        Sample {
            id,
            class_id: self.class_id,
            pose: self.pose,
            image: self.image.clone(),
        }
    }
}

/// Training view of a set of generated samples.
pub fn library_of(samples: &BTreeMap<u64, GeneratedSample>) -> SampleLibrary {
    samples.iter().map(|(&id, s)| (id, s.to_sample(id))).collect()
}

fn parse_config(text: &str) -> Result<DatasetConfig> {
    let mut map = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("dataset.txt", format!("bad line {line:?}")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        map.get(k)
            .cloned()
            .ok_or_else(|| Error::format("dataset.txt", format!("missing key {k}")))
    };
    if get("format")? != DATASET_FORMAT {
        return Err(Error::format("dataset.txt", "unsupported dataset format"));
    }
    fn num<T: std::str::FromStr>(k: &str, v: String) -> Result<T> {
        v.parse()
            .map_err(|_| Error::format("dataset.txt", format!("bad value for {k}: {v:?}")))
    }
    Ok(DatasetConfig {
        num_classes: num("num_classes", get("num_classes")?)?,
        per_class_train: num("per_class_train", get("per_class_train")?)?,
        per_class_test: num("per_class_test", get("per_class_test")?)?,
        seed: num("seed", get("seed")?)?,
        image_width: num("image_width", get("image_width")?)?,
        image_height: num("image_height", get("image_height")?)?,
        noise_level: num("noise_level", get("noise_level")?)?,
        occlusion: parse_level(&get("occlusion")?)?,
        azimuth_mode: get("azimuth_mode")?.parse()?,
    })
}

fn parse_entry(line: &str) -> Result<RecordEntry> {
    let f: Vec<&str> = line.split_whitespace().collect();
    let bad = |what: &str| Error::format("manifest.txt", format!("{what} in line {line:?}"));
    if f.len() != 11 {
        return Err(bad("expected 11 fields"));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
    Ok(RecordEntry {
        record: SampleRecord {
            id: f[0].parse().map_err(|_| bad("bad id"))?,
            split: f[1].parse()?,
            class_id: f[2].parse().map_err(|_| bad("bad class"))?,
            pose: Pose::new(float(f[3])?, float(f[4])?, float(f[5])?, float(f[6])?),
            background_seed: f[7].parse().map_err(|_| bad("bad seed"))?,
        },
        occlusion: parse_level(f[8])?,
        occluded_fraction: float(f[9])?,
        path: PathBuf::from(f[10]),
    })
}

/// Writes an image and its object mask: magic, then little-endian `u32`
/// version, width, height and channel count (4), then channel-major `f32`
/// planes R, G, B and mask (0 or 1).
pub fn write_raster(path: &Path, image: &Image, mask: &[bool]) -> Result<()> {
    if mask.len() != image.width * image.height {
        return Err(Error::invalid("mask does not match the image"));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(RASTER_MAGIC)?;
    for v in [RASTER_VERSION, image.width as u32, image.height as u32, 4] {
        put(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(4 * (image.data.len() + mask.len()));
    for &v in &image.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &m in mask {
        buf.extend_from_slice(&(if m { 1.0f32 } else { 0.0 }).to_le_bytes());
    }
    put(&buf)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: &Path) -> Result<(Image, Vec<bool>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let what = path.display().to_string();
    if bytes.len() < 24 || &bytes[..8] != RASTER_MAGIC {
        return Err(Error::format(what, "not a raster file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap());
    let (version, width, height, channels) = (word(0), word(1) as usize, word(2) as usize, word(3));
    if version != RASTER_VERSION || channels != 4 {
        return Err(Error::format(what, format!("unsupported version {version} / channels {channels}")));
    }
    let n = width * height;
    if bytes.len() != 24 + 16 * n {
        return Err(Error::format(what, "truncated pixel data"));
    }
    let vals: Vec<f32> = bytes[24..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let image = Image {
        height,
        width,
        data: vals[..3 * n].iter().map(|&v| v as f64).collect(),
    };
    let mask = vals[3 * n..].iter().map(|&v| v > 0.5).collect();
    Ok((image, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            num_classes: 3,
            per_class_train: 4,
            per_class_test: 2,
            image_width: 32,
            image_height: 32,
            occlusion: Some(OcclusionLevel::L2),
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic_and_occludes_tests() {
        let (a, sa) = Dataset::generate(&small()).unwrap();
        let (b, sb) = Dataset::generate(&small()).unwrap();
        assert_eq!(a.manifest_text(), b.manifest_text());
        assert_eq!(sa, sb);
        assert_eq!(a.entries.len(), 18);
        for e in &a.entries {
            match e.record.split {
                Split::Test => assert_eq!(e.occlusion, Some(OcclusionLevel::L2)),
                Split::Train => assert_eq!(e.occlusion, None),
            }
        }
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, samples) = Dataset::generate(&small()).unwrap();
        ds.write(dir.path(), &samples).unwrap();
        let back = Dataset::open(dir.path()).unwrap();
        assert_eq!(back, ds);
        let loaded = back.load_samples(dir.path()).unwrap();
        for (id, s) in &samples {
            let l = &loaded[id];
            assert_eq!(l.mask, s.mask);
            let err = l
                .image
                .data
                .iter()
                .zip(&s.image.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-6);
        }
    }

    #[test]
    fn raster_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ras");
        std::fs::write(&p, b"not a raster at all, definitely").unwrap();
        assert!(matches!(read_raster(&p), Err(Error::Format { .. })));
    }
}
