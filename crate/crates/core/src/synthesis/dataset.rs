//! Labeled dataset builder and reader.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! manifest.jsonl   one SampleRecord per line
//! config.txt       resolved build configuration
//! clouds/          PCQ1 files referenced by the manifest
//! bank/            shape bank used by the completion oracle
//! reference/       ground truths of every scene, by shape kind (MMD reference)
//! ```

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::label::{complete_tagged, label_with_positive, Label};
use super::render::render_partial;
use super::roi::{crop_roi, propose_rois, to_model_frame};
use super::scene::{augment_scene, GroundSpec, PointSource, SceneSpec};
use super::shapes::{generate_shape, ShapeKind};
use super::synthetic_bank;
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::geometry::{read_cloud, write_cloud, PointCloud};
use crate::metrics::ShapeBank;
use crate::oracle::{build_oracle, CompletionOracle, OracleKind};
use crate::seed;

pub const MANIFEST: &str = "manifest.jsonl";
pub const CONFIG_ECHO: &str = "config.txt";
pub const CLOUD_DIR: &str = "clouds";
pub const BANK_DIR: &str = "bank";
pub const REFERENCE_DIR: &str = "reference";

const SALT_SCENE: u64 = 0x5343_454e;
const SALT_TRUTH: u64 = 0x5452_5554;

/// Keys understood by [`BuildConfig::from_kv`].
pub const BUILD_KEYS: &[&str] = &[
    "n",
    "oracle",
    "seed",
    "bank",
    "bank_per_kind",
    "kinds",
    "test_fraction",
    "rois_per_scene",
    "clean_fraction",
    "max_clutter",
    "ground_prob",
    "noise_sigma",
    "jitter_amplitude",
    "out",
];

#[derive(Clone, Debug, PartialEq)]
pub struct BuildConfig {
    /// Number of samples.
    pub n: usize,
    pub oracle: OracleKind,
    pub seed: u64,
    /// Existing bank directory; a synthetic bank is generated when absent.
    pub bank: Option<PathBuf>,
    pub bank_per_kind: usize,
    pub kinds: Vec<ShapeKind>,
    /// Fraction of scenes assigned to the test split.
    pub test_fraction: f64,
    pub rois_per_scene: usize,
    /// Probability that a scene also emits a sample whose crop is the clean view.
    pub clean_fraction: f64,
    pub max_clutter: usize,
    pub ground_prob: f64,
    /// Upper bound of the per-scene noise sigma.
    pub noise_sigma: f64,
    pub jitter_amplitude: f64,
}

impl BuildConfig {
    pub fn new(n: usize, oracle: OracleKind) -> Self {
        BuildConfig {
            n,
            oracle,
            seed: 0,
            bank: None,
            bank_per_kind: 8,
            kinds: ShapeKind::ALL.to_vec(),
            test_fraction: 0.2,
            rois_per_scene: 5,
            clean_fraction: 0.5,
            max_clutter: 2,
            ground_prob: 0.7,
            noise_sigma: 0.01,
            jitter_amplitude: 1.0,
        }
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        kv.reject_unknown(BUILD_KEYS)?;
        let mut c = BuildConfig::new(kv.require("n")?, kv.require("oracle")?);
        c.seed = kv.get_or("seed", c.seed)?;
        c.bank = kv.get::<String>("bank")?.filter(|s| !s.is_empty()).map(PathBuf::from);
        c.bank_per_kind = kv.get_or("bank_per_kind", c.bank_per_kind)?;
        if let Some(kinds) = kv.get_list("kinds")? {
            c.kinds = kinds;
        }
        c.test_fraction = kv.get_or("test_fraction", c.test_fraction)?;
        c.rois_per_scene = kv.get_or("rois_per_scene", c.rois_per_scene)?;
        c.clean_fraction = kv.get_or("clean_fraction", c.clean_fraction)?;
        c.max_clutter = kv.get_or("max_clutter", c.max_clutter)?;
        c.ground_prob = kv.get_or("ground_prob", c.ground_prob)?;
        c.noise_sigma = kv.get_or("noise_sigma", c.noise_sigma)?;
        c.jitter_amplitude = kv.get_or("jitter_amplitude", c.jitter_amplitude)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::default();
        kv.set("n", self.n);
        kv.set("oracle", self.oracle);
        kv.set("seed", self.seed);
        if let Some(b) = &self.bank {
            kv.set("bank", b.display());
        }
        kv.set("bank_per_kind", self.bank_per_kind);
        let kinds: Vec<&str> = self.kinds.iter().map(|k| k.name()).collect();
        kv.set("kinds", kinds.join(","));
        kv.set("test_fraction", self.test_fraction);
        kv.set("rois_per_scene", self.rois_per_scene);
        kv.set("clean_fraction", self.clean_fraction);
        kv.set("max_clutter", self.max_clutter);
        kv.set("ground_prob", self.ground_prob);
        kv.set("noise_sigma", self.noise_sigma);
        kv.set("jitter_amplitude", self.jitter_amplitude);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |k: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("`{k}` must lie in [0, 1], got {v}")))
            }
        };
        if self.n == 0 {
            return Err(Error::Config("`n` must be positive".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("`kinds` is empty".into()));
        }
        if self.rois_per_scene == 0 {
            return Err(Error::Config("`rois_per_scene` must be positive".into()));
        }
        if self.bank.is_none() && self.bank_per_kind == 0 {
            return Err(Error::Config("`bank_per_kind` must be positive".into()));
        }
        unit("test_fraction", self.test_fraction)?;
        unit("clean_fraction", self.clean_fraction)?;
        unit("ground_prob", self.ground_prob)?;
        if !(self.noise_sigma >= 0.0) || !(self.jitter_amplitude >= 0.0) {
            return Err(Error::Config("`noise_sigma` and `jitter_amplitude` must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

/// One line of a dataset manifest. Cloud paths are relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub p: String,
    pub p_o: String,
    pub p_r: String,
    pub p_g: String,
    pub s_g: f64,
    pub s_plus: f64,
    pub s_minus: f64,
    pub raw_ratio: Option<f64>,
    /// Seed of the ground-truth shape.
    pub seed: u64,
    pub scene: usize,
    pub shape_kind: ShapeKind,
    pub split: Split,
    /// Rank of the ROI among the scene's proposals; `None` for the clean view.
    pub roi_rank: Option<usize>,
    pub confidence: f64,
    pub ground_fraction: f64,
    pub clutter_fraction: f64,
    pub n_points: usize,
}

struct SceneOutput {
    index: usize,
    kind: ShapeKind,
    p_g: PointCloud,
    records: Vec<SampleRecord>,
    clouds: Vec<(String, PointCloud)>,
}

fn cloud_path(name: String) -> String {
    format!("{CLOUD_DIR}/{name}.pcq")
}

fn generate_scene(
    cfg: &BuildConfig,
    index: usize,
    oracle: &dyn CompletionOracle,
    bank: &ShapeBank,
) -> Result<SceneOutput> {
    let mut rng = seed::stream(cfg.seed, SALT_SCENE, index as u64);
    let tag = format!("s{index:05}");
    let kind = cfg.kinds[rng.gen_range(0..cfg.kinds.len())];
    let shape_seed = seed::derive(cfg.seed, SALT_TRUTH, index as u64);
    let p_g = generate_shape(kind, shape_seed).with_id(format!("{tag}-pg"));

    let azimuth = rng.gen_range(0.0..2.0 * PI);
    let elevation = rng.gen_range(5.0f64..35.0).to_radians();
    let view = [
        elevation.cos() * azimuth.cos(),
        elevation.cos() * azimuth.sin(),
        elevation.sin(),
    ];
    let p = render_partial(&p_g, view, rng.gen())?.with_id(format!("{tag}-p"));
    let split = if rng.gen_bool(cfg.test_fraction) {
        Split::Test
    } else {
        Split::Train
    };

    // log-uniform so small, sparse crops are common
    let upper = p.len().clamp(128, 2048) as f64;
    let target = (128f64.ln() + rng.gen::<f64>() * (upper.ln() - 128f64.ln())).exp().round() as usize;
    let mut spec = SceneSpec::new(
        rng.gen_range(0.0..2.0 * PI),
        [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0), rng.gen_range(-1.0..1.0)],
        rng.gen_range(0.8..=1.2),
        target.clamp(128, 2048),
        rng.gen(),
    )?
    .with_view(view)
    .with_clutter(rng.gen_range(0..=cfg.max_clutter))
    .with_noise(rng.gen::<f64>() * cfg.noise_sigma);
    let ground_on = rng.gen_bool(cfg.ground_prob);
    let ground = GroundSpec {
        height_offset: rng.gen_range(0.0..0.04),
        half_extent: rng.gen_range(0.8..2.0),
    };
    let roi_seed: u64 = rng.gen();
    let emit_clean = rng.gen_bool(cfg.clean_fraction);

    let extent = p_g.aabb();
    if ground_on {
        let half = extent.half_extents();
        let reach = half[0].max(half[1]) * spec.pose().scale();
        spec = spec.with_ground(GroundSpec {
            half_extent: ground.half_extent * reach,
            ..ground
        });
    }
    let scene = augment_scene(&p, &extent, &spec, bank)?;
    let p_o = crop_roi(&scene.cloud, &scene.object_box)
        .map(|(c, _)| to_model_frame(&c, &scene.object_box, &extent))
        .unwrap_or_else(|| p.clone());

    let f_p = complete_tagged(oracle, &p)?;
    let names = (cloud_path(format!("{tag}-p")), cloud_path(format!("{tag}-po")), cloud_path(format!("{tag}-pg")));
    let mut clouds = vec![
        (names.0.clone(), p.clone()),
        (names.1.clone(), p_o),
        (names.2.clone(), p_g.clone()),
    ];
    let record = |id: String, p_r: String, label: Label, rank, confidence, gf, cf, n| SampleRecord {
        id,
        p: names.0.clone(),
        p_o: names.1.clone(),
        p_r,
        p_g: names.2.clone(),
        s_g: label.s_g,
        s_plus: label.s_plus,
        s_minus: label.s_minus,
        raw_ratio: label.raw_ratio,
        seed: shape_seed,
        scene: index,
        shape_kind: kind,
        split,
        roi_rank: rank,
        confidence,
        ground_fraction: gf,
        clutter_fraction: cf,
        n_points: n,
    };

    let mut records = Vec::new();
    for (rank, roi) in propose_rois(&scene, cfg.rois_per_scene, roi_seed, cfg.jitter_amplitude)?
        .iter()
        .enumerate()
    {
        let Some((crop, idx)) = crop_roi(&scene.cloud, roi) else {
            continue;
        };
        let id = format!("{tag}-r{rank}");
        let crop = to_model_frame(&crop, roi, &extent).with_id(id.clone());
        let label = label_with_positive(&f_p, &crop, &p_g, oracle)?;
        let count = |f: fn(&PointSource) -> bool| {
            idx.iter().filter(|&&i| f(&scene.sources[i])).count() as f64 / idx.len() as f64
        };
        let gf = count(|s| *s == PointSource::Ground);
        let cf = count(|s| matches!(s, PointSource::Clutter(_)));
        let path = cloud_path(id.clone());
        records.push(record(id, path.clone(), label, Some(rank), roi.confidence, gf, cf, crop.len()));
        clouds.push((path, crop));
    }
    if emit_clean {
        let label = label_with_positive(&f_p, &p, &p_g, oracle)?;
        records.push(record(format!("{tag}-clean"), names.0.clone(), label, None, 1.0, 0.0, 0.0, p.len()));
    }
    Ok(SceneOutput {
        index,
        kind,
        p_g,
        records,
        clouds,
    })
}

/// Generates `cfg.n` labeled samples under `out` and returns the opened dataset.
///
/// Scenes are independent (each draws from its own stream derived from the
/// master seed and the scene index) and are generated in parallel; their
/// samples are concatenated in scene order and the list is cut at `n`.
pub fn build_dataset(cfg: &BuildConfig, out: impl AsRef<Path>) -> Result<Dataset> {
    cfg.validate()?;
    let out = out.as_ref();
    let bank = match &cfg.bank {
        Some(dir) => ShapeBank::load_dir(dir)?,
        None => synthetic_bank(&cfg.kinds, cfg.bank_per_kind, cfg.seed)?,
    };
    if bank.is_empty() {
        return Err(Error::Bank("shape bank is empty".into()));
    }
    let bank = Arc::new(bank);
    let oracle = build_oracle(cfg.oracle, bank.clone())?;

    let per_scene = cfg.rois_per_scene as f64 + cfg.clean_fraction;
    let mut scenes: Vec<SceneOutput> = Vec::new();
    let mut have = 0;
    while have < cfg.n {
        let want = ((cfg.n - have) as f64 / per_scene).ceil() as usize + 1;
        let start = scenes.len();
        let batch: Vec<SceneOutput> = (start..start + want)
            .into_par_iter()
            .map(|i| generate_scene(cfg, i, oracle.as_ref(), &bank))
            .collect::<Result<_>>()?;
        have += batch.iter().map(|s| s.records.len()).sum::<usize>();
        scenes.extend(batch);
    }

    let mut records = Vec::with_capacity(cfg.n);
    let mut used = Vec::new();
    for s in &scenes {
        if records.len() == cfg.n {
            break;
        }
        let take = (cfg.n - records.len()).min(s.records.len());
        records.extend_from_slice(&s.records[..take]);
        used.push(s);
    }
    let wanted: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| [r.p.as_str(), r.p_o.as_str(), r.p_r.as_str(), r.p_g.as_str()])
        .collect();

    fs::create_dir_all(out.join(CLOUD_DIR)).map_err(|e| Error::io(out.join(CLOUD_DIR), e))?;
    used.par_iter()
        .flat_map(|s| s.clouds.par_iter())
        .filter(|(path, _)| wanted.contains(path.as_str()))
        .try_for_each(|(path, cloud)| write_cloud(out.join(path), cloud))?;

    bank.save_dir(out.join(BANK_DIR))?;
    let mut reference = ShapeBank::new();
    for s in &used {
        reference.push(s.p_g.id.clone().unwrap_or_else(|| format!("s{:05}-pg", s.index)), s.kind.name(), s.p_g.clone())?;
    }
    reference.save_dir(out.join(REFERENCE_DIR))?;

    let mut manifest = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut manifest, r)?;
        manifest.push(b'\n');
    }
    write_file(&out.join(MANIFEST), &manifest)?;
    write_file(&out.join(CONFIG_ECHO), cfg.to_kv().to_text().as_bytes())?;
    Dataset::open(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// A dataset directory with its parsed manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    pub records: Vec<SampleRecord>,
}

impl Dataset {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let path = root.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| Error::Dataset(format!("{}: line {}: {e}", path.display(), i + 1)))
            })
            .collect::<Result<Vec<SampleRecord>>>()?;
        Ok(Dataset { root, records })
    }

    /// True when `dir` holds a dataset manifest (as opposed to a bank manifest).
    pub fn is_dataset_dir(dir: impl AsRef<Path>) -> bool {
        let Ok(text) = fs::read_to_string(dir.as_ref().join(MANIFEST)) else {
            return false;
        };
        text.lines()
            .find(|l| !l.trim().is_empty())
            .is_some_and(|l| serde_json::from_str::<SampleRecord>(l).is_ok())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn load(&self, rel: &str) -> Result<PointCloud> {
        read_cloud(self.root.join(rel))
    }

    /// The crop of a record, tagged with the record id.
    pub fn crop(&self, r: &SampleRecord) -> Result<PointCloud> {
        Ok(self.load(&r.p_r)?.with_id(r.id.clone()))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn bank(&self) -> Result<ShapeBank> {
        ShapeBank::load_dir(self.root.join(BANK_DIR))
    }

    pub fn reference_bank(&self) -> Result<ShapeBank> {
        ShapeBank::load_dir(self.root.join(REFERENCE_DIR))
    }
}
