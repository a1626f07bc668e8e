//! Run-directory layout shared by every subcommand.
//!
//! ```text
//! config.json        resolved configuration of the last command
//! scene.json         geometry, features, ambient profile
//! gt_params.json     simulation ground truth, never read by training
//! split.json         capture files per split, in dataset order
//! captures/*.pfm     observed frames plus one JSON sidecar each
//! stage1.ckpt        stage2.ckpt
//! metrics.csv        emissivity.csv   curves.csv   ablation*.csv
//! renders/*.pfm
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thermosplat_core::dataset::{Dataset, Split, TimedCapture};
use thermosplat_core::scene::{Camera, Scene};
use thermosplat_core::synth::SynthOutput;

use crate::error::{Error, Result};
use crate::json::{load_scene, read_json, save_scene, write_json};
use crate::pfm;

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn create(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(Error::io(&self.root))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn config(&self) -> PathBuf {
        self.path("config.json")
    }
    pub fn scene(&self) -> PathBuf {
        self.path("scene.json")
    }
    pub fn gt_params(&self) -> PathBuf {
        self.path("gt_params.json")
    }
    pub fn split(&self) -> PathBuf {
        self.path("split.json")
    }
    pub fn captures(&self) -> PathBuf {
        self.path("captures")
    }
    pub fn renders(&self) -> PathBuf {
        self.path("renders")
    }
    pub fn checkpoint(&self, stage: u32) -> PathBuf {
        self.path(&format!("stage{stage}.ckpt"))
    }
}

/// Per-frame metadata stored next to each raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    /// Seconds.
    pub timestamp: f64,
    pub view_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub camera: Camera,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    /// Raster paths relative to the run directory.
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub fn frame_stem(view_id: usize, t: f64) -> String {
    format!("view{view_id:02}_t{t}")
}

/// Writes `<stem>.pfm` and `<stem>.json` into `dir`.
pub fn write_frame(dir: &Path, stem: &str, img: &thermosplat_core::image::ThermalImage, meta: &Sidecar) -> Result<()> {
    pfm::write_image(&dir.join(format!("{stem}.pfm")), img)?;
    write_json(&dir.join(format!("{stem}.json")), meta)
}

fn sidecar_path(pfm: &Path) -> PathBuf {
    pfm.with_extension("json")
}

/// Everything `synth` emits apart from `config.json`.
pub fn write_synth(run: &RunDir, out: &SynthOutput) -> Result<()> {
    run.create()?;
    save_scene(&out.scene, &run.scene())?;
    write_json(&run.gt_params(), &out.gt)?;
    let dir = run.captures();
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    let mut split = SplitFile::default();
    for cap in &out.dataset.captures {
        let stem = frame_stem(cap.view_id, cap.time());
        let meta = Sidecar {
            timestamp: cap.time(),
            view_id: cap.view_id,
            split: Some(cap.split),
            camera: cap.camera,
        };
        write_frame(&dir, &stem, &cap.image, &meta)?;
        let rel = format!("captures/{stem}.pfm");
        match cap.split {
            Split::Train => split.train.push(rel),
            Split::Test => split.test.push(rel),
        }
    }
    write_json(&run.split(), &split)
}

/// Scene and captures as training sees them. Only images, cameras,
/// timestamps, features and the ambient profile are read.
pub fn load_dataset(run: &RunDir) -> Result<(Scene, Dataset)> {
    let scene = load_scene(&run.scene())?;
    let split: SplitFile = read_json(&run.split())?;
    let mut captures = Vec::with_capacity(split.train.len() + split.test.len());
    for (files, which) in [(&split.train, Split::Train), (&split.test, Split::Test)] {
        for rel in files {
            let path = run.root.join(rel);
            let meta: Sidecar = read_json(&sidecar_path(&path))?;
            if meta.split.is_some_and(|s| s != which) {
                return Err(Error::format(&run.split(), format!("{rel} is listed under the wrong split")));
            }
            let image = pfm::read_image(&path, meta.timestamp)?;
            if image.width != meta.camera.width || image.height != meta.camera.height {
                return Err(Error::format(&path, "raster size differs from its camera"));
            }
            captures.push(TimedCapture {
                view_id: meta.view_id,
                camera: meta.camera,
                image,
                split: which,
            });
        }
    }
    let dataset = Dataset { captures };
    dataset.validate().map_err(|e| Error::format(&run.split(), e.to_string()))?;
    Ok((scene, dataset))
}
