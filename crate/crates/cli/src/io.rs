use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use sphconv_core::engine::Tensor;
use sphconv_core::geometry::EquirectImage;

const EXTENSIONS: [&str; 2] = ["png", "ppm"];

/// RGB image with values in `[0, 1]`.
pub fn load_rgb(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)
        .with_context(|| format!("reading image {}", path.display()))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut t = Tensor::zeros(3, h, w);
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            t.set(c, y as usize, x as usize, p[c] as f32 / 255.0);
        }
    }
    Ok(t)
}

/// An equirectangular frame; fails unless the width is twice the height.
pub fn load_equirect(path: &Path) -> Result<EquirectImage> {
    let t = load_rgb(path)?;
    let (h, w) = (t.height(), t.width());
    EquirectImage::from_tensor(t).with_context(|| format!("{} is {w}x{h}, not an equirect frame", path.display()))
}

/// Writes channels 0..3 (or channel 0 as gray) clamped to `[0, 1]`.
pub fn save_png(path: &Path, t: &Tensor<f32>) -> Result<()> {
    let (c, h, w) = t.dims();
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    if c >= 3 {
        let mut img = image::RgbImage::new(w as u32, h as u32);
        for (x, y, p) in img.enumerate_pixels_mut() {
            let (x, y) = (x as usize, y as usize);
            *p = image::Rgb([q(t.get(0, y, x)), q(t.get(1, y, x)), q(t.get(2, y, x))]);
        }
        img.save(path)
    } else {
        let mut img = image::GrayImage::new(w as u32, h as u32);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = image::Luma([q(t.get(0, y as usize, x as usize))]);
        }
        img.save(path)
    }
    .with_context(|| format!("writing {}", path.display()))
}

/// Image files in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    v.sort();
    if v.is_empty() {
        bail!("no PNG or PPM images in {}", dir.display());
    }
    Ok(v)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).with_context(|| format!("reading {}", path.display()))?))
}

/// Deterministic split: a file is held out when its name's hash falls in
/// the lowest `fraction` of the hash range.
pub fn is_test(name: &str, fraction: f64) -> bool {
    let d = Sha256::digest(name.as_bytes());
    let v = u64::from_be_bytes(d[..8].try_into().expect("8 bytes"));
    (v as f64 / u64::MAX as f64) < fraction
}

pub fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Serialize)]
struct InputEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    seed: u64,
    inputs: Vec<InputEntry>,
    outputs: Vec<String>,
}

/// Files one command writes under the output directory. Unless
/// [`Outputs::finish`] runs, everything registered is deleted on drop, so a
/// failed command leaves no partial artifacts behind.
pub struct Outputs {
    dir: PathBuf,
    command: String,
    written: Vec<PathBuf>,
    inputs: Vec<PathBuf>,
    done: bool,
}

impl Outputs {
    pub fn new(dir: &Path, command: &str) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.into(),
            written: Vec::new(),
            inputs: Vec::new(),
            done: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Registers `name` (relative to the output directory) and returns its path.
    pub fn file(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.written.push(p.clone());
        Ok(p)
    }

    /// A file another writer creates next to a registered one.
    pub fn sidecar(&mut self, registered: &Path, ext: &str) -> PathBuf {
        let stem = registered.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let p = registered.with_file_name(format!("{stem}.{ext}"));
        self.written.push(p.clone());
        p
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.file(name)?;
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    /// Writes `manifest-<command>.toml` with the hashes of every input.
    pub fn finish(mut self, seed: u64) -> Result<()> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            if p.is_file() {
                inputs.push(InputEntry {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                });
            }
        }
        let outputs = self
            .written
            .iter()
            .map(|p| p.strip_prefix(&self.dir).unwrap_or(p).display().to_string())
            .collect();
        let m = RunManifest {
            command: self.command.clone(),
            seed,
            inputs,
            outputs,
        };
        let name = format!("manifest-{}.toml", self.command);
        fs::write(self.dir.join(name), toml::to_string(&m)?)?;
        self.done = true;
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.done {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}
