//! Visual environments: random and natural gray-scale scenes, and the
//! deterministic schedule in which a run visits them.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::retina::FOV;
use crate::seed::{derive_seed, rng};

/// Side length natural scenes are normalized to.
pub const SCENE_SIDE: usize = 1024;

/// Row-major 8-bit luminance raster.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Whether the retina's field of view fits inside the image.
    pub fn is_explorable(&self) -> bool {
        self.width >= FOV && self.height >= FOV
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                .expect("buffer length matches dimensions");
        buf.save(path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Decode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })
    }
}

/// Image with every pixel drawn independently and uniformly from the 256
/// integer luminance levels.
pub fn generate_random_scene(width: usize, height: usize, seed: u64) -> Result<GrayImage> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "scene dimensions must be positive, got {width}x{height}"
        )));
    }
    let mut pixels = vec![0u8; width * height];
    rng(seed).fill_bytes(&mut pixels);
    GrayImage::new(width, height, pixels)
}

/// Video luma, rounded to the nearest level.
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

/// Loads a raster image, converts it to luminance, upscales it (nearest
/// neighbour) when its shortest side is below [`SCENE_SIDE`] and center-crops
/// it to `SCENE_SIDE x SCENE_SIDE`.
pub fn load_natural_scene(path: &Path) -> Result<GrayImage> {
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let gray = to_luminance(&decoded)?;
    let scene = normalize_scene(&gray)?;
    if !scene.is_explorable() {
        return Err(Error::InvalidScene(format!(
            "{} is {}x{} after processing, smaller than the {FOV}x{FOV} field of view",
            path.display(),
            scene.width,
            scene.height
        )));
    }
    Ok(scene)
}

fn to_luminance(img: &image::DynamicImage) -> Result<GrayImage> {
    use image::DynamicImage as D;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        D::ImageLuma8(buf) => GrayImage::new(w, h, buf.as_raw().clone()),
        D::ImageLumaA8(buf) => GrayImage::new(w, h, buf.pixels().map(|p| p.0[0]).collect()),
        other => {
            let rgb = other.to_rgb8();
            GrayImage::new(
                w,
                h,
                rgb.pixels()
                    .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
                    .collect(),
            )
        }
    }
}

/// Resize/crop policy applied to every natural scene.
pub fn normalize_scene(img: &GrayImage) -> Result<GrayImage> {
    let short = img.width.min(img.height);
    let resized = if short < SCENE_SIDE {
        let scale = SCENE_SIDE as f64 / short as f64;
        let (w, h) = if img.width <= img.height {
            (
                SCENE_SIDE,
                ((img.height as f64 * scale).round() as usize).max(SCENE_SIDE),
            )
        } else {
            (
                ((img.width as f64 * scale).round() as usize).max(SCENE_SIDE),
                SCENE_SIDE,
            )
        };
        resize_nearest(img, w, h)?
    } else {
        img.clone()
    };
    center_crop(
        &resized,
        SCENE_SIDE.min(resized.width),
        SCENE_SIDE.min(resized.height),
    )
}

pub fn resize_nearest(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    let src_x: Vec<usize> = (0..width)
        .map(|x| (((x as f64 + 0.5) * img.width as f64 / width as f64) as usize).min(img.width - 1))
        .collect();
    GrayImage::from_fn(width, height, |x, y| {
        let sy =
            (((y as f64 + 0.5) * img.height as f64 / height as f64) as usize).min(img.height - 1);
        img.get(src_x[x], sy)
    })
}

pub fn center_crop(img: &GrayImage, width: usize, height: usize) -> Result<GrayImage> {
    if width > img.width || height > img.height {
        return Err(Error::InvalidArgument(format!(
            "cannot crop {width}x{height} from {}x{}",
            img.width, img.height
        )));
    }
    let x0 = (img.width - width) / 2;
    let y0 = (img.height - height) / 2;
    let mut pixels = Vec::with_capacity(width * height);
    for y in y0..y0 + height {
        pixels.extend_from_slice(&img.row(y)[x0..x0 + width]);
    }
    GrayImage::new(width, height, pixels)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SceneSource {
    Random {
        width: usize,
        height: usize,
        seed: u64,
    },
    Directory {
        path: PathBuf,
    },
    /// Pre-built scenes used as-is, without the natural-scene resize policy.
    InMemory(Arc<Vec<GrayImage>>),
}

impl fmt::Display for SceneSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SceneSource::Random {
                width,
                height,
                seed,
            } => {
                write!(f, "random(width={width},height={height},seed={seed})")
            }
            SceneSource::Directory { path } => write!(f, "directory({})", path.display()),
            SceneSource::InMemory(scenes) => write!(f, "in-memory({} scenes)", scenes.len()),
        }
    }
}

/// Ordered stream of scenes, each explored for a fixed number of saccades.
#[derive(Debug, Clone)]
pub struct SceneSchedule {
    scene_count: usize,
    saccades_per_scene: usize,
    source: SceneSource,
    files: Vec<PathBuf>,
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

/// Image files of a directory, lexicographically ordered by file name.
pub fn list_scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

impl SceneSchedule {
    pub fn new(scene_count: usize, saccades_per_scene: usize, source: SceneSource) -> Result<Self> {
        if scene_count == 0 || saccades_per_scene == 0 {
            return Err(Error::InvalidArgument(
                "scene_count and saccades_per_scene must be positive".into(),
            ));
        }
        let files = match &source {
            SceneSource::Random { width, height, .. } => {
                if *width < FOV || *height < FOV {
                    return Err(Error::InvalidScene(format!(
                        "random scenes of {width}x{height} cannot hold the {FOV}x{FOV} field of view"
                    )));
                }
                Vec::new()
            }
            SceneSource::Directory { path } => {
                let mut files = list_scene_files(path)?;
                if files.len() < scene_count {
                    return Err(Error::InsufficientScenes(format!(
                        "{} holds {} images, {scene_count} required",
                        path.display(),
                        files.len()
                    )));
                }
                files.truncate(scene_count);
                files
            }
            SceneSource::InMemory(scenes) => {
                if scenes.len() < scene_count {
                    return Err(Error::InsufficientScenes(format!(
                        "{} in-memory scenes, {scene_count} required",
                        scenes.len()
                    )));
                }
                if let Some(s) = scenes.iter().find(|s| !s.is_explorable()) {
                    return Err(Error::InvalidScene(format!(
                        "{}x{} scene cannot hold the field of view",
                        s.width, s.height
                    )));
                }
                Vec::new()
            }
        };
        Ok(Self {
            scene_count,
            saccades_per_scene,
            source,
            files,
        })
    }

    pub fn scene_count(&self) -> usize {
        self.scene_count
    }

    pub fn saccades_per_scene(&self) -> usize {
        self.saccades_per_scene
    }

    pub fn total_saccades(&self) -> usize {
        self.scene_count * self.saccades_per_scene
    }

    pub fn source(&self) -> &SceneSource {
        &self.source
    }

    /// Files backing a directory schedule, in visiting order.
    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    /// Same source with another random seed; directory sources are returned unchanged.
    pub fn reseeded(&self, seed: u64) -> Self {
        let mut out = self.clone();
        if let SceneSource::Random { seed: s, .. } = &mut out.source {
            *s = seed;
        }
        out
    }

    pub fn next_scene(&self, index: usize) -> Result<GrayImage> {
        if index >= self.scene_count {
            return Err(Error::InsufficientScenes(format!(
                "scene index {index} out of range for a schedule of {} scenes",
                self.scene_count
            )));
        }
        match &self.source {
            SceneSource::Random {
                width,
                height,
                seed,
            } => generate_random_scene(*width, *height, derive_seed(*seed, index as u64)),
            SceneSource::Directory { .. } => load_natural_scene(&self.files[index]),
            SceneSource::InMemory(scenes) => Ok(scenes[index].clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

    #[test]
    fn random_scene_dimensions_and_determinism() {
        let img = generate_random_scene(1024, 1024, 3).unwrap();
        assert_eq!((img.width(), img.height()), (1024, 1024));
        assert_eq!(img.pixels().len(), 1024 * 1024);

        let a = generate_random_scene(1, 1, 99).unwrap();
        let b = generate_random_scene(1, 1, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_scene_rejects_empty_dimensions() {
        assert!(matches!(
            generate_random_scene(0, 5, 1),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_random_scene(5, 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn histogram(img: &GrayImage) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &p in img.pixels() {
            hist[p as usize] += 1;
        }
        hist
    }

    #[test]
    fn random_scene_passes_chi_square_uniformity() {
        let img = generate_random_scene(1000, 1000, 2024).unwrap();
        let hist = histogram(&img);
        let expected = 1e6 / 256.0;
        let stat: f64 = hist
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let critical = ChiSquared::new(255.0).unwrap().inverse_cdf(1.0 - 0.001);
        assert!(stat < critical, "chi-square {stat} >= {critical}");
    }

    #[test]
    fn random_scene_bins_within_three_sigma() {
        // With 256 bins about 0.7 excursions beyond 3 sigma are expected per
        // image, so the count of such bins is bounded by its own binomial tail.
        let img = generate_random_scene(1000, 1000, 11).unwrap();
        let n: f64 = 1e6;
        let p = 1.0 / 256.0;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let tail = 2.0 * (1.0 - Normal::new(0.0, 1.0).unwrap().cdf(3.0));
        let allowed = Binomial::new(tail, 256).unwrap().inverse_cdf(1.0 - 0.001);
        let z: Vec<f64> = histogram(&img)
            .iter()
            .map(|&c| (c as f64 - n * p).abs() / sigma)
            .collect();
        let outside = z.iter().filter(|&&z| z >= 3.0).count() as u64;
        assert!(
            outside <= allowed,
            "{outside} bins beyond 3 sigma, allowed {allowed}"
        );
        let bonferroni = Normal::new(0.0, 1.0)
            .unwrap()
            .inverse_cdf(1.0 - 0.0005 / 256.0);
        assert!(z.iter().all(|&z| z < bonferroni));
    }

    #[test]
    fn luminance_of_primaries() {
        assert_eq!(luminance(255, 255, 255), 255);
        assert_eq!(luminance(255, 0, 0), 76);
        assert_eq!(luminance(0, 0, 0), 0);
    }

    #[test]
    fn small_images_are_upscaled_then_cropped() {
        let img = GrayImage::from_fn(40, 80, |x, y| ((x + y) % 256) as u8).unwrap();
        let out = normalize_scene(&img).unwrap();
        assert_eq!((out.width(), out.height()), (SCENE_SIDE, SCENE_SIDE));
        // Scale 1024/40 = 25.6; the source column 0 covers the first 25 output columns.
        assert_eq!(out.get(0, 0), out.get(24, 0));
    }

    #[test]
    fn large_images_are_only_cropped() {
        let img = GrayImage::from_fn(1100, 1030, |x, y| ((x * 7 + y) % 251) as u8).unwrap();
        let out = normalize_scene(&img).unwrap();
        assert_eq!((out.width(), out.height()), (1024, 1024));
        assert_eq!(out.get(0, 0), img.get(38, 3));
    }

    #[test]
    fn grayscale_png_passes_through_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let img = generate_random_scene(1024, 1024, 5).unwrap();
        img.save_png(&path).unwrap();
        assert_eq!(load_natural_scene(&path).unwrap(), img);
        // Idempotent: the processed image is a fixed point of the pipeline.
        let again = dir.path().join("g2.png");
        load_natural_scene(&path).unwrap().save_png(&again).unwrap();
        assert_eq!(load_natural_scene(&again).unwrap(), img);
    }

    #[test]
    fn rgb_png_converted_to_luma() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        image::RgbImage::from_pixel(1024, 1024, image::Rgb([255, 0, 0]))
            .save(&path)
            .unwrap();
        let scene = load_natural_scene(&path).unwrap();
        assert!(scene.pixels().iter().all(|&p| p == 76));
    }

    #[test]
    fn unreadable_file_is_io_error() {
        let err = load_natural_scene(Path::new("/nonexistent/scene.png")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err:?}");
    }

    #[test]
    fn undecodable_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(
            load_natural_scene(&path),
            Err(Error::Decode { .. })
        ));
    }

    #[test]
    fn random_schedule_is_deterministic_and_bounded() {
        let schedule = SceneSchedule::new(
            100,
            10,
            SceneSource::Random {
                width: 64,
                height: 64,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(
            schedule.next_scene(0).unwrap(),
            schedule.next_scene(0).unwrap()
        );
        assert_ne!(
            schedule.next_scene(0).unwrap(),
            schedule.next_scene(1).unwrap()
        );
        assert!(matches!(
            schedule.next_scene(100),
            Err(Error::InsufficientScenes(_))
        ));
    }

    #[test]
    fn directory_schedule_orders_by_file_name() {
        let dir = tempfile::tempdir().unwrap();
        let a = GrayImage::filled(40, 40, 10).unwrap();
        let b = GrayImage::filled(40, 40, 200).unwrap();
        b.save_png(&dir.path().join("b.png")).unwrap();
        a.save_png(&dir.path().join("a.png")).unwrap();
        let schedule = SceneSchedule::new(
            2,
            5,
            SceneSource::Directory {
                path: dir.path().to_path_buf(),
            },
        )
        .unwrap();
        let second = schedule.next_scene(1).unwrap();
        assert!(second.pixels().iter().all(|&p| p == 200));
    }

    #[test]
    fn directory_with_too_few_images() {
        let dir = tempfile::tempdir().unwrap();
        let err = SceneSchedule::new(
            1,
            5,
            SceneSource::Directory {
                path: dir.path().to_path_buf(),
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientScenes(_)));
    }
}
