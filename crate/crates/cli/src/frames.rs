//! PNG frame sequences: `frame_%05d.png`, 8-bit RGB, scaled to `[0, 1]`.

use std::path::{Path, PathBuf};

use ttvsr_core::FeatureMap;

use crate::CliError;

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

/// Sorted `frame_*.png` paths in `dir`.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("frame_") && n.ends_with(".png"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_png(path: &Path) -> Result<FeatureMap, CliError> {
    let img = image::open(path)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    FeatureMap::from_fn(3, h, w, |c, i, j| {
        img.get_pixel(j as u32, i as u32)[c] as f32 / 255.0
    })
    .map_err(CliError::from)
}

/// Read every frame of a sequence directory; all frames must share a size.
pub fn load_sequence(dir: &Path) -> Result<Vec<FeatureMap>, CliError> {
    let paths = list_frames(dir)?;
    if paths.is_empty() {
        return Err(CliError::Input(format!(
            "no frame_*.png files in {}",
            dir.display()
        )));
    }
    let frames = paths
        .iter()
        .map(|p| load_png(p))
        .collect::<Result<Vec<_>, _>>()?;
    if frames.iter().any(|f| f.shape() != frames[0].shape()) {
        return Err(CliError::Input(format!(
            "frames in {} differ in size",
            dir.display()
        )));
    }
    Ok(frames)
}

/// Round to 8 bits after clamping to `[0, 1]`.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_png(f: &FeatureMap, path: &Path) -> Result<(), CliError> {
    if f.channels() != 3 {
        return Err(CliError::Input(format!(
            "cannot save {} channels as RGB",
            f.channels()
        )));
    }
    let img = image::RgbImage::from_fn(f.width() as u32, f.height() as u32, |x, y| {
        let (i, j) = (y as usize, x as usize);
        image::Rgb([
            quantize(f.get(0, i, j)),
            quantize(f.get(1, i, j)),
            quantize(f.get(2, i, j)),
        ])
    });
    img.save(path)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn save_sequence(frames: &[FeatureMap], dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    for (k, f) in frames.iter().enumerate() {
        save_png(f, &dir.join(frame_name(k)))?;
    }
    Ok(())
}
