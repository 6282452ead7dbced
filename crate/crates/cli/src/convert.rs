//! One-shot dataset converters producing the IDX files the loader
//! expects. Color sources are reduced to luminance grayscale
//! (0.299 R + 0.587 G + 0.114 B, rounded); grayscale values pass
//! through unchanged.

use std::path::{Path, PathBuf};

use clap::ValueEnum;

use cdae_core::data::{luma, write_idx_images, write_idx_labels, IMAGE_COLS, IMAGE_DIM, IMAGE_ROWS};
use cdae_core::{Error, Result};

#[derive(Clone, Copy, ValueEnum)]
pub enum Layout {
    /// One JSON file per class, each `{"data": [...]}` with images as
    /// nested 784-byte arrays or one flat array; split per class into
    /// train/test counts.
    ClassJson,
    /// `<src>/train/<class>/*.png` and `<src>/test/<class>/*.png`
    /// directories of 28x28 images.
    ImageDirs,
}

pub fn convert(
    layout: Layout,
    source: &Path,
    name: &str,
    out_dir: &Path,
    train_per_class: usize,
    test_per_class: usize,
) -> Result<(usize, usize)> {
    let dest = out_dir.join(name);
    std::fs::create_dir_all(&dest)?;
    let (train, test) = match layout {
        Layout::ClassJson => convert_class_json(source, train_per_class, test_per_class)?,
        Layout::ImageDirs => (
            convert_image_split(&source.join("train"))?,
            convert_image_split(&source.join("test"))?,
        ),
    };
    write_split(&dest, "train-images-idx3-ubyte", "train-labels-idx1-ubyte", &train)?;
    write_split(&dest, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte", &test)?;
    Ok((train.1.len(), test.1.len()))
}

type SplitData = (Vec<u8>, Vec<u8>); // images, labels

fn write_split(dest: &Path, images_name: &str, labels_name: &str, split: &SplitData) -> Result<()> {
    let (images, labels) = split;
    write_idx_images(
        &dest.join(images_name),
        images,
        labels.len(),
        IMAGE_ROWS,
        IMAGE_COLS,
    )?;
    write_idx_labels(&dest.join(labels_name), labels)?;
    Ok(())
}

fn data_err(source: &Path, msg: impl Into<String>) -> Error {
    Error::Data {
        name: source.display().to_string(),
        msg: msg.into(),
    }
}

fn convert_class_json(
    source: &Path,
    train_per_class: usize,
    test_per_class: usize,
) -> Result<(SplitData, SplitData)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(source)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(data_err(source, "unrecognized layout: no *.json class files"));
    }
    if files.len() > 255 {
        return Err(data_err(source, "more than 255 classes"));
    }

    let mut train: SplitData = Default::default();
    let mut test: SplitData = Default::default();
    for (class, file) in files.iter().enumerate() {
        let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(file)?)?;
        let images = extract_images(&value)
            .ok_or_else(|| data_err(file, "expected {\"data\": [...]} of byte images"))?;
        let available = images.len() / IMAGE_DIM;
        if available <= test_per_class {
            return Err(data_err(
                file,
                format!("class has only {available} images, need more than {test_per_class}"),
            ));
        }
        let n_train = train_per_class.min(available - test_per_class);
        let n_test = test_per_class;
        train.0.extend_from_slice(&images[..n_train * IMAGE_DIM]);
        train.1.extend(std::iter::repeat(class as u8).take(n_train));
        test.0
            .extend_from_slice(&images[n_train * IMAGE_DIM..(n_train + n_test) * IMAGE_DIM]);
        test.1.extend(std::iter::repeat(class as u8).take(n_test));
    }
    Ok((train, test))
}

/// Accepts `{"data": [[784 bytes]...]}` or `{"data": [flat bytes]}`.
/// Empty rows (seen in some exports) are skipped.
fn extract_images(value: &serde_json::Value) -> Option<Vec<u8>> {
    let data = value.get("data")?.as_array()?;
    let mut out = Vec::new();
    if data.first()?.is_array() {
        for img in data {
            let img = img.as_array()?;
            if img.is_empty() {
                continue;
            }
            if img.len() != IMAGE_DIM {
                return None;
            }
            for v in img {
                out.push(v.as_f64()?.clamp(0.0, 255.0).round() as u8);
            }
        }
    } else {
        if data.len() % IMAGE_DIM != 0 {
            return None;
        }
        for v in data {
            out.push(v.as_f64()?.clamp(0.0, 255.0).round() as u8);
        }
    }
    Some(out)
}

fn convert_image_split(split_dir: &Path) -> Result<SplitData> {
    let mut classes: Vec<PathBuf> = std::fs::read_dir(split_dir)
        .map_err(|e| data_err(split_dir, format!("unrecognized layout: {e}")))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if classes.is_empty() {
        return Err(data_err(split_dir, "unrecognized layout: no class directories"));
    }
    if classes.len() > 255 {
        return Err(data_err(split_dir, "more than 255 classes"));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (class, dir) in classes.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let img = image::open(&file)
                .map_err(|e| data_err(&file, format!("cannot decode: {e}")))?
                .to_rgb8();
            if img.width() as usize != IMAGE_COLS || img.height() as usize != IMAGE_ROWS {
                return Err(data_err(
                    &file,
                    format!("expected {IMAGE_COLS}x{IMAGE_ROWS}, got {}x{}", img.width(), img.height()),
                ));
            }
            images.extend(img.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])));
            labels.push(class as u8);
        }
    }
    if labels.is_empty() {
        return Err(data_err(split_dir, "no images found"));
    }
    Ok((images, labels))
}
