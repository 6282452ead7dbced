//! The experiment-plan runner behind `cdae report`: trains every
//! (architecture, dataset, seed) combination, computes ΔSSIM against
//! the AE baseline of the same dataset and seed, and emits the report
//! CSV, a plot-ready table of mean ΔSSIM per dataset, and a sample
//! grid image per dataset (originals on top, one reconstruction row
//! per architecture).

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use cdae_core::cascade::Arch;
use cdae_core::data::Dataset;
use cdae_core::metrics::{delta_ssim, write_report_csv, ReportRow};
use cdae_core::train::reconstruct_images;
use cdae_core::{Error, Real};

use crate::{data_root, load_dataset_pair, run_single, TrainOpts};

const GRID_COLUMNS: usize = 10;

pub fn cmd_report<T: Real>(
    archs: &[String],
    datasets: &[String],
    seeds: &[u64],
    jobs: usize,
    opts: &TrainOpts,
) -> cdae_core::Result<()> {
    let archs: Vec<Arch> = archs
        .iter()
        .map(|a| Arch::from_str(a))
        .collect::<cdae_core::Result<_>>()?;
    if !archs.contains(&Arch::Ae) {
        return Err(Error::Config(
            "report plans compute ΔSSIM and need the AE baseline; add AE to --arch".into(),
        ));
    }
    if seeds.is_empty() || datasets.is_empty() {
        return Err(Error::Config("need at least one dataset and seed".into()));
    }
    let root = data_root(&opts.data_dir);
    std::fs::create_dir_all(&opts.out)?;

    // Datasets load once and are shared read-only across runs.
    let mut pairs = Vec::new();
    for name in datasets {
        let (train_set, test_set) = load_dataset_pair(name, &root)?;
        pairs.push((name.clone(), train_set, test_set));
    }

    struct RunResult {
        row: ReportRow,
        grid: Option<(String, String, Vec<Vec<u8>>)>, // dataset, arch, images
    }

    let plan: Vec<(usize, &Arch, &(String, Dataset, Dataset), u64)> = {
        let mut p = Vec::new();
        let mut i = 0;
        for pair in &pairs {
            for arch in &archs {
                for &seed in seeds {
                    p.push((i, arch, pair, seed));
                    i += 1;
                }
            }
        }
        p
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build a pool of {jobs} jobs: {e}")))?;

    let mut results: Vec<(usize, RunResult)> = pool.install(|| {
        plan.par_iter()
            .map(|(i, arch, (name, train_set, test_set), seed)| {
                let out = run_single::<T>(**arch, name, train_set, test_set, opts, *seed)?;
                eprintln!(
                    "finished {} on {name} seed {seed}: ssim {:.5}",
                    arch.name(),
                    out.ssim
                );
                // The first seed's model supplies the grid row.
                let grid = if *seed == seeds[0] {
                    let count = GRID_COLUMNS.min(test_set.count);
                    let indices: Vec<usize> = (0..count).collect();
                    let images = reconstruct_images(&out.model, test_set, &indices)?;
                    Some((name.clone(), arch.name().to_string(), images))
                } else {
                    None
                };
                Ok((
                    *i,
                    RunResult {
                        row: ReportRow {
                            algorithm: arch.name().to_string(),
                            dataset: name.clone(),
                            ssim: out.ssim,
                            delta_ssim: 0.0,
                            seed: *seed,
                            epochs: opts.epochs,
                        },
                        grid,
                    },
                ))
            })
            .collect::<cdae_core::Result<Vec<_>>>()
    })?;
    results.sort_by_key(|(i, _)| *i);

    let mut rows: Vec<ReportRow> = results.iter().map(|(_, r)| r.row.clone()).collect();
    delta_ssim(&mut rows)?;
    write_report_csv(&rows, &opts.out.join("report.csv"))?;
    write_plot_csv(&rows, &archs, &opts.out.join("plot.csv"))?;

    for (name, _, test_set) in &pairs {
        let grid_rows: Vec<(String, Vec<Vec<u8>>)> = results
            .iter()
            .filter_map(|(_, r)| r.grid.as_ref())
            .filter(|(ds, _, _)| ds == name)
            .map(|(_, arch, imgs)| (arch.clone(), imgs.clone()))
            .collect();
        write_sample_grid(test_set, &grid_rows, &opts.out.join(format!("sample_grid_{name}.png")))?;
    }

    println!("report written to {}", opts.out.join("report.csv").display());
    Ok(())
}

/// `dataset,<arch>,...` table of mean ΔSSIM across seeds, one row per
/// dataset, ready for gnuplot or a spreadsheet.
fn write_plot_csv(rows: &[ReportRow], archs: &[Arch], path: &Path) -> cdae_core::Result<()> {
    let mut header = String::from("dataset");
    for a in archs {
        header.push(',');
        header.push_str(a.name());
    }
    header.push('\n');

    let mut by_key: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    let mut dataset_order = Vec::new();
    for r in rows {
        if !dataset_order.contains(&r.dataset) {
            dataset_order.push(r.dataset.clone());
        }
        by_key
            .entry((r.dataset.clone(), r.algorithm.clone()))
            .or_default()
            .push(r.delta_ssim);
    }
    let mut out = header;
    for ds in dataset_order {
        out.push_str(&ds);
        for a in archs {
            let deltas = &by_key[&(ds.clone(), a.name().to_string())];
            let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
            out.push_str(&format!(",{mean:.5}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// PNG grid: the top row holds the original test images, each later
/// row one architecture's reconstructions.
fn write_sample_grid(
    test_set: &Dataset,
    arch_rows: &[(String, Vec<Vec<u8>>)],
    path: &Path,
) -> cdae_core::Result<()> {
    let cols = GRID_COLUMNS.min(test_set.count);
    let (w, h) = (test_set.cols, test_set.rows);
    let width = (cols * w) as u32;
    let height = ((arch_rows.len() + 1) * h) as u32;
    let mut img = image::GrayImage::new(width, height);

    let mut blit = |row: usize, col: usize, pixels: &[u8]| {
        for (i, &p) in pixels.iter().enumerate() {
            let x = (col * w + i % w) as u32;
            let y = (row * h + i / w) as u32;
            img.put_pixel(x, y, image::Luma([p]));
        }
    };
    for c in 0..cols {
        blit(0, c, test_set.image(c));
    }
    for (ri, (_, images)) in arch_rows.iter().enumerate() {
        for (c, pixels) in images.iter().enumerate().take(cols) {
            blit(ri + 1, c, pixels);
        }
    }
    img.save(path)
        .map_err(|e| Error::Data {
            name: path.display().to_string(),
            msg: format!("cannot write grid image: {e}"),
        })?;
    Ok(())
}
