//! The five subcommands. Every output file goes through atomic writes, and
//! any per-window failure removes the files already written for the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dynaflow::error::{Error, Result};
use dynaflow::io;
use dynaflow::pipeline::{
    make_windows, window_output_name, ClipManifest, ClipSpec, WindowRecord, WindowSpec,
};
use dynaflow::preprocess::condition_sequence;
use dynaflow::rankpool::{
    pool_flow, pool_rgb, render_flow, render_flow_color, render_rgb, DynamicFlowImage,
    DynamicImage,
};
use dynaflow::toyeval::{run_comparison, ComparisonConfig, FeaturizeParams};
use dynaflow::tvl1::sequence_flow;
use dynaflow::{FlowField, FlowSequence};
use rayon::prelude::*;

use crate::config::Config;

pub enum PoolMode {
    DynamicFlow,
    DynamicImage,
}

/// Tracks files written by one command so a late failure can undo them.
struct OutputSet {
    written: Vec<PathBuf>,
}

impl OutputSet {
    fn new() -> Self {
        OutputSet {
            written: Vec::new(),
        }
    }

    fn record(&mut self, path: PathBuf) -> &Path {
        self.written.push(path);
        self.written.last().unwrap()
    }

    fn discard_all(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }

    fn keep(mut self) {
        self.written.clear();
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        self.discard_all();
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `flow <frames_dir> <out_dir>`: TV-L1 flow for each consecutive frame
/// pair, written as `.flo` files named by source frame index.
pub fn cmd_flow(frames_dir: &Path, out_dir: &Path, cfg: &Config) -> Result<()> {
    let frames = io::load_gray_sequence(frames_dir)?;
    if frames.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "flow needs at least 2 frames, found {}",
            frames.len()
        )));
    }
    let flow = sequence_flow(&frames, &cfg.tvl1_params())?;
    ensure_dir(out_dir)?;
    let mut outputs = OutputSet::new();
    for (i, field) in flow.frames().iter().enumerate() {
        let path = out_dir.join(format!("flow_{i:06}.flo"));
        io::write_flo(field, outputs.record(path))?;
    }
    outputs.keep();
    println!(
        "wrote {} flow fields to {}",
        flow.len(),
        out_dir.display()
    );
    Ok(())
}

fn load_flow_dir(dir: &Path) -> Result<FlowSequence> {
    let mut fields: Vec<FlowField> = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("flo"))
        })
        .collect();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .flo files in {}",
            dir.display()
        )));
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    for path in paths {
        let (field, replaced) = io::read_flo_counting(&path)?;
        if replaced > 0 {
            eprintln!(
                "warning: {} non-finite samples zeroed in {}",
                replaced,
                path.display()
            );
        }
        fields.push(field);
    }
    FlowSequence::new(fields)
}

fn write_flow_outputs(
    images: &[DynamicFlowImage],
    manifest: &ClipManifest,
    out_dir: &Path,
    color: bool,
    outputs: &mut OutputSet,
) -> Result<()> {
    for (img, record) in images.iter().zip(manifest.windows()) {
        let raw = out_dir.join(&record.path);
        io::write_planes(outputs.record(raw), img.width(), img.height(), &[img.fu(), img.fv()])?;
        let stem = record.path.trim_end_matches(".dynf").to_string();
        let (u_img, v_img) = render_flow(img);
        io::save_gray_png(&u_img, outputs.record(out_dir.join(format!("{stem}_u.png"))))?;
        io::save_gray_png(&v_img, outputs.record(out_dir.join(format!("{stem}_v.png"))))?;
        if color {
            let composite = render_flow_color(img);
            io::save_rgb_png(
                &composite,
                outputs.record(out_dir.join(format!("{stem}_uv.png"))),
            )?;
        }
    }
    let path = out_dir.join(format!("{}.manifest", manifest.clip_id()));
    io::atomic_write(outputs.record(path), manifest.to_text().as_bytes())?;
    Ok(())
}

/// `pool <input_dir> <out_dir>`: the full per-clip pipeline. Dynamic-flow
/// mode consumes `.flo` files; dynamic-image mode consumes raster frames.
pub fn cmd_pool(
    input_dir: &Path,
    out_dir: &Path,
    mode: PoolMode,
    clip_id: Option<&str>,
    label: &str,
    color: bool,
    cfg: &Config,
) -> Result<()> {
    let clip_id = match clip_id {
        Some(id) => id.to_string(),
        None => input_dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("clip")
            .to_string(),
    };
    let spec = cfg.window_spec()?;
    ensure_dir(out_dir)?;
    let mut outputs = OutputSet::new();

    let count = match mode {
        PoolMode::DynamicFlow => {
            let flow = load_flow_dir(input_dir)?;
            let clip = ClipSpec {
                clip_id: clip_id.clone(),
                label: label.to_string(),
            };
            let (images, manifest) = dynaflow::pipeline::run_clip(
                &flow,
                &spec,
                cfg.clip_bound,
                cfg.svm_c,
                &cfg.solver_config(),
                &clip,
            )?;
            write_flow_outputs(&images, &manifest, out_dir, color, &mut outputs)?;
            images.len()
        }
        PoolMode::DynamicImage => {
            let frames = io::load_rgb_sequence(input_dir)?;
            let windows = make_windows(frames.len(), &spec);
            let solver = cfg.solver_config();
            let pooled: Vec<Result<DynamicImage>> = windows
                .par_iter()
                .map(|&(start, end)| pool_rgb(&frames[start..end], cfg.svm_c, &solver))
                .collect();
            let mut images = Vec::with_capacity(pooled.len());
            let mut records = Vec::with_capacity(pooled.len());
            for (idx, (result, &(start, end))) in pooled.into_iter().zip(&windows).enumerate() {
                let img = result.map_err(|e| {
                    Error::Contract(format!("window {idx} [{start}, {end}) failed: {e}"))
                })?;
                images.push(img);
                records.push(WindowRecord {
                    start,
                    end,
                    path: window_output_name(&clip_id, start, "dynf"),
                });
            }
            let manifest =
                ClipManifest::new(clip_id.clone(), label.to_string(), frames.len(), records)?;
            for (img, record) in images.iter().zip(manifest.windows()) {
                let raw = out_dir.join(&record.path);
                io::write_planes(
                    outputs.record(raw),
                    img.width(),
                    img.height(),
                    &[img.plane(0), img.plane(1), img.plane(2)],
                )?;
                let stem = record.path.trim_end_matches(".dynf").to_string();
                let rendered = render_rgb(img);
                io::save_rgb_png(&rendered, outputs.record(out_dir.join(format!("{stem}.png"))))?;
            }
            let path = out_dir.join(format!("{clip_id}.manifest"));
            io::atomic_write(outputs.record(path), manifest.to_text().as_bytes())?;
            images.len()
        }
    };
    outputs.keep();
    println!("wrote {count} pooled images and manifest to {}", out_dir.display());
    Ok(())
}

/// `sweep <flow_dir> <out_file>`: pooling across a set of window sizes,
/// reporting output counts and mean per-window pooling wall time. Timings go
/// to stdout only so the results file stays byte-reproducible.
pub fn cmd_sweep(flow_dir: &Path, out_file: &Path, windows: &[usize], cfg: &Config) -> Result<()> {
    if windows.is_empty() {
        return Err(Error::Config("sweep needs at least one window size".into()));
    }
    let flow = load_flow_dir(flow_dir)?;
    let conditioned = condition_sequence(&flow, cfg.clip_bound)?;
    let solver = cfg.solver_config();

    println!("{:>8} {:>8} {:>14}", "window", "outputs", "mean_pool_ms");
    let mut rows = String::from("window\toutputs\n");
    for &window in windows {
        let spec = WindowSpec {
            window,
            stride: cfg.stride,
        };
        spec.validate()?;
        let slots = make_windows(flow.len(), &spec);
        let start = Instant::now();
        for &(lo, hi) in &slots {
            pool_flow(&conditioned[lo..hi], cfg.svm_c, &solver)?;
        }
        let mean_ms = start.elapsed().as_secs_f64() * 1000.0 / slots.len() as f64;
        println!("{window:>8} {:>8} {mean_ms:>14.2}", slots.len());
        rows.push_str(&format!("{window}\t{}\n", slots.len()));
    }
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    io::atomic_write(out_file, rows.as_bytes())?;
    Ok(())
}

/// Outcome of `toyeval`: the report plus whether the regime's criterion held.
pub struct ToyOutcome {
    pub criterion_met: bool,
}

/// `toyeval <out_dir>`: runs the synthetic comparison, writes the plain-text
/// table and the record file, and succeeds only if the regime criterion
/// holds (easy: both accuracies at least 95%; contaminated: dynamic flow
/// leads by at least 10 points).
#[allow(clippy::too_many_arguments)]
pub fn cmd_toyeval(
    out_dir: &Path,
    seed: u64,
    easy: bool,
    clips_per_class: Option<usize>,
    use_tvl1: bool,
    cfg: &Config,
) -> Result<ToyOutcome> {
    let mut comparison = if easy {
        ComparisonConfig::easy(seed)
    } else {
        ComparisonConfig::contaminated(seed)
    };
    if let Some(n) = clips_per_class {
        comparison.n_clips_per_class = n;
    }
    comparison.use_true_flow = !use_tvl1;
    comparison.featurize = FeaturizeParams {
        bound: cfg.clip_bound,
        svm_c: cfg.svm_c,
        solver: cfg.solver_config(),
        tvl1: cfg.tvl1_params(),
    };

    let report = run_comparison(&comparison)?;
    ensure_dir(out_dir)?;
    io::atomic_write(&out_dir.join("report.txt"), report.text_table().as_bytes())?;
    io::atomic_write(&out_dir.join("report.tsv"), report.records().as_bytes())?;
    print!("{}", report.text_table());

    let criterion_met = if easy {
        report.accuracy_df >= 0.95 && report.accuracy_di >= 0.95
    } else {
        report.gap_points() >= 10.0
    };
    let verdict = if criterion_met { "met" } else { "NOT met" };
    if easy {
        println!("easy criterion (both >= 95%): {verdict}");
    } else {
        println!("gap criterion (DF - DI >= 10 points): {verdict}");
    }
    Ok(ToyOutcome { criterion_met })
}

/// `render <input> <out_dir>`: 8-bit renderings of `.flo` fields or raw
/// `.dynf` planes (two channels render as flow, three as RGB).
pub fn cmd_render(input: &Path, out_dir: &Path, color: bool) -> Result<()> {
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| Error::io(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("flo") || e.eq_ignore_ascii_case("dynf"))
            })
            .collect();
        paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        paths
    } else {
        vec![input.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no .flo or .dynf inputs in {}",
            input.display()
        )));
    }

    ensure_dir(out_dir)?;
    let mut outputs = OutputSet::new();
    let mut count = 0usize;
    for path in files {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("render")
            .to_string();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        let image = match ext.as_str() {
            "flo" => {
                let field = io::read_flo(&path)?;
                let fu = field.u().iter().map(|&x| f64::from(x)).collect();
                let fv = field.v().iter().map(|&x| f64::from(x)).collect();
                Some(DynamicFlowImage::new(field.width(), field.height(), fu, fv)?)
            }
            "dynf" => {
                let (w, h, planes) = io::read_planes(&path)?;
                match planes.len() {
                    2 => Some(DynamicFlowImage::new(
                        w,
                        h,
                        planes[0].clone(),
                        planes[1].clone(),
                    )?),
                    3 => {
                        let img = DynamicImage::new(
                            w,
                            h,
                            [planes[0].clone(), planes[1].clone(), planes[2].clone()],
                        )?;
                        io::save_rgb_png(
                            &render_rgb(&img),
                            outputs.record(out_dir.join(format!("{stem}.png"))),
                        )?;
                        count += 1;
                        None
                    }
                    n => {
                        return Err(Error::Format(format!(
                            "{}: expected 2 or 3 planes, got {n}",
                            path.display()
                        )))
                    }
                }
            }
            other => {
                return Err(Error::Format(format!(
                    "{}: unsupported input extension {other:?}",
                    path.display()
                )))
            }
        };
        if let Some(img) = image {
            let (u_img, v_img) = render_flow(&img);
            io::save_gray_png(&u_img, outputs.record(out_dir.join(format!("{stem}_u.png"))))?;
            io::save_gray_png(&v_img, outputs.record(out_dir.join(format!("{stem}_v.png"))))?;
            if color {
                io::save_rgb_png(
                    &render_flow_color(&img),
                    outputs.record(out_dir.join(format!("{stem}_uv.png"))),
                )?;
            }
            count += 1;
        }
    }
    outputs.keep();
    println!("rendered {count} inputs to {}", out_dir.display());
    Ok(())
}
