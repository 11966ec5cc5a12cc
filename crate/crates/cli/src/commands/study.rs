use std::path::PathBuf;

use nalgebra::Vector3;
use nexsplat::compositor::Accumulator;
use nexsplat::primitives::{gather_sorted, render, Ray, RenderSettings};
use nexsplat::transmittance::TransmittanceModel;
use nexsplat::Rgb;
use serde_json::json;

use super::GatherOpts;
use crate::output::{create_dir, write_csv, write_gray, write_overdraw, write_rgb};
use crate::scenes::{self, BlendVariant};
use crate::CliResult;

#[derive(Clone, Debug)]
pub struct TransmitArgs {
    pub seed: u64,
    pub models: Vec<TransmittanceModel>,
    pub out: Option<PathBuf>,
    pub size: usize,
    pub gather: GatherOpts,
}

/// One composited splat on the central ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CenterRow {
    pub index: usize,
    pub depth: f64,
    /// `τ̄_i` before the splat.
    pub tau_bar: f64,
    /// `T̄_i` before the splat.
    pub t_bar: f64,
    /// Continuous `T(τ̄_i)`.
    pub t_continuous: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelStudy {
    pub model: TransmittanceModel,
    pub total_overdraw: u64,
    pub mean_coverage: f64,
    pub center: Vec<CenterRow>,
}

/// Renders the 100-splat study scene under every model.
///
/// Writes, per model, `1 - T̄_{N+1}` and overdraw images plus the central
/// ray's `(τ̄_i, T̄_i, T(τ̄_i))` table, and a `summary.csv` across models.
pub fn transmit_study(args: &TransmitArgs) -> CliResult<Vec<ModelStudy>> {
    let scene = scenes::transmit_scene(args.seed);
    let camera = scenes::study_camera(args.size);
    let axis = Ray::new(Vector3::zeros(), Vector3::z());
    let center_samples = gather_sorted(&scene, &axis, args.gather.max_splats, args.gather.alpha_cutoff);
    if let Some(dir) = &args.out {
        create_dir(dir)?;
    }
    let mut studies = Vec::new();
    for model in &args.models {
        let settings = RenderSettings {
            model: *model,
            background: Rgb::zeros(),
            max_splats: args.gather.max_splats,
            alpha_cutoff: args.gather.alpha_cutoff,
        };
        let out = render(&scene, &camera, &settings);
        let mut acc = Accumulator::new(*model);
        let mut center = Vec::new();
        for (index, s) in center_samples.iter().enumerate() {
            if acc.is_saturated() {
                break;
            }
            let c = acc.push(s);
            center.push(CenterRow {
                index,
                depth: s.depth,
                tau_bar: c.tau_bar,
                t_bar: c.t_bar,
                t_continuous: model.transmittance(c.tau_bar),
                weight: c.weight,
            });
        }
        let coverage = out.coverage();
        let study = ModelStudy {
            model: *model,
            total_overdraw: out.overdraw.total(),
            mean_coverage: coverage.pixels.iter().sum::<f64>() / coverage.pixels.len() as f64,
            center,
        };
        if let Some(dir) = &args.out {
            let tag = model.tag();
            let ctx = json!({
                "command": "transmit-study",
                "model": model,
                "model_tag": tag,
                "seed": args.seed,
                "size": args.size,
                "max_splats": args.gather.max_splats,
                "alpha_cutoff": args.gather.alpha_cutoff,
                "opacity": scenes::STUDY_OPACITY,
                "splats": scenes::STUDY_SPLATS,
            });
            write_gray(dir, &format!("{tag}_coverage"), &coverage, "one_minus_residual_t", &ctx)?;
            write_overdraw(dir, &format!("{tag}_overdraw"), &out.overdraw, args.gather.max_splats as u32, &ctx)?;
            let rows: Vec<Vec<String>> = study
                .center
                .iter()
                .map(|r| {
                    vec![
                        r.index.to_string(),
                        format!("{:.9}", r.depth),
                        format!("{:.12}", r.tau_bar),
                        format!("{:.12}", r.t_bar),
                        format!("{:.12}", r.t_continuous),
                        format!("{:.12}", r.weight),
                    ]
                })
                .collect();
            write_csv(
                &dir.join(format!("{tag}_center.csv")),
                &["index", "depth", "tau_bar", "t_bar", "t_continuous", "weight"],
                &rows,
            )?;
        }
        studies.push(study);
    }
    if let Some(dir) = &args.out {
        let rows: Vec<Vec<String>> = studies
            .iter()
            .map(|s| {
                vec![
                    s.model.tag(),
                    s.total_overdraw.to_string(),
                    format!("{:.6}", s.total_overdraw as f64 / (args.size * args.size) as f64),
                    format!("{:.6}", s.mean_coverage),
                    s.center.len().to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("summary.csv"),
            &["model", "total_overdraw", "mean_overdraw", "mean_coverage", "center_overdraw"],
            &rows,
        )?;
    }
    Ok(studies)
}

#[derive(Clone, Debug)]
pub struct BlendArgs {
    pub variant: BlendVariant,
    pub models: Vec<TransmittanceModel>,
    pub out: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub gather: GatherOpts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlendResult {
    pub model: TransmittanceModel,
    /// Central scan line: radiance and `T̄_{N+1}` per column.
    pub scanline: Vec<(Rgb, f64)>,
    pub center: Rgb,
}

/// Renders the three-splat red/green/blue scene under every model.
pub fn blend_study(args: &BlendArgs) -> CliResult<Vec<BlendResult>> {
    let scene = scenes::blend_scene(args.variant);
    let camera = scenes::axis_camera(args.width, args.height, 40.0);
    if let Some(dir) = &args.out {
        create_dir(dir)?;
    }
    let row = args.height / 2;
    let mut results = Vec::new();
    for model in &args.models {
        let settings = RenderSettings {
            model: *model,
            background: Rgb::zeros(),
            max_splats: args.gather.max_splats,
            alpha_cutoff: args.gather.alpha_cutoff,
        };
        let out = render(&scene, &camera, &settings);
        let scanline: Vec<(Rgb, f64)> = (0..args.width)
            .map(|x| (*out.rgb.get(x, row), *out.residual_t.get(x, row)))
            .collect();
        if let Some(dir) = &args.out {
            let tag = model.tag();
            let name = args.variant.name();
            let ctx = json!({
                "command": "blend-study",
                "variant": name,
                "model": model,
                "model_tag": tag,
                "width": args.width,
                "height": args.height,
                "max_splats": args.gather.max_splats,
                "alpha_cutoff": args.gather.alpha_cutoff,
            });
            write_rgb(dir, &format!("{name}_{tag}_rgb"), &out.rgb, &ctx)?;
            write_gray(dir, &format!("{name}_{tag}_coverage"), &out.coverage(), "one_minus_residual_t", &ctx)?;
            let rows: Vec<Vec<String>> = scanline
                .iter()
                .enumerate()
                .map(|(x, (c, t))| {
                    vec![
                        x.to_string(),
                        format!("{:.9}", c.x),
                        format!("{:.9}", c.y),
                        format!("{:.9}", c.z),
                        format!("{:.9}", t),
                    ]
                })
                .collect();
            write_csv(
                &dir.join(format!("{name}_{tag}_scanline.csv")),
                &["x", "r", "g", "b", "residual_t"],
                &rows,
            )?;
        }
        results.push(BlendResult {
            model: *model,
            center: scanline[args.width / 2].0,
            scanline,
        });
    }
    Ok(results)
}
