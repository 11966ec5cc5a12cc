use std::path::{Path, PathBuf};

use nexsplat::primitives::{render, Camera, GaussianPrimitive, RenderOutput, RenderSettings};
use nexsplat::transmittance::TransmittanceModel;
use nexsplat::Rgb;
use serde_json::json;

use super::GatherOpts;
use crate::output::{create_dir, write_gray, write_overdraw, write_rgb};
use crate::{read_json, CliResult};

#[derive(Clone, Debug)]
pub struct RenderArgs {
    pub scene: PathBuf,
    pub camera: PathBuf,
    pub model: TransmittanceModel,
    pub background: Rgb,
    pub out: PathBuf,
    pub gather: GatherOpts,
}

/// Renders a scene file through a camera file and writes
/// `render.{png,pfm}`, `overdraw.{png,pfm}` and `residual_t.{png,pfm}`, each
/// with a JSON sidecar.
pub fn render_files(args: &RenderArgs) -> CliResult<RenderOutput> {
    let scene: Vec<GaussianPrimitive> = read_json(&args.scene)?;
    let camera: Camera = read_json(&args.camera)?;
    let settings = RenderSettings {
        model: args.model,
        background: args.background,
        max_splats: args.gather.max_splats,
        alpha_cutoff: args.gather.alpha_cutoff,
    };
    let out = render(&scene, &camera, &settings);
    create_dir(&args.out)?;
    let ctx = json!({
        "command": "render",
        "scene": display(&args.scene),
        "camera": camera,
        "model": args.model,
        "model_tag": args.model.tag(),
        "background": [args.background.x, args.background.y, args.background.z],
        "max_splats": args.gather.max_splats,
        "alpha_cutoff": args.gather.alpha_cutoff,
        "primitives": scene.len(),
    });
    write_rgb(&args.out, "render", &out.rgb, &ctx)?;
    write_overdraw(&args.out, "overdraw", &out.overdraw, args.gather.max_splats as u32, &ctx)?;
    write_gray(&args.out, "residual_t", &out.residual_t, "residual_t", &ctx)?;
    Ok(out)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
