use std::path::{Path, PathBuf};

use nexsplat::image::Image;
use nexsplat::optimizer::{train, TrainConfig, TrainReport, View};
use nexsplat::primitives::{render, Camera, GaussianPrimitive, RenderSettings};
use nexsplat::Rgb;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{create_dir, pretty, write_rgb, write_text};
use crate::{read_json, CliError, CliResult};

/// Entry of a views file. `image` is a PFM or PNG path, relative to the
/// views file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViewSpec {
    pub camera: Camera,
    pub image: PathBuf,
}

#[derive(Clone, Debug)]
pub struct FitArgs {
    pub init: PathBuf,
    pub views: PathBuf,
    pub config: TrainConfig,
    pub out: PathBuf,
}

#[derive(Clone, Debug)]
pub struct FitOutput {
    pub scene: Vec<GaussianPrimitive>,
    pub report: TrainReport,
}

fn load_image(path: &Path) -> CliResult<Image<Rgb>> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let img = match ext.as_deref() {
        Some("pfm") => Image::read_pfm(path),
        Some("png") => Image::read_png(path),
        _ => {
            return Err(CliError::Usage(format!(
                "{}: target images must be .pfm or .png",
                path.display()
            )))
        }
    };
    img.map_err(|e| match e {
        nexsplat::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

/// Loads the initial scene and target views, trains, and writes
/// `scene.json`, `report.csv`, `metrics.json`, `config.json` and a final
/// render per view.
pub fn fit(args: &FitArgs) -> CliResult<FitOutput> {
    args.config.validate()?;
    let init: Vec<GaussianPrimitive> = read_json(&args.init)?;
    let specs: Vec<ViewSpec> = read_json(&args.views)?;
    let base = args.views.parent().unwrap_or(Path::new("."));
    let views = specs
        .iter()
        .map(|s| {
            Ok(View {
                camera: s.camera.clone(),
                target: load_image(&base.join(&s.image))?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let (scene, report) = train(init, &views, &args.config)?;

    create_dir(&args.out)?;
    write_text(&args.out.join("scene.json"), &pretty(&serde_json::to_value(&scene).expect("scene serializes")))?;
    write_text(&args.out.join("config.json"), &pretty(&serde_json::to_value(&args.config).expect("config serializes")))?;
    report.write_csv(args.out.join("report.csv"))?;
    report.write_metrics_json(args.out.join("metrics.json"))?;
    let settings = RenderSettings {
        model: args.config.model,
        background: args.config.background,
        max_splats: args.config.max_splats,
        alpha_cutoff: args.config.alpha_cutoff,
    };
    for (i, v) in views.iter().enumerate() {
        let ctx = json!({
            "command": "fit",
            "view": i,
            "model": args.config.model,
            "model_tag": args.config.model.tag(),
            "config": args.config,
            "iterations": report.iterations(),
        });
        write_rgb(&args.out, &format!("view_{i}"), &render(&scene, &v.camera, &settings).rgb, &ctx)?;
    }
    Ok(FitOutput { scene, report })
}
