use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{bounded_adam_step, Adam};
use super::densify::{prune, split, GradStat};
use super::loss::{display_metrics, srgb_loss, Metrics};
use crate::adjoint;
use crate::image::Image;
use crate::primitives::{
    render, render_traced, sh_basis, Camera, GaussianPrimitive, PixelTrace, PrimitiveGrad,
    RenderSettings,
};
use crate::transmittance::TransmittanceModel;
use crate::{Error, Result, Rgb, DEFAULT_ALPHA_CUTOFF, DEFAULT_MAX_SPLATS};

/// Pixel rows are reduced in this many fixed partitions, in order, so that
/// gradients do not depend on the thread count.
const REDUCTION_PARTS: usize = 8;

/// Base learning rate per parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub center: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub sh: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            center: 2e-3,
            scale: 1e-3,
            rotation: 4e-3,
            opacity: 1e-2,
            sh: 5e-3,
        }
    }
}

impl LearningRates {
    fn per_parameter(&self, factor: f64) -> [f64; PrimitiveGrad::LEN] {
        let mut lr = [self.sh * factor; PrimitiveGrad::LEN];
        lr[0..3].fill(self.center * factor);
        lr[3..6].fill(self.scale * factor);
        lr[6..10].fill(self.rotation * factor);
        lr[10] = self.opacity * factor;
        lr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: TransmittanceModel,
    pub lambda_ssim: f64,
    pub learning_rates: LearningRates,
    /// Learning-rate multiplier reached at `max_iterations`, decaying
    /// exponentially from 1.
    pub lr_final_factor: f64,
    pub max_iterations: usize,
    pub time_budget_s: Option<f64>,
    pub densify_interval: usize,
    pub densify_until: usize,
    pub densify_grad_threshold: f64,
    pub prune_interval: usize,
    pub prune_opacity: f64,
    pub prune_scale: f64,
    pub max_primitives: usize,
    /// `(first iteration, resolution divisor)` pairs.
    pub resolution_schedule: Vec<(usize, usize)>,
    pub background: Rgb,
    pub max_splats: usize,
    pub alpha_cutoff: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: TransmittanceModel::Exponential,
            lambda_ssim: 0.2,
            learning_rates: LearningRates::default(),
            lr_final_factor: 0.1,
            max_iterations: 2000,
            time_budget_s: None,
            densify_interval: 100,
            densify_until: 3000,
            densify_grad_threshold: 5e-6,
            prune_interval: 200,
            prune_opacity: 0.008,
            prune_scale: 1e-4,
            max_primitives: 10_000,
            resolution_schedule: vec![(0, 4), (64, 2), (200, 1)],
            background: Rgb::zeros(),
            max_splats: DEFAULT_MAX_SPLATS,
            alpha_cutoff: DEFAULT_ALPHA_CUTOFF,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return bad(format!("lambda_ssim {} outside [0, 1]", self.lambda_ssim));
        }
        let lr = &self.learning_rates;
        if [lr.center, lr.scale, lr.rotation, lr.opacity, lr.sh]
            .iter()
            .any(|&r| !(r > 0.0 && r.is_finite()))
        {
            return bad("learning rates must be positive".into());
        }
        if !(self.lr_final_factor > 0.0) {
            return bad("lr_final_factor must be positive".into());
        }
        if self.densify_interval == 0 || self.prune_interval == 0 {
            return bad("densify/prune intervals must be positive".into());
        }
        if self.resolution_schedule.iter().any(|&(_, d)| d == 0) {
            return bad("resolution divisors must be positive".into());
        }
        if let Some(b) = self.time_budget_s {
            if !(b >= 0.0) {
                return bad(format!("time_budget_s {b} must be non-negative"));
            }
        }
        Ok(())
    }

    fn settings(&self) -> RenderSettings {
        RenderSettings {
            model: self.model,
            background: self.background,
            max_splats: self.max_splats,
            alpha_cutoff: self.alpha_cutoff,
        }
    }

    fn divisor(&self, iteration: usize) -> usize {
        self.resolution_schedule
            .iter()
            .filter(|&&(start, _)| start <= iteration)
            .max_by_key(|&&(start, _)| start)
            .map_or(1, |&(_, d)| d)
    }

    fn lr_factor(&self, iteration: usize) -> f64 {
        let t = iteration as f64 / self.max_iterations.max(1) as f64;
        self.lr_final_factor.powf(t)
    }
}

/// A training view: camera and linear-radiance target at full resolution.
#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    pub target: Image<Rgb>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub wallclock_s: f64,
    pub loss: f64,
    pub psnr: f64,
    pub n_primitives: usize,
    pub overdraw: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub records: Vec<IterationRecord>,
    /// Full-resolution metrics per view after training.
    pub final_metrics: Vec<Metrics>,
    pub stopped_by_budget: bool,
    pub nan_skips: u64,
}

impl TrainReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "iteration,wallclock_s,loss,psnr,n_primitives,overdraw")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:.6},{:.9},{:.6},{},{}",
                r.iteration, r.wallclock_s, r.loss, r.psnr, r.n_primitives, r.overdraw
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_metrics_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::json!({
            "iterations": self.iterations(),
            "stopped_by_budget": self.stopped_by_budget,
            "nan_skips": self.nan_skips,
            "views": self.final_metrics.iter().map(|m| serde_json::json!({
                "psnr": finite_or_null(m.psnr),
                "mse": m.mse,
                "ssim": m.ssim,
            })).collect::<Vec<_>>(),
        });
        std::fs::write(path, serde_json::to_string_pretty(&json)?)?;
        Ok(())
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        v.into()
    } else {
        serde_json::Value::Null
    }
}

/// Fits `scene` to the views.
pub fn train(
    scene: Vec<GaussianPrimitive>,
    views: &[View],
    config: &TrainConfig,
) -> Result<(Vec<GaussianPrimitive>, TrainReport)> {
    config.validate()?;
    if views.is_empty() {
        return Err(Error::Config("training needs at least one view".into()));
    }
    if !config.model.has_analytic_adjoint() {
        return Err(Error::UnsupportedModel(config.model.to_string()));
    }
    for v in views {
        if v.target.width != v.camera.width() || v.target.height != v.camera.height() {
            return Err(Error::DimensionMismatch(
                v.camera.width(),
                v.camera.height(),
                v.target.width,
                v.target.height,
            ));
        }
    }
    let settings = config.settings();
    let start = Instant::now();
    let mut scene = scene;
    let mut adam = Adam::new(scene.len() * PrimitiveGrad::LEN);
    let mut stats = vec![GradStat::default(); scene.len()];
    let mut records = Vec::new();
    let mut stopped_by_budget = false;
    let mut targets: Vec<(usize, Vec<Image<Rgb>>)> = Vec::new();

    for iteration in 0..config.max_iterations {
        if let Some(budget) = config.time_budget_s {
            if start.elapsed().as_secs_f64() >= budget {
                stopped_by_budget = true;
                break;
            }
        }
        let divisor = config.divisor(iteration);
        if targets.last().map(|t| t.0) != Some(divisor) {
            targets.push((divisor, views.iter().map(|v| v.target.downsample(divisor)).collect()));
        }
        let view_index = iteration % views.len();
        let target = &targets.last().unwrap().1[view_index];
        let camera = views[view_index].camera.scaled(divisor);

        let (out, traces) = render_traced(&scene, &camera, &settings);
        let loss = srgb_loss(&out.rgb, target, config.lambda_ssim)?;
        let (grads, visible) = scene_gradients(&scene, &camera, &traces, &loss.grad)?;
        for ((s, g), seen) in stats.iter_mut().zip(&grads).zip(&visible) {
            if *seen {
                s.add(g.center.norm());
            }
        }
        let lr = config.learning_rates.per_parameter(config.lr_factor(iteration));
        bounded_adam_step(&mut scene, &grads, &mut adam, &lr);

        let step = iteration + 1;
        if step % config.densify_interval == 0 && step <= config.densify_until {
            let (next, origin) = split(
                &scene,
                &stats,
                config.densify_grad_threshold,
                config.max_primitives,
            );
            adam.remap(&origin, PrimitiveGrad::LEN);
            scene = next;
            stats = vec![GradStat::default(); scene.len()];
        }
        if step % config.prune_interval == 0 {
            let (next, kept) = prune(&scene, config.prune_opacity, config.prune_scale);
            adam.remap(&kept, PrimitiveGrad::LEN);
            stats = kept.iter().map(|&i| stats[i]).collect();
            scene = next;
        }

        let psnr = display_metrics(&out.rgb, target)?.psnr;
        records.push(IterationRecord {
            iteration,
            wallclock_s: start.elapsed().as_secs_f64(),
            loss: loss.value,
            psnr,
            n_primitives: scene.len(),
            overdraw: out.overdraw.total(),
        });
    }

    let final_metrics = views
        .iter()
        .map(|v| display_metrics(&render(&scene, &v.camera, &settings).rgb, &v.target))
        .collect::<Result<_>>()?;
    Ok((
        scene,
        TrainReport {
            records,
            final_metrics,
            stopped_by_budget,
            nan_skips: adam.nan_skips,
        },
    ))
}

/// Gradient of the loss with respect to every primitive, given the loss
/// gradient per rendered pixel. Also reports which primitives were hit.
pub fn scene_gradients(
    scene: &[GaussianPrimitive],
    camera: &Camera,
    traces: &Image<PixelTrace>,
    pixel_grad: &Image<Rgb>,
) -> Result<(Vec<PrimitiveGrad>, Vec<bool>)> {
    traces.same_size(pixel_grad)?;
    let (w, h) = (traces.width, traces.height);
    let rows_per_part = h.div_ceil(REDUCTION_PARTS).max(1);
    let parts: Vec<(Vec<PrimitiveGrad>, Vec<bool>)> = (0..REDUCTION_PARTS)
        .into_par_iter()
        .map(|part| {
            let mut grads = vec![PrimitiveGrad::default(); scene.len()];
            let mut visible = vec![false; scene.len()];
            let rows = (part * rows_per_part).min(h)..((part + 1) * rows_per_part).min(h);
            for y in rows {
                for x in 0..w {
                    let trace = traces.get(x, y);
                    let seed = *pixel_grad.get(x, y);
                    if trace.splats.is_empty() || seed == Rgb::zeros() {
                        continue;
                    }
                    let sg = adjoint::backward(&trace.samples(), &trace.result, seed)?;
                    let ray = camera.ray(x, y);
                    let basis = sh_basis(&ray.dir);
                    for (i, ts) in trace.splats.iter().enumerate() {
                        let prim = &scene[ts.id];
                        let g = &mut grads[ts.id];
                        visible[ts.id] = true;
                        if sg.d_alpha[i] != 0.0 {
                            let peak = prim.peak_along_ray(&ray);
                            g.add_scaled(&prim.alpha_gradient(&ray, &peak), sg.d_alpha[i]);
                        }
                        for (l, b) in basis.iter().enumerate().take(prim.sh.len()) {
                            for c in 0..3 {
                                if ts.active[c] {
                                    g.sh[l][c] += b * sg.d_emission[i][c];
                                }
                            }
                        }
                    }
                }
            }
            Ok((grads, visible))
        })
        .collect::<Result<_>>()?;
    let mut grads = vec![PrimitiveGrad::default(); scene.len()];
    let mut visible = vec![false; scene.len()];
    for (pg, pv) in &parts {
        for (g, p) in grads.iter_mut().zip(pg) {
            g.add_scaled(p, 1.0);
        }
        for (v, p) in visible.iter_mut().zip(pv) {
            *v |= p;
        }
    }
    Ok((grads, visible))
}
