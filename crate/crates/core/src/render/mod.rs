//! Gaussian splat projection and temperature compositing.

mod composite;
mod project;

pub use composite::{composite, composite_backward, CompositeConfig, CompositeGrads, RenderOutput, RenderTape};
pub use project::{conic_from_cov, cov_backward, is_sorted, project_gaussians, sort_splats, ProjectConfig, Projection, Splat2D};

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::math::{Quat, Vec3};
use crate::scene::{Camera, GaussianPrimitive};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub project: ProjectConfig,
    pub composite: CompositeConfig,
}

/// A full view render together with the projection it used.
#[derive(Debug, Clone)]
pub struct View {
    pub projection: Projection,
    pub output: RenderOutput,
}

/// Projects and composites `gaussians` with per-gaussian temperatures
/// (kelvin) as seen from `camera`.
pub fn render(
    gaussians: &[GaussianPrimitive],
    temps: &[f64],
    camera: &Camera,
    background: f64,
    cfg: &RenderConfig,
) -> Result<View> {
    check_len("render temperatures", gaussians.len(), temps.len())?;
    let projection = project_gaussians(gaussians, camera, &cfg.project);
    let opacities: Vec<f64> = gaussians.iter().map(|g| g.opacity).collect();
    let output = composite(
        &projection.splats,
        temps,
        &opacities,
        background,
        camera.width,
        camera.height,
        &cfg.composite,
    )?;
    Ok(View { projection, output })
}

/// Per-gaussian gradients of a scalar loss through a [`View`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGrads {
    pub temp: Vec<f64>,
    pub opacity: Vec<f64>,
    pub rot: Vec<Quat>,
    pub scale: Vec<Vec3>,
}

/// Reverse pass of [`render`]. Geometry gradients cover rotation and scale;
/// centers are held fixed.
pub fn render_backward(
    gaussians: &[GaussianPrimitive],
    view: &View,
    d_image: &[f64],
) -> Result<ViewGrads> {
    let splats = &view.projection.splats;
    let cg = composite_backward(&view.output.tape, splats, d_image)?;
    let n = gaussians.len();
    let mut rot = vec![[0.0; 4]; n];
    let mut scale = vec![[0.0; 3]; n];
    for (s, d_cov) in splats.iter().zip(&cg.cov) {
        if d_cov.iter().all(|v| *v == 0.0) {
            continue;
        }
        let g = &gaussians[s.index];
        let (dq, ds) = cov_backward(s, &g.rot, &g.scale, d_cov);
        rot[s.index] = dq;
        scale[s.index] = ds;
    }
    Ok(ViewGrads {
        temp: cg.temp,
        opacity: cg.opacity,
        rot,
        scale,
    })
}
