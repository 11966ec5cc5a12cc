use crate::primitives::GaussianPrimitive;

/// Running sum of positional-gradient norms for one primitive.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradStat {
    pub sum: f64,
    pub count: u32,
}

impl GradStat {
    pub fn add(&mut self, norm: f64) {
        self.sum += norm;
        self.count += 1;
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Splits primitives whose mean positional gradient exceeds `threshold`,
/// in scene order, while the scene stays within `max_primitives`.
///
/// Returns the new scene and, for every new primitive, the index it came
/// from.
pub fn split(
    scene: &[GaussianPrimitive],
    stats: &[GradStat],
    threshold: f64,
    max_primitives: usize,
) -> (Vec<GaussianPrimitive>, Vec<usize>) {
    let mut out = Vec::with_capacity(scene.len());
    let mut origin = Vec::with_capacity(scene.len());
    let mut budget = max_primitives.saturating_sub(scene.len());
    for (i, g) in scene.iter().enumerate() {
        let hot = stats.get(i).is_some_and(|s| s.mean() > threshold);
        if hot && budget > 0 {
            budget -= 1;
            let [a, b] = split_one(g);
            out.extend([a, b]);
            origin.extend([i, i]);
        } else {
            out.push(g.clone());
            origin.push(i);
        }
    }
    (out, origin)
}

/// Two children along the longest axis: that axis' scale halved and the
/// centers moved half the original scale either way.
pub fn split_one(g: &GaussianPrimitive) -> [GaussianPrimitive; 2] {
    let axis = g.scale.imax();
    let offset = g.rotation_matrix().column(axis) * (0.5 * g.scale[axis]);
    let mut child = g.clone();
    child.scale[axis] *= 0.5;
    let mut a = child.clone();
    let mut b = child;
    a.center += offset;
    b.center -= offset;
    [a, b]
}

/// Removes primitives with opacity below `min_opacity` or maximum scale below
/// `min_scale`. Returns the survivors and their original indices.
pub fn prune(
    scene: &[GaussianPrimitive],
    min_opacity: f64,
    min_scale: f64,
) -> (Vec<GaussianPrimitive>, Vec<usize>) {
    scene
        .iter()
        .enumerate()
        .filter(|(_, g)| g.opacity >= min_opacity && g.max_scale() >= min_scale)
        .map(|(i, g)| (g.clone(), i))
        .unzip()
}
