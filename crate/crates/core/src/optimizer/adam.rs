use crate::primitives::{GaussianPrimitive, PrimitiveGrad};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments over a flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: Vec<u32>,
    /// Parameters skipped because their gradient was not finite.
    pub nan_skips: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: vec![0; n],
            nan_skips: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One update with a per-parameter learning rate. Bias correction uses a
    /// per-parameter step count so that state carried across a resize stays
    /// consistent.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: &[f64]) {
        assert_eq!(params.len(), self.len());
        assert_eq!(grads.len(), self.len());
        assert_eq!(lr.len(), self.len());
        for i in 0..params.len() {
            let g = grads[i];
            if !g.is_finite() {
                self.nan_skips += 1;
                continue;
            }
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = self.m[i] / (1.0 - ADAM_BETA1.powi(t));
            let v_hat = self.v[i] / (1.0 - ADAM_BETA2.powi(t));
            params[i] -= lr[i] * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }

    /// Rebuilds the state after primitives were split or removed. `origin[i]`
    /// names the old primitive whose moments new primitive `i` inherits.
    pub fn remap(&mut self, origin: &[usize], stride: usize) {
        let pick = |src: &[f64]| {
            origin
                .iter()
                .flat_map(|&o| src[o * stride..(o + 1) * stride].iter().copied())
                .collect::<Vec<_>>()
        };
        let steps = origin
            .iter()
            .flat_map(|&o| self.steps[o * stride..(o + 1) * stride].iter().copied())
            .collect();
        self.m = pick(&self.m);
        self.v = pick(&self.v);
        self.steps = steps;
    }
}

/// Flat parameter layout of one primitive, matching [`PrimitiveGrad::to_array`].
pub fn flatten(g: &GaussianPrimitive) -> [f64; PrimitiveGrad::LEN] {
    let mut out = [0.0; PrimitiveGrad::LEN];
    out[0..3].copy_from_slice(g.center.as_slice());
    out[3..6].copy_from_slice(g.scale.as_slice());
    out[6..10].copy_from_slice(&g.rotation);
    out[10] = g.opacity;
    for (l, coef) in g.sh.iter().enumerate() {
        out[11 + 3 * l..14 + 3 * l].copy_from_slice(coef.as_slice());
    }
    out
}

/// Writes `p` back into `g` and projects onto the parameter bounds. SH
/// bands absent from `g` are left absent.
pub fn unflatten(g: &mut GaussianPrimitive, p: &[f64]) {
    g.center = nalgebra::Vector3::new(p[0], p[1], p[2]);
    g.scale = nalgebra::Vector3::new(p[3], p[4], p[5]);
    g.rotation = [p[6], p[7], p[8], p[9]];
    g.opacity = p[10];
    for (l, coef) in g.sh.iter_mut().enumerate() {
        *coef = crate::Rgb::new(p[11 + 3 * l], p[12 + 3 * l], p[13 + 3 * l]);
    }
    g.project_to_bounds();
}

/// Adam step over a whole scene followed by projection: opacity into
/// `[1e-4, 1 - 1e-6]`, scales at least `1e-6`, unit quaternions.
pub fn bounded_adam_step(
    scene: &mut [GaussianPrimitive],
    grads: &[PrimitiveGrad],
    adam: &mut Adam,
    group_lr: &[f64; PrimitiveGrad::LEN],
) {
    assert_eq!(scene.len(), grads.len());
    let stride = PrimitiveGrad::LEN;
    let mut params: Vec<f64> = scene.iter().flat_map(flatten).collect();
    let flat_grads: Vec<f64> = grads.iter().flat_map(|g| g.to_array()).collect();
    let lr: Vec<f64> = (0..params.len()).map(|i| group_lr[i % stride]).collect();
    adam.step(&mut params, &flat_grads, &lr);
    for (g, p) in scene.iter_mut().zip(params.chunks(stride)) {
        unflatten(g, p);
    }
}
