//! Lissajous trajectories, rigid motions, multi-patch scan plans and the
//! change-of-frame formulas for phase-space samples.
//!
//! Three frames are involved besides the room: the scanner, the field of view
//! (FoV) in which the Lissajous curve `r(t)` is defined, and the specimen
//! region `Omega`. A [`RigidMotion`] `(b, alpha)` maps room coordinates `x` to
//! frame coordinates `b + Q_alpha x`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Mat2, Rect, Vec2};

/// Counter-clockwise rotation by `angle`.
pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Time derivative of `rotation(alpha(t))` given `alpha` and `alpha'`.
pub fn rotation_rate(angle: f64, angle_rate: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    angle_rate * Mat2::new(-s, -c, c, -s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LissajousParams {
    pub amplitude: Vec2,
    pub frequency: [u32; 2],
    pub phase: Vec2,
    pub samples_per_period: usize,
}

impl Default for LissajousParams {
    /// 16:17 frequency ratio, both phases pi/2, 1632 samples per period. With
    /// 1632 = 16 * 102 = 17 * 96 the curve closes exactly after one period.
    fn default() -> Self {
        LissajousParams {
            amplitude: Vec2::new(1.0, 1.0),
            frequency: [16, 17],
            phase: Vec2::new(PI / 2.0, PI / 2.0),
            samples_per_period: 1632,
        }
    }
}

impl LissajousParams {
    pub fn with_amplitude(mut self, ax: f64, ay: f64) -> Self {
        self.amplitude = Vec2::new(ax, ay);
        self
    }

    pub fn with_samples(mut self, samples_per_period: usize) -> Self {
        self.samples_per_period = samples_per_period;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.amplitude;
        if !(a.x > 0.0 && a.y > 0.0 && a.x.is_finite() && a.y.is_finite()) {
            return Err(Error::InvalidParameter(format!("amplitudes must be positive, got {a:?}")));
        }
        let [mx, my] = self.frequency;
        if mx == 0 || my == 0 || mx == my {
            return Err(Error::InvalidParameter(format!(
                "frequencies must be distinct positive integers, got ({mx}, {my})"
            )));
        }
        if self.samples_per_period < 2 {
            return Err(Error::InvalidParameter("need at least 2 samples per period".into()));
        }
        if !(self.phase.x.is_finite() && self.phase.y.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        Ok(())
    }
}

/// Position and exact velocity of the Lissajous curve at time `t`, with one
/// period lasting one time unit.
pub fn lissajous(params: &LissajousParams, t: f64) -> (Vec2, Vec2) {
    let mut pos = Vec2::zeros();
    let mut vel = Vec2::zeros();
    for c in 0..2 {
        let w = TAU * params.frequency[c] as f64;
        let (s, co) = (w * t + params.phase[c]).sin_cos();
        pos[c] = params.amplitude[c] * s;
        vel[c] = params.amplitude[c] * w * co;
    }
    (pos, vel)
}

/// A rigid pose together with its instantaneous rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidMotion {
    pub offset: Vec2,
    pub angle: f64,
    #[serde(default = "Vec2::zeros")]
    pub offset_rate: Vec2,
    #[serde(default)]
    pub angle_rate: f64,
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self::fixed(Vec2::zeros(), 0.0)
    }

    pub fn fixed(offset: Vec2, angle: f64) -> Self {
        RigidMotion { offset, angle, offset_rate: Vec2::zeros(), angle_rate: 0.0 }
    }

    pub fn rotation(&self) -> Mat2 {
        rotation(self.angle)
    }

    pub fn rotation_rate(&self) -> Mat2 {
        rotation_rate(self.angle, self.angle_rate)
    }

    /// Maps room coordinates into this frame.
    pub fn apply(&self, x: &Vec2) -> Vec2 {
        self.offset + self.rotation() * x
    }
}

/// Offset and angle of one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub offset: Vec2,
    pub angle: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, angle: f64) -> Self {
        Pose { offset: Vec2::new(x, y), angle }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionLaw {
    /// Fixed pose while scanning each patch; a C1 smoothstep carries the pose
    /// from one patch to the next during the move interval.
    ConstantPerPatch { patches: Vec<Pose> },
    /// Affine motion from `start` to `end` over `periods` whole periods,
    /// acquiring throughout.
    LinearSweep { start: Pose, end: Pose, periods: usize },
}

/// Base trajectory plus the law moving it across the domain. Times are in
/// units of one Lissajous period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub base: LissajousParams,
    /// Time between the end of one patch and the start of the next. No
    /// samples are taken while moving.
    pub move_time: f64,
    pub motion: MotionLaw,
}

impl ScanPlan {
    pub fn from_patches(base: LissajousParams, patches: Vec<Pose>) -> Result<Self> {
        let plan = ScanPlan { base, move_time: 0.0, motion: MotionLaw::ConstantPerPatch { patches } };
        plan.validate()?;
        Ok(plan)
    }

    pub fn linear_sweep(base: LissajousParams, start: Pose, end: Pose, periods: usize) -> Result<Self> {
        let plan = ScanPlan { base, move_time: 0.0, motion: MotionLaw::LinearSweep { start, end, periods } };
        plan.validate()?;
        Ok(plan)
    }

    pub fn with_move_time(mut self, move_time: f64) -> Result<Self> {
        self.move_time = move_time;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.move_time >= 0.0 && self.move_time.is_finite()) {
            return Err(Error::InvalidParameter(format!("move time {} must be >= 0", self.move_time)));
        }
        if let MotionLaw::LinearSweep { periods: 0, .. } = self.motion {
            return Err(Error::InvalidParameter("a sweep needs at least one period".into()));
        }
        Ok(())
    }

    /// Number of patches, or of periods for a sweep.
    pub fn patch_count(&self) -> usize {
        match &self.motion {
            MotionLaw::ConstantPerPatch { patches } => patches.len(),
            MotionLaw::LinearSweep { periods, .. } => *periods,
        }
    }

    pub fn patches(&self) -> Option<&[Pose]> {
        match &self.motion {
            MotionLaw::ConstantPerPatch { patches } => Some(patches),
            MotionLaw::LinearSweep { .. } => None,
        }
    }

    pub fn total_time(&self) -> f64 {
        match &self.motion {
            MotionLaw::ConstantPerPatch { patches } => {
                let n = patches.len() as f64;
                if n == 0.0 {
                    0.0
                } else {
                    n + (n - 1.0) * self.move_time
                }
            }
            MotionLaw::LinearSweep { periods, .. } => *periods as f64,
        }
    }

    /// Pose and rates of the FoV at time `t`.
    pub fn motion_at(&self, t: f64) -> Result<RigidMotion> {
        let total = self.total_time();
        if !(0.0..=total).contains(&t) || self.patch_count() == 0 {
            return Err(Error::TimeOutOfRange { t, total });
        }
        match &self.motion {
            MotionLaw::ConstantPerPatch { patches } => {
                let slot = 1.0 + self.move_time;
                let xi = ((t / slot).floor() as usize).min(patches.len() - 1);
                let local = t - xi as f64 * slot;
                let p = patches[xi];
                if local <= 1.0 || xi + 1 == patches.len() {
                    return Ok(RigidMotion::fixed(p.offset, p.angle));
                }
                let q = patches[xi + 1];
                let u = ((local - 1.0) / self.move_time).clamp(0.0, 1.0);
                let w = u * u * (3.0 - 2.0 * u);
                let dw = 6.0 * u * (1.0 - u) / self.move_time;
                Ok(RigidMotion {
                    offset: p.offset + w * (q.offset - p.offset),
                    angle: p.angle + w * (q.angle - p.angle),
                    offset_rate: dw * (q.offset - p.offset),
                    angle_rate: dw * (q.angle - p.angle),
                })
            }
            MotionLaw::LinearSweep { start, end, .. } => {
                let s = t / total;
                Ok(RigidMotion {
                    offset: start.offset + s * (end.offset - start.offset),
                    angle: start.angle + s * (end.angle - start.angle),
                    offset_rate: (end.offset - start.offset) / total,
                    angle_rate: (end.angle - start.angle) / total,
                })
            }
        }
    }

    /// Acquisition times with their patch index, in scan order.
    pub fn sample_times(&self) -> Vec<(f64, usize)> {
        let l = self.base.samples_per_period;
        let slot = match self.motion {
            MotionLaw::ConstantPerPatch { .. } => 1.0 + self.move_time,
            MotionLaw::LinearSweep { .. } => 1.0,
        };
        let mut out = Vec::with_capacity(self.patch_count() * l);
        for xi in 0..self.patch_count() {
            for k in 1..=l {
                out.push((xi as f64 * slot + k as f64 / l as f64, xi));
            }
        }
        out
    }

    /// Sampled trajectory points whose position lies in `domain`.
    pub fn acquisition(&self, domain: &Rect) -> Result<Vec<TrajectoryPoint>> {
        let mut out = Vec::new();
        for (t, patch) in self.sample_times() {
            let (position, velocity) = generalized_trajectory(self, t)?;
            if domain.contains(&position) {
                out.push(TrajectoryPoint { t, patch, position, velocity });
            }
        }
        Ok(out)
    }
}

/// `Lambda(t) = b(t) + Q(t) r(t)` and its exact time derivative.
pub fn generalized_trajectory(plan: &ScanPlan, t: f64) -> Result<(Vec2, Vec2)> {
    let m = plan.motion_at(t)?;
    let (r, v) = lissajous(&plan.base, t);
    let q = m.rotation();
    Ok((m.offset + q * r, m.offset_rate + m.rotation_rate() * r + q * v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub patch: usize,
    pub position: Vec2,
    pub velocity: Vec2,
}

/// One phase-space triplet with its acquisition time and patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub t: f64,
    pub patch: usize,
    pub signal: Vec2,
    pub position: Vec2,
    pub velocity: Vec2,
}

/// Equidistant `nx_patches x ny_patches` tiling. Offsets run from
/// `a + A_x` to `b - A_x`; a single patch along an axis is centered.
pub fn make_grid_plan(domain: Rect, base: LissajousParams, nx_patches: usize, ny_patches: usize) -> Result<ScanPlan> {
    domain.validate()?;
    base.validate()?;
    if nx_patches == 0 || ny_patches == 0 {
        return Err(Error::InvalidParameter("patch counts must be at least 1".into()));
    }
    let axis = |lo: f64, hi: f64, amp: f64, n: usize| -> Result<Vec<f64>> {
        if n == 1 {
            return Ok(vec![lo + 0.5 * (hi - lo)]);
        }
        if hi - lo <= 2.0 * amp {
            return Err(Error::InvalidParameter(format!(
                "{n} patches need an extent above {}, got {}",
                2.0 * amp,
                hi - lo
            )));
        }
        let d = (hi - lo - 2.0 * amp) / (n - 1) as f64;
        Ok((0..n).map(|i| lo + amp + i as f64 * d).collect())
    };
    let xs = axis(domain.x_min, domain.x_max, base.amplitude.x, nx_patches)?;
    let ys = axis(domain.y_min, domain.y_max, base.amplitude.y, ny_patches)?;
    let patches = xs.iter().flat_map(|&x| ys.iter().map(move |&y| Pose::new(x, y, 0.0))).collect();
    ScanPlan::from_patches(base, patches)
}

/// `count` patches with offsets uniform in `domain` and angles uniform in
/// `[0, 2 pi)`.
pub fn make_random_plan(domain: Rect, base: LissajousParams, count: usize, seed: u64) -> Result<ScanPlan> {
    domain.validate()?;
    let mut rng = crate::rng_from_seed(seed);
    let patches = (0..count)
        .map(|_| {
            let x = rng.random_range(domain.x_min..domain.x_max);
            let y = rng.random_range(domain.y_min..domain.y_max);
            let a = rng.random_range(0.0..TAU);
            Pose::new(x, y, a)
        })
        .collect();
    ScanPlan::from_patches(base, patches)
}

/// Shifts each patch offset by up to `pos_frac` times the amplitude per axis
/// and each angle by up to `angle_max`, uniformly and independently.
pub fn perturb_plan(plan: &ScanPlan, pos_frac: f64, angle_max: f64, seed: u64) -> Result<ScanPlan> {
    if !(pos_frac >= 0.0 && angle_max >= 0.0) {
        return Err(Error::InvalidParameter("perturbation bounds must be >= 0".into()));
    }
    let Some(patches) = plan.patches() else {
        return Err(Error::InvalidParameter("only patch plans can be perturbed".into()));
    };
    let mut rng = crate::rng_from_seed(seed);
    let mut sym = |a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
    let amp = plan.base.amplitude;
    let patches = patches
        .iter()
        .map(|p| {
            let dx = sym(pos_frac * amp.x);
            let dy = sym(pos_frac * amp.y);
            let da = sym(angle_max);
            Pose { offset: p.offset + Vec2::new(dx, dy), angle: p.angle + da }
        })
        .collect();
    Ok(ScanPlan { motion: MotionLaw::ConstantPerPatch { patches }, ..plan.clone() })
}

/// Motion taking `Omega` coordinates to scanner coordinates:
/// `Q* = Q_S Q_Omega^T`, `b* = b_S - Q* b_Omega`, with rates.
pub fn relative_motion(scanner: &RigidMotion, omega: &RigidMotion) -> RigidMotion {
    let angle = scanner.angle - omega.angle;
    let angle_rate = scanner.angle_rate - omega.angle_rate;
    let q = rotation(angle);
    let dq = rotation_rate(angle, angle_rate);
    RigidMotion {
        offset: scanner.offset - q * omega.offset,
        angle,
        offset_rate: scanner.offset_rate - dq * omega.offset - q * omega.offset_rate,
        angle_rate,
    }
}

/// Omega-frame triplet to the scanner frame with motion `m = (b*, Q*)`.
pub fn omega_to_scanner(s: &ScanSample, m: &RigidMotion) -> ScanSample {
    let q = m.rotation();
    ScanSample {
        signal: q * s.signal + m.offset,
        position: q * s.position + m.offset,
        velocity: m.rotation_rate() * s.position + q * s.velocity + m.offset_rate,
        ..*s
    }
}

/// Inverse of [`omega_to_scanner`].
pub fn scanner_to_omega(s: &ScanSample, m: &RigidMotion) -> ScanSample {
    let qt = m.rotation().transpose();
    let position = qt * (s.position - m.offset);
    ScanSample {
        signal: qt * (s.signal - m.offset),
        position,
        velocity: qt * (s.velocity - m.offset_rate - m.rotation_rate() * position),
        ..*s
    }
}

/// FoV-frame point to the scanner frame, `b_S + Q_S Q_F^T (r - b_F)`, with
/// its time derivative.
fn fov_to_scanner(r: &Vec2, v: &Vec2, scanner: &RigidMotion, fov: &RigidMotion) -> (Vec2, Vec2) {
    let angle = scanner.angle - fov.angle;
    let q = rotation(angle);
    let dq = rotation_rate(angle, scanner.angle_rate - fov.angle_rate);
    let d = r - fov.offset;
    (scanner.offset + q * d, scanner.offset_rate + dq * d + q * (v - fov.offset_rate))
}

fn scanner_to_fov(p: &Vec2, w: &Vec2, scanner: &RigidMotion, fov: &RigidMotion) -> (Vec2, Vec2) {
    let angle = scanner.angle - fov.angle;
    let qt = rotation(angle).transpose();
    let dqt = rotation_rate(angle, scanner.angle_rate - fov.angle_rate).transpose();
    let d = p - scanner.offset;
    (fov.offset + qt * d, fov.offset_rate + dqt * d + qt * (w - scanner.offset_rate))
}

fn check_series(n: usize, lens: [usize; 3]) -> Result<()> {
    for found in lens {
        if found != n {
            return Err(Error::LengthMismatch { expected: n, found });
        }
    }
    Ok(())
}

/// Brings recorded samples into the `Omega` frame.
///
/// Input signals are in scanner coordinates; positions and velocities are the
/// analytic FoV-frame trajectory `r(t)`, `r'(t)`. Each motion series holds one
/// entry per sample.
pub fn transform_to_omega_frame(
    samples: &[ScanSample],
    scanner: &[RigidMotion],
    fov: &[RigidMotion],
    omega: &[RigidMotion],
) -> Result<Vec<ScanSample>> {
    check_series(samples.len(), [scanner.len(), fov.len(), omega.len()])?;
    Ok(samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let (p, w) = fov_to_scanner(&s.position, &s.velocity, &scanner[k], &fov[k]);
            let in_scanner = ScanSample { position: p, velocity: w, ..*s };
            scanner_to_omega(&in_scanner, &relative_motion(&scanner[k], &omega[k]))
        })
        .collect())
}

/// Inverse of [`transform_to_omega_frame`]: what the scanner would record for
/// the given `Omega`-frame samples.
pub fn transform_from_omega_frame(
    samples: &[ScanSample],
    scanner: &[RigidMotion],
    fov: &[RigidMotion],
    omega: &[RigidMotion],
) -> Result<Vec<ScanSample>> {
    check_series(samples.len(), [scanner.len(), fov.len(), omega.len()])?;
    Ok(samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let sc = omega_to_scanner(s, &relative_motion(&scanner[k], &omega[k]));
            let (r, v) = scanner_to_fov(&sc.position, &sc.velocity, &scanner[k], &fov[k]);
            ScanSample { position: r, velocity: v, ..sc }
        })
        .collect())
}
