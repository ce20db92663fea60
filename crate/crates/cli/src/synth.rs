//! Synthetic fixtures with analytically known flow.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use evflow::io::{write_camera, write_depth, write_events, write_flo, write_frame_pgm, write_trajectory};
use evflow::{
    CameraModel, DepthMap, Event, EventStream, FlowField, Frame, Mat3, Polarity, PoseSample, Trajectory, Vec3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{write_bytes, CliError, CliResult};
use crate::{SynthArgs, SynthCase};

pub fn run(a: &SynthArgs) -> CliResult<()> {
    if !a.out_dir.is_dir() {
        return Err(CliError::Usage(format!("output directory does not exist: {}", a.out_dir.display())));
    }
    let files = match a.case {
        SynthCase::Shift => shift(a)?,
        SynthCase::EdgeSweep => edge_sweep(a)?,
        SynthCase::Orbit => orbit(a)?,
    };
    let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    println!("{}", json!({ "case": format!("{:?}", a.case), "seed": a.seed, "files": names }));
    Ok(())
}

fn dims(a: &SynthArgs, width: usize, height: usize) -> CliResult<(usize, usize)> {
    let w = a.width.unwrap_or(width);
    let h = a.height.unwrap_or(height);
    if w == 0 || h == 0 {
        return Err(CliError::Usage("image dimensions must be positive".into()));
    }
    Ok((w, h))
}

fn save(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
    let path = dir.join(name);
    write_bytes(&path, bytes)?;
    Ok(path)
}

/// Smooth random intensity pattern: a sum of plane waves with wavelengths
/// between 10 and 40 px, scaled into roughly [0.1, 0.9].
pub struct Texture {
    waves: Vec<[f64; 4]>,
}

impl Texture {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut waves: Vec<[f64; 4]> = (0..8)
            .map(|_| {
                let theta = rng.gen_range(0.0..TAU);
                let k = TAU / rng.gen_range(10.0..40.0);
                [k * theta.cos(), k * theta.sin(), rng.gen_range(0.0..TAU), rng.gen_range(0.5..1.0)]
            })
            .collect();
        let total: f64 = waves.iter().map(|w| w[3]).sum();
        for w in &mut waves {
            w[3] *= 0.4 / total;
        }
        Self { waves }
    }

    pub fn at(&self, x: f64, y: f64) -> f64 {
        0.5 + self.waves.iter().map(|&[kx, ky, ph, a]| a * (kx * x + ky * y + ph).sin()).sum::<f64>()
    }
}

/// `frame1` is `frame0`'s content moved by `(dx, dy)`: `I1(p) = I0(p − d)`.
fn shift(a: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    let (w, h) = dims(a, 64, 64)?;
    if !(a.dx.is_finite() && a.dy.is_finite()) {
        return Err(CliError::Usage("displacement must be finite".into()));
    }
    let tex = Texture::new(a.seed);
    let i0 = Frame::from_fn(w, h, |x, y| tex.at(x as f64, y as f64));
    let i1 = Frame::from_fn(w, h, |x, y| tex.at(x as f64 - a.dx, y as f64 - a.dy));
    let gt = FlowField::constant(w, h, a.dx, a.dy);
    Ok(vec![
        save(&a.out_dir, "frame0.pgm", &write_frame_pgm(&i0))?,
        save(&a.out_dir, "frame1.pgm", &write_frame_pgm(&i1))?,
        save(&a.out_dir, "gt.flo", &write_flo(&gt)?)?,
    ])
}

/// A vertical edge crossing column `x` at `x / speed` seconds, one event per
/// pixel crossing.
fn edge_sweep(a: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    let (w, h) = dims(a, 48, 16)?;
    if !(a.speed > 0.0 && a.speed.is_finite()) {
        return Err(CliError::Usage("--speed must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut events = Vec::with_capacity(w * h);
    // jitter delays each event by up to 2·jitter µs, centred on +jitter
    for x in 0..w {
        let t = (x as f64 * 1e6 / a.speed).round() as u64;
        for y in 0..h {
            let noise = if a.jitter > 0 { rng.gen_range(0..=2 * a.jitter) } else { 0 };
            events.push(Event::new(x as u16, y as u16, t + noise, Polarity::Positive));
        }
    }
    events.sort_by_key(|e| e.t);
    let stream = EventStream::new(w, h, events)?;
    let mut csv_events = Vec::new();
    write_events(&stream, &mut csv_events)?;
    let mut truth = String::from("t,x,y,u,v\n");
    for e in &stream.events {
        writeln!(truth, "{},{},{},{:?},{:?}", e.t, e.x, e.y, a.speed, 0.0).unwrap();
    }
    Ok(vec![save(&a.out_dir, "events.csv", &csv_events)?, save(&a.out_dir, "truth.csv", truth.as_bytes())?])
}

/// Radial lens model, written independently of the library.
fn lens(k1: f64, k2: f64, x: f64, y: f64) -> (f64, f64) {
    let r2 = x * x + y * y;
    let s = 1.0 + k1 * r2 + k2 * r2 * r2;
    (x * s, y * s)
}

/// Newton inversion of [`lens`] with the analytic Jacobian.
fn unlens(k1: f64, k2: f64, xd: f64, yd: f64) -> Option<(f64, f64)> {
    let (mut x, mut y) = (xd, yd);
    for _ in 0..100 {
        let r2 = x * x + y * y;
        let s = 1.0 + k1 * r2 + k2 * r2 * r2;
        let ds = 2.0 * k1 + 4.0 * k2 * r2;
        let (fx, fy) = (x * s - xd, y * s - yd);
        if fx.abs().max(fy.abs()) < 1e-15 {
            return Some((x, y));
        }
        let (j11, j12, j21, j22) = (s + ds * x * x, ds * x * y, ds * x * y, s + ds * y * y);
        let det = j11 * j22 - j12 * j21;
        x -= (j22 * fx - j12 * fy) / det;
        y -= (j11 * fy - j21 * fx) / det;
    }
    let (ex, ey) = lens(k1, k2, x, y);
    ((ex - xd).abs().max((ey - yd).abs()) < 1e-12).then_some((x, y))
}

const ORBIT_STEP_US: u64 = 1_000;

/// Camera with fixed orientation circling in its own image plane over a
/// fronto-parallel plane.
pub struct OrbitSpec {
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    pub rate: f64,
    pub plane_depth: f64,
    pub focal: f64,
    pub k1: f64,
    pub k2: f64,
    pub t0: u64,
    pub t1: u64,
}

pub struct OrbitFixture {
    pub trajectory: Trajectory<f64>,
    pub camera: CameraModel<f64>,
    pub depth: DepthMap<f64>,
    /// Exact reprojection between the poses at `t0` and `t1`.
    pub flow: FlowField<f64>,
}

pub fn orbit_fixture(s: &OrbitSpec) -> CliResult<OrbitFixture> {
    let (w, h) = (s.width, s.height);
    if s.t0 >= s.t1 {
        return Err(CliError::Usage("--t0 must be before --t1".into()));
    }
    if !(s.plane_depth > 0.0 && s.focal > 0.0) {
        return Err(CliError::Usage("--plane-depth and --focal must be positive".into()));
    }
    let position = |t_us: u64| {
        let phase = s.rate * t_us as f64 * 1e-6;
        Vec3::new(s.radius * phase.cos(), s.radius * phase.sin(), 0.0)
    };
    // long enough for the default velocity smoothing window on both sides
    let span = s.t1 + 6 * (s.t1 - s.t0);
    let samples = (0..=span.div_ceil(ORBIT_STEP_US))
        .map(|k| {
            let t = k * ORBIT_STEP_US;
            PoseSample::from_rotation(t, Mat3::identity(), position(t))
        })
        .collect::<evflow::Result<Vec<_>>>()?;
    let trajectory = Trajectory::new(samples)?;
    let camera = CameraModel {
        k1: s.k1,
        k2: s.k2,
        ..CameraModel::pinhole(s.focal, s.focal, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0)
    };
    camera.validate()?;
    let depth = DepthMap::constant(w, h, s.t0, s.plane_depth);

    let shift = position(s.t1) - position(s.t0);
    let mut flow = FlowField::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let xd = (col as f64 - camera.cx) / camera.fx;
            let yd = (row as f64 - camera.cy) / camera.fy;
            let Some((x, y)) = unlens(s.k1, s.k2, xd, yd) else {
                flow.valid[i] = false;
                continue;
            };
            let (x1, y1) = (x - shift.x() / s.plane_depth, y - shift.y() / s.plane_depth);
            let (xd1, yd1) = lens(s.k1, s.k2, x1, y1);
            flow.u[i] = (xd1 - xd) * camera.fx;
            flow.v[i] = (yd1 - yd) * camera.fy;
        }
    }
    Ok(OrbitFixture { trajectory, camera, depth, flow })
}

fn orbit(a: &SynthArgs) -> CliResult<Vec<PathBuf>> {
    let (width, height) = dims(a, 64, 48)?;
    let f = orbit_fixture(&OrbitSpec {
        width,
        height,
        radius: a.radius,
        rate: a.rate,
        plane_depth: a.plane_depth,
        focal: a.focal,
        k1: a.k1,
        k2: a.k2,
        t0: a.t0,
        t1: a.t1,
    })?;
    let mut poses = Vec::new();
    write_trajectory(&f.trajectory, &mut poses)?;
    Ok(vec![
        save(&a.out_dir, "poses.csv", &poses)?,
        save(&a.out_dir, "depth.evdepth", &write_depth(&f.depth))?,
        save(&a.out_dir, "camera.json", write_camera(&f.camera)?.as_bytes())?,
        save(&a.out_dir, "gt.flo", &write_flo(&f.flow)?)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lens_inverse() {
        for &(x, y) in &[(0.0, 0.0), (0.3, -0.2), (-0.5, 0.4)] {
            let (xd, yd) = lens(-0.2, 0.05, x, y);
            let (ux, uy) = unlens(-0.2, 0.05, xd, yd).unwrap();
            assert!((ux - x).abs() < 1e-13 && (uy - y).abs() < 1e-13);
        }
    }

    #[test]
    fn texture_range() {
        let t = Texture::new(3);
        for k in 0..1000 {
            let v = t.at(k as f64 * 0.37, k as f64 * 0.11);
            assert!((0.1..=0.9).contains(&v));
        }
    }
}
