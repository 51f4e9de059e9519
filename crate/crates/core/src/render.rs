//! Binary pixmap (PBM, `P4`) rendering of a single chaos-game orbit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::game::{CoverTracker, Trajectory, MAX_NET_RATIO};
use crate::harness::{net_for_delta, DIAMETER_DEPTH};
use crate::ifs::IfsSystem;

pub const MIN_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Plot `x_0, …, x_M`.
    Steps(u64),
    /// Plot until the orbit is δ-dense (measured on a reference net), or the cap.
    Delta { delta: f64, cap: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    pub width: usize,
    pub height: usize,
    /// Row-major, one byte per pixel, 1 = ink.
    pub pixels: Vec<u8>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::invalid(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
            )));
        }
        Ok(Bitmap {
            width,
            height,
            pixels: vec![0; width * height],
        })
    }

    pub fn lit(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// Encodes as binary PBM: rows padded to whole bytes, most significant bit first.
    pub fn to_pbm(&self) -> Vec<u8> {
        let mut out = format!("P4\n{} {}\n", self.width, self.height).into_bytes();
        let stride = self.width.div_ceil(8);
        for row in self.pixels.chunks_exact(self.width) {
            let mut packed = vec![0u8; stride];
            for (x, &p) in row.iter().enumerate() {
                if p != 0 {
                    packed[x / 8] |= 0x80 >> (x % 8);
                }
            }
            out.extend_from_slice(&packed);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendering {
    pub bitmap: Bitmap,
    /// Index of the last plotted point.
    pub steps: u64,
    /// True when a δ-stop run hit its cap first.
    pub censored: bool,
}

/// Runs one orbit from the fixed point of the first map and plots it over the
/// attractor's bounding box (first two coordinates; 1-D systems use one row).
pub fn render_orbit(system: &IfsSystem, rule: StopRule, seed: u64, width: usize, height: usize) -> Result<Rendering> {
    let mut bitmap = Bitmap::new(width, height)?;
    let bbox = system.bounding_box(system.affordable_depth(DIAMETER_DEPTH))?;
    let span = |k: usize| (bbox.max[k] - bbox.min[k]).max(f64::MIN_POSITIVE);
    let pixel = |x: &[f64]| -> usize {
        let fx = (x[0] - bbox.min[0]) / span(0);
        let col = ((fx * width as f64) as usize).min(width - 1);
        let row = if x.len() >= 2 {
            let fy = (x[1] - bbox.min[1]) / span(1);
            height - 1 - ((fy * height as f64) as usize).min(height - 1)
        } else {
            height / 2
        };
        row * width + col
    };

    let v0 = system.default_base_point();
    let mut traj = Trajectory::new(system, &v0, seed)?;
    bitmap.pixels[pixel(&v0)] = 1;
    let censored = match rule {
        StopRule::Steps(m) => {
            for _ in 0..m {
                let (_, x) = traj.run_step();
                bitmap.pixels[pixel(x)] = 1;
            }
            false
        }
        StopRule::Delta { delta, cap } => {
            let net = net_for_delta(system, delta, MAX_NET_RATIO, &v0)?;
            if !(delta > 0.0 && delta < system.r_min()) {
                return Err(Error::invalid("delta must lie in (0, r_min)"));
            }
            let mut tracker = CoverTracker::new(&net, delta);
            tracker.mark(&v0);
            loop {
                let n = traj.step_count();
                if n >= 1 && tracker.is_complete() {
                    break false;
                }
                if n >= cap {
                    break true;
                }
                let (_, x) = traj.run_step();
                bitmap.pixels[pixel(x)] = 1;
                tracker.mark(x);
            }
        }
    };
    Ok(Rendering {
        bitmap,
        steps: traj.step_count(),
        censored,
    })
}

pub fn write_pbm(path: &Path, bitmap: &Bitmap) -> Result<()> {
    std::fs::write(path, bitmap.to_pbm())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pbm_packing() {
        let mut b = Bitmap::new(17, 16).unwrap();
        b.pixels[0] = 1;
        b.pixels[16] = 1;
        let bytes = b.to_pbm();
        let header = b"P4\n17 16\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 3 * 16);
        assert_eq!(&bytes[header.len()..header.len() + 3], &[0x80, 0x00, 0x80]);
    }

    #[test]
    fn too_small_rejected() {
        let sys = IfsSystem::sierpinski([1.0 / 3.0; 3]).unwrap();
        assert!(matches!(
            render_orbit(&sys, StopRule::Steps(10), 0, 15, 64),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn steps_mode_sanity_and_determinism() {
        let sys = IfsSystem::sierpinski([1.0 / 3.0; 3]).unwrap();
        let a = render_orbit(&sys, StopRule::Steps(100_000), 9, 256, 256).unwrap();
        let lit = a.bitmap.lit();
        assert!((100..=100_000).contains(&lit), "{lit}");
        let b = render_orbit(&sys, StopRule::Steps(100_000), 9, 256, 256).unwrap();
        assert_eq!(a.bitmap.to_pbm(), b.bitmap.to_pbm());
        assert_eq!(a.steps, 100_000);
    }

    #[test]
    fn delta_mode_stops() {
        let sys = IfsSystem::sierpinski([1.0 / 3.0; 3]).unwrap();
        let r = render_orbit(&sys, StopRule::Delta { delta: 0.125, cap: 1_000_000 }, 3, 64, 64).unwrap();
        assert!(!r.censored);
        assert!(r.steps >= 26);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let b = Bitmap::new(16, 16).unwrap();
        let err = write_pbm(Path::new("/nonexistent-dir/x.pbm"), &b).unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }
}
