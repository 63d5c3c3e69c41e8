use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::envs::Action;

/// Side length of the RBF center grid.
pub const RBF_GRID: usize = 21;
pub const RBF_SIGMA: f64 = 0.05;
pub const STEP_SIZE: f64 = 0.1;
pub const NOISE_STD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Segment {
    pub const fn new(a: (f64, f64), b: (f64, f64)) -> Self {
        Segment { a, b }
    }

    /// Closed-segment intersection test (touching counts).
    pub fn intersects(&self, other: &Segment) -> bool {
        fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
            (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
        }
        fn on_segment(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> bool {
            r.0 >= p.0.min(q.0) && r.0 <= p.0.max(q.0) && r.1 >= p.1.min(q.1) && r.1 <= p.1.max(q.1)
        }
        let (p1, p2, p3, p4) = (self.a, self.b, other.a, other.b);
        let d1 = orient(p3, p4, p1);
        let d2 = orient(p3, p4, p2);
        let d3 = orient(p1, p2, p3);
        let d4 = orient(p1, p2, p4);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        (d1 == 0.0 && on_segment(p3, p4, p1))
            || (d2 == 0.0 && on_segment(p3, p4, p2))
            || (d3 == 0.0 && on_segment(p1, p2, p3))
            || (d4 == 0.0 && on_segment(p1, p2, p4))
    }
}

/// Four rooms on the unit square: a wall cross through (0.5, 0.5) with one
/// doorway of width 0.15 centred on each arm.
pub const FOUR_ROOMS_WALLS: [Segment; 6] = [
    Segment::new((0.5, 0.0), (0.5, 0.175)),
    Segment::new((0.5, 0.325), (0.5, 0.675)),
    Segment::new((0.5, 0.825), (0.5, 1.0)),
    Segment::new((0.0, 0.5), (0.175, 0.5)),
    Segment::new((0.325, 0.5), (0.675, 0.5)),
    Segment::new((0.825, 0.5), (1.0, 0.5)),
];

/// Continuous 2-D maze on `[0, 1]²` with Gaussian motion noise.
///
/// Each action moves the agent [`STEP_SIZE`] along one axis (or not at all),
/// Gaussian noise of std [`NOISE_STD`] is added to both coordinates, the
/// result is clipped to the unit square, and the whole move is undone if the
/// displacement segment touches an interior wall.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousMaze {
    walls: Vec<Segment>,
    noise_std: f64,
}

impl Default for ContinuousMaze {
    fn default() -> Self {
        Self::four_rooms()
    }
}

impl ContinuousMaze {
    pub fn four_rooms() -> Self {
        ContinuousMaze {
            walls: FOUR_ROOMS_WALLS.to_vec(),
            noise_std: NOISE_STD,
        }
    }

    pub fn with_walls(walls: Vec<Segment>) -> Self {
        ContinuousMaze {
            walls,
            noise_std: NOISE_STD,
        }
    }

    pub fn walls(&self) -> &[Segment] {
        &self.walls
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn displacement(action: Action) -> (f64, f64) {
        match action.0 {
            0 => (-STEP_SIZE, 0.0),
            1 => (STEP_SIZE, 0.0),
            2 => (0.0, STEP_SIZE),
            3 => (0.0, -STEP_SIZE),
            _ => (0.0, 0.0),
        }
    }

    /// Deterministic part of [`ContinuousMaze::step`] with the noise supplied.
    pub fn step_with_noise(&self, pos: (f64, f64), action: Action, noise: (f64, f64)) -> (f64, f64) {
        let (dx, dy) = Self::displacement(action);
        let next = (
            (pos.0 + dx + noise.0).clamp(0.0, 1.0),
            (pos.1 + dy + noise.1).clamp(0.0, 1.0),
        );
        let path = Segment::new(pos, next);
        if self.walls.iter().any(|w| w.intersects(&path)) {
            pos
        } else {
            next
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, pos: (f64, f64), action: Action, rng: &mut R) -> (f64, f64) {
        let normal = Normal::new(0.0, self.noise_std).expect("positive std");
        let noise = (normal.sample(rng), normal.sample(rng));
        self.step_with_noise(pos, action, noise)
    }

    /// Whether the straight segment between two points crosses a wall.
    pub fn blocked(&self, from: (f64, f64), to: (f64, f64)) -> bool {
        let path = Segment::new(from, to);
        self.walls.iter().any(|w| w.intersects(&path))
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        (rng.random::<f64>(), rng.random::<f64>())
    }

    pub fn rbf_center(index: usize) -> (f64, f64) {
        let step = 1.0 / (RBF_GRID - 1) as f64;
        ((index % RBF_GRID) as f64 * step, (index / RBF_GRID) as f64 * step)
    }

    /// Gaussian RBF activations on the 21 × 21 grid of centres.
    pub fn featurize_into(pos: (f64, f64), out: &mut [f64]) {
        debug_assert_eq!(out.len(), RBF_GRID * RBF_GRID);
        let denom = 2.0 * RBF_SIGMA * RBF_SIGMA;
        for (i, o) in out.iter_mut().enumerate() {
            let (cx, cy) = Self::rbf_center(i);
            let d2 = (pos.0 - cx).powi(2) + (pos.1 - cy).powi(2);
            *o = (-d2 / denom).exp();
        }
    }
}
