//! Seeded synthetic fixtures: styled pieces, crowd annotations and
//! separable feature sets. Used by the integration tests, the acceptance
//! harness and the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotation::AnnotationSeries;
use crate::midi::{MidiPiece, Note, TempoChange, STEPS_PER_BAR};

/// Standard normal draw by Box-Muller.
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

const MAJOR: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];

/// Appends `bars` bars of melody starting at `start` in a bright (major,
/// high, loud, short notes) or dark (minor, low, soft, long triads) style.
/// Velocities vary by a few bins around the style's level.
pub fn styled_bars(rng: &mut impl Rng, notes: &mut Vec<Note>, start: u32, bars: u32, bright: bool) {
    let (scale, root, velocity, lengths): (&[u8; 7], u8, u8, &[u32]) =
        if bright { (&MAJOR, 72, 100, &[2, 4, 4]) } else { (&MINOR, 48, 44, &[8, 8, 16]) };
    let mut degree = rng.gen_range(0..7i32);
    let mut step = start;
    let end = start + bars * STEPS_PER_BAR;
    while step < end {
        degree = (degree + rng.gen_range(-2..=2)).clamp(0, 13);
        let pitch = root + 12 * (degree / 7) as u8 + scale[(degree % 7) as usize];
        let len = lengths[rng.gen_range(0..lengths.len())];
        let velocity = velocity + 4 * rng.gen_range(0..4) - 6;
        notes.push(Note { onset: step, pitch, velocity, duration: 2 * len });
        if !bright {
            // a triad on the scale degree keeps the word density close to the bright style
            for third in [2, 4] {
                let d = degree + third;
                let upper = root + 12 * (d / 7) as u8 + scale[(d % 7) as usize];
                notes.push(Note { onset: step, pitch: upper, velocity, duration: 2 * len });
            }
        }
        step += len;
    }
}

/// A piece of `bars` bars in one style, at 120 bpm (bright) or 72 bpm (dark).
pub fn styled_piece(seed: u64, bars: u32, bright: bool) -> MidiPiece {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = Vec::new();
    styled_bars(&mut rng, &mut notes, 0, bars, bright);
    let bpm = if bright { 120.0 } else { 72.0 };
    MidiPiece::new(notes, vec![TempoChange { onset: 0, bpm }], bars * STEPS_PER_BAR)
}

/// A 120 bpm piece whose style switches after `bars_first` bars.
pub fn two_part_piece(seed: u64, bars_first: u32, bars_second: u32, bright_first: bool) -> MidiPiece {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut notes = Vec::new();
    styled_bars(&mut rng, &mut notes, 0, bars_first, bright_first);
    styled_bars(&mut rng, &mut notes, bars_first * STEPS_PER_BAR, bars_second, !bright_first);
    MidiPiece::new(notes, vec![TempoChange { onset: 0, bpm: 120.0 }], (bars_first + bars_second) * STEPS_PER_BAR)
}

/// Crowd makeup for [`annotators`].
#[derive(Debug, Clone, Copy)]
pub struct CrowdSpec {
    /// Annotators following the planted valence exactly.
    pub clean: usize,
    /// Annotators following it with small jitter.
    pub jittery: usize,
    /// Annotators doing a bounded random walk.
    pub walkers: usize,
    pub jitter: f64,
    pub walk_step: f64,
}

impl Default for CrowdSpec {
    fn default() -> Self {
        Self { clean: 12, jittery: 10, walkers: 8, jitter: 0.08, walk_step: 0.25 }
    }
}

/// Annotations of one piece whose planted valence is `first` until
/// `switch_at` seconds and `-first` after. Samples arrive at irregular
/// intervals of 0.3 to 0.7 s; annotators are named `clean_i`, `jitter_i`
/// and `walk_i`.
pub fn annotators(seed: u64, piece_id: &str, duration: f64, switch_at: f64, first: f64, crowd: &CrowdSpec) -> Vec<AnnotationSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let times = |rng: &mut ChaCha8Rng| {
        let mut t = vec![0.0];
        while *t.last().unwrap() < duration {
            let next = t.last().unwrap() + rng.gen_range(0.3..0.7);
            t.push(next.min(duration));
        }
        t
    };
    let planted = |t: f64| if t < switch_at { first } else { -first };
    let groups = [("clean", crowd.clean), ("jitter", crowd.jittery), ("walk", crowd.walkers)];
    for (kind, count) in groups {
        for i in 0..count {
            let ts = times(&mut rng);
            let mut level = rng.gen_range(-0.5..0.5);
            let samples = ts
                .iter()
                .map(|&t| {
                    let v = match kind {
                        "clean" => planted(t),
                        "jitter" => planted(t) + crowd.jitter * normal(&mut rng),
                        _ => {
                            level += crowd.walk_step * normal(&mut rng);
                            level
                        }
                    };
                    (t, v.clamp(-1.0, 1.0))
                })
                .collect();
            out.push(AnnotationSeries { piece_id: piece_id.into(), annotator_id: format!("{kind}_{i}"), samples });
        }
    }
    out
}

/// Two Gaussian classes of `per_class` rows each in `dim` dimensions whose
/// first `informative` coordinates have means `±gap / 2`; the rest is
/// unit-variance noise. Rows alternate between the classes.
pub fn separable_features(seed: u64, per_class: usize, dim: usize, informative: usize, gap: f64) -> (Array2<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((2 * per_class, dim));
    let labels: Vec<u8> = (0..2 * per_class).map(|i| (i % 2) as u8).collect();
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..dim {
            let shift = if j < informative { (f64::from(y) - 0.5) * gap } else { 0.0 };
            x[[i, j]] = shift + normal(&mut rng);
        }
    }
    (x, labels)
}
