use alloc::vec::Vec;

use super::{IntegratorError, StepLog};

/// Which one-sided limit to return at a breakpoint time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Side {
    /// Pre-event state `y⁻(t_b)`.
    Left,
    /// Post-event state `y⁺(t_b)`.
    #[default]
    Right,
}

/// Accepted points of one event-free interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
}

impl Segment {
    pub(crate) fn new() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            derivatives: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, t: f64, y: Vec<f64>, dy: Vec<f64>) {
        self.times.push(t);
        self.states.push(y);
        self.derivatives.push(dy);
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("segment has at least one point")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn interpolate(&self, t: f64) -> Vec<f64> {
        // index of the last grid point <= t
        let i = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return self.states[i].clone(),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.times.len() - 2),
        };
        hermite(
            self.times[i],
            self.times[i + 1],
            &self.states[i],
            &self.states[i + 1],
            &self.derivatives[i],
            &self.derivatives[i + 1],
            t,
        )
    }
}

/// Cubic Hermite interpolant on `[t0, t1]` from end values and derivatives.
pub(crate) fn hermite(
    t0: f64,
    t1: f64,
    y0: &[f64],
    y1: &[f64],
    f0: &[f64],
    f1: &[f64],
    t: f64,
) -> Vec<f64> {
    let h = t1 - t0;
    let th = (t - t0) / h;
    let th1 = th - 1.0;
    y0.iter()
        .zip(y1)
        .zip(f0.iter().zip(f1))
        .map(|((a, b), (da, db))| {
            let dy = b - a;
            (1.0 - th) * a + th * b + th * th1 * ((1.0 - 2.0 * th) * dy + th1 * h * da + th * h * db)
        })
        .collect()
}

/// Largest `|y(θ)|` of the scalar Hermite cubic at its interior critical
/// points `0 < θ < 1` (zero if there are none).
fn hermite_interior_peak(h: f64, (a, b): (f64, f64), (da, db): (f64, f64)) -> f64 {
    // dy/dθ = c2 θ² + c1 θ + c0
    let c2 = 6.0 * (a - b) + 3.0 * h * (da + db);
    let c1 = 6.0 * (b - a) - h * (4.0 * da + 2.0 * db);
    let c0 = h * da;
    let mut roots = [f64::NAN; 2];
    if c2 == 0.0 {
        if c1 != 0.0 {
            roots[0] = -c0 / c1;
        }
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc >= 0.0 {
            let r = crate::math::sqrt(disc);
            roots = [(-c1 + r) / (2.0 * c2), (-c1 - r) / (2.0 * c2)];
        }
    }
    roots
        .iter()
        .filter(|th| **th > 0.0 && **th < 1.0)
        .map(|&th| {
            let th1 = th - 1.0;
            let v = (1.0 - th) * a + th * b + th * th1 * ((1.0 - 2.0 * th) * (b - a) + th1 * h * da + th * h * db);
            crate::math::abs(v)
        })
        .fold(0.0, f64::max)
}

/// Solution of an initial value problem on an adaptive grid, split at
/// breakpoint times into segments. Consecutive segments share the
/// breakpoint time exactly: the last point of one holds `y⁻(t_b)`, the
/// first point of the next holds `y⁺(t_b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub(crate) dim: usize,
    pub(crate) segments: Vec<Segment>,
    pub(crate) steps: StepLog,
    pub experiment_id: usize,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Accepted step sequence; replaying it reproduces the grid exactly.
    pub fn step_log(&self) -> &StepLog {
        &self.steps
    }

    pub fn t_start(&self) -> f64 {
        self.segments[0].start()
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map(Segment::end).unwrap_or(f64::NAN)
    }

    /// Final state (right limit at the end of the span).
    pub fn final_state(&self) -> &[f64] {
        self.segments
            .last()
            .and_then(|s| s.states.last())
            .expect("trajectory has at least one point")
    }

    /// Every stored point in time order. Breakpoint times appear twice,
    /// first with the left and then with the right limit.
    pub fn points(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.segments.iter().flat_map(|s| {
            s.times
                .iter()
                .copied()
                .zip(s.states.iter().map(|y| y.as_slice()))
        })
    }

    /// Componentwise `max_t |y_i(t)|` of the dense output, so the result
    /// does not depend on where the grid points happen to fall.
    pub fn max_abs(&self) -> Vec<f64> {
        let mut m = alloc::vec![0.0f64; self.dim];
        for s in &self.segments {
            for (k, y) in s.states.iter().enumerate() {
                for (mi, yi) in m.iter_mut().zip(y) {
                    *mi = mi.max(crate::math::abs(*yi));
                }
                if k + 1 < s.len() {
                    let h = s.times[k + 1] - s.times[k];
                    for (i, mi) in m.iter_mut().enumerate() {
                        let peak = hermite_interior_peak(
                            h,
                            (y[i], s.states[k + 1][i]),
                            (s.derivatives[k][i], s.derivatives[k + 1][i]),
                        );
                        *mi = mi.max(peak);
                    }
                }
            }
        }
        m
    }

    /// Dense-output value at `t`. At a breakpoint time `side` picks the
    /// one-sided limit; at a stored grid point the stored state is returned
    /// exactly.
    pub fn interpolate(&self, t: f64, side: Side) -> Result<Vec<f64>, IntegratorError> {
        if !(t >= self.t_start() && t <= self.t_end()) {
            return Err(IntegratorError::OutOfSpan { t });
        }
        let candidates = self
            .segments
            .iter()
            .enumerate()
            .filter(|(_, s)| t >= s.start() && t <= s.end());
        let seg = match side {
            Side::Left => candidates.map(|(i, _)| i).next(),
            Side::Right => candidates.map(|(i, _)| i).next_back(),
        }
        .ok_or(IntegratorError::OutOfSpan { t })?;
        Ok(self.segments[seg].interpolate(t))
    }

    /// Copy with the time axis moved so that the span starts at `t0`.
    pub fn shifted_to(&self, t0: f64) -> Trajectory {
        let offset = t0 - self.t_start();
        let mut out = self.clone();
        for s in &mut out.segments {
            for t in &mut s.times {
                *t += offset;
            }
        }
        out
    }
}
