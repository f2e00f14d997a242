//! Ring buffer holding the recent state history of a delayed run.
//!
//! With the delay an exact integer number of steps, the delayed argument
//! `x(t - r)` is always one of the stored samples; no interpolation ever
//! happens. For `t < r` the buffer answers with the initial history
//! function, a constant equal to the initial state.

use crate::scalar::Scalar;

/// Stores the last `max_lag + 1` state vectors with their timestamps.
#[derive(Debug, Clone)]
pub struct DelayBuffer<T> {
    dim: usize,
    capacity: usize,
    data: Vec<T>,
    times: Vec<T>,
    head: usize,
}

impl<T: Scalar> DelayBuffer<T> {
    /// Creates a buffer pre-filled with the constant pre-history
    /// `x(t) = initial` for `t <= 0`; slot timestamps are `-m * dt`.
    pub fn new(max_lag: usize, dt: T, initial: &[T]) -> Self {
        let dim = initial.len();
        let capacity = max_lag + 1;
        let mut data = Vec::with_capacity(capacity * dim);
        for _ in 0..capacity {
            data.extend_from_slice(initial);
        }
        // head starts at slot 0, so lag m lives at slot (capacity - m) % capacity
        let mut times = vec![T::zero(); capacity];
        for m in 0..capacity {
            times[(capacity - m) % capacity] = -T::from_real(m as f64) * dt;
        }
        Self {
            dim,
            capacity,
            data,
            times,
            head: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest lag (in steps) this buffer can answer.
    pub fn max_lag(&self) -> usize {
        self.capacity - 1
    }

    fn slot(&self, lag: usize) -> usize {
        debug_assert!(lag < self.capacity, "lag {lag} exceeds buffer depth");
        (self.head + self.capacity - lag) % self.capacity
    }

    /// Sample `lag` steps before the newest one.
    pub fn lag(&self, lag: usize) -> &[T] {
        let s = self.slot(lag);
        &self.data[s * self.dim..(s + 1) * self.dim]
    }

    /// Timestamp of the sample `lag` steps back.
    pub fn lag_time(&self, lag: usize) -> T {
        self.times[self.slot(lag)]
    }

    /// Appends the newest sample, evicting the oldest.
    pub fn push(&mut self, t: T, state: &[T]) {
        debug_assert_eq!(state.len(), self.dim);
        self.head = (self.head + 1) % self.capacity;
        let s = self.head;
        self.data[s * self.dim..(s + 1) * self.dim].copy_from_slice(state);
        self.times[s] = t;
    }
}

/// Read access to delayed state values during one RK stage.
///
/// Lag 0 resolves to the *current stage* vector, so a system with all lags
/// zero integrates as a plain ODE with classical RK4. Lags >= 1 read the
/// history buffer at the step's base sample and are therefore held
/// constant across the internal stages of the step.
pub struct DelayTap<'a, T> {
    stage_x: &'a [T],
    buffer: Option<&'a DelayBuffer<T>>,
}

impl<'a, T: Scalar> DelayTap<'a, T> {
    pub(crate) fn new(stage_x: &'a [T], buffer: &'a DelayBuffer<T>) -> Self {
        Self {
            stage_x,
            buffer: Some(buffer),
        }
    }

    /// A tap with no history: only lag 0 is answerable.
    pub fn undelayed(stage_x: &'a [T]) -> Self {
        Self {
            stage_x,
            buffer: None,
        }
    }

    /// Value of component `component` delayed by `lag_steps` steps.
    pub fn get(&self, lag_steps: usize, component: usize) -> T {
        if lag_steps == 0 {
            self.stage_x[component]
        } else {
            self.buffer
                .expect("delayed lookup without a history buffer")
                .lag(lag_steps)[component]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prehistory_is_constant_initial() {
        let buf = DelayBuffer::new(3, 0.5, &[1.0f64, 2.0]);
        for lag in 0..=3 {
            assert_eq!(buf.lag(lag), &[1.0, 2.0]);
            assert_eq!(buf.lag_time(lag), -(lag as f64) * 0.5);
        }
    }

    #[test]
    fn lookup_returns_exact_stored_sample() {
        let mut buf = DelayBuffer::new(2, 1.0, &[0.0f64]);
        buf.push(1.0, &[10.0]);
        buf.push(2.0, &[20.0]);
        assert_eq!(buf.lag(0), &[20.0]);
        assert_eq!(buf.lag(1), &[10.0]);
        assert_eq!(buf.lag(2), &[0.0]);
        assert_eq!(buf.lag_time(2), 0.0);
        buf.push(3.0, &[30.0]);
        // oldest evicted, window slides
        assert_eq!(buf.lag(2), &[10.0]);
        assert_eq!(buf.lag_time(0), 3.0);
    }

    #[test]
    fn tap_lag_zero_reads_live_stage() {
        let buf = DelayBuffer::new(1, 1.0, &[5.0f64]);
        let stage = [42.0f64];
        let tap = DelayTap::new(&stage, &buf);
        assert_eq!(tap.get(0, 0), 42.0);
        assert_eq!(tap.get(1, 0), 5.0);
    }
}
