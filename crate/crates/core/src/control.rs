//! Primary and secondary frequency control.
//!
//! Primary control is a droop `u = −Δf/S` passed through a ramp limiter of
//! slope `reserve / (T¹ − T_d)` and a saturator at `±reserve`. The dead time
//! `T_d` either holds the units idle for `T_d` after the first deviation
//! ([`DelayMode::Activation`]) or delays the droop input itself
//! ([`DelayMode::Transport`]), realised by linear interpolation in a
//! time-tagged history of past deviations.
//!
//! Secondary control is a PI law on the area control error
//! `ACE = ΔP_tie + β·Δf` that engages `delay` seconds after the first
//! non-zero error, saturated at `±reserve` and ramp limited to
//! `reserve / T_sek`. The integral is frozen while the command is saturated
//! and integrating would drive it further out.

use std::collections::VecDeque;

use crate::model::{load_damping_mw_per_hz, DelayMode, PrimaryControlParams, SecondaryControlParams};

/// Pure transport delay on a scalar signal sampled once per step.
///
/// Past samples are kept in a time-tagged queue and read back by linear
/// interpolation. Before the history reaches back far enough the output is
/// zero (equilibrium warm-up).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DelayLine {
    clock: f64,
    history: VecDeque<(f64, f64)>,
}

impl DelayLine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Time of the next sample relative to the cold start, s.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Time span covered by the stored history, s.
    pub fn buffered_span(&self) -> f64 {
        match (self.history.front(), self.history.back()) {
            (Some(a), Some(b)) => b.0 - a.0,
            _ => 0.0,
        }
    }

    fn delayed(&self, delay: f64) -> f64 {
        let target = self.clock - delay;
        let Some(&(t0, _)) = self.history.front() else {
            return 0.0;
        };
        if target < t0 {
            return 0.0;
        }
        for (&(ta, fa), &(tb, fb)) in self.history.iter().zip(self.history.iter().skip(1)) {
            if target <= tb {
                let w = if tb > ta { (target - ta) / (tb - ta) } else { 1.0 };
                return fa + w * (fb - fa);
            }
        }
        self.history.back().map_or(0.0, |s| s.1)
    }

    /// Pushes the current sample and returns the signal `delay` seconds ago.
    /// The clock then advances by `dt`.
    pub fn advance(&mut self, now: f64, delay: f64, dt: f64) -> f64 {
        self.history.push_back((self.clock, now));
        let out = self.delayed(delay);
        self.clock += dt;
        let target = self.clock - delay;
        while self.history.len() >= 2 && self.history[1].0 <= target {
            self.history.pop_front();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrimaryState {
    line: DelayLine,
    clock: f64,
    armed_at: Option<f64>,
    last_output: f64,
}

impl PrimaryState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Output of the most recent step, MW.
    pub fn last_output(&self) -> f64 {
        self.last_output
    }

    /// Time of the next step relative to the cold start, s.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Time at which the first non-zero deviation was seen, s.
    pub fn armed_at(&self) -> Option<f64> {
        self.armed_at
    }

    /// Time span covered by the stored history, s.
    pub fn buffered_span(&self) -> f64 {
        self.line.buffered_span()
    }

    /// Advances the controller by `dt` given the current deviation, returning
    /// the power command applied over the step.
    pub fn step(&mut self, f_dev_now: f64, params: &PrimaryControlParams, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let input = match params.delay_mode {
            DelayMode::Transport => self.line.advance(f_dev_now, params.delay, dt),
            DelayMode::Activation => {
                if self.armed_at.is_none() && f_dev_now != 0.0 {
                    self.armed_at = Some(self.clock);
                }
                let tolerance = 1e-9 * params.delay.max(1.0);
                match self.armed_at {
                    Some(t) if self.clock - t >= params.delay - tolerance => f_dev_now,
                    _ => 0.0,
                }
            }
        };
        self.clock += dt;

        let gain = params.gain();
        let raw = if gain > 0.0 { -input * gain } else { 0.0 };
        let slew = params.ramp_rate() * dt;
        let limited = raw.clamp(self.last_output - slew, self.last_output + slew);
        let output = limited.clamp(-params.reserve, params.reserve);

        self.last_output = output;
        output
    }
}

/// Value-style wrapper around [`PrimaryState::step`].
pub fn primary_step(
    mut state: PrimaryState,
    f_dev_now: f64,
    params: &PrimaryControlParams,
    dt: f64,
) -> (PrimaryState, f64) {
    let power = state.step(f_dev_now, params, dt);
    (state, power)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SecondaryState {
    clock: f64,
    armed_at: Option<f64>,
    ace_integral: f64,
    last_output: f64,
}

impl SecondaryState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulated area control error, MW·s.
    pub fn ace_integral(&self) -> f64 {
        self.ace_integral
    }

    pub fn last_output(&self) -> f64 {
        self.last_output
    }

    fn command(&self, ace: f64, integral: f64, params: &SecondaryControlParams) -> f64 {
        -(params.c_p * ace + integral / params.t_n)
    }

    pub fn step(&mut self, inputs: &AceInputs, params: &SecondaryControlParams, dt: f64) -> f64 {
        debug_assert!(dt > 0.0);
        let ace = inputs.ace();
        if self.armed_at.is_none() && ace != 0.0 {
            self.armed_at = Some(self.clock);
        }
        let tolerance = 1e-9 * params.delay.max(1.0);
        let engaged = self.armed_at.is_some_and(|t| self.clock - t >= params.delay - tolerance);
        self.clock += dt;
        if !engaged {
            return self.last_output;
        }
        let candidate = self.ace_integral + ace * dt;
        let command = self.command(ace, candidate, params);

        // Conditional integration: hold the integral when the command is
        // beyond the reserve and the new increment pushes it further out.
        let pushes_out = (command > params.reserve && ace < 0.0) || (command < -params.reserve && ace > 0.0);
        let command = if pushes_out {
            self.command(ace, self.ace_integral, params)
        } else {
            self.ace_integral = candidate;
            command
        };

        let slew = params.ramp_rate() * dt;
        let output = command
            .clamp(-params.reserve, params.reserve)
            .clamp(self.last_output - slew, self.last_output + slew);
        self.last_output = output;
        output
    }
}

/// Area control error inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AceInputs {
    /// Net tie export minus schedule, MW.
    pub tie_deviation: f64,
    /// Frequency deviation, Hz.
    pub f_dev: f64,
    /// MW/Hz.
    pub frequency_bias: f64,
}

impl AceInputs {
    pub fn ace(&self) -> f64 {
        self.tie_deviation + self.frequency_bias * self.f_dev
    }
}

/// Value-style wrapper around [`SecondaryState::step`].
pub fn secondary_step(
    mut state: SecondaryState,
    ace: &AceInputs,
    params: &SecondaryControlParams,
    dt: f64,
) -> (SecondaryState, f64) {
    let power = state.step(ace, params, dt);
    (state, power)
}

/// Augmented frequency damping `k_load-equivalent + k_prim(t)`, MW/Hz.
///
/// `primary_gain_now` is the instantaneous primary response per Hz of
/// deviation, e.g. from [`instantaneous_primary_gain`].
pub fn augmented_damping(k_load: f64, primary_gain_now: f64, s_base: f64) -> f64 {
    load_damping_mw_per_hz(k_load, s_base) + primary_gain_now
}

/// Primary response per Hz of current deviation, MW/Hz. Zero while the
/// deviation is negligible.
pub fn instantaneous_primary_gain(primary_output: f64, f_dev: f64) -> f64 {
    if f_dev.abs() < 1e-9 {
        0.0
    } else {
        -primary_output / f_dev
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nominal() -> PrimaryControlParams {
        PrimaryControlParams {
            reserve: 3000.0,
            droop_bias: None,
            delay: 5.0,
            delay_mode: DelayMode::Transport,
            full_activation_time: 30.0,
        }
    }

    fn agc() -> SecondaryControlParams {
        SecondaryControlParams {
            reserve: 14_000.0,
            c_p: 0.17,
            t_n: 120.0,
            response_time: 120.0,
            delay: 0.0,
            frequency_bias: None,
        }
    }

    #[test]
    fn zero_deviation_gives_zero_output() {
        let mut s = PrimaryState::new();
        for _ in 0..5000 {
            assert_eq!(s.step(0.0, &nominal(), 0.01), 0.0);
        }
    }

    #[test]
    fn step_response_follows_delay_and_ramp() {
        let p = nominal();
        let dt = 0.01;
        let mut s = PrimaryState::new();
        let mut full_at = None;
        for k in 0..4000 {
            let t = k as f64 * dt;
            let out = s.step(-0.2, &p, dt);
            if t < 5.0 - 1e-9 {
                assert_eq!(out, 0.0, "t = {t}");
            } else {
                let ramp = 120.0 * (t - 5.0);
                assert!((out - ramp.min(3000.0)).abs() <= 120.0 * dt + 1e-9, "t = {t}: {out}");
            }
            if full_at.is_none() && out >= 3000.0 {
                full_at = Some(t);
            }
        }
        let full_at = full_at.unwrap();
        assert!((full_at - 30.0).abs() <= dt + 1e-9, "{full_at}");
    }

    #[test]
    fn large_deviation_saturates_at_reserve() {
        let mut s = PrimaryState::new();
        let mut out = 0.0;
        for _ in 0..6000 {
            out = s.step(-1.0, &nominal(), 0.01);
        }
        assert_eq!(out, 3000.0);
        let mut s = PrimaryState::new();
        for _ in 0..6000 {
            out = s.step(1.0, &nominal(), 0.01);
        }
        assert_eq!(out, -3000.0);
    }

    #[test]
    fn delay_interpolates_between_samples() {
        // A linear ramp in Δf is reproduced exactly by linear interpolation.
        let p = PrimaryControlParams {
            reserve: 1e9,
            droop_bias: Some(1.0),
            delay: 0.015,
            delay_mode: DelayMode::Transport,
            full_activation_time: 1e9,
        };
        let mut s = PrimaryState::new();
        let dt = 0.01;
        let mut last = 0.0;
        for k in 0..100 {
            let t = k as f64 * dt;
            last = s.step(-t, &p, dt);
        }
        assert_relative_eq!(last, 0.99 - 0.015, max_relative = 1e-9);
        assert!(s.buffered_span() + dt >= p.delay);
    }

    #[test]
    fn zero_delay_uses_current_sample() {
        let p = PrimaryControlParams {
            reserve: 100.0,
            droop_bias: Some(0.01),
            delay: 0.0,
            delay_mode: DelayMode::Activation,
            full_activation_time: 1e-6,
        };
        let (_, out) = primary_step(PrimaryState::new(), -0.5, &p, 0.01);
        assert_eq!(out, 50.0);
    }

    #[test]
    fn secondary_zero_error() {
        let mut s = SecondaryState::new();
        let inputs = AceInputs {
            tie_deviation: 0.0,
            f_dev: 0.0,
            frequency_bias: 20_000.0,
        };
        for _ in 0..100 {
            assert_eq!(s.step(&inputs, &agc(), 0.01), 0.0);
        }
        assert_eq!(s.ace_integral(), 0.0);
    }

    #[test]
    fn secondary_pi_law() {
        let inputs = AceInputs {
            tie_deviation: 1000.0,
            f_dev: 0.0,
            frequency_bias: 0.0,
        };
        let mut state = SecondaryState::new();
        let mut out = 0.0;
        for _ in 0..12_000 {
            (state, out) = secondary_step(state, &inputs, &agc(), 0.01);
        }
        assert_relative_eq!(state.ace_integral(), 120_000.0, max_relative = 1e-9);
        // −(0.17·1000 + 120000/120)
        assert_relative_eq!(out, -1170.0, max_relative = 1e-9);
    }

    #[test]
    fn secondary_anti_windup() {
        let params = SecondaryControlParams {
            reserve: 500.0,
            ..agc()
        };
        let big = AceInputs {
            tie_deviation: -1_000.0,
            f_dev: 0.0,
            frequency_bias: 0.0,
        };
        let mut s = SecondaryState::new();
        for _ in 0..100_000 {
            let out = s.step(&big, &params, 0.01);
            assert!(out.abs() <= params.reserve);
        }
        // The integral stops once the command leaves the reserve band, so it
        // stays near the level that saturates the output.
        assert!(s.ace_integral() > -120.0 * (500.0 + 1.0));
        // Reversing the error unwinds immediately.
        let reverse = AceInputs {
            tie_deviation: 1_000.0,
            ..big
        };
        let before = s.ace_integral();
        s.step(&reverse, &params, 0.01);
        assert!(s.ace_integral() > before);
    }

    #[test]
    fn secondary_delay_shifts_response() {
        let params = SecondaryControlParams {
            delay: 30.0,
            ..agc()
        };
        let inputs = AceInputs {
            tie_deviation: 0.0,
            f_dev: -0.1,
            frequency_bias: 20_000.0,
        };
        let mut s = SecondaryState::new();
        let outputs: Vec<f64> = (0..4000).map(|_| s.step(&inputs, &params, 0.01)).collect();
        assert!(outputs[..3000].iter().all(|&u| u == 0.0));
        assert!(outputs[3001] > 0.0);
    }

    #[test]
    fn augmented_damping_adds_primary_gain() {
        let load = load_damping_mw_per_hz(1.5, 230_000.0);
        assert_eq!(augmented_damping(1.5, 0.0, 230_000.0), load);
        let gain = nominal().gain();
        assert_relative_eq!(augmented_damping(1.5, gain, 230_000.0), load + 15_000.0);
        assert!(augmented_damping(1.5, 2.0, 1.0) >= augmented_damping(1.5, 1.0, 1.0));
        assert_eq!(instantaneous_primary_gain(0.0, 0.0), 0.0);
        assert_relative_eq!(instantaneous_primary_gain(1500.0, -0.1), 15_000.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn primary_respects_bounds_and_slew(
                signal in proptest::collection::vec(-1.5f64..1.5, 50..400),
                delay in 0.0f64..3.0,
                span in 0.5f64..30.0,
                transport in any::<bool>(),
            ) {
                let delay_mode = if transport { DelayMode::Transport } else { DelayMode::Activation };
                let p = PrimaryControlParams {
                    reserve: 1500.0,
                    droop_bias: None,
                    delay,
                    delay_mode,
                    full_activation_time: delay + span,
                };
                let dt = 0.05;
                let mut s = PrimaryState::new();
                let mut prev = 0.0;
                for (k, &f) in signal.iter().enumerate() {
                    let out = s.step(f, &p, dt);
                    prop_assert!(out.abs() <= p.reserve);
                    prop_assert!((out - prev).abs() <= p.ramp_rate() * dt * (1.0 + 1e-12));
                    if (k as f64) * dt < delay - 1e-9 {
                        prop_assert_eq!(out, 0.0);
                    }
                    prev = out;
                }
            }

            #[test]
            fn secondary_respects_bounds(
                errors in proptest::collection::vec(-5e4f64..5e4, 10..300),
            ) {
                let p = SecondaryControlParams { reserve: 2000.0, ..agc() };
                let mut s = SecondaryState::new();
                let mut prev = 0.0;
                for &e in &errors {
                    let out = s.step(&AceInputs { tie_deviation: e, f_dev: 0.0, frequency_bias: 0.0 }, &p, 0.1);
                    prop_assert!(out.abs() <= p.reserve);
                    prop_assert!((out - prev).abs() <= p.ramp_rate() * 0.1 * (1.0 + 1e-12));
                    prev = out;
                }
            }
        }
    }
}
