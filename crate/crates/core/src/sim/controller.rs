//! Execution-idle-aware frequency control.
//!
//! Once per control period the caller reports whether the GPU showed any
//! activity during the elapsed period. Sustained inactivity beyond the
//! trigger threshold downscales the clocks; the first active period
//! restores them and arms a cooldown that blocks the next downscale until
//! it expires. The step function is pure — all state lives in
//! [`ControllerState`] — so its behavior can be checked exhaustively.

use serde::{Deserialize, Serialize};

use super::ControllerConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerState {
    /// Accumulated consecutive idle seconds.
    pub c: i64,
    /// Epoch second before which downscaling is blocked.
    pub t_cooldown: i64,
    pub downscaled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerAction {
    None,
    Downscale,
    Restore,
}

impl ControllerAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerAction::None => "none",
            ControllerAction::Downscale => "downscale",
            ControllerAction::Restore => "restore",
        }
    }
}

/// One control tick at epoch second `t`. `low_activity` is the same
/// predicate the sample classifier applies, aggregated over the period
/// ending at `t`.
pub fn controller_step(
    state: &ControllerState,
    cfg: &ControllerConfig,
    t: i64,
    low_activity: bool,
) -> (ControllerState, ControllerAction) {
    let mut next = *state;
    let mut action = ControllerAction::None;
    if low_activity {
        next.c += cfg.period;
    } else {
        next.c = 0;
        if next.downscaled {
            next.downscaled = false;
            next.t_cooldown = t + cfg.cooldown;
            action = ControllerAction::Restore;
        }
    }
    if next.c > cfg.trigger_threshold && t >= next.t_cooldown && !next.downscaled {
        next.downscaled = true;
        action = ControllerAction::Downscale;
    }
    (next, action)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ControllerConfig {
        ControllerConfig::default() // X=3, Y=5, period=1
    }

    fn run(
        cfg: &ControllerConfig,
        start: ControllerState,
        t0: i64,
        pattern: &[bool],
    ) -> (ControllerState, Vec<ControllerAction>) {
        let mut state = start;
        let mut actions = Vec::new();
        for (i, &low) in pattern.iter().enumerate() {
            let (next, action) = controller_step(&state, cfg, t0 + i as i64 * cfg.period, low);
            state = next;
            actions.push(action);
        }
        (state, actions)
    }

    #[test]
    fn downscale_fires_once_counter_exceeds_trigger() {
        // Idle ticks t=1..4 from a cold start: c reaches 4 > 3 at t=4.
        let (state, actions) = run(&cfg(), ControllerState::default(), 1, &[true; 4]);
        assert_eq!(
            actions,
            vec![
                ControllerAction::None,
                ControllerAction::None,
                ControllerAction::None,
                ControllerAction::Downscale
            ]
        );
        assert!(state.downscaled);
        // Continued idleness holds the setting without re-firing.
        let (_, more) = run(&cfg(), state, 5, &[true; 3]);
        assert!(more.iter().all(|a| *a == ControllerAction::None));
    }

    #[test]
    fn restore_arms_the_cooldown() {
        let downscaled = ControllerState {
            c: 4,
            t_cooldown: 0,
            downscaled: true,
        };
        // Activity at t=6 restores and blocks downscales until t=11.
        let (state, actions) = run(&cfg(), downscaled, 6, &[false]);
        assert_eq!(actions, vec![ControllerAction::Restore]);
        assert_eq!(state.t_cooldown, 11);
        assert!(!state.downscaled);
        // Idle t=7..10 accumulates c=4 > X, but t < t_cooldown holds it off.
        let (state, actions) = run(&cfg(), state, 7, &[true; 4]);
        assert!(actions.iter().all(|a| *a == ControllerAction::None));
        // The tick at t=11 clears the guard.
        let (_, actions) = run(&cfg(), state, 11, &[true]);
        assert_eq!(actions, vec![ControllerAction::Downscale]);
    }

    #[test]
    fn activity_resets_the_counter_without_restore_when_at_f_max() {
        let (state, actions) = run(
            &cfg(),
            ControllerState::default(),
            1,
            &[true, true, false, true, true, true],
        );
        // Two idle, one active (reset), three idle: c=3 is not > 3 yet.
        assert!(actions.iter().all(|a| *a == ControllerAction::None));
        assert_eq!(state.c, 3);
        assert!(!state.downscaled);
    }
}
